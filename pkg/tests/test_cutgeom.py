import numpy as np
import pytest
from shapely.geometry import Polygon, box

from fpicut.cutgeom import (
    CUT,
    FLUID,
    VOID,
    CutGeometryError,
    classify_and_cut,
    extract_interface,
    interface_h_gamma,
    make_cut_line,
    points_in_polygon,
    InterfacePolyline,
)
from fpicut.mesh import build_structured_mesh


def square_polyline(center, half, angle=0.0):
    """Closed counterclockwise square interface with outward normals."""
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s], [s, c]])
    corners = np.array([[-half, -half], [half, -half], [half, half], [-half, half]])
    corners = corners @ rot.T + np.asarray(center)
    p0 = corners
    p1 = np.roll(corners, -1, axis=0)
    t = p1 - p0
    length = np.linalg.norm(t, axis=1, keepdims=True)
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / length
    return InterfacePolyline(
        vertices=np.stack([p0, p1], axis=1),
        normals=normals,
        parent_edges=np.arange(4),
        nitsche=np.ones(4, dtype=bool),
        closed=True,
    )


def polygon_moment(poly, a, b):
    """Exact monomial moment of a shapely polygon via Green's theorem."""
    from shapely.geometry.polygon import orient

    coords = np.asarray(orient(poly, 1.0).exterior.coords)[:-1]
    total = 0.0
    n = len(coords)
    for i in range(n):
        x0, y0 = coords[i]
        x1, y1 = coords[(i + 1) % n]
        # integrate x^a y^b over the triangle (0, p0, p1), signed
        area2 = x0 * y1 - x1 * y0
        gauss = [
            (0.445948490915965, 0.445948490915965, 0.223381589678011),
            (0.108103018168070, 0.445948490915965, 0.223381589678011),
            (0.445948490915965, 0.108103018168070, 0.223381589678011),
            (0.091576213509771, 0.091576213509771, 0.109951743655322),
            (0.816847572980459, 0.091576213509771, 0.109951743655322),
            (0.091576213509771, 0.816847572980459, 0.109951743655322),
        ]
        for l1, l2, w in gauss:
            x = l1 * x0 + l2 * x1
            y = l1 * y0 + l2 * y1
            total += 0.5 * area2 * w * x**a * y**b
    return total


def quad_moment(topo, a, b, element=None):
    sel = slice(None) if element is None else topo.q_elem == element
    x = topo.q_x[sel]
    return float(np.sum(topo.q_w[sel] * x[:, 0] ** a * x[:, 1] ** b))


def test_extract_interface_ex1_square_perimeter():
    m = build_structured_mesh((-0.25, -0.25), (0.5, 0.5), 4, 4, rotation=np.pi / 6)
    poly = extract_interface(m, np.zeros((m.n_nodes, 2)))
    assert poly.total_length() == pytest.approx(2.0)
    assert poly.closed


def test_extract_interface_translation_shifts_only():
    m = build_structured_mesh((0, 0), (1, 1), 2, 2)
    u = np.tile([0.3, -0.1], (m.n_nodes, 1))
    p0 = extract_interface(m, np.zeros_like(u))
    p1 = extract_interface(m, u)
    assert np.allclose(p1.vertices, p0.vertices + np.array([0.3, -0.1]))
    assert np.allclose(p1.normals, p0.normals)


def test_extract_interface_axis_aligned_normals_point_outward():
    m = build_structured_mesh((0, 0), (1, 1), 2, 2)
    poly = extract_interface(m, np.zeros((m.n_nodes, 2)))
    mids = poly.vertices.mean(axis=1)
    for mid, n in zip(mids, poly.normals):
        outward = mid - np.array([0.5, 0.5])
        assert n @ outward > 0
        assert np.any(np.isclose(np.abs(n), [1, 0])) or np.any(
            np.isclose(np.abs(n), [0, 1])
        )


def test_all_fluid_when_interface_outside_mesh():
    m = build_structured_mesh((0, 0), (1, 1), 4, 4)
    poly = square_polyline((5.0, 5.0), 0.3)
    topo = classify_and_cut(m, [poly])
    assert np.all(topo.classification == FLUID)
    assert len(topo.ghost_faces.face_ids) == 0
    assert topo.physical_area_total() == pytest.approx(1.0, rel=1e-12)
    assert topo.active_nodes.all()


def test_single_element_halved_by_vertical_interface():
    m = build_structured_mesh((0, 0), (1, 1), 1, 1)
    # embedded square covering the right half: interface at x = 0.5
    poly = square_polyline((1.1, 0.5), 0.6)
    topo = classify_and_cut(m, [poly])
    assert topo.classification[0] == CUT
    assert topo.phys_area[0] == pytest.approx(0.5, rel=1e-12)
    fpi = topo.i_kind == 0
    assert topo.i_w[fpi].sum() == pytest.approx(1.0, rel=1e-12)
    assert interface_h_gamma(topo, 0) == pytest.approx(1.0)
    # normals on the interface point out of the fluid (toward +x)
    assert np.allclose(topo.i_n[fpi], [1.0, 0.0])


def test_corner_cut_h_gamma_scaling():
    m = build_structured_mesh((0, 0), (1, 1), 1, 1)
    # clip a corner via a diagonal: embedded half-plane approximated by a
    # large rotated square whose edge passes near the corner
    half = 5.0
    d = 0.1
    poly = square_polyline((1 + half / np.sqrt(2) - d, 1 + half / np.sqrt(2) - d), half, angle=np.pi / 4)
    topo = classify_and_cut(m, [poly])
    chord = topo.i_w[topo.i_kind == 0].sum()
    assert interface_h_gamma(topo, 0) == pytest.approx(1.0 / chord, rel=1e-9)


def test_h_gamma_scales_linearly_with_element_size():
    for s in (1.0, 3.0):
        m = build_structured_mesh((0, 0), (s, s), 1, 1)
        poly = square_polyline((1.1 * s, s / 2), 0.6 * s)
        topo = classify_and_cut(m, [poly])
        assert interface_h_gamma(topo, 0) == pytest.approx(s, rel=1e-12)


def ex1_geometry(h):
    n = round(1.0 / h)
    bg = build_structured_mesh((-0.5, -0.5), (1, 1), n, n, rotation=np.pi / 4)
    poro = build_structured_mesh(
        (-0.25, -0.25), (0.5, 0.5), max(round(0.5 / h), 1), max(round(0.5 / h), 1),
        rotation=np.pi / 6,
    )
    fpi = extract_interface(poro, np.zeros((poro.n_nodes, 2)))
    neumann = make_cut_line((-0.45, -2.0), (-0.45, 2.0), (1.0, 0.0))
    return bg, poro, fpi, neumann


def shapely_ex1_fluid_area():
    c, s = np.cos(np.pi / 4), np.sin(np.pi / 4)
    rot45 = np.array([[c, -s], [s, c]])
    fluid_sq = Polygon(
        (np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]]) @ rot45.T)
    )
    c, s = np.cos(np.pi / 6), np.sin(np.pi / 6)
    rot30 = np.array([[c, -s], [s, c]])
    poro_sq = Polygon(
        (np.array([[-0.25, -0.25], [0.25, -0.25], [0.25, 0.25], [-0.25, 0.25]]) @ rot30.T)
    )
    keep = box(-0.45, -10, 10, 10)
    return fluid_sq.intersection(keep).difference(poro_sq)


@pytest.mark.parametrize("h", [0.25, 0.125])
def test_ex1_area_conservation_vs_polygon_boolean(h):
    bg, _, fpi, neumann = ex1_geometry(h)
    topo = classify_and_cut(bg, [fpi, neumann])
    expect = shapely_ex1_fluid_area().area
    assert topo.physical_area_total() == pytest.approx(expect, rel=1e-10)


def test_ex1_component_area_budget():
    bg, _, fpi, neumann = ex1_geometry(0.25)
    topo = classify_and_cut(bg, [fpi, neumann])
    d = np.sqrt(2) / 2 - 0.45  # depth of the clipped corner triangle
    expect = 1.0 - 0.25 - d * d
    assert topo.physical_area_total() == pytest.approx(expect, rel=1e-10)


@pytest.mark.parametrize("h", [0.25, 0.125])
def test_clipped_cell_moments_match_green_oracle(h):
    bg, _, fpi, neumann = ex1_geometry(h)
    topo = classify_and_cut(bg, [fpi, neumann])
    fluid = shapely_ex1_fluid_area()
    for e in topo.cut_elements[:12]:
        cell = Polygon(bg.element_coords(int(e)))
        phys = cell.intersection(fluid)
        for a in range(4):
            for b in range(4 - a):
                got = quad_moment(topo, a, b, element=int(e))
                ref = sum(
                    polygon_moment(p, a, b)
                    for p in getattr(phys, "geoms", [phys])
                    if not p.is_empty
                )
                assert got == pytest.approx(ref, rel=1e-12, abs=1e-15)


def test_interface_weights_sum_to_length_inside_mesh():
    bg, _, fpi, neumann = ex1_geometry(0.125)
    topo = classify_and_cut(bg, [fpi, neumann])
    got = topo.i_w[topo.i_kind == 0].sum()
    assert got == pytest.approx(2.0, rel=1e-12)
    # the cut line spans the clipped corner: chord length 2*d
    d = np.sqrt(2) / 2 - 0.45
    got_line = topo.i_w[topo.i_kind == 1].sum()
    assert got_line == pytest.approx(2 * d, rel=1e-10)


def test_ghost_faces_touch_cut_elements():
    bg, _, fpi, neumann = ex1_geometry(0.125)
    topo = classify_and_cut(bg, [fpi, neumann])
    faces = bg.interior_faces[topo.ghost_faces.face_ids]
    cls = topo.classification
    assert len(faces) > 0
    assert np.all((cls[faces[:, 0]] != VOID) & (cls[faces[:, 1]] != VOID))
    assert np.all((cls[faces[:, 0]] == CUT) | (cls[faces[:, 1]] == CUT))
    # no ghost face lies strictly between two uncut fluid elements
    both_fluid = (cls[faces[:, 0]] == FLUID) & (cls[faces[:, 1]] == FLUID)
    assert not both_fluid.any()


def test_active_nodes_monotone_when_fluid_grows():
    bg = build_structured_mesh((0, 0), (1, 1), 8, 8)
    small = square_polyline((0.7, 0.5), 0.18, angle=0.2)
    large = square_polyline((0.7, 0.5), 0.3, angle=0.2)
    t_small = classify_and_cut(bg, [small])
    t_large = classify_and_cut(bg, [large])
    # shrinking the embedded region enlarges the fluid side
    assert np.all(t_small.active_nodes | ~t_large.active_nodes)


def test_open_fpi_polyline_rejected():
    poly = square_polyline((0.5, 0.5), 0.2)
    poly.vertices[2, 1] += 0.05
    bg = build_structured_mesh((0, 0), (1, 1), 4, 4)
    with pytest.raises(CutGeometryError, match="open interface"):
        classify_and_cut(bg, [poly])


def test_self_intersecting_boundary_rejected():
    m = build_structured_mesh((0, 0), (1, 1), 2, 2)
    u = np.zeros((m.n_nodes, 2))
    # fold the top-right corner across the opposite edge
    corner = np.argmin(np.linalg.norm(m.nodes - [1, 1], axis=1))
    u[corner] = [-1.6, -0.5]
    with pytest.raises(CutGeometryError, match="self-intersection"):
        extract_interface(m, u)


def test_points_in_polygon_basic():
    poly = square_polyline((0.5, 0.5), 0.5)
    inside = points_in_polygon(np.array([[0.5, 0.5], [1.5, 0.5]]), poly.vertices)
    assert inside.tolist() == [True, False]


def test_vertex_on_node_perturbation_fallback():
    bg = build_structured_mesh((0, 0), (1, 1), 4, 4)
    # square corner exactly on a background node
    poly = square_polyline((0.75, 0.5), 0.25)
    topo = classify_and_cut(bg, [poly])
    assert topo.physical_area_total() == pytest.approx(1.0 - 0.25, rel=1e-8)
