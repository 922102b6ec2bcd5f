"""Cut-cell geometry: classify background elements against embedded interfaces,
build physical-part and interface quadratures, ghost-face sets, and the
active-node map.

The physical part of a cut element is integrated by a signed fan decomposition:
the element window (element clipped by any straight cut boundary) is fanned
into triangles carrying a degree-4 rule, and the overlap with the embedded
polygon is fanned with negative weights.  For straight interface segments this
integrates polynomials of total degree <= 3 exactly, also when the physical
part is non-convex or multiply connected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (
    FaceSet,
    GAUSS3_1D_POINTS,
    GAUSS3_1D_WEIGHTS,
    TRI6_BARY,
    TRI6_WEIGHTS,
    inverse_map_batch,
)

FLUID, CUT, VOID = 0, 1, 2

_AREA_TOL = 1e-12


class CutGeometryError(Exception):
    """Raised for invalid interface geometry or classification failures."""


@dataclass
class InterfacePolyline:
    """Straight segments of an embedded boundary in the current configuration.

    ``normals`` point into the physical fluid side (the outward poroelastic
    normal on interface segments).  ``parent_edges`` holds the originating
    boundary-edge index of the source mesh, or -1 for fixed cut lines.
    ``nitsche`` flags segments that take part in interface coupling terms.
    """

    vertices: np.ndarray  # (S, 2, 2)
    normals: np.ndarray  # (S, 2)
    parent_edges: np.ndarray  # (S,)
    nitsche: np.ndarray  # (S,) bool
    tag: str = "fpi"  # "fpi" | "neumann"
    closed: bool = True

    @property
    def n_segments(self):
        return len(self.vertices)

    def total_length(self):
        return float(
            np.sum(np.linalg.norm(self.vertices[:, 1] - self.vertices[:, 0], axis=1))
        )


def extract_interface(poro_mesh, displacement, tag="fpi", passive_tags=()):
    """Deformed outer boundary of a fitted mesh as an interface polyline.

    ``displacement`` is nodal, (n_nodes, 2).  Boundary edges whose tag is in
    ``passive_tags`` still cut the background mesh but carry no coupling
    terms.  Raises CutGeometryError for a self-intersecting deformed boundary.
    """
    displacement = np.asarray(displacement, dtype=float)
    x = poro_mesh.nodes + displacement
    edges = poro_mesh.boundary_edges
    p0 = x[edges[:, 1]]
    p1 = x[edges[:, 2]]
    t = p1 - p0
    length = np.linalg.norm(t, axis=1)
    if np.any(length <= 0):
        raise CutGeometryError("invalid interface geometry: zero-length edge")
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    nitsche = np.array(
        [tag_ not in passive_tags for tag_ in poro_mesh.boundary_edge_tags], dtype=bool
    )
    poly = InterfacePolyline(
        vertices=np.stack([p0, p1], axis=1),
        normals=normals,
        parent_edges=np.arange(len(edges)),
        nitsche=nitsche,
        tag=tag,
        closed=True,
    )
    if _self_intersects(poly.vertices):
        raise CutGeometryError("invalid interface geometry: self-intersection")
    return poly


def make_cut_line(p0, p1, fluid_side_normal, tag="neumann"):
    """A straight spanning cut line; the physical side is where the normal points."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = np.asarray(fluid_side_normal, dtype=float)
    n = n / np.linalg.norm(n)
    t = p1 - p0
    if abs(t @ n) > 1e-12 * np.linalg.norm(t):
        raise CutGeometryError("cut line must be orthogonal to its side normal")
    return InterfacePolyline(
        vertices=np.array([[p0, p1]]),
        normals=n[None, :],
        parent_edges=np.array([-1]),
        nitsche=np.array([False]),
        tag=tag,
        closed=False,
    )


def _self_intersects(segments):
    """O(S^2) proper-crossing test, ignoring shared endpoints."""
    s = segments
    n = len(s)
    if n < 4:
        return False
    p = s[:, 0]
    r = s[:, 1] - s[:, 0]
    scale = np.linalg.norm(r, axis=1).max()
    for i in range(n):
        q = s[i, 0]
        d = s[i, 1] - s[i, 0]
        denom = r[:, 0] * d[1] - r[:, 1] * d[0]
        ok = np.abs(denom) > 1e-14 * scale * scale
        diff = q - p
        safe = np.where(ok, denom, 1.0)
        ti = (diff[:, 0] * d[1] - diff[:, 1] * d[0]) / safe
        ui = -(diff[:, 0] * r[:, 1] - diff[:, 1] * r[:, 0]) / safe
        eps = 1e-9
        crossing = ok & (ti > eps) & (ti < 1 - eps) & (ui > eps) & (ui < 1 - eps)
        crossing[i] = False
        if crossing.any():
            return True
    return False


def points_in_polygon(points, segments):
    """Crossing-number inside test against a closed segment soup, vectorized."""
    points = np.atleast_2d(points)
    if len(points) == 0:
        return np.empty(0, dtype=bool)
    x, y = points[:, 0], points[:, 1]
    a, b = segments[:, 0], segments[:, 1]
    ay, by = a[:, 1][None, :], b[:, 1][None, :]
    ax, bx = a[:, 0][None, :], b[:, 0][None, :]
    yy = y[:, None]
    straddle = (ay > yy) != (by > yy)
    with np.errstate(divide="ignore", invalid="ignore"):
        xcross = ax + (yy - ay) * (bx - ax) / (by - ay)
    hits = straddle & (x[:, None] < xcross)
    return (hits.sum(axis=1) % 2).astype(bool)


@dataclass
class CutTopology:
    """Per-configuration cut data for one background mesh.

    Flattened quadrature layout: physical-part points of cut elements live in
    the ``q_*`` arrays (uncut elements use the standard volume rule and are
    listed in ``uncut_elements``); interface points live in the ``i_*``
    arrays with ``i_n`` the outward fluid normal.
    """

    mesh: object
    classification: np.ndarray
    uncut_elements: np.ndarray
    cut_elements: np.ndarray
    q_elem: np.ndarray
    q_xi: np.ndarray
    q_x: np.ndarray
    q_w: np.ndarray
    i_x: np.ndarray
    i_w: np.ndarray
    i_n: np.ndarray
    i_elem: np.ndarray
    i_xi: np.ndarray
    i_parent_edge: np.ndarray
    i_edge_s: np.ndarray
    i_kind: np.ndarray
    i_active: np.ndarray
    h_gamma: np.ndarray
    phys_area: np.ndarray
    ghost_faces: FaceSet = None
    fluid_faces: FaceSet = None
    active_nodes: np.ndarray = None

    def physical_area_total(self):
        return float(self.phys_area.sum())

    def dump_debug_csv(self, path):
        """Clipped-quadrature and interface points as CSV for inspection."""
        with open(path, "w") as fh:
            fh.write("element_id,x,y,w,nx,ny\n")
            for e, x, w in zip(self.q_elem, self.q_x, self.q_w):
                fh.write(f"{e},{x[0]:.9e},{x[1]:.9e},{w:.9e},0,0\n")
            for e, x, w, n in zip(self.i_elem, self.i_x, self.i_w, self.i_n):
                fh.write(f"{e},{x[0]:.9e},{x[1]:.9e},{w:.9e},{n[0]:.9e},{n[1]:.9e}\n")


def interface_h_gamma(topology, element):
    """Cut length scale: element area over interface length inside the element."""
    h = topology.h_gamma[element]
    if not np.isfinite(h):
        raise CutGeometryError(f"element {element} has no interface measure")
    return float(h)


# -- clipping primitives -------------------------------------------------------


def _convex_planes(poly):
    """Inward half-plane normals/offsets of a counterclockwise convex polygon."""
    p0 = poly
    p1 = np.roll(poly, -1, axis=0)
    t = p1 - p0
    n = np.column_stack([-t[:, 1], t[:, 0]])  # inward for CCW
    norm = np.linalg.norm(n, axis=1)
    n = n / norm[:, None]
    off = np.einsum("ij,ij->i", n, p0)
    return n, off


def _clip_segments_to_convex(p0, p1, planes_n, planes_d, tol):
    """Liang-Barsky parameter intervals of segments inside a convex region."""
    d = p1 - p0
    t0 = np.zeros(len(p0))
    t1 = np.ones(len(p0))
    for n, off in zip(planes_n, planes_d):
        f0 = p0 @ n - off  # signed start distance, >= 0 inside
        fd = d @ n
        parallel = np.abs(fd) <= 1e-300
        with np.errstate(divide="ignore", invalid="ignore"):
            tc = np.where(parallel, 0.0, -f0 / np.where(parallel, 1.0, fd))
        t0 = np.where(fd > 0, np.maximum(t0, tc), t0)
        t1 = np.where(fd < 0, np.minimum(t1, tc), t1)
        t1 = np.where(parallel & (f0 < -tol), -1.0, t1)
    return t0, t1


def _clip_convex_by_halfplane(poly, n, off, tol):
    """One Sutherland-Hodgman pass of a convex CCW polygon against a half-plane."""
    out = []
    m = len(poly)
    dist = poly @ n - off
    for i in range(m):
        j = (i + 1) % m
        di, dj = dist[i], dist[j]
        if di >= -tol:
            out.append(poly[i])
        if (di > tol and dj < -tol) or (di < -tol and dj > tol):
            t = di / (di - dj)
            out.append(poly[i] + t * (poly[j] - poly[i]))
    if len(out) < 3:
        return np.empty((0, 2))
    return np.asarray(out)


def _fan_quadrature(origin, piece_p0, piece_p1):
    """Signed triangle-fan quadrature over oriented boundary pieces.

    Exact for polynomials of total degree <= 4 over the winding-number
    weighted region enclosed by the pieces.
    """
    if len(piece_p0) == 0:
        return np.empty((0, 2)), np.empty(0)
    a = piece_p0 - origin
    b = piece_p1 - origin
    signed = 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
    pts = (
        TRI6_BARY[None, :, 0, None] * origin[None, None, :]
        + TRI6_BARY[None, :, 1, None] * piece_p0[:, None, :]
        + TRI6_BARY[None, :, 2, None] * piece_p1[:, None, :]
    )
    w = signed[:, None] * TRI6_WEIGHTS[None, :]
    return pts.reshape(-1, 2), w.reshape(-1)


def _polygon_area(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _successor_map(vertices):
    """For each segment, the segment whose start coincides with its end."""
    starts = vertices[:, 0]
    ends = vertices[:, 1]
    d2 = np.sum((ends[:, None, :] - starts[None, :, :]) ** 2, axis=2)
    nxt = np.argmin(d2, axis=1)
    gap = np.sqrt(d2[np.arange(len(nxt)), nxt])
    return nxt, gap


def _perturb_vertices(polylines, mesh):
    """Nudge polyline vertices sitting on background nodes or grid edges.

    A vertex within 1e-12*h of a lattice line moves by 1e-10*h along the
    segment it starts; the matching end copy on the preceding segment moves
    with it, so closed polylines stay closed.
    """
    lat = mesh.lattice
    if lat is None:
        return polylines
    h = min(lat.hx, lat.hy)
    out = []
    for poly in polylines:
        v = poly.vertices.copy()
        pts = v.reshape(-1, 2)
        lc = lat.to_lattice(pts)
        hit = (np.abs(lc - np.round(lc)) < 1e-12).any(axis=1).reshape(-1, 2)
        if not hit.any():
            out.append(poly)
            continue
        seg_dir = v[:, 1] - v[:, 0]
        seg_dir /= np.linalg.norm(seg_dir, axis=1, keepdims=True)
        if poly.closed:
            nxt, _ = _successor_map(v)
            prev = np.empty_like(nxt)
            prev[nxt] = np.arange(len(nxt))
            move = hit[:, 0] | hit[prev, 1]
            shift = 1e-10 * h * seg_dir
            v[move, 0] += shift[move]
            v[prev[move], 1] += shift[move]
        else:
            v[hit[:, 0], 0] += 1e-10 * h * seg_dir[hit[:, 0]]
            v[hit[:, 1], 1] -= 1e-10 * h * seg_dir[hit[:, 1]]
        out.append(
            InterfacePolyline(
                v, poly.normals, poly.parent_edges, poly.nitsche, poly.tag, poly.closed
            )
        )
    return out


def _candidate_elements(mesh, polylines):
    """Map element id -> {polyline index: [segment ids]} for nearby segments."""
    lat = mesh.lattice
    pairs = {}
    if lat is not None:
        for pi, poly in enumerate(polylines):
            lc = lat.to_lattice(poly.vertices.reshape(-1, 2)).reshape(-1, 2, 2)
            lo = np.floor(lc.min(axis=1) - 1e-9).astype(int)
            hi = np.floor(lc.max(axis=1) + 1e-9).astype(int)
            lo = np.clip(lo, 0, [lat.nx - 1, lat.ny - 1])
            hi = np.clip(hi, 0, [lat.nx - 1, lat.ny - 1])
            for s in range(len(poly.vertices)):
                for ix in range(lo[s, 0], hi[s, 0] + 1):
                    for iy in range(lo[s, 1], hi[s, 1] + 1):
                        e = lat.element_of_cell(ix, iy)
                        pairs.setdefault(e, {}).setdefault(pi, []).append(s)
    else:
        coords = mesh.element_coords()
        emin = coords.min(axis=1)
        emax = coords.max(axis=1)
        for pi, poly in enumerate(polylines):
            smin = poly.vertices.min(axis=1)
            smax = poly.vertices.max(axis=1)
            for s in range(len(poly.vertices)):
                hit = np.nonzero(
                    (emin[:, 0] <= smax[s, 0])
                    & (emax[:, 0] >= smin[s, 0])
                    & (emin[:, 1] <= smax[s, 1])
                    & (emax[:, 1] >= smin[s, 1])
                )[0]
                for e in hit:
                    pairs.setdefault(int(e), {}).setdefault(pi, []).append(s)
    return pairs


def _check_closed(poly):
    v = poly.vertices
    _, gap = _successor_map(v)
    scale = np.linalg.norm(v[:, 1] - v[:, 0], axis=1).max()
    if np.any(gap > 1e-9 * max(scale, 1.0)):
        raise CutGeometryError("open interface polyline")


class _InterfaceRows:
    """Accumulator for the flattened interface-quadrature arrays."""

    def __init__(self):
        self.x, self.w, self.n, self.elem = [], [], [], []
        self.pedge, self.s, self.kind, self.active = [], [], [], []

    def add(self, pts, w, normal, elem, pedge, s, kind, active):
        k = len(pts)
        if k == 0:
            return
        self.x.append(pts)
        self.w.append(w)
        self.n.append(np.tile(normal, (k, 1)))
        self.elem.append(np.full(k, elem, dtype=np.int64))
        self.pedge.append(np.full(k, pedge, dtype=np.int64))
        self.s.append(np.asarray(s, dtype=float))
        self.kind.append(np.full(k, kind, dtype=np.int8))
        self.active.append(np.full(k, active))


def classify_and_cut(mesh, polylines):
    """Classify background elements against the polylines and build quadratures.

    The physical fluid side of each polyline is the side its normals point
    into: closed polylines bound excluded (embedded) regions, an open straight
    polyline cuts away everything behind it.
    """
    polylines = list(polylines)
    for poly in polylines:
        if poly.closed:
            _check_closed(poly)
        else:
            d = poly.vertices[:, 1] - poly.vertices[:, 0]
            u = d / np.linalg.norm(d, axis=1, keepdims=True)
            if np.abs(u[:, 0] * u[0, 1] - u[:, 1] * u[0, 0]).max() > 1e-10:
                raise CutGeometryError("cut boundary polyline must be straight")
    polylines = _perturb_vertices(polylines, mesh)
    closed_idx = [i for i, p in enumerate(polylines) if p.closed]
    line_idx = [i for i, p in enumerate(polylines) if not p.closed]
    if len(line_idx) > 1:
        raise CutGeometryError("at most one straight cut boundary is supported")
    cut_line = polylines[line_idx[0]] if line_idx else None

    coords = mesh.element_coords()
    elem_area = 0.5 * np.abs(
        (coords[:, 2, 0] - coords[:, 0, 0]) * (coords[:, 3, 1] - coords[:, 1, 1])
        - (coords[:, 2, 1] - coords[:, 0, 1]) * (coords[:, 3, 0] - coords[:, 1, 0])
    )

    node_fluid = np.ones(mesh.n_nodes, dtype=bool)
    for i in closed_idx:
        node_fluid &= ~points_in_polygon(mesh.nodes, polylines[i].vertices)
    if cut_line is not None:
        n = cut_line.normals[0]
        node_fluid &= (mesh.nodes - cut_line.vertices[0, 0]) @ n >= 0.0

    candidates = _candidate_elements(mesh, polylines)
    elem_fluid = node_fluid[mesh.elements]
    classification = np.where(
        elem_fluid.all(axis=1), FLUID, np.where(~elem_fluid.any(axis=1), VOID, CUT)
    ).astype(np.int8)
    for e in np.nonzero(classification == CUT)[0]:
        candidates.setdefault(int(e), {})

    phys_area = np.where(classification == FLUID, elem_area, 0.0)
    h_gamma = np.full(mesh.n_elements, np.nan)
    q_elem, q_x, q_w = [], [], []
    irows = _InterfaceRows()
    scale = float(np.sqrt(max(elem_area.mean(), 1e-300)))
    tol = 1e-12 * scale

    for e in sorted(candidates):
        quad = coords[e]
        full = elem_area[e]
        window = quad
        if cut_line is not None:
            n = cut_line.normals[0]
            off = float(cut_line.vertices[0, 0] @ n)
            window = _clip_convex_by_halfplane(quad, n, off, tol)
        if len(window) == 0:
            classification[e] = VOID
            phys_area[e] = 0.0
            continue
        wn, wd = _convex_planes(window)
        area_window = _polygon_area(window)
        origin = window.mean(axis=0)

        # embedded-boundary pieces inside the window
        pieces = []  # (p0, p1, poly idx, seg id, t0, t1)
        for pi, segids in candidates[e].items():
            poly = polylines[pi]
            if not poly.closed:
                continue
            segids = np.array(sorted(set(segids)), dtype=int)
            p0 = poly.vertices[segids, 0]
            p1 = poly.vertices[segids, 1]
            t0, t1 = _clip_segments_to_convex(p0, p1, wn, wd, tol)
            for k in np.nonzero(t1 - t0 > 1e-12)[0]:
                a = p0[k] + t0[k] * (p1[k] - p0[k])
                b = p0[k] + t1[k] * (p1[k] - p0[k])
                pieces.append((a, b, pi, int(segids[k]), t0[k], t1[k]))

        # window-boundary portions inside an embedded polygon
        overlap_p0 = [p[0] for p in pieces]
        overlap_p1 = [p[1] for p in pieces]
        wv0 = window
        wv1 = np.roll(window, -1, axis=0)
        for pi in closed_idx:
            segs = polylines[pi].vertices
            for k in range(len(window)):
                a, b = wv0[k], wv1[k]
                d = b - a
                params = [0.0, 1.0]
                for (qa, qb, qpi, _, _, _) in pieces:
                    if qpi != pi:
                        continue
                    qd = qb - qa
                    denom = d[0] * qd[1] - d[1] * qd[0]
                    if abs(denom) < 1e-14 * np.linalg.norm(d) * np.linalg.norm(qd):
                        continue
                    diff = qa - a
                    t = (diff[0] * qd[1] - diff[1] * qd[0]) / denom
                    u = (diff[0] * d[1] - diff[1] * d[0]) / denom
                    if -1e-12 <= t <= 1 + 1e-12 and -1e-9 <= u <= 1 + 1e-9:
                        params.append(min(max(t, 0.0), 1.0))
                params = sorted(params)
                spans = [
                    (params[i], params[i + 1])
                    for i in range(len(params) - 1)
                    if params[i + 1] - params[i] > 1e-12
                ]
                if not spans:
                    continue
                mids = np.array([(lo + hi) / 2 for lo, hi in spans])
                midpts = a[None, :] + mids[:, None] * d[None, :]
                inside = points_in_polygon(midpts, segs)
                for (lo, hi), isin in zip(spans, inside):
                    if isin:
                        overlap_p0.append(a + lo * d)
                        overlap_p1.append(a + hi * d)

        if overlap_p0:
            op0 = np.asarray(overlap_p0)
            op1 = np.asarray(overlap_p1)
            oa = op0 - origin
            ob = op1 - origin
            area_overlap = float(
                np.sum(0.5 * (oa[:, 0] * ob[:, 1] - oa[:, 1] * ob[:, 0]))
            )
        else:
            op0 = op1 = np.empty((0, 2))
            area_overlap = 0.0

        area_phys = area_window - area_overlap
        has_interface = len(pieces) > 0
        is_windowed = area_window < full * (1.0 - 1e-12)
        if area_phys <= _AREA_TOL * full:
            classification[e] = VOID
            phys_area[e] = 0.0
            continue
        if not has_interface and not is_windowed and abs(area_overlap) <= _AREA_TOL * full:
            classification[e] = FLUID
            phys_area[e] = full
            continue

        classification[e] = CUT
        phys_area[e] = area_phys
        wp, ww = _fan_quadrature(origin, wv0, wv1)
        if len(op0):
            opts, ow = _fan_quadrature(origin, op0, op1)
            wp = np.vstack([wp, opts])
            ww = np.concatenate([ww, -ow])
        q_elem.append(np.full(len(wp), e, dtype=np.int64))
        q_x.append(wp)
        q_w.append(ww)

        gp = 0.5 * (GAUSS3_1D_POINTS + 1.0)
        fpi_len_active = 0.0
        for a, b, pi, sid, ta, tb in pieces:
            poly = polylines[pi]
            length = float(np.linalg.norm(b - a))
            if length <= 0:
                continue
            active = bool(poly.nitsche[sid])
            if active:
                fpi_len_active += length
            pts = a[None, :] + gp[:, None] * (b - a)[None, :]
            w = 0.5 * GAUSS3_1D_WEIGHTS * length
            tpar = ta + gp * (tb - ta)
            irows.add(
                pts, w, -poly.normals[sid], e, poly.parent_edges[sid],
                2.0 * tpar - 1.0, 0, active,
            )
        if fpi_len_active > 0:
            h_gamma[e] = full / fpi_len_active

        if cut_line is not None:
            qn, qd = _convex_planes(quad)
            lp0 = cut_line.vertices[:, 0]
            lp1 = cut_line.vertices[:, 1]
            t0, t1 = _clip_segments_to_convex(lp0, lp1, qn, qd, tol)
            for k in np.nonzero(t1 - t0 > 1e-12)[0]:
                a = lp0[k] + t0[k] * (lp1[k] - lp0[k])
                b = lp0[k] + t1[k] * (lp1[k] - lp0[k])
                pts = a[None, :] + gp[:, None] * (b - a)[None, :]
                keep = np.ones(len(pts), dtype=bool)
                for pi in closed_idx:
                    keep &= ~points_in_polygon(pts, polylines[pi].vertices)
                if not keep.any():
                    continue
                length = float(np.linalg.norm(b - a))
                w = 0.5 * GAUSS3_1D_WEIGHTS * length
                irows.add(
                    pts[keep], w[keep], -cut_line.normals[0], e, -1,
                    np.zeros(int(keep.sum())), 1, False,
                )

    return _finalize(mesh, classification, phys_area, h_gamma, q_elem, q_x, q_w, irows)


def _finalize(mesh, classification, phys_area, h_gamma, q_elem, q_x, q_w, irows):
    if q_elem:
        q_elem = np.concatenate(q_elem)
        q_x = np.vstack(q_x)
        q_w = np.concatenate(q_w)
    else:
        q_elem = np.empty(0, dtype=np.int64)
        q_x = np.empty((0, 2))
        q_w = np.empty(0)
    if irows.x:
        i_x = np.vstack(irows.x)
        i_w = np.concatenate(irows.w)
        i_n = np.vstack(irows.n)
        i_elem = np.concatenate(irows.elem)
        i_pedge = np.concatenate(irows.pedge)
        i_s = np.concatenate(irows.s)
        i_kind = np.concatenate(irows.kind)
        i_active = np.concatenate(irows.active)
    else:
        i_x = np.empty((0, 2))
        i_w = np.empty(0)
        i_n = np.empty((0, 2))
        i_elem = np.empty(0, dtype=np.int64)
        i_pedge = np.empty(0, dtype=np.int64)
        i_s = np.empty(0)
        i_kind = np.empty(0, dtype=np.int8)
        i_active = np.empty(0, dtype=bool)

    q_xi = _local_coords(mesh, q_elem, q_x)
    i_xi = _local_coords(mesh, i_elem, i_x)

    uncut = np.nonzero(classification == FLUID)[0]
    cut = np.nonzero(classification == CUT)[0]

    faces = mesh.interior_faces
    if len(faces):
        cls_l = classification[faces[:, 0]]
        cls_r = classification[faces[:, 1]]
        alive = (cls_l != VOID) & (cls_r != VOID)
        ghost = alive & ((cls_l == CUT) | (cls_r == CUT))
        fluid_only = (cls_l == FLUID) & (cls_r == FLUID)
        ghost_faces = mesh.face_set(np.nonzero(ghost)[0])
        fluid_faces = mesh.face_set(np.nonzero(fluid_only)[0])
    else:
        ghost_faces = mesh.face_set(np.empty(0, dtype=np.int64))
        fluid_faces = mesh.face_set(np.empty(0, dtype=np.int64))

    active = np.zeros(mesh.n_nodes, dtype=bool)
    keep = classification != VOID
    if keep.any():
        active[mesh.elements[keep].ravel()] = True

    return CutTopology(
        mesh=mesh,
        classification=classification,
        uncut_elements=uncut,
        cut_elements=cut,
        q_elem=q_elem,
        q_xi=q_xi,
        q_x=q_x,
        q_w=q_w,
        i_x=i_x,
        i_w=i_w,
        i_n=i_n,
        i_elem=i_elem,
        i_xi=i_xi,
        i_parent_edge=i_pedge,
        i_edge_s=i_s,
        i_kind=i_kind,
        i_active=i_active,
        h_gamma=h_gamma,
        phys_area=phys_area,
        ghost_faces=ghost_faces,
        fluid_faces=fluid_faces,
        active_nodes=active,
    )


def _local_coords(mesh, elems, pts):
    if len(elems) == 0:
        return np.empty((0, 2))
    coords = mesh.nodes[mesh.elements[elems]]
    return inverse_map_batch(coords, pts)
