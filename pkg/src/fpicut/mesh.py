"""2D bilinear quadrilateral meshes: construction, file I/O, and coordinate maps.

A mesh serves either as the fixed fluid background grid or as the Lagrangian
poroelastic grid.  Elements are four-node quads with counterclockwise
connectivity; interior faces and tagged boundary edges are built on
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class MeshError(Exception):
    """Raised for invalid mesh files or degenerate geometry."""


# 2x2 tensor Gauss rule on [-1,1]^2.
_G = 1.0 / np.sqrt(3.0)
GAUSS4_POINTS = np.array(
    [[-_G, -_G], [_G, -_G], [_G, _G], [-_G, _G]]
)
GAUSS4_WEIGHTS = np.ones(4)

# 3-point Gauss rule on [-1,1].
GAUSS3_1D_POINTS = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
GAUSS3_1D_WEIGHTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])

# Six-point symmetric triangle rule (barycentric), exact through degree 4,
# all weights positive.  Weights sum to 1 and scale with triangle area.
_TA, _TB = 0.445948490915965, 0.091576213509771
TRI6_BARY = np.array(
    [
        [1 - 2 * _TA, _TA, _TA],
        [_TA, 1 - 2 * _TA, _TA],
        [_TA, _TA, 1 - 2 * _TA],
        [1 - 2 * _TB, _TB, _TB],
        [_TB, 1 - 2 * _TB, _TB],
        [_TB, _TB, 1 - 2 * _TB],
    ]
)
TRI6_WEIGHTS = np.array(
    [0.223381589678011] * 3 + [0.109951743655322] * 3
)

# Local edges of the reference quad, counterclockwise.
LOCAL_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))

# Corner coordinates of the reference quad.
REF_CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def shape_values(xi):
    """Bilinear shape functions at reference points ``xi`` (..., 2) -> (..., 4)."""
    xi = np.asarray(xi, dtype=float)
    x, y = xi[..., 0], xi[..., 1]
    return 0.25 * np.stack(
        [(1 - x) * (1 - y), (1 + x) * (1 - y), (1 + x) * (1 + y), (1 - x) * (1 + y)],
        axis=-1,
    )


def shape_gradients(xi):
    """Reference gradients of the bilinear shape functions, (..., 4, 2)."""
    xi = np.asarray(xi, dtype=float)
    x, y = xi[..., 0], xi[..., 1]
    dx = 0.25 * np.stack([-(1 - y), (1 - y), (1 + y), -(1 + y)], axis=-1)
    dy = 0.25 * np.stack([-(1 - x), -(1 + x), (1 + x), (1 - x)], axis=-1)
    return np.stack([dx, dy], axis=-1)


@dataclass
class StructuredInfo:
    """Lattice metadata kept by structured meshes for fast point location."""

    origin: np.ndarray
    center: np.ndarray
    hx: float
    hy: float
    nx: int
    ny: int
    rotation: float

    def to_lattice(self, x):
        """Map physical points into the unrotated lattice frame (units of cells)."""
        x = np.asarray(x, dtype=float)
        c, s = np.cos(-self.rotation), np.sin(-self.rotation)
        d = x - self.center
        ux = c * d[..., 0] - s * d[..., 1] + (self.center[0] - self.origin[0])
        uy = s * d[..., 0] + c * d[..., 1] + (self.center[1] - self.origin[1])
        return np.stack([ux / self.hx, uy / self.hy], axis=-1)

    def element_of_cell(self, ix, iy):
        return ix * self.ny + iy


@dataclass
class FaceSet:
    """A subset of interior faces with their per-face length scale.

    ``h_face`` is the maximum element diameter (longest diagonal) among the
    two elements adjacent to each face.
    """

    face_ids: np.ndarray
    h_face: np.ndarray


@dataclass
class Mesh:
    """Four-node quad mesh with interior-face and boundary-edge topology.

    ``elements`` rows are counterclockwise.  ``interior_faces`` rows are
    ``(elem_left, elem_right, node_a, node_b)`` where the edge ``a -> b`` is
    counterclockwise within ``elem_left``.  ``boundary_edges`` rows are
    ``(elem, node_a, node_b)`` oriented counterclockwise within their element,
    so the outward normal is ``(t_y, -t_x)``.
    """

    nodes: np.ndarray
    elements: np.ndarray
    interior_faces: np.ndarray = field(default=None)
    boundary_edges: np.ndarray = field(default=None)
    boundary_edge_tags: list = field(default=None)
    lattice: StructuredInfo = field(default=None)

    def __post_init__(self):
        self.nodes = np.ascontiguousarray(self.nodes, dtype=float)
        self.elements = np.ascontiguousarray(self.elements, dtype=np.int64)
        self._validate()
        if self.interior_faces is None:
            self._build_topology()
        self._diameters = None

    # -- construction helpers ------------------------------------------------

    def _validate(self):
        n = len(self.nodes)
        if self.elements.size and (self.elements.min() < 0 or self.elements.max() >= n):
            raise MeshError("element references unknown node id")
        coords = self.nodes[self.elements]  # (E, 4, 2)
        for corner in range(4):
            p = coords[:, corner]
            a = coords[:, (corner + 1) % 4] - p
            b = coords[:, (corner - 1) % 4] - p
            det = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
            bad = np.nonzero(det <= 0.0)[0]
            if bad.size:
                raise MeshError(f"inverted element {bad[0]}")

    def _build_topology(self):
        edge_owner = {}
        interior = []
        boundary = []
        for e, conn in enumerate(self.elements):
            for la, lb in LOCAL_EDGES:
                a, b = int(conn[la]), int(conn[lb])
                key = (min(a, b), max(a, b))
                if key in edge_owner:
                    other, oa, ob = edge_owner.pop(key)
                    interior.append((other, e, oa, ob))
                else:
                    edge_owner[key] = (e, a, b)
        for e, a, b in edge_owner.values():
            boundary.append((e, a, b))
        self.interior_faces = (
            np.array(interior, dtype=np.int64).reshape(-1, 4)
        )
        self.boundary_edges = np.array(boundary, dtype=np.int64).reshape(-1, 3)
        if self.boundary_edge_tags is None:
            self.boundary_edge_tags = ["boundary"] * len(self.boundary_edges)

    # -- queries ---------------------------------------------------------------

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_elements(self):
        return len(self.elements)

    def element_coords(self, elems=None):
        if elems is None:
            return self.nodes[self.elements]
        return self.nodes[self.elements[elems]]

    def element_diameters(self):
        """Longest diagonal per element."""
        if self._diameters is None:
            c = self.element_coords()
            d1 = np.linalg.norm(c[:, 2] - c[:, 0], axis=1)
            d2 = np.linalg.norm(c[:, 3] - c[:, 1], axis=1)
            self._diameters = np.maximum(d1, d2)
        return self._diameters

    def face_set(self, face_ids=None):
        """FaceSet over ``face_ids`` (default: all interior faces)."""
        if face_ids is None:
            face_ids = np.arange(len(self.interior_faces))
        face_ids = np.asarray(face_ids, dtype=np.int64)
        dia = self.element_diameters()
        f = self.interior_faces[face_ids]
        h = np.maximum(dia[f[:, 0]], dia[f[:, 1]])
        return FaceSet(face_ids, h)

    def boundary_loops(self):
        """Closed boundary loops as ordered lists of node ids (counterclockwise
        for exterior loops).  Returns a list of (node_list, edge_index_list)."""
        nxt = {}
        for i, (_, a, b) in enumerate(self.boundary_edges):
            nxt[int(a)] = (int(b), i)
        loops = []
        seen = set()
        for start in list(nxt):
            if start in seen:
                continue
            nodes, edges = [start], []
            cur = start
            while True:
                seen.add(cur)
                cur, ei = nxt[cur]
                edges.append(ei)
                if cur == start:
                    break
                nodes.append(cur)
            loops.append((nodes, edges))
        return loops


def build_structured_mesh(origin, edge_lengths, nx, ny, rotation=0.0):
    """Structured quad grid over a rectangle, rigidly rotated about its center.

    Boundary edges are tagged left/right/bottom/top in the pre-rotation frame.
    """
    origin = np.asarray(origin, dtype=float)
    ext = np.asarray(edge_lengths, dtype=float)
    if nx < 1 or ny < 1:
        raise ValueError("element counts must be at least 1")
    if ext[0] <= 0 or ext[1] <= 0:
        raise ValueError("edge lengths must be positive")
    xs = np.linspace(origin[0], origin[0] + ext[0], nx + 1)
    ys = np.linspace(origin[1], origin[1] + ext[1], ny + 1)
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    nodes = np.column_stack([xx.ravel(), yy.ravel()])
    center = origin + 0.5 * ext
    if rotation != 0.0:
        c, s = np.cos(rotation), np.sin(rotation)
        d = nodes - center
        nodes = np.column_stack(
            [c * d[:, 0] - s * d[:, 1], s * d[:, 0] + c * d[:, 1]]
        ) + center

    def nid(i, j):
        return i * (ny + 1) + j

    elems = np.empty((nx * ny, 4), dtype=np.int64)
    k = 0
    for i in range(nx):
        for j in range(ny):
            elems[k] = (nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1))
            k += 1
    mesh = Mesh(nodes, elems)
    tags = []
    for e, a, b in mesh.boundary_edges:
        ia, ja = divmod(int(a), ny + 1)
        ib, jb = divmod(int(b), ny + 1)
        if ia == ib == 0:
            tags.append("left")
        elif ia == ib == nx:
            tags.append("right")
        elif ja == jb == 0:
            tags.append("bottom")
        elif ja == jb == ny:
            tags.append("top")
        else:  # pragma: no cover - unreachable on a structured grid
            tags.append("boundary")
    mesh.boundary_edge_tags = tags
    mesh.lattice = StructuredInfo(
        origin=origin,
        center=center,
        hx=ext[0] / nx,
        hy=ext[1] / ny,
        nx=nx,
        ny=ny,
        rotation=rotation,
    )
    return mesh


def load_mesh(path):
    """Read a mesh from the plain-text format.

    Header ``nodes <N> elements <E>``; then ``n <id> <x> <y>`` lines,
    ``e <id> <n0> <n1> <n2> <n3>`` lines, and optional
    ``b <tag> <na> <nb>`` boundary-edge tags.  ``#`` starts a comment.
    """
    tokens = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                tokens.append((lineno, line.split()))
    if not tokens:
        raise MeshError(f"{path}: empty mesh file")
    lineno, head = tokens[0]
    if len(head) != 4 or head[0] != "nodes" or head[2] != "elements":
        raise MeshError(f"{path}:{lineno}: bad header, expected 'nodes N elements E'")
    try:
        n_nodes, n_elems = int(head[1]), int(head[3])
    except ValueError as exc:
        raise MeshError(f"{path}:{lineno}: bad header counts") from exc
    nodes = np.full((n_nodes, 2), np.nan)
    elems = np.full((n_elems, 4), -1, dtype=np.int64)
    tag_lines = []
    for lineno, tok in tokens[1:]:
        kind = tok[0]
        try:
            if kind == "n":
                nid = int(tok[1])
                if not 0 <= nid < n_nodes:
                    raise MeshError(f"{path}:{lineno}: node id {nid} out of range")
                if not np.isnan(nodes[nid, 0]):
                    raise MeshError(f"{path}:{lineno}: duplicate node id {nid}")
                nodes[nid] = (float(tok[2]), float(tok[3]))
            elif kind == "e":
                eid = int(tok[1])
                if not 0 <= eid < n_elems:
                    raise MeshError(f"{path}:{lineno}: element id {eid} out of range")
                if elems[eid, 0] >= 0:
                    raise MeshError(f"{path}:{lineno}: duplicate element id {eid}")
                elems[eid] = [int(t) for t in tok[2:6]]
            elif kind == "b":
                tag_lines.append((lineno, tok[1], int(tok[2]), int(tok[3])))
            else:
                raise MeshError(f"{path}:{lineno}: unknown record '{kind}'")
        except (ValueError, IndexError) as exc:
            raise MeshError(f"{path}:{lineno}: parse failure") from exc
    if np.isnan(nodes).any():
        missing = int(np.nonzero(np.isnan(nodes[:, 0]))[0][0])
        raise MeshError(f"{path}: missing node {missing}")
    if (elems < 0).any():
        missing = int(np.nonzero(elems[:, 0] < 0)[0][0])
        raise MeshError(f"{path}: missing element {missing}")
    mesh = Mesh(nodes, elems)
    if tag_lines:
        lookup = {}
        for i, (_, a, b) in enumerate(mesh.boundary_edges):
            lookup[(min(int(a), int(b)), max(int(a), int(b)))] = i
        for lineno, tag, a, b in tag_lines:
            key = (min(a, b), max(a, b))
            if key not in lookup:
                raise MeshError(f"{path}:{lineno}: edge ({a},{b}) is not a boundary edge")
            mesh.boundary_edge_tags[lookup[key]] = tag
    return mesh


def reference_map(mesh, elem, xi):
    """Evaluate the isoparametric map of ``elem`` at reference coords ``xi``.

    Returns (shape values (4,), physical shape gradients (4, 2),
    physical point (2,), Jacobian (2, 2)).
    """
    coords = mesh.nodes[mesh.elements[elem]]
    n = shape_values(xi)
    dn = shape_gradients(xi)
    x = n @ coords
    jac = np.einsum("ak,ai->ik", dn, coords)  # dx_i/dxi_k
    grad = dn @ np.linalg.inv(jac)
    return n, grad, x, jac


def inverse_map(mesh, elem, x, tol=1e-12, maxit=50):
    """Invert the bilinear map of ``elem`` at physical point ``x``.

    Returns (reference coords, inside flag); the inside flag is true when
    both reference coordinates are within ``1 + 1e-10`` of the unit range.
    """
    coords = mesh.nodes[mesh.elements[elem]]
    xi = inverse_map_batch(coords[None], np.asarray(x, dtype=float)[None], tol, maxit)[0]
    inside = bool(np.all(np.abs(xi) <= 1.0 + 1e-10))
    return xi, inside


def inverse_map_batch(coords, points, tol=1e-12, maxit=50):
    """Vectorized bilinear inverse map.

    ``coords`` is (n, 4, 2) element corner coordinates and ``points`` (n, 2).
    Newton iteration from the element center; raises MeshError on
    non-convergence.
    """
    coords = np.asarray(coords, dtype=float)
    points = np.asarray(points, dtype=float)
    n = len(points)
    xi = np.zeros((n, 2))
    scale = np.maximum(
        np.linalg.norm(coords[:, 2] - coords[:, 0], axis=1),
        np.linalg.norm(coords[:, 3] - coords[:, 1], axis=1),
    )
    for _ in range(maxit):
        sv = shape_values(xi)
        cur = np.einsum("na,nai->ni", sv, coords)
        res = cur - points
        if np.all(np.linalg.norm(res, axis=1) <= tol * scale):
            return xi
        dn = shape_gradients(xi)
        jac = np.einsum("nak,nai->nik", dn, coords)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        dxi = np.empty_like(res)
        dxi[:, 0] = (jac[:, 1, 1] * res[:, 0] - jac[:, 0, 1] * res[:, 1]) / det
        dxi[:, 1] = (-jac[:, 1, 0] * res[:, 0] + jac[:, 0, 0] * res[:, 1]) / det
        xi -= dxi
    raise MeshError("inverse map failed")
