"""Stabilized cut Navier-Stokes weak form: Galerkin terms on the physical
fluid region, interior-penalty stabilization, and ghost penalties on
cut-adjacent faces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (
    GAUSS3_1D_POINTS,
    GAUSS3_1D_WEIGHTS,
    GAUSS4_POINTS,
    GAUSS4_WEIGHTS,
    REF_CORNERS,
    shape_gradients,
    shape_values,
    inverse_map_batch,
)
from .system import Kernel, assemble_residual


@dataclass
class FluidParams:
    """Free-fluid material data and forcing.

    ``body_force`` maps (points, t) to the momentum forcing per unit volume
    (rho*b); ``neumann_traction`` maps (points, t, normals) to the prescribed
    boundary traction on the cut boundary.
    """

    rho: float = 1.0
    mu: float = 1.0
    body_force: object = None
    neumann_traction: object = None

    def __post_init__(self):
        if self.rho <= 0 or self.mu <= 0:
            raise ValueError("density and viscosity must be positive")


@dataclass
class StabConstants:
    """Dimensionless constants of the interior-penalty and ghost operators."""

    gamma_p: float = 0.05
    gamma_u: float = 0.05
    gamma_div: float = 0.05e-3
    c_t: float = 1.0 / 12.0
    c_k: float = 1.0
    c_v: float = 1.0 / 6.0
    gamma_nu_gp: float = 0.1
    gamma_t_gp: float = 0.001
    c_v_gamma: float = 1.0 / 6.0
    c_t_gamma: float = 1.0 / 12.0


def fluid_element_dofs(dofmap, elements_nodes):
    """(nE, 12) dof table: interleaved nodal velocities, then pressures."""
    v = dofmap.fluid_v(elements_nodes)  # (nE, 4, 2)
    p = dofmap.fluid_p(elements_nodes)  # (nE, 4)
    return np.concatenate([v.reshape(len(elements_nodes), 8), p], axis=1)


class FluidVolumeKernel(Kernel):
    """Galerkin fluid terms at a batch of quadrature points.

    One entity per quadrature point; points of uncut elements and clipped
    points of cut elements use the same path.  ``bf_nodes`` carries the nodal
    body-force values (re-interpolated with the element shape functions).
    """

    def __init__(self, dofs, N, G, w, v_old_nodes, bf_nodes, rho, mu,
                 transient_scale):
        super().__init__(dofs)
        self.N = N  # (nP, 4)
        self.G = G  # (nP, 4, 2)
        self.w = w  # (nP,)
        self.v_old = v_old_nodes  # (nP, 4, 2)
        self.bf = bf_nodes  # (nP, 4, 2)
        self.rho = rho
        self.mu = mu
        self.ts = transient_scale

    def residual(self, uloc):
        n = len(uloc)
        v = uloc[:, :8].reshape(n, 4, 2)
        p = uloc[:, 8:]
        N, G, w = self.N, self.G, self.w
        vh = np.einsum("na,nai->ni", N, v)
        gv = np.einsum("nai,naj->nij", v, G)
        ph = np.einsum("na,na->n", N, p)
        accel = self.ts * (vh - np.einsum("na,nai->ni", N, self.v_old))
        conv = np.einsum("nj,nij->ni", vh, gv)
        bfh = np.einsum("na,nai->ni", N, self.bf)
        eps = 0.5 * (gv + np.swapaxes(gv, 1, 2))
        nodal = self.rho * (accel + conv) - bfh
        r_v = np.einsum("n,na,ni->nai", w, N, nodal)
        r_v += 2.0 * self.mu * np.einsum("n,nil,nal->nai", w, eps, G)
        r_v -= np.einsum("n,nai,n->nai", w, G, ph)
        divv = gv[:, 0, 0] + gv[:, 1, 1]
        r_p = np.einsum("n,na,n->na", w, N, divv)
        return np.concatenate([r_v.reshape(n, 8), r_p], axis=1)


class FluidNeumannKernel(Kernel):
    """Prescribed-traction load on the cut boundary: -(dv, h)."""

    load_only = True

    def __init__(self, dofs, N, w, traction):
        super().__init__(dofs)
        self.N = N
        self.w = w
        self.traction = traction  # (nP, 2)

    def residual(self, uloc):
        n = len(uloc)
        r_v = -np.einsum("n,na,ni->nai", self.w, self.N, self.traction)
        return np.concatenate([r_v.reshape(n, 8), np.zeros((n, 4))], axis=1)


def build_face_data(mesh, face_ids, coords=None, h_face=None):
    """Pairing data for jump terms on interior faces.

    Returns a dict with the union-node table (6 per face), padded gradient
    differences D (face, gp, 6, 2), padded second normal-derivative
    differences Dm (face, 6), quadrature weights, unit normals, and h.
    Geometry is taken from ``coords`` when given (deformed configurations).
    """
    if coords is None:
        coords = mesh.nodes
    faces = mesh.interior_faces[np.asarray(face_ids, dtype=np.int64)]
    n_f = len(faces)
    if n_f == 0:
        return None
    conn = mesh.elements
    union = np.empty((n_f, 6), dtype=np.int64)
    side_slot = np.empty((n_f, 2, 4), dtype=np.int64)
    for k, (el, er, a, b) in enumerate(faces):
        ln = conn[el]
        rn = conn[er]
        extra = [x for x in rn if x not in set(ln.tolist())]
        un = np.concatenate([ln, np.array(extra, dtype=np.int64)])
        union[k] = un
        pos = {int(x): i for i, x in enumerate(un)}
        side_slot[k, 0] = [pos[int(x)] for x in ln]
        side_slot[k, 1] = [pos[int(x)] for x in rn]

    a_xy = coords[faces[:, 2]]
    b_xy = coords[faces[:, 3]]
    tang = b_xy - a_xy
    length = np.linalg.norm(tang, axis=1)
    normal = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
    gp = 0.5 * (GAUSS3_1D_POINTS + 1.0)
    pts = a_xy[:, None, :] + gp[None, :, None] * tang[:, None, :]
    wq = 0.5 * GAUSS3_1D_WEIGHTS[None, :] * length[:, None]

    D = np.zeros((n_f, 3, 6, 2))
    Dm = np.zeros((n_f, 6))
    for side, sign in ((0, 1.0), (1, -1.0)):
        elems = faces[:, side]
        ecoords = coords[conn[elems]]
        flat = pts.reshape(-1, 2)
        xi = inverse_map_batch(
            np.repeat(ecoords, 3, axis=0), flat
        ).reshape(n_f, 3, 2)
        dn = shape_gradients(xi)  # (n_f, 3, 4, 2)
        jac = np.einsum("ngak,nai->ngik", dn, ecoords)
        jinv = np.linalg.inv(jac)
        grads = np.einsum("ngak,ngki->ngai", dn, jinv)
        # second normal derivative of the bilinear basis (constant on
        # parallelogram elements): n.J^-T Href J^-1 n with Href = [[0,c],[c,0]]
        jinv0 = jinv[:, 0]
        q = np.einsum("nik,nk->ni", jinv0, normal)
        mfac = 2.0 * q[:, 0] * q[:, 1]
        corners = REF_CORNERS
        m_a = 0.25 * corners[:, 0] * corners[:, 1]  # d2N_a / dxi deta
        m_side = mfac[:, None] * m_a[None, :]
        rows = np.arange(n_f)[:, None]
        for g in range(3):
            np.add.at(D[:, g], (rows, side_slot[:, side]), sign * grads[:, g])
        np.add.at(Dm, (rows, side_slot[:, side]), sign * m_side)

    if h_face is None:
        d1 = np.linalg.norm(coords[conn[faces[:, 0]]][:, 2] - coords[conn[faces[:, 0]]][:, 0], axis=1)
        d2 = np.linalg.norm(coords[conn[faces[:, 0]]][:, 3] - coords[conn[faces[:, 0]]][:, 1], axis=1)
        e1 = np.linalg.norm(coords[conn[faces[:, 1]]][:, 2] - coords[conn[faces[:, 1]]][:, 0], axis=1)
        e2 = np.linalg.norm(coords[conn[faces[:, 1]]][:, 3] - coords[conn[faces[:, 1]]][:, 1], axis=1)
        h_face = np.maximum(np.maximum(d1, d2), np.maximum(e1, e2))

    return {
        "union": union,
        "D": D,
        "Dm": Dm,
        "wq": wq,
        "normal": normal,
        "h": np.asarray(h_face, dtype=float),
    }


def _cip_taus(consts, rho, mu, vinf, h, dtt):
    phi = mu + h * consts.c_v * rho * vinf + h**2 * consts.c_t * rho / dtt
    tau_u = consts.gamma_u * (rho * vinf) ** 2 * h**3 / phi
    tau_p = consts.gamma_p * h**3 / phi
    tau_div = consts.gamma_div * h * phi
    return tau_u, tau_p, tau_div, phi


class CipFluidKernel(Kernel):
    """Gradient/divergence jump penalties on interior fluid faces."""

    def __init__(self, face_data, dofmap, consts, rho, mu, dtt):
        fd = face_data
        v = dofmap.fluid_v(fd["union"]).reshape(-1, 12)
        p = dofmap.fluid_p(fd["union"])
        super().__init__(np.concatenate([v, p], axis=1))
        self.fd = fd
        self.consts = consts
        self.rho = rho
        self.mu = mu
        self.dtt = dtt

    def residual(self, uloc):
        n = len(uloc)
        v = uloc[:, :12].reshape(n, 6, 2)
        p = uloc[:, 12:]
        fd = self.fd
        vinf = np.abs(v).max(axis=(1, 2))
        tau_u, tau_p, tau_div, _ = _cip_taus(
            self.consts, self.rho, self.mu, vinf, fd["h"], self.dtt
        )
        r_v = np.zeros((n, 6, 2))
        r_p = np.zeros((n, 6))
        for g in range(3):
            D = fd["D"][:, g]
            w = fd["wq"][:, g]
            jgv = np.einsum("nai,naj->nij", v, D)
            jgp = np.einsum("na,naj->nj", p, D)
            jdiv = jgv[:, 0, 0] + jgv[:, 1, 1]
            r_v += np.einsum("n,nil,nal->nai", w * tau_u, jgv, D)
            r_v += np.einsum("n,nai->nai", w * tau_div * jdiv, D)
            r_p += np.einsum("n,nl,nal->na", w * tau_p, jgp, D)
        return np.concatenate([r_v.reshape(n, 12), r_p], axis=1)


class GhostPenaltyKernel(Kernel):
    """Normal-derivative jump penalties of orders one and two on ghost faces."""

    def __init__(self, face_data, dofmap, consts, rho, mu, dtt):
        fd = face_data
        v = dofmap.fluid_v(fd["union"]).reshape(-1, 12)
        p = dofmap.fluid_p(fd["union"])
        super().__init__(np.concatenate([v, p], axis=1))
        self.fd = fd
        # first normal derivative differences (face, gp, 6)
        self.Dn = np.einsum("ngaj,nj->nga", fd["D"], fd["normal"])
        self.consts = consts
        self.rho = rho
        self.mu = mu
        self.dtt = dtt

    def residual(self, uloc):
        n = len(uloc)
        v = uloc[:, :12].reshape(n, 6, 2)
        p = uloc[:, 12:]
        fd = self.fd
        c = self.consts
        h = fd["h"]
        vinf = np.abs(v).max(axis=(1, 2))
        tau_u_cip, tau_p_cip, tau_div_cip, _ = _cip_taus(
            c, self.rho, self.mu, vinf, h, self.dtt
        )
        tau_p1 = tau_p_cip
        tau_p2 = 0.05 * h**2 * tau_p1
        tau_u1 = tau_u_cip + c.gamma_nu_gp * h * self.mu + c.gamma_t_gp * h**3 * self.rho / self.dtt
        tau_div1 = tau_div_cip
        tau_u2 = 0.05 * h**2 * (tau_u1 + tau_div1)
        Dm = fd["Dm"]
        j2v = np.einsum("nai,na->ni", v, Dm)
        j2p = np.einsum("na,na->n", p, Dm)
        r_v = np.zeros((n, 6, 2))
        r_p = np.zeros((n, 6))
        for g in range(3):
            Dn = self.Dn[:, g]
            D = fd["D"][:, g]
            w = fd["wq"][:, g]
            j1v = np.einsum("nai,na->ni", v, Dn)
            j1p = np.einsum("na,na->n", p, Dn)
            jgv = np.einsum("nai,naj->nij", v, D)
            jdiv = jgv[:, 0, 0] + jgv[:, 1, 1]
            r_v += np.einsum("n,ni,na->nai", w * tau_u1, j1v, Dn)
            r_v += np.einsum("n,ni,na->nai", w * tau_u2, j2v, Dm)
            r_v += np.einsum("n,nai->nai", w * tau_div1 * jdiv, D)
            r_p += np.einsum("n,n,na->na", w * tau_p1, j1p, Dn)
            r_p += np.einsum("n,n,na->na", w * tau_p2, j2p, Dm)
        return np.concatenate([r_v.reshape(n, 12), r_p], axis=1)


# -- kernel builders -------------------------------------------------------------


def make_fluid_volume_kernels(dofmap, topology, params, v_old_nodal, t,
                              transient_scale):
    """Quadrature-point kernels for uncut and cut elements."""
    mesh = topology.mesh
    kernels = []
    bf_all = _nodal_body_force(mesh, params, t)

    if len(topology.uncut_elements):
        elems = topology.uncut_elements
        conn = mesh.elements[elems]
        coords = mesh.nodes[conn]
        n_e = len(elems)
        N_ref = shape_values(GAUSS4_POINTS)  # (4gp, 4)
        dN = shape_gradients(GAUSS4_POINTS)  # (4gp, 4, 2)
        jac = np.einsum("gak,nai->ngik", dN, coords)
        det = jac[..., 0, 0] * jac[..., 1, 1] - jac[..., 0, 1] * jac[..., 1, 0]
        jinv = np.linalg.inv(jac)
        grads = np.einsum("gak,ngki->ngai", dN, jinv)
        w = det * GAUSS4_WEIGHTS[None, :]
        dofs = fluid_element_dofs(dofmap, conn)
        N_pts = np.tile(N_ref[None], (n_e, 1, 1)).reshape(-1, 4)
        G_pts = grads.reshape(-1, 4, 2)
        w_pts = w.reshape(-1)
        dofs_pts = np.repeat(dofs, 4, axis=0)
        vold_pts = np.repeat(v_old_nodal[conn], 4, axis=0)
        bf_pts = np.repeat(bf_all[conn], 4, axis=0)
        kernels.append(
            FluidVolumeKernel(
                dofs_pts, N_pts, G_pts, w_pts, vold_pts, bf_pts,
                params.rho, params.mu, transient_scale,
            )
        )

    if len(topology.q_elem):
        conn = mesh.elements[topology.q_elem]
        coords = mesh.nodes[conn]
        N = shape_values(topology.q_xi)
        dN = shape_gradients(topology.q_xi)
        jac = np.einsum("nak,nai->nik", dN, coords)
        jinv = np.linalg.inv(jac)
        grads = np.einsum("nak,nki->nai", dN, jinv)
        dofs = fluid_element_dofs(dofmap, conn)
        kernels.append(
            FluidVolumeKernel(
                dofs, N, grads, topology.q_w, v_old_nodal[conn], bf_all[conn],
                params.rho, params.mu, transient_scale,
            )
        )
    return kernels


def make_fluid_neumann_kernel(dofmap, topology, params, t):
    """Traction load on the straight cut boundary."""
    sel = topology.i_kind == 1
    if not sel.any() or params.neumann_traction is None:
        return None
    conn = topology.mesh.elements[topology.i_elem[sel]]
    N = shape_values(topology.i_xi[sel])
    trac = params.neumann_traction(topology.i_x[sel], t, topology.i_n[sel])
    return FluidNeumannKernel(
        fluid_element_dofs(dofmap, conn), N, topology.i_w[sel], trac
    )


def _nodal_body_force(mesh, params, t):
    if params.body_force is None:
        return np.zeros((mesh.n_nodes, 2))
    return np.asarray(params.body_force(mesh.nodes, t), dtype=float)


def make_cip_fluid_kernel(dofmap, topology, params, consts, dtt):
    fd = build_face_data(topology.mesh, topology.fluid_faces.face_ids,
                         h_face=topology.fluid_faces.h_face)
    if fd is None:
        return None
    return CipFluidKernel(fd, dofmap, consts, params.rho, params.mu, dtt)


def make_ghost_penalty_kernel(dofmap, topology, params, consts, dtt):
    fd = build_face_data(topology.mesh, topology.ghost_faces.face_ids,
                         h_face=topology.ghost_faces.h_face)
    if fd is None:
        return None
    return GhostPenaltyKernel(fd, dofmap, consts, params.rho, params.mu, dtt)


# -- assembly surfaces (single-operator residuals) --------------------------------


def assemble_fluid_galerkin(dofmap, state, v_old_nodal, topology, params, theta, dt):
    """Residual vector of the Galerkin + Neumann fluid terms alone."""
    kernels = make_fluid_volume_kernels(
        dofmap, topology, params, v_old_nodal, state.t, 1.0 / (theta * dt)
    )
    neum = make_fluid_neumann_kernel(dofmap, topology, params, state.t)
    if neum is not None:
        kernels.append(neum)
    return assemble_residual(dofmap.n_dofs, kernels, state.u)


def assemble_cip_fluid(dofmap, state, topology, params, consts, theta, dt):
    k = make_cip_fluid_kernel(dofmap, topology, params, consts, theta * dt)
    return assemble_residual(dofmap.n_dofs, [k] if k else [], state.u)


def assemble_ghost_penalty(dofmap, state, topology, params, consts, theta, dt):
    k = make_ghost_penalty_kernel(dofmap, topology, params, consts, theta * dt)
    return assemble_residual(dofmap.n_dofs, [k] if k else [], state.u)
