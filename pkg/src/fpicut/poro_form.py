"""Finite-strain poroelasticity on the fitted Lagrangian mesh: constitutive
laws, the three-field weak form, and pressure/divergence jump stabilization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import (
    GAUSS3_1D_POINTS,
    GAUSS3_1D_WEIGHTS,
    GAUSS4_POINTS,
    GAUSS4_WEIGHTS,
    shape_gradients,
    shape_values,
)
from .system import AssemblyError, Kernel, assemble_residual
from .fluid_form import build_face_data

CONSTANT, CONSTITUTIVE = "constant", "constitutive"


@dataclass
class PoroParams:
    """Material data of the poroelastic mixture.

    Permeability is the isotropic material value ``k0``; with ``kozeny`` the
    value follows the porosity through the Kozeny-Carman relation anchored at
    (``k_ref``, ``phi_ref``).  ``porosity_mode`` selects a fixed fluid
    fraction or the volumetric-energy closure with bulk modulus ``kappa_p``.
    """

    rho_f: float = 1.0
    mu_f: float = 1.0
    phi0: float = 0.5
    k0: float = 0.1
    kozeny: bool = False
    k_ref: float = 0.1
    phi_ref: float = 0.5
    youngs: float = 1000.0
    poisson: float = 0.3
    kappa_p: float = 100.0
    rho_s0: float = 1.0
    porosity_mode: str = CONSTANT
    body_force_fluid: object = None  # (x, X, t) -> rho^F * b per current volume
    body_force_mixture: object = None  # (X, t) -> rho0 * b per reference volume

    def __post_init__(self):
        if not 0.0 < self.phi0 < 1.0:
            raise ValueError("initial porosity must lie in (0, 1)")
        if self.k0 <= 0 or self.k_ref <= 0:
            raise ValueError("permeability must be positive")
        if self.youngs <= 0 or not -1.0 < self.poisson < 0.5:
            raise ValueError("invalid elastic constants")

    @property
    def neo_c(self):
        return self.youngs / (4.0 * (1.0 + self.poisson))

    @property
    def neo_beta(self):
        return self.poisson / (1.0 - 2.0 * self.poisson)

    @property
    def rho_tilde0(self):
        return (1.0 - self.phi0) * self.rho_s0

    def initial_permeability(self):
        """Material permeability at the undeformed initial state."""
        if self.kozeny:
            return kozeny_carman(self.phi0, 1.0, self)
        return self.k0


@dataclass
class Kinematics:
    """Deformation measures at a material point."""

    F: np.ndarray
    J: np.ndarray
    E: np.ndarray
    C_inv: np.ndarray
    F_inv: np.ndarray


def kinematics(grad_u):
    """Deformation gradient, Jacobian, Green-Lagrange strain from grad0(u)."""
    g = np.atleast_3d(np.asarray(grad_u, dtype=float))
    if g.shape[-2:] != (2, 2):
        g = g.reshape(-1, 2, 2)
    F = g.copy()
    F[:, 0, 0] += 1.0
    F[:, 1, 1] += 1.0
    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    if np.any(J <= 0.0):
        raise AssemblyError("element inversion")
    F_inv = np.empty_like(F)
    F_inv[:, 0, 0] = F[:, 1, 1] / J
    F_inv[:, 1, 1] = F[:, 0, 0] / J
    F_inv[:, 0, 1] = -F[:, 0, 1] / J
    F_inv[:, 1, 0] = -F[:, 1, 0] / J
    C = np.einsum("nki,nkj->nij", F, F)
    E = 0.5 * C
    E[:, 0, 0] -= 0.5
    E[:, 1, 1] -= 0.5
    C_inv = np.einsum("nik,njk->nij", F_inv, F_inv)
    return Kinematics(F=F, J=J, E=E, C_inv=C_inv, F_inv=F_inv)


def second_pk_stress(kin, p_pore, params):
    """Homogenized second Piola-Kirchhoff stress: skeleton part plus pressure."""
    c, beta = params.neo_c, params.neo_beta
    p_pore = np.asarray(p_pore, dtype=float)
    S = -2.0 * c * (kin.J ** (-2.0 * beta))[:, None, None] * kin.C_inv
    S[:, 0, 0] += 2.0 * c
    S[:, 1, 1] += 2.0 * c
    S -= (p_pore * kin.J)[:, None, None] * kin.C_inv
    return S


def porosity(J, p_pore, params):
    """Fluid fraction from the volumetric-energy closure (or the fixed value)."""
    if params.porosity_mode == CONSTANT:
        return np.broadcast_to(params.phi0, np.shape(J)).copy()
    J = np.asarray(J, dtype=float)
    p_pore = np.asarray(p_pore, dtype=float)
    s0 = 1.0 - params.phi0
    solid = s0 / (1.0 + p_pore * s0 / params.kappa_p)  # J * (1 - phi)
    phi = 1.0 - solid / J
    if np.any(phi <= 0.0) or np.any(phi >= 1.0):
        raise AssemblyError("porosity out of range")
    return phi


def kozeny_carman(phi, J, params):
    """Porosity-dependent material permeability."""
    jphi = np.asarray(J, dtype=float) * np.asarray(phi, dtype=float)
    if np.any(jphi >= 1.0):
        raise AssemblyError("porosity saturation")
    ref = params.k_ref * (1.0 - params.phi_ref**2) / params.phi_ref**3
    return ref * jphi**3 / (1.0 - jphi**2)


def spatial_permeability(kin, K):
    """Push-forward k = J^-1 F K F^T of an isotropic material permeability."""
    K = np.asarray(K, dtype=float)
    b = np.einsum("nik,njk->nij", kin.F, kin.F)
    return (K / kin.J)[:, None, None] * b


def _material_permeability(params, J, phi):
    if params.kozeny:
        return kozeny_carman(phi, J, params)
    return np.broadcast_to(params.k0, np.shape(J)).copy()


def poro_element_dofs(dofmap, elements_nodes):
    """(nE, 20) dof table: nodal velocities, displacements, pressures."""
    n = len(elements_nodes)
    v = dofmap.poro_v(elements_nodes).reshape(n, 8)
    u = dofmap.poro_u(elements_nodes).reshape(n, 8)
    p = dofmap.poro_p(elements_nodes)
    return np.concatenate([v, u, p], axis=1)


class PoroVolumeKernel(Kernel):
    """All volume terms of the three-field poroelastic weak form."""

    def __init__(self, dofs, X_coords, old, params, theta, dt, t,
                 bf_fluid_nodes, bf_mix_nodes):
        super().__init__(dofs)
        self.X = X_coords  # (nE, 4, 2)
        self.old = old  # dict: v, u, p, vs nodal arrays (nE, 4, *)
        self.prm = params
        self.theta = theta
        self.dt = dt
        self.dtt = theta * dt
        self.t = t
        self.bf_f = bf_fluid_nodes
        self.bf_m = bf_mix_nodes
        dN = shape_gradients(GAUSS4_POINTS)  # (4gp, 4, 2)
        jac0 = np.einsum("gak,nai->ngik", dN, X_coords)
        det0 = jac0[..., 0, 0] * jac0[..., 1, 1] - jac0[..., 0, 1] * jac0[..., 1, 0]
        self.G0 = np.einsum("gak,ngki->ngai", dN, np.linalg.inv(jac0))
        self.w0 = det0 * GAUSS4_WEIGHTS[None, :]
        self.N = shape_values(GAUSS4_POINTS)

    def residual(self, uloc):
        n = len(uloc)
        prm = self.prm
        v = uloc[:, :8].reshape(n, 4, 2)
        u = uloc[:, 8:16].reshape(n, 4, 2)
        p = uloc[:, 16:]
        omega = (1.0 - self.theta) / self.theta
        udot_n = (u - self.old["u"]) / self.dtt - omega * self.old["vs"]
        uddot_n = ((u - self.old["u"]) / self.dt - self.old["vs"]) / self.dtt
        vdot_n = (v - self.old["v"]) / self.dtt
        r_v = np.zeros((n, 4, 2))
        r_u = np.zeros((n, 4, 2))
        r_p = np.zeros((n, 4))
        c, beta = prm.neo_c, prm.neo_beta
        for g in range(4):
            N = self.N[g]
            G0 = self.G0[:, g]
            w0 = self.w0[:, g]
            kin = kinematics(np.einsum("nai,naj->nij", u, G0))
            J, Finv = kin.J, kin.F_inv
            Gx = np.einsum("naj,nji->nai", G0, Finv)
            vh = np.einsum("a,nai->ni", N, v)
            ph = p @ N
            udoth = np.einsum("a,nai->ni", N, udot_n)
            uddoth = np.einsum("a,nai->ni", N, uddot_n)
            vdoth = np.einsum("a,nai->ni", N, vdot_n)
            gv = np.einsum("nai,naj->nij", v, Gx)
            gradp = np.einsum("na,nai->ni", p, Gx)
            div_udot = np.einsum("nai,nai->n", udot_n, Gx)
            phi = porosity(J, ph, prm)
            if prm.porosity_mode == CONSTITUTIVE:
                kin_old = kinematics(np.einsum("nai,naj->nij", self.old["u"], G0))
                phi_old = porosity(kin_old.J, self.old["p"] @ N, prm)
                phidot = (phi - phi_old) / self.dtt
            else:
                phidot = np.zeros(n)
            K = _material_permeability(prm, J, phi)
            kinv = (J / K)[:, None, None] * np.einsum("nki,nkj->nij", Finv, Finv)
            rel = vh - udoth
            kinv_rel = np.einsum("nij,nj->ni", kinv, rel)
            w_cur = w0 * J

            # fluid mass balance, tested by dp
            r_p += np.einsum("n,a->na", w_cur * (phidot + phi * div_udot), N)
            r_p -= np.einsum("n,nai,ni->na", w_cur * phi, Gx, rel)

            # pore-fluid momentum, tested by dv
            conv = np.einsum("nj,nij->ni", udoth, gv)
            bf_f = np.einsum("a,nai->ni", N, self.bf_f)
            nodal_v = prm.rho_f * (vdoth - conv) + prm.mu_f * phi[:, None] * kinv_rel - bf_f
            r_v += np.einsum("n,a,ni->nai", w_cur, N, nodal_v)
            r_v -= np.einsum("n,nai,n->nai", w_cur, Gx, ph)

            # mixture momentum in the reference frame, tested by du
            FS = 2.0 * c * kin.F
            FS -= (2.0 * c * J ** (-2.0 * beta) + ph * J)[:, None, None] * np.swapaxes(Finv, 1, 2)
            bf_m = np.einsum("a,nai->ni", N, self.bf_m)
            nodal_u = (
                prm.rho_tilde0 * uddoth
                - prm.mu_f * (J * phi**2)[:, None] * kinv_rel
                - (J * phi)[:, None] * gradp
                - bf_m
            )
            r_u += np.einsum("n,a,ni->nai", w0, N, nodal_u)
            r_u += np.einsum("n,nij,naj->nai", w0, FS, G0)
        return np.concatenate([r_v.reshape(n, 8), r_u.reshape(n, 8), r_p], axis=1)


class PoroBoundaryMassKernel(Kernel):
    """Exterior-boundary flux term of the mass balance: (dp, phi n.(v - du/dt))."""

    def __init__(self, dofs, X_edges, old_u, old_vs, phi0, theta, dt):
        super().__init__(dofs)
        self.X = X_edges  # (nB, 2, 2)
        self.old_u = old_u
        self.old_vs = old_vs
        self.phi0 = phi0
        self.theta = theta
        self.dtt = theta * dt

    def residual(self, uloc):
        n = len(uloc)
        v = uloc[:, :4].reshape(n, 2, 2)
        u = uloc[:, 4:8].reshape(n, 2, 2)
        p_rows = np.zeros((n, 2))
        omega = (1.0 - self.theta) / self.theta
        udot_n = (u - self.old_u) / self.dtt - omega * self.old_vs
        x = self.X + u
        t = x[:, 1] - x[:, 0]
        length = np.linalg.norm(t, axis=1)
        normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
        gp = 0.5 * (GAUSS3_1D_POINTS + 1.0)
        for g in range(3):
            M = np.array([1.0 - gp[g], gp[g]])
            w = 0.5 * GAUSS3_1D_WEIGHTS[g] * length
            rel = np.einsum("a,nai->ni", M, v - udot_n)
            flux = self.phi0 * np.einsum("ni,ni->n", normal, rel)
            p_rows += np.einsum("n,a->na", w * flux, M)
        out = np.zeros((n, 10))
        out[:, 8:] = p_rows
        return out


class CipPoroKernel(Kernel):
    """Pressure-gradient and velocity-divergence jumps on the fitted mesh."""

    def __init__(self, face_data, dofmap, consts, params, dtt):
        fd = face_data
        v = dofmap.poro_v(fd["union"]).reshape(-1, 12)
        p = dofmap.poro_p(fd["union"])
        super().__init__(np.concatenate([v, p], axis=1))
        self.fd = fd
        h = fd["h"]
        k0 = params.initial_permeability()
        phi_big = h**2 * (
            consts.c_k * params.mu_f * params.phi0 / k0
            + consts.c_t * params.rho_f / dtt
        )
        self.tau_p = consts.gamma_p * h**3 / phi_big
        self.tau_div = consts.gamma_div * h * phi_big

    def residual(self, uloc):
        n = len(uloc)
        v = uloc[:, :12].reshape(n, 6, 2)
        p = uloc[:, 12:]
        fd = self.fd
        r_v = np.zeros((n, 6, 2))
        r_p = np.zeros((n, 6))
        for g in range(3):
            D = fd["D"][:, g]
            w = fd["wq"][:, g]
            jgv = np.einsum("nai,naj->nij", v, D)
            jgp = np.einsum("na,naj->nj", p, D)
            jdiv = jgv[:, 0, 0] + jgv[:, 1, 1]
            r_v += np.einsum("n,nai->nai", w * self.tau_div * jdiv, D)
            r_p += np.einsum("n,nl,nal->na", w * self.tau_p, jgp, D)
        return np.concatenate([r_v.reshape(n, 12), r_p], axis=1)


# -- builders -----------------------------------------------------------------


def _old_nodal(mesh, state_old, dofmap):
    conn = mesh.elements
    return {
        "v": state_old.poro_velocity[conn],
        "u": state_old.poro_displacement[conn],
        "p": state_old.poro_pressure[conn],
        "vs": state_old.solid_velocity[conn],
    }


def make_poro_volume_kernel(dofmap, poro_mesh, params, state_old, theta, dt, t):
    conn = poro_mesh.elements
    n_e = len(conn)
    if params.body_force_fluid is not None:
        # forcing is sampled at nodes and re-interpolated; the nodal material
        # and current positions are both known analytically
        bf_f = np.asarray(params.body_force_fluid(poro_mesh.nodes, t), dtype=float)[conn]
    else:
        bf_f = np.zeros((n_e, 4, 2))
    if params.body_force_mixture is not None:
        bf_m = np.asarray(params.body_force_mixture(poro_mesh.nodes, t), dtype=float)[conn]
    else:
        bf_m = np.zeros((n_e, 4, 2))
    return PoroVolumeKernel(
        poro_element_dofs(dofmap, conn),
        poro_mesh.nodes[conn],
        _old_nodal(poro_mesh, state_old, dofmap),
        params,
        theta,
        dt,
        t,
        bf_f,
        bf_m,
    )


def make_poro_boundary_mass_kernel(dofmap, poro_mesh, params, state_old, theta,
                                   dt, interface_tags=("interface",)):
    """Mass-balance flux on exterior edges not owned by the coupling terms."""
    keep = [
        i
        for i, tag in enumerate(poro_mesh.boundary_edge_tags)
        if tag not in interface_tags
    ]
    if not keep:
        return None
    edges = poro_mesh.boundary_edges[keep]
    nodes = edges[:, 1:]
    v = dofmap.poro_v(nodes).reshape(len(edges), 4)
    u = dofmap.poro_u(nodes).reshape(len(edges), 4)
    p = dofmap.poro_p(nodes)
    dofs = np.concatenate([v, u, p], axis=1)
    return PoroBoundaryMassKernel(
        dofs,
        poro_mesh.nodes[nodes],
        state_old.poro_displacement[nodes],
        state_old.solid_velocity[nodes],
        params.phi0,
        theta,
        dt,
    )


def make_cip_poro_kernel(dofmap, poro_mesh, params, consts, displacement, dtt):
    """Jump stabilization on the current (deformed) configuration."""
    if len(poro_mesh.interior_faces) == 0:
        return None
    coords = poro_mesh.nodes + displacement
    fd = build_face_data(poro_mesh, np.arange(len(poro_mesh.interior_faces)),
                         coords=coords)
    return CipPoroKernel(fd, dofmap, consts, params, dtt)


# -- assembly surfaces ----------------------------------------------------------


def assemble_poro_weak(dofmap, state, state_old, poro_mesh, params, theta, dt):
    kernels = [
        make_poro_volume_kernel(dofmap, poro_mesh, params, state_old, theta, dt, state.t)
    ]
    bk = make_poro_boundary_mass_kernel(dofmap, poro_mesh, params, state_old, theta, dt)
    if bk is not None:
        kernels.append(bk)
    return assemble_residual(dofmap.n_dofs, kernels, state.u)


def assemble_cip_poro(dofmap, state, poro_mesh, params, consts, theta, dt):
    k = make_cip_poro_kernel(
        dofmap, poro_mesh, params, consts, state.poro_displacement, theta * dt
    )
    return assemble_residual(dofmap.n_dofs, [k] if k else [], state.u)
