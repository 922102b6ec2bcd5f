"""Interface coupling on the embedded fluid-poroelastic boundary: Nitsche
enforcement of the normal mass balance, and the tangential Beavers-Joseph
condition either substituted as a Robin term or enforced by a penalty-robust
Nitsche variant."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import REF_CORNERS, shape_gradients, shape_values
from .poro_form import kinematics, kozeny_carman, porosity
from .system import Kernel, assemble_residual

SUBSTITUTION, NITSCHE = "substitution", "nitsche"


class CouplingError(Exception):
    pass


@dataclass
class NitscheConfig:
    """Interface-enforcement parameters.

    ``gamma_n``/``gamma_t`` are the penalty constants (the studies sweep their
    inverses), ``zeta`` the adjoint sign, ``beta_bj`` selects the full
    Beavers-Joseph law (1) or its Saffman simplification (0).
    """

    gamma_n: float = 1.0 / 45.0
    gamma_t: float = 1.0 / 45.0
    zeta: float = -1.0
    tangential_method: str = NITSCHE
    beta_bj: float = 1.0
    alpha_bj: float = 1.0

    def __post_init__(self):
        if self.gamma_n <= 0 or self.gamma_t <= 0:
            raise ValueError("penalty constants must be positive")
        if self.zeta not in (-1.0, 1.0, -1, 1):
            raise ValueError("adjoint flag must be +1 or -1")
        if self.tangential_method not in (SUBSTITUTION, NITSCHE):
            raise ValueError(f"unknown tangential method {self.tangential_method!r}")


@dataclass
class JumpData:
    """Optional manufactured interface jumps; absent callables mean zero."""

    traction: object = None  # (x, X, t, n) -> (n, 2)
    traction_normal: object = None  # (x, X, t, n) -> (n,)
    mass: object = None  # (x, X, t, n) -> (n, 2)
    slip: object = None  # (x, X, t, n) -> (n, 2)

    def evaluate(self, x, X, t, n):
        k = len(x)
        z2 = np.zeros((k, 2))
        g_s = self.traction(x, X, t, n) if self.traction else z2
        g_sn = self.traction_normal(x, X, t, n) if self.traction_normal else np.zeros(k)
        g_n = self.mass(x, X, t, n) if self.mass else z2
        g_t = self.slip(x, X, t, n) if self.slip else z2
        return g_s, g_sn, g_n, g_t


def interface_penalty_scaling(consts, rho, mu, vinf, h_gamma, dtt):
    """Velocity- and step-size-aware scaling of the normal penalty."""
    return (
        mu
        + h_gamma * consts.c_v_gamma * rho * vinf
        + h_gamma**2 * consts.c_t_gamma * rho / dtt
    )


def tangential_prefactors(kappa, mu, gamma_t, h_gamma):
    """Adjoint and penalty prefactors of the tangential Nitsche variant
    (the adjoint one still carries the sign flag)."""
    denom = kappa * mu + gamma_t * h_gamma
    return gamma_t * h_gamma / denom, mu / denom
    """Beavers-Joseph slip length from the spatial permeability.

    Uses the plane-isotropic embedding tr3 = 1.5 tr2, which reduces to
    sqrt(k)/(alpha mu) for isotropic k.
    """
    if alpha_bj <= 0:
        raise ValueError("alpha_bj must be positive")
    k = np.asarray(k, dtype=float)
    if k.ndim == 2:
        k = k[None]
    tr3 = 1.5 * (k[:, 0, 0] + k[:, 1, 1])
    return np.sqrt(tr3) / (alpha_bj * mu * np.sqrt(3.0))


class InterfaceKernel(Kernel):
    """Nitsche coupling terms at a batch of interface quadrature points.

    The interface geometry, porosity, and slip coefficient are frozen per
    nonlinear iteration; the fluid stress, the kinematic brackets, and the
    velocity-dependent penalty scaling follow the unknowns.
    """

    def __init__(self, dofs, aux, fluid_mu, fluid_rho, consts, config,
                 theta, dt, include_normal=True, include_tangential=True):
        super().__init__(dofs)
        self.a = aux
        self.mu = fluid_mu
        self.rho = fluid_rho
        self.consts = consts
        self.cfg = config
        self.theta = theta
        self.dtt = theta * dt
        self.include_normal = include_normal
        self.include_tangential = include_tangential

    def residual(self, uloc):
        n = len(uloc)
        a = self.a
        cfg = self.cfg
        mu = self.mu
        v_f = uloc[:, :8].reshape(n, 4, 2)
        p_f = uloc[:, 8:12]
        v_p = uloc[:, 12:16].reshape(n, 2, 2)
        u_p = uloc[:, 16:20].reshape(n, 2, 2)
        Nf, Gf, M = a["Nf"], a["Gf"], a["M"]
        nrm, w, h = a["n"], a["w"], a["h_gamma"]
        phi = a["phi"]
        kappa = a["kappa"]

        omega = (1.0 - self.theta) / self.theta
        udot_n = (u_p - a["u_old"]) / self.dtt - omega * a["vs_old"]
        vF = np.einsum("na,nai->ni", Nf, v_f)
        gvF = np.einsum("nai,naj->nij", v_f, Gf)
        pF = np.einsum("na,na->n", Nf, p_f)
        tsig = mu * np.einsum("nij,nj->ni", gvF + np.swapaxes(gvF, 1, 2), nrm)
        tsig -= pF[:, None] * nrm
        vP = np.einsum("a,nai->ni", M, v_p)
        udot = np.einsum("a,nai->ni", M, udot_n)
        Gdn = np.einsum("nai,ni->na", Gf, nrm)
        tsn = np.einsum("ni,ni->n", tsig, nrm)

        r_vf = np.zeros((n, 4, 2))
        r_pf = np.zeros((n, 4))
        r_vp = np.zeros((n, 2, 2))
        r_up = np.zeros((n, 2, 2))

        if self.include_normal:
            Bn = vF - udot - phi[:, None] * (vP - udot) - a["g_n"]
            bn = np.einsum("ni,ni->n", Bn, nrm)
            vinf = np.abs(vF).max(axis=1)
            phi_g = interface_penalty_scaling(self.consts, self.rho, mu, vinf, h, self.dtt)
            cpen = phi_g / (cfg.gamma_n * h)
            gsn_dot = a["g_sigma_n"]
            gs_n = np.einsum("ni,ni->n", a["g_sigma"], nrm)
            r_vf += np.einsum("n,na,ni->nai", w * (cpen * bn - tsn), Nf, nrm)
            r_vf -= np.einsum("n,na,ni->nai", w * cfg.zeta * 2.0 * mu * bn, Gdn, nrm)
            r_pf -= np.einsum("n,na->na", w * bn, Nf)
            r_vp += np.einsum("n,a,ni->nai", w * (tsn - gsn_dot - cpen * bn), M, nrm)
            r_up += np.einsum("n,a,ni->nai", w * (tsn - gs_n - cpen * bn), M, nrm)

        if self.include_tangential:
            tsig_t = tsig - tsn[:, None] * nrm
            gst = a["g_sigma"] - np.einsum("ni,ni->n", a["g_sigma"], nrm)[:, None] * nrm
            kin_bracket = vF - udot - cfg.beta_bj * phi[:, None] * (vP - udot) - a["g_t"]
            if cfg.tangential_method == SUBSTITUTION:
                Bt = kin_bracket
                Btt = Bt - np.einsum("ni,ni->n", Bt, nrm)[:, None] * nrm
                inv_kappa = 1.0 / kappa
                r_vf += np.einsum("n,na,ni->nai", w * inv_kappa, Nf, Btt)
                r_up -= np.einsum("n,a,ni->nai", w * inv_kappa, M, Btt)
                r_up -= np.einsum("n,a,ni->nai", w, M, gst)
            else:
                Bt = kin_bracket + kappa[:, None] * tsig
                Btt = Bt - np.einsum("ni,ni->n", Bt, nrm)[:, None] * nrm
                c_adj, c_pen = tangential_prefactors(kappa, mu, cfg.gamma_t, h)
                c_adj = cfg.zeta * c_adj
                r_up += np.einsum("n,a,ni->nai", w, M, tsig_t - gst)
                r_up -= np.einsum("n,a,ni->nai", w * c_pen, M, Btt)
                r_vf -= np.einsum("n,na,ni->nai", w, Nf, tsig_t)
                r_vf -= np.einsum("n,na,ni->nai", w * c_adj * mu, Gdn, Btt)
                r_vf -= np.einsum(
                    "n,na,ni->nai", w * c_adj * mu, np.einsum("nai,ni->na", Gf, Btt), nrm
                )
                r_vf += np.einsum("n,na,ni->nai", w * c_pen, Nf, Btt)

        return np.concatenate(
            [r_vf.reshape(n, 8), r_pf, r_vp.reshape(n, 4), r_up.reshape(n, 4)], axis=1
        )


def interface_coefficients(topology, poro_mesh, params, alpha_bj, u_frozen,
                           p_frozen, sel):
    """Porosity and slip coefficient at interface points, from a frozen state."""
    pe = topology.i_parent_edge[sel]
    s = topology.i_edge_s[sel]
    edges = poro_mesh.boundary_edges[pe]
    elems = edges[:, 0]
    conn = poro_mesh.elements[elems]
    # element-local coordinates of the edge points
    la = np.argmax(conn == edges[:, 1][:, None], axis=1)
    lb = np.argmax(conn == edges[:, 2][:, None], axis=1)
    xi = (
        0.5 * (1.0 - s)[:, None] * REF_CORNERS[la]
        + 0.5 * (1.0 + s)[:, None] * REF_CORNERS[lb]
    )
    dN = shape_gradients(xi)
    Xc = poro_mesh.nodes[conn]
    jac0 = np.einsum("nak,nai->nik", dN, Xc)
    G0 = np.einsum("nak,nki->nai", dN, np.linalg.inv(jac0))
    kin = kinematics(np.einsum("nai,naj->nij", u_frozen[conn], G0))
    N = shape_values(xi)
    p_pt = np.einsum("na,na->n", N, p_frozen[conn])
    phi = porosity(kin.J, p_pt, params)
    if params.kozeny:
        K = kozeny_carman(phi, kin.J, params)
    else:
        K = np.broadcast_to(params.k0, kin.J.shape)
    b = np.einsum("nik,njk->nij", kin.F, kin.F)
    k2 = (K / kin.J)[:, None, None] * b
    kappa = slip_coefficient(k2, params.mu_f, alpha_bj)
    return phi, kappa


def make_interface_kernel(dofmap, topology, poro_mesh, fluid_params, poro_params,
                          consts, config, state_old, frozen_state, jump_data,
                          theta, dt, t, include_normal=True,
                          include_tangential=True):
    """Coupling kernel over the active embedded-interface points."""
    sel = np.nonzero(topology.i_active & (topology.i_kind == 0))[0]
    if len(sel) == 0:
        return None
    mesh = topology.mesh
    elems = topology.i_elem[sel]
    conn_f = mesh.elements[elems]
    N = shape_values(topology.i_xi[sel])
    dN = shape_gradients(topology.i_xi[sel])
    coords = mesh.nodes[conn_f]
    jac = np.einsum("nak,nai->nik", dN, coords)
    Gf = np.einsum("nak,nki->nai", dN, np.linalg.inv(jac))

    pe = topology.i_parent_edge[sel]
    s = topology.i_edge_s[sel]
    edges = poro_mesh.boundary_edges[pe]
    edge_nodes = edges[:, 1:]
    M = np.stack([0.5 * (1.0 - s), 0.5 * (1.0 + s)], axis=1)

    phi, kappa = interface_coefficients(
        topology, poro_mesh, poro_params, config.alpha_bj,
        frozen_state.poro_displacement, frozen_state.poro_pressure, sel,
    )
    if config.tangential_method == SUBSTITUTION and np.any(kappa <= 0.0):
        raise CouplingError("substitution method undefined at no-slip limit")

    x = topology.i_x[sel]
    nrm = topology.i_n[sel]
    X = np.einsum("na,nai->ni", M, poro_mesh.nodes[edge_nodes])
    if jump_data is not None:
        g_s, g_sn, g_n, g_t = jump_data.evaluate(x, X, t, nrm)
    else:
        g_s = np.zeros((len(sel), 2))
        g_sn = np.zeros(len(sel))
        g_n = np.zeros((len(sel), 2))
        g_t = np.zeros((len(sel), 2))

    aux = {
        "Nf": N,
        "Gf": Gf,
        "M": M,
        "n": nrm,
        "w": topology.i_w[sel],
        "h_gamma": topology.h_gamma[elems],
        "phi": phi,
        "kappa": kappa,
        "u_old": state_old.poro_displacement[edge_nodes],
        "vs_old": state_old.solid_velocity[edge_nodes],
        "g_sigma": g_s,
        "g_sigma_n": g_sn,
        "g_n": g_n,
        "g_t": g_t,
    }
    dofs = np.concatenate(
        [
            dofmap.fluid_v(conn_f).reshape(-1, 8),
            dofmap.fluid_p(conn_f),
            dofmap.poro_v(edge_nodes).reshape(-1, 4),
            dofmap.poro_u(edge_nodes).reshape(-1, 4),
        ],
        axis=1,
    )
    return InterfaceKernel(
        dofs, aux, fluid_params.mu, fluid_params.rho, consts, config, theta, dt,
        include_normal=include_normal, include_tangential=include_tangential,
    )


def assemble_nitsche_normal(dofmap, state, state_old, topology, poro_mesh,
                            fluid_params, poro_params, consts, config,
                            jump_data, theta, dt):
    k = make_interface_kernel(
        dofmap, topology, poro_mesh, fluid_params, poro_params, consts, config,
        state_old, state, jump_data, theta, dt, state.t,
        include_tangential=False,
    )
    return assemble_residual(dofmap.n_dofs, [k] if k else [], state.u)


def assemble_tangential_substitution(dofmap, state, state_old, topology,
                                     poro_mesh, fluid_params, poro_params,
                                     consts, config, jump_data, theta, dt):
    cfg = NitscheConfig(
        gamma_n=config.gamma_n, gamma_t=config.gamma_t, zeta=config.zeta,
        tangential_method=SUBSTITUTION, beta_bj=config.beta_bj,
        alpha_bj=config.alpha_bj,
    )
    k = make_interface_kernel(
        dofmap, topology, poro_mesh, fluid_params, poro_params, consts, cfg,
        state_old, state, jump_data, theta, dt, state.t,
        include_normal=False,
    )
    return assemble_residual(dofmap.n_dofs, [k] if k else [], state.u)


def assemble_tangential_nitsche(dofmap, state, state_old, topology, poro_mesh,
                                fluid_params, poro_params, consts, config,
                                jump_data, theta, dt):
    cfg = NitscheConfig(
        gamma_n=config.gamma_n, gamma_t=config.gamma_t, zeta=config.zeta,
        tangential_method=NITSCHE, beta_bj=config.beta_bj,
        alpha_bj=config.alpha_bj,
    )
    k = make_interface_kernel(
        dofmap, topology, poro_mesh, fluid_params, poro_params, consts, cfg,
        state_old, state, jump_data, theta, dt, state.t,
        include_normal=False,
    )
    return assemble_residual(dofmap.n_dofs, [k] if k else [], state.u)
