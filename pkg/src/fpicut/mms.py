"""Manufactured solution: analytic fields, forcing terms, interface jumps,
the rotated-square verification geometry, and error norms.

The analytic velocities share one divergence-free vortex pattern; pressure is
a cosine field.  The displacement is the time integral of the same pattern, so
at the initial time the interface mass balance holds with zero jump data.
All forcing and jump expressions are closed forms of the analytic fields and
are validated against numerical differentiation in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass
class MmsParams:
    """Amplitudes, space/time constants, and material data of the test case."""

    a_f: float = 0.1
    a_p: float = 0.21
    a_ps: float = -0.01
    b: float = 1.0
    c: float = 0.01
    rho_f: float = 1.0
    mu_f: float = 1.0
    permeability: float = 0.1
    phi0: float = 0.5
    youngs: float = 1000.0
    poisson: float = 0.3
    rho_s0: float = 1.0
    alpha_bj: float = 1.0
    beta_bj: float = 1.0

    @property
    def bhat(self):
        return self.b * np.pi

    @property
    def decay(self):
        """Rate constant of the temporal envelope."""
        return 2.0 * self.c**2 * np.pi**2 * self.mu_f / self.rho_f

    @property
    def neo_c(self):
        return self.youngs / (4.0 * (1.0 + self.poisson))

    @property
    def neo_beta(self):
        return self.poisson / (1.0 - 2.0 * self.poisson)

    def g_u(self, t):
        return np.exp(-self.decay * t)

    def g_p(self, t):
        return np.exp(-2.0 * self.decay * t)


def _pattern(x, bhat):
    """Divergence-free vortex pattern and its first spatial derivatives."""
    x = np.atleast_2d(x)
    sx, cx = np.sin(bhat * x[:, 0]), np.cos(bhat * x[:, 0])
    sy, cy = np.sin(bhat * x[:, 1]), np.cos(bhat * x[:, 1])
    p = np.stack([-cx * sy, sx * cy], axis=1)
    grad = np.empty((len(x), 2, 2))
    grad[:, 0, 0] = bhat * sx * sy
    grad[:, 0, 1] = -bhat * cx * cy
    grad[:, 1, 0] = bhat * cx * cy
    grad[:, 1, 1] = -bhat * sx * sy
    return p, grad


class MmsCase:
    """Closed-form evaluation of the manufactured solution and its forcing."""

    def __init__(self, params: MmsParams):
        self.p = params

    # -- primal fields ------------------------------------------------------

    def velocity_fluid(self, x, t):
        p, _ = _pattern(x, self.p.bhat)
        return self.p.a_f * self.p.g_u(t) * p

    def grad_velocity_fluid(self, x, t):
        _, g = _pattern(x, self.p.bhat)
        return self.p.a_f * self.p.g_u(t) * g

    def velocity_poro(self, x, t):
        p, _ = _pattern(x, self.p.bhat)
        return self.p.a_p * self.p.g_u(t) * p

    def grad_velocity_poro(self, x, t):
        _, g = _pattern(x, self.p.bhat)
        return self.p.a_p * self.p.g_u(t) * g

    def pressure(self, x, t):
        x = np.atleast_2d(x)
        tb = 2.0 * self.p.bhat
        return (
            -0.25
            * self.p.rho_f
            * self.p.g_p(t)
            * (np.cos(tb * x[:, 0]) + np.cos(tb * x[:, 1]))
        )

    def grad_pressure(self, x, t):
        x = np.atleast_2d(x)
        tb = 2.0 * self.p.bhat
        f = 0.25 * self.p.rho_f * self.p.g_p(t) * tb
        return np.stack([f * np.sin(tb * x[:, 0]), f * np.sin(tb * x[:, 1])], axis=1)

    def displacement(self, X, t):
        p, _ = _pattern(X, self.p.bhat)
        return self.p.a_ps * (1.0 - self.p.g_u(t)) / self.p.decay * p

    def displacement_rate(self, X, t):
        p, _ = _pattern(X, self.p.bhat)
        return self.p.a_ps * self.p.g_u(t) * p

    def displacement_accel(self, X, t):
        p, _ = _pattern(X, self.p.bhat)
        return -self.p.decay * self.p.a_ps * self.p.g_u(t) * p

    def grad_displacement(self, X, t):
        _, g = _pattern(X, self.p.bhat)
        return self.p.a_ps * (1.0 - self.p.g_u(t)) / self.p.decay * g

    def current_position(self, X, t):
        return np.atleast_2d(X) + self.displacement(X, t)

    # -- kinematics and stresses --------------------------------------------

    def deformation(self, X, t):
        """F, J, inverse F at material points."""
        F = self.grad_displacement(X, t)
        F[:, 0, 0] += 1.0
        F[:, 1, 1] += 1.0
        J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
        Finv = np.empty_like(F)
        Finv[:, 0, 0] = F[:, 1, 1] / J
        Finv[:, 1, 1] = F[:, 0, 0] / J
        Finv[:, 0, 1] = -F[:, 0, 1] / J
        Finv[:, 1, 0] = -F[:, 1, 0] / J
        return F, J, Finv

    def stress_fluid(self, x, t):
        g = self.grad_velocity_fluid(x, t)
        p = self.pressure(x, t)
        eps = 0.5 * (g + np.swapaxes(g, 1, 2))
        sig = 2.0 * self.p.mu_f * eps
        sig[:, 0, 0] -= p
        sig[:, 1, 1] -= p
        return sig

    def pk2_skeleton(self, X, t):
        """Second Piola-Kirchhoff stress of the skeleton energy (no pressure)."""
        F, J, Finv = self.deformation(X, t)
        c, beta = self.p.neo_c, self.p.neo_beta
        Cinv = np.einsum("nik,njk->nij", Finv, Finv)  # F^-1 F^-T
        S = -2.0 * c * (J ** (-2.0 * beta))[:, None, None] * Cinv
        S[:, 0, 0] += 2.0 * c
        S[:, 1, 1] += 2.0 * c
        return S, F, J, Finv

    def stress_poro_mixture(self, X, t):
        """Cauchy stress of the mixture, including the pore-pressure part."""
        S, F, J, _ = self.pk2_skeleton(X, t)
        sig = np.einsum("nik,nkl,njl->nij", F, S, F) / J[:, None, None]
        x = self.current_position(X, t)
        p = self.pressure(x, t)
        sig[:, 0, 0] -= p
        sig[:, 1, 1] -= p
        return sig

    def spatial_permeability_inv(self, X, t):
        """Inverse spatial permeability J F^-T K^-1 F^-1 at material points."""
        F, J, Finv = self.deformation(X, t)
        FiTFi = np.einsum("nki,nkj->nij", Finv, Finv)
        return (J / self.p.permeability)[:, None, None] * FiTFi

    def slip_coefficient(self, X, t):
        """Beavers-Joseph coefficient from the analytic deformation state."""
        F, J, _ = self.deformation(X, t)
        b = np.einsum("nik,njk->nij", F, F)
        k2 = (self.p.permeability / J)[:, None, None] * b
        tr3 = 1.5 * (k2[:, 0, 0] + k2[:, 1, 1])
        return np.sqrt(tr3) / (self.p.alpha_bj * self.p.mu_f * np.sqrt(3.0))

    # -- forcing --------------------------------------------------------------

    def body_force_fluid(self, x, t):
        """Momentum forcing rho*b of the free fluid, per unit volume."""
        p = self.p
        pat, grad = _pattern(x, p.bhat)
        gu = p.g_u(t)
        v = p.a_f * gu * pat
        gv = p.a_f * gu * grad
        dv_dt = -p.decay * p.a_f * gu * pat
        conv = np.einsum("nj,nij->ni", v, gv)
        lap = -2.0 * p.bhat**2 * v
        return p.rho_f * dv_dt + p.rho_f * conv + self.grad_pressure(x, t) - p.mu_f * lap

    def body_force_poro_fluid(self, x, X, t):
        """Momentum forcing rho*b of the pore fluid, per unit current volume.

        The material rate and the convective mesh-velocity correction combine
        into the spatial partial derivative, leaving a pure function of the
        evaluation points.
        """
        p = self.p
        pat, _ = _pattern(x, p.bhat)
        dv_dt = -p.decay * p.a_p * p.g_u(t) * pat
        kinv = self.spatial_permeability_inv(X, t)
        rel = self.velocity_poro(x, t) - self.displacement_rate(X, t)
        drag = p.mu_f * p.phi0 * np.einsum("nij,nj->ni", kinv, rel)
        return p.rho_f * dv_dt + self.grad_pressure(x, t) + drag

    def _hessian_displacement(self, X, t):
        """Second material derivatives H[n,i,j,k] = d^2 u_i / dX_j dX_k."""
        X = np.atleast_2d(X)
        u = self.displacement(X, t)
        bh2 = self.p.bhat**2
        H = np.empty((len(X), 2, 2, 2))
        H[:, 0, 0, 0] = -bh2 * u[:, 0]
        H[:, 0, 1, 1] = -bh2 * u[:, 0]
        H[:, 0, 0, 1] = H[:, 0, 1, 0] = bh2 * u[:, 1]
        H[:, 1, 0, 0] = -bh2 * u[:, 1]
        H[:, 1, 1, 1] = -bh2 * u[:, 1]
        H[:, 1, 0, 1] = H[:, 1, 1, 0] = bh2 * u[:, 0]
        return H

    def div_skeleton_stress(self, X, t):
        """Material divergence of F*S for the skeleton energy, closed form."""
        c, beta = self.p.neo_c, self.p.neo_beta
        F, J, Finv = self.deformation(X, t)
        H = self._hessian_displacement(X, t)
        lap_u = H[:, :, 0, 0] + H[:, :, 1, 1]
        Jm2b = J ** (-2.0 * beta)
        # d_j J = J * Finv_lk H_klj ; G = F^-T
        dJ = np.einsum("n,nlk,nklj->nj", J, Finv, H)
        # d_j G_ij = -(Finv_jk H_klj Finv_li)
        dG = -np.einsum("njk,nklj,nli->ni", Finv, H, Finv)
        G = np.swapaxes(Finv, 1, 2)
        term = (
            -2.0 * beta * (Jm2b / J)[:, None] * np.einsum("nj,nij->ni", dJ, G)
            + Jm2b[:, None] * dG
        )
        return 2.0 * c * lap_u - 2.0 * c * term

    def body_force_mixture(self, X, t):
        """Momentum forcing of the mixture, per unit reference volume."""
        p = self.p
        rho_tilde = (1.0 - p.phi0) * p.rho_s0
        x = self.current_position(X, t)
        _, J, _ = self.deformation(X, t)
        kinv = self.spatial_permeability_inv(X, t)
        rel = self.velocity_poro(x, t) - self.displacement_rate(X, t)
        drag = p.mu_f * J[:, None] * p.phi0**2 * np.einsum("nij,nj->ni", kinv, rel)
        return (
            rho_tilde * self.displacement_accel(X, t)
            - self.div_skeleton_stress(X, t)
            + (1.0 - p.phi0) * J[:, None] * self.grad_pressure(x, t)
            - drag
        )

    # -- interface data ---------------------------------------------------------

    def traction_fluid(self, x, t, n):
        sig = self.stress_fluid(x, t)
        return np.einsum("nij,nj->ni", sig, np.atleast_2d(n))

    def interface_jumps(self, x, X, t, n):
        """Traction and constraint jumps (g_sigma, g_sigma_n, g_n, g_t).

        ``n`` is the discrete outward fluid normal at each point.  The
        traction jump uses the full mixture stress so the interface terms of
        the weak form stay consistent with the analytic solution.
        """
        x = np.atleast_2d(x)
        X = np.atleast_2d(X)
        n = np.atleast_2d(n)
        sig_f = self.stress_fluid(x, t)
        t_f = np.einsum("nij,nj->ni", sig_f, n)
        sig_p = self.stress_poro_mixture(X, t)
        t_p = np.einsum("nij,nj->ni", sig_p, n)
        g_sigma = t_f - t_p
        g_sigma_n = np.einsum("ni,ni->n", n, t_f) + self.pressure(x, t)
        udot = self.displacement_rate(X, t)
        rel = self.velocity_poro(x, t) - udot
        vf = self.velocity_fluid(x, t)
        g_n = vf - udot - self.p.phi0 * rel
        kappa = self.slip_coefficient(X, t)
        g_t = vf - udot - self.p.beta_bj * self.p.phi0 * rel + kappa[:, None] * t_f
        return g_sigma, g_sigma_n, g_n, g_t


# -- verification geometry -----------------------------------------------------

EX1_CUT_OFFSET = -0.45
EX1_FLUID_ANGLE = np.pi / 4
EX1_PORO_ANGLE = np.pi / 6


def build_example1_meshes(h):
    """Background fluid grid, fitted poroelastic grid, and the fixed cut line.

    The fluid square (side 1, rotated 45 degrees) and the poroelastic square
    (side 0.5, rotated 30 degrees) are concentric at the origin; a vertical
    line at x = -0.45 truncates the fluid square.
    """
    from .cutgeom import make_cut_line
    from .mesh import build_structured_mesh

    n = round(1.0 / h)
    n_poro = round(0.5 / h)
    if abs(n * h - 1.0) > 1e-12 or abs(n_poro * h - 0.5) > 1e-12 or n_poro < 1:
        raise ValueError(f"mesh size {h} does not tile the verification geometry")
    bg = build_structured_mesh((-0.5, -0.5), (1.0, 1.0), n, n, rotation=EX1_FLUID_ANGLE)
    poro = build_structured_mesh(
        (-0.25, -0.25), (0.5, 0.5), n_poro, n_poro, rotation=EX1_PORO_ANGLE
    )
    cut = make_cut_line((EX1_CUT_OFFSET, -2.0), (EX1_CUT_OFFSET, 2.0), (1.0, 0.0))
    return bg, poro, cut


@dataclass
class ErrorReport:
    """Domain, interface, and constraint error norms at one time."""

    h: float
    t: float
    vel_f_l2: float
    pres_f_l2: float
    grad_vel_f_l2: float
    vel_p_l2: float
    pres_p_l2: float
    disp_l2: float
    grad_disp_l2: float
    pres_f_iface: float
    grad_vel_f_n_iface: float
    pres_p_iface: float
    grad_disp_n_iface: float
    err_normal: float
    err_tangential: float

    NORM_FIELDS = (
        "vel_f_l2",
        "pres_f_l2",
        "grad_vel_f_l2",
        "vel_p_l2",
        "pres_p_l2",
        "disp_l2",
        "grad_disp_l2",
        "pres_f_iface",
        "grad_vel_f_n_iface",
        "pres_p_iface",
        "grad_disp_n_iface",
        "err_normal",
        "err_tangential",
    )

    def as_dict(self):
        d = {"h": self.h, "t": self.t}
        d.update({k: getattr(self, k) for k in self.NORM_FIELDS})
        return d
