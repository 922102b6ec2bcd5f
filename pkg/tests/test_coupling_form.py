import numpy as np
import pytest

from fpicut.coupling_form import (
    CouplingError,
    NitscheConfig,
    interface_penalty_scaling,
    make_interface_kernel,
    slip_coefficient,
    tangential_prefactors,
)
from fpicut.cutgeom import classify_and_cut, extract_interface
from fpicut.fluid_form import FluidParams, StabConstants
from fpicut.mesh import build_structured_mesh
from fpicut.poro_form import PoroParams
from fpicut.system import DofMap, State, assemble_jacobian, assemble_residual


def test_slip_coefficient_values():
    k = 0.1 * np.eye(2)
    assert slip_coefficient(k, 1.0, 1.0)[0] == pytest.approx(np.sqrt(0.1))
    assert slip_coefficient(k, 1.0, 10.0)[0] == pytest.approx(np.sqrt(0.1) / 10.0)
    assert slip_coefficient(k, 1.0, 1e12)[0] == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        slip_coefficient(k, 1.0, 0.0)
    with pytest.raises(ValueError):
        slip_coefficient(k, 1.0, -2.0)


def test_interface_penalty_scaling_and_prefactor():
    phi_g = interface_penalty_scaling(StabConstants(), rho=1.0, mu=1.0, vinf=0.0,
                                      h_gamma=0.1, dtt=0.05)
    assert phi_g == pytest.approx(1.0 + 0.01 * (1 / 12) / 0.05)
    assert phi_g == pytest.approx(1.016667, abs=1e-6)
    assert 45.0 * phi_g / 0.1 == pytest.approx(457.5, rel=1e-6)


def test_tangential_prefactors_hand_values():
    # kappa*mu = 1, gamma_t*h = 0.1
    c_adj, c_pen = tangential_prefactors(kappa=1.0, mu=1.0, gamma_t=1.0, h_gamma=0.1)
    assert c_pen == pytest.approx(1.0 / 1.1)
    assert c_adj == pytest.approx(0.1 / 1.1)
    # kappa = 0 reduces to the plain tangential penalty mu / (gamma_t h)
    _, c_pen0 = tangential_prefactors(0.0, 1.0, 1.0, 0.1)
    assert c_pen0 == pytest.approx(10.0)


def coupled_setup(method="nitsche", k0=0.1, n_bg=4, gamma_t=1.0 / 45.0,
                  zeta=-1.0, beta_bj=1.0):
    """Small embedded square: poro 1x1 grid inside a background grid."""
    bg = build_structured_mesh((0, 0), (1, 1), n_bg, n_bg)
    poro = build_structured_mesh((0.31, 0.33), (0.37, 0.35), 2, 2)
    dm = DofMap(bg.n_nodes, poro.n_nodes)
    poly = extract_interface(poro, np.zeros((poro.n_nodes, 2)))
    topo = classify_and_cut(bg, [poly])
    cfg = NitscheConfig(gamma_t=gamma_t, zeta=zeta, tangential_method=method,
                        beta_bj=beta_bj)
    prm_p = PoroParams(k0=k0)
    prm_f = FluidParams()
    return bg, poro, dm, topo, cfg, prm_f, prm_p


def build_kernel(setup, state, state_old, include_normal=True,
                 include_tangential=True, theta=1.0, dt=0.05):
    bg, poro, dm, topo, cfg, prm_f, prm_p = setup
    return make_interface_kernel(
        dm, topo, poro, prm_f, prm_p, StabConstants(), cfg, state_old, state,
        None, theta, dt, state.t, include_normal=include_normal,
        include_tangential=include_tangential,
    )


def test_constraint_satisfying_state_gives_zero_residual():
    # constant common velocity: every interface bracket and the fluid stress
    # vanish, so all coupling terms drop
    setup = coupled_setup()
    bg, poro, dm, topo, cfg, _, _ = setup
    dt = 0.05
    v0 = np.array([0.4, -0.7])
    st = State(dm, t=dt)
    old = State(dm)
    ids_bg = np.arange(bg.n_nodes)
    ids_po = np.arange(poro.n_nodes)
    st.u[dm.fluid_v(ids_bg).ravel()] = np.tile(v0, bg.n_nodes)
    st.u[dm.poro_v(ids_po).ravel()] = np.tile(v0, poro.n_nodes)
    st.u[dm.poro_u(ids_po).ravel()] = np.tile(v0 * dt, poro.n_nodes)
    k = build_kernel(setup, st, old)
    r = assemble_residual(dm.n_dofs, [k], st.u)
    assert np.abs(r).max() < 1e-12


def test_projector_completeness_of_consistency_terms():
    # brackets vanish but the fluid stress does not: what remains are the
    # consistency terms, whose normal and tangential projections must combine
    # to the unprojected traction exchange
    setup = coupled_setup()
    bg, poro, dm, topo, cfg, _, _ = setup
    dt = 0.05
    rng = np.random.default_rng(7)
    st = State(dm, t=dt)
    old = State(dm)
    # linear-in-y horizontal fluid velocity, matched on the poro boundary
    grad = np.array([[0.0, 0.8], [0.0, 0.0]])
    vf = bg.nodes @ grad.T
    st.u[dm.fluid_v(np.arange(bg.n_nodes)).ravel()] = vf.ravel()
    vp = poro.nodes @ grad.T
    st.u[dm.poro_v(np.arange(poro.n_nodes)).ravel()] = vp.ravel()
    st.u[dm.poro_u(np.arange(poro.n_nodes)).ravel()] = (dt * vp).ravel()
    both = assemble_residual(dm.n_dofs, [build_kernel(setup, st, old)], st.u)

    # independently assembled unprojected exchange
    sel = np.nonzero(topo.i_active & (topo.i_kind == 0))[0]
    w = topo.i_w[sel]
    nrm = topo.i_n[sel]
    mu = 1.0
    eps = 0.5 * (grad + grad.T)
    tsig = (2.0 * mu * eps @ nrm.T).T
    expect = np.zeros(dm.n_dofs)
    from fpicut.mesh import shape_values

    Nf = shape_values(topo.i_xi[sel])
    conn_f = bg.elements[topo.i_elem[sel]]
    pe = topo.i_parent_edge[sel]
    s = topo.i_edge_s[sel]
    edges = poro.boundary_edges[pe]
    M = np.stack([0.5 * (1 - s), 0.5 * (1 + s)], axis=1)
    tsn = np.einsum("ni,ni->n", tsig, nrm)
    for k in range(len(sel)):
        expect[dm.fluid_v(conn_f[k]).ravel()] -= (
            w[k] * np.outer(Nf[k], tsig[k])
        ).ravel()
        expect[dm.poro_u(edges[k, 1:]).ravel()] += (
            w[k] * np.outer(M[k], tsig[k])
        ).ravel()
        expect[dm.poro_v(edges[k, 1:]).ravel()] += (
            w[k] * np.outer(M[k], tsn[k] * nrm[k])
        ).ravel()
    assert np.allclose(both, expect, atol=1e-12)


def test_tangential_psd_for_adjoint_inconsistent_variant():
    # restricted to the fluid trace, consistency + adjoint + penalty of the
    # tangential terms form a positive semi-definite operator when zeta = -1
    for k0 in (1e-6, 0.1, 10.0):
        setup = coupled_setup(k0=k0, gamma_t=1.0 / 45.0)
        bg, poro, dm, topo, cfg, _, _ = setup
        st = State(dm, t=0.05)
        kern = build_kernel(setup, st, State(dm), include_normal=False)
        jac = assemble_jacobian(dm.n_dofs, [kern], st.u).toarray()
        nf = 3 * bg.n_nodes
        block = jac[:nf, :nf]
        w = np.linalg.eigvalsh(0.5 * (block + block.T))
        assert w.min() > -1e-8, (k0, w.min())


def test_substitution_rejected_at_zero_permeability():
    setup = coupled_setup(method="substitution")
    bg, poro, dm, topo, cfg, prm_f, prm_p = setup
    prm_p = PoroParams(k0=1e-300)
    st = State(dm, t=0.05)
    with pytest.raises((CouplingError, FloatingPointError, ValueError)):
        with np.errstate(invalid="raise"):
            k = make_interface_kernel(
                dm, topo, poro, prm_f, prm_p, StabConstants(), cfg, State(dm),
                st, None, 1.0, 0.05, st.t,
            )
            r = assemble_residual(dm.n_dofs, [k], st.u)
            if not np.isfinite(r).all():
                raise ValueError("non-finite residual")


def test_substitution_and_nitsche_agree_as_gamma_t_vanishes():
    rng = np.random.default_rng(11)
    diffs = []
    for gamma_t in (1e-2, 1e-4, 1e-6):
        setups = [
            coupled_setup(method=m, gamma_t=max(gamma_t, 1e-12))
            for m in ("substitution", "nitsche")
        ]
        bg, poro, dm, topo, _, _, _ = setups[0]
        st = State(dm, t=0.05)
        st.u = rng.standard_normal(dm.n_dofs) * 0.1
        old = State(dm)
        rs = []
        for setup in setups:
            kern = build_kernel(setup, st, old, include_normal=False)
            rs.append(assemble_residual(dm.n_dofs, [kern], st.u))
        diffs.append(np.linalg.norm(rs[0] - rs[1]))
    assert diffs[1] < 0.02 * diffs[0]
    assert diffs[2] < 0.02 * diffs[1]


def test_normal_forces_parallel_to_interface_normal():
    # all assembled normal-coupling nodal forces on velocity/displacement
    # blocks align with the (axis-aligned) interface normals
    setup = coupled_setup()
    bg, poro, dm, topo, cfg, _, _ = setup
    rng = np.random.default_rng(3)
    st = State(dm, t=0.05)
    st.u = 0.1 * rng.standard_normal(dm.n_dofs)
    kern = build_kernel(setup, st, State(dm), include_tangential=False)
    r = assemble_residual(dm.n_dofs, [kern], st.u)
    # poro boundary is axis-aligned: each poro boundary node force must be
    # axis-aligned too (corner nodes see two orthogonal segments, skip them)
    edges = poro.boundary_edges
    counts = np.bincount(edges[:, 1:].ravel(), minlength=poro.n_nodes)
    for node in np.nonzero(counts == 2)[0]:
        # nodes interior to one straight side: both adjacent segments share
        # the normal direction
        segs = edges[(edges[:, 1] == node) | (edges[:, 2] == node)]
        p = poro.nodes[segs[:, 1:]]
        tang = p[:, 1] - p[:, 0]
        if not np.allclose(np.abs(tang / np.linalg.norm(tang, axis=1, keepdims=True)),
                           np.abs(tang[0]) / np.linalg.norm(tang[0])):
            continue
        n_dir = np.array([tang[0, 1], -tang[0, 0]]) / np.linalg.norm(tang[0])
        for block in (dm.poro_v, dm.poro_u):
            f = r[block(np.array([node])).ravel()]
            tangential_part = f @ np.array([-n_dir[1], n_dir[0]])
            assert abs(tangential_part) < 1e-12 * max(1.0, np.abs(f).max())
