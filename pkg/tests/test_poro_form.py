import numpy as np
import pytest

from fpicut.mesh import GAUSS4_POINTS, GAUSS4_WEIGHTS, build_structured_mesh, shape_gradients
from fpicut.mms import MmsCase, MmsParams
from fpicut.poro_form import (
    CONSTITUTIVE,
    PoroParams,
    assemble_cip_poro,
    assemble_poro_weak,
    kinematics,
    kozeny_carman,
    make_cip_poro_kernel,
    make_poro_boundary_mass_kernel,
    porosity,
    second_pk_stress,
    spatial_permeability,
)
from fpicut.system import AssemblyError, DofMap, State, assemble_jacobian, assemble_residual


def test_kinematics_reference_and_stretch():
    kin = kinematics(np.zeros((1, 2, 2)))
    assert np.allclose(kin.F[0], np.eye(2))
    assert kin.J[0] == 1.0
    assert np.allclose(kin.E[0], 0.0)

    g = np.array([[[0.1, 0.0], [0.0, 0.0]]])
    kin = kinematics(g)
    assert np.allclose(kin.F[0], np.diag([1.1, 1.0]))
    assert kin.J[0] == pytest.approx(1.1)
    assert kin.E[0, 0, 0] == pytest.approx(0.105)


def test_kinematics_rigid_rotation_objectivity():
    a = 0.3
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    kin = kinematics((R - np.eye(2))[None])
    assert np.allclose(kin.E[0], 0.0, atol=1e-14)
    assert kin.J[0] == pytest.approx(1.0)


def test_kinematics_inversion_rejected():
    g = np.array([[[-2.0, 0.0], [0.0, 0.0]]])
    with pytest.raises(AssemblyError, match="element inversion"):
        kinematics(g)


def test_second_pk_stress_reference_states():
    prm = PoroParams()
    kin = kinematics(np.zeros((1, 2, 2)))
    S = second_pk_stress(kin, np.array([0.0]), prm)
    assert np.allclose(S[0], 0.0)
    S = second_pk_stress(kin, np.array([3.7]), prm)
    assert np.allclose(S[0], -3.7 * np.eye(2))


def test_second_pk_stress_against_symbolic_oracle():
    import sympy as sp

    E_mod, nu = 1000.0, 0.3
    prm = PoroParams(youngs=E_mod, poisson=nu)
    F11, F12, F21, F22 = sp.symbols("F11 F12 F21 F22")
    F = sp.Matrix([[F11, F12], [F21, F22]])
    C = F.T * F
    J = F.det()
    c = E_mod / (4 * (1 + nu))
    beta = nu / (1 - 2 * nu)
    # plane strain: tr(F^T F) gains +1 from the unit out-of-plane stretch
    psi = c * (C.trace() + 1 - 3) + c / beta * (J ** (-2 * beta) - 1)
    # S = 2 dPsi/dC via E = (C - I)/2
    Csym = sp.Matrix([[sp.Symbol("C11"), sp.Symbol("C12")], [sp.Symbol("C12"), sp.Symbol("C22")]])
    Jc = sp.sqrt(Csym.det())
    psi_c = c * (Csym.trace() + 1 - 3) + c / beta * (Jc ** (-2 * beta) - 1)
    Svals = []
    for i in range(2):
        for j in range(2):
            d = sp.diff(psi_c, Csym[i, j])
            if i != j:
                d = d / 2  # C12 appears twice in the symmetric matrix
            Svals.append(2 * d)
    Fn = np.array([[1.1, 0.04], [-0.03, 0.97]])
    Cn = Fn.T @ Fn
    subs = {"C11": Cn[0, 0], "C12": Cn[0, 1], "C22": Cn[1, 1]}
    S_oracle = np.array([float(s.subs(subs)) for s in Svals]).reshape(2, 2)
    kin = kinematics((Fn - np.eye(2))[None])
    S = second_pk_stress(kin, np.array([0.0]), prm)[0]
    assert np.allclose(S, S_oracle, rtol=1e-10, atol=1e-10)


def test_porosity_closed_form():
    prm = PoroParams(porosity_mode=CONSTITUTIVE, phi0=0.5, kappa_p=100.0)
    assert porosity(np.array([1.0]), np.array([0.0]), prm)[0] == pytest.approx(0.5)
    assert porosity(np.array([1.0]), np.array([100.0]), prm)[0] == pytest.approx(2 / 3)
    assert porosity(np.array([2.0]), np.array([0.0]), prm)[0] == pytest.approx(0.75)
    for phi0 in (0.1, 0.33, 0.9):
        prm = PoroParams(porosity_mode=CONSTITUTIVE, phi0=phi0)
        assert porosity(np.array([1.0]), np.array([0.0]), prm)[0] == pytest.approx(phi0)


def test_kozeny_carman_values():
    prm = PoroParams(kozeny=True, k_ref=0.1, phi_ref=0.5)
    assert kozeny_carman(0.5, 1.0, prm) == pytest.approx(0.1)
    assert kozeny_carman(0.25, 1.0, prm) == pytest.approx(0.01)
    phis = np.array([0.3, 0.1, 0.01, 1e-4])
    ks = kozeny_carman(phis, 1.0, prm)
    assert np.all(np.diff(ks) < 0)
    with pytest.raises(AssemblyError, match="porosity saturation"):
        kozeny_carman(np.array([1.2]), 1.0, prm)


def test_spatial_permeability_pushforward():
    kin = kinematics(np.zeros((1, 2, 2)))
    k = spatial_permeability(kin, np.array([0.1]))
    assert np.allclose(k[0], 0.1 * np.eye(2))
    a = 0.7
    R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    kin = kinematics((R - np.eye(2))[None])
    k = spatial_permeability(kin, np.array([0.1]))
    assert np.allclose(k[0], 0.1 * np.eye(2))
    kin = kinematics(np.array([[[1.0, 0.0], [0.0, 0.0]]]))  # F = diag(2, 1)
    k = spatial_permeability(kin, np.array([0.1]))
    assert np.allclose(k[0], np.diag([0.2, 0.05]))
    # symmetry and positive definiteness for a generic deformation
    kin = kinematics(np.array([[[0.2, 0.1], [-0.05, -0.1]]]))
    k = spatial_permeability(kin, np.array([0.3]))[0]
    assert np.allclose(k, k.T)
    assert np.linalg.eigvalsh(k).min() > 0


def poro_setup(n=3, lx=1.0, ly=1.0):
    mesh = build_structured_mesh((0, 0), (lx, ly), n, n)
    dm = DofMap(0, mesh.n_nodes)
    return mesh, dm


def test_zero_state_zero_residual():
    mesh, dm = poro_setup()
    st = State(dm)
    r = assemble_poro_weak(dm, st, State(dm), mesh, PoroParams(), 1.0, 0.05)
    assert np.allclose(r, 0.0)


def test_internal_force_is_energy_gradient():
    # with zero pore pressure the assembled displacement rows equal the
    # gradient of the stored energy integral by central finite differences
    rng = np.random.default_rng(5)
    mesh, dm = poro_setup(n=2)
    prm = PoroParams()
    u = 0.05 * rng.standard_normal((mesh.n_nodes, 2))

    def energy(u_nodal):
        total = 0.0
        dN = shape_gradients(GAUSS4_POINTS)
        c, beta = prm.neo_c, prm.neo_beta
        for conn in mesh.elements:
            X = mesh.nodes[conn]
            for g in range(4):
                jac0 = np.einsum("ak,ai->ik", dN[g], X)
                det0 = np.linalg.det(jac0)
                G0 = dN[g] @ np.linalg.inv(jac0)
                F = np.eye(2) + np.einsum("ai,aj->ij", u_nodal[conn], G0)
                J = np.linalg.det(F)
                psi = c * (np.trace(F.T @ F) + 1 - 3) + c / beta * (J ** (-2 * beta) - 1)
                total += GAUSS4_WEIGHTS[g] * det0 * psi
        return total

    def residual_u(u_nodal):
        st = State(dm)
        old = State(dm)
        st.u[dm.poro_u(np.arange(mesh.n_nodes)).ravel()] = u_nodal.ravel()
        old.u[:] = st.u
        r = assemble_poro_weak(dm, st, old, mesh, prm, 1.0, 0.05)
        return r[dm.poro_u(np.arange(mesh.n_nodes)).ravel()]

    r = residual_u(u)
    eps = 1e-6
    for k in rng.choice(2 * mesh.n_nodes, 8, replace=False):
        up, um = u.copy().ravel(), u.copy().ravel()
        up[k] += eps
        um[k] -= eps
        g = (energy(up.reshape(-1, 2)) - energy(um.reshape(-1, 2))) / (2 * eps)
        assert g == pytest.approx(r[k], rel=1e-6, abs=1e-9)


def test_poro_cip_tau_hand_value():
    from fpicut.fluid_form import StabConstants

    # elements 0.06 x 0.08 give the face length scale h = 0.1 (diagonal)
    mesh = build_structured_mesh((0, 0), (0.12, 0.08), 2, 1)
    dm = DofMap(0, mesh.n_nodes)
    prm = PoroParams(mu_f=1.0, phi0=0.5, k0=0.1, rho_f=1.0)
    k = make_cip_poro_kernel(dm, mesh, prm, StabConstants(),
                             np.zeros((mesh.n_nodes, 2)), 0.05)
    assert k.fd["h"][0] == pytest.approx(0.1)
    phi_expect = 0.01 * (1.0 * 0.5 / 0.1 + (1 / 12) / 0.05)
    assert phi_expect == pytest.approx(0.0666667, abs=1e-6)
    assert k.tau_p[0] == pytest.approx(0.05 * 1e-3 / phi_expect)
    assert k.tau_p[0] == pytest.approx(7.5e-4, rel=1e-6)


def test_poro_cip_vanishes_for_linear_fields():
    from fpicut.fluid_form import StabConstants

    mesh, dm = poro_setup(n=3)
    st = State(dm)
    x = mesh.nodes
    ids = np.arange(mesh.n_nodes)
    st.u[dm.poro_v(ids).ravel()] = np.column_stack(
        [0.2 + x[:, 0], 0.1 - 0.5 * x[:, 1]]
    ).ravel()
    st.u[dm.poro_p(ids)] = 1.0 + 2.0 * x[:, 0] - 0.7 * x[:, 1]
    r = assemble_cip_poro(dm, st, mesh, PoroParams(), StabConstants(), 1.0, 0.05)
    assert np.abs(r).max() < 1e-13


def test_poro_cip_psd():
    from fpicut.fluid_form import StabConstants

    mesh, dm = poro_setup(n=2)
    k = make_cip_poro_kernel(dm, mesh, PoroParams(), StabConstants(),
                             np.zeros((mesh.n_nodes, 2)), 0.05)
    jac = assemble_jacobian(dm.n_dofs, [k], np.zeros(dm.n_dofs)).toarray()
    w = np.linalg.eigvalsh(0.5 * (jac + jac.T))
    assert w.min() > -1e-10


def test_boundary_mass_flux_single_element():
    mesh = build_structured_mesh((0, 0), (1, 1), 1, 1)
    dm = DofMap(0, mesh.n_nodes)
    st = State(dm)
    ids = np.arange(mesh.n_nodes)
    st.u[dm.poro_v(ids, 0)] = 1.0  # uniform horizontal seepage
    k = make_poro_boundary_mass_kernel(dm, mesh, PoroParams(phi0=0.5), State(dm),
                                       1.0, 0.05, interface_tags=())
    r = assemble_residual(dm.n_dofs, [k], st.u)
    rp = r[dm.poro_p(ids)]
    # net outflux integrates to zero; right-edge nodes gain, left-edge lose
    assert rp.sum() == pytest.approx(0.0, abs=1e-14)
    right = ids[np.isclose(mesh.nodes[:, 0], 1.0)]
    assert np.allclose(rp[right], 0.25)


def interior_ids(mesh):
    boundary = set()
    for _, a, b in mesh.boundary_edges:
        boundary.add(int(a))
        boundary.add(int(b))
    return np.array([i for i in range(mesh.n_nodes) if i not in boundary])


def test_poro_consistency_order_with_manufactured_fields():
    case = MmsCase(MmsParams())
    dt = 1e-4
    t = dt
    norms = []
    for n in (4, 8, 16):
        mesh = build_structured_mesh((-0.25, -0.25), (0.5, 0.5), n, n,
                                     rotation=np.pi / 6)
        dm = DofMap(0, mesh.n_nodes)
        prm = PoroParams(
            body_force_fluid=lambda x, tt: case.body_force_poro_fluid(
                case.current_position(x, tt), x, tt
            ),
            body_force_mixture=lambda X, tt: case.body_force_mixture(X, tt),
        )
        ids = np.arange(mesh.n_nodes)
        st = State(dm, t=t)
        X = mesh.nodes
        xc = case.current_position(X, t)
        st.u[dm.poro_v(ids).ravel()] = case.velocity_poro(xc, t).ravel()
        st.u[dm.poro_u(ids).ravel()] = case.displacement(X, t).ravel()
        st.u[dm.poro_p(ids)] = case.pressure(xc, t)
        old = State(dm)
        x0 = case.current_position(X, 0.0)
        old.u[dm.poro_v(ids).ravel()] = case.velocity_poro(x0, 0.0).ravel()
        old.u[dm.poro_u(ids).ravel()] = case.displacement(X, 0.0).ravel()
        old.u[dm.poro_p(ids)] = case.pressure(x0, 0.0)
        old.solid_velocity = case.displacement_rate(X, 0.0)
        r = assemble_poro_weak(dm, st, old, mesh, prm, 1.0, dt)
        ii = interior_ids(mesh)
        rows = np.concatenate(
            [dm.poro_v(ii).ravel(), dm.poro_u(ii).ravel(), dm.poro_p(ii)]
        )
        norms.append(np.linalg.norm(r[rows]))
    rates = np.log2(np.array(norms[:-1]) / np.array(norms[1:]))
    assert rates.min() > 0.9, (norms, rates)
