"""Monolithic time stepping: one-step-theta discretization, Newton iterations
with per-iteration re-cutting of the background mesh, ghost-extension
reconstruction of newly active unknowns, and a sparse direct linear solve.

The tangent freezes the cut geometry and the interface coefficients at the
current iterate; within that approximation two tangent modes are available,
per-entity finite differences assembled sparsely (default) and a graph-colored
finite difference of the full residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from .cutgeom import classify_and_cut, extract_interface
from .coupling_form import make_interface_kernel
from .fluid_form import (
    make_cip_fluid_kernel,
    make_fluid_neumann_kernel,
    make_fluid_volume_kernels,
    make_ghost_penalty_kernel,
)
from .mesh import inverse_map_batch, shape_values
from .poro_form import (
    make_cip_poro_kernel,
    make_poro_boundary_mass_kernel,
    make_poro_volume_kernel,
)
from .system import (
    AssemblyError,
    DofMap,
    State,
    apply_constraints,
    assemble_jacobian,
    assemble_jacobian_colored,
    assemble_residual,
    color_columns,
    jacobian_sparsity,
)

ASSEMBLED, COLORED = "assembled", "colored"


class SolverError(Exception):
    pass


class NonlinearDivergenceError(SolverError):
    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history or []


@dataclass
class SolverConfig:
    """Time integrator and Newton settings.

    theta < 1 scales the reactive stabilization weights and the discrete time
    derivatives; spatial terms are always evaluated at the new time level.
    """

    theta: float = 1.0
    dt: float = 0.05
    rel_tol: float = 1e-8
    abs_tol: float = 1e-10
    max_iterations: int = 25
    jacobian: str = ASSEMBLED
    lazy_jacobian: bool = True
    stall_ratio: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.dt <= 0 or self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("time step and tolerances must be positive")


@dataclass
class DirichletBC:
    """Strong condition on one unknown block.

    ``value`` maps (node coordinates, t) to the prescribed values; vector
    fields take ``comp`` None for both components.  ``only_active`` restricts
    the condition to nodes active in the current cut topology.
    """

    block: str  # fluid_v | fluid_p | poro_v | poro_u | poro_p
    nodes: np.ndarray
    value: object
    comp: int = None
    only_active: bool = False


@dataclass
class FpiProblem:
    """Geometry, physics, and boundary data of one coupled configuration."""

    bg_mesh: object
    poro_mesh: object
    fluid: object
    poro: object
    stab: object
    nitsche: object
    jump_data: object = None
    cut_lines: list = field(default_factory=list)
    passive_interface_tags: tuple = ()
    dirichlet: list = field(default_factory=list)
    last_topology: object = None

    def __post_init__(self):
        self.dofmap = DofMap(self.bg_mesh.n_nodes, self.poro_mesh.n_nodes)
        self._node_elems = None

    def make_state(self, t=0.0):
        return State(self.dofmap, t=t)

    def topology_for(self, displacement):
        poly = extract_interface(
            self.poro_mesh, displacement, passive_tags=self.passive_interface_tags
        )
        return classify_and_cut(self.bg_mesh, [poly] + list(self.cut_lines))

    def node_elements(self):
        """Node -> adjacent background elements adjacency (built once)."""
        if self._node_elems is None:
            lists = [[] for _ in range(self.bg_mesh.n_nodes)]
            for e, conn in enumerate(self.bg_mesh.elements):
                for a in conn:
                    lists[a].append(e)
            self._node_elems = lists
        return self._node_elems


def build_kernels(problem, topology, state_old, frozen_state, t, theta, dt):
    """All residual kernels for one nonlinear iteration."""
    dm = problem.dofmap
    dtt = theta * dt
    kernels = make_fluid_volume_kernels(
        dm, topology, problem.fluid, state_old.fluid_velocity, t, 1.0 / dtt
    )
    neum = make_fluid_neumann_kernel(dm, topology, problem.fluid, t)
    if neum is not None:
        kernels.append(neum)
    for k in (
        make_cip_fluid_kernel(dm, topology, problem.fluid, problem.stab, dtt),
        make_ghost_penalty_kernel(dm, topology, problem.fluid, problem.stab, dtt),
        make_poro_volume_kernel(dm, problem.poro_mesh, problem.poro, state_old, theta, dt, t),
        make_poro_boundary_mass_kernel(
            dm, problem.poro_mesh, problem.poro, state_old, theta, dt,
            interface_tags=_interface_tags(problem),
        ),
        make_cip_poro_kernel(
            dm, problem.poro_mesh, problem.poro, problem.stab,
            frozen_state.poro_displacement, dtt,
        ),
        make_interface_kernel(
            dm, topology, problem.poro_mesh, problem.fluid, problem.poro,
            problem.stab, problem.nitsche, state_old, frozen_state,
            problem.jump_data, theta, dt, t,
        ),
    ):
        if k is not None:
            kernels.append(k)
    return kernels


def _interface_tags(problem):
    tags = set(problem.poro_mesh.boundary_edge_tags)
    return tuple(tags - set(problem.passive_interface_tags))


def constraint_set(problem, topology, state, t):
    """Constrained dofs and target values: inactive pins plus Dirichlet data."""
    dm = problem.dofmap
    inactive = np.nonzero(~topology.active_nodes)[0]
    dofs = [
        dm.fluid_v(inactive).ravel(),
        dm.fluid_p(inactive),
    ]
    vals = [
        state.u[dm.fluid_v(inactive).ravel()],
        state.u[dm.fluid_p(inactive)],
    ]
    for bc in problem.dirichlet:
        nodes = np.asarray(bc.nodes, dtype=np.int64)
        if bc.only_active:
            nodes = nodes[topology.active_nodes[nodes]]
        if len(nodes) == 0:
            continue
        coords = (
            problem.bg_mesh.nodes[nodes]
            if bc.block.startswith("fluid")
            else problem.poro_mesh.nodes[nodes]
        )
        val = np.asarray(bc.value(coords, t), dtype=float)
        getter = {
            "fluid_v": dm.fluid_v,
            "poro_v": dm.poro_v,
            "poro_u": dm.poro_u,
        }.get(bc.block)
        if bc.block in ("fluid_p", "poro_p"):
            ids = dm.fluid_p(nodes) if bc.block == "fluid_p" else dm.poro_p(nodes)
            dofs.append(ids)
            vals.append(val.reshape(-1))
        elif bc.comp is None:
            ids = getter(nodes)
            dofs.append(ids.ravel())
            vals.append(val.reshape(-1))
        else:
            dofs.append(getter(nodes, bc.comp))
            vals.append(val.reshape(-1))
    dofs = np.concatenate(dofs)
    vals = np.concatenate(vals)
    # deduplicate, keeping the last written value (Dirichlet wins over pins)
    uniq, idx = np.unique(dofs[::-1], return_index=True)
    take = len(dofs) - 1 - idx
    return uniq, vals[take]


def ghost_extension_values(problem, nodal, old_topology, nodes):
    """Evaluate a nodal field's discrete extension at given background nodes.

    Uses the nearest old active element within a two-ring neighborhood,
    falling back to the nearest active node value; returns (values, resolved).
    """
    mesh = problem.bg_mesh
    adjacency = problem.node_elements()
    cls = old_topology.classification
    conn = mesh.elements
    centers = mesh.nodes[conn].mean(axis=1)
    active_nodes = np.nonzero(old_topology.active_nodes)[0]
    out = np.array(nodal[nodes], dtype=float)
    resolved = np.zeros(len(nodes), dtype=bool)
    for i, node in enumerate(nodes):
        ring = set(adjacency[node])
        for e in list(ring):
            for a in conn[e]:
                ring.update(adjacency[a])
        cands = [e for e in ring if cls[e] != 2]
        if cands:
            x = mesh.nodes[node]
            e = min(cands, key=lambda q: np.sum((centers[q] - x) ** 2))
            xi = inverse_map_batch(mesh.nodes[conn[e]][None], x[None])[0]
            out[i] = shape_values(xi) @ nodal[conn[e]]
            resolved[i] = True
        elif len(active_nodes):
            x = mesh.nodes[node]
            j = active_nodes[np.argmin(np.sum((mesh.nodes[active_nodes] - x) ** 2, axis=1))]
            out[i] = nodal[j]
            resolved[i] = True
    return out, resolved


def reconstruct_state(problem, state, old_topology, new_topology, strict=True):
    """Fill values of newly activated fluid unknowns from the old extension."""
    newly = np.nonzero(new_topology.active_nodes & ~old_topology.active_nodes)[0]
    if len(newly) == 0:
        return state
    dm = problem.dofmap
    v = state.fluid_velocity.copy()
    p = state.fluid_pressure.copy()
    vals_v, ok_v = ghost_extension_values(problem, v, old_topology, newly)
    vals_p, ok_p = ghost_extension_values(problem, p[:, None], old_topology, newly)
    if strict and not (ok_v.all() and ok_p.all()):
        raise SolverError("reconstruction required: no active donor near new node")
    out = state.copy()
    out.u[dm.fluid_v(newly).ravel()] = vals_v.ravel()
    out.u[dm.fluid_p(newly)] = vals_p.ravel()
    return out


def fill_inactive_extension(problem, state, topology):
    """Refresh pinned inactive fluid values with the discrete ghost extension."""
    inactive = np.nonzero(~topology.active_nodes)[0]
    if len(inactive) == 0:
        return state
    dm = problem.dofmap
    vals_v, _ = ghost_extension_values(problem, state.fluid_velocity, topology, inactive)
    vals_p, _ = ghost_extension_values(
        problem, state.fluid_pressure[:, None], topology, inactive
    )
    state.u[dm.fluid_v(inactive).ravel()] = vals_v.ravel()
    state.u[dm.fluid_p(inactive)] = vals_p.ravel()
    return state


def linear_solve(matrix, rhs):
    """Sparse direct solve with a residual check."""
    mat = matrix.tocsc()
    try:
        lu = spla.splu(mat)
    except RuntimeError as exc:
        empty = np.nonzero(np.diff(mat.indptr) == 0)[0]
        which = f" (structurally empty column {empty[0]})" if len(empty) else ""
        raise SolverError(f"singular system{which}") from exc
    x = lu.solve(rhs)
    nb = np.linalg.norm(rhs)
    if nb > 0 and np.linalg.norm(mat @ x - rhs) > 1e-10 * max(nb, 1.0):
        raise SolverError("singular system: factorization residual too large")
    return x


def advance_timestep(problem, state_n, config):
    """One monolithic step; returns the converged new state."""
    theta, dt = config.theta, config.dt
    t_new = state_n.t + dt
    dm = problem.dofmap
    if problem.last_topology is None:
        problem.last_topology = problem.topology_for(state_n.poro_displacement)
    last_topo = problem.last_topology

    state = state_n.copy()
    state.t = t_new
    history = []
    lu = None
    prev_norm = None
    converged = False
    topo = None

    for it in range(config.max_iterations):
        topo = problem.topology_for(state.poro_displacement)
        state = reconstruct_state(problem, state, last_topo, topo)
        hist_state = reconstruct_state(problem, state_n, last_topo, topo)
        try:
            kernels = build_kernels(problem, topo, hist_state, state, t_new, theta, dt)
            res = assemble_residual(dm.n_dofs, kernels, state.u)
        except AssemblyError as exc:
            raise NonlinearDivergenceError(str(exc), history) from exc
        cdofs, cvals = constraint_set(problem, topo, state, t_new)
        res_c = res.copy()
        res_c[cdofs] = state.u[cdofs] - cvals
        rnorm = float(np.linalg.norm(res_c))
        history.append(rnorm)
        ref = history[0] if history[0] > 0 else 1.0
        if rnorm < max(config.abs_tol, config.rel_tol * ref):
            converged = True
            break

        need_matrix = (
            lu is None
            or not config.lazy_jacobian
            or (prev_norm is not None and rnorm > config.stall_ratio * prev_norm)
        )
        if need_matrix:
            if config.jacobian == COLORED:
                pattern = jacobian_sparsity(dm.n_dofs, kernels)
                color = color_columns(pattern)
                jac = assemble_jacobian_colored(
                    dm.n_dofs, kernels, state.u, pattern, color
                )
            else:
                jac = assemble_jacobian(dm.n_dofs, kernels, state.u)
            jac_c, res_c = apply_constraints(jac, res, state.u, cdofs, cvals)
            lu = spla.splu(jac_c.tocsc())
        state.u = state.u - lu.solve(res_c)
        prev_norm = rnorm

    if not converged:
        raise NonlinearDivergenceError(
            f"nonlinear divergence: {config.max_iterations} iterations, "
            f"residual history {history}",
            history,
        )

    # commit: update solid velocity, refresh extension values, cache topology
    omega = (1.0 - theta) / theta
    du = state.poro_displacement - state_n.poro_displacement
    state.solid_velocity = du / (theta * dt) - omega * state_n.solid_velocity
    fill_inactive_extension(problem, state, topo)
    problem.last_topology = topo
    return state, topo
