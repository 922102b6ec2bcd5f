"""Monolithic degree-of-freedom layout, state vectors, and the assembly driver.

Unknowns are ordered blockwise: fluid velocity, fluid pressure, poroelastic
fluid velocity, skeleton displacement, pore pressure.  Kernels expose a
uniform interface (a gather index table plus a vectorized local residual);
tangents come either from per-entity finite differences of the local residual
or from a graph-colored finite difference of the global residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

FD_EPS = 1e-7


class AssemblyError(Exception):
    """Raised when a kernel cannot evaluate (e.g. inverted elements)."""


@dataclass(frozen=True)
class DofMap:
    """Global indexing of the five unknown blocks."""

    n_bg: int
    n_po: int

    @property
    def n_dofs(self):
        return 3 * self.n_bg + 5 * self.n_po

    def fluid_v(self, nodes, comp=None):
        nodes = np.asarray(nodes, dtype=np.int64)
        if comp is None:
            return np.stack([2 * nodes, 2 * nodes + 1], axis=-1)
        return 2 * nodes + comp

    def fluid_p(self, nodes):
        return 2 * self.n_bg + np.asarray(nodes, dtype=np.int64)

    def poro_v(self, nodes, comp=None):
        base = 3 * self.n_bg
        nodes = np.asarray(nodes, dtype=np.int64)
        if comp is None:
            return np.stack([base + 2 * nodes, base + 2 * nodes + 1], axis=-1)
        return base + 2 * nodes + comp

    def poro_u(self, nodes, comp=None):
        base = 3 * self.n_bg + 2 * self.n_po
        nodes = np.asarray(nodes, dtype=np.int64)
        if comp is None:
            return np.stack([base + 2 * nodes, base + 2 * nodes + 1], axis=-1)
        return base + 2 * nodes + comp

    def poro_p(self, nodes):
        return 3 * self.n_bg + 4 * self.n_po + np.asarray(nodes, dtype=np.int64)


class State:
    """Solution snapshot: the monolithic vector, time, and solid velocity."""

    def __init__(self, dofmap, t=0.0, u=None, solid_velocity=None):
        self.dofmap = dofmap
        self.t = t
        self.u = np.zeros(dofmap.n_dofs) if u is None else np.asarray(u, dtype=float)
        self.solid_velocity = (
            np.zeros((dofmap.n_po, 2))
            if solid_velocity is None
            else np.asarray(solid_velocity, dtype=float)
        )

    def copy(self):
        return State(self.dofmap, self.t, self.u.copy(), self.solid_velocity.copy())

    @property
    def fluid_velocity(self):
        return self.u[: 2 * self.dofmap.n_bg].reshape(-1, 2)

    @property
    def fluid_pressure(self):
        n = self.dofmap.n_bg
        return self.u[2 * n : 3 * n]

    @property
    def poro_velocity(self):
        n, m = self.dofmap.n_bg, self.dofmap.n_po
        return self.u[3 * n : 3 * n + 2 * m].reshape(-1, 2)

    @property
    def poro_displacement(self):
        n, m = self.dofmap.n_bg, self.dofmap.n_po
        return self.u[3 * n + 2 * m : 3 * n + 4 * m].reshape(-1, 2)

    @property
    def poro_pressure(self):
        n, m = self.dofmap.n_bg, self.dofmap.n_po
        return self.u[3 * n + 4 * m :]


class Kernel:
    """Base class: ``dofs`` is (entities, n_local); residual is vectorized.

    ``load_only`` marks residual contributions independent of the unknowns,
    which are skipped during tangent assembly.
    """

    load_only = False

    def __init__(self, dofs):
        self.dofs = np.asarray(dofs, dtype=np.int64)

    def residual(self, uloc):  # pragma: no cover - interface
        raise NotImplementedError


def assemble_residual(n_dofs, kernels, u):
    res = np.zeros(n_dofs)
    for k in kernels:
        if len(k.dofs) == 0:
            continue
        r = k.residual(u[k.dofs])
        np.add.at(res, k.dofs, r)
    return res


def assemble_jacobian(n_dofs, kernels, u, eps=FD_EPS):
    """Sparse tangent from per-entity finite differences of each kernel."""
    rows, cols, vals = [], [], []
    for k in kernels:
        if k.load_only or len(k.dofs) == 0:
            continue
        uloc = u[k.dofs]
        r0 = k.residual(uloc)
        n_ent, n_loc = uloc.shape
        for j in range(n_loc):
            h = eps * (1.0 + np.abs(uloc[:, j]))
            up = uloc.copy()
            up[:, j] += h
            dr = (k.residual(up) - r0) / h[:, None]
            rows.append(k.dofs.ravel())
            cols.append(np.repeat(k.dofs[:, j], n_loc))
            vals.append(dr.ravel())
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = cols = np.empty(0, dtype=np.int64)
        vals = np.empty(0)
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n_dofs, n_dofs))
    return mat.tocsr()


def jacobian_sparsity(n_dofs, kernels):
    rows, cols = [], []
    for k in kernels:
        if k.load_only or len(k.dofs) == 0:
            continue
        n_ent, n_loc = k.dofs.shape
        rows.append(np.repeat(k.dofs, n_loc, axis=0).ravel())
        cols.append(np.tile(k.dofs, (1, n_loc)).ravel())
    if not rows:
        return sp.csr_matrix((n_dofs, n_dofs))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    mat = sp.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_dofs, n_dofs))
    return mat.tocsr()


def color_columns(pattern):
    """Greedy coloring of structurally conflicting columns (shared rows)."""
    conflict = (pattern.T @ pattern).tocsr()
    n = pattern.shape[0]
    color = np.full(n, -1, dtype=np.int64)
    for j in range(n):
        neigh = conflict.indices[conflict.indptr[j] : conflict.indptr[j + 1]]
        used = color[neigh]
        used = set(used[used >= 0].tolist())
        c = 0
        while c in used:
            c += 1
        color[j] = c
    return color


def assemble_jacobian_colored(n_dofs, kernels, u, pattern=None, color=None, eps=FD_EPS):
    """Graph-colored finite-difference tangent of the assembled residual."""
    if pattern is None:
        pattern = jacobian_sparsity(n_dofs, kernels)
    if color is None:
        color = color_columns(pattern)
    r0 = assemble_residual(n_dofs, kernels, u)
    csc = pattern.tocsc()
    data = np.zeros(csc.nnz)
    for c in range(color.max() + 1):
        cols = np.nonzero(color == c)[0]
        h = eps * (1.0 + np.abs(u[cols]))
        up = u.copy()
        up[cols] += h
        dr = assemble_residual(n_dofs, kernels, up) - r0
        for j, hj in zip(cols, h):
            sl = slice(csc.indptr[j], csc.indptr[j + 1])
            data[sl] = dr[csc.indices[sl]] / hj
    out = csc.copy()
    out.data = data
    return out.tocsr()


def apply_constraints(matrix, residual, u, constrained, values):
    """Row replacement for strong conditions: R_i = u_i - g_i, unit diagonal."""
    res = residual.copy()
    res[constrained] = u[constrained] - values
    mat = matrix.tocsr(copy=True)
    rows = np.repeat(np.arange(mat.shape[0]), np.diff(mat.indptr))
    mask = np.zeros(mat.shape[0], dtype=bool)
    mask[constrained] = True
    mat.data[mask[rows]] = 0.0
    ident = sp.coo_matrix(
        (np.ones(len(constrained)), (constrained, constrained)), shape=mat.shape
    )
    return (mat + ident).tocsc(), res
