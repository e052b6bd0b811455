"""Clamped biharmonic problem ``(-Delta)^2 u = s``, ``(u, d_nu u) = (f, g)`` on the unit square.

The 13-point stencil acts on interior nodes. Boundary values are imposed
directly and the normal derivative through ghost nodes,
``u_ghost = u_mirror + 2 h g``, which keeps the reduced matrix symmetric
positive definite. One sparse LU factorisation per grid serves every solve.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import DnData, GridDomain, ScalarField, inward_traces

# 13-point stencil for Delta^2 (times h^4): offset -> weight
STENCIL = {
    (0, 0): 20.0,
    (1, 0): -8.0, (-1, 0): -8.0, (0, 1): -8.0, (0, -1): -8.0,
    (1, 1): 2.0, (1, -1): 2.0, (-1, 1): 2.0, (-1, -1): 2.0,
    (2, 0): 1.0, (-2, 0): 1.0, (0, 2): 1.0, (0, -2): 1.0,
}


class SingularSystemError(RuntimeError):
    pass


def _ext_index(grid, i, j):
    # node (i, j) -> flat index in the ghost-extended array
    return (np.asarray(i) + 1) * (grid.N + 4) + (np.asarray(j) + 1)


def _stencil_matrix(grid):
    """Sparse map from the extended field to ``Delta_h^2`` at interior nodes."""
    N = grid.N
    ii, jj = np.meshgrid(np.arange(1, N + 1), np.arange(1, N + 1), indexing="ij")
    rows = (ii - 1) * N + (jj - 1)
    R, C, V = [], [], []
    for (di, dj), w in STENCIL.items():
        R.append(rows.ravel())
        C.append(_ext_index(grid, ii + di, jj + dj).ravel())
        V.append(np.full(rows.size, w / grid.h**4))
    n_ext = (N + 4) ** 2
    return sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                         shape=(N * N, n_ext))


def _extension_matrix(grid):
    """Sparse map from interior unknowns to the extended field (ghost mirrors included)."""
    N = grid.N
    ii, jj = np.meshgrid(np.arange(1, N + 1), np.arange(1, N + 1), indexing="ij")
    cols = ((ii - 1) * N + (jj - 1)).ravel()
    R = [_ext_index(grid, ii, jj).ravel()]
    C = [cols]
    k = np.arange(1, N + 1)
    # ghosts beside non-corner edge nodes mirror the first interior line
    R += [_ext_index(grid, -1, k), _ext_index(grid, N + 2, k),
          _ext_index(grid, k, -1), _ext_index(grid, k, N + 2)]
    C += [(0 * N + (k - 1)), ((N - 1) * N + (k - 1)),
          ((k - 1) * N + 0), ((k - 1) * N + (N - 1))]
    R = np.concatenate(R)
    C = np.concatenate(C)
    return sp.csr_matrix((np.ones(R.size), (R, C)), shape=((N + 4) ** 2, N * N))


def assemble_clamped_bilaplacian(grid: GridDomain):
    """Return ``(A, S, P)``: reduced SPD matrix, stencil map and extension map."""
    S = _stencil_matrix(grid)
    P = _extension_matrix(grid)
    A = (S @ P).tocsc()
    return A, S, P


class ClampedSolver:
    """Factorised clamped bilaplacian on one grid; immutable after construction."""

    def __init__(self, grid: GridDomain):
        self.grid = grid
        self.A, self.S, self.P = assemble_clamped_bilaplacian(grid)
        try:
            self._lu = splu(self.A)
        except RuntimeError as exc:  # pragma: no cover - SPD matrix
            raise SingularSystemError(str(exc)) from exc

    def boundary_extension(self, f, g):
        """Extended field holding the boundary data and the affine ghost parts."""
        grid = self.grid
        N, h = grid.N, grid.h
        ext = np.zeros(grid.ext_shape, dtype=complex)
        f = np.asarray(f, dtype=complex)
        g = np.asarray(g, dtype=complex)
        nodes = ext[1:-1, 1:-1]
        b = grid.boundary_mask
        nodes[b] = f[b]
        # ghost = mirror + 2 h g; the mirror part is added for interior mirrors by P
        ext[0, 1:-1] = 2 * h * g[0, :]
        ext[-1, 1:-1] = 2 * h * g[-1, :]
        ext[1:-1, 0] = 2 * h * g[:, 0]
        ext[1:-1, -1] = 2 * h * g[:, -1]
        # mirrors of corner-row ghosts are boundary nodes with known values
        for col in (0, N + 1):
            ext[0, col + 1] += f[1, col]
            ext[-1, col + 1] += f[N, col]
            ext[col + 1, 0] += f[col, 1]
            ext[col + 1, -1] += f[col, N]
        return ext

    def solve(self, s=None, f=None, g=None) -> ScalarField:
        """Solve with interior source ``s`` and Cauchy data ``(f, g)`` (node arrays)."""
        grid = self.grid
        N = grid.N
        zeros = np.zeros(grid.shape, dtype=complex)
        s = zeros if s is None else np.asarray(s, dtype=complex)
        f = zeros if f is None else f
        g = zeros if g is None else g
        if s.shape == grid.shape:
            s = s[1:-1, 1:-1]
        q = self.boundary_extension(f, g).ravel()
        rhs = s.ravel() - self.S @ q
        U = self._solve_linear(rhs)
        ext = (self.P @ U + q).reshape(grid.ext_shape)
        _fill_outer_corners(ext)
        return ScalarField(grid, ext)

    def _solve_linear(self, rhs):
        rhs = np.asarray(rhs)
        if np.iscomplexobj(rhs):
            out = self._lu.solve(np.ascontiguousarray(rhs.real)) + 1j * self._lu.solve(
                np.ascontiguousarray(rhs.imag))
        else:
            out = self._lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise SingularSystemError("non-finite values in the solution")
        return out

    def apply(self, u: ScalarField) -> np.ndarray:
        """``Delta_h^2 u`` at interior nodes using the field's own ghosts."""
        return (self.S @ u.values.ravel()).reshape(self.grid.N, self.grid.N)


def _fill_outer_corners(ext):
    # the four ghost-of-ghost cells are never read; mirror them for finiteness
    ext[0, 0] = ext[2, 0]
    ext[0, -1] = ext[2, -1]
    ext[-1, 0] = ext[-3, 0]
    ext[-1, -1] = ext[-3, -1]


def get_solver(grid: GridDomain) -> ClampedSolver:
    """Cached factorisation attached to ``grid``."""
    if grid._factor is None:
        grid._factor = ClampedSolver(grid)
    return grid._factor


def solve_clamped(grid: GridDomain, s=None, f=None, g=None) -> ScalarField:
    return get_solver(grid).solve(s, f, g)


def boundary_normal_traces(u: ScalarField, order: int, where: str = "sigma") -> np.ndarray:
    """``d_nu^order u`` at the non-corner boundary nodes selected by ``where``.

    Values follow the ordering of ``grid.boundary_samples(where)``.
    """
    grid = u.grid
    edges, I, J, _ = grid.boundary_samples(where)
    out = np.empty(len(edges), dtype=complex)
    for edge in np.unique(edges):
        sel = edges == edge
        full = inward_traces(u.nodes, edge, order, grid.h)
        i_e, j_e = grid.edge_nodes(edge)
        pos = {(a, b): k for k, (a, b) in enumerate(zip(i_e, j_e))}
        out[sel] = full[[pos[(a, b)] for a, b in zip(I[sel], J[sel])]]
    return out


def ghost_normal_derivative(u: ScalarField, where: str = "boundary") -> np.ndarray:
    """Central ``(ghost - mirror) / 2h`` normal derivative, the one the solver enforces."""
    grid = u.grid
    edges, I, J, _ = grid.boundary_samples(where)
    out = np.empty(len(edges), dtype=complex)
    V = u.values
    for k, (e, i, j) in enumerate(zip(edges, I, J)):
        nu = (-1, 0) if e == "left" else (1, 0) if e == "right" else (0, -1) if e == "bottom" else (0, 1)
        gi, gj = i + 1 + nu[0], j + 1 + nu[1]
        mi, mj = i + 1 - nu[0], j + 1 - nu[1]
        out[k] = (V[gi, gj] - V[mi, mj]) / (2 * grid.h)
    return out


def dn_data(u: ScalarField) -> DnData:
    """Partial DN data ``(d_nu^2 u, d_nu^3 u)`` on the accessible boundary."""
    return DnData(u.grid, boundary_normal_traces(u, 2), boundary_normal_traces(u, 3))


def gamma_traces(u: ScalarField) -> tuple[float, float]:
    """Max of ``|u|`` and of the solver-consistent ``|d_nu u|`` over inaccessible nodes."""
    grid = u.grid
    vals = u.nodes[grid.gamma_mask]
    dnu = ghost_normal_derivative(u, "gamma")
    return float(np.max(np.abs(vals), initial=0.0)), float(np.max(np.abs(dnu), initial=0.0))


# -- manufactured solutions ------------------------------------------------------

def _sin2(x, y):
    return np.sin(np.pi * x) ** 2 * np.sin(np.pi * y) ** 2


def _sin2_bilap(x, y):
    # sin^2(pi t) = (1 - cos(2 pi t)) / 2
    p2 = (2 * np.pi) ** 2
    cx, cy = np.cos(2 * np.pi * x), np.cos(2 * np.pi * y)
    return 0.25 * p2**2 * (2 * cx * cy - cx * (1 - cy) - cy * (1 - cx))


MANUFACTURED = {
    # name: (u, (-Delta)^2 u)
    "sin2": (_sin2, _sin2_bilap),
    "expsin": (lambda x, y: np.exp(x) * np.sin(2 * y), lambda x, y: 9 * np.exp(x) * np.sin(2 * y)),
    "x2y2": (lambda x, y: x**2 * y**2, lambda x, y: 8.0 + 0 * x),
}


def manufactured_error(name: str, N: int) -> float:
    """Max nodal error of the discrete solution for a manufactured solution."""
    u, s = MANUFACTURED[name]
    grid = GridDomain(N)
    f, g = grid.cauchy_data(u)
    x1, x2 = grid.nodes_x
    U = solve_clamped(grid, s(x1, x2), f, g)
    return float(np.max(np.abs(U.nodes - u(x1, x2))))


def convergence_study(name: str, N_list=(15, 31, 63)):
    """Errors and observed orders ``log2(e_k / e_{k+1}) / log2(h_k / h_{k+1})``."""
    hs = np.array([1.0 / (N + 1) for N in N_list])
    errs = np.array([manufactured_error(name, N) for N in N_list])
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(errs[:-1] / errs[1:]) / np.log(hs[:-1] / hs[1:])
    return hs, errs, orders
