"""Unit-square grid with an inaccessible boundary part, node fields and FD helpers.

Node ``(i, j)`` sits at ``(i h, j h)`` for ``0 <= i, j <= N + 1`` with
``h = 1/(N + 1)``. Fields carry one extra ghost layer, so their arrays have
shape ``(N + 4, N + 4)`` and node ``(i, j)`` is stored at ``[i + 1, j + 1]``.
Axis 0 is ``x1``, axis 1 is ``x2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

EDGES = ("left", "right", "bottom", "top")
# outward unit normal of each edge
NORMALS = {
    "left": np.array([-1.0, 0.0]),
    "right": np.array([1.0, 0.0]),
    "bottom": np.array([0.0, -1.0]),
    "top": np.array([0.0, 1.0]),
}


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    """Closed piece ``{s0 <= s <= s1}`` of an edge, ``s`` the free coordinate."""

    edge: str
    s0: float = 0.0
    s1: float = 1.0

    def __post_init__(self):
        if self.edge not in EDGES:
            raise GridError(f"unknown edge {self.edge!r}")
        if not 0.0 <= self.s0 <= self.s1 <= 1.0:
            raise GridError(f"segment bounds must satisfy 0 <= s0 <= s1 <= 1: {self.s0}, {self.s1}")


class GridDomain:
    """Discretised ``[0, 1]^2`` with ``gamma`` (inaccessible) and ``sigma`` (its complement).

    Parameters
    ----------
    N : int
        Interior nodes per axis.
    gamma : sequence of Segment or (edge, s0, s1) tuples
        Inaccessible boundary part. Defaults to the whole left edge.
    """

    def __init__(self, N, gamma=None):
        N = int(N)
        if N < 5:
            raise GridError(f"the 13-point stencil needs N >= 5, got {N}")
        self.N = N
        self.h = 1.0 / (N + 1)
        if gamma is None:
            gamma = [Segment("left")]
        self.gamma = tuple(s if isinstance(s, Segment) else Segment(*s) for s in gamma)
        coords = np.arange(-1, N + 3) * self.h
        self.x1, self.x2 = np.meshgrid(coords, coords, indexing="ij")
        self._build_masks()
        self._factor = None

    def __repr__(self):
        segs = ", ".join(f"{s.edge}[{s.s0:g},{s.s1:g}]" for s in self.gamma)
        return f"GridDomain(N={self.N}, gamma=[{segs}])"

    @property
    def shape(self):
        return (self.N + 2, self.N + 2)

    @property
    def ext_shape(self):
        return (self.N + 4, self.N + 4)

    @property
    def nodes_x(self):
        return self.x1[1:-1, 1:-1], self.x2[1:-1, 1:-1]

    # -- boundary bookkeeping ---------------------------------------------
    def edge_nodes(self, edge):
        """Node indices ``(i, j)`` of the non-corner nodes of ``edge``, ordered by arclength."""
        k = np.arange(1, self.N + 1)
        last = self.N + 1
        if edge == "left":
            return np.zeros_like(k), k
        if edge == "right":
            return np.full_like(k, last), k
        if edge == "bottom":
            return k, np.zeros_like(k)
        if edge == "top":
            return k, np.full_like(k, last)
        raise GridError(f"unknown edge {edge!r}")

    def _build_masks(self):
        N1 = self.N + 1
        gamma = np.zeros(self.shape, dtype=bool)
        boundary = np.zeros(self.shape, dtype=bool)
        boundary[0, :] = boundary[-1, :] = boundary[:, 0] = boundary[:, -1] = True
        tol = 1e-12
        for seg in self.gamma:
            s = np.arange(N1 + 1) * self.h
            sel = (s >= seg.s0 - tol) & (s <= seg.s1 + tol)
            if seg.edge == "left":
                gamma[0, sel] = True
            elif seg.edge == "right":
                gamma[-1, sel] = True
            elif seg.edge == "bottom":
                gamma[sel, 0] = True
            else:
                gamma[sel, -1] = True
        corner = np.zeros(self.shape, dtype=bool)
        corner[0, 0] = corner[0, -1] = corner[-1, 0] = corner[-1, -1] = True
        self.boundary_mask = boundary
        self.gamma_mask = gamma
        self.corner_mask = corner
        self.sigma_mask = boundary & ~gamma & ~corner
        if not self.sigma_mask.any():
            raise GridError("the accessible boundary part is empty")

    def boundary_samples(self, where="sigma"):
        """``(edge, i, j, s)`` arrays for the non-corner nodes selected by ``where``.

        ``where`` is one of ``"sigma"``, ``"gamma"`` or ``"boundary"``.
        """
        if where not in ("sigma", "gamma", "boundary"):
            raise GridError(f"unknown boundary selection {where!r}")
        edges, I, J, S = [], [], [], []
        for edge in EDGES:
            i, j = self.edge_nodes(edge)
            keep = np.ones(i.shape, dtype=bool)
            if where == "sigma":
                keep = self.sigma_mask[i, j]
            elif where == "gamma":
                keep = self.gamma_mask[i, j]
            s = (j if edge in ("left", "right") else i) * self.h
            edges += [edge] * int(keep.sum())
            I.append(i[keep])
            J.append(j[keep])
            S.append(s[keep])
        return np.array(edges), np.concatenate(I), np.concatenate(J), np.concatenate(S)

    # -- sampling ------------------------------------------------------------
    def sample(self, func):
        """Evaluate ``func(x1, x2)`` on all nodes including the ghost layer."""
        return ScalarField(self, np.asarray(func(self.x1, self.x2), dtype=complex) * np.ones(self.ext_shape))

    def cauchy_data(self, func):
        """Boundary data ``(f, g)`` of a smooth function as node arrays.

        ``g`` is the central difference across the boundary, which is the normal
        derivative the clamped solver enforces through its ghost nodes.
        """
        F = np.asarray(func(self.x1, self.x2), dtype=complex) * np.ones(self.ext_shape)
        f = F[1:-1, 1:-1].copy()
        g = np.zeros(self.shape, dtype=complex)
        h2 = 2 * self.h
        # ghost minus mirror across each edge, at every node of the edge
        g[0, :] = (F[0, 1:-1] - F[2, 1:-1]) / h2
        g[-1, :] = (F[-1, 1:-1] - F[-3, 1:-1]) / h2
        g[:, 0] = (F[1:-1, 0] - F[1:-1, 2]) / h2
        g[:, -1] = (F[1:-1, -1] - F[1:-1, -3]) / h2
        return f, g

    def quadrature_weights(self):
        """Trapezoidal weights on the node grid."""
        w = np.full(self.N + 2, self.h)
        w[0] = w[-1] = self.h / 2
        return np.outer(w, w)

    def integrate(self, values):
        return np.sum(self.quadrature_weights() * values)


class ScalarField:
    """Complex grid function on nodes plus one ghost layer."""

    __array_priority__ = 100

    def __init__(self, grid: GridDomain, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != grid.ext_shape:
            raise GridError(f"field shape {values.shape} != {grid.ext_shape}")
        self.grid = grid
        self.values = values

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.ext_shape, dtype=complex))

    @property
    def nodes(self):
        return self.values[1:-1, 1:-1]

    @property
    def interior(self):
        return self.values[2:-2, 2:-2]

    def _other(self, other):
        if isinstance(other, ScalarField):
            if other.grid is not self.grid and other.grid.N != self.grid.N:
                raise GridError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, c):
        return ScalarField(self.grid, self.values / c)

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def max_abs(self, region="nodes"):
        arr = self.nodes if region == "nodes" else self.values
        return float(np.max(np.abs(arr)))

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


@dataclass
class DnData:
    """Second and third normal derivatives sampled at accessible boundary nodes."""

    grid: GridDomain
    d2: np.ndarray
    d3: np.ndarray

    def __post_init__(self):
        self.d2 = np.asarray(self.d2, dtype=complex)
        self.d3 = np.asarray(self.d3, dtype=complex)

    @property
    def samples(self):
        return self.grid.boundary_samples("sigma")

    def __add__(self, other):
        return DnData(self.grid, self.d2 + other.d2, self.d3 + other.d3)

    def __sub__(self, other):
        return DnData(self.grid, self.d2 - other.d2, self.d3 - other.d3)

    def __mul__(self, c):
        return DnData(self.grid, self.d2 * c, self.d3 * c)

    __rmul__ = __mul__

    def __truediv__(self, c):
        return DnData(self.grid, self.d2 / c, self.d3 / c)

    def __neg__(self):
        return self * -1

    def max_abs(self):
        return float(max(np.max(np.abs(self.d2)), np.max(np.abs(self.d3))))


# -- finite differences ------------------------------------------------------

def fd_weights(offsets, order):
    """Weights ``w`` with ``sum w_t f(t) ~ f^(order)(0)`` for unit spacing."""
    offsets = np.asarray(offsets, dtype=float)
    p = len(offsets)
    V = np.vander(offsets, p, increasing=True).T
    rhs = np.zeros(p)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(V, rhs)


@lru_cache(maxsize=None)
def derivative_matrix(M: int, order: int) -> np.ndarray:
    """Second-order accurate ``order``-th derivative on ``M`` equispaced points (unit spacing).

    Centred where the stencil fits, shifted one-sided near the ends.
    """
    if order == 0:
        return np.eye(M)
    half = (order + 1) // 2  # centred half-width: 1, 1, 2
    one_sided = order + 2
    D = np.zeros((M, M))
    for i in range(M):
        if half <= i < M - half:
            offs = np.arange(-half, half + 1)
        elif i < half:
            offs = np.arange(one_sided) - i
        else:
            offs = np.arange(-one_sided + 1, 1) + (M - 1 - i)
        D[i, i + offs] = fd_weights(offs, order)
    D.setflags(write=False)
    return D


def partial(u_nodes: np.ndarray, ax: int, ay: int, h: float) -> np.ndarray:
    """``d^ax/dx1^ax d^ay/dx2^ay`` of a node array."""
    M = u_nodes.shape[0]
    out = u_nodes
    if ax:
        out = derivative_matrix(M, ax) @ out / h**ax
    if ay:
        out = out @ derivative_matrix(M, ay).T / h**ay
    return out


def derivative_tensor(u_nodes: np.ndarray, rank: int, h: float) -> np.ndarray:
    """``D^(rank) u = (-i)^rank d^rank u`` as a field of symmetric 2D tensors.

    Shape ``u_nodes.shape + (2,) * rank``.
    """
    out = np.zeros(u_nodes.shape + (2,) * rank, dtype=complex)
    cache = {}
    for idx in np.ndindex(*(2,) * rank):
        ax = idx.count(0)
        ay = rank - ax
        if (ax, ay) not in cache:
            cache[ax, ay] = partial(u_nodes, ax, ay, h)
        out[(Ellipsis,) + idx] = cache[ax, ay]
    return out * (-1j) ** rank


def laplacian_nodes(u_nodes, h):
    return partial(u_nodes, 2, 0, h) + partial(u_nodes, 0, 2, h)


def inward_traces(u_nodes: np.ndarray, edge: str, order: int, h: float) -> np.ndarray:
    """``d_nu^order u`` at the non-corner nodes of ``edge`` by one-sided differences.

    Uses ``order + 3`` points into the interior, which makes the traces third-order
    accurate; the extra point pays off in the boundary functional.
    """
    if order not in (1, 2, 3):
        raise GridError(f"normal trace order must be 1, 2 or 3, got {order}")
    npts = order + 3
    if npts > u_nodes.shape[0]:
        raise GridError("one-sided stencil leaves the grid")
    w = fd_weights(np.arange(npts), order)
    # rows: inward distance t = 0..npts-1, columns: edge nodes 1..N
    if edge == "left":
        band = u_nodes[:npts, 1:-1]
    elif edge == "right":
        band = u_nodes[::-1][:npts, 1:-1]
    elif edge == "bottom":
        band = u_nodes[1:-1, :npts].T
    elif edge == "top":
        band = u_nodes[1:-1, ::-1][:, :npts].T
    else:
        raise GridError(f"unknown edge {edge!r}")
    # derivative along the inward direction; d_nu = -d_inward
    return (-1) ** order * (w @ band) / h**order
