"""Oscillating biharmonic solutions that vanish on the inaccessible boundary.

``u = a(x) exp(-i (x - x_ref) . xi / h) + r`` with ``xi`` on the null variety,
``a`` in ``{1, x_l}`` and ``r`` the clamped correction removing the Cauchy data
near gamma. The reference point only rescales ``u`` by a constant; placing it
on the far edge keeps ``|u| <= 1`` for ``Im xi_1 > 0``.

The module also holds the symbol fits in powers of ``1/h`` and the pointwise
recovery of constant coefficient tensors from them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid import GridDomain, ScalarField, derivative_tensor
from .null_recovery import (
    NullVector,
    recover_general,
    recover_vector,
    standard_probe_set,
)
from .pde_solver import gamma_traces, get_solver
from .tensor_core import SymTensor, eval_pairing

log = logging.getLogger(__name__)

DEFAULT_H_LIST = tuple(0.4 * 0.8**k for k in range(8))
MAX_FIT_CONDITION = 1e12
FIT_ATOL = 1e-9


class IllConditionedFitError(ValueError):
    """Vandermonde system in ``1/h`` is too ill-conditioned; spread the h values."""


class DecayViolationError(RuntimeError):
    """Remainder profile fails to decay; the grid is probably too coarse for the h values."""


def smoothstep(t):
    """Quintic ramp: 0 for ``t <= 0``, 1 for ``t >= 1``, C^2 in between."""
    t = np.clip(t, 0.0, 1.0)
    return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)


def distance_to_gamma(grid: GridDomain, x1, x2):
    """Euclidean distance from points to the union of gamma segments."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    best = np.full(np.broadcast(x1, x2).shape, np.inf)
    for seg in grid.gamma:
        if seg.edge in ("left", "right"):
            c = 0.0 if seg.edge == "left" else 1.0
            s = np.clip(x2, seg.s0, seg.s1)
            d = np.hypot(x1 - c, x2 - s)
        else:
            c = 0.0 if seg.edge == "bottom" else 1.0
            s = np.clip(x1, seg.s0, seg.s1)
            d = np.hypot(x1 - s, x2 - c)
        best = np.minimum(best, d)
    return best


@dataclass
class CutoffSpec:
    """Cutoff ``chi = 1`` within ``margin/2`` of gamma and ``0`` beyond ``margin``.

    ``margin = 0`` gives ``chi = 0`` identically (no correction).
    """

    grid: GridDomain
    margin: float = 0.25

    def __post_init__(self):
        if not 0.0 <= self.margin < 1.0:
            raise ValueError(f"margin must lie in [0, 1), got {self.margin}")

    def __call__(self, x1, x2):
        if self.margin == 0:
            return np.zeros(np.broadcast(x1, x2).shape)
        d = distance_to_gamma(self.grid, x1, x2)
        half = 0.5 * self.margin
        return 1.0 - smoothstep((d - half) / half)

    @property
    def field(self) -> ScalarField:
        return self.grid.sample(self)

    @property
    def support_mask(self):
        """Boundary nodes where ``chi`` is non-zero (the set ``K``)."""
        x1, x2 = self.grid.nodes_x
        return self.grid.boundary_mask & (self(x1, x2) > 0)

    def support_function(self, y):
        """``H_K(y) = max_{x in K} x . y`` over the sampled support nodes."""
        x1, x2 = self.grid.nodes_x
        mask = self.support_mask
        if not mask.any():
            return -np.inf
        return float(np.max(x1[mask] * y[0] + x2[mask] * y[1]))


def _is_one(amplitude):
    return amplitude is None or (isinstance(amplitude, str) and amplitude == "one")


def _amplitude(amplitude, x1, x2):
    if _is_one(amplitude):
        return np.ones(np.broadcast(x1, x2).shape)
    l = int(amplitude)
    return np.asarray((x1, x2)[l], dtype=float)


def _amplitude_tag(amplitude):
    return "one" if _is_one(amplitude) else f"x{int(amplitude) + 1}"


def default_reference_point(grid: GridDomain):
    # far corner from the default gamma; only a normalisation
    return np.array([1.0, 0.0])


@dataclass
class CgoSolution:
    """``u = a exp(-i (x - x_ref) . xi / h) + r`` on one grid."""

    xi: np.ndarray
    h: float
    amplitude: object
    r: ScalarField
    chi: CutoffSpec
    oscillation: ScalarField
    x_ref: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @property
    def grid(self):
        return self.r.grid

    @property
    def u(self) -> ScalarField:
        return self.oscillation + self.r

    @property
    def amplitude_tag(self):
        return _amplitude_tag(self.amplitude)

    def phase_weight(self):
        """``exp(+i (x - x_ref) . xi / h)`` on the extended grid."""
        g = self.grid
        return np.exp(1j * ((g.x1 - self.x_ref[0]) * self.xi[0]
                            + (g.x2 - self.x_ref[1]) * self.xi[1]) / self.h)

    def gamma_traces(self):
        return gamma_traces(self.u)

    def interior_residual(self):
        """Max of the discrete bilaplacian of ``u`` at interior nodes."""
        return float(np.max(np.abs(get_solver(self.grid).apply(self.u))))


def build_cgo(grid: GridDomain, xi, h: float, amplitude="one", chi: CutoffSpec | None = None,
              x_ref=None) -> CgoSolution:
    """Oscillating solution with vanishing Cauchy data on gamma.

    Parameters
    ----------
    xi : array_like or NullVector
        Point of the null variety, length 2.
    h : float
        Semiclassical parameter.
    amplitude : {"one", 0, 1}
        ``a = 1`` or ``a = x_{l+1}``.
    chi : CutoffSpec, optional
        Defaults to ``CutoffSpec(grid)``.

    Notes
    -----
    The correction ``r`` receives exactly the discrete Cauchy data of
    ``-chi a exp(...)``, so ``u`` and its ghost-node normal derivative vanish
    on gamma to rounding.
    """
    xi = np.asarray(NullVector(np.asarray(xi, dtype=complex)).xi)
    if xi.shape != (2,):
        raise ValueError("grid CGO solutions need n = 2")
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    chi = CutoffSpec(grid) if chi is None else chi
    x_ref = default_reference_point(grid) if x_ref is None else np.asarray(x_ref, dtype=float)

    def osc(x1, x2):
        ph = np.exp(-1j * ((x1 - x_ref[0]) * xi[0] + (x2 - x_ref[1]) * xi[1]) / h)
        return _amplitude(amplitude, x1, x2) * ph

    oscillation = grid.sample(osc)
    f, g = grid.cauchy_data(lambda x1, x2: -chi(x1, x2) * osc(x1, x2))
    r = get_solver(grid).solve(None, f, g)
    return CgoSolution(xi, float(h), amplitude, r, chi, oscillation, x_ref)


def clip_h_list(grid: GridDomain, xi, h_list=DEFAULT_H_LIST, points_per_wave=4.0):
    """Drop the h values below ``points_per_wave * h_grid * |xi|``."""
    floor = points_per_wave * grid.h * float(np.linalg.norm(np.asarray(xi)))
    kept = [float(h) for h in h_list if h >= floor]
    if len(kept) < 2:
        raise ValueError(f"fewer than two h values above the resolution floor {floor:.3g}")
    return kept


@dataclass
class DecayProfile:
    h: np.ndarray
    norm: np.ndarray
    slope: float
    intercept: float
    r2: float

    @property
    def log_norm(self):
        return np.log(self.norm)

    @property
    def fit_residual(self):
        return self.log_norm - (self.intercept + self.slope / self.h)

    @property
    def strictly_decreasing(self):
        # ordered by increasing 1/h
        return bool(np.all(np.diff(self.log_norm[np.argsort(self.h)[::-1]]) < 0))

    def check(self):
        if not (self.strictly_decreasing and self.slope < 0):
            raise DecayViolationError(
                f"remainder profile does not decay (slope {self.slope:.3g}); refine the grid"
            )
        return self

    def rows(self):
        return list(zip(self.h, self.norm, self.fit_residual))


def remainder_decay_profile(grid: GridDomain, xi, amplitude="one", h_list=None,
                            chi: CutoffSpec | None = None, region_x1=0.5) -> DecayProfile:
    """``sup_{x1 > region_x1} |r exp(i x . xi / h)|`` over an h list, with a fit in ``1/h``.

    ``chi`` with zero margin yields an all-zero profile; the fit is then skipped.
    """
    xi = np.asarray(xi, dtype=complex)
    if h_list is None:
        h_list = clip_h_list(grid, xi)
    h_list = np.asarray(sorted(h_list, reverse=True), dtype=float)
    x1 = grid.x1
    region = (x1 > region_x1 + 1e-12) & (x1 <= 1.0 + 1e-12)
    region[0, :] = region[-1, :] = region[:, 0] = region[:, -1] = False
    norms = []
    for h in h_list:
        sol = build_cgo(grid, xi, h, amplitude, chi)
        norms.append(float(np.max(np.abs(sol.r.values * sol.phase_weight())[region])))
    norms = np.asarray(norms)
    if not np.any(norms > 0):
        return DecayProfile(h_list, norms, 0.0, -np.inf, 1.0)
    y = np.log(norms)
    X = np.column_stack([np.ones_like(h_list), 1.0 / h_list])
    (b, a), *_ = np.linalg.lstsq(X, y, rcond=None)
    ss_res = float(np.sum((y - X @ [b, a]) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayProfile(h_list, norms, float(a), float(b), r2)


# -- symbol fits -------------------------------------------------------------

@dataclass
class SymbolFit:
    coefficients: np.ndarray
    condition: float
    residual: float


def leading_symbol_fit(h_values, values, degree=3) -> SymbolFit:
    """Least-squares ``P(h) ~ sum_{k <= degree} c_k h^-k``.

    The conditioning is that of the column-equilibrated Vandermonde matrix in ``1/h``.
    """
    h_values = np.asarray(h_values, dtype=float)
    values = np.asarray(values)
    if not 0 <= degree <= 3:
        raise ValueError(f"degree must be in 0..3, got {degree}")
    if np.unique(h_values).size < degree + 1:
        raise ValueError(f"need at least {degree + 1} distinct h values, got {np.unique(h_values).size}")
    V = np.vander(1.0 / h_values, degree + 1, increasing=True)
    scale = np.linalg.norm(V, axis=0)
    Vs = V / scale
    cond = float(np.linalg.cond(Vs))
    if cond > MAX_FIT_CONDITION:
        raise IllConditionedFitError(
            f"condition number {cond:.3e} exceeds {MAX_FIT_CONDITION:g}; use a wider h spread"
        )
    coef, *_ = np.linalg.lstsq(Vs, values, rcond=None)
    coef = coef / (scale if values.ndim == 1 else scale[:, None])
    resid = float(np.linalg.norm(V @ coef - values))
    return SymbolFit(coef, cond, resid)


def _constant(T, x0):
    if T is None:
        return None
    if isinstance(T, SymTensor):
        return T
    if np.isscalar(T):
        return SymTensor(len(x0), 0, np.asarray(T))
    # polynomial field in two variables
    return SymTensor(2, T.rank, T.values(np.array(x0[0]), np.array(x0[1]), 2))


def _contract_tail(T: SymTensor, xi, l):
    """``sum T_{l i2..ik} xi_i2 .. xi_ik`` for the component ``l``."""
    k = T.rank
    row = np.asarray(T.full)[l]
    return complex(eval_pairing(row, k - 1, xi)) if k > 1 else complex(row)


def symbol_values(coeffs: dict, x0, xi, h_values, amplitude="one", grid=None):
    """``exp(i x0 . xi / h) (A^#(x0, D) a exp(-i x . xi / h))`` for each h.

    ``coeffs`` maps ranks to constant :class:`SymTensor` or polynomial fields.
    With ``grid`` given, the contribution of the CGO correction ``r`` is added,
    evaluated with grid derivatives at the node nearest to ``x0``.
    """
    x0 = np.asarray(x0, dtype=float)
    xi = np.asarray(xi, dtype=complex)
    A = {l: _constant(T, x0) for l, T in coeffs.items() if T is not None}
    a_val = 1.0 if _is_one(amplitude) else float(x0[int(amplitude)])
    out = []
    for h in h_values:
        val = 0j
        for l, T in A.items():
            val += a_val * (-1.0 / h) ** l * complex(T.pair(xi))
            if not _is_one(amplitude) and l >= 1:
                val += l * (-1j) * (-1.0 / h) ** (l - 1) * _contract_tail(T, xi, int(amplitude))
        if grid is not None:
            val += _remainder_term(A, grid, x0, xi, h, amplitude)
        out.append(val)
    return np.array(out)


def _remainder_term(A, grid, x0, xi, h, amplitude):
    sol = build_cgo(grid, xi, h, amplitude)
    i = int(round(x0[0] / grid.h))
    j = int(round(x0[1] / grid.h))
    un = sol.r.nodes
    total = 0j
    for l, T in A.items():
        if l == 0:
            total += complex(T.full) * un[i, j]
        else:
            D = derivative_tensor(un, l, grid.h)[i, j]
            total += complex(np.sum(np.asarray(T.full) * D))
    xn = np.array([i, j]) * grid.h
    return total * np.exp(1j * np.dot(xn - sol.x_ref, xi) / h)


def local_symbol_extraction(coeffs: dict, x0, xi, h_values=DEFAULT_H_LIST, grid=None) -> dict:
    """Per-rank pairings ``<A^(l)(x0), xi^l>`` from the h-expansion of the symbol.

    Returns ``{l: value}`` for ``l = 0..3``.
    """
    fit = leading_symbol_fit(h_values, symbol_values(coeffs, x0, xi, h_values, "one", grid), 3)
    return {l: complex((-1) ** l * fit.coefficients[l]) for l in range(4)}


@dataclass
class LocalRecovery:
    """Coefficient tensors recovered at one point and the pieces of the cascade."""

    tracefree: dict
    isotropic: dict
    tensors: dict
    fits: list = field(default_factory=list)


def recover_local_coefficients(coeffs: dict, x0, n=None, h_values=DEFAULT_H_LIST,
                               grid=None) -> LocalRecovery:
    """Recover constant ``A^(0..3)`` at ``x0`` from symbol fits over the probe sets.

    First pass (``a = 1``) gives the trace-free parts of ``A^(3)``, ``A^(2)`` and
    the full ``A^(1)``, ``A^(0)``. The second pass (``a = x_1``) removes the known
    terms and reads the isotropic parts ``a^(1)``, ``a^(0)`` from the ``h^-2`` and
    ``h^-1`` coefficients ``-2i (a1 . xi) xi_1`` and ``2i a0 xi_1``; every probe
    vector has ``xi_1 = i``, so the division is safe.
    """
    x0 = np.asarray(x0, dtype=float)
    n = len(x0) if n is None else n
    cache = {}

    def pairings(xi):
        key = tuple(np.round(np.asarray(xi), 14))
        if key not in cache:
            cache[key] = local_symbol_extraction(coeffs, x0, xi, h_values, grid)
        return cache[key]

    # fit noise scales with the largest coefficient, not with each rank separately
    probes = standard_probe_set(n, 3).vectors
    fit_scale = max(abs(v) for xi in probes for v in pairings(xi).values())
    atol = FIT_ATOL * max(fit_scale, 1.0)
    tf = {}
    for l in (3, 2, 1):
        tf[l] = recover_general(lambda xi, l=l: pairings(xi)[l], n, l, atol=atol)
    probe = standard_probe_set(n, 1).vectors[0]
    tf[0] = SymTensor(n, 0, np.asarray(pairings(probe)[0]))

    known = dict(tf)
    lc = 0
    second = {}

    def residual_coefficients(xi):
        key = tuple(np.round(np.asarray(xi), 14))
        if key not in second:
            P = symbol_values(coeffs, x0, xi, h_values, lc, grid)
            Q = P - symbol_values(known, x0, xi, h_values, lc, None)
            second[key] = leading_symbol_fit(h_values, Q, 2).coefficients
        return second[key]

    def a1_pairing(xi):
        return residual_coefficients(xi)[2] / (-2j * xi[lc])

    a1 = recover_vector(a1_pairing, n, atol=atol)
    a0_vals = [residual_coefficients(xi)[1] / (2j * xi[lc])
               for xi in standard_probe_set(n, 1).vectors]
    a0 = SymTensor(n, 0, np.asarray(np.mean(a0_vals)))
    tensors = {
        3: tf[3] + a1.i_delta(),
        2: tf[2] + a0.i_delta(),
        1: tf[1],
        0: tf[0],
    }
    return LocalRecovery(tf, {1: a1, 0: a0}, tensors)
