"""Recovery of coefficient differences from multilinearised partial DN data.

The data side is the edge integral

    B(w, v0) = int_sigma (d_nu^3 w) v0 - (d_nu^2 w) d_nu v0

of ``w = w_ref - w_true``, the difference of ``m``-th mixed derivatives of the two
solution maps. On flat edges with ``w = d_nu w = 0`` it equals the volume
integral of ``(-Delta)^2 w`` against a biharmonic ``v0`` vanishing on gamma,
which is linear in ``W = A_true - A_ref``. Sampling both sides over many test
tuples gives a linear system for ``W`` in a finite tensor-field basis.
"""
from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cgo import build_cgo, distance_to_gamma, smoothstep
from .grid import DnData, GridDomain, ScalarField, derivative_tensor
from .null_recovery import numerical_rank
from .pde_solver import boundary_normal_traces, gamma_traces, get_solver
from .semilinear import CoefficientModel, PolyTensorField, dn_oracle, mixed_difference
from .tensor_core import SymTensor, multi_indices

log = logging.getLogger(__name__)

GAMMA_TOL = 1e-8
RANK_TOL = 1e-9


class InvalidTestFunctionError(ValueError):
    """Test function does not vanish (with its normal derivative) on gamma."""


class UnderdeterminedError(RuntimeError):
    """The functional matrix is rank deficient for the chosen basis and tests."""

    def __init__(self, message, null_space=None, labels=None):
        super().__init__(message)
        self.null_space = null_space
        self.labels = labels


class CascadeError(RuntimeError):
    pass


# -- test functions ----------------------------------------------------------

@dataclass
class TestFunctionSet:
    """Biharmonic fields with vanishing Cauchy data on gamma, with their boundary data."""

    __test__ = False  # keep pytest from collecting this class

    fields: list
    data: list
    tags: list

    def __len__(self):
        return len(self.fields)

    def __getitem__(self, i):
        return self.fields[i]

    @property
    def grid(self):
        return self.fields[0].grid

    def validate(self, tol=GAMMA_TOL, residual_tol=1e-8):
        solver = get_solver(self.grid)
        for k, v in enumerate(self.fields):
            scale = max(v.max_abs(), 1e-300)
            gu, gd = gamma_traces(v)
            if max(gu, gd) > tol * scale:
                raise InvalidTestFunctionError(
                    f"test function {k} has gamma traces ({gu:.2e}, {gd:.2e})")
            # relative to the size of the individual stencil terms
            res = np.max(np.abs(solver.apply(v))) * self.grid.h**4 / scale
            if res > residual_tol:
                raise InvalidTestFunctionError(f"test function {k} is not biharmonic ({res:.2e})")
        return self


def random_profile(grid: GridDomain, rng, max_freq=1.0, ramp=(0.15, 0.3)):
    """Smooth random function vanishing within ``ramp[0]`` of gamma."""
    c = rng.standard_normal(6)
    k = rng.uniform(0.5, max(max_freq, 0.5), 2)
    phase = rng.uniform(0, 2 * np.pi)

    def F(x1, x2):
        psi = smoothstep((distance_to_gamma(grid, x1, x2) - ramp[0]) / ramp[1])
        poly = c[0] + c[1] * x1 + c[2] * x2 + c[3] * x1 * x2 + c[5] * x2 * x2
        return psi * (poly + c[4] * np.sin(np.pi * (k[0] * x1 + k[1] * x2) + phase))

    return F


def random_test_functions(grid: GridDomain, count: int, rng=None, max_freq=1.0,
                          ramp=(0.15, 0.3)) -> TestFunctionSet:
    """``count`` clamped solutions with random smooth boundary data supported on sigma."""
    rng = np.random.default_rng(rng)
    solver = get_solver(grid)
    fields, data = [], []
    for _ in range(count):
        f, g = grid.cauchy_data(random_profile(grid, rng, max_freq, ramp))
        fields.append(solver.solve(None, f, g))
        data.append((f, g))
    return TestFunctionSet(fields, data, ["random-boundary-data"] * count)


def cgo_test_functions(grid: GridDomain, xis, h: float, amplitude="one") -> TestFunctionSet:
    """CGO solutions as test functions (their boundary data live on sigma only)."""
    fields, data = [], []
    for xi in xis:
        sol = build_cgo(grid, xi, h, amplitude)
        u = sol.u
        un = u.nodes
        f = np.where(grid.boundary_mask, un, 0)
        g = np.zeros(grid.shape, dtype=complex)
        V = u.values
        h2 = 2 * grid.h
        g[0, :] = (V[0, 1:-1] - V[2, 1:-1]) / h2
        g[-1, :] = (V[-1, 1:-1] - V[-3, 1:-1]) / h2
        g[:, 0] = (V[1:-1, 0] - V[1:-1, 2]) / h2
        g[:, -1] = (V[1:-1, -1] - V[1:-1, -3]) / h2
        # the exact biharmonic field with these data
        fields.append(get_solver(grid).solve(None, f, g))
        data.append((f, g))
    return TestFunctionSet(fields, data, ["CGO"] * len(fields))


# -- coefficient bases -------------------------------------------------------

@dataclass(frozen=True)
class BasisElement:
    rank: int
    field: PolyTensorField
    label: str


def _unit_tensor(n, rank, idx):
    return SymTensor.from_entries(n, rank, {idx: 1.0})


class CoefficientBasis:
    """Finite family of tensor fields ``x1^a x2^b E_idx`` per rank."""

    def __init__(self, elements):
        self.elements = list(elements)
        if not self.elements:
            raise ValueError("empty coefficient basis")

    @classmethod
    def polynomial(cls, ranks=(0,), degree=0, n=2):
        """Monomials up to ``degree`` times unit symmetric tensors, for each rank."""
        elements = []
        for l in ranks:
            for d in range(degree + 1):
                for a in range(d, -1, -1):
                    b = d - a
                    for idx in multi_indices(n, l):
                        T = _unit_tensor(n, l, idx)
                        lab = f"A{l}[{','.join(map(str, idx))}]"
                        if d:
                            lab += f"*x1^{a}x2^{b}"
                        elements.append(BasisElement(l, PolyTensorField(l, {(a, b): T}), lab))
        return cls(elements)

    def __len__(self):
        return len(self.elements)

    @property
    def labels(self):
        return [e.label for e in self.elements]

    def check_independence(self, grid: GridDomain):
        """Gram-matrix rank test of the sampled fields."""
        x1, x2 = grid.nodes_x
        rows = [e.field.values(x1, x2).ravel() for e in self.elements]
        by_rank = {}
        for e, r in zip(self.elements, rows):
            by_rank.setdefault(e.rank, []).append(r)
        for l, rs in by_rank.items():
            G = np.array(rs)
            if numerical_rank(G @ G.conj().T, 1e-12) < len(rs):
                raise UnderdeterminedError(f"basis fields of rank {l} are linearly dependent")
        return self

    def combine(self, coef) -> "WDifference":
        fields = {}
        for c, e in zip(coef, self.elements):
            term = e.field * c
            fields[e.rank] = term if e.rank not in fields else fields[e.rank] + term
        return WDifference(fields)


@dataclass
class WDifference:
    """Per-rank coefficient difference fields ``W^(l)``."""

    fields: dict = field(default_factory=dict)

    def __getitem__(self, l):
        return self.fields[l]

    def constant(self, l, n=2) -> SymTensor:
        """Degree-zero term of the rank-``l`` field."""
        F = self.fields.get(l)
        if F is None:
            return SymTensor.zeros(n, l)
        T = F.terms.get((0, 0))
        return T if T is not None else SymTensor.zeros(n, l)

    def items(self):
        return self.fields.items()

    def to_dict(self):
        return {str(l): F.to_dict() for l, F in sorted(self.fields.items())}


def _as_fields(W):
    if isinstance(W, WDifference):
        W = W.fields
    out = {}
    for l, F in W.items():
        if isinstance(F, SymTensor):
            F = PolyTensorField.constant(F)
        elif np.isscalar(F):
            F = PolyTensorField.constant(SymTensor(2, 0, np.asarray(F)))
        out[int(l)] = F
    return out


# -- functionals ---------------------------------------------------------------

def _pair_field(F: PolyTensorField, D, grid):
    x1, x2 = grid.nodes_x
    vals = F.values(x1, x2)
    if F.rank == 0:
        return vals * D
    return np.sum(vals * D, axis=tuple(range(-F.rank, 0)))


def volume_functional(W, v0: ScalarField, vs) -> complex:
    """Trapezoidal integral of ``sum_l <W^l, sum_k D^l v_k prod_{j != k} v_j> v0``."""
    W = _as_fields(W)
    grid = v0.grid
    vn = [v.nodes for v in vs]
    total = np.zeros(grid.shape, dtype=complex)
    for l, F in W.items():
        for k in range(len(vn)):
            others = np.prod([vn[j] for j in range(len(vn)) if j != k], axis=0) if len(vn) > 1 else 1.0
            D = derivative_tensor(vn[k], l, grid.h) if l else vn[k]
            total += _pair_field(F, D, grid) * others
    return complex(grid.integrate(total * v0.nodes))


def sharp_functional(A, v0: ScalarField, vs, zeroth_weight=1.0) -> complex:
    """``int (sum_{l>=1} <A^l, D^l v0> + zeroth_weight * A^0 v0) prod v_k``.

    With ``zeroth_weight = 1`` the volume functional equals the sum of this
    form over the ``m`` choices of which factor carries the derivatives.
    """
    A = _as_fields(A)
    grid = v0.grid
    acc = np.zeros(grid.shape, dtype=complex)
    for l, F in A.items():
        if l == 0:
            acc += zeroth_weight * _pair_field(F, v0.nodes, grid)
        else:
            acc += _pair_field(F, derivative_tensor(v0.nodes, l, grid.h), grid)
    prod = np.prod([v.nodes for v in vs], axis=0)
    return complex(grid.integrate(acc * prod))


def boundary_functional(dn_diff: DnData, v0: ScalarField, gamma_tol=GAMMA_TOL) -> complex:
    """``sum over sigma of h (d3 v0 - d2 d_nu v0)``, corner nodes excluded."""
    grid = v0.grid
    scale = max(v0.max_abs(), 1e-300)
    gu, gd = gamma_traces(v0)
    if max(gu, gd) > gamma_tol * scale:
        raise InvalidTestFunctionError(
            f"test function does not vanish on gamma: |v0| = {gu:.2e}, |d_nu v0| = {gd:.2e}")
    _, I, J, _ = grid.boundary_samples("sigma")
    dv = boundary_normal_traces(v0, 1, "sigma")
    return complex(grid.h * np.sum(dn_diff.d3 * v0.nodes[I, J] - dn_diff.d2 * dv))


# -- inversion -----------------------------------------------------------------

@dataclass
class RecoveryResult:
    order: int
    W: WDifference
    coef: np.ndarray
    labels: list
    residual: float
    condition: float
    lam: float
    pairs: list
    params: dict = field(default_factory=dict)
    data_scale: float = 0.0

    def to_dict(self):
        def cplx(z):
            z = complex(z)
            return [z.real, z.imag]
        return {
            "order": self.order,
            "coefficients": {lab: cplx(c) for lab, c in zip(self.labels, self.coef)},
            "W": self.W.to_dict(),
            "residual": self.residual,
            "condition_number": self.condition,
            "lambda": self.lam,
            "n_tuples": len(self.pairs),
            "data_scale": self.data_scale,
            "parameters": self.params,
        }


def default_tuples(n_tests: int, m: int, max_tuples=None, rng=None):
    """``(i0, (i1, .., im))`` index tuples; the directions use combinations with repetition."""
    combos = list(itertools.combinations_with_replacement(range(n_tests), m))
    tuples = [(i0, c) for c in combos for i0 in range(n_tests)]
    if max_tuples is not None and len(tuples) > max_tuples:
        rng = np.random.default_rng(rng)
        keep = np.sort(rng.choice(len(tuples), max_tuples, replace=False))
        tuples = [tuples[k] for k in keep]
    return tuples


def assemble_system(dn_true, dn_ref, m, basis: CoefficientBasis, tests: TestFunctionSet,
                    eps=1e-3, tuples=None, symmetric=False, workers=1):
    """Functional matrix ``M`` (tuples x basis) and data vector ``b``.

    The DN differences per direction tuple are independent and run on up to
    ``workers`` threads; results are placed by index, so the output does not
    depend on scheduling.
    """
    if tuples is None:
        tuples = default_tuples(len(tests), m)
    combos = sorted({c for _, c in tuples})

    def data_for(combo):
        dirs = [tests.data[i] for i in combo]
        return (mixed_difference(dn_ref, dirs, eps, symmetric)
                - mixed_difference(dn_true, dirs, eps, symmetric))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            data_cache = dict(zip(combos, pool.map(data_for, combos)))
    else:
        data_cache = {c: data_for(c) for c in combos}
    M = np.zeros((len(tuples), len(basis)), dtype=complex)
    b = np.zeros(len(tuples), dtype=complex)
    for row, (i0, combo) in enumerate(tuples):
        v0 = tests[i0]
        vs = [tests[i] for i in combo]
        b[row] = boundary_functional(data_cache[combo], v0)
        for col, e in enumerate(basis.elements):
            M[row, col] = volume_functional({e.rank: e.field}, v0, vs)
    return M, b, tuples


def solve_regularized(M, b, lam=None, rank_tol=RANK_TOL, labels=None):
    """Column-scaled Tikhonov least squares; returns ``(coef, residual, cond, lam)``."""
    scale = np.linalg.norm(M, axis=0)
    if np.any(scale == 0):
        raise UnderdeterminedError("a basis element is invisible to every test tuple",
                                   labels=labels)
    Ms = M / scale
    s = np.linalg.svd(Ms, compute_uv=False)
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    if numerical_rank(Ms, rank_tol) < M.shape[1]:
        _, _, Vh = np.linalg.svd(Ms)
        null = Vh[s <= rank_tol * s[0]].conj() / scale
        raise UnderdeterminedError(
            f"functional matrix has rank {numerical_rank(Ms, rank_tol)} < {M.shape[1]} "
            "(isotropic or otherwise invisible directions in the basis)",
            null_space=null, labels=labels)
    lam = 1e-8 * s[0] if lam is None else float(lam)
    A = np.vstack([Ms, lam * np.eye(M.shape[1])])
    rhs = np.concatenate([b, np.zeros(M.shape[1])])
    coef_s, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    coef = coef_s / scale
    bnorm = np.linalg.norm(b)
    residual = float(np.linalg.norm(M @ coef - b) / bnorm) if bnorm > 0 else 0.0
    return coef, residual, cond, lam


def recover_w(dn_true, dn_ref, m: int, basis: CoefficientBasis, tests: TestFunctionSet,
              lam=None, eps=1e-3, tuples=None, symmetric=False, workers=1) -> RecoveryResult:
    """Least-squares estimate of ``W^(l), m-1 = A_true - A_ref`` in ``basis``.

    ``dn_true`` and ``dn_ref`` map Cauchy data ``(f, g)`` to :class:`DnData`.
    """
    if m < 2:
        raise ValueError("the first linearisation carries no coefficient information; use m >= 2")
    M, b, tuples = assemble_system(dn_true, dn_ref, m, basis, tests, eps, tuples, symmetric,
                                 workers)
    if len(tuples) < len(basis):
        raise UnderdeterminedError(f"{len(tuples)} test tuples for {len(basis)} unknowns")
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        coef = np.zeros(len(basis), dtype=complex)
        residual, cond, lam_used = 0.0, float(np.linalg.cond(M)), 0.0 if lam is None else lam
    else:
        coef, residual, cond, lam_used = solve_regularized(M, b, lam, labels=basis.labels)
    pairs = [(complex(bb), complex(pred)) for bb, pred in zip(b, M @ coef)]
    # size of the data in units of the weakest basis element
    col = np.linalg.norm(M, axis=0)
    data_scale = float(bnorm / col.min()) if col.min() > 0 else np.inf
    log.info("order %d: residual %.3e, condition %.3e", m - 1, residual, cond)
    return RecoveryResult(m - 1, basis.combine(coef), coef, basis.labels, residual, cond,
                          float(lam_used), pairs,
                          {"m": m, "eps": eps, "symmetric": symmetric, "n_tests": len(tests)},
                          data_scale)


def taylor_cascade(dn_true, ref_model: CoefficientModel, grid: GridDomain, m_max: int,
                   basis: CoefficientBasis, tests: TestFunctionSet, lam=None, eps=1e-3,
                   max_residual=0.5, bases=None, workers=1, zero_scale=1e-3, **oracle_kw):
    """Recover orders ``1 .. m_max - 1`` in turn, updating the reference model.

    Returns ``(results, updated_reference_model)``. ``bases`` may give a
    separate basis per ``m``. An order whose relative residual exceeds
    ``max_residual`` stops the cascade, unless its data are below
    ``zero_scale`` in coefficient units (then the difference is noise from
    the earlier orders).
    """
    results = []
    model = ref_model.copy()
    for m in range(2, m_max + 1):
        b = (bases or {}).get(m, basis)
        res = recover_w(dn_true, dn_oracle(model, grid, **oracle_kw), m, b, tests, lam, eps,
                        workers=workers)
        if res.residual > max_residual and res.data_scale > zero_scale:
            raise CascadeError(f"order {m - 1}: residual {res.residual:.3e} exceeds {max_residual}")
        results.append(res)
        model = model.with_added(m - 1, dict(res.W.items()))
    return results, model
