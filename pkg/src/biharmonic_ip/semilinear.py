"""Semilinear forward problem, partial DN map and mixed divided differences.

The perturbation is ``sum_l <A^(l)(x, u), D^(l) u>`` with ``D = -i grad`` and
``A^(l)(x, z) = sum_k z^k / k! A^(l),k(x)``; there is no ``k = 0`` term, so the
zero solution belongs to zero data.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import DnData, GridDomain, ScalarField, derivative_tensor
from .pde_solver import dn_data, get_solver
from .tensor_core import SymTensor

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    """Picard iteration failed to contract; the boundary data are too large."""


def _contract(A_vals, D_vals, rank):
    if rank == 0:
        return A_vals * D_vals
    axes = tuple(range(-rank, 0))
    return np.sum(A_vals * D_vals, axis=axes)


@dataclass
class PolyTensorField:
    """Tensor field ``sum_p x1^a x2^b T_p`` with constant symmetric tensors ``T_p``.

    ``terms`` maps an exponent pair ``(a, b)`` to a :class:`SymTensor`.
    """

    rank: int
    terms: dict = field(default_factory=dict)

    @classmethod
    def constant(cls, T: SymTensor):
        return cls(T.rank, {(0, 0): T})

    def values(self, x1, x2, n=2):
        out = np.zeros(np.shape(x1) + (n,) * self.rank, dtype=complex)
        for (a, b), T in self.terms.items():
            mono = (x1**a * x2**b).reshape(np.shape(x1) + (1,) * self.rank)
            out = out + mono * T.full
        return out

    def __add__(self, other):
        terms = dict(self.terms)
        for key, T in other.terms.items():
            terms[key] = terms[key] + T if key in terms else T
        return PolyTensorField(self.rank, terms)

    def __sub__(self, other):
        return self + other * -1

    def __mul__(self, c):
        return PolyTensorField(self.rank, {k: T * c for k, T in self.terms.items()})

    __rmul__ = __mul__

    def is_zero(self):
        return all(T.norm() == 0 for T in self.terms.values())

    def to_dict(self):
        return {"rank": self.rank,
                "terms": [{"exponent": list(k), "tensor": T.to_dict()} for k, T in self.terms.items()]}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["rank"]),
                   {tuple(t["exponent"]): SymTensor.from_dict(t["tensor"]) for t in data["terms"]})


class CoefficientModel:
    """Taylor coefficients ``A^(l),k`` for ranks ``l = 0..3`` and orders ``k >= 1``."""

    def __init__(self, coefficients=None, n=2):
        self.n = n
        self.coefficients = {}
        for (l, k), T in (coefficients or {}).items():
            self.set(l, k, T)

    def set(self, l, k, T):
        if not 0 <= l <= 3:
            raise ValueError(f"rank {l} outside 0..3")
        if k < 1:
            raise ValueError("Taylor order must be >= 1 so that A(x, 0) = 0")
        if isinstance(T, SymTensor):
            T = PolyTensorField.constant(T)
        elif np.isscalar(T):
            T = PolyTensorField.constant(SymTensor(self.n, 0, np.asarray(T)))
        if T.rank != l:
            raise ValueError(f"tensor of rank {T.rank} given for l={l}")
        self.coefficients[(l, k)] = T

    def get(self, l, k):
        return self.coefficients.get((l, k))

    @property
    def max_order(self):
        return max((k for _, k in self.coefficients), default=0)

    def copy(self):
        return CoefficientModel(dict(self.coefficients), self.n)

    def with_added(self, k, W: dict):
        """Model whose order-``k`` coefficients are increased by ``W[l]``."""
        out = self.copy()
        for l, T in W.items():
            T = PolyTensorField.constant(T) if isinstance(T, SymTensor) else T
            cur = out.get(l, k)
            out.coefficients[(l, k)] = T if cur is None else cur + T
        return out

    def is_linear(self):
        return all(T.is_zero() for T in self.coefficients.values())

    def to_dict(self):
        return {"n": self.n,
                "coefficients": [{"l": l, "k": k, "field": T.to_dict()}
                                 for (l, k), T in sorted(self.coefficients.items())]}

    @classmethod
    def from_dict(cls, data):
        model = cls(n=int(data.get("n", 2)))
        for item in data["coefficients"]:
            model.set(int(item["l"]), int(item["k"]), PolyTensorField.from_dict(item["field"]))
        return model


def apply_nonlinear_operator(model: CoefficientModel, u: ScalarField) -> np.ndarray:
    """Node array of ``sum_l <A^(l)(x, u), D^(l) u>`` (the bilaplacian is excluded)."""
    grid = u.grid
    x1, x2 = grid.nodes_x
    un = u.nodes
    out = np.zeros(grid.shape, dtype=complex)
    by_rank = {}
    for (l, k), T in model.coefficients.items():
        by_rank.setdefault(l, []).append((k, T))
    for l, items in by_rank.items():
        A = np.zeros(grid.shape + (model.n,) * l, dtype=complex)
        for k, T in items:
            weight = (un**k / math.factorial(k)).reshape(grid.shape + (1,) * l)
            A = A + weight * T.values(x1, x2, model.n)
        D = derivative_tensor(un, l, grid.h) if l else un
        out += _contract(A, D, l)
    return out


@dataclass
class PicardResult:
    u: ScalarField
    iterations: int
    increments: list

    @property
    def contraction_ratios(self):
        inc = np.asarray(self.increments)
        return inc[1:] / inc[:-1] if inc.size > 1 else np.array([])


def solve_semilinear(model: CoefficientModel, grid: GridDomain, f=None, g=None,
                     rtol=1e-14, atol=0.0, max_iter=100, full_output=False):
    """Picard iteration ``u <- solve_clamped(-N(u), f, g)`` from the linear solve.

    Stops when the max-norm increment drops below ``atol + rtol * |u|``.
    """
    solver = get_solver(grid)
    u = solver.solve(None, f, g)
    increments = []
    if model.is_linear():
        res = PicardResult(u, 1, [0.0])
        return res if full_output else u
    for it in range(1, max_iter + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            rhs = -apply_nonlinear_operator(model, u)
        if not np.all(np.isfinite(rhs)):
            raise DivergenceError(
                f"Picard iterate overflowed after {it - 1} steps; reduce the data amplitude")
        u_new = solver.solve(rhs, f, g)
        inc = float(np.max(np.abs(u_new.nodes - u.nodes)))
        increments.append(inc)
        u = u_new
        scale = float(np.max(np.abs(u.nodes)))
        if not np.isfinite(inc):
            break
        if inc <= atol + rtol * scale or inc == 0.0:
            log.debug("Picard converged in %d iterations (increment %.3e)", it, inc)
            res = PicardResult(u, it + 1, increments)
            return res if full_output else u
        # stagnation at the rounding floor counts as convergence
        if it > 3 and inc >= increments[-2] and inc <= 1e3 * np.finfo(float).eps * scale:
            res = PicardResult(u, it + 1, increments)
            return res if full_output else u
    raise DivergenceError(
        f"Picard iteration did not converge in {max_iter} steps (last increment "
        f"{increments[-1] if increments else float('nan'):.3e}); reduce the data amplitude"
    )


def dn_map(model: CoefficientModel, grid: GridDomain, f=None, g=None, **kw) -> DnData:
    """Partial DN data of the semilinear solution; ``(f, g)`` must vanish on gamma."""
    for name, arr in (("f", f), ("g", g)):
        if arr is not None and np.max(np.abs(np.asarray(arr)[grid.gamma_mask]), initial=0) > 0:
            raise ValueError(f"boundary data {name} does not vanish on the inaccessible part")
    return dn_data(solve_semilinear(model, grid, f, g, **kw))


def mixed_difference(oracle, directions, eps, symmetric=False):
    """m-th mixed divided difference of ``oracle`` along ``directions`` at zero.

    ``oracle`` maps a pair ``(f, g)`` to anything supporting ``+`` and scalar
    ``*`` (fields, DN data, arrays). The one-sided form evaluates subsets of
    the directions, the symmetric form all sign patterns (error ``O(eps^2)``).
    """
    m = len(directions)
    if m < 1:
        raise ValueError("need at least one direction")
    total = None
    if symmetric:
        patterns = itertools.product((1, -1), repeat=m)
        scale = (2 * eps) ** m
    else:
        patterns = itertools.product((0, 1), repeat=m)
        scale = eps**m
    for pattern in patterns:
        if symmetric:
            sign = math.prod(pattern)
        else:
            sign = (-1) ** (m - sum(pattern))
        f = sum(c * eps * np.asarray(d[0]) for c, d in zip(pattern, directions))
        g = sum(c * eps * np.asarray(d[1]) for c, d in zip(pattern, directions))
        val = oracle((f, g)) * sign
        total = val if total is None else total + val
    return total * (1.0 / scale)


def field_oracle(model, grid, **kw):
    return lambda fg: solve_semilinear(model, grid, fg[0], fg[1], **kw)


def dn_oracle(model, grid, **kw):
    return lambda fg: dn_map(model, grid, fg[0], fg[1], **kw)


# -- directly assembled linearisations -----------------------------------------

def _nil_mul(a: dict, b: dict, full: frozenset) -> dict:
    # product in the algebra with eps_i^2 = 0, keyed by subsets of directions
    out = {}
    for S, x in a.items():
        for T, y in b.items():
            if S & T:
                continue
            U = S | T
            if U <= full:
                out[U] = out[U] + x * y if U in out else x * y
    return out


def _nil_add(a: dict, b: dict, c=1.0) -> dict:
    out = dict(a)
    for S, y in b.items():
        out[S] = out[S] + c * y if S in out else c * y
    return out


def _nil_operator(model: CoefficientModel, grid: GridDomain, u: dict, full: frozenset) -> dict:
    """``sum_l <A^(l)(x, u), D^(l) u>`` for a nilpotent-expanded node field ``u``."""
    x1, x2 = grid.nodes_x
    out = {}
    k_max = model.max_order
    powers = [{frozenset(): np.ones(grid.shape, dtype=complex)}]
    for k in range(1, k_max + 1):
        powers.append(_nil_mul(powers[-1], u, full))
    for (l, k), T in model.coefficients.items():
        vals = T.values(x1, x2, model.n)
        coef = {S: (p / math.factorial(k)).reshape(grid.shape + (1,) * l) * vals
                for S, p in powers[k].items()}
        Du = {S: derivative_tensor(w, l, grid.h) if l else w for S, w in u.items()}
        for S, a in coef.items():
            for T_, d in Du.items():
                if S & T_ or not (S | T_) <= full:
                    continue
                term = _contract(a, d, l)
                U = S | T_
                out[U] = out[U] + term if U in out else term
    return out


def linearized_solution(model: CoefficientModel, grid: GridDomain, directions) -> ScalarField:
    """``d^m u / d eps_1 .. d eps_m`` at zero from the directly assembled linear problems.

    Each mixed derivative ``w_S`` solves ``(-Delta)^2 w_S = -[N(u)]_S`` with zero
    Cauchy data for ``|S| >= 2``, where ``[.]_S`` is the coefficient of
    ``prod_{i in S} eps_i`` and only lower-order ``w`` enter the right side.
    """
    m = len(directions)
    solver = get_solver(grid)
    full = frozenset(range(m))
    fields = {}
    for i, (f, g) in enumerate(directions):
        fields[frozenset([i])] = solver.solve(None, f, g)
    for size in range(2, m + 1):
        u = {S: w.nodes for S, w in fields.items()}
        for S in map(frozenset, itertools.combinations(range(m), size)):
            src = _nil_operator(model, grid, u, S).get(S)
            fields[S] = solver.solve(None if src is None else -src)
    return fields[full]
