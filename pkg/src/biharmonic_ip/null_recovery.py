"""Recovery of symmetric tensors from their values on the complex null cone.

The null variety here is ``{xi in C^n : xi . xi = 0, Im xi_1 >= 0}`` with the
bilinear dot product. Isotropic tensors ``i_delta(a)`` pair to zero with every
``xi**m`` on it, so only trace-free parts are recoverable; the probe sets below
are exactly large enough for that.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .tensor_core import (
    SymTensor,
    eval_pairing,
    i_delta,
    multi_indices,
    trace_free_decompose,
)

NULL_TOL = 1e-12
RANK_CUTOFF = 1e-10


class NullConstraintError(ValueError):
    """A vector pair does not define a point of the null variety."""


class InconsistentOracleError(ValueError):
    """Evaluations are not those of a (trace-free) tensor of the assumed rank."""


@dataclass(frozen=True)
class NullVector:
    xi: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=complex)
        scale = max(float(np.vdot(xi, xi).real), 1.0)
        if abs(np.dot(xi, xi)) > NULL_TOL * scale:
            raise NullConstraintError(f"xi.xi = {np.dot(xi, xi)} is not zero")
        if xi[0].imag < 0:
            raise NullConstraintError(f"Im(xi_1) = {xi[0].imag} is negative")
        xi.setflags(write=False)
        object.__setattr__(self, "xi", xi)

    @property
    def n(self):
        return self.xi.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.xi if dtype is None else self.xi.astype(dtype)


def make_null_vector(a, b) -> NullVector:
    """``xi = i a + b`` for real ``a``, ``b`` with ``a.b = 0``, ``|a| = |b| > 0``, ``a_1 >= 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise NullConstraintError(f"a and b must be vectors of equal length: {a.shape}, {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise NullConstraintError("|a| and |b| must be non-zero")
    if abs(np.dot(a, b)) > NULL_TOL * na * nb:
        raise NullConstraintError(f"a.b = {np.dot(a, b)} must vanish")
    if abs(na - nb) > NULL_TOL * max(na, nb):
        raise NullConstraintError(f"|a| = {na} differs from |b| = {nb}")
    if a[0] < 0:
        raise NullConstraintError(f"a_1 = {a[0]} must be non-negative")
    return NullVector(1j * a + b)


def random_null_vectors(rng, n, size, scale=1.0) -> np.ndarray:
    """``size`` random points of the null variety as a ``(size, n)`` array."""
    a = rng.standard_normal((size, n))
    b = rng.standard_normal((size, n))
    b -= (np.sum(a * b, axis=1) / np.sum(a * a, axis=1))[:, None] * a
    b *= (np.linalg.norm(a, axis=1) / np.linalg.norm(b, axis=1))[:, None]
    a[a[:, 0] < 0] *= -1
    return scale * (1j * a + b)


# -- probe sets --------------------------------------------------------------

def _e(n, i):
    v = np.zeros(n)
    v[i] = 1.0
    return v


@lru_cache(maxsize=None)
def _probe_vectors(n: int, m: int) -> tuple:
    if n < 2:
        raise ValueError(f"probe sets need n >= 2, got {n}")
    if m not in (1, 2, 3):
        raise ValueError(f"probe sets exist for m in 1..3, got {m}")
    e1 = 1j * _e(n, 0)
    vecs = []
    for j in range(1, n):
        vecs += [e1 + _e(n, j), e1 - _e(n, j)]
    if m >= 2:
        for j, k in itertools.combinations(range(1, n), 2):
            vecs.append(e1 + (_e(n, j) + _e(n, k)) / np.sqrt(2))
    if m >= 3:
        s = 1 / np.sqrt(2)
        # (a, b) acts on (e_l, e_m) with m < l
        for mm, ll in itertools.combinations(range(1, n), 2):
            for a, b in ((s, s), (-s, -s), (s, -s)):
                vecs.append(e1 + a * _e(n, ll) + b * _e(n, mm))
        for i, j, k in itertools.combinations(range(1, n), 3):
            vecs.append(e1 + (_e(n, i) + _e(n, j) + _e(n, k)) / np.sqrt(3))
    unique = []
    for v in vecs:
        if not any(np.allclose(v, u) for u in unique):
            unique.append(v)
    return tuple(unique)


@lru_cache(maxsize=None)
def trace_free_basis(n: int, m: int) -> np.ndarray:
    """Orthonormal (Frobenius) basis of trace-free symmetric m-tensors, shape ``(d, n**m)``."""
    if m < 2:
        return np.eye(n**m)
    mono = []
    for idx in multi_indices(n, m):
        T = np.zeros((n,) * m)
        for perm in set(itertools.permutations(idx)):
            T[perm] = 1.0
        mono.append(trace_free_decompose(T, m)[0].ravel())
    U, s, _ = np.linalg.svd(np.array(mono).T, full_matrices=False)
    return U[:, s > RANK_CUTOFF * s[0]].T.copy()


def full_symmetric_basis(n: int, m: int) -> np.ndarray:
    """Monomial symmetric basis, shape ``(C(n+m-1, m), n**m)``."""
    out = []
    for idx in multi_indices(n, m):
        T = np.zeros((n,) * m)
        for perm in set(itertools.permutations(idx)):
            T[perm] = 1.0
        out.append(T.ravel())
    return np.array(out)


def probe_matrix(vectors: np.ndarray, m: int, basis: np.ndarray) -> np.ndarray:
    """Rows: probe vectors; columns: pairing with each basis tensor."""
    n = vectors.shape[1]
    tensors = basis.reshape((basis.shape[0],) + (n,) * m)
    return eval_pairing(tensors[None], m, vectors[:, None, :])


def numerical_rank(M: np.ndarray, cutoff=RANK_CUTOFF) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > cutoff * s[0])) if s.size and s[0] > 0 else 0


@dataclass(frozen=True)
class ProbeSet:
    n: int
    m: int
    vectors: np.ndarray

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=complex)
        for v in vectors:
            NullVector(v)
        basis = trace_free_basis(self.n, self.m)
        M = probe_matrix(vectors, self.m, basis)
        if numerical_rank(M) < basis.shape[0]:
            raise ValueError(
                f"probe set is not injective on trace-free rank-{self.m} tensors (n={self.n})"
            )
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    def __len__(self):
        return len(self.vectors)

    def matrix(self, basis=None) -> np.ndarray:
        if basis is None:
            basis = trace_free_basis(self.n, self.m)
        return probe_matrix(self.vectors, self.m, basis)


def standard_probe_set(n: int, m: int) -> ProbeSet:
    """The explicit null vectors used to show injectivity for ranks 1-3."""
    return ProbeSet(n, m, np.array(_probe_vectors(n, m)))


# -- recovery ----------------------------------------------------------------

def _evaluate(p, vectors):
    return np.array([complex(p(v)) for v in vectors])


def recover_vector(p, n: int, rtol=1e-10, atol=1e-14) -> SymTensor:
    """Recover ``H`` from ``p(xi) = <H, xi>`` using ``i e_1 +- e_j``.

    The redundant first-component estimates must agree to ``max(rtol * scale, atol)``.
    """
    e1 = 1j * _e(n, 0)
    plus = _evaluate(p, [e1 + _e(n, j) for j in range(1, n)])
    minus = _evaluate(p, [e1 - _e(n, j) for j in range(1, n)])
    h1_each = (plus + minus) / 2j
    scale = max(np.max(np.abs(plus)), np.max(np.abs(minus)), 1e-300)
    spread = np.max(np.abs(h1_each - h1_each[0]))
    if spread > max(rtol * scale, atol):
        raise InconsistentOracleError(f"first component disagrees across probes: spread {spread:.3e}")
    H = np.empty(n, dtype=complex)
    H[0] = h1_each.mean()
    H[1:] = (plus - minus) / 2
    return SymTensor(n, 1, H)


def recover_tracefree2(p, n: int, rtol=1e-8, atol=1e-14) -> SymTensor:
    """Recover a trace-free symmetric 2-tensor from ``p(xi) = <G, xi xi>``."""
    e1 = 1j * _e(n, 0)
    plus = _evaluate(p, [e1 + _e(n, j) for j in range(1, n)])
    minus = _evaluate(p, [e1 - _e(n, j) for j in range(1, n)])
    G = np.zeros((n, n), dtype=complex)
    G[0, 1:] = G[1:, 0] = (plus - minus) / 4j
    d = (plus + minus) / 2  # G_jj - G_11
    G[0, 0] = -np.sum(d) / n
    G[np.arange(1, n), np.arange(1, n)] = d + G[0, 0]
    r2 = 1 / np.sqrt(2)
    for j, k in itertools.combinations(range(1, n), 2):
        val = complex(p(e1 + r2 * (_e(n, j) + _e(n, k))))
        known = -G[0, 0] + 2j * r2 * (G[0, j] + G[0, k]) + 0.5 * (G[j, j] + G[k, k])
        G[j, k] = G[k, j] = val - known
    T = SymTensor(n, 2, G)
    _check_residual(p, T, standard_probe_set(n, 2).vectors, rtol, atol=atol)
    return T


def recover_tracefree3(p, n: int, rtol=1e-8, atol=1e-14) -> SymTensor:
    """Recover a trace-free symmetric 3-tensor by least squares over the probe set."""
    probes = standard_probe_set(n, 3)
    basis = trace_free_basis(n, 3)
    M = probes.matrix(basis)
    if numerical_rank(M) < basis.shape[0]:
        raise RuntimeError("probe matrix lost rank on the trace-free subspace")
    rhs = _evaluate(p, probes.vectors)
    coef, *_ = np.linalg.lstsq(M, rhs, rcond=None)
    T = SymTensor(n, 3, (coef @ basis).reshape((n,) * 3))
    _check_residual(p, T, probes.vectors, rtol, values=rhs, atol=atol)
    return T


def recover_general(p, n: int, m: int, atol=1e-14) -> SymTensor:
    """Trace-free part of ``A`` from ``p(xi) = <A, xi**m>``; isotropic parts are invisible."""
    if m == 1:
        return recover_vector(p, n, atol=atol)
    if m == 2:
        return recover_tracefree2(p, n, atol=atol)
    if m == 3:
        return recover_tracefree3(p, n, atol=atol)
    raise ValueError(f"recovery is available for m in 1..3, got {m}")


def _check_residual(p, T, vectors, rtol, values=None, atol=1e-14):
    if values is None:
        values = _evaluate(p, vectors)
    pred = eval_pairing(T.full, T.rank, np.asarray(vectors))
    scale = max(np.max(np.abs(values)), 1e-300)
    res = np.max(np.abs(pred - values))
    if res > max(rtol * scale, atol):
        raise InconsistentOracleError(
            f"residual {res:.3e} on the probe set exceeds {rtol:g} x {scale:.3e}"
        )


def isotropic_part_kernel(n: int, m: int) -> np.ndarray:
    """``i_delta`` images spanning the expected probe-matrix kernel, flattened."""
    if m == 2:
        return i_delta(np.ones(1)[0], 0, n).reshape(1, -1)
    if m == 3:
        return i_delta(np.eye(n), 1, n).reshape(n, -1)
    return np.zeros((0, n**m))
