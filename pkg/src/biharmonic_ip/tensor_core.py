"""Symmetric tensor algebra in dimension n for ranks 0-3.

Tensors are held densely as full ``n**rank`` arrays; :class:`SymTensor` keeps
them symmetric and offers a compact view keyed by sorted multi-indices. The
free functions operating on raw arrays accept leading batch axes, which keeps
the property suites vectorised.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

MAX_RANK = 3
# rank 4 only appears as an intermediate of i_delta on rank-2 inputs
_INTERNAL_MAX_RANK = 4


class UnsupportedRankError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


def _check_rank(rank, limit=MAX_RANK):
    if not 0 <= rank <= limit:
        raise UnsupportedRankError(f"rank {rank} outside supported range 0..{limit}")


@lru_cache(maxsize=None)
def multi_indices(n: int, rank: int) -> tuple[tuple[int, ...], ...]:
    """Sorted multi-indices ``i1 <= ... <= i_rank`` in lexicographic order."""
    return tuple(itertools.combinations_with_replacement(range(n), rank))


@lru_cache(maxsize=None)
def multiplicities(n: int, rank: int) -> np.ndarray:
    """Number of distinct permutations of each sorted multi-index."""
    out = []
    for idx in multi_indices(n, rank):
        counts = np.bincount(np.asarray(idx, dtype=int), minlength=n) if idx else []
        out.append(math.factorial(rank) // math.prod(math.factorial(int(c)) for c in counts))
    return np.asarray(out, dtype=float)


def storage_size(n: int, rank: int) -> int:
    return math.comb(n + rank - 1, rank)


def symmetrize(T: np.ndarray, rank: int) -> np.ndarray:
    """Average of ``T`` over all permutations of its last ``rank`` axes."""
    _check_rank(rank, _INTERNAL_MAX_RANK)
    T = np.asarray(T)
    if rank < 2:
        return T.copy()
    lead = T.ndim - rank
    perms = list(itertools.permutations(range(rank)))
    acc = np.zeros_like(T)
    for p in perms:
        acc = acc + np.transpose(T, tuple(range(lead)) + tuple(lead + q for q in p))
    return acc / len(perms)


def sym_product(S: np.ndarray, j: int, T: np.ndarray, k: int) -> np.ndarray:
    """Symmetrised tensor product of a rank-j and a rank-k tensor (batched)."""
    _check_rank(j + k, _INTERNAL_MAX_RANK)
    S = np.asarray(S)
    T = np.asarray(T)
    if j and k and S.shape[-1] != T.shape[-1]:
        raise DimensionMismatchError(f"dimension {S.shape[-1]} != {T.shape[-1]}")
    S_exp = S.reshape(S.shape + (1,) * k)
    T_lead = T.shape[: T.ndim - k]
    T_exp = T.reshape(T_lead + (1,) * j + T.shape[T.ndim - k:])
    return symmetrize(S_exp * T_exp, j + k)


def i_delta(f: np.ndarray, j: int, n: int) -> np.ndarray:
    """Symmetrised product with the Kronecker tensor, rank j -> j + 2."""
    if j not in (0, 1):
        raise UnsupportedRankError(f"i_delta is only defined here for rank 0 or 1, got {j}")
    return sym_product(f, j, np.eye(n), 2)


def j_delta(f: np.ndarray, j: int) -> np.ndarray:
    """Contraction of the last two indices, rank j -> j - 2 (zero for j < 2)."""
    _check_rank(j)
    f = np.asarray(f)
    if j < 2:
        return np.zeros(f.shape[: f.ndim - j], dtype=f.dtype)
    return np.trace(f, axis1=-2, axis2=-1)


def trace_free_decompose(A: np.ndarray, rank: int) -> tuple[np.ndarray, np.ndarray]:
    """Split ``A = A_tf + i_delta(a)`` with ``j_delta(A_tf) = 0``.

    Uses ``j_delta(i_delta c) = n c`` for scalars and
    ``j_delta(i_delta a) = (n + 2)/3 a`` for vectors.
    """
    if rank not in (2, 3):
        raise UnsupportedRankError(f"trace-free decomposition needs rank 2 or 3, got {rank}")
    A = np.asarray(A)
    n = A.shape[-1]
    if rank == 2:
        a = j_delta(A, 2) / n
    else:
        a = 3.0 / (n + 2) * j_delta(A, 3)
    return A - i_delta(a, rank - 2, n), a


_PAIRING_SUBSCRIPTS = {
    0: "...->...",
    1: "...i,...i->...",
    2: "...ij,...i,...j->...",
    3: "...ijk,...i,...j,...k->...",
}


def eval_pairing(F: np.ndarray, rank: int, xi: np.ndarray) -> np.ndarray:
    """Full symmetric sum ``sum F_{i1..il} xi_i1 ... xi_il`` (batched in F and xi)."""
    _check_rank(rank)
    F = np.asarray(F, dtype=complex)
    xi = np.asarray(xi, dtype=complex)
    if rank == 0:
        return F * np.ones(xi.shape[:-1])
    return np.einsum(_PAIRING_SUBSCRIPTS[rank], F, *([xi] * rank))


@dataclass(frozen=True, eq=False)
class SymTensor:
    """Symmetric tensor of rank 0-3 in dimension ``n``.

    ``full`` is the dense ``(n,) * rank`` array; construction symmetrises it,
    so the permutation invariance holds by construction.
    """

    n: int
    rank: int
    full: np.ndarray

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"dimension must be positive, got {self.n}")
        _check_rank(self.rank)
        arr = np.asarray(self.full)
        if arr.shape != (self.n,) * self.rank:
            raise DimensionMismatchError(
                f"expected shape {(self.n,) * self.rank}, got {arr.shape}"
            )
        arr = symmetrize(arr, self.rank)
        arr.setflags(write=False)
        object.__setattr__(self, "full", arr)

    # -- constructors ------------------------------------------------------
    @classmethod
    def zeros(cls, n, rank, dtype=float):
        return cls(n, rank, np.zeros((n,) * rank, dtype=dtype))

    @classmethod
    def from_entries(cls, n, rank, entries, dtype=None):
        """Build from ``{sorted multi-index: value}``; missing entries are zero."""
        values = list(entries.values())
        if dtype is None:
            dtype = complex if any(np.iscomplexobj(v) for v in values) else float
        arr = np.zeros((n,) * rank, dtype=dtype)
        for idx, val in entries.items():
            idx = tuple(int(i) for i in idx)
            if len(idx) != rank or any(not 0 <= i < n for i in idx):
                raise ValueError(f"multi-index {idx} invalid for n={n}, rank={rank}")
            for perm in set(itertools.permutations(idx)):
                arr[perm] = val
        return cls(n, rank, arr)

    @classmethod
    def from_compact(cls, n, rank, compact):
        compact = np.asarray(compact)
        return cls.from_entries(n, rank, dict(zip(multi_indices(n, rank), compact)),
                                dtype=compact.dtype)

    @classmethod
    def delta(cls, n):
        return cls(n, 2, np.eye(n))

    @classmethod
    def basis_vector(cls, n, i):
        e = np.zeros(n)
        e[i] = 1.0
        return cls(n, 1, e)

    # -- views -------------------------------------------------------------
    @property
    def compact(self) -> np.ndarray:
        return np.array([self.full[idx] for idx in multi_indices(self.n, self.rank)])

    @property
    def entries(self) -> dict:
        return dict(zip(multi_indices(self.n, self.rank), self.compact))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.full)

    def norm(self) -> float:
        """Max-abs entry."""
        return float(np.max(np.abs(self.full))) if self.full.size else 0.0

    # -- algebra -----------------------------------------------------------
    def __add__(self, other):
        self._check_compatible(other)
        return SymTensor(self.n, self.rank, self.full + other.full)

    def __sub__(self, other):
        self._check_compatible(other)
        return SymTensor(self.n, self.rank, self.full - other.full)

    def __mul__(self, c):
        return SymTensor(self.n, self.rank, self.full * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def __eq__(self, other):
        return (
            isinstance(other, SymTensor)
            and (self.n, self.rank) == (other.n, other.rank)
            and np.array_equal(self.full, other.full)
        )

    def allclose(self, other, atol=1e-12, rtol=0.0):
        self._check_compatible(other)
        return bool(np.allclose(self.full, other.full, atol=atol, rtol=rtol))

    def _check_compatible(self, other):
        if (self.n, self.rank) != (other.n, other.rank):
            raise DimensionMismatchError(
                f"(n, rank) mismatch: {(self.n, self.rank)} vs {(other.n, other.rank)}"
            )

    def product(self, other) -> "SymTensor":
        if self.n != other.n:
            raise DimensionMismatchError(f"dimension {self.n} != {other.n}")
        _check_rank(self.rank + other.rank)
        return SymTensor(self.n, self.rank + other.rank,
                         sym_product(self.full, self.rank, other.full, other.rank))

    def i_delta(self) -> "SymTensor":
        return SymTensor(self.n, self.rank + 2, i_delta(self.full, self.rank, self.n))

    def j_delta(self) -> "SymTensor":
        if self.rank < 2:
            return self * 0
        return SymTensor(self.n, self.rank - 2, j_delta(self.full, self.rank))

    def decompose(self) -> tuple["SymTensor", "SymTensor"]:
        tf, a = trace_free_decompose(self.full, self.rank)
        return SymTensor(self.n, self.rank, tf), SymTensor(self.n, self.rank - 2, a)

    def pair(self, xi) -> complex:
        xi = np.asarray(xi)
        if xi.shape[-1] != self.n:
            raise DimensionMismatchError(f"vector of length {xi.shape[-1]} for n={self.n}")
        return eval_pairing(self.full, self.rank, xi)

    # -- serialisation -----------------------------------------------------
    def to_dict(self) -> dict:
        out = []
        for idx, val in self.entries.items():
            val = complex(val)
            out.append([list(idx), [val.real, val.imag] if self.is_complex else val.real])
        return {"n": self.n, "rank": self.rank, "entries": out}

    @classmethod
    def from_dict(cls, data: dict) -> "SymTensor":
        entries = {}
        is_complex = False
        for idx, val in data["entries"]:
            if isinstance(val, (list, tuple)):
                val = complex(val[0], val[1])
                is_complex = True
            entries[tuple(idx)] = val
        return cls.from_entries(int(data["n"]), int(data["rank"]), entries,
                                dtype=complex if is_complex else float)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "SymTensor":
        return cls.from_dict(json.loads(text))


def symmetrize_tensor(T, rank: int, n: int | None = None) -> SymTensor:
    """Symmetrise a full ``n**rank`` array into a :class:`SymTensor`.

    ``n`` is only needed for scalars, whose shape carries no dimension.
    """
    _check_rank(rank)
    T = np.asarray(T)
    if rank and T.ndim != rank:
        raise DimensionMismatchError(f"expected {rank} axes, got {T.ndim}")
    if rank:
        if n is not None and n != T.shape[0]:
            raise DimensionMismatchError(f"array has n={T.shape[0]}, expected {n}")
        n = T.shape[0]
    elif n is None:
        raise ValueError("n is required for rank-0 tensors")
    return SymTensor(n, rank, T)


def decompose(A: SymTensor) -> tuple[SymTensor, SymTensor]:
    return A.decompose()
