"""Vectorised self-checks of the tensor algebra and the null-cone recovery."""
from __future__ import annotations

import time

import numpy as np

from .null_recovery import (
    full_symmetric_basis,
    numerical_rank,
    probe_matrix,
    random_null_vectors,
    recover_general,
    standard_probe_set,
    trace_free_basis,
)
from .tensor_core import eval_pairing, i_delta, j_delta, symmetrize, trace_free_decompose


def random_symmetric(rng, count, n, rank, complex_=False):
    T = rng.standard_normal((count,) + (n,) * rank)
    if complex_:
        T = T + 1j * rng.standard_normal(T.shape)
    return symmetrize(T, rank)


def tensor_algebra_check(rng=None, count=1000, dims=range(2, 7), ranks=(2, 3)):
    """Worst round-trip, trace and uniqueness errors of the trace-free split."""
    rng = np.random.default_rng(rng)
    t0 = time.perf_counter()
    worst = {"roundtrip": 0.0, "trace": 0.0, "uniqueness": 0.0}
    for n in dims:
        for rank in ranks:
            A = random_symmetric(rng, count, n, rank)
            tf, a = trace_free_decompose(A, rank)
            back = tf + i_delta(a, rank - 2, n)
            scale = np.max(np.abs(A))
            worst["roundtrip"] = max(worst["roundtrip"], float(np.max(np.abs(back - A))) / scale)
            worst["trace"] = max(worst["trace"], float(np.max(np.abs(j_delta(tf, rank)))) / scale)
            _, a2 = trace_free_decompose(tf, rank)
            worst["uniqueness"] = max(worst["uniqueness"], float(np.max(np.abs(a2))) / scale)
    worst["seconds"] = time.perf_counter() - t0
    return worst


def null_recovery_check(rng=None, count=1000, dims=range(2, 7), orders=(1, 2, 3)):
    """Worst relative recovery error over random trace-free tensors and the kernel sizes.

    Recovery is batched through the probe-matrix pseudo-inverse; a sample of
    tensors also goes through the scalar oracle path.
    """
    rng = np.random.default_rng(rng)
    t0 = time.perf_counter()
    worst = 0.0
    nullity = {}
    for n in dims:
        for m in orders:
            probes = standard_probe_set(n, m)
            basis = trace_free_basis(n, m)
            M = probes.matrix(basis)
            full = full_symmetric_basis(n, m)
            Mf = probe_matrix(probes.vectors, m, full)
            nullity[(n, m)] = full.shape[0] - numerical_rank(Mf)
            T = random_symmetric(rng, count, n, m)
            if m >= 2:
                T = trace_free_decompose(T, m)[0]
            vals = eval_pairing(T[:, None], m, probes.vectors[None])
            coef = np.linalg.lstsq(M, vals.T, rcond=None)[0]
            rec = (coef.T @ basis).reshape(T.shape)
            err = np.max(np.abs(rec - T).reshape(count, -1), axis=1)
            worst = max(worst, float(np.max(err / np.max(np.abs(T).reshape(count, -1), axis=1))))
            for k in range(3):
                R = recover_general(lambda xi: eval_pairing(T[k], m, xi), n, m)
                worst = max(worst, float(np.max(np.abs(R.full - T[k])) / np.max(np.abs(T[k]))))
    return {"recovery": worst, "nullity": nullity, "seconds": time.perf_counter() - t0}


def isotropic_invisibility_check(rng=None, count=10_000, n=3):
    """Max of ``|<i_delta a, xi^3>| / (|a| |xi|^3)`` over random pairs."""
    rng = np.random.default_rng(rng)
    a = rng.standard_normal((count, n))
    xi = random_null_vectors(rng, n, count)
    vals = eval_pairing(i_delta(a, 1, n), 3, xi)
    scale = np.linalg.norm(a, axis=1) * np.linalg.norm(xi, axis=1) ** 3
    return float(np.max(np.abs(vals) / scale))
