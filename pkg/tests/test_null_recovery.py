import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from biharmonic_ip.null_recovery import (
    InconsistentOracleError,
    NullConstraintError,
    NullVector,
    full_symmetric_basis,
    isotropic_part_kernel,
    make_null_vector,
    numerical_rank,
    probe_matrix,
    random_null_vectors,
    recover_general,
    recover_tracefree2,
    recover_tracefree3,
    recover_vector,
    standard_probe_set,
    trace_free_basis,
)
from biharmonic_ip.tensor_core import eval_pairing, i_delta, symmetrize, trace_free_decompose


def oracle(T, m):
    return lambda xi: eval_pairing(T, m, np.asarray(xi))


def random_tracefree(rng, n, m, complex_=False):
    T = rng.standard_normal((n,) * m)
    if complex_:
        T = T + 1j * rng.standard_normal((n,) * m)
    T = symmetrize(T, m)
    return trace_free_decompose(T, m)[0] if m >= 2 else T


def test_make_null_vector_e1_e2():
    xi = make_null_vector([1, 0], [0, 1]).xi
    np.testing.assert_array_equal(xi, [1j, 1])
    assert np.dot(xi, xi) == 0


def test_make_null_vector_rejects_parallel():
    with pytest.raises(NullConstraintError):
        make_null_vector([1, 0], [1, 0])


def test_make_null_vector_orthonormal_pair():
    a = np.array([1.0, 0, 0])
    b = np.array([0, 1.0, 1.0]) / np.sqrt(2)
    xi = make_null_vector(a, b).xi
    assert abs(np.dot(xi, xi)) < 1e-15


def test_null_vector_sign_convention():
    with pytest.raises(NullConstraintError):
        NullVector([-1j, 1])


def test_random_null_vectors(rng):
    xi = random_null_vectors(rng, 4, 100)
    assert np.max(np.abs(np.sum(xi * xi, axis=1))) < 1e-12
    assert np.all(xi[:, 0].imag >= 0)


def test_probe_set_sizes():
    assert len(standard_probe_set(2, 1)) == 2
    P = standard_probe_set(3, 3)
    assert numerical_rank(P.matrix()) == 10 - 3
    assert numerical_rank(standard_probe_set(2, 3).matrix()) == 4 - 2


@pytest.mark.parametrize("n", range(2, 7))
@pytest.mark.parametrize("m", [2, 3])
def test_kernel_is_span_of_i_delta(n, m):
    probes = standard_probe_set(n, m)
    full = full_symmetric_basis(n, m)
    M = probe_matrix(probes.vectors, m, full)
    nullity = full.shape[0] - numerical_rank(M)
    assert nullity == (1 if m == 2 else n)
    # the i_delta images lie in the kernel
    K = isotropic_part_kernel(n, m)
    vals = np.array([eval_pairing(k.reshape((n,) * m), m, probes.vectors) for k in K])
    assert np.max(np.abs(vals)) < 1e-12
    assert full.shape[0] == math.comb(n + m - 1, m)
    assert trace_free_basis(n, m).shape[0] == full.shape[0] - nullity


def test_recover_vector_examples(rng):
    assert recover_vector(lambda xi: 0.0, 3).norm() == 0
    H = recover_vector(oracle(np.array([1.0, 0.0]), 1), 2)
    np.testing.assert_allclose(H.full, [1, 0], atol=1e-15)
    Hc = rng.standard_normal(5) + 1j * rng.standard_normal(5)
    assert np.max(np.abs(recover_vector(oracle(Hc, 1), 5).full - Hc)) < 1e-12


def test_recover_tracefree2_examples(rng):
    assert recover_tracefree2(lambda xi: 0.0, 3).norm() == 0
    G = np.diag([1.0, -1.0])
    # <G, xi xi> = G22 - G11 +- 2i G12 = -2 on both probes
    for xi in ([1j, 1], [1j, -1]):
        assert eval_pairing(G, 2, np.array(xi)) == pytest.approx(-2)
    np.testing.assert_allclose(recover_tracefree2(oracle(G, 2), 2).full, G, atol=1e-14)
    G4 = random_tracefree(rng, 4, 2)
    assert np.max(np.abs(recover_tracefree2(oracle(G4, 2), 4).full - G4)) < 1e-10


def test_recover_tracefree3_examples(rng):
    assert recover_tracefree3(lambda xi: 0.0, 3).norm() == 0
    assert trace_free_basis(2, 3).shape[0] == 2
    F = random_tracefree(rng, 2, 3)
    assert np.max(np.abs(recover_tracefree3(oracle(F, 3), 2).full - F)) < 1e-10
    basis = trace_free_basis(3, 3)
    assert basis.shape[0] == 7
    for row in basis:
        B = row.reshape(3, 3, 3)
        assert np.max(np.abs(recover_tracefree3(oracle(B, 3), 3).full - B)) < 1e-12


def test_recover_general_examples(rng):
    a = rng.standard_normal(3)
    assert recover_general(oracle(i_delta(a, 1, 3), 3), 3, 3).norm() < 1e-12
    A = symmetrize(rng.standard_normal((4, 4, 4)), 3)
    tf, _ = trace_free_decompose(A, 3)
    assert np.max(np.abs(recover_general(oracle(A, 3), 4, 3).full - tf)) < 1e-10
    H = rng.standard_normal(3)
    assert recover_general(oracle(H, 1), 3, 1) == recover_vector(oracle(H, 1), 3)


def test_inconsistent_oracle_is_reported():
    # the rank-1 probes are redundant in the first component, so a quadratic shows up
    with pytest.raises(InconsistentOracleError):
        recover_vector(lambda xi: xi[1] ** 2, 3)


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_rank3_probe_set_is_exactly_determining(n):
    # square system: any oracle is fitted exactly, so no consistency check is possible
    assert len(standard_probe_set(n, 3)) == trace_free_basis(n, 3).shape[0]


@given(st.integers(2, 6), st.sampled_from([1, 2, 3]), st.integers(0, 2**32 - 1), st.booleans())
def test_round_trip_property(n, m, seed, complex_):
    T = random_tracefree(np.random.default_rng(seed), n, m, complex_)
    R = recover_general(oracle(T, m), n, m)
    assert np.max(np.abs(R.full - T)) <= 1e-10 * np.max(np.abs(T))


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_isotropic_invisibility_property(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n)
    xi = random_null_vectors(rng, n, 20)
    vals = eval_pairing(i_delta(a, 1, n), 3, xi)
    assert np.all(np.abs(vals) < 1e-12 * np.linalg.norm(a) * np.linalg.norm(xi, axis=1) ** 3)


def test_vector_absolute_tolerance_admits_fit_noise():
    def p(xi):
        return 2e-14 if abs(xi[2]) > 0 else 0.0

    with pytest.raises(InconsistentOracleError):
        recover_vector(p, 3)
    H = recover_vector(p, 3, atol=1e-12)
    assert np.max(np.abs(H.full)) < 1e-13
