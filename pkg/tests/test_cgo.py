import numpy as np
import pytest
from hypothesis import given, strategies as st

from biharmonic_ip.cgo import (
    DEFAULT_H_LIST,
    CutoffSpec,
    DecayProfile,
    DecayViolationError,
    IllConditionedFitError,
    build_cgo,
    clip_h_list,
    distance_to_gamma,
    leading_symbol_fit,
    local_symbol_extraction,
    recover_local_coefficients,
    remainder_decay_profile,
    smoothstep,
    symbol_values,
)
from biharmonic_ip.diagnostics import random_symmetric
from biharmonic_ip.grid import GridDomain
from biharmonic_ip.null_recovery import NullConstraintError, random_null_vectors
from biharmonic_ip.tensor_core import SymTensor, i_delta

XI = np.array([1j, 1.0])
H4 = [0.4, 0.3, 0.22, 0.16]


@pytest.fixture(scope="module")
def grid63():
    return GridDomain(63)


def test_smoothstep_and_distance():
    assert smoothstep(-1) == 0 and smoothstep(2) == 1 and smoothstep(0.5) == pytest.approx(0.5)
    g = GridDomain(9)
    assert distance_to_gamma(g, 0.3, 0.5) == pytest.approx(0.3)
    assert distance_to_gamma(g, 0.3, 1.4) == pytest.approx(np.hypot(0.3, 0.4))


def test_cutoff_profile():
    g = GridDomain(31)
    chi = CutoffSpec(g, 0.2)
    assert chi(0.05, 0.5) == 1.0 and chi(0.3, 0.5) == 0.0
    assert chi.support_mask.sum() > 0
    assert chi.support_function(np.array([1.0, 0.0])) < 0.2
    with pytest.raises(ValueError):
        CutoffSpec(g, 1.5)


def test_zero_cutoff_gives_pure_exponential():
    g = GridDomain(15)
    sol = build_cgo(g, XI, 0.5, chi=CutoffSpec(g, 0.0))
    assert sol.r.max_abs("all") == 0.0
    x1, x2 = g.x1, g.x2
    expected = np.exp(-1j * ((x1 - 1) * XI[0] + x2 * XI[1]) / 0.5)
    np.testing.assert_allclose(sol.u.values, expected, rtol=1e-14)


@pytest.mark.parametrize("amplitude", ["one", 0, 1])
def test_gamma_traces_vanish(grid63, amplitude):
    sol = build_cgo(grid63, XI, 0.5, amplitude)
    assert max(sol.gamma_traces()) < 1e-6
    assert sol.amplitude_tag in ("one", "x1", "x2")


def test_rejects_non_null_vectors():
    g = GridDomain(9)
    with pytest.raises(NullConstraintError):
        build_cgo(g, [1.0, 1.0], 0.5)
    with pytest.raises(ValueError):
        build_cgo(g, XI, -0.1)


def test_interior_residual_is_second_order():
    res = [build_cgo(GridDomain(N), XI, 0.5, 1).interior_residual() for N in (31, 63)]
    assert 3.3 < res[0] / res[1] < 4.7


def test_phase_weight_cancels_oscillation():
    g = GridDomain(15)
    sol = build_cgo(g, XI, 0.3)
    np.testing.assert_allclose(sol.oscillation.values * sol.phase_weight(), 1.0, rtol=1e-12)


def test_decay_profile_is_decreasing(grid63):
    prof = remainder_decay_profile(grid63, XI)
    assert prof.strictly_decreasing and prof.slope < 0 and prof.r2 > 0.9
    assert prof.check() is prof
    # frozen N = 63 profile slope
    assert prof.slope == pytest.approx(-0.618, abs=5e-3)


def test_decay_profile_frozen_n31():
    g = GridDomain(31)
    prof = remainder_decay_profile(g, XI, h_list=clip_h_list(g, XI))
    assert prof.slope == pytest.approx(-0.3757835872799437, rel=1e-8)
    assert prof.norm[0] == pytest.approx(0.08894406863391525, rel=1e-8)


def test_decay_profile_zero_cutoff():
    g = GridDomain(15)
    prof = remainder_decay_profile(g, XI, h_list=[0.4, 0.3], chi=CutoffSpec(g, 0.0))
    assert np.all(prof.norm == 0)


def test_decay_profile_converges_under_refinement():
    vals = [remainder_decay_profile(GridDomain(N), XI, h_list=[0.4, 0.3]).norm for N in (31, 63, 127)]
    d1 = np.max(np.abs(vals[1] - vals[0]))
    d2 = np.max(np.abs(vals[2] - vals[1]))
    # first-order convergence of the sampled sup norm
    assert d2 < 0.75 * d1


def test_decay_violation_is_reported():
    prof = DecayProfile(np.array([0.4, 0.3]), np.array([1.0, 2.0]), 1.0, 0.0, 1.0)
    with pytest.raises(DecayViolationError):
        prof.check()


def test_clip_h_list():
    g = GridDomain(31)
    kept = clip_h_list(g, XI)
    assert min(kept) >= 4 * g.h * np.sqrt(2)
    with pytest.raises(ValueError):
        clip_h_list(g, 10 * XI)


# -- symbol fits ------------------------------------------------------------------

def test_fit_exact_polynomial():
    h = np.array(H4)
    fit = leading_symbol_fit(h, 5 / h**3 - 2 / h + 1)
    np.testing.assert_allclose(fit.coefficients, [1, -2, 0, 5], atol=1e-10)


def test_fit_with_exponential_contamination():
    h = np.array(DEFAULT_H_LIST[3:])
    vals = 5 / h**3 - 2 / h + 1 + np.exp(-1 / h)
    fit = leading_symbol_fit(h, vals)
    assert abs(fit.coefficients[3] - 5) < 0.05


def test_fit_zeros_and_errors():
    assert np.all(leading_symbol_fit(H4, np.zeros(4)).coefficients == 0)
    with pytest.raises(ValueError):
        leading_symbol_fit([0.4, 0.3], [1.0, 2.0], 3)
    with pytest.raises(IllConditionedFitError):
        leading_symbol_fit([0.5, 0.5 + 1e-7, 0.5 + 2e-7, 0.5 + 3e-7], np.ones(4))


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=4))
def test_fit_reproduces_any_cubic(c):
    h = np.array(DEFAULT_H_LIST)
    vals = sum(ck * h**-k for k, ck in enumerate(c))
    fit = leading_symbol_fit(h, vals)
    assert np.max(np.abs(fit.coefficients - c)) < 1e-8 * (1 + max(map(abs, c)))


def test_extraction_zero_coefficients():
    out = local_symbol_extraction({}, [0.9, 0.5], XI)
    assert all(abs(v) == 0 for v in out.values())


def test_extraction_first_order_only():
    e1 = SymTensor.basis_vector(2, 0)
    fit = leading_symbol_fit(DEFAULT_H_LIST, symbol_values({1: e1}, [0.9, 0.5], XI, DEFAULT_H_LIST))
    c = fit.coefficients
    assert c[1] == pytest.approx(-e1.pair(XI), abs=1e-10)
    assert abs(c[2]) < 1e-10 and abs(c[3]) < 1e-10


def test_isotropic_rank3_is_invisible_then_recovered():
    A3 = SymTensor(2, 3, i_delta(np.array([1.0, 0.0]), 1, 2))
    for xi in random_null_vectors(np.random.default_rng(0), 2, 5):
        assert abs(local_symbol_extraction({3: A3}, [0.9, 0.5], xi)[3]) < 1e-9
    rec = recover_local_coefficients({3: A3}, [0.9, 0.5])
    assert rec.tracefree[3].norm() < 1e-9
    np.testing.assert_allclose(rec.isotropic[1].full, [1.0, 0.0], atol=1e-8)
    assert np.max(np.abs(rec.tensors[3].full - A3.full)) < 1e-8


@pytest.mark.parametrize("n", [2, 3, 4])
def test_random_constant_recovery(n):
    rng = np.random.default_rng(n)
    coeffs = {l: SymTensor(n, l, random_symmetric(rng, 1, n, l)[0]) for l in range(4)}
    x0 = np.full(n, 0.5)
    x0[0] = 0.9
    rec = recover_local_coefficients(coeffs, x0, n)
    for l in range(4):
        ref = coeffs[l].full
        assert np.max(np.abs(rec.tensors[l].full - ref)) < 1e-8 * max(1.0, np.max(np.abs(ref)))


def test_grid_remainder_term_is_small():
    # with the CGO correction included the leading pairings barely move at x1 = 0.9
    g = GridDomain(31)
    e1 = SymTensor.basis_vector(2, 0)
    h = clip_h_list(g, XI)
    analytic = symbol_values({1: e1}, [0.9, 0.5], XI, h)
    with_r = symbol_values({1: e1}, [0.9, 0.5], XI, h, grid=g)
    assert np.max(np.abs(with_r - analytic)) < 0.1 * np.max(np.abs(analytic))
