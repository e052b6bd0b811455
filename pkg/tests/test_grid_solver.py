import numpy as np
import pytest
from hypothesis import given, strategies as st

from biharmonic_ip.grid import (
    GridDomain,
    GridError,
    ScalarField,
    Segment,
    derivative_tensor,
    fd_weights,
    inward_traces,
    laplacian_nodes,
)
from biharmonic_ip.pde_solver import (
    MANUFACTURED,
    STENCIL,
    assemble_clamped_bilaplacian,
    boundary_normal_traces,
    convergence_study,
    dn_data,
    gamma_traces,
    get_solver,
    ghost_normal_derivative,
    manufactured_error,
    solve_clamped,
)


def left_values(u, order):
    grid = u.grid
    edges, *_ = grid.boundary_samples("boundary")
    return boundary_normal_traces(u, order, "boundary")[edges == "left"]


# -- grid ----------------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(GridError):
        GridDomain(3)
    with pytest.raises(GridError):
        Segment("diagonal")
    with pytest.raises(GridError):
        Segment("left", 0.6, 0.2)
    g = GridDomain(9, [("left", 0.0, 0.5), ("bottom", 0.0, 1.0)])
    assert g.gamma_mask.sum() > 0 and g.sigma_mask.sum() > 0
    assert not (g.gamma_mask & g.sigma_mask).any()


def test_masks_partition_boundary():
    g = GridDomain(15)
    b = g.boundary_mask
    assert np.array_equal(b, g.gamma_mask | g.sigma_mask | g.corner_mask)
    edges, I, J, s = g.boundary_samples("sigma")
    assert len(edges) == g.sigma_mask.sum()
    assert set(edges) == {"right", "bottom", "top"}


def test_fd_weights_reproduce_polynomials():
    w = fd_weights(np.arange(5), 3)
    t = np.arange(5.0)
    assert w @ t**3 == pytest.approx(6.0)
    assert w @ t**2 == pytest.approx(0.0, abs=1e-12)


def test_quadrature_integrates_bilinear_exactly():
    g = GridDomain(9)
    x1, x2 = g.nodes_x
    assert g.integrate(x1 * x2) == pytest.approx(0.25)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(1.0)


def test_derivative_tensor_convention():
    g = GridDomain(15)
    x1, x2 = g.nodes_x
    D = derivative_tensor(x1 * x2 + x1**2, 1, g.h)
    np.testing.assert_allclose(D[..., 0], -1j * (x2 + 2 * x1), atol=1e-10)
    np.testing.assert_allclose(D[..., 1], -1j * x1, atol=1e-10)
    D2 = derivative_tensor(x1 * x2, 2, g.h)
    np.testing.assert_allclose(D2[..., 0, 1], -1.0, atol=1e-9)
    np.testing.assert_allclose(laplacian_nodes(x1**2 + x2**2, g.h), 4.0, atol=1e-8)


def test_scalar_field_arithmetic():
    g = GridDomain(7)
    u = g.sample(lambda x, y: x + 2 * y)
    v = 2 * u - u + 1
    np.testing.assert_allclose(v.values, u.values + 1)
    with pytest.raises(GridError):
        ScalarField(g, np.zeros((3, 3)))


# -- operator ------------------------------------------------------------------

def test_stencil_annihilates_constants():
    assert sum(STENCIL.values()) == 0


def test_reduced_matrix_is_spd():
    A, _, _ = assemble_clamped_bilaplacian(GridDomain(9))
    A = A.toarray()
    np.testing.assert_allclose(A, A.T, atol=1e-9 * np.abs(A).max())
    assert np.linalg.eigvalsh(A).min() > 0


def test_constant_field_has_zero_residual():
    g = GridDomain(11)
    u = solve_clamped(g, f=np.full(g.shape, 3.0))
    np.testing.assert_allclose(u.nodes, 3.0, atol=1e-11)
    assert np.max(np.abs(get_solver(g).apply(u))) < 1e-6


def test_zero_data_gives_zero():
    g = GridDomain(15)
    assert solve_clamped(g).max_abs() == 0.0


def test_sin2_converges_second_order():
    _, errs, orders = convergence_study("sin2")
    assert np.all((orders >= 1.7) & (orders <= 2.3))
    # frozen values of the maximum nodal error
    assert errs[0] == pytest.approx(0.02606921528438355, rel=1e-8)
    assert errs[1] == pytest.approx(0.006448290612515839, rel=1e-8)


def test_expsin_converges_second_order():
    _, errs, orders = convergence_study("expsin")
    assert np.all((orders >= 1.7) & (orders <= 2.3))
    assert errs[0] == pytest.approx(5.7255156696633946e-05, rel=1e-8)


def test_x2y2_is_reproduced_exactly():
    # quartic in total degree with a constant bilaplacian: no truncation error
    assert manufactured_error("x2y2", 15) < 1e-12
    u, s = MANUFACTURED["x2y2"]
    assert s(0.3, 0.4) == 8.0


def test_manufactured_bilaplacians_match_stencil():
    # the continuous bilaplacians are consistent with the discrete operator on the true field
    g = GridDomain(63)
    for name in ("sin2", "expsin"):
        u, s = MANUFACTURED[name]
        field = g.sample(u)
        res = get_solver(g).apply(field)
        x1, x2 = g.nodes_x
        err = np.max(np.abs(res - s(x1, x2)[1:-1, 1:-1]))
        assert err < 2e-2 * np.max(np.abs(s(x1, x2)))


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_solve_is_linear(a, b, seed):
    g = GridDomain(9)
    rng = np.random.default_rng(seed)
    s1, s2 = rng.standard_normal((2,) + g.shape)
    f1, f2 = rng.standard_normal((2,) + g.shape)
    u1 = solve_clamped(g, s1, f1)
    u2 = solve_clamped(g, s2, f2)
    u = solve_clamped(g, a * s1 + b * s2, a * f1 + b * f2)
    scale = 1 + abs(a) * u1.max_abs() + abs(b) * u2.max_abs()
    assert np.max(np.abs(u.nodes - a * u1.nodes - b * u2.nodes)) < 1e-10 * scale


def test_boundary_data_is_imposed():
    g = GridDomain(15)
    f, gg = g.cauchy_data(lambda x, y: np.exp(x) * np.sin(2 * y))
    u = solve_clamped(g, None, f, gg)
    b = g.boundary_mask
    np.testing.assert_allclose(u.nodes[b], f[b], atol=1e-13)
    np.testing.assert_allclose(ghost_normal_derivative(u, "boundary"),
                               gg[g.boundary_samples("boundary")[1:3]], atol=1e-10)


# -- traces --------------------------------------------------------------------

def test_left_edge_traces_of_polynomials():
    g = GridDomain(15)
    np.testing.assert_allclose(left_values(g.sample(lambda x, y: x**2), 2), 2.0, atol=1e-9)
    np.testing.assert_allclose(left_values(g.sample(lambda x, y: x**3), 3), -6.0, atol=1e-7)
    np.testing.assert_allclose(left_values(g.sample(lambda x, y: x + 0 * y), 1), -1.0, atol=1e-12)


def test_traces_converge_at_least_second_order():
    errs = []
    for N in (15, 31, 63):
        g = GridDomain(N)
        u, s = MANUFACTURED["expsin"]
        f, gg = g.cauchy_data(u)
        x1, x2 = g.nodes_x
        U = solve_clamped(g, s(x1, x2), f, gg)
        edges, I, J, S = g.boundary_samples("boundary")
        d3 = boundary_normal_traces(U, 3, "boundary")[edges == "left"]
        errs.append(np.max(np.abs(d3 + np.sin(2 * S[edges == "left"]))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(orders >= 1.7), orders


def test_inward_traces_validate_order():
    with pytest.raises(GridError):
        inward_traces(np.zeros((9, 9)), "left", 4, 0.1)


def test_dn_data_and_gamma_traces_of_zero_field():
    g = GridDomain(9)
    u = ScalarField.zeros(g)
    dn = dn_data(u)
    assert dn.max_abs() == 0.0
    assert gamma_traces(u) == (0.0, 0.0)
