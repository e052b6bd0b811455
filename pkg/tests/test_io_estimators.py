import json

import numpy as np
import pytest
from sklearn.base import clone

from biharmonic_ip.cgo import remainder_decay_profile
from biharmonic_ip.diagnostics import (
    isotropic_invisibility_check,
    null_recovery_check,
    random_symmetric,
    tensor_algebra_check,
)
from biharmonic_ip.estimators import CoefficientRecovery, LocalSymbolExtractor, TraceFreeDecomposer
from biharmonic_ip.grid import GridDomain
from biharmonic_ip.io import (
    load_model,
    model_from_dict,
    read_dn_csv,
    read_field,
    save_model,
    write_decay_csv,
    write_dn_csv,
    write_field,
    write_json,
)
from biharmonic_ip.pde_solver import dn_data, solve_clamped
from biharmonic_ip.semilinear import CoefficientModel
from biharmonic_ip.tensor_core import SymTensor, i_delta, j_delta


@pytest.fixture
def field():
    g = GridDomain(9, [("left", 0.0, 0.5)])
    f, gg = g.cauchy_data(lambda x, y: np.exp(1j * x) * y * x**2)
    return solve_clamped(g, None, f, gg)


@pytest.mark.parametrize("suffix", [".csv", ".bin"])
def test_field_round_trip(tmp_path, field, suffix):
    path = write_field(tmp_path / f"u{suffix}", field)
    back = read_field(path)
    np.testing.assert_array_equal(back.nodes, field.nodes)
    assert back.grid.N == 9 and back.grid.gamma == field.grid.gamma
    with pytest.raises(ValueError):
        read_field(path, GridDomain(11))


def test_dn_round_trip(tmp_path, field):
    dn = dn_data(field)
    path = write_dn_csv(tmp_path / "dn.csv", dn)
    back = read_dn_csv(path, field.grid)
    np.testing.assert_array_equal(back.d2, dn.d2)
    np.testing.assert_array_equal(back.d3, dn.d3)


def test_model_files(tmp_path):
    data = {"n": 2, "coefficients": [
        {"l": 0, "k": 1, "constant": 1.0},
        {"l": 1, "k": 1, "constant": [1.0, 0.0]},
        {"l": 2, "k": 2, "constant": {"n": 2, "rank": 2, "entries": [[[0, 1], [0.5, 0.0]]]}},
    ]}
    model = model_from_dict(data)
    assert model.get(1, 1).terms[(0, 0)] == SymTensor.basis_vector(2, 0)
    assert model.get(2, 2).terms[(0, 0)].full[1, 0] == 0.5
    path = save_model(tmp_path / "m.json", model)
    assert load_model(path).to_dict() == model.to_dict()
    with pytest.raises(ValueError):
        model_from_dict({"coefficients": [{"l": 0, "k": 1}]})


def test_json_and_decay_csv(tmp_path):
    out = write_json(tmp_path / "r.json", {"z": 1 + 2j, "a": np.array([1j, 2]), "f": np.float64(3),
                                            "t": SymTensor.basis_vector(2, 1)})
    data = json.loads(out.read_text())
    assert data["z"] == [1.0, 2.0] and data["a"] == [[0.0, 1.0], [2.0, 0.0]] and data["f"] == 3.0
    g = GridDomain(15)
    prof = remainder_decay_profile(g, np.array([1j, 1.0]), h_list=[0.4, 0.3])
    lines = write_decay_csv(tmp_path / "d.csv", prof).read_text().splitlines()
    assert lines[0] == "h,norm,fit_residual" and len(lines) == 3


# -- estimators --------------------------------------------------------------------

def test_trace_free_decomposer(rng):
    X = random_symmetric(rng, 20, 3, 3)
    est = TraceFreeDecomposer(rank=3).fit(X)
    tf = est.transform(X)
    a = est.isotropic_part(X)
    np.testing.assert_allclose(tf + i_delta(a, 1, 3), X, atol=1e-12)
    assert np.max(np.abs(j_delta(tf, 3))) < 1e-12
    assert clone(est).get_params() == {"rank": 3}
    with pytest.raises(ValueError):
        TraceFreeDecomposer(rank=2).fit(X)


def test_local_symbol_extractor():
    rng = np.random.default_rng(4)
    coeffs = {l: SymTensor(2, l, random_symmetric(rng, 1, 2, l)[0]) for l in range(4)}
    est = LocalSymbolExtractor().fit(coeffs)
    for l in range(4):
        assert np.max(np.abs(est.tensors_[l].full - coeffs[l].full)) < 1e-8


def test_coefficient_recovery_estimator():
    est = CoefficientRecovery(N=31, n_tests=6, workers=2).fit(CoefficientModel({(0, 1): 1.0}))
    assert abs(est.coef_[0] - 1) < 0.05
    assert est.labels_ == ["A0[]"]
    assert est.predict().shape == (126,)
    assert est.reference_.get(0, 1) is not None


# -- diagnostics ------------------------------------------------------------------

def test_diagnostics_small_batches():
    alg = tensor_algebra_check(0, 50)
    assert max(alg["roundtrip"], alg["trace"], alg["uniqueness"]) < 1e-12
    rec = null_recovery_check(0, 50)
    assert rec["recovery"] < 1e-10
    assert rec["nullity"][(4, 3)] == 4 and rec["nullity"][(4, 2)] == 1
    assert isotropic_invisibility_check(0, 500) < 1e-12
