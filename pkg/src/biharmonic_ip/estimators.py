"""scikit-learn style wrappers around the decomposition and recovery routines."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .cgo import DEFAULT_H_LIST, recover_local_coefficients
from .grid import GridDomain
from .reconstruct import CoefficientBasis, random_test_functions, recover_w, taylor_cascade
from .semilinear import CoefficientModel, dn_oracle
from .tensor_core import trace_free_decompose


class TraceFreeDecomposer(TransformerMixin, BaseEstimator):
    """Maps batches of rank-2 or rank-3 tensors to their trace-free parts.

    Parameters
    ----------
    rank : {2, 3}
        Tensor rank of the input rows. Input arrays have shape
        ``(n_samples, n, ..., n)``.
    """

    def __init__(self, rank=2):
        self.rank = rank

    def fit(self, X, y=None):
        X = np.asarray(X)
        if X.ndim != self.rank + 1 or len(set(X.shape[1:])) != 1:
            raise ValueError(f"expected shape (n_samples,) + (n,) * {self.rank}, got {X.shape}")
        self.n_dim_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_dim_")
        tf, _ = trace_free_decompose(np.asarray(X), self.rank)
        return tf

    def isotropic_part(self, X):
        """The lower-rank tensors ``a`` with ``X = tf + i_delta(a)``."""
        check_is_fitted(self, "n_dim_")
        return trace_free_decompose(np.asarray(X), self.rank)[1]


class LocalSymbolExtractor(BaseEstimator):
    """Recovers constant coefficient tensors at a point from symbol fits.

    ``fit`` takes the coefficient dictionary ``{rank: SymTensor}`` and sets
    ``tensors_``, ``tracefree_`` and ``isotropic_``.
    """

    def __init__(self, x0=(0.9, 0.5), h_list=DEFAULT_H_LIST):
        self.x0 = x0
        self.h_list = h_list

    def fit(self, coeffs, y=None):
        rec = recover_local_coefficients(coeffs, np.asarray(self.x0, dtype=float),
                                         h_values=self.h_list)
        self.tensors_ = rec.tensors
        self.tracefree_ = rec.tracefree
        self.isotropic_ = rec.isotropic
        return self


class CoefficientRecovery(BaseEstimator):
    """End-to-end recovery of Taylor coefficient differences from simulated DN data.

    ``fit(true_model, reference_model)`` runs the cascade for orders
    ``1 .. m_max - 1`` and stores ``results_`` (one per order), ``coef_``
    (coefficients of the last order) and ``reference_`` (updated model).
    """

    def __init__(self, N=31, m_max=2, eps=1e-3, ranks=(0,), degree=0, n_tests=6,
                 max_freq=1.0, lam=None, random_state=0, workers=1):
        self.N = N
        self.m_max = m_max
        self.eps = eps
        self.ranks = ranks
        self.degree = degree
        self.n_tests = n_tests
        self.max_freq = max_freq
        self.lam = lam
        self.random_state = random_state
        self.workers = workers

    def fit(self, true_model: CoefficientModel, reference_model: CoefficientModel | None = None):
        grid = GridDomain(self.N)
        ref = reference_model if reference_model is not None else CoefficientModel(n=true_model.n)
        tests = random_test_functions(grid, self.n_tests, self.random_state, self.max_freq)
        tests.validate()
        basis = CoefficientBasis.polynomial(tuple(self.ranks), self.degree).check_independence(grid)
        self.grid_ = grid
        self.tests_ = tests
        self.basis_ = basis
        if self.m_max == 2:
            res = recover_w(dn_oracle(true_model, grid), dn_oracle(ref, grid), 2, basis, tests,
                            self.lam, self.eps, workers=self.workers)
            self.results_ = [res]
            self.reference_ = ref.with_added(1, dict(res.W.items()))
        else:
            self.results_, self.reference_ = taylor_cascade(
                dn_oracle(true_model, grid), ref, grid, self.m_max, basis, tests, self.lam,
                self.eps, workers=self.workers)
        self.coef_ = self.results_[-1].coef
        self.labels_ = self.results_[-1].labels
        return self

    def predict(self, tuples=None):
        """Fitted volume functionals of the last order, one per test tuple."""
        check_is_fitted(self, "results_")
        return np.array([v for _, v in self.results_[-1].pairs])
