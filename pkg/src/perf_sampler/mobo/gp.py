"""Exact Gaussian-process regression with a squared-exponential kernel."""

from __future__ import annotations

import itertools

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

JITTER_LADDER = (0.0,) + tuple(10.0**e for e in range(-10, -3))

# (length-scale multipliers of sqrt(dim), signal variances, noise variances), standardized scale
LENGTH_SCALE_GRID = tuple(np.logspace(-1.5, 0.5, 5))
SIGNAL_VARIANCE_GRID = (0.3, 1.0, 3.0)
NOISE_VARIANCE_GRID = (1e-6, 1e-3, 1e-1)


class FactorizationError(np.linalg.LinAlgError):
    pass


def se_kernel(A, B, length_scale, signal_variance):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = (
        np.sum(A * A, axis=1)[:, None]
        + np.sum(B * B, axis=1)[None, :]
        - 2.0 * A @ B.T
    )
    np.maximum(sq, 0.0, out=sq)
    return signal_variance * np.exp(-0.5 * sq / length_scale**2)


def _cholesky(K):
    n = len(K)
    eye = np.eye(n)
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(K + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError("kernel matrix not positive definite even with maximal jitter")


class GaussianProcess(RegressorMixin, BaseEstimator):
    """GP regressor with isotropic squared-exponential kernel.

    Parameters
    ----------
    hyper : "auto" or dict
        Either ``"auto"`` (maximize the log marginal likelihood over a fixed
        5x3x3 grid) or a dict with ``length_scale``, ``signal_variance`` and
        ``noise_variance``. Variances are on the standardized target scale.
    normalize_y : bool
        Standardize targets before fitting. With ``False`` the prior mean is 0.
    """

    def __init__(self, hyper="auto", normalize_y=True):
        self.hyper = hyper
        self.normalize_y = normalize_y

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True, ensure_all_finite=True)
        self.X_train_ = X
        if self.normalize_y:
            self.y_mean_ = float(np.mean(y))
            sd = float(np.std(y))
            self.y_std_ = sd if sd > 0 else 1.0
        else:
            self.y_mean_, self.y_std_ = 0.0, 1.0
        ys = (y - self.y_mean_) / self.y_std_
        self.y_train_ = y

        if isinstance(self.hyper, str):
            if self.hyper != "auto":
                raise ValueError(f"unknown hyper setting {self.hyper!r}")
            scale = np.sqrt(max(X.shape[1], 1))
            candidates = [
                (c * scale, s2, n2)
                for c, s2, n2 in itertools.product(LENGTH_SCALE_GRID, SIGNAL_VARIANCE_GRID, NOISE_VARIANCE_GRID)
            ]
        else:
            h = dict(self.hyper)
            candidates = [(float(h["length_scale"]), float(h["signal_variance"]), float(h["noise_variance"]))]

        best = None
        for ls, s2, n2 in candidates:
            K = se_kernel(X, X, ls, s2) + n2 * np.eye(len(X))
            try:
                L, jitter = _cholesky(K)
            except FactorizationError:
                continue
            alpha = solve_triangular(L.T, solve_triangular(L, ys, lower=True), lower=False)
            lml = -0.5 * ys @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(X) * np.log(2 * np.pi)
            if best is None or lml > best[0] + 1e-12:
                best = (lml, ls, s2, n2, L, alpha, jitter)
        if best is None:
            raise FactorizationError("no hyperparameter setting gave a usable factorization")
        (self.log_marginal_likelihood_, self.length_scale_, self._s2, self._n2,
         self.L_, self.alpha_, self.jitter_) = best
        self.signal_variance_ = self._s2 * self.y_std_**2
        self.noise_variance_ = self._n2 * self.y_std_**2
        return self

    def _check_query(self, X):
        check_is_fitted(self, "L_")
        X = check_array(X, dtype=float, ensure_all_finite=True, ensure_min_samples=0)
        if X.shape[1] != self.X_train_.shape[1]:
            raise ValueError(f"query has {X.shape[1]} features, model was fit on {self.X_train_.shape[1]}")
        return X

    def predict(self, X, return_var=False):
        X = self._check_query(X)
        Ks = se_kernel(X, self.X_train_, self.length_scale_, self._s2)
        mean = self.y_mean_ + self.y_std_ * (Ks @ self.alpha_)
        if not return_var:
            return mean
        V = solve_triangular(self.L_, Ks.T, lower=True)
        var = self._s2 - np.sum(V * V, axis=0)
        return mean, np.maximum(var, 0.0) * self.y_std_**2

    def posterior_covariance(self, X):
        """Joint posterior mean and covariance of the latent function at ``X``."""
        X = self._check_query(X)
        Ks = se_kernel(X, self.X_train_, self.length_scale_, self._s2)
        mean = self.y_mean_ + self.y_std_ * (Ks @ self.alpha_)
        V = solve_triangular(self.L_, Ks.T, lower=True)
        cov = se_kernel(X, X, self.length_scale_, self._s2) - V.T @ V
        return mean, cov * self.y_std_**2

    def condition_prior_sample(self, X, prior_query, prior_train, rng):
        """Turn a joint prior draw into a posterior draw (Matheron's rule).

        ``prior_query`` and ``prior_train`` are one joint sample of the
        standardized prior at ``X`` and at the training inputs. The result is
        distributed as the joint posterior of the latent function at ``X``.
        """
        X = self._check_query(X)
        Ks = se_kernel(X, self.X_train_, self.length_scale_, self._s2)
        ys = (self.y_train_ - self.y_mean_) / self.y_std_
        eps = rng.standard_normal(len(ys)) * np.sqrt(self._n2 + self.jitter_)
        r = solve_triangular(self.L_, ys - prior_train - eps, lower=True)
        w = solve_triangular(self.L_.T, r, lower=False)
        return self.y_mean_ + self.y_std_ * (np.asarray(prior_query) + Ks @ w)

    def predict_mean_gradient(self, x):
        """Gradient of the posterior mean with respect to a single query point."""
        x = self._check_query(np.atleast_2d(x))[0]
        diff = x[None, :] - self.X_train_
        k = se_kernel(x[None, :], self.X_train_, self.length_scale_, self._s2)[0]
        return -self.y_std_ * ((self.alpha_ * k) @ diff) / self.length_scale_**2


def gp_fit(X, y, hyper="auto", normalize_y=True) -> GaussianProcess:
    return GaussianProcess(hyper=hyper, normalize_y=normalize_y).fit(X, y)


def gp_predict(model: GaussianProcess, x) -> tuple[float, float]:
    """Posterior (mean, variance) at a single encoded point."""
    mean, var = model.predict(np.atleast_2d(x), return_var=True)
    return float(mean[0]), float(var[0])
