"""Statistical core: PCA compression, generalized Gaussian fitting, and
the closed-form KL divergence between two fitted distributions.

The zero-mean generalized Gaussian density used throughout is

    p(x; alpha, sigma) = alpha / (2 beta Gamma(1/alpha)) * exp(-(|x|/beta)^alpha)

with auxiliary scale beta = sigma * sqrt(Gamma(1/alpha) / Gamma(3/alpha)).
alpha=1 gives a Laplace density, alpha=2 a Gaussian. Parameters are
estimated by moment matching: sigma from the second moment, alpha by
inverting the moment-ratio function r(alpha) with bisection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import NumericError, ValidationError
from .validation import check_matrix, check_samples

ALPHA_MIN = 0.05
ALPHA_MAX = 20.0

# Absolute KLD values above -1e-12 but below 0 are floating-point residue
# and clamped to 0; anything more negative indicates a broken formula.
_KLD_NEGATIVE_TOL = -1e-12


@dataclass(frozen=True)
class GgdParams:
    """Fitted zero-mean generalized Gaussian parameters.

    alpha is the dimensionless shape, sigma the scale in the units of the
    fitted samples. alpha is restricted to the estimator search range.
    """

    alpha: float
    sigma: float

    def __post_init__(self):
        if not np.isfinite(self.alpha) or not (ALPHA_MIN <= self.alpha <= ALPHA_MAX):
            raise ValidationError(
                f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {self.alpha}")
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")

    @property
    def beta(self) -> float:
        """Auxiliary scale sigma * sqrt(Gamma(1/alpha)/Gamma(3/alpha))."""
        a = self.alpha
        return float(self.sigma * np.exp(0.5 * (gammaln(1 / a) - gammaln(3 / a))))

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "sigma": self.sigma}


def ggd_logpdf(params: GgdParams, x) -> np.ndarray:
    """Log-density of the zero-mean generalized Gaussian."""
    a = params.alpha
    b = params.beta
    x = np.asarray(x, dtype=np.float64)
    log_norm = np.log(a) - np.log(2.0 * b) - gammaln(1 / a)
    return log_norm - (np.abs(x) / b) ** a


def ggd_pdf(params: GgdParams, x) -> np.ndarray:
    """Density of the zero-mean generalized Gaussian; symmetric in x."""
    return np.exp(ggd_logpdf(params, x))


def moment_ratio(alpha) -> np.ndarray:
    """Moment-ratio function r(alpha) = Gamma(2/a)^2 / (Gamma(1/a) Gamma(3/a)).

    Strictly increasing on the search range, with values in (0, 3/4).
    Equals (E|x|)^2 / E[x^2] for a generalized Gaussian of shape alpha.
    """
    a = np.asarray(alpha, dtype=np.float64)
    if np.any(a <= 0):
        raise ValidationError("alpha must be positive")
    return np.exp(2 * gammaln(2 / a) - gammaln(1 / a) - gammaln(3 / a))


def _invert_moment_ratio(target: float, tol: float = 1e-8) -> float:
    """Solve r(alpha) = target by bisection on [ALPHA_MIN, ALPHA_MAX].

    Out-of-range targets are clamped to the nearest bound with a warning.
    """
    lo, hi = ALPHA_MIN, ALPHA_MAX
    r_lo = float(moment_ratio(lo))
    r_hi = float(moment_ratio(hi))
    if target <= r_lo:
        warnings.warn(
            f"moment ratio {target:.6g} below r({lo}); clamping alpha to {lo}")
        return lo
    if target >= r_hi:
        warnings.warn(
            f"moment ratio {target:.6g} above r({hi}); clamping alpha to {hi}")
        return hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if float(moment_ratio(mid)) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def fit_ggd(samples, min_samples_warn: int = 1000) -> GgdParams:
    """Fit (alpha, sigma) to pooled samples by moment matching.

    sigma is the root of the raw second moment; alpha inverts
    r(alpha) = (mean |x|)^2 / mean(x^2). The sample mean is not
    re-subtracted: upstream PCA centering already guarantees near-zero
    mean, which is asserted (|mean| <= 1e-3 sigma, warning otherwise).
    """
    x = check_samples(samples)
    if x.size < min_samples_warn:
        warnings.warn(
            f"fitting a distribution to only {x.size} samples; "
            f"estimates may be unstable below {min_samples_warn}")
    m2 = float(np.mean(x * x))
    if m2 == 0.0 or np.ptp(x) == 0.0:
        raise NumericError("degenerate sample set: all values equal")
    sigma = float(np.sqrt(m2))
    mean = float(np.mean(x))
    if abs(mean) > 1e-3 * sigma:
        warnings.warn(
            f"sample mean {mean:.4g} is not negligible against sigma {sigma:.4g}; "
            "inputs should be centered before fitting")
    m1 = float(np.mean(np.abs(x)))
    rho = m1 * m1 / m2
    alpha = _invert_moment_ratio(rho)
    return GgdParams(alpha=alpha, sigma=sigma)


def ggd_kld(p: GgdParams, q: GgdParams) -> float:
    """Closed-form KL divergence D(p || q) of two zero-mean generalized
    Gaussians, evaluated through log-gamma to stay finite near the edges
    of the shape range.

    Depends on the scales only through sigma_p / sigma_q. Tiny negative
    floating-point residue is clamped to 0.
    """
    if not isinstance(p, GgdParams) or not isinstance(q, GgdParams):
        raise ValidationError("ggd_kld expects two GgdParams")
    a1, s1 = p.alpha, p.sigma
    a2, s2 = q.alpha, q.sigma
    lg = gammaln
    log_term = (
        np.log(a1) - np.log(a2) + np.log(s2) - np.log(s1)
        + lg(1 / a2) - lg(1 / a1)
        + 0.5 * (lg(1 / a2) + lg(3 / a1) - lg(1 / a1) - lg(3 / a2))
    )
    # log of (beta_p / beta_q), expressed in sigma and gamma terms
    log_q = (
        np.log(s1) - np.log(s2)
        + 0.5 * (lg(1 / a1) + lg(3 / a2) - lg(1 / a2) - lg(3 / a1))
    )
    power_term = np.exp(a2 * log_q + lg((a2 + 1) / a1) - lg(1 / a1))
    value = float(log_term + power_term - 1.0 / a1)
    if value < 0.0:
        if value < _KLD_NEGATIVE_TOL:
            raise NumericError(
                f"closed-form divergence produced {value}; parameters "
                f"p={p}, q={q} are outside the numerically supported range")
        value = 0.0
    return value


def sample_ggd(params: GgdParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. samples from a zero-mean generalized Gaussian.

    Uses the gamma-transform route: if T ~ Gamma(1/alpha, 1) then
    sign * beta * T^(1/alpha) has the target law.
    """
    a = params.alpha
    t = rng.gamma(shape=1.0 / a, scale=1.0, size=size)
    signs = rng.integers(0, 2, size=size) * 2 - 1
    return params.beta * t ** (1.0 / a) * signs


class PcaCompressor(BaseEstimator, TransformerMixin):
    """Mean-centered PCA projection with a Gram-matrix fast path.

    When the number of rows is smaller than the number of columns (the
    typical case for flattened deep features) the projection is computed
    from the N x N Gram eigendecomposition; otherwise from the full
    covariance eigendecomposition. Both routes produce identical
    projections up to the deterministic sign rule: each basis column is
    flipped so its largest-magnitude entry is positive.

    Parameters
    ----------
    n_components : target dimension D, 1 <= D <= min(N-1, n_columns).
    check : verify basis orthonormality (max |P^T P - I| <= 1e-8) at fit.

    Attributes
    ----------
    mean_ : column means of the fit matrix, float64, shape (n_columns,).
    components_ : basis with orthonormal columns, float64,
        shape (n_columns, n_components), ordered by descending variance.
    explained_variance_ : per-component variance of the projected fit.
        data (denominator N, matching the variance of the coordinates).
    fitted_on_ : dataset identifier recorded at fit time.
    """

    _ORTHONORMALITY_TOL = 1e-8
    # column-block size for float64 accumulation of the Gram matrix
    _BLOCK = 8192

    def __init__(self, n_components: int = 300, check: bool = True):
        self.n_components = n_components
        self.check = check

    def fit(self, Y, y=None, dataset_id: str | None = None):
        Y = check_matrix(Y, "feature matrix")
        n, f = Y.shape
        d = int(self.n_components)
        if n < 2:
            raise ValidationError("PCA requires at least 2 rows")
        if d < 1 or d > min(n - 1, f):
            raise ValidationError(
                f"n_components={d} must satisfy 1 <= D <= min(N-1={n - 1}, "
                f"columns={f})")
        mean = Y.mean(axis=0, dtype=np.float64)
        if n < f:
            basis, variances = self._fit_gram(Y, mean, d)
        else:
            basis, variances = self._fit_covariance(Y, mean, d)
        basis = self._apply_sign_rule(basis)
        if self.check:
            gram = basis.T @ basis
            resid = np.max(np.abs(gram - np.eye(d)))
            if resid > self._ORTHONORMALITY_TOL:
                raise NumericError(
                    f"projection basis lost orthonormality (residual {resid:.3e})")
        self.mean_ = mean
        self.components_ = basis
        self.explained_variance_ = variances
        self.fitted_on_ = dataset_id
        self._mean32 = None
        self._components32 = None
        return self

    def _centered_f64(self, Y: np.ndarray, mean: np.ndarray) -> np.ndarray:
        return Y.astype(np.float64, copy=False) - mean

    def _rank_check(self, eigvals: np.ndarray, d: int, n: int, f: int):
        # eigvals descending; numerical rank against a relative threshold
        thresh = eigvals[0] * max(n, f) * np.finfo(np.float64).eps
        rank = int(np.count_nonzero(eigvals > max(thresh, 0.0)))
        if rank < d:
            raise NumericError(
                f"centered data has numerical rank {rank}, cannot extract "
                f"{d} components")

    def _fit_gram(self, Y, mean, d):
        n, f = Y.shape
        gram = np.zeros((n, n), dtype=np.float64)
        for start in range(0, f, self._BLOCK):
            block = self._centered_f64(Y[:, start:start + self._BLOCK],
                                       mean[start:start + self._BLOCK])
            gram += block @ block.T
        eigvals, eigvecs = np.linalg.eigh(gram)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        eigvecs = eigvecs[:, order]
        self._rank_check(eigvals, d, n, f)
        scale = 1.0 / np.sqrt(eigvals[:d])
        basis = np.zeros((f, d), dtype=np.float64)
        for start in range(0, f, self._BLOCK):
            block = self._centered_f64(Y[:, start:start + self._BLOCK],
                                       mean[start:start + self._BLOCK])
            basis[start:start + self._BLOCK] = block.T @ (eigvecs[:, :d] * scale)
        return basis, eigvals[:d] / n

    def _fit_covariance(self, Y, mean, d):
        n, f = Y.shape
        yc = self._centered_f64(Y, mean)
        scatter = yc.T @ yc
        eigvals, eigvecs = np.linalg.eigh(scatter)
        order = np.argsort(eigvals)[::-1]
        eigvals = eigvals[order]
        eigvecs = eigvecs[:, order]
        self._rank_check(eigvals, d, n, f)
        return eigvecs[:, :d], eigvals[:d] / n

    @staticmethod
    def _apply_sign_rule(basis: np.ndarray) -> np.ndarray:
        idx = np.argmax(np.abs(basis), axis=0)
        signs = np.sign(basis[idx, np.arange(basis.shape[1])])
        signs[signs == 0] = 1.0
        return basis * signs

    def transform(self, Y) -> np.ndarray:
        """Project rows: X = (Y - mean) P.

        float32 input takes a float32 compute path (adequate for moment
        statistics and several times faster on large feature matrices);
        anything else is projected in float64.
        """
        Y = check_matrix(Y, "feature matrix")
        if Y.shape[1] != self.components_.shape[0]:
            raise ValidationError(
                f"matrix has {Y.shape[1]} columns, projection expects "
                f"{self.components_.shape[0]}")
        if Y.dtype == np.float32:
            if self._components32 is None:
                self._mean32 = self.mean_.astype(np.float32)
                self._components32 = self.components_.astype(np.float32)
            return (Y - self._mean32) @ self._components32
        return (Y.astype(np.float64, copy=False) - self.mean_) @ self.components_
