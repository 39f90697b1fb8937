"""Baseline channel estimators: LS, global-covariance LMMSE, structured-ML,
and genie-aided OMP on a Kronecker dictionary of oversampled DFTs.

Functional kernels operate on batches (rows = observations); the sklearn
wrapper classes at the bottom hold fitted state (covariance filter, OMP
dictionary) and expose fit/predict.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ..exceptions import (
    InvalidDimensionError,
    NumericalConditioningError,
)
from ..linalg import Shape2D, kron, pinv_solve
from ..validation import as_complex_matrix
from .base import BaseChannelEstimator, EstimatorContext


def ls_estimate(y: np.ndarray, ctx: EstimatorContext) -> np.ndarray:
    """Minimum-norm least-squares estimate, X^H y on orthonormal pilots."""
    y = np.asarray(y, dtype=np.complex128)
    if ctx.orthonormal_cols or ctx.orthonormal_rows:
        return ctx.apply_x_adjoint(y)
    return pinv_solve(ctx.x, y)


def lmmse_filter(c_glob: np.ndarray, ctx: EstimatorContext) -> np.ndarray:
    """Precomputed LMMSE filter C X^H (X C X^H + sigma^2 I)^-1."""
    c_glob = as_complex_matrix(c_glob, "c_glob")
    if c_glob.shape != (ctx.n, ctx.n):
        raise InvalidDimensionError(
            f"covariance {c_glob.shape} does not match channel size {ctx.n}"
        )
    m = ctx.x @ c_glob @ ctx.x.conj().T + ctx.sigma2 * np.eye(ctx.n_obs)
    try:
        # Solve M W^H = X C instead of inverting M explicitly.
        w_h = scipy.linalg.solve(m, ctx.x @ c_glob, assume_a="her")
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise NumericalConditioningError(f"LMMSE solve failed: {exc}") from exc
    if not np.all(np.isfinite(w_h)):
        raise NumericalConditioningError("LMMSE solve produced non-finite filter")
    return w_h.conj().T


def lmmse_global(
    y: np.ndarray,
    c_glob: np.ndarray,
    ctx: EstimatorContext,
    *,
    filt: np.ndarray | None = None,
) -> np.ndarray:
    """Global-covariance LMMSE estimate; pass ``filt`` to reuse the filter."""
    if filt is None:
        filt = lmmse_filter(c_glob, ctx)
    y = np.asarray(y, dtype=np.complex128)
    return y @ filt.T


def _clipped_spectral_gains(s: np.ndarray, sigma2: float) -> np.ndarray:
    c = np.maximum(s - sigma2, 0.0)
    den = c + sigma2
    # At sigma^2 = 0 the clipping is inactive and the filter is 1.
    return np.divide(c, den, out=np.ones_like(c), where=den > 0)


def ml_spectral_gains(y: np.ndarray, ctx: EstimatorContext) -> np.ndarray:
    """Per-coordinate ML filter c / (c + sigma^2) with c = [s - sigma^2]_+."""
    s = np.abs(ctx.spectral_observation(y)) ** 2
    return _clipped_spectral_gains(s, ctx.sigma2)


def ml_structured(y: np.ndarray, ctx: EstimatorContext) -> np.ndarray:
    """Structured-covariance ML estimate in the 2-D DFT domain."""
    ctx.require_full_square("the structured ML estimator")
    u = ctx.spectral_observation(y)
    gains = _clipped_spectral_gains(np.abs(u) ** 2, ctx.sigma2)
    return ctx.estimate_from_gains(gains, u)


@dataclass(frozen=True, eq=False)
class OmpDictionary:
    """Kronecker dictionary of oversampled DFT steering grids."""

    d: np.ndarray = field(repr=False)
    oversampling_rx: int
    oversampling_tx: int


def build_dictionary(
    shape: Shape2D, oversampling_rx: int = 2, oversampling_tx: int = 2
) -> OmpDictionary:
    """D = D_tx kron D_rx with unit-norm oversampled-DFT columns.

    The Kronecker order matches the column-major vectorization, so a
    one-path channel a_tx kron a_rx lines up with a single column.
    """
    shape.validate()
    if oversampling_rx < 1 or oversampling_tx < 1:
        raise InvalidDimensionError("oversampling factors must be >= 1")

    def axis_dictionary(n: int, factor: int) -> np.ndarray:
        g = n * factor
        grid = np.arange(g)
        return np.exp(2j * np.pi * np.outer(np.arange(n), grid) / g) / np.sqrt(n)

    d = kron(
        axis_dictionary(shape.n_tx, oversampling_tx),
        axis_dictionary(shape.n_rx, oversampling_rx),
    )
    return OmpDictionary(d=d, oversampling_rx=oversampling_rx, oversampling_tx=oversampling_tx)


def _omp_path(a: np.ndarray, y: np.ndarray, k_max: int):
    """Greedy OMP path: support and LS-refit coefficients after 1..k_max picks.

    Selection maximizes |a_j^H r|; once the residual is numerically zero the
    remaining steps reuse the current solution.
    """
    n_cols = a.shape[1]
    if k_max > a.shape[0]:
        raise InvalidDimensionError(
            f"sparsity {k_max} exceeds the number of observations {a.shape[0]}"
        )
    support: list[int] = []
    path = []
    residual = y.astype(np.complex128, copy=True)
    coef = np.zeros(0, dtype=np.complex128)
    tol = 1e-13 * max(np.linalg.norm(y), 1.0)
    mask = np.zeros(n_cols, dtype=bool)
    for _ in range(k_max):
        if np.linalg.norm(residual) > tol and len(support) < n_cols:
            corr = np.abs(a.conj().T @ residual)
            corr[mask] = -1.0
            j = int(np.argmax(corr))
            support.append(j)
            mask[j] = True
            sub = a[:, support]
            coef, *_ = np.linalg.lstsq(sub, y, rcond=None)
            residual = y - sub @ coef
        path.append((np.array(support, dtype=np.intp), coef.copy()))
    return path


def omp(a: np.ndarray, y: np.ndarray, k: int):
    """Orthogonal matching pursuit: k greedy picks with LS refits.

    Returns ``(support, coefficients)``; ``k = 0`` yields an empty support.
    """
    a = np.asarray(a, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if a.shape[0] != y.shape[0]:
        raise InvalidDimensionError(
            f"dictionary {a.shape} does not match observation of length {y.shape}"
        )
    if k == 0:
        return np.zeros(0, dtype=np.intp), np.zeros(0, dtype=np.complex128)
    return _omp_path(a, y, k)[-1]


def genie_omp_estimate(
    y: np.ndarray,
    ctx: EstimatorContext,
    dictionary: OmpDictionary,
    h_true: np.ndarray,
    k_max: int,
) -> np.ndarray:
    """Genie-aided OMP: picks the sparsity level that best matches h_true.

    Runs OMP on the effective dictionary X D and keeps, among the k_max
    prefix solutions h_k = D t_k, the one with smallest true-channel error.
    This is an evaluation-only upper bound on CS performance.
    """
    a_eff = ctx.apply_x(dictionary.d.T).T  # X @ D, column by column via FFT
    best = None
    best_err = np.inf
    for support, coef in _omp_path(a_eff, np.asarray(y, dtype=np.complex128), k_max):
        h_k = dictionary.d[:, support] @ coef if len(support) else np.zeros(ctx.n, complex)
        err = np.linalg.norm(h_true - h_k)
        if err < best_err:
            best_err = err
            best = h_k
    return best


# -- sklearn-style wrappers -------------------------------------------------


class LeastSquaresEstimator(BaseChannelEstimator):
    """Pilot-inverting LS baseline; stateless apart from the context."""

    def __init__(self, n_rx=4, n_tx=8, snr_db=0.0, n_pilots=None):
        self.n_rx = n_rx
        self.n_tx = n_tx
        self.snr_db = snr_db
        self.n_pilots = n_pilots

    def predict(self, Y):
        Y = self._check_observations(Y)
        return ls_estimate(Y, self.context_)


class LmmseEstimator(BaseChannelEstimator):
    """LMMSE with a global sample covariance learned from training channels."""

    def __init__(self, n_rx=4, n_tx=8, snr_db=0.0, n_pilots=None):
        self.n_rx = n_rx
        self.n_tx = n_tx
        self.snr_db = snr_db
        self.n_pilots = n_pilots

    def fit(self, X, y=None):
        """Fit from channel rows (m, n_rx*n_tx); learns C_glob and the filter."""
        self.context_ = self._make_context()
        h = np.asarray(X, dtype=np.complex128)
        if h.ndim != 2 or h.shape[1] != self.context_.n:
            raise InvalidDimensionError(
                f"training channels must be (m, {self.context_.n}), got {h.shape}"
            )
        self.covariance_ = h.T @ h.conj() / h.shape[0]
        self.filter_ = lmmse_filter(self.covariance_, self.context_)
        return self

    def predict(self, Y):
        Y = self._check_observations(Y)
        return lmmse_global(Y, self.covariance_, self.context_, filt=self.filter_)


class SpectralMlEstimator(BaseChannelEstimator):
    """Per-observation ML covariance estimate in the 2-D DFT domain."""

    def __init__(self, n_rx=4, n_tx=8, snr_db=0.0):
        self.n_rx = n_rx
        self.n_tx = n_tx
        self.snr_db = snr_db

    def predict(self, Y):
        Y = self._check_observations(Y)
        return ml_structured(Y, self.context_)


class GenieOmpEstimator(BaseChannelEstimator):
    """Genie-aided OMP bound; predict needs the true channels."""

    def __init__(
        self, n_rx=4, n_tx=8, snr_db=0.0, n_pilots=None,
        oversampling_rx=2, oversampling_tx=2, k_max=None,
    ):
        self.n_rx = n_rx
        self.n_tx = n_tx
        self.snr_db = snr_db
        self.n_pilots = n_pilots
        self.oversampling_rx = oversampling_rx
        self.oversampling_tx = oversampling_tx
        self.k_max = k_max

    def fit(self, X=None, y=None):
        self.context_ = self._make_context()
        self.dictionary_ = build_dictionary(
            self.context_.shape, self.oversampling_rx, self.oversampling_tx
        )
        self.k_max_ = self.k_max if self.k_max is not None else self.context_.n // 2
        return self

    def predict(self, Y, H_true):
        Y = self._check_observations(Y)
        H_true = np.asarray(H_true, dtype=np.complex128)
        out = np.empty((Y.shape[0], self.context_.n), dtype=np.complex128)
        for i in range(Y.shape[0]):
            out[i] = genie_omp_estimate(
                Y[i], self.context_, self.dictionary_, H_true[i], self.k_max_
            )
        return out
