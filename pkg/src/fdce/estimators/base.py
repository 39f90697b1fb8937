"""Shared estimator plumbing: the observation context and the sklearn base.

:class:`EstimatorContext` bundles the lifted pilot matrix with the noise
level and provides the FFT fast paths that exist because the pilots are a
scaled DFT.  All batched methods treat the last axis as the vector axis and
broadcast over leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from ..exceptions import UnsupportedConfigurationError
from ..linalg import Shape2D, as_grid, as_vec
from ..pilots import PilotConfig, lift_pilot, pilot_matrix, snr_to_sigma2
from ..validation import as_batch


@dataclass(frozen=True, eq=False)
class EstimatorContext:
    """Pilot matrix, noise variance, and derived fast-path flags."""

    pilot: PilotConfig
    sigma2: float
    x: np.ndarray = field(repr=False)
    orthonormal_cols: bool
    orthonormal_rows: bool

    @classmethod
    def create(cls, shape: Shape2D, sigma2: float, n_p: int | None = None):
        pilot = PilotConfig(shape=shape, n_p=shape.n_tx if n_p is None else n_p)
        x = lift_pilot(pilot_matrix(pilot), shape.n_rx)
        gram_c = x.conj().T @ x
        gram_r = x @ x.conj().T
        return cls(
            pilot=pilot,
            sigma2=float(sigma2),
            x=x,
            orthonormal_cols=_is_identity(gram_c),
            orthonormal_rows=_is_identity(gram_r),
        )

    @classmethod
    def for_snr(cls, shape: Shape2D, snr_db: float, n_p: int | None = None):
        return cls.create(shape, snr_to_sigma2(snr_db), n_p=n_p)

    @property
    def shape(self) -> Shape2D:
        return self.pilot.shape

    @property
    def n(self) -> int:
        return self.pilot.shape.size

    @property
    def n_obs(self) -> int:
        return self.pilot.n_obs

    @property
    def full_square(self) -> bool:
        return self.pilot.n_p == self.pilot.shape.n_tx

    def require_full_square(self, what: str) -> None:
        if not self.full_square:
            raise UnsupportedConfigurationError(
                f"{what} requires full square pilots (n_p = n_tx), got "
                f"n_p={self.pilot.n_p}, n_tx={self.pilot.shape.n_tx}"
            )

    # -- FFT paths (valid because the pilot is the scaled DFT) -------------

    def apply_x(self, h: np.ndarray) -> np.ndarray:
        """X h = vec(H X'), batched over leading axes."""
        g = as_grid(np.asarray(h, dtype=np.complex128), self.shape)
        obs = np.fft.fft(g, axis=-1, norm="ortho")[..., : self.pilot.n_p]
        return as_vec(obs)

    def apply_x_adjoint(self, y: np.ndarray) -> np.ndarray:
        """X^H y = vec(Y X'^H), batched over leading axes."""
        y = np.asarray(y, dtype=np.complex128)
        obs = y.reshape(y.shape[:-1] + (self.pilot.n_p, self.shape.n_rx))
        obs = obs.swapaxes(-1, -2)  # (..., n_rx, n_p) grid
        if self.pilot.n_p < self.shape.n_tx:
            pad = [(0, 0)] * (obs.ndim - 1) + [(0, self.shape.n_tx - self.pilot.n_p)]
            obs = np.pad(obs, pad)
        return as_vec(np.fft.ifft(obs, axis=-1, norm="ortho"))

    def spectral_observation(self, y: np.ndarray) -> np.ndarray:
        """Q X^H y; reduces to a single receive-axis FFT for square pilots."""
        self.require_full_square("the spectral observation")
        g = as_grid(np.asarray(y, dtype=np.complex128), self.shape)
        return as_vec(np.fft.fft(g, axis=-2, norm="ortho"))

    def chat(self, y: np.ndarray) -> np.ndarray:
        """Scaled spectral statistic sigma^-2 |Q X^H y|^2."""
        u = self.spectral_observation(y)
        return np.abs(u) ** 2 / self.sigma2

    def spectral_channel(self, h: np.ndarray) -> np.ndarray:
        """Q h, the channel in the 2-D DFT domain (batched)."""
        g = as_grid(np.asarray(h, dtype=np.complex128), self.shape)
        return as_vec(np.fft.fft2(g, norm="ortho"))

    def estimate_from_gains(self, w: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Q^H diag(w) u for spectral gains w and spectral observation u."""
        g = as_grid(np.asarray(w) * u, self.shape)
        return as_vec(np.fft.ifft2(g, norm="ortho"))


def _is_identity(gram: np.ndarray, tol: float = 1e-10) -> bool:
    return bool(np.max(np.abs(gram - np.eye(gram.shape[0]))) < tol)


class BaseChannelEstimator(BaseEstimator):
    """sklearn-style base for channel estimators.

    Subclasses store constructor parameters verbatim (sklearn convention),
    learn state in ``fit`` under trailing-underscore attributes, and map
    observation rows to channel estimates in ``predict``.
    """

    def _make_context(self) -> EstimatorContext:
        shape = Shape2D(int(self.n_rx), int(self.n_tx)).validate()
        n_p = getattr(self, "n_pilots", None)
        return EstimatorContext.for_snr(shape, float(self.snr_db), n_p=n_p)

    def _check_observations(self, Y) -> np.ndarray:
        return as_batch(Y, self.context_.n_obs, name="Y")

    def fit(self, X=None, y=None):
        self.context_ = self._make_context()
        return self
