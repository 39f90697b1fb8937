"""Pilot construction, observation synthesis, and SNR bookkeeping.

The pilot matrix is the scaled DFT ``X' = F / sqrt(n_tx)`` (first ``n_p``
columns when subsampled); the vectorized observation model is
``y = X h + z`` with ``X = X'^T kron I_{n_rx}`` and circularly symmetric
Gaussian noise of variance ``sigma^2`` per entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidDimensionError
from .linalg import Shape2D, kron, unitary_dft
from .rng import complex_normal


@dataclass(frozen=True)
class PilotConfig:
    """Pilot geometry: antenna shape plus number of pilot vectors."""

    shape: Shape2D
    n_p: int

    def __post_init__(self):
        self.shape.validate()
        if not 1 <= self.n_p <= self.shape.n_tx:
            raise InvalidDimensionError(
                f"n_p must be in [1, {self.shape.n_tx}], got {self.n_p}"
            )

    @classmethod
    def full(cls, shape: Shape2D) -> "PilotConfig":
        return cls(shape=shape, n_p=shape.n_tx)

    @property
    def n_obs(self) -> int:
        return self.shape.n_rx * self.n_p


@dataclass(frozen=True)
class Observation:
    """One vectorized received pilot block."""

    y: np.ndarray
    sigma2: float
    pilot: PilotConfig

    def __post_init__(self):
        if self.sigma2 < 0:
            raise InvalidDimensionError("sigma2 must be nonnegative")
        if self.y.shape != (self.pilot.n_obs,):
            raise InvalidDimensionError(
                f"observation length {self.y.shape} does not match pilot "
                f"({self.pilot.n_obs},)"
            )


def pilot_matrix(cfg: PilotConfig) -> np.ndarray:
    """Scaled DFT pilot X' (n_tx x n_p): first n_p columns of F / sqrt(n_tx)."""
    return unitary_dft(cfg.shape.n_tx)[:, : cfg.n_p].copy()


def lift_pilot(xprime: np.ndarray, n_rx: int) -> np.ndarray:
    """Lift X' to the vectorized model: X = X'^T kron I_{n_rx}."""
    return kron(np.asarray(xprime).T, np.eye(n_rx))


def snr_to_sigma2(snr_db: float) -> float:
    """Noise variance for a target SNR, using SNR = 1 / sigma^2."""
    return float(10.0 ** (-snr_db / 10.0))


def observe(
    h: np.ndarray,
    x: np.ndarray,
    sigma2: float,
    rng: np.random.Generator,
    pilot: PilotConfig,
) -> Observation:
    """Draw one noisy observation y = X h + z.

    Noise is circularly symmetric complex Gaussian with variance ``sigma2``
    per entry (sigma2 / 2 in each real component).  ``sigma2 = 0`` is
    allowed for noiseless testing.
    """
    h = np.asarray(h, dtype=np.complex128)
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[1] != h.shape[0]:
        raise InvalidDimensionError(
            f"pilot matrix {x.shape} does not match channel of length {h.shape}"
        )
    if sigma2 < 0:
        raise InvalidDimensionError("sigma2 must be nonnegative")
    y = x @ h
    if sigma2 > 0.0:
        y = y + complex_normal(rng, y.shape[0], var=sigma2)
    return Observation(y=y, sigma2=sigma2, pilot=pilot)
