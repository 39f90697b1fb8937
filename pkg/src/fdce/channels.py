"""Geometric multipath channel synthesis.

One :class:`PropagationScene` per user holds the frequency-independent
geometry (path angles, delays, powers, LOS flag).  Uplink and downlink
channels are synthesized from the *same* scene at their own carrier
frequencies; only the small-scale complex path gains are redrawn per
carrier.  This keeps the UL and DL channel distributions matched while the
instantaneous realizations differ, which is exactly the property the
UL-trained estimator relies on.

The model is a single cluster per scene: a cluster center drawn in a 120
degree sector, Laplacian angle offsets around it, exponential delays, and
powers decaying exponentially in delay.  LOS scenes put a dominant power
fraction on a zero-offset, zero-delay specular path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidDimensionError, ValidationError
from .linalg import Shape2D
from .rng import complex_normal

LOS_MODES = ("mixed", "los-only", "nlos-only")

_SECTOR_HALF_DEG = 60.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Simulation scenario: geometry, carriers, path statistics, seed."""

    n_rx: int = 4
    n_tx: int = 8
    f_ul: float = 2.53e9
    f_dl: float = 2.73e9
    los_mode: str = "mixed"
    los_probability: float = 0.2
    l_los: int = 37
    l_nlos: int = 61
    # Intra-cluster spread; wide enough that NLOS channels are not sparse
    # in the angular domain (they carry dozens of comparable paths).
    angle_spread_deg: float = 20.0
    delay_spread_s: float = 1e-6
    power_decay: float = 1.0
    element_spacing: float = 0.5
    los_power_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.n_rx < 1 or self.n_tx < 1:
            problems.append("n_rx/n_tx must be >= 1")
        if self.f_ul == self.f_dl:
            problems.append("f_ul must differ from f_dl")
        if self.los_mode not in LOS_MODES:
            problems.append(f"los_mode must be one of {LOS_MODES}")
        if not 0.0 <= self.los_probability <= 1.0:
            problems.append("los_probability must be in [0, 1]")
        if self.l_los < 1 or self.l_nlos < 1:
            problems.append("path counts must be >= 1")
        if self.angle_spread_deg <= 0 or self.delay_spread_s <= 0:
            problems.append("spreads must be > 0")
        if not 0.0 < self.los_power_fraction < 1.0:
            problems.append("los_power_fraction must be in (0, 1)")
        if problems:
            raise ValidationError("; ".join(problems))

    @property
    def dl_shape(self) -> Shape2D:
        return Shape2D(self.n_rx, self.n_tx)

    @property
    def ul_shape(self) -> Shape2D:
        # In the uplink the base station receives, so rx/tx roles swap.
        return Shape2D(self.n_tx, self.n_rx)


@dataclass(frozen=True, eq=False)
class PropagationScene:
    """Frequency-independent multipath geometry shared by UL and DL."""

    is_los: bool
    aod_deg: np.ndarray
    aoa_deg: np.ndarray
    delay_s: np.ndarray
    power: np.ndarray
    center_aod_deg: float = 0.0
    center_aoa_deg: float = 0.0

    def __post_init__(self):
        n = len(self.power)
        if not (len(self.aod_deg) == len(self.aoa_deg) == len(self.delay_s) == n):
            raise InvalidDimensionError("scene path arrays must share one length")
        if np.any(self.delay_s < 0):
            raise InvalidDimensionError("path delays must be nonnegative")
        if abs(self.power.sum() - 1.0) > 1e-12:
            raise InvalidDimensionError("path powers must sum to 1")

    @property
    def n_paths(self) -> int:
        return len(self.power)


def sample_scene(cfg: ScenarioConfig, rng: np.random.Generator) -> PropagationScene:
    """Draw one propagation scene.

    The draw order (LOS flag, cluster centers, delays, angle offsets) is
    fixed so identical generators yield bit-identical scenes.
    """
    if cfg.los_mode == "los-only":
        is_los = True
    elif cfg.los_mode == "nlos-only":
        is_los = False
    else:
        is_los = bool(rng.random() < cfg.los_probability)

    n = cfg.l_los if is_los else cfg.l_nlos
    center_aod = float(rng.uniform(-_SECTOR_HALF_DEG, _SECTOR_HALF_DEG))
    center_aoa = float(rng.uniform(-_SECTOR_HALF_DEG, _SECTOR_HALF_DEG))

    delays = np.sort(rng.exponential(cfg.delay_spread_s, size=n))
    # Laplace scale chosen so the offset standard deviation equals the
    # configured angular spread.
    scale = cfg.angle_spread_deg / np.sqrt(2.0)
    aod = center_aod + rng.laplace(0.0, scale, size=n)
    aoa = center_aoa + rng.laplace(0.0, scale, size=n)

    raw = np.exp(-cfg.power_decay * delays / cfg.delay_spread_s)
    if is_los:
        # Specular path: earliest, exactly on the cluster center, with a
        # fixed dominant share of the total power.
        delays[0] = 0.0
        aod[0] = center_aod
        aoa[0] = center_aoa
        power = np.empty(n)
        power[0] = cfg.los_power_fraction
        if n > 1:
            rest = raw[1:] / raw[1:].sum()
            power[1:] = (1.0 - cfg.los_power_fraction) * rest
        else:
            power[0] = 1.0
    else:
        power = raw / raw.sum()

    return PropagationScene(
        is_los=is_los,
        aod_deg=aod,
        aoa_deg=aoa,
        delay_s=delays,
        power=power,
        center_aod_deg=center_aod,
        center_aoa_deg=center_aoa,
    )


def ula_steering(angle_deg: float | np.ndarray, n: int, spacing: float) -> np.ndarray:
    """ULA steering vector(s): entry k = exp(j 2 pi spacing k sin(angle)).

    Scalar input yields shape (n,); a length-L angle array yields (n, L).
    """
    if n < 1:
        raise InvalidDimensionError(f"array size must be >= 1, got {n}")
    angles = np.atleast_1d(np.asarray(angle_deg, dtype=np.float64))
    phase = 2.0 * np.pi * spacing * np.outer(np.arange(n), np.sin(np.radians(angles)))
    a = np.exp(1j * phase)
    return a[:, 0] if np.isscalar(angle_deg) or np.ndim(angle_deg) == 0 else a


def synthesize_channel(
    scene: PropagationScene,
    f_c: float,
    shape: Shape2D,
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    *,
    reverse_link: bool = False,
    gains: np.ndarray | None = None,
) -> np.ndarray:
    """Synthesize one channel matrix from a scene at carrier ``f_c``.

    H = sum_l g_l a_rx(aoa_l) a_tx(aod_l)^T exp(-2 pi j f_c tau_l) with
    g_l = sqrt(power_l) * CN(0, 1).  The Gaussian gains are drawn fresh per
    call, i.e. per (scene, carrier); pass ``gains`` to pin them in tests.

    ``reverse_link=True`` synthesizes the uplink direction (base station
    receives): the scene's departure-side angles become the receive side
    and the expected matrix shape is the transpose of the downlink one.
    """
    if reverse_link:
        expected = cfg.ul_shape
        rx_angles, tx_angles = scene.aod_deg, scene.aoa_deg
    else:
        expected = cfg.dl_shape
        rx_angles, tx_angles = scene.aoa_deg, scene.aod_deg
    if shape != expected:
        raise InvalidDimensionError(
            f"shape {shape} does not match the configured "
            f"{'uplink' if reverse_link else 'downlink'} orientation {expected}"
        )

    if gains is None:
        gains = complex_normal(rng, scene.n_paths)
    else:
        gains = np.asarray(gains, dtype=np.complex128)
        if gains.shape != (scene.n_paths,):
            raise InvalidDimensionError(
                f"gains must have shape ({scene.n_paths},), got {gains.shape}"
            )

    a_rx = ula_steering(rx_angles, shape.n_rx, cfg.element_spacing)
    a_tx = ula_steering(tx_angles, shape.n_tx, cfg.element_spacing)
    coeff = np.sqrt(scene.power) * gains * np.exp(-2j * np.pi * f_c * scene.delay_s)
    return (a_rx * coeff) @ a_tx.T
