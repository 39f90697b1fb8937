"""Two-layer circular-convolution estimator on the spectral statistic.

The estimator applies learned spectral gains to the least-squares spectrum:

    chat = sigma^-2 |Q X^H y|^2
    w    = a2 * psi(a1 * chat + b1) + b2        (* = 2-D circular conv)
    hhat = Q^H diag(w) Q X^H y

with psi either softmax over the whole grid or elementwise ReLU.  With
softmax activation the structured grid estimator is exactly representable
(kernels = prototype gain column and its index-reverse), which anchors the
implementation to the closed-form filter bank.

Everything is FFT-based, so one estimate costs O(N log N) in N = n_rx*n_tx.
Gradients are reverse-mode through the spectral filter and both
convolutions; the adjoint of convolution with a kernel is correlation with
it, i.e. convolution with the index-reversed kernel.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..datasets import Dataset
from ..exceptions import (
    DegenerateDataError,
    InvalidDimensionError,
    ParseError,
    TrainingDivergedError,
    ValidationError,
)
from ..linalg import Shape2D, as_grid, as_vec, circ_reverse
from ..pilots import snr_to_sigma2
from ..rng import complex_normal, derived_rng
from .base import BaseChannelEstimator, EstimatorContext
from .grid import StructuredBank

ACTIVATIONS = ("relu", "softmax")
_FORMAT_VERSION = 1


@dataclass
class CnnParams:
    """Two real convolution kernels and two real bias grids (vectorized)."""

    a1: np.ndarray
    b1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray
    activation: str
    shape: Shape2D

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidDimensionError(f"unknown activation {self.activation!r}")
        n = self.shape.size
        for name in ("a1", "b1", "a2", "b2"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (n,):
                raise InvalidDimensionError(
                    f"{name} must have length {n}, got {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise InvalidDimensionError(f"{name} contains non-finite values")
            setattr(self, name, arr)

    def copy(self) -> "CnnParams":
        return CnnParams(
            self.a1.copy(), self.b1.copy(), self.a2.copy(), self.b2.copy(),
            self.activation, self.shape,
        )


@dataclass
class CnnGradients:
    """Loss gradients, same array shapes as the parameters."""

    a1: np.ndarray
    b1: np.ndarray
    a2: np.ndarray
    b2: np.ndarray


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and schedule settings (none of these come from theory;
    they are stated, reproducible defaults)."""

    epochs: int = 10
    batch_size: int = 20
    batches_per_epoch: int = 450
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    snr_train_db: float = 5.0
    seed: int = 0
    init: str = "ml-identity"
    activation: str = "relu"
    # Global L2 gradient clip; the spectral statistic makes raw gradients
    # heavy-tailed at high SNR.  None disables clipping.
    max_grad_norm: float | None = 5.0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.batches_per_epoch) < 1:
            raise ValidationError("epochs, batch size, and batches must be >= 1")
        if self.learning_rate <= 0:
            raise ValidationError("learning rate must be positive")
        if self.init not in ("ml-identity", "random"):
            raise ValidationError(f"unknown init {self.init!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise ValidationError("max_grad_norm must be positive or None")


@dataclass
class TrainMeta:
    """Provenance carried inside the serialized parameter file."""

    domain_tag: str
    snr_db: float
    epochs: int
    final_loss: float
    seed: int


@dataclass
class TrainedModel:
    params: CnnParams
    train_meta: TrainMeta
    loss_history: list | None = None


# -- forward / backward ------------------------------------------------------


def _rfft2(v: np.ndarray, shape: Shape2D) -> np.ndarray:
    return np.fft.rfft2(as_grid(v, shape))


def _conv(spec_a: np.ndarray, spec_b: np.ndarray, shape: Shape2D) -> np.ndarray:
    out = np.fft.irfft2(spec_a * spec_b, s=(shape.n_rx, shape.n_tx))
    return as_vec(out)


def _activation(s: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(s, 0.0)
    shifted = s - s.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def compute_chat(y: np.ndarray, ctx: EstimatorContext) -> np.ndarray:
    """Scaled spectral statistic sigma^-2 |Q X^H y|^2 (batched)."""
    ctx.require_full_square("the convolutional estimator input")
    return ctx.chat(y)


def forward(chat: np.ndarray, params: CnnParams) -> np.ndarray:
    """Spectral gains w = a2 * psi(a1 * chat + b1) + b2 (batched)."""
    shape = params.shape
    chat = np.asarray(chat, dtype=np.float64)
    fa1 = _rfft2(params.a1, shape)
    fa2 = _rfft2(params.a2, shape)
    s = _conv(fa1, _rfft2(chat, shape), shape) + params.b1
    z = _activation(s, params.activation)
    return _conv(fa2, _rfft2(z, shape), shape) + params.b2


def estimate(y: np.ndarray, params: CnnParams, ctx: EstimatorContext) -> np.ndarray:
    """Full estimator y -> hhat at O(N log N) (batched)."""
    ctx.require_full_square("the convolutional estimator")
    u = ctx.spectral_observation(y)
    chat = np.abs(u) ** 2 / ctx.sigma2
    w = forward(chat, params)
    return ctx.estimate_from_gains(w, u)


def _loss_and_grad_arrays(
    y: np.ndarray, h: np.ndarray, params: CnnParams, ctx: EstimatorContext
) -> tuple[float, CnnGradients]:
    """Batch MSE and exact parameter gradients via FFT-domain adjoints."""
    shape = params.shape
    u = ctx.spectral_observation(y)
    t = ctx.spectral_channel(h)
    chat = np.abs(u) ** 2 / ctx.sigma2

    fa1 = _rfft2(params.a1, shape)
    fa2 = _rfft2(params.a2, shape)
    fchat = _rfft2(chat, shape)
    s = _conv(fa1, fchat, shape) + params.b1
    z = _activation(s, params.activation)
    fz = _rfft2(z, shape)
    w = _conv(fa2, fz, shape) + params.b2

    # Q is unitary, so the spectral-domain residual carries the exact MSE.
    r = t - w * u
    loss = float(np.mean(np.sum(np.abs(r) ** 2, axis=-1)))

    m = y.shape[0]
    gw = -2.0 * (np.conj(r) * u).real / m
    fgw = _rfft2(gw, shape)
    gb2 = gw.sum(axis=0)
    # Correlation (reversed-kernel convolution) implements both adjoints.
    ga2 = _conv(np.conj(fz), fgw, shape).sum(axis=0)
    gz = _conv(np.conj(fa2), fgw, shape)
    if params.activation == "relu":
        gs = gz * (s > 0.0)
    else:
        gs = z * (gz - np.sum(gz * z, axis=-1, keepdims=True))
    gb1 = gs.sum(axis=0)
    ga1 = _conv(np.conj(fchat), _rfft2(gs, shape), shape).sum(axis=0)
    return loss, CnnGradients(a1=ga1, b1=gb1, a2=ga2, b2=gb2)


def loss_and_grad(batch, params: CnnParams, ctx: EstimatorContext):
    """Mean squared error and gradients over a batch of (y, h) pairs."""
    pairs = list(batch)
    if not pairs:
        raise DegenerateDataError("loss_and_grad needs a nonempty batch")
    y = np.stack([np.asarray(p[0], dtype=np.complex128) for p in pairs])
    h = np.stack([np.asarray(p[1], dtype=np.complex128) for p in pairs])
    return _loss_and_grad_arrays(y, h, params, ctx)


# -- initialization and training ---------------------------------------------


def init_params(
    shape: Shape2D,
    activation: str,
    init: str,
    sigma2: float,
    rng: np.random.Generator,
) -> CnnParams:
    """Starting point for training.

    ``ml-identity`` starts at the clipped-ML filter's ingredients: delta
    kernels (spectrum pass-through), the hidden bias at the ML clipping
    threshold, and for ReLU a flat output bias at the Wiener shrinkage gain
    1/(1+sigma^2).  This keeps the initial spectral gains O(1) at every
    SNR; a plain scaled-delta start makes the gains track the raw spectrum
    (O(1/sigma^2) on strong coordinates) and stalls within the default
    step budget.  ``random`` is kept for ablation.
    """
    n = shape.size
    delta = np.zeros(n)
    delta[0] = 1.0  # grid origin under column-major vectorization
    if init == "ml-identity":
        jitter = 0.01
        a1 = delta + rng.uniform(-jitter, jitter, n)
        b1 = np.full(n, -1.0)
        if activation == "relu":
            # The hidden activations scale like 1/sigma^2, so the second
            # kernel starts inversely scaled to keep the gains O(1).
            scale = sigma2 / (1.0 + sigma2)
            a2 = scale * (0.01 * delta + rng.uniform(-jitter, jitter, n))
            b2 = np.full(n, 1.0 / (1.0 + sigma2))
        else:
            # softmax output is bounded; a unit delta is already tame
            a2 = delta + rng.uniform(-jitter, jitter, n)
            b2 = np.zeros(n)
    else:
        a1 = rng.uniform(-0.5, 0.5, n) / np.sqrt(n)
        a2 = rng.uniform(-0.5, 0.5, n) / np.sqrt(n)
        b1 = np.zeros(n)
        b2 = np.zeros(n)
    return CnnParams(a1=a1, b1=b1, a2=a2, b2=b2, activation=activation, shape=shape)


def cnn_params_from_structured_bank(
    bank: StructuredBank, shape: Shape2D, *, tol: float = 1e-9
) -> CnnParams:
    """Exact parameters reproducing a shift-structured softmax bank.

    Requires the bank's gain matrix to be block-circulant with circulant
    blocks (P equal to the grid size, columns = circular shifts of column
    zero); then a1 is the index-reversed prototype, a2 the prototype, and
    b1 carries the log-determinant offsets.
    """
    n = shape.size
    if bank.size != n:
        raise InvalidDimensionError(
            f"bank has {bank.size} columns; representability needs {n}"
        )
    w0 = bank.a_mat[:, 0].copy()
    grid0 = as_grid(w0, shape)
    for i in range(n):
        r, t = i % shape.n_rx, i // shape.n_rx
        expected = as_vec(np.roll(grid0, shift=(r, t), axis=(0, 1)))
        if np.max(np.abs(bank.a_mat[:, i] - expected)) > tol:
            raise InvalidDimensionError(
                "bank gain matrix is not block-circulant with circulant blocks"
            )
    return CnnParams(
        a1=circ_reverse(w0, shape),
        b1=bank.b.astype(np.float64).copy(),
        a2=w0,
        b2=np.zeros(n),
        activation="softmax",
        shape=shape,
    )


def train(train_set: Dataset, ctx: EstimatorContext, cfg: TrainConfig) -> TrainedModel:
    """Train on channel samples, synthesizing fresh observations per epoch.

    Noise for epoch e and dataset index i comes from the per-epoch derived
    stream's row i, so results are independent of batching and worker
    count.  Deterministic given (cfg.seed, dataset).
    """
    if len(train_set) == 0:
        raise DegenerateDataError("training set is empty")
    expected = snr_to_sigma2(cfg.snr_train_db)
    if not np.isclose(ctx.sigma2, expected, rtol=1e-9, atol=0.0):
        raise ValidationError(
            f"context sigma2 {ctx.sigma2} does not match snr_train_db "
            f"{cfg.snr_train_db} (expected {expected})"
        )

    shape = ctx.shape
    m = len(train_set)
    batch = min(cfg.batch_size, m)
    n_batches = max(1, min(cfg.batches_per_epoch, m // batch))

    params = init_params(
        shape, activation=cfg.activation, init=cfg.init,
        sigma2=ctx.sigma2, rng=derived_rng(cfg.seed, "init"),
    )
    state = _AdamState(params)
    y_clean = ctx.apply_x(train_set.h)

    history = []
    step = 0
    for epoch in range(cfg.epochs):
        order = derived_rng(cfg.seed, "order", epoch).permutation(m)
        noise = complex_normal(
            derived_rng(cfg.seed, "noise", epoch), (m, ctx.n_obs), var=ctx.sigma2
        )
        epoch_loss = 0.0
        for k in range(n_batches):
            idx = order[k * batch : (k + 1) * batch]
            y = y_clean[idx] + noise[idx]
            loss, grads = _loss_and_grad_arrays(y, train_set.h[idx], params, ctx)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {k}"
                )
            _clip_gradients(grads, cfg.max_grad_norm)
            step += 1
            state.update(params, grads, cfg, step)
            epoch_loss += loss
        history.append(epoch_loss / n_batches)

    meta = TrainMeta(
        domain_tag=train_set.domain_tag,
        snr_db=float(cfg.snr_train_db),
        epochs=cfg.epochs,
        final_loss=history[-1],
        seed=cfg.seed,
    )
    return TrainedModel(params=params, train_meta=meta, loss_history=history)


def _clip_gradients(grads: CnnGradients, max_norm: float | None) -> None:
    if max_norm is None:
        return
    total = np.sqrt(sum(
        float(np.sum(getattr(grads, k) ** 2)) for k in ("a1", "b1", "a2", "b2")
    ))
    if total > max_norm:
        factor = max_norm / total
        for k in ("a1", "b1", "a2", "b2"):
            setattr(grads, k, getattr(grads, k) * factor)


class _AdamState:
    def __init__(self, params: CnnParams):
        self.m = {k: np.zeros_like(getattr(params, k)) for k in ("a1", "b1", "a2", "b2")}
        self.v = {k: np.zeros_like(getattr(params, k)) for k in ("a1", "b1", "a2", "b2")}

    def update(self, params: CnnParams, grads: CnnGradients, cfg: TrainConfig, step: int):
        for k in ("a1", "b1", "a2", "b2"):
            g = getattr(grads, k)
            self.m[k] = cfg.beta1 * self.m[k] + (1 - cfg.beta1) * g
            self.v[k] = cfg.beta2 * self.v[k] + (1 - cfg.beta2) * g * g
            m_hat = self.m[k] / (1 - cfg.beta1**step)
            v_hat = self.v[k] / (1 - cfg.beta2**step)
            setattr(
                params, k,
                getattr(params, k) - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps),
            )


# -- serialization ------------------------------------------------------------


def save_params(model: TrainedModel, path) -> None:
    """Write the offloadable parameter file (JSON, exact float round-trip)."""
    p = model.params
    payload = {
        "format_version": _FORMAT_VERSION,
        "n_rx": p.shape.n_rx,
        "n_tx": p.shape.n_tx,
        "activation": p.activation,
        "a1": p.a1.tolist(),
        "b1": p.b1.tolist(),
        "a2": p.a2.tolist(),
        "b2": p.b2.tolist(),
        "train_meta": asdict(model.train_meta),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def load_params(path) -> TrainedModel:
    """Read a parameter file, naming the offending field on mismatch."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    for key in ("format_version", "n_rx", "n_tx", "activation",
                "a1", "b1", "a2", "b2", "train_meta"):
        if key not in payload:
            raise ParseError(f"{path}: missing field {key!r}")
    if payload["format_version"] != _FORMAT_VERSION:
        raise ParseError(
            f"{path}: unsupported format_version {payload['format_version']}"
        )
    shape = Shape2D(int(payload["n_rx"]), int(payload["n_tx"]))
    n = shape.size
    arrays = {}
    for key in ("a1", "b1", "a2", "b2"):
        arr = np.asarray(payload[key], dtype=np.float64)
        if arr.shape != (n,):
            raise ParseError(
                f"{path}: field {key!r} has length {arr.size}, expected {n}"
            )
        arrays[key] = arr
    if payload["activation"] not in ACTIVATIONS:
        raise ParseError(f"{path}: unknown activation {payload['activation']!r}")
    meta_raw = payload["train_meta"]
    try:
        meta = TrainMeta(
            domain_tag=str(meta_raw["domain_tag"]),
            snr_db=float(meta_raw["snr_db"]),
            epochs=int(meta_raw["epochs"]),
            final_loss=float(meta_raw["final_loss"]),
            seed=int(meta_raw["seed"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: malformed train_meta ({exc})") from exc
    params = CnnParams(activation=payload["activation"], shape=shape, **arrays)
    return TrainedModel(params=params, train_meta=meta, loss_history=None)


# -- sklearn-style wrapper -----------------------------------------------------


class CnnChannelEstimator(BaseChannelEstimator):
    """Trainable spectral-convolution estimator with fit(H) / predict(Y)."""

    def __init__(
        self, n_rx=4, n_tx=8, snr_db=5.0, activation="relu",
        epochs=10, batch_size=20, batches_per_epoch=450,
        learning_rate=1e-3, init="ml-identity", seed=0,
    ):
        self.n_rx = n_rx
        self.n_tx = n_tx
        self.snr_db = snr_db
        self.activation = activation
        self.epochs = epochs
        self.batch_size = batch_size
        self.batches_per_epoch = batches_per_epoch
        self.learning_rate = learning_rate
        self.init = init
        self.seed = seed

    def fit(self, X, y=None):
        """Train from channel rows (m, n_rx*n_tx); observations are synthesized."""
        self.context_ = self._make_context()
        h = np.asarray(X, dtype=np.complex128)
        if h.ndim != 2 or h.shape[1] != self.context_.n:
            raise InvalidDimensionError(
                f"training channels must be (m, {self.context_.n}), got {h.shape}"
            )
        train_set = Dataset(
            h=h,
            scene_ids=np.arange(h.shape[0], dtype=np.uint32),
            is_los=np.zeros(h.shape[0], dtype=bool),
            shape=self.context_.shape,
            domain_tag="dl",
            split_tag="train",
            carrier_hz=0.0,
        )
        cfg = TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            batches_per_epoch=self.batches_per_epoch,
            learning_rate=self.learning_rate,
            snr_train_db=self.snr_db,
            seed=self.seed,
            init=self.init,
            activation=self.activation,
        )
        self.model_ = train(train_set, self.context_, cfg)
        return self

    def predict(self, Y):
        Y = self._check_observations(Y)
        return estimate(Y, self.model_.params, self.context_)
