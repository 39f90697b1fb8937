"""Channel datasets: containers, paired UL/DL generation, normalization,
global sample covariance, and the binary file format.

A :class:`Dataset` stores vectorized channels row-wise plus the scene ids
that pair UL and DL samples.  Datasets are normalized so the empirical mean
of ||h||^2 equals n_rx * n_tx; one scalar rescales the whole set, keeping
relative LOS/NLOS power structure intact.

File format (little-endian), sidecar JSON carries the full scenario config:

    magic "FDCE" | u16 version | u32 n_samples | u16 n_rx | u16 n_tx
    | u8 domain | u8 split | f64 carrier_hz | f64 normalization_scale
    | u64 seed | per sample: u32 scene_id, u8 is_los, n_rx*n_tx complex128
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channels import ScenarioConfig, sample_scene, synthesize_channel
from .exceptions import DegenerateDataError, InvalidDimensionError, ParseError
from .linalg import Shape2D, hermitize, vec
from .rng import complex_normal, derived_rng

DOMAIN_TAGS = ("ul", "ul-transposed", "dl", "gauss")
SPLIT_TAGS = ("cov", "train", "test")

_MAGIC = b"FDCE"
_VERSION = 1
_HEADER = struct.Struct("<4sHIHHBBddQ")


@dataclass(frozen=True)
class ChannelSample:
    """One vectorized channel with its scene bookkeeping."""

    h: np.ndarray
    scene_id: int
    is_los: bool


@dataclass(eq=False)
class Dataset:
    """A set of vectorized channel samples plus normalization metadata."""

    h: np.ndarray  # (n_samples, n_rx * n_tx) complex128
    scene_ids: np.ndarray
    is_los: np.ndarray
    shape: Shape2D
    domain_tag: str
    split_tag: str
    carrier_hz: float
    normalization_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.domain_tag not in DOMAIN_TAGS:
            raise InvalidDimensionError(f"unknown domain tag {self.domain_tag!r}")
        if self.split_tag not in SPLIT_TAGS:
            raise InvalidDimensionError(f"unknown split tag {self.split_tag!r}")
        if self.h.ndim != 2 or self.h.shape[1] != self.shape.size:
            raise InvalidDimensionError(
                f"sample matrix {self.h.shape} does not match shape {self.shape}"
            )
        if not np.all(np.isfinite(self.h.view(np.float64))):
            raise InvalidDimensionError("dataset contains non-finite entries")

    def __len__(self) -> int:
        return self.h.shape[0]

    def __getitem__(self, i: int) -> ChannelSample:
        return ChannelSample(
            h=self.h[i], scene_id=int(self.scene_ids[i]), is_los=bool(self.is_los[i])
        )

    @property
    def mean_power(self) -> float:
        return float(np.mean(np.sum(np.abs(self.h) ** 2, axis=1)))

    @property
    def los_fraction(self) -> float:
        return float(np.mean(self.is_los)) if len(self) else 0.0


def normalize_dataset(d: Dataset) -> Dataset:
    """Rescale all samples so the empirical mean of ||h||^2 is n_rx * n_tx."""
    if len(d) == 0:
        raise DegenerateDataError("cannot normalize an empty dataset")
    power = d.mean_power
    if power <= 0.0:
        raise DegenerateDataError("cannot normalize an all-zero dataset")
    scale = float(np.sqrt(d.shape.size / power))
    return replace(
        d,
        h=d.h * scale,
        normalization_scale=d.normalization_scale * scale,
    )


def global_sample_cov(d: Dataset) -> np.ndarray:
    """Sample covariance (1/M) sum_i h_i h_i^H over the dataset."""
    if len(d) == 0:
        raise DegenerateDataError("cannot build a covariance from an empty dataset")
    c = d.h.T @ d.h.conj() / len(d)
    return hermitize(c)


def generate_gaussian_dataset(
    shape: Shape2D,
    n: int,
    rng: np.random.Generator,
    *,
    split_tag: str = "train",
    seed: int = 0,
) -> Dataset:
    """Unstructured control data: i.i.d. CN(0, 1) entries, then normalized."""
    if n < 1:
        raise DegenerateDataError("need at least one sample")
    h = complex_normal(rng, (n, shape.size))
    d = Dataset(
        h=h,
        scene_ids=np.arange(n, dtype=np.uint32),
        is_los=np.zeros(n, dtype=bool),
        shape=shape,
        domain_tag="gauss",
        split_tag=split_tag,
        carrier_hz=0.0,
        seed=seed,
    )
    return normalize_dataset(d)


@dataclass
class PairedDatasets:
    """The six geometry-shared datasets: {ul, ul-transposed, dl} x splits."""

    scenes: list = field(default_factory=list)
    by_key: dict = field(default_factory=dict)  # (domain_tag, split_tag) -> Dataset

    def get(self, domain_tag: str, split_tag: str) -> Dataset:
        return self.by_key[(domain_tag, split_tag)]


def generate_paired_datasets(
    cfg: ScenarioConfig, n_cov: int, n_train: int, n_test: int
) -> PairedDatasets:
    """Generate UL / transposed-UL / DL datasets over shared scenes.

    One scene per global sample index is shared between the UL and DL
    draws; the uplink is synthesized in its native n_tx x n_rx orientation
    and the transposed copy is stored in downlink orientation.  Splits are
    disjoint contiguous index ranges; every dataset is normalized
    independently.
    """
    if min(n_cov, n_train, n_test) < 1:
        raise DegenerateDataError("all split sizes must be >= 1")
    total = n_cov + n_train + n_test
    n = cfg.dl_shape.size

    scenes = []
    h_ul = np.empty((total, n), dtype=np.complex128)
    h_dl = np.empty((total, n), dtype=np.complex128)
    is_los = np.empty(total, dtype=bool)
    for i in range(total):
        scene = sample_scene(cfg, derived_rng(cfg.seed, "scene", i))
        scenes.append(scene)
        is_los[i] = scene.is_los
        ul = synthesize_channel(
            scene, cfg.f_ul, cfg.ul_shape, cfg,
            derived_rng(cfg.seed, "gain-ul", i), reverse_link=True,
        )
        dl = synthesize_channel(
            scene, cfg.f_dl, cfg.dl_shape, cfg, derived_rng(cfg.seed, "gain-dl", i)
        )
        h_ul[i] = vec(ul)
        h_dl[i] = vec(dl)

    # Transposition in the flat layout: vec(H^T) is a fixed permutation.
    perm = np.arange(n).reshape((cfg.n_tx, cfg.n_rx), order="F").reshape(-1, order="C")
    h_ult = h_ul[:, perm]

    bounds = {"cov": (0, n_cov), "train": (n_cov, n_cov + n_train),
              "test": (n_cov + n_train, total)}
    out = PairedDatasets(scenes=scenes)
    per_domain = {
        "ul": (h_ul, cfg.ul_shape, cfg.f_ul),
        "ul-transposed": (h_ult, cfg.dl_shape, cfg.f_ul),
        "dl": (h_dl, cfg.dl_shape, cfg.f_dl),
    }
    for domain, (rows, shape, carrier) in per_domain.items():
        for split, (lo, hi) in bounds.items():
            d = Dataset(
                h=rows[lo:hi].copy(),
                scene_ids=np.arange(lo, hi, dtype=np.uint32),
                is_los=is_los[lo:hi].copy(),
                shape=shape,
                domain_tag=domain,
                split_tag=split,
                carrier_hz=carrier,
                seed=cfg.seed,
            )
            out.by_key[(domain, split)] = normalize_dataset(d)
    return out


_DOMAIN_CODE = {tag: i for i, tag in enumerate(DOMAIN_TAGS)}
_SPLIT_CODE = {tag: i for i, tag in enumerate(SPLIT_TAGS)}


def save_dataset(d: Dataset, path, scenario: ScenarioConfig | None = None) -> None:
    """Write the binary dataset file (plus a JSON sidecar if given a config)."""
    n = d.shape.size
    header = _HEADER.pack(
        _MAGIC, _VERSION, len(d), d.shape.n_rx, d.shape.n_tx,
        _DOMAIN_CODE[d.domain_tag], _SPLIT_CODE[d.split_tag],
        d.carrier_hz, d.normalization_scale, d.seed & (2**64 - 1),
    )
    body = np.empty(
        len(d),
        dtype=np.dtype(
            [("scene_id", "<u4"), ("is_los", "u1"), ("h", "<c16", (n,))]
        ),
    )
    body["scene_id"] = d.scene_ids
    body["is_los"] = d.is_los
    body["h"] = d.h
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())
    if scenario is not None:
        with open(str(path) + ".json", "w", encoding="utf-8") as fh:
            json.dump(asdict(scenario), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_dataset(path) -> Dataset:
    """Read a binary dataset file, validating structure field by field."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise ParseError(f"{path}: truncated header")
    (magic, version, n_samples, n_rx, n_tx, domain_code, split_code,
     carrier, scale, seed) = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ParseError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise ParseError(f"{path}: unsupported format version {version}")
    if domain_code >= len(DOMAIN_TAGS):
        raise ParseError(f"{path}: unknown domain code {domain_code}")
    if split_code >= len(SPLIT_TAGS):
        raise ParseError(f"{path}: unknown split code {split_code}")
    shape = Shape2D(n_rx, n_tx)
    dtype = np.dtype([("scene_id", "<u4"), ("is_los", "u1"), ("h", "<c16", (shape.size,))])
    expected = _HEADER.size + n_samples * dtype.itemsize
    if len(raw) != expected:
        raise ParseError(
            f"{path}: body has {len(raw) - _HEADER.size} bytes, expected "
            f"{n_samples} samples of {dtype.itemsize} bytes"
        )
    body = np.frombuffer(raw, dtype=dtype, offset=_HEADER.size)
    return Dataset(
        h=body["h"].copy(),
        scene_ids=body["scene_id"].astype(np.uint32),
        is_los=body["is_los"].astype(bool),
        shape=shape,
        domain_tag=DOMAIN_TAGS[domain_code],
        split_tag=SPLIT_TAGS[split_code],
        carrier_hz=carrier,
        normalization_scale=scale,
        seed=seed,
    )
