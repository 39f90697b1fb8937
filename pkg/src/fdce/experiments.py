"""Figure experiments: dataset/model bookkeeping and the three study plans.

* fig2 - NMSE-versus-SNR sweep on the mixed NLOS/LOS scenario,
* fig3 - per-sample NMSE distribution (boxplot + CDF) at one fixed SNR,
* fig4 - generalization study evaluated on LOS-only channels, including
  the models trained on the mixed scenario.

CSV column names mirror the figure legends, so reports read side by side
with the plots.  A JSON manifest (config echo, seeds, SHA-256 of every
dataset and model consumed, observation hashes, conventions) makes each
run byte-reproducible.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import RunConfig
from .datasets import Dataset, global_sample_cov, load_dataset
from .estimators.baselines import (
    build_dictionary,
    genie_omp_estimate,
    lmmse_filter,
    lmmse_global,
    ls_estimate,
    ml_structured,
)
from .estimators.cnn import estimate as cnn_estimate
from .estimators.cnn import load_params
from .estimators.grid import (
    build_grid,
    circulant_spectra,
    gridded_estimate,
    structured_bank_from_spectra,
    structured_estimate,
)
from .evaluation import (
    EvalReport,
    MethodRunner,
    sha256_file,
    snr_sweep,
    write_boxplot_csv,
    write_cdf_csv,
    write_distribution_csv,
    write_manifest,
    write_sweep_csv,
)
from .exceptions import MissingArtifactError, ValidationError
from .rng import parallel_map

MIXED_FAMILY = "mixed"
LOS_FAMILY = "los-only"

FIG2_METHODS = [
    ("lmmse-dl", "LMMSE DL"),
    ("lmmse-ul", "LMMSE UL"),
    ("ls", "LS"),
    ("genie-omp", "genie OMP"),
    ("ml", "ML"),
    ("cnn-softmax-dl", "softmax DL"),
    ("cnn-relu-dl", "ReLU DL"),
    ("cnn-softmax-ul", "softmax UL"),
    ("cnn-relu-ul", "ReLU UL"),
    ("cnn-softmax-gauss", "softmax Gauss"),
    ("cnn-relu-gauss", "ReLU Gauss"),
]

FIG4_METHODS = [
    ("lmmse-dl", "LMMSE DL"),
    ("lmmse-ul", "LMMSE UL"),
    ("ls", "LS"),
    ("genie-omp", "genie OMP"),
    ("ml", "ML"),
    ("cnn-softmax-dl", "softmax DL"),
    ("cnn-relu-dl", "ReLU DL"),
    ("cnn-softmax-ul", "softmax UL"),
    ("cnn-relu-ul", "ReLU UL"),
    ("cnn-softmax-mixed", "softmax mixed"),
    ("cnn-relu-mixed", "ReLU mixed"),
]

# Training data behind each CNN method id: (train domain, dataset family is
# the plan family unless pinned here).  "mixed" is the estimator trained on
# the mixed-scenario downlink set and evaluated elsewhere.
_CNN_SOURCES = {
    "dl": ("dl", None),
    "ul": ("ul", None),
    "gauss": ("gauss", MIXED_FAMILY),
    "mixed": ("dl", MIXED_FAMILY),
}

_TRAIN_SPLIT_FILES = {
    "dl": "dl_train.bin",
    "ul": "ul_transposed_train.bin",
    "gauss": "gauss_train.bin",
}


def snr_tag(snr_db: float) -> str:
    return f"{float(snr_db):+g}dB"


def dataset_path(data_dir: Path, family: str, domain: str, split: str) -> Path:
    return Path(data_dir) / family / f"{domain.replace('-', '_')}_{split}.bin"


def model_path(
    model_dir: Path, activation: str, domain: str, family: str, snr_db: float
) -> Path:
    name = f"cnn_{activation}_{domain}__{family}__{snr_tag(snr_db)}.json"
    return Path(model_dir) / name


def _require(path: Path, what: str) -> Path:
    if not Path(path).exists():
        raise MissingArtifactError(f"missing {what}: {path}")
    return Path(path)


@dataclass
class ExperimentPlan:
    name: str
    family: str
    methods: list
    sweep_full_grid: bool
    per_sample_at_fixed: bool


PLANS = {
    "fig2": ExperimentPlan("fig2", MIXED_FAMILY, FIG2_METHODS, True, False),
    "fig3": ExperimentPlan("fig3", MIXED_FAMILY, FIG2_METHODS, False, True),
    "fig4": ExperimentPlan("fig4", LOS_FAMILY, FIG4_METHODS, True, False),
}


class ArtifactStore:
    """Loads datasets, covariances, and trained models for one plan run,
    remembering every file it touched for the manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.data_dir = cfg.resolved("data_dir")
        self.model_dir = cfg.resolved("model_dir")
        self.files: dict[str, str] = {}
        self._datasets: dict[Path, Dataset] = {}

    def _track(self, path: Path) -> Path:
        # Manifest keys are relative to the config directory so reruns in
        # different roots stay byte-identical.
        key = os.path.relpath(path, self.cfg.base_dir)
        if key not in self.files:
            self.files[key] = sha256_file(path)
        return path

    def dataset(self, family: str, domain: str, split: str) -> Dataset:
        path = dataset_path(self.data_dir, family, domain, split)
        _require(path, f"dataset {family}/{domain}/{split}")
        self._track(path)
        if path not in self._datasets:
            self._datasets[path] = load_dataset(path)
        return self._datasets[path]

    def covariance(self, family: str, domain: str) -> np.ndarray:
        return global_sample_cov(self.dataset(family, domain, "cov"))

    def model(self, activation: str, domain: str, family: str, snr_db: float):
        if not self.cfg.eval.per_snr_models:
            snr_db = self.cfg.train.snr_train_db
        path = model_path(self.model_dir, activation, domain, family, snr_db)
        _require(path, f"model {activation}/{domain}/{family}@{snr_tag(snr_db)}")
        self._track(path)
        return load_params(path)


def build_runner(method_id: str, label: str, store: ArtifactStore, family: str) -> MethodRunner:
    cfg = store.cfg

    if method_id == "ls":
        make = lambda ctx, snr: lambda y, h: ls_estimate(y, ctx)

    elif method_id in ("lmmse-dl", "lmmse-ul"):
        domain = "dl" if method_id.endswith("dl") else "ul-transposed"
        cov = store.covariance(family, domain)

        def make(ctx, snr, cov=cov):
            filt = lmmse_filter(cov, ctx)
            return lambda y, h: lmmse_global(y, cov, ctx, filt=filt)

    elif method_id == "ml":
        make = lambda ctx, snr: lambda y, h: ml_structured(y, ctx)

    elif method_id == "genie-omp":
        osr = cfg.eval.omp_oversampling

        def make(ctx, snr, osr=osr):
            dictionary = build_dictionary(ctx.shape, osr, osr)
            k_max = cfg.eval.genie_k_max or ctx.n // 2

            def run(y, h):
                rows = parallel_map(
                    lambda i: genie_omp_estimate(y[i], ctx, dictionary, h[i], k_max),
                    range(y.shape[0]),
                )
                return np.stack(rows)

            return run

    elif method_id == "gridded":

        def make(ctx, snr):
            _, bank = build_grid(ctx.shape, 16, ctx)
            return lambda y, h: gridded_estimate(y, bank, ctx)

    elif method_id == "structured":

        def make(ctx, snr):
            bank = structured_bank_from_spectra(
                circulant_spectra(ctx.shape, ctx.n), ctx
            )
            return lambda y, h: structured_estimate(y, bank, ctx)

    elif method_id.startswith("cnn-"):
        parts = method_id.split("-")
        if len(parts) != 3 or parts[1] not in ("relu", "softmax") or parts[2] not in _CNN_SOURCES:
            raise ValidationError(f"unknown method id {method_id!r}")
        activation = parts[1]
        domain, pinned_family = _CNN_SOURCES[parts[2]]
        model_family = pinned_family or family

        def make(ctx, snr, activation=activation, domain=domain, model_family=model_family):
            model = store.model(activation, domain, model_family, snr)
            if model.params.shape != ctx.shape:
                raise ValidationError(
                    f"model {method_id} has shape {model.params.shape}, "
                    f"expected {ctx.shape}"
                )
            return lambda y, h: cnn_estimate(y, model.params, ctx)

    else:
        raise ValidationError(f"unknown method id {method_id!r}")

    return MethodRunner(method_id=method_id, label=label, make=make)


def run_experiment(figure: str, cfg: RunConfig) -> dict:
    """Execute one figure plan; returns the report and written file paths."""
    if figure not in PLANS:
        raise ValidationError(f"unknown figure {figure!r}; pick one of {sorted(PLANS)}")
    plan = PLANS[figure]
    store = ArtifactStore(cfg)
    test_set = store.dataset(plan.family, "dl", "test")

    runners = [
        build_runner(mid, label, store, plan.family) for mid, label in plan.methods
    ]
    grid = (
        [float(s) for s in cfg.eval.snr_grid_db]
        if plan.sweep_full_grid
        else [float(cfg.eval.fixed_snr_db)]
    )
    per_sample = [float(cfg.eval.fixed_snr_db)] if plan.per_sample_at_fixed else []

    report = snr_sweep(
        runners,
        test_set,
        grid,
        eval_seed=cfg.eval.seed,
        n_pilots=cfg.pilot.n_p,
        per_sample_snrs=per_sample,
    )

    report_dir = cfg.resolved("report_dir")
    report_dir.mkdir(parents=True, exist_ok=True)
    outputs = []
    if plan.sweep_full_grid:
        sweep_path = report_dir / f"{figure}_sweep.csv"
        write_sweep_csv(sweep_path, report)
        outputs.append(sweep_path)
    if plan.per_sample_at_fixed:
        fixed = float(cfg.eval.fixed_snr_db)
        dist = report_dir / f"{figure}_distribution.csv"
        box = report_dir / f"{figure}_boxplot.csv"
        cdf = report_dir / f"{figure}_cdf.csv"
        write_distribution_csv(dist, report, fixed)
        write_boxplot_csv(box, report, fixed)
        write_cdf_csv(cdf, report, fixed)
        outputs.extend([dist, box, cdf])

    manifest_path = report_dir / f"{figure}_manifest.json"
    write_manifest(
        manifest_path,
        {
            "plan": figure,
            "family": plan.family,
            "config": cfg.as_dict(),
            "seeds": {
                "scenario": cfg.scenario.seed,
                "train": cfg.train.seed,
                "eval": cfg.eval.seed,
            },
            "methods": {m.method_id: m.label for m in runners},
            "snr_grid_db": grid,
            "per_sample_snrs_db": per_sample,
            "datasets_and_models_sha256": store.files,
            "observation_sha256": {
                str(k): v for k, v in report.observation_hashes.items()
            },
            "conventions": report.conventions,
            "per_snr_models": cfg.eval.per_snr_models,
            "outputs": [p.name for p in outputs],
        },
    )
    outputs.append(manifest_path)
    return {"report": report, "files": [str(p) for p in outputs]}
