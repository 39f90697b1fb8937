"""Monte-Carlo evaluation: paired-observation SNR sweeps and report files.

Every method at a given (SNR, sample index) consumes the identical
observation vector; noise comes from a stream derived from (eval seed, SNR)
with one row per test index, so reports are bit-reproducible and
independent of worker count.

Two NMSE conventions appear in the outputs and both are recorded in the
run manifest: sweep columns aggregate as sum(err^2) / sum(power) (the
power-weighted mean, which makes the LS column match 1/SNR exactly in
expectation on any normalized dataset), while the distribution study uses
the per-sample values err_i^2 / power_i.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .datasets import Dataset
from .estimators.base import EstimatorContext
from .exceptions import DegenerateDataError, ValidationError
from .rng import complex_normal, derived_rng
from .stats import QUARTILE_CONVENTION, boxplot_stats, empirical_cdf

SWEEP_NMSE_CONVENTION = "power-weighted-mean"
SAMPLE_NMSE_CONVENTION = "per-sample"


@dataclass(frozen=True)
class MethodRunner:
    """A named estimator factory: make(ctx, snr_db) -> fn(Y, H_true) -> H_hat."""

    method_id: str
    label: str
    make: Callable[[EstimatorContext, float], Callable]


@dataclass
class EvalReport:
    """Sweep results plus per-sample values at designated SNR points."""

    snr_grid_db: list
    method_ids: list
    labels: dict
    mean_nmse: dict  # method_id -> np.ndarray over the grid
    per_sample: dict  # method_id -> {snr_db: np.ndarray}
    observation_hashes: dict  # snr_db -> hex digest
    conventions: dict = field(default_factory=lambda: {
        "nmse_sweep": SWEEP_NMSE_CONVENTION,
        "nmse_distribution": SAMPLE_NMSE_CONVENTION,
        "quartile": QUARTILE_CONVENTION,
    })

    def problems(self) -> list:
        """Invariant self-checks; empty when the report is well-formed."""
        out = []
        for mid in self.method_ids:
            col = self.mean_nmse[mid]
            if len(col) != len(self.snr_grid_db):
                out.append(f"{mid}: column length {len(col)} != grid size")
            if not np.all(np.isfinite(col)) or np.any(col < 0):
                out.append(f"{mid}: non-finite or negative sweep NMSE")
            for snr, vals in self.per_sample.get(mid, {}).items():
                if not np.all(np.isfinite(vals)) or np.any(vals < 0):
                    out.append(f"{mid}@{snr}dB: bad per-sample NMSE")
        return out


def _observation_matrix(
    test_set: Dataset, ctx: EstimatorContext, eval_seed: int, snr_db: float
) -> np.ndarray:
    key = int(round(snr_db * 1000)) & 0x7FFFFFFF
    noise = complex_normal(
        derived_rng(eval_seed, "eval-noise", key),
        (len(test_set), ctx.n_obs),
        var=ctx.sigma2,
    )
    return ctx.apply_x(test_set.h) + noise


def snr_sweep(
    methods: Sequence[MethodRunner],
    test_set: Dataset,
    snr_grid_db: Sequence[float],
    ctx_builder: Callable[[float], EstimatorContext] | None = None,
    *,
    eval_seed: int = 0,
    n_pilots: int | None = None,
    per_sample_snrs: Sequence[float] = (),
) -> EvalReport:
    """Evaluate all methods over the SNR grid on shared observations."""
    if len(test_set) == 0:
        raise DegenerateDataError("empty test set")
    if not methods:
        raise ValidationError("no methods to evaluate")
    if ctx_builder is None:
        def ctx_builder(snr_db):
            return EstimatorContext.for_snr(test_set.shape, snr_db, n_p=n_pilots)

    ids = [m.method_id for m in methods]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate method ids in sweep")
    report = EvalReport(
        snr_grid_db=[float(s) for s in snr_grid_db],
        method_ids=ids,
        labels={m.method_id: m.label for m in methods},
        mean_nmse={m.method_id: np.empty(len(snr_grid_db)) for m in methods},
        per_sample={m.method_id: {} for m in methods},
        observation_hashes={},
    )

    h_true = test_set.h
    power = np.sum(np.abs(h_true) ** 2, axis=1)
    total_power = float(power.sum())
    wanted = {float(s) for s in per_sample_snrs}

    for j, snr_db in enumerate(report.snr_grid_db):
        ctx = ctx_builder(snr_db)
        y = _observation_matrix(test_set, ctx, eval_seed, snr_db)
        report.observation_hashes[snr_db] = hashlib.sha256(
            y.astype("<c16").tobytes()
        ).hexdigest()
        for runner in methods:
            fn = runner.make(ctx, snr_db)
            h_hat = np.asarray(fn(y, h_true))
            if h_hat.shape != h_true.shape:
                raise ValidationError(
                    f"{runner.method_id}: estimate shape {h_hat.shape} != "
                    f"{h_true.shape}"
                )
            se = np.sum(np.abs(h_hat - h_true) ** 2, axis=1)
            report.mean_nmse[runner.method_id][j] = se.sum() / total_power
            if snr_db in wanted:
                report.per_sample[runner.method_id][snr_db] = se / power
    return report


# -- report files -------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_sweep_csv(path, report: EvalReport) -> None:
    lines = ["SNR," + ",".join(report.labels[m] for m in report.method_ids)]
    for j, snr in enumerate(report.snr_grid_db):
        row = [_fmt(snr)] + [_fmt(report.mean_nmse[m][j]) for m in report.method_ids]
        lines.append(",".join(row))
    _write_text(path, lines)


def write_distribution_csv(path, report: EvalReport, snr_db: float) -> None:
    cols = [report.per_sample[m][snr_db] for m in report.method_ids]
    n = len(cols[0])
    lines = ["sample_id," + ",".join(report.labels[m] for m in report.method_ids)]
    for i in range(n):
        lines.append(",".join([str(i)] + [_fmt(c[i]) for c in cols]))
    _write_text(path, lines)


def write_boxplot_csv(path, report: EvalReport, snr_db: float) -> None:
    lines = ["method,q1,median,q3,mean,whisker_low,whisker_high,n_outliers"]
    for m in report.method_ids:
        s = boxplot_stats(report.per_sample[m][snr_db])
        lines.append(
            ",".join(
                [report.labels[m]]
                + [_fmt(v) for v in (s.q1, s.median, s.q3, s.mean,
                                     s.whisker_low, s.whisker_high)]
                + [str(s.n_outliers)]
            )
        )
    _write_text(path, lines)


def write_cdf_csv(path, report: EvalReport, snr_db: float) -> None:
    lines = ["method,nmse,cdf"]
    for m in report.method_ids:
        values, fractions = empirical_cdf(report.per_sample[m][snr_db])
        for v, f in zip(values, fractions):
            lines.append(f"{report.labels[m]},{_fmt(v)},{_fmt(f)}")
    _write_text(path, lines)


def write_manifest(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_text(path, lines) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines))
        fh.write("\n")
