"""Command-line front end.

Verbs:

* ``gen-data``       write the dataset files for the configured scenario
* ``train``          train one CNN estimator (or one per grid SNR) and save it
* ``eval``           run a figure plan and write CSV reports + manifest
* ``export-params``  re-serialize a parameter file, verifying bit-exactness
* ``selfcheck``      run the internal invariant suites

Exit codes: 0 success, 2 validation/parse error, 3 missing artifact,
4 numerical failure (including failed self-checks).  All commands are
deterministic given the config file; FDCE_THREADS only caps worker count
and never changes results.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import DESK_COUNTS, RunConfig, load_run_config
from .datasets import generate_gaussian_dataset, generate_paired_datasets, save_dataset
from .estimators.base import EstimatorContext
from .estimators.cnn import load_params, save_params, train
from .exceptions import (
    FdceError,
    MissingArtifactError,
    NumericalConditioningError,
    ParseError,
    TrainingDivergedError,
    ValidationError,
)
from .experiments import (
    MIXED_FAMILY,
    dataset_path,
    model_path,
    run_experiment,
    snr_tag,
)
from .rng import derived_rng

TRAIN_DOMAINS = ("ul", "dl", "gauss", "mixed")


def cmd_gen_data(cfg: RunConfig) -> list:
    """Generate and write all dataset files for the configured scenario."""
    family = cfg.scenario.los_mode
    out_dir = cfg.resolved("data_dir") / family
    out_dir.mkdir(parents=True, exist_ok=True)

    data = generate_paired_datasets(
        cfg.scenario, cfg.counts.n_cov, cfg.counts.n_train, cfg.counts.n_test
    )
    written = []
    for (domain, split), dataset in sorted(data.by_key.items()):
        path = dataset_path(cfg.resolved("data_dir"), family, domain, split)
        save_dataset(dataset, path, scenario=cfg.scenario)
        written.append(path)
        print(
            f"{family}/{path.name}: n={len(dataset)} "
            f"mean_power={dataset.mean_power:.6f} "
            f"los_fraction={dataset.los_fraction:.3f}"
        )
    if cfg.counts.include_gauss:
        gauss = generate_gaussian_dataset(
            cfg.scenario.dl_shape,
            cfg.counts.n_train,
            derived_rng(cfg.scenario.seed, "gauss"),
            seed=cfg.scenario.seed,
        )
        path = dataset_path(cfg.resolved("data_dir"), family, "gauss", "train")
        save_dataset(gauss, path, scenario=cfg.scenario)
        written.append(path)
        print(
            f"{family}/{path.name}: n={len(gauss)} "
            f"mean_power={gauss.mean_power:.6f} los_fraction=0.000"
        )
    return written


def cmd_train(cfg: RunConfig, domain: str, activation: str, snr_db: float):
    """Train one estimator and write its parameter file."""
    if domain not in TRAIN_DOMAINS:
        raise ValidationError(f"--domain must be one of {TRAIN_DOMAINS}")
    # "mixed" pins the mixed-scenario downlink set regardless of the
    # configured scenario; gauss control data also lives with that family.
    if domain in ("mixed", "gauss"):
        family = MIXED_FAMILY
    else:
        family = cfg.scenario.los_mode
    file_domain = {"ul": "ul-transposed", "mixed": "dl"}.get(domain, domain)

    data_file = dataset_path(cfg.resolved("data_dir"), family, file_domain, "train")
    if not data_file.exists():
        raise MissingArtifactError(f"missing training dataset: {data_file}")
    from .datasets import load_dataset

    train_set = load_dataset(data_file)
    if train_set.shape != cfg.scenario.dl_shape:
        raise ValidationError(
            f"dataset shape {train_set.shape} does not match scenario "
            f"{cfg.scenario.dl_shape}"
        )

    ctx = EstimatorContext.for_snr(train_set.shape, snr_db, n_p=cfg.pilot.n_p)
    train_cfg = dataclasses.replace(
        cfg.train, snr_train_db=float(snr_db), activation=activation
    )
    model = train(train_set, ctx, train_cfg)

    out_dir = cfg.resolved("model_dir")
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = model_path(out_dir, activation, domain, family, snr_db)
    save_params(model, out_path)
    for epoch, loss in enumerate(model.loss_history, start=1):
        print(f"epoch {epoch:2d}: loss {loss:.6f}")
    print(f"saved {out_path}")
    return out_path


def cmd_eval(cfg: RunConfig, figure: str) -> dict:
    """Run one figure plan; non-zero exit when self-checks fail."""
    result = run_experiment(figure, cfg)
    problems = result["report"].problems()
    for path in result["files"]:
        print(f"wrote {path}")
    if problems:
        raise NumericalConditioningError(
            "report self-checks failed: " + "; ".join(problems)
        )
    return result


def cmd_export_params(model_file, out_file) -> None:
    """Re-serialize a parameter file (the offload artifact), verifying it."""
    if not Path(model_file).exists():
        raise MissingArtifactError(f"missing model file: {model_file}")
    model = load_params(model_file)
    save_params(model, out_file)
    reloaded = load_params(out_file)
    for name in ("a1", "b1", "a2", "b2"):
        if not np.array_equal(getattr(model.params, name), getattr(reloaded.params, name)):
            raise NumericalConditioningError(
                f"round-trip mismatch in {name!r} while exporting"
            )
    n = model.params.shape.size
    print(f"exported {out_file}: {4 * n} parameter values, "
          f"activation={model.params.activation}, shape={tuple(model.params.shape)}")


def cmd_selfcheck(quick: bool = False) -> int:
    from .selfcheck import run_checks

    results = run_checks(quick=quick)
    failures = 0
    for name, ok, detail in results:
        status = "ok" if ok else "FAIL"
        line = f"[{status}] {name}"
        if detail and not ok:
            line += f": {detail}"
        print(line)
        failures += not ok
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdce",
        description="FDD downlink channel estimation simulation lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", required=True, help="run-config JSON file")
        p.add_argument(
            "--set", dest="overrides", action="append", default=[],
            metavar="KEY=VALUE", help="override a config field (dotted key)",
        )

    p = sub.add_parser("gen-data", help="generate dataset files")
    add_config(p)
    p.add_argument(
        "--desk-scale", action="store_true",
        help=f"use the desk-scale splits {DESK_COUNTS}",
    )

    p = sub.add_parser("train", help="train a CNN estimator")
    add_config(p)
    p.add_argument("--domain", required=True, choices=TRAIN_DOMAINS)
    p.add_argument("--activation", required=True, choices=("relu", "softmax"))
    p.add_argument(
        "--snr", required=True,
        help="training SNR in dB, or 'grid' for one model per eval grid point",
    )

    p = sub.add_parser("eval", help="run a figure plan")
    add_config(p)
    p.add_argument("--figure", required=True, choices=("fig2", "fig3", "fig4"))

    p = sub.add_parser("export-params", help="re-serialize a parameter file")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("selfcheck", help="run the invariant suites")
    p.add_argument("--quick", action="store_true")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "gen-data":
            overrides = list(args.overrides)
            if args.desk_scale:
                overrides += [f"counts.{k}={v}" for k, v in DESK_COUNTS.items()]
            cfg = load_run_config(args.config, overrides)
            cmd_gen_data(cfg)
        elif args.command == "train":
            cfg = load_run_config(args.config, args.overrides)
            if args.snr == "grid":
                for snr in cfg.eval.snr_grid_db:
                    print(f"--- training at {snr_tag(snr)} ---")
                    cmd_train(cfg, args.domain, args.activation, float(snr))
            else:
                cmd_train(cfg, args.domain, args.activation, float(args.snr))
        elif args.command == "eval":
            cfg = load_run_config(args.config, args.overrides)
            cmd_eval(cfg, args.figure)
        elif args.command == "export-params":
            cmd_export_params(args.model, args.out)
        elif args.command == "selfcheck":
            return cmd_selfcheck(quick=args.quick)
    except (ValidationError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MissingArtifactError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericalConditioningError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except FdceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # e.g. a non-numeric --snr
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
