"""Command-line harness: dataset generation, run orchestration, reporting.

Subcommands:

* ``gen-data``: write a synthetic dataset directory.
* ``run``: execute a full-evaluation or surrogate-assisted run.
* ``report``: assemble the consolidated report for one run directory, or the
  comparison report (including the energy estimate) for a pair.

Configuration is a single JSON document; any field can be overridden with a
``--section.key=value`` flag.  Exit codes: 0 success, 1 usage/config error,
2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import re
import shutil
import sys
from pathlib import Path

from .analytics import energy_saving_report
from .config import RunConfig, apply_override, config_to_dict, load_config
from .engine import run_evolution
from .errors import ConfigError, LgpnasError, ReportError
from .smallnet import generate_synthetic, save_dataset

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "LGPNAS_OUTPUT_ROOT"

_OVERRIDE_RE = re.compile(r"^--([A-Za-z0-9_.]+)=(.*)$", re.S)

_REQUIRED_RUN_FILES = (
    "manifest.json",
    "generations.csv",
    "quality_per_gen.csv",
    "pred_vs_actual.csv",
    "gene_proportions.csv",
    "energy.json",
    "summary.json",
)


def _out_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "."))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lgpnas",
        description="Evolve small convolutional architectures, optionally "
        "replacing most full trainings with surrogate fitness estimates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="write a synthetic dataset directory")
    gen.add_argument("--out", required=True, help="dataset directory to create")
    gen.add_argument("--height", type=int, default=16)
    gen.add_argument("--width", type=int, default=16)
    gen.add_argument("--channels", type=int, default=1)
    gen.add_argument("--classes", type=int, default=2)
    gen.add_argument("--samples", type=int, default=320, help="total sample count")
    gen.add_argument(
        "--ratios", default="0.70,0.15,0.15",
        help="train,val,test split ratios (default 0.70,0.15,0.15)",
    )
    gen.add_argument("--noise", type=float, default=1.5)
    gen.add_argument("--seed", type=int, default=0)

    run = sub.add_parser("run", help="execute an evolution run")
    run.add_argument("--config", help="JSON config file")
    run.add_argument("--dataset", help="dataset directory")
    run.add_argument("--out", help="run output directory")
    run.add_argument("--mode", choices=["full", "surrogate"])
    run.add_argument("--seed", type=int, help="master seed")
    run.add_argument("--population", type=int)
    run.add_argument("--generations", type=int)
    run.add_argument("--workers", type=int)

    rep = sub.add_parser("report", help="assemble reports from run directories")
    rep.add_argument("run_dirs", nargs="+", metavar="RUN_DIR",
                     help="one run directory, or surrogate-run full-run for a comparison")
    rep.add_argument("--out", help="report output directory (default: <first run>/report)")
    return parser


def _split_overrides(argv: list[str]) -> tuple[list[str], list[tuple[str, str]]]:
    known, overrides = [], []
    for token in argv:
        m = _OVERRIDE_RE.match(token)
        if m and "." in m.group(1):
            overrides.append((m.group(1), m.group(2)))
        else:
            known.append(token)
    return known, overrides


def cmd_gen_data(args: argparse.Namespace) -> int:
    try:
        ratios = tuple(float(r) for r in args.ratios.split(","))
        ds = generate_synthetic(
            height=args.height, width=args.width, channels=args.channels,
            num_classes=args.classes, samples=args.samples, ratios=ratios,
            noise=args.noise, seed=args.seed,
        )
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        out = save_dataset(ds, _out_root() / args.out)
    except OSError as exc:
        print(f"error: cannot write dataset: {exc}", file=sys.stderr)
        return 2
    print(f"dataset written to {out}")
    return 0


def cmd_run(args: argparse.Namespace, overrides: list[tuple[str, str]]) -> int:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
        if args.dataset:
            cfg.dataset = args.dataset
        if args.out:
            cfg.out_dir = str(_out_root() / args.out)
        if args.mode:
            cfg.mode = args.mode
        if args.seed is not None:
            cfg.master_seed = args.seed
        if args.population is not None:
            cfg.population = args.population
        if args.generations is not None:
            cfg.generations = args.generations
        if args.workers is not None:
            cfg.workers = args.workers
        for key, value in overrides:
            apply_override(cfg, key, value)
        if not cfg.dataset:
            raise ConfigError("no dataset given (--dataset or config.dataset)")
        if not cfg.out_dir:
            raise ConfigError("no output directory given (--out or config.out_dir)")
        cfg.validate()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    try:
        result = run_evolution(cfg)
    except LgpnasError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 2
    best = result.manifest["best"]
    totals = result.manifest["totals"]
    print(
        f"run complete: {result.out_dir} "
        f"(best fitness {best['fitness']:.4f}, "
        f"{totals['full_trainings']} full trainings)"
    )
    return 0


def _check_run_dir(run_dir: Path) -> dict:
    missing = [name for name in _REQUIRED_RUN_FILES if not (run_dir / name).exists()]
    if missing:
        raise ReportError(f"incomplete run directory {run_dir}: missing {missing}")
    return json.loads((run_dir / "manifest.json").read_text())


def cmd_report(args: argparse.Namespace) -> int:
    run_dirs = [Path(d) for d in args.run_dirs]
    if len(run_dirs) > 2:
        print("error: report takes one or two run directories", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else run_dirs[0] / "report"
    try:
        manifests = [_check_run_dir(d) for d in run_dirs]
        out.mkdir(parents=True, exist_ok=True)
        for run_dir, manifest in zip(run_dirs, manifests):
            prefix = manifest["mode"]
            for name in ("quality_per_gen.csv", "pred_vs_actual.csv",
                         "gene_proportions.csv", "energy.json", "summary.json"):
                shutil.copyfile(run_dir / name, out / f"{prefix}_{name}")
        summary = {
            "runs": [
                {
                    "dir": str(d),
                    "mode": m["mode"],
                    "master_seed": m["master_seed"],
                    "best": m["best"],
                    "totals": m["totals"],
                    "surrogate_quality": "n/a (no surrogate)" if m["mode"] == "full"
                    else json.loads((d / "summary.json").read_text())["quality_pooled"],
                }
                for d, m in zip(run_dirs, manifests)
            ],
        }
        if len(run_dirs) == 2:
            modes = {m["mode"] for m in manifests}
            if modes != {"surrogate", "full"}:
                raise ReportError(
                    f"paired report needs one surrogate and one full run, got {sorted(modes)}"
                )
            by_mode = {m["mode"]: m for m in manifests}
            params = _energy_params_from_manifest(by_mode["surrogate"])
            comparison = energy_saving_report(by_mode["surrogate"], by_mode["full"], params)
            (out / "energy_comparison.json").write_text(
                json.dumps(comparison, indent=2, sort_keys=True) + "\n"
            )
            summary["energy_comparison"] = "energy_comparison.json"
        (out / "report.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    except (ReportError, OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"report failed: {exc}", file=sys.stderr)
        return 2
    print(f"report written to {out}")
    return 0


def _energy_params_from_manifest(manifest: dict):
    from .config import EnergyParams

    fields = manifest["config"]["energy"]
    return EnergyParams(**fields)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    known, overrides = _split_overrides(argv)
    parser = _build_parser()
    try:
        args = parser.parse_args(known)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    if overrides and args.command != "run":
        print("error: --key=value overrides only apply to 'run'", file=sys.stderr)
        return 1
    if args.command == "gen-data":
        return cmd_gen_data(args)
    if args.command == "run":
        return cmd_run(args, overrides)
    return cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
