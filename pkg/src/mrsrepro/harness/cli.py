"""Command-line entry point: ``mrsrepro generate | run | analyze | all``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 analysis error.
"""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path

import click
import yaml

from .. import __version__
from ..quant import METHOD_IDS
from ..signals import SyntheticCohortSpec
from .experiment import (
    SEED_POLICY,
    DataError,
    ExperimentConfig,
    ResultsTable,
    build_cohort,
    run_experiment,
    write_cohort,
)
from .report import AnalysisError, analyze

EXIT_USAGE, EXIT_DATA, EXIT_ANALYSIS = 1, 2, 3
CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}
COHORT_KEYS = {f.name for f in fields(SyntheticCohortSpec)}


def load_config_file(path) -> dict:
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}")
    except yaml.YAMLError as exc:
        raise click.UsageError(f"config file {path} is not valid YAML/JSON: {exc}")
    doc = doc or {}
    if not isinstance(doc, dict):
        raise click.UsageError(f"config file {path} must be a key-value mapping")
    unknown = set(doc) - CONFIG_KEYS
    if unknown:
        raise click.UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    cohort = doc.get("cohort")
    if isinstance(cohort, dict):
        bad = set(cohort) - COHORT_KEYS
        if bad:
            raise click.UsageError(f"unknown cohort keys: {', '.join(sorted(bad))}")
    return doc


def build_config(opts: dict) -> ExperimentConfig:
    """Merge config file values with CLI flags (flags win)."""
    values = load_config_file(opts["config"]) if opts.get("config") else {}
    cohort = values.pop("cohort", None)
    flag_map = {
        "master_seed": "master_seed", "n_exec": "n_exec", "jobs": "jobs", "alpha": "alpha",
        "n_boot": "n_boot", "fail_rate": "fail_rate", "output": "output_dir",
        "hlsvd_order": "hlsvd_order", "hlsvd_damping_threshold": "hlsvd_damping_threshold",
    }
    for flag, key in flag_map.items():
        if opts.get(flag) is not None:
            values[key] = opts[flag]
    if opts.get("methods"):
        values["methods"] = [m.strip() for m in opts["methods"].split(",") if m.strip()]
    if "methods" in values:
        values["methods"] = tuple(values["methods"])
    seed = values.get("master_seed", 0)

    if opts.get("cohort_dir"):
        cohort = str(opts["cohort_dir"])
    if cohort is None or isinstance(cohort, dict):
        cohort_vals = dict(cohort or {})
        for key in ("n_signals_per_voxel", "noise_sd", "baseline_amplitude"):
            if opts.get(key) is not None:
                cohort_vals[key] = opts[key]
        cohort_vals.setdefault("master_seed", seed)
        try:
            cohort = SyntheticCohortSpec(**cohort_vals)
        except (TypeError, ValueError) as exc:
            raise click.UsageError(f"invalid cohort settings: {exc}")
    elif not isinstance(cohort, str):
        raise click.UsageError("cohort must be a mapping of cohort settings or a directory path")
    try:
        return ExperimentConfig(cohort=cohort, **values)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(str(exc))


def write_manifest(config: ExperimentConfig, command: str) -> Path:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "command": command,
        "version": __version__,
        "config": config.to_dict(),
        "seed_policy": SEED_POLICY,
    }
    path = out / f"manifest-{command}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return path


def common_options(func):
    opts = [
        click.option("--config", type=click.Path(dir_okay=False), help="YAML/JSON config file."),
        click.option("--master-seed", type=click.IntRange(0, 2**64 - 1)),
        click.option("--n-exec", type=click.IntRange(min=1), help="Executions per signal and method."),
        click.option("--methods", help=f"Comma-separated subset of {','.join(METHOD_IDS)}."),
        click.option("--jobs", type=click.IntRange(min=1), help="Worker processes for the grid."),
        click.option("--alpha", type=float, help="Significance level for finding preservation."),
        click.option("--n-boot", type=click.IntRange(min=1), help="Bootstrap replicates."),
        click.option("--fail-rate", type=click.FloatRange(0, 1),
                     help="Probability of marking an execution non-converged (filter testing)."),
        click.option("--output", type=click.Path(file_okay=False), help="Output directory."),
        click.option("--cohort-dir", type=click.Path(file_okay=False),
                     help="Read FID files from this directory instead of synthesizing."),
        click.option("--n-signals-per-voxel", type=click.IntRange(min=1)),
        click.option("--noise-sd", type=click.FloatRange(min=0)),
        click.option("--baseline-amplitude", type=click.FloatRange(min=0)),
        click.option("--hlsvd-order", type=click.IntRange(min=1)),
        click.option("--hlsvd-damping-threshold", type=click.FloatRange(min=0, min_open=True)),
    ]
    for opt in reversed(opts):
        func = opt(func)
    return func


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
def cli(verbose):
    """Synthetic MRS quantification reproducibility experiments."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")


def _generate(config: ExperimentConfig) -> Path:
    if not isinstance(config.cohort, SyntheticCohortSpec):
        raise click.UsageError("generate needs a synthetic cohort, not --cohort-dir")
    directory = write_cohort(build_cohort(config.cohort), Path(config.output_dir) / "cohort")
    write_manifest(config, "generate")
    return directory


def _run(config: ExperimentConfig) -> ResultsTable:
    table = run_experiment(config)
    write_manifest(config, "run")
    return table


def _analyze(config: ExperimentConfig, table_path=None):
    path = Path(table_path) if table_path else Path(config.output_dir) / "results.csv"
    table = ResultsTable.read(path)
    bundle = analyze(table, config)
    write_manifest(config, "analyze")
    return bundle


@cli.command()
@common_options
def generate(**opts):
    """Write the synthetic cohort (one FID file per signal) and its truth table."""
    config = build_config(opts)
    directory = _generate(config)
    click.echo(f"cohort written to {directory}")


@cli.command()
@common_options
def run(**opts):
    """Run the signal x method x execution grid and write results.csv."""
    config = build_config(opts)
    table = _run(config)
    click.echo(f"{len(table)} rows written to {Path(config.output_dir) / 'results.csv'}")


@cli.command(name="analyze")
@common_options
@click.option("--table", "table_path", type=click.Path(dir_okay=False),
              help="Results table (default <output>/results.csv).")
def analyze_cmd(table_path=None, **opts):
    """Compute agreement, variability and finding-preservation reports."""
    config = build_config(opts)
    bundle = _analyze(config, table_path)
    click.echo(f"{len(bundle.files)} report files written to {Path(config.output_dir) / 'reports'}")


@cli.command(name="all")
@common_options
def all_cmd(**opts):
    """generate, run and analyze in one go."""
    config = build_config(opts)
    if isinstance(config.cohort, SyntheticCohortSpec):
        directory = _generate(config)
        config = replace(config, cohort=str(directory))
    _run(config)
    bundle = _analyze(config)
    write_manifest(config, "all")
    click.echo(f"done: {len(bundle.files)} report files in {Path(config.output_dir) / 'reports'}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="mrsrepro", standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        return EXIT_USAGE
    except click.Abort:
        click.echo("aborted", err=True)
        return EXIT_USAGE
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return EXIT_DATA
    except AnalysisError as exc:
        click.echo(f"analysis error: {exc}", err=True)
        return EXIT_ANALYSIS
    return 0


if __name__ == "__main__":
    sys.exit(main())
