#!/usr/bin/env python3
"""
der-ssl command line
train: run a scenario; theory: verification suite; report: tables from
JSON lines; data: dataset conversion and synthesis
"""

import os
import sys
import json
import logging
from typing import Optional, Sequence

import click
from dotenv import load_dotenv

from core.mathematical_models.empirical_risk import NonFiniteRiskError
from core.mathematical_models.theory_verification import TheoryBudgets
from core.datasets.ssl_dataset import (
    DATASET_PRESETS, DatasetFormatError, load_dataset, make_synthetic_mixture, save_dataset_cache,
)
from .config import (
    ConfigurationError, DatasetConfig, ExperimentConfig, apply_overrides, load_config, parse_config,
)
from .reporting import emit_table, theory_summary_lines
from .runner import read_records, run_experiment, run_theory_suite

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2
EXIT_THEORY_VIOLATION = 3

OUTPUT_DIR_ENV = "DER_SSL_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "results"


def configure_logging() -> None:
    level = os.getenv("LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def _seed_list(value: Optional[str]):
    if value is None:
        return None
    try:
        return [int(part) for part in value.split(',') if part.strip()]
    except ValueError:
        raise click.BadParameter(f"seeds must be comma-separated integers, got '{value}'")


@click.group()
@click.version_option("1.0.0", prog_name="der-ssl")
def cli():
    """Divergence-based empirical risk and self-training experiments"""


@cli.command()
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False), help="YAML experiment file")
@click.option('--preset', type=click.Choice(sorted(DATASET_PRESETS)), help="Dataset preset")
@click.option('--dataset', 'dataset_path', type=click.Path(exists=True, dir_okay=False), help="Dataset file")
@click.option('--name')
@click.option('--scenario', type=click.Choice(['sl', 'fsl', 'dp-ssl', 'dem-ssl'], case_sensitive=False))
@click.option('--divergence', help="kl, tv, chi2, power, js, lecam, renyi")
@click.option('--p', 'power_p', type=float, help="Power divergence exponent")
@click.option('--alpha', type=float, help="Renyi order")
@click.option('--beta', help="Labeled-row mass or 'auto'")
@click.option('--tau-p', type=float)
@click.option('--kappa-p', type=float)
@click.option('--uncertainty/--no-uncertainty', default=None)
@click.option('--lambda-h', type=float)
@click.option('--lambda-u', type=float)
@click.option('--iterations', type=int)
@click.option('--epochs', type=int)
@click.option('--batch-size', type=int)
@click.option('--learning-rate', type=float)
@click.option('--hidden', type=int)
@click.option('--dropout', type=float)
@click.option('--seeds', help="Comma-separated seeds")
@click.option('--balancing/--no-balancing', default=None)
@click.option('--noise-rate', type=float)
@click.option('--output-dir', envvar=OUTPUT_DIR_ENV, default=DEFAULT_OUTPUT_DIR, show_default=True)
@click.option('--jobs', type=int, default=1, show_default=True, help="Parallel seed workers")
@click.option('--checkpoints', is_flag=True, help="Save the final model of every run")
@click.option('--verbose', is_flag=True)
def train(config_path, preset, dataset_path, name, scenario, divergence, power_p, alpha, beta, tau_p, kappa_p,
          uncertainty, lambda_h, lambda_u, iterations, epochs, batch_size, learning_rate, hidden, dropout,
          seeds, balancing, noise_rate, output_dir, jobs, checkpoints, verbose):
    """Run a scenario over seeds and print the result table"""
    config = load_config(config_path) if config_path else ExperimentConfig()
    if preset:
        data = config.model_dump(exclude_none=True)
        data['dataset'] = DatasetConfig.from_preset(preset).model_dump(exclude_none=True)
        config = parse_config(data)
    if beta is not None and beta != 'auto':
        try:
            beta = float(beta)
        except ValueError:
            raise click.BadParameter(f"beta must be a number or 'auto', got '{beta}'")

    if divergence is not None:
        overrides_divergence = {'divergence.name': divergence, 'divergence.p': power_p, 'divergence.alpha': alpha}
    else:
        overrides_divergence = {'divergence.p': power_p, 'divergence.alpha': alpha}
    config = apply_overrides(config, {
        'name': name,
        'scenario': scenario.lower() if scenario else None,
        'dataset.path': dataset_path,
        **overrides_divergence,
        'beta': beta,
        'selection.tau_p': tau_p,
        'selection.kappa_p': kappa_p,
        'selection.use_uncertainty': uncertainty,
        'regularization.lambda_h': lambda_h,
        'regularization.lambda_u': lambda_u,
        'training.iterations': iterations,
        'training.epochs': epochs,
        'training.batch_size': batch_size,
        'optimizer.learning_rate': learning_rate,
        'model.hidden': hidden,
        'model.dropout': dropout,
        'seeds': _seed_list(seeds),
        'balancing': balancing,
        'noise_rate': noise_rate,
    })

    records = run_experiment(config, output_dir=output_dir, n_jobs=jobs, checkpoints=checkpoints, verbose=verbose)
    text, _ = emit_table(records, os.path.join(output_dir, f"{config.name}.csv"))
    click.echo(text)
    click.echo(f"\nRecords: {os.path.join(output_dir, config.name + '.jsonl')}")
    return EXIT_OK


@cli.command()
@click.option('--trials', type=int, default=1000, show_default=True)
@click.option('--instances', type=int, default=5, show_default=True, help="Triangle-bound instances per setting")
@click.option('--resamples', type=int, default=20, show_default=True, help="True-risk bound resamples")
@click.option('--steps', type=int, default=300, show_default=True, help="Free-logit optimizer budget")
@click.option('--seed', type=int, default=0, show_default=True)
@click.option('--probe-kl-metric', is_flag=True, help="Also test KL as a metric (expected to fail)")
@click.option('--output-dir', envvar=OUTPUT_DIR_ENV, default=DEFAULT_OUTPUT_DIR, show_default=True)
@click.option('--jobs', type=int, default=1, show_default=True)
def theory(trials, instances, resamples, steps, seed, probe_kl_metric, output_dir, jobs):
    """Run the theory verification suite; exit code 3 on any violation"""
    budgets = TheoryBudgets(trials=trials, theorem_instances=instances, corollary_resamples=resamples,
                            optimizer_steps=steps, seed=seed)
    report = run_theory_suite(budgets, probe_kl_metric=probe_kl_metric, n_jobs=jobs).to_dict()

    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "theory_report.json")
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(report, f, indent=2, sort_keys=True)
    for line in theory_summary_lines(report):
        click.echo(line)
    click.echo(f"Report: {path}")
    return EXIT_THEORY_VIOLATION if report['violations'] else EXIT_OK


@cli.command()
@click.argument('records_paths', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--csv', 'csv_path', type=click.Path(dir_okay=False), help="Write the table as CSV")
def report(records_paths, csv_path):
    """Print the result table of one or more JSON-lines files"""
    records = [record for path in records_paths for record in read_records(path)]
    text, _ = emit_table(records, csv_path)
    click.echo(text)
    return EXIT_OK


@cli.group()
def data():
    """Dataset conversion and synthesis"""


@data.command('convert')
@click.argument('source', type=click.Path(exists=True, dir_okay=False))
@click.argument('destination', type=click.Path(dir_okay=False))
@click.option('--n-features', type=int, help="Dimension of sparse files")
@click.option('--csv-header', is_flag=True, help="CSV source starts with a header row")
def convert(source, destination, n_features, csv_header):
    """Parse a sparse or CSV file into the .npz cache"""
    rows = load_dataset(source, n_features, csv_header)
    path = save_dataset_cache(rows, destination)
    click.echo(f"{len(rows)} rows, d={rows.d}, k={rows.k} -> {path}")
    return EXIT_OK


@data.command('synthesize')
@click.argument('destination', type=click.Path(dir_okay=False))
@click.option('--preset', type=click.Choice(sorted(name for name, p in DATASET_PRESETS.items() if 'per_class' in p)),
              default='synthetic_letter', show_default=True)
@click.option('--seed', type=int, default=0, show_default=True)
def synthesize(destination, preset, seed):
    """Write a synthetic Gaussian-mixture dataset to the .npz cache"""
    settings = DATASET_PRESETS[preset]
    rows = make_synthetic_mixture(settings['k'], settings['d'], settings['per_class'], settings['spread'], seed)
    path = save_dataset_cache(rows, destination)
    click.echo(f"{len(rows)} rows, d={rows.d}, k={rows.k} -> {path}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Console entry point; maps failures to exit codes"""
    load_dotenv()
    configure_logging()
    try:
        result = cli.main(args=list(argv) if argv is not None else None, prog_name="der-ssl",
                          standalone_mode=False)
    except click.exceptions.Exit as exit_request:
        return int(exit_request.exit_code)
    except (click.ClickException, click.Abort) as error:
        if isinstance(error, click.ClickException):
            error.show()
        return EXIT_USAGE
    except ConfigurationError as error:
        click.echo(f"Configuration error: {error}", err=True)
        return EXIT_USAGE
    except (DatasetFormatError, NonFiniteRiskError, OSError, ValueError, RuntimeError) as error:
        logger.error(f"{type(error).__name__}: {error}")
        return EXIT_RUNTIME
    return int(result) if isinstance(result, int) else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
