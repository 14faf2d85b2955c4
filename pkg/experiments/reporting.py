"""
Result tables
Rows are divergences in their canonical order, columns are scenario variants,
cells are "mean ± std" test accuracy in percent
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .config import SCENARIO_ORDER, Scenario
from .runner import RunRecord

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['divergence', 'column', 'scenario', 'config_hash', 'n_seeds', 'mean', 'std']
CSV_FLOAT_FORMAT = '%.6f'


def _scenario_rank(scenario: str) -> int:
    return SCENARIO_ORDER.index(Scenario(scenario))


def summarize_records(records: Sequence[RunRecord]) -> pd.DataFrame:
    """
    One row per (divergence, column) cell with accuracy mean and sample std in percent

    Raises:
        ValueError: If a cell mixes runs of different configurations
    """
    if not records:
        raise ValueError("No run records to report")

    frame = pd.DataFrame([{
        'divergence': r.divergence_label,
        'row_rank': r.spec.order_key[0],
        'row_parameter': r.spec.order_key[1],
        'column': r.column,
        'column_rank': _scenario_rank(r.scenario),
        'scenario': r.scenario,
        'config_hash': r.config_hash,
        'accuracy': np.nan if r.final_test_accuracy is None else 100.0 * r.final_test_accuracy,
    } for r in records])

    hashes = frame.groupby(['divergence', 'column'])['config_hash'].nunique()
    mixed = hashes[hashes > 1]
    if not mixed.empty:
        cells = ", ".join(f"{d}/{c}" for d, c in mixed.index)
        raise ValueError(f"Inconsistent grouping: cells {cells} mix different configurations")

    summary = (frame.groupby(['divergence', 'column'], sort=False)
               .agg(row_rank=('row_rank', 'first'), row_parameter=('row_parameter', 'first'),
                    column_rank=('column_rank', 'first'),
                    scenario=('scenario', 'first'), config_hash=('config_hash', 'first'),
                    n_seeds=('accuracy', 'count'), mean=('accuracy', 'mean'),
                    std=('accuracy', lambda values: values.std(ddof=1) if values.count() > 1 else 0.0))
               .reset_index())
    return (summary.sort_values(['row_rank', 'row_parameter', 'column_rank', 'column'], kind='mergesort')
            .reset_index(drop=True))


def format_cell(mean: float, std: float) -> str:
    if np.isnan(mean):
        return "n/a"
    return f"{mean:.2f} ± {std:.2f}"


def emit_table(records: Sequence[RunRecord], csv_path: Optional[str] = None) -> Tuple[str, pd.DataFrame]:
    """
    Aligned text table and optional CSV of the run records

    Args:
        records: Final run records
        csv_path: Where to write the CSV (bit-stable for identical records)

    Returns:
        (table text, summary frame)
    """
    summary = summarize_records(records)
    row_order = list(dict.fromkeys(summary['divergence']))
    column_order = [column for _, column in sorted(set(zip(summary['column_rank'], summary['column'])))]

    cells = summary.assign(cell=[format_cell(m, s) for m, s in zip(summary['mean'], summary['std'])])
    table = (cells.pivot(index='divergence', columns='column', values='cell')
             .reindex(index=row_order, columns=column_order)
             .fillna(''))
    table.index.name = None
    table.columns.name = None
    text = table.to_string()

    if csv_path is not None:
        summary[CSV_COLUMNS].to_csv(csv_path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator='\n')
        logger.info(f"Table CSV written to {csv_path}")
    return text, summary


def read_table_csv(csv_path: str) -> pd.DataFrame:
    """Summary frame of a CSV written by emit_table"""
    return pd.read_csv(csv_path)


def theory_summary_lines(report_dict: dict) -> List[str]:
    """Human-readable per-section violation counts of a theory report"""
    lines = []
    for name, items in report_dict.get('sections', {}).items():
        violations = sum(item.get('violations', 0) for item in items)
        status = "ok" if violations == 0 else "VIOLATED"
        lines.append(f"{name:<18} checks={len(items):<4} violations={violations:<5} {status}")
    if not lines:
        lines.append("no checks run")
    lines.append(f"total violations: {report_dict.get('violations', 0)}")
    return lines
