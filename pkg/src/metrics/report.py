# src/metrics/report.py

import csv
import logging
from typing import Dict, List, Sequence

from utils.artifacts import atomic_write
from utils.errors import DataError

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("system", "cider_d", "n_words", "macro_f1")


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_csv(path, rows: Sequence[Dict], columns: Sequence[str]) -> None:
    """Fixed column order and float formatting, so identical results give identical bytes."""
    with atomic_write(path, "w") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(col)) for col in columns])
    logger.info(f"Wrote {len(rows)} rows to {path}")


def read_csv(path) -> List[Dict[str, str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as f:
            return list(csv.DictReader(f))
    except FileNotFoundError as e:
        raise DataError(f"Missing report {path}") from e


def write_report(path, rows: Sequence[Dict]) -> None:
    write_csv(path, rows, REPORT_COLUMNS)
