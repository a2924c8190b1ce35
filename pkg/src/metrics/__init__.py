"""Caption and tagging metrics: CIDEr-D, #Words, macro-F1, and CSV report writing."""

from .cider import CiderResult, NGramStats, cider_d, ngram_counts
from .report import REPORT_COLUMNS, read_csv, write_csv, write_report
from .tagging import macro_f1
from .words import unique_words

__all__ = [
    "CiderResult", "NGramStats", "REPORT_COLUMNS", "cider_d", "macro_f1", "ngram_counts", "read_csv",
    "unique_words", "write_csv", "write_report",
]
