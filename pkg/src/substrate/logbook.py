# src/substrate/logbook.py

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

from utils.errors import NumericalError

logger = logging.getLogger(__name__)


@dataclass
class TrainingLog:
    """Rows of step/epoch metrics collected by a training loop."""
    name: str
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def record(self, **metrics) -> Dict[str, Any]:
        for key, value in metrics.items():
            if isinstance(value, float) and not math.isfinite(value):
                raise NumericalError(f"{self.name}: non-finite {key}={value} at {metrics}")
        self.rows.append(dict(metrics))
        return self.rows[-1]

    def series(self, key: str) -> List[Any]:
        return [row[key] for row in self.rows if key in row]

    def last(self, key: str, default: Optional[Any] = None) -> Any:
        values = self.series(key)
        return values[-1] if values else default

    def to_records(self) -> List[Dict[str, Any]]:
        return [dict(row, log=self.name) for row in self.rows]


def check_finite(name: str, value: float, step: int, **context) -> None:
    if not math.isfinite(value):
        details = ", ".join(f"{k}={v}" for k, v in context.items())
        raise NumericalError(f"{name}: non-finite loss {value} at step {step}" + (f" ({details})" if details else ""))
