"""Verdict records shared by every check in the toolkit."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


def jsonable(obj: Any) -> Any:
    """Convert numpy scalars/arrays and nested containers into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        # 15 significant digits keeps reports stable across platforms
        return float(f"{x:.15g}")
    return obj


@dataclass
class Report:
    """Outcome of a single numerical check.

    ``residual`` is the worst observed defect and ``tolerance`` the gate it was
    compared against; ``details`` carries check-specific diagnostics.
    """

    name: str
    verdict: bool
    residual: float
    tolerance: float
    worst_case: Any = None
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return bool(self.verdict)

    def to_dict(self) -> dict:
        return jsonable(
            {
                "name": self.name,
                "verdict": bool(self.verdict),
                "residual": self.residual,
                "tolerance": self.tolerance,
                "worst_case": self.worst_case,
                "details": self.details,
            }
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def summary(self) -> str:
        flag = "PASS" if self.verdict else "FAIL"
        return f"[{flag}] {self.name}: residual={self.residual:.3g} tol={self.tolerance:.3g}"
