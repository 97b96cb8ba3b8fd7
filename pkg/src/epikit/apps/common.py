"""Shared plumbing for the reference applications."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from ..epi import ApproximationScheme
from ..report import DiagnosticReport


def substream(*tags: int) -> np.random.Generator:
    """Deterministic generator for a (seed, level, ...) tag tuple."""
    return np.random.default_rng(list(tags))


@dataclass(frozen=True)
class AppResult:
    """One application run: headline verdict, sub-reports, and the trace."""

    name: str
    report: DiagnosticReport
    reports: dict[str, DiagnosticReport]
    trace: tuple[dict[str, Any], ...]
    scheme: ApproximationScheme
    config_used: dict[str, Any] = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return self.report.verdict

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "verdict": self.report.verdict,
            "report": self.report.to_json_dict(),
            "reports": {k: r.to_json_dict() for k, r in self.reports.items()},
            "trace": [_row_to_json(r) for r in self.trace],
            "config_used": self.config_used,
        }


def _row_to_json(row: dict[str, Any]) -> dict[str, Any]:
    from ..report import _jsonify
    return _jsonify(row)


def stratified_counts(weights: np.ndarray, total: int,
                      rng: np.random.Generator) -> np.ndarray:
    """Proportional allocation of ``total`` draws; remainders randomized.

    Exact when ``total * weights`` is integral, so reference measures with
    dyadic weights are reproduced without sampling error.
    """
    raw = np.asarray(weights, dtype=float) * total
    counts = np.floor(raw).astype(int)
    short = total - int(counts.sum())
    if short > 0:
        frac = raw - counts
        tiebreak = rng.random(len(counts))
        order = np.lexsort((tiebreak, -frac))
        counts[order[:short]] += 1
    return counts


def worst_verdict(reports: Sequence[DiagnosticReport]) -> str:
    """Aggregate: any fail dominates, then hypothesis-unverified."""
    verdicts = [r.verdict for r in reports]
    if "fail" in verdicts:
        return "fail"
    if "hypothesis-unverified" in verdicts:
        return "hypothesis-unverified"
    return "pass"
