"""Structured verdicts for every inequality and theorem check.

A report never hides a stage: hypothesis checks and the conclusion are
recorded separately, so "fails hypotheses but satisfies the conclusion"
is distinguishable from a genuine counterexample.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .extreal import ext_to_json

PASS = "pass"
FAIL = "fail"
HYPOTHESIS_UNVERIFIED = "hypothesis-unverified"

_VERDICTS = (PASS, FAIL, HYPOTHESIS_UNVERIFIED)


@dataclass(frozen=True)
class Stage:
    """One named hypothesis or conclusion check inside a report."""

    name: str
    ok: bool
    detail: dict[str, Any] = field(default_factory=dict)
    witnesses: tuple[dict[str, Any], ...] = ()

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "ok": self.ok,
            "detail": _jsonify(self.detail),
            "witnesses": [_jsonify(w) for w in self.witnesses],
        }


@dataclass(frozen=True)
class DiagnosticReport:
    """Outcome of a checked inequality with margins and schedules used.

    ``verdict`` is ``"pass"`` when hypotheses and conclusion both hold,
    ``"fail"`` when the conclusion fails (hypothesis outcomes are still in
    ``stages``), and ``"hypothesis-unverified"`` when some hypothesis could
    not be verified while the conclusion held anyway.
    """

    name: str
    verdict: str
    lhs: float
    rhs: float
    margin: float
    witnesses: tuple[dict[str, Any], ...] = ()
    schedules_used: dict[str, Any] = field(default_factory=dict)
    stages: tuple[Stage, ...] = ()
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.verdict not in _VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if self.verdict == FAIL and not self.witnesses:
            raise ValueError("a failing report must carry witnesses")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def stage(self, name: str) -> Stage:
        for st in self.stages:
            if st.name == name:
                return st
        raise KeyError(name)

    def to_json_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "name": self.name,
            "verdict": self.verdict,
            "lhs": ext_to_json(self.lhs),
            "rhs": ext_to_json(self.rhs),
            "margin": ext_to_json(self.margin),
            "witnesses": [_jsonify(w) for w in self.witnesses],
            "schedules_used": _jsonify(self.schedules_used),
            "stages": [st.to_json_dict() for st in self.stages],
        }
        if self.seed is not None:
            out["seed"] = self.seed
        return out


def combine_verdict(hypotheses_ok: bool, conclusion_ok: bool) -> str:
    """Verdict from the two stage groups; conclusion failure dominates."""
    if not conclusion_ok:
        return FAIL
    return PASS if hypotheses_ok else HYPOTHESIS_UNVERIFIED


def _jsonify(obj: Any) -> Any:
    """Deep-convert floats (tokenizing infinities), arrays and mappings."""
    import numpy as np

    if isinstance(obj, Mapping):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return _jsonify(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, (float, np.floating)):
        return ext_to_json(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj
