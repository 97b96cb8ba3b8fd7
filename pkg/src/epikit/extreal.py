"""Extended-real scalars and the sum conventions shared by every module.

All infinities are IEEE ``inf``/``-inf``; NaN is never a value.  Sums and
differences resolve infinity conflicts in favor of ``+inf``: for every
extended ``a`` one has ``inf + a = inf`` and ``inf - a = inf``, while
``b - inf = -inf`` for every ``b < inf``.  Weighted sums used for
expectations are never accumulated with signed infinities mixed in; they
are split into nonnegative parts first and combined once at the end (see
:func:`epikit.integrand.expectation`).
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np

INF = float("inf")
NEG_INF = float("-inf")

#: JSON tokens standing in for the two infinities.
POS_INF_TOKEN = "+inf"
NEG_INF_TOKEN = "-inf"


class ExtReal(float):
    """A float restricted to the extended reals (NaN rejected).

    Arithmetic follows the +inf-dominant conventions: ``ExtReal("inf") -
    ExtReal("inf")`` is ``+inf`` and ``ExtReal(3.0) - ExtReal("inf")`` is
    ``-inf``.  Instances are immutable and hash/compare like floats.
    """

    __slots__ = ()

    def __new__(cls, value: float = 0.0) -> "ExtReal":
        v = float(value)
        if math.isnan(v):
            raise ValueError("ExtReal cannot hold NaN")
        return super().__new__(cls, v)

    def __add__(self, other: float) -> "ExtReal":
        return ExtReal(add_conv(float(self), float(other)))

    __radd__ = __add__

    def __sub__(self, other: float) -> "ExtReal":
        return ExtReal(sub_conv(float(self), float(other)))

    def __rsub__(self, other: float) -> "ExtReal":
        return ExtReal(sub_conv(float(other), float(self)))

    def __neg__(self) -> "ExtReal":
        return ExtReal(-float(self))

    def __mul__(self, other: float) -> "ExtReal":
        # 0 * inf raises instead of silently producing NaN; call sites that
        # need measure-theoretic 0*inf = 0 must mask zero weights explicitly.
        return ExtReal(float.__mul__(self, float(other)))

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"ExtReal({float(self)!r})"


def add_conv(a: float, b: float) -> float:
    """Sum under the +inf-dominant convention: any +inf operand wins."""
    if a == INF or b == INF:
        return INF
    if a == NEG_INF or b == NEG_INF:
        return NEG_INF
    return a + b


def sub_conv(a: float, b: float) -> float:
    """Difference ``a - b`` with ``inf - a = inf`` and ``b - inf = -inf``."""
    return add_conv(a, -b)


def sum_conv(values: Iterable[float]) -> float:
    """Left fold of :func:`add_conv` in the given order (deterministic)."""
    total = 0.0
    for v in values:
        total = add_conv(total, float(v))
    return total


def plus_part(a: float) -> float:
    """``max(a, 0)``; maps -inf to 0 and +inf to +inf."""
    return max(float(a), 0.0)


def minus_part(a: float) -> float:
    """``-min(a, 0)``; nonnegative, maps -inf to +inf and +inf to 0."""
    return -min(float(a), 0.0)


def liminf_seq(values: Sequence[float], tail_start: int = 0) -> ExtReal:
    """Tail infimum of a finite sequence from ``tail_start`` onward.

    Desk-scale surrogate for the lower limit over an unbounded index: the
    supremum over tail starts is realized by callers scanning a schedule of
    tail starts (the tail infimum is nondecreasing in the start index).
    """
    tail = _tail(values, tail_start)
    return ExtReal(min(tail))


def limsup_seq(values: Sequence[float], tail_start: int = 0) -> ExtReal:
    """Tail supremum of a finite sequence from ``tail_start`` onward."""
    tail = _tail(values, tail_start)
    return ExtReal(max(tail))


def _tail(values: Sequence[float], tail_start: int) -> list[float]:
    if len(values) == 0:
        raise ValueError("empty sequence has no tail limit")
    if not 0 <= tail_start < len(values):
        raise ValueError(
            f"tail_start {tail_start} out of range for length {len(values)}"
        )
    tail = [float(v) for v in values[tail_start:]]
    if any(math.isnan(v) for v in tail):
        raise ValueError("sequence contains NaN")
    return tail


def ext_close(a: float, b: float, tol: float) -> bool:
    """Category-aware closeness: equal infinities match, finite gap <= tol."""
    a, b = float(a), float(b)
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol


def ge_with_tol(lhs: float, rhs: float, tol: float) -> bool:
    """Whether ``lhs >= rhs - tol`` holds in extended-real semantics."""
    lhs, rhs = float(lhs), float(rhs)
    if lhs == INF or rhs == NEG_INF:
        return True
    if rhs == INF:
        return lhs == INF
    if lhs == NEG_INF:
        return False
    return lhs >= rhs - tol


def exceedance(lhs: float, rhs: float) -> float:
    """Amount by which ``lhs`` exceeds ``rhs`` (0 when below; inf-aware)."""
    lhs, rhs = float(lhs), float(rhs)
    if lhs <= rhs:
        return 0.0
    # lhs > rhs here, so at most one of them is a given infinity.
    return sub_conv(lhs, rhs)


def ext_to_json(value: float) -> float | str:
    """Encode an extended real as a JSON number or an infinity token."""
    v = float(value)
    if v == INF:
        return POS_INF_TOKEN
    if v == NEG_INF:
        return NEG_INF_TOKEN
    if math.isnan(v):
        raise ValueError("NaN is not serializable")
    return v


def ext_from_json(obj: float | str) -> float:
    """Decode a JSON number or ``"+inf"``/``"-inf"`` token."""
    if isinstance(obj, str):
        if obj == POS_INF_TOKEN:
            return INF
        if obj == NEG_INF_TOKEN:
            return NEG_INF
        raise ValueError(f"unrecognized extended-real token {obj!r}")
    if isinstance(obj, bool) or not isinstance(obj, (int, float)):
        raise ValueError(f"expected number or infinity token, got {obj!r}")
    v = float(obj)
    if math.isnan(v):
        raise ValueError("NaN is not a valid extended real")
    return v


def values_to_json(values: np.ndarray | Sequence[float]) -> list:
    """Encode an array of extended reals, tokenizing infinities (any rank)."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        return ext_to_json(float(arr))
    return [values_to_json(row) for row in arr] if arr.ndim > 1 else [
        ext_to_json(float(v)) for v in arr
    ]


def values_from_json(obj: Sequence) -> np.ndarray:
    """Decode a (nested) list of numbers/tokens into a float array."""
    if isinstance(obj, (list, tuple)):
        if obj and isinstance(obj[0], (list, tuple)):
            return np.asarray([values_from_json(row) for row in obj], dtype=float)
        return np.asarray([ext_from_json(v) for v in obj], dtype=float)
    raise ValueError("expected a JSON array of extended reals")


def require_no_nan(arr: np.ndarray, what: str = "array") -> np.ndarray:
    """Validate that an array is NaN-free, returning it unchanged."""
    arr = np.asarray(arr, dtype=float)
    if np.isnan(arr).any():
        raise ValueError(f"{what} contains NaN")
    return arr
