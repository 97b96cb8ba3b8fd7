"""Arithmetic conventions and tail-limit surrogates."""

from __future__ import annotations

import itertools
import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from epikit.extreal import (INF, NEG_INF, ExtReal, add_conv, ext_close,
                            ext_from_json, ext_to_json, ge_with_tol,
                            liminf_seq, limsup_seq, minus_part, plus_part,
                            sub_conv, sum_conv)

EXT_VALUES = [NEG_INF, -1.0, 0.0, 1.0, INF]


def test_construction_rejects_nan():
    with pytest.raises(ValueError):
        ExtReal(float("nan"))


def test_subtraction_conventions():
    assert sub_conv(INF, INF) == INF
    assert sub_conv(3.0, INF) == NEG_INF
    assert sub_conv(2.0, 0.5) == 1.5
    assert sub_conv(NEG_INF, INF) == NEG_INF
    assert sub_conv(NEG_INF, NEG_INF) == INF  # +inf-dominant resolution
    assert sub_conv(INF, NEG_INF) == INF


def test_addition_is_plus_inf_dominant():
    for a in EXT_VALUES:
        assert add_conv(INF, a) == INF
        assert add_conv(a, INF) == INF
    assert add_conv(NEG_INF, -1.0) == NEG_INF
    assert add_conv(2.0, 3.0) == 5.0


def test_operator_overloads_follow_conventions():
    assert ExtReal(INF) - ExtReal(INF) == INF
    assert ExtReal(3.0) - ExtReal(INF) == NEG_INF
    assert isinstance(ExtReal(1.0) + 2.0, ExtReal)
    assert -ExtReal(INF) == NEG_INF
    with pytest.raises(ValueError):
        ExtReal(INF) * 0.0


def test_parts_at_infinities_and_finite_split():
    assert plus_part(NEG_INF) == 0.0 and minus_part(NEG_INF) == INF
    assert plus_part(INF) == INF and minus_part(INF) == 0.0
    assert plus_part(-2.5) == 0.0 and minus_part(-2.5) == 2.5


@given(st.floats(allow_nan=False, allow_infinity=True, width=64))
def test_parts_recombine_for_finite(a):
    assert plus_part(a) >= 0.0 and minus_part(a) >= 0.0
    if math.isfinite(a):
        assert plus_part(a) - minus_part(a) == a


def test_liminf_examples():
    assert liminf_seq([1, 0, 1, 0, 1, 0], tail_start=0) == 0.0
    assert liminf_seq([NEG_INF, 5, 5, 5], tail_start=1) == 5.0
    assert limsup_seq([1, 0, 1, 0], tail_start=0) == 1.0
    with pytest.raises(ValueError):
        liminf_seq([])
    with pytest.raises(ValueError):
        liminf_seq([1.0], tail_start=1)


def test_liminf_plus_part_identity_exhaustive():
    # (liminf a)_+ = liminf a_+ over all sequences from the 5-symbol
    # alphabet up to length 5, for every admissible tail start.
    for length in range(1, 6):
        for seq in itertools.product(EXT_VALUES, repeat=length):
            for start in range(length):
                lhs = plus_part(liminf_seq(seq, start))
                rhs = liminf_seq([plus_part(v) for v in seq], start)
                assert lhs == rhs


def test_sum_conv_fixed_order():
    assert sum_conv([1.0, 2.0, 3.0]) == 6.0
    assert sum_conv([NEG_INF, INF]) == INF
    assert sum_conv([INF, NEG_INF]) == INF
    assert sum_conv([NEG_INF, 1.0]) == NEG_INF


def test_json_round_trip_tokens():
    for v in [1.5, 0.0, -2.25, INF, NEG_INF]:
        assert ext_from_json(json.loads(json.dumps(ext_to_json(v)))) == v
    assert ext_to_json(INF) == "+inf" and ext_to_json(NEG_INF) == "-inf"
    with pytest.raises(ValueError):
        ext_from_json("oo")
    with pytest.raises(ValueError):
        ext_from_json(True)


def test_comparison_helpers():
    assert ext_close(INF, INF, 0.0)
    assert not ext_close(INF, 1e300, 1e280)
    assert ext_close(1.0, 1.0 + 1e-13, 1e-12)
    assert ge_with_tol(INF, INF, 0.0)
    assert ge_with_tol(1.0, 2.0, 1.5)
    assert not ge_with_tol(1.0, INF, 10.0)
    assert not ge_with_tol(NEG_INF, 0.0, 10.0)
    assert ge_with_tol(NEG_INF, NEG_INF, 0.0)
