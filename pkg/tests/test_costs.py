import time

import pytest
from hypothesis import given, strategies as st

from gridstore.costs import (
    CostDomainError,
    build_cost_table,
    dig_cost_in_stack,
    expected_cost,
    layer_probabilities,
    placement_cost,
    retrieval_cost,
)
from gridstore.model import Bgc, BinCatalog, GridSpec
from gridstore.solver import build_optimal_bgc

# Frozen reference for the placement-cost table, rows h_e = 0..11,
# columns l = 1..22; None marks undefined entries.
GOLDEN = [
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [None, 0, 2, 2, 4, 4, 6, 6, 8, 8, 10, 10, 12, 12, 14, 14, 16, 16, 18, 18, 20, 20],
    [None, None, 0, 4, 6, 6, 10, 12, 12, 16, 18, 18, 22, 24, 24, 28, 30, 30, 34, 36, 36, 40],
    [None, None, None, 0, 6, 10, 12, 12, 18, 22, 24, 24, 30, 34, 36, 36, 42, 46, 48, 48, 54, 58],
    [None, None, None, None, 0, 8, 14, 18, 20, 20, 28, 34, 38, 40, 40, 48, 54, 58, 60, 60, 68, 74],
    [None, None, None, None, None, 0, 10, 18, 24, 28, 30, 30, 40, 48, 54, 58, 60, 60, 70, 78, 84, 88],
    [None, None, None, None, None, None, 0, 12, 22, 30, 36, 40, 42, 42, 54, 64, 72, 78, 82, 84, 84, 96],
    [None, None, None, None, None, None, None, 0, 14, 26, 36, 44, 50, 54, 56, 56, 70, 82, 92, 100, 106, 110],
    [None, None, None, None, None, None, None, None, 0, 16, 30, 42, 52, 60, 66, 70, 72, 72, 88, 102, 114, 124],
    [None, None, None, None, None, None, None, None, None, 0, 18, 34, 48, 60, 70, 78, 84, 88, 90, 90, 108, 124],
    [None, None, None, None, None, None, None, None, None, None, 0, 20, 38, 54, 68, 80, 90, 98, 104, 108, 110, 110],
    [None, None, None, None, None, None, None, None, None, None, None, 0, 22, 42, 60, 76, 90, 102, 112, 120, 126, 130],
]


def test_table_matches_golden_reference():
    table = build_cost_table(12)
    for h_e, row in enumerate(GOLDEN):
        for l, expected in enumerate(row, start=1):
            if expected is None:
                assert not table.defined(h_e, l)
            else:
                assert table[h_e, l] == expected, (h_e, l)


def test_table_build_is_fast():
    start = time.perf_counter()
    build_cost_table(12)
    assert time.perf_counter() - start < 1.0


def test_reference_retrieval_example():
    # target in layer 8 of a stack with empty level 2
    table = build_cost_table(12)
    assert placement_cost(8, 2, table) == 12
    assert dig_cost_in_stack(8, 2) == 66
    assert retrieval_cost(8, 2, table) == 78


def test_more_anchors():
    table = build_cost_table(12)
    assert table[5, 10] == 28
    assert table[3, 7] == 12
    assert all(table[0, l] == 0 for l in range(1, 23))


def test_surface_placement_is_free():
    table = build_cost_table(12)
    for h_e in range(12):
        assert table[h_e, h_e + 1] == 0


def test_domain_errors():
    table = build_cost_table(6)
    with pytest.raises(CostDomainError):
        table[3, 3]
    with pytest.raises(CostDomainError):
        table[6, 7]
    with pytest.raises(CostDomainError):
        dig_cost_in_stack(2, 2)
    with pytest.raises(CostDomainError):
        dig_cost_in_stack(5, -1)


@given(st.integers(0, 11), st.integers(1, 24))
def test_monotone_in_layer(h_e, l):
    table = build_cost_table(12)
    if table.defined(h_e, l) and table.defined(h_e, l + 1):
        assert table[h_e, l] <= table[h_e, l + 1]
        assert retrieval_cost(l, h_e, table) < retrieval_cost(l + 1, h_e, table)


def test_csv_dump_has_dash_for_undefined():
    text = build_cost_table(3).to_csv()
    lines = text.strip().split("\n")
    assert lines[0] == "h_e," + ",".join(str(l) for l in range(1, 7))
    assert lines[2].startswith("1,-,0,")
    assert len(lines) == 4


def test_layer_probabilities_and_expected_cost():
    spec = GridSpec(rows=1, cols=3, height=3, fill_level=3)
    catalog = BinCatalog((0.4, 0.3, 0.06, 0.04, 0.04, 0.04, 0.04, 0.04, 0.04))
    bgc = build_optimal_bgc(spec, catalog, h_e=0)
    pi = layer_probabilities(bgc, catalog)
    assert pi[0] == pytest.approx(0.76)
    assert pi.sum() == pytest.approx(1.0)
    table = build_cost_table(3)
    manual = sum(retrieval_cost(l, 0, table) * pi[l - 1] for l in (1, 2, 3))
    assert expected_cost(bgc, catalog, table) == pytest.approx(manual)
