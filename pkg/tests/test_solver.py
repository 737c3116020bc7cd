import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from gridstore.costs import build_cost_table, expected_cost, retrieval_cost
from gridstore.model import (
    BinCatalog,
    GridSpec,
    ValidationError,
    normalize_catalog,
    pad_with_empty_bins,
)
from gridstore.solver import (
    LayerGroupAssignment,
    assign_layer_groups,
    build_optimal_bgc,
    classify_stack,
    coverage,
    distance_to_equivalent_optimal,
    expected_transform_requests,
    is_equivalent_optimal,
    is_layer_complete,
    is_quasi_equivalent_optimal,
    optimal_empty_level,
    popular_group_count,
    stack_distance,
    stack_distance_to_complete,
)


def brute_force_min_cost(popularity, h_c, m_f, h_e, table):
    """Minimum expected cost over all assignments of bins to layers.

    Cost depends only on which bins share a layer, so enumerate the
    partitions of the bin set into h_c groups of size m_f.
    """
    n = h_c * m_f
    best = math.inf
    bins = list(range(n))

    def rec(remaining, layer, acc):
        nonlocal best
        if layer == h_c:
            best = min(best, acc)
            return
        for group in itertools.combinations(remaining, m_f):
            mass = sum(popularity[i] for i in group)
            left = [i for i in remaining if i not in group]
            rec(left, layer + 1,
                acc + retrieval_cost(h_e + 1 + layer, h_e, table) * mass)
        return

    rec(bins, 0, 0.0)
    return best


@pytest.mark.parametrize("h_c,m_f", [(2, 2), (3, 2), (2, 3), (3, 3), (4, 2)])
def test_constructed_bgc_is_exhaustively_optimal(h_c, m_f):
    rng = np.random.default_rng(h_c * 10 + m_f)
    n = h_c * m_f
    for _ in range(10):
        weights = rng.random(n) + 0.01
        catalog = normalize_catalog(weights)
        h_e = 1
        height = h_c + h_e
        spec = GridSpec(rows=1, cols=m_f, height=height, fill_level=h_c,
                        reserve_fraction=h_e / height + 1e-9)
        table = build_cost_table(height)
        bgc = build_optimal_bgc(spec, catalog, h_e)
        cost = expected_cost(bgc, catalog, table)
        best = brute_force_min_cost(catalog.popularity, h_c, m_f, h_e, table)
        assert cost == pytest.approx(best, abs=1e-12)


def test_optimal_layers_sorted_by_popularity():
    spec = GridSpec(rows=2, cols=3, height=4, fill_level=3,
                    reserve_fraction=0.25)
    catalog = pad_with_empty_bins(spec, normalize_catalog(range(18, 0, -1)))
    bgc = build_optimal_bgc(spec, catalog, 1)
    layer_mass = [sum(catalog.popularity_of(int(v)) for v in bgc.cells[l])
                  for l in range(4)]
    assert layer_mass[0] == 0.0  # empty level stays empty
    assert layer_mass[1] >= layer_mass[2] >= layer_mass[3]
    # within a layer, ascending IDs left to right
    row = [int(v) for v in bgc.cells[1] if v != 0]
    assert row == sorted(row)


def test_optimal_empty_level_tie_breaks_low():
    # uniform demand with free placement everywhere is cost-equal only in
    # contrived cases; instead check the reported minimum is consistent
    spec = GridSpec(rows=2, cols=3, height=3, fill_level=2,
                    reserve_fraction=0.34)
    catalog = normalize_catalog([3, 2, 1, 1])
    table = build_cost_table(3)
    best, per_level = optimal_empty_level(spec, catalog, table)
    assert {0, 1} <= set(per_level)
    assert per_level[best] == min(per_level.values())
    assert best == min(h for h, c in per_level.items()
                       if c == per_level[best])


def _repeated_popularity_fixture():
    """Three stacks, height three, nine bins; bins 4..9 share a popularity
    so they are interchangeable across groups 2 and 3."""
    spec = GridSpec(rows=1, cols=3, height=3, fill_level=3)
    catalog = BinCatalog((0.4, 0.3, 0.06) + (0.04,) * 6)
    optimal = build_optimal_bgc(spec, catalog, 0)
    groups = assign_layer_groups(optimal, catalog)
    return spec, catalog, groups


def test_layer_groups_from_optimal():
    _, _, groups = _repeated_popularity_fixture()
    assert groups.group_count == 3
    assert groups.group_of[1] == 1 and groups.group_of[4] == 2
    assert groups.group_of[9] == 3
    for b in (1, 2, 3):
        assert groups.candidate_groups(b) == frozenset({1})
    for b in range(4, 10):
        assert groups.candidate_groups(b) == frozenset({2, 3})


def test_layer_complete_with_repeated_popularity():
    _, _, groups = _repeated_popularity_fixture()
    assert is_layer_complete([1, 4, 5], groups)       # {1} + two of {2,3}
    assert not is_layer_complete([2, 3, 6], groups)   # two group-1 bins
    assert not is_layer_complete([7, 8, 9], groups)   # nothing from group 1
    assert not is_layer_complete([1, 4], groups)      # too short


def test_classify_stack_uses_each_group_once():
    _, _, groups = _repeated_popularity_fixture()
    labels = classify_stack([1, 4, 5], groups)
    assert sorted(labels) == [1, 2, 3]
    assert labels[0] == 1


def brute_force_layer_complete(bins, groups: LayerGroupAssignment) -> bool:
    if len(bins) != groups.group_count:
        return False
    for combo in itertools.product(*(sorted(groups.candidate_groups(b))
                                     for b in bins)):
        if sorted(combo) == list(range(1, groups.group_count + 1)):
            return True
    return False


def test_matching_agrees_with_exhaustive_classification():
    spec = GridSpec(rows=1, cols=4, height=4, fill_level=4)
    # two popularity ties spanning different group pairs
    catalog = BinCatalog((0.15,) * 4 + (0.05,) * 8 + (0.0,) * 4)
    optimal = build_optimal_bgc(spec, catalog, 0)
    groups = assign_layer_groups(optimal, catalog)
    rng = np.random.default_rng(42)
    ids = np.arange(1, 17)
    for _ in range(400):
        k = int(rng.integers(1, 7))
        stack = list(rng.choice(ids, size=k, replace=False))
        assert is_layer_complete(stack, groups) == \
            brute_force_layer_complete(stack, groups)


def test_stack_distance_examples():
    # stack holding groups {1,1,2,2} vs a complete stack {1,2,3,4}
    assert stack_distance([1, 1, 2, 2], [1, 2, 3, 4]) == 4
    assert stack_distance([1, 2], [1, 2]) == 0
    assert stack_distance([], [1]) == 1


@given(st.lists(st.integers(1, 5), max_size=8),
       st.lists(st.integers(1, 5), max_size=8),
       st.lists(st.integers(1, 5), max_size=8))
def test_stack_distance_is_a_metric(u, v, w):
    assert stack_distance(u, v) == stack_distance(v, u)
    assert stack_distance(u, u) == 0
    assert stack_distance(u, w) <= stack_distance(u, v) + stack_distance(v, w)


def test_distance_to_complete_via_coverage():
    _, _, groups = _repeated_popularity_fixture()
    assert stack_distance_to_complete([1, 4, 5], groups) == 0
    assert stack_distance_to_complete([2, 3, 6], groups) == 2
    assert stack_distance_to_complete([7, 8, 9], groups) == 2
    assert stack_distance_to_complete([], groups) == 3


def test_equivalence_predicates():
    spec, catalog, groups = _repeated_popularity_fixture()
    optimal = build_optimal_bgc(spec, catalog, 0)
    assert is_equivalent_optimal(optimal, groups)
    assert distance_to_equivalent_optimal(optimal, groups) == 0
    # swap a group-1 bin with a group-3 bin: two stacks break
    broken = optimal.copy()
    broken.cells[0, 0], broken.cells[2, 1] = broken.cells[2, 1], broken.cells[0, 0]
    assert not is_equivalent_optimal(broken, groups)
    assert distance_to_equivalent_optimal(broken, groups) == 4
    # quasi-equivalence with one popular group only needs group 1 everywhere
    assert popular_group_count(3, 0.2) == 1
    assert is_quasi_equivalent_optimal(optimal, groups, 0.2)
    assert not is_quasi_equivalent_optimal(broken, groups, 0.2)


def test_coverage_prefix_groups():
    _, _, groups = _repeated_popularity_fixture()
    assert coverage([4, 5], groups, 1) == 0  # group 1 absent
    assert coverage([1, 2], groups, 1) == 1


def test_expected_transform_requests_known_values():
    assert expected_transform_requests([1.0]) == pytest.approx(1.0)
    assert expected_transform_requests([0.5, 0.5]) == pytest.approx(3.0)
    # residual mass becomes an extra coupon type
    assert expected_transform_requests([0.2, 0.1]) == pytest.approx(
        1 / 0.2 + 1 / 0.1 + 1 / 0.7 - 1 / 0.3 - 1 / 0.9 - 1 / 0.8 + 1 / 1.0)


def test_expected_transform_requests_edge_cases():
    assert expected_transform_requests([0.3, 0.0]) == math.inf
    with pytest.raises(ValidationError):
        expected_transform_requests([0.6, 0.6])
    with pytest.raises(ValidationError):
        expected_transform_requests([-0.1])
    with pytest.raises(ValidationError):
        expected_transform_requests([0.01] * 21)


def _mc_collect_all(probs, trials, horizon, seed):
    """Monte Carlo mean draws until every type (plus the residual type,
    when the probabilities do not sum to one) has appeared."""
    full = list(probs)
    rest = 1.0 - sum(full)
    if rest > 1e-12:
        full.append(rest)
    rng = np.random.default_rng(seed)
    draws = rng.choice(len(full), size=(trials, horizon), p=full)
    first = np.empty((trials, len(full)), dtype=np.int64)
    for t in range(len(full)):
        hit = draws == t
        first[:, t] = np.where(hit.any(axis=1), hit.argmax(axis=1), horizon)
    return float(first.max(axis=1).mean()) + 1.0


def test_expected_transform_requests_monte_carlo():
    probs = [0.2, 0.1]
    expected = expected_transform_requests(probs)
    mc = _mc_collect_all(probs, trials=40000, horizon=200, seed=5)
    assert mc == pytest.approx(expected, rel=0.02)
