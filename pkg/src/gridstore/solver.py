"""Optimal configuration construction, layer groups, and distance metrics.

Layer groups partition the bins by the layer they occupy in an optimal
configuration.  Bins sharing a popularity value are interchangeable across
the groups their equality class spans, so layer-completeness of a stack is
decided by bipartite matching between the stack's bins and the groups.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .costs import CostTable, expected_cost
from .model import Bgc, BinCatalog, GridSpec, ValidationError, pad_with_empty_bins


class CapacityError(ValueError):
    """More occupied stacks required than the grid provides."""


def build_optimal_bgc(spec: GridSpec, catalog: BinCatalog, h_e: int) -> Bgc:
    """Place bins so that each layer from the surface down holds the next
    m_f most popular bins; within a layer, ascending ID left to right.

    The catalog must already be padded to a multiple of the fill level
    implied by h_e.
    """
    h_c = spec.height - h_e
    n = catalog.bin_count
    if n % h_c != 0:
        raise ValidationError(f"bin count {n} is not a multiple of fill level {h_c}")
    m_f = n // h_c
    storage = spec.storage_stacks()
    if spec.buffer_stack is not None:
        storage = [m for m in storage if m != spec.buffer_stack]
    if m_f > len(storage):
        raise CapacityError(f"need {m_f} occupied stacks, have {len(storage)}")
    bgc = Bgc.empty(spec.height, spec.stack_count)
    for depth in range(h_c):
        layer = h_e + 1 + depth
        for j in range(m_f):
            bgc.cells[layer - 1, storage[j] - 1] = depth * m_f + j + 1
    return bgc


def optimal_empty_level(
    spec: GridSpec, catalog: BinCatalog, table: CostTable
) -> tuple[int, dict[int, float]]:
    """Search the empty level minimizing the expected single-request cost.

    Each candidate re-pads the catalog (the occupied-stack count depends on
    the fill level) and evaluates the optimal configuration at that level.
    Ties break toward the smaller empty level (denser storage).
    """
    per_level: dict[int, float] = {}
    for h_e in range(spec.height - spec.min_fill_level + 1):
        h_c = spec.height - h_e
        cand_spec = GridSpec(
            rows=spec.rows, cols=spec.cols, height=spec.height, fill_level=h_c,
            reserve_fraction=spec.reserve_fraction,
            cell_length=spec.cell_length, cell_width=spec.cell_width,
            bin_height=spec.bin_height, workstations=spec.workstations,
            buffer_stack=spec.buffer_stack,
        )
        padded = pad_with_empty_bins(cand_spec, catalog)
        try:
            bgc = build_optimal_bgc(cand_spec, padded, h_e)
        except CapacityError:
            continue
        per_level[h_e] = expected_cost(bgc, padded, table)
    if not per_level:
        raise CapacityError("no feasible empty level for this grid and catalog")
    best = min(per_level, key=lambda h: (per_level[h], h))
    return best, per_level


@dataclass(frozen=True)
class LayerGroupAssignment:
    """Bin -> layer group map with popularity equality classes.

    ``candidates[bin]`` is the set of groups a bin may be classified into:
    the groups reachable through its popularity equality class.
    """

    group_of: dict[int, int]
    candidates: dict[int, frozenset[int]]
    group_count: int

    def candidate_groups(self, bin_id: int) -> frozenset[int]:
        return self.candidates[bin_id]


def assign_layer_groups(optimal: Bgc, catalog: BinCatalog) -> LayerGroupAssignment:
    """Derive layer groups from an optimal configuration.

    Group g collects the bins of the g-th occupied layer counted from the
    surface.  Bins with exactly equal popularity are interchangeable across
    all groups their equality class touches.
    """
    group_of: dict[int, int] = {}
    h_e = None
    for l in range(1, optimal.height + 1):
        row = [int(v) for v in optimal.cells[l - 1] if v != 0]
        if not row:
            continue
        if h_e is None:
            h_e = l - 1
        for b in row:
            group_of[b] = l - h_e
    group_count = max(group_of.values())

    by_pop: dict[float, list[int]] = {}
    for b in group_of:
        by_pop.setdefault(catalog.popularity_of(b), []).append(b)
    candidates = {}
    for bins in by_pop.values():
        groups = frozenset(group_of[b] for b in bins)
        for b in bins:
            candidates[b] = groups
    return LayerGroupAssignment(group_of, candidates, group_count)


def _max_matching(
    bins: list[int], groups: LayerGroupAssignment, target: range
) -> dict[int, int]:
    """Maximum bipartite matching of bins to the target groups.

    Returns {group: bin index into ``bins``}.  Deterministic: bins are
    processed in list order, groups tried in ascending order.
    """
    match: dict[int, int] = {}

    def try_assign(i: int, seen: set[int]) -> bool:
        for g in sorted(groups.candidate_groups(bins[i])):
            if g not in target or g in seen:
                continue
            seen.add(g)
            if g not in match or try_assign(match[g], seen):
                match[g] = i
                return True
        return False

    for i in range(len(bins)):
        try_assign(i, set())
    return match


def coverage(bins: list[int], groups: LayerGroupAssignment,
             n_groups: int | None = None) -> int:
    """Number of distinct groups 1..n_groups coverable by classifying each
    bin into at most one of its candidate groups."""
    if n_groups is None:
        n_groups = groups.group_count
    return len(_max_matching(bins, groups, range(1, n_groups + 1)))


def classify_stack(bins: list[int], groups: LayerGroupAssignment) -> list[int]:
    """One group label per bin (parallel to ``bins``), chosen by maximum
    matching; bins left unmatched keep their own canonical group."""
    match = _max_matching(bins, groups, range(1, groups.group_count + 1))
    labels = [groups.group_of[b] for b in bins]
    for g, i in match.items():
        labels[i] = g
    return labels


def is_layer_complete(stack_bins: list[int], groups: LayerGroupAssignment) -> bool:
    """True iff the bins can be classified to cover every group exactly once."""
    if len(stack_bins) != groups.group_count:
        return False
    return coverage(stack_bins, groups) == groups.group_count


def occupied_stack_ids(bgc: Bgc, buffer_stack: int | None = None) -> list[int]:
    h = np.count_nonzero(bgc.cells, axis=0)
    return [m for m in range(1, bgc.stack_count + 1)
            if h[m - 1] > 0 and m != buffer_stack]


def is_equivalent_optimal(
    bgc: Bgc, groups: LayerGroupAssignment, buffer_stack: int | None = None
) -> bool:
    """True iff every occupied stack (buffer excluded) is layer-complete."""
    return all(
        is_layer_complete(bgc.stack_bins(m), groups)
        for m in occupied_stack_ids(bgc, buffer_stack)
    )


def popular_group_count(group_count: int, epsilon: float) -> int:
    if not (0.0 < epsilon <= 1.0):
        raise ValidationError("epsilon must be in (0, 1]")
    return math.ceil(group_count * epsilon)


def is_quasi_equivalent_optimal(
    bgc: Bgc,
    groups: LayerGroupAssignment,
    epsilon: float,
    buffer_stack: int | None = None,
) -> bool:
    """True iff every occupied stack covers each of the most popular
    ceil(h_c * epsilon) groups."""
    g_req = popular_group_count(groups.group_count, epsilon)
    return all(
        coverage(bgc.stack_bins(m), groups, g_req) == g_req
        for m in occupied_stack_ids(bgc, buffer_stack)
    )


def stack_distance(u: Counter | list[int], v: Counter | list[int]) -> int:
    """Symmetric multiset difference size between two stacks' group multisets."""
    cu = u if isinstance(u, Counter) else Counter(u)
    cv = v if isinstance(v, Counter) else Counter(v)
    return sum((cu - cv).values()) + sum((cv - cu).values())


def stack_distance_to_complete(bins: list[int], groups: LayerGroupAssignment) -> int:
    """Distance of one stack to a layer-complete stack under the best
    classification: len(bins) + group_count - 2 * coverage."""
    return len(bins) + groups.group_count - 2 * coverage(bins, groups)


def distance_to_equivalent_optimal(
    bgc: Bgc, groups: LayerGroupAssignment, buffer_stack: int | None = None
) -> int:
    """Sum over occupied stacks of the distance to a layer-complete stack.

    Zero exactly when the configuration is an equivalent optimal one.
    """
    return sum(
        stack_distance_to_complete(bgc.stack_bins(m), groups)
        for m in occupied_stack_ids(bgc, buffer_stack)
    )


def expected_transform_requests(out_of_place_p) -> float:
    """Expected number of requests until every listed bin has been requested
    at least once, by inclusion-exclusion over the coupon types.

    When the probabilities sum to less than one, the remaining mass forms an
    extra coupon type that must also be collected, matching the bound used
    to show the rearrangement finishes in finitely many requests.
    """
    p = [float(x) for x in out_of_place_p]
    if any(x < 0 for x in p):
        raise ValidationError("probabilities must be non-negative")
    total = sum(p)
    if total > 1.0 + 1e-12:
        raise ValidationError("probabilities sum above 1")
    if len(p) > 20:
        raise ValidationError("refusing inclusion-exclusion over more than 20 bins")
    if any(x == 0.0 for x in p):
        return math.inf
    rest = 1.0 - total
    if rest > 1e-12:
        p = p + [rest]
    expected = 0.0
    n = len(p)
    for size in range(1, n + 1):
        sign = 1.0 if size % 2 == 1 else -1.0
        for subset in itertools.combinations(p, size):
            expected += sign / sum(subset)
    return expected


def enumerate_feasible_bgcs(spec: GridSpec, catalog: BinCatalog, h_e: int):
    """Yield every feasible configuration at a fixed empty level.

    Brute-force oracle for small instances: all assignments of the padded
    bin set to the occupied block's cells.
    """
    h_c = spec.height - h_e
    n = catalog.bin_count
    if n % h_c != 0:
        raise ValidationError("catalog must be padded for this empty level")
    m_f = n // h_c
    storage = spec.storage_stacks()
    if spec.buffer_stack is not None:
        storage = [m for m in storage if m != spec.buffer_stack]
    if m_f > len(storage):
        raise CapacityError("instance does not fit the grid")
    cells = [(h_e + 1 + d, storage[j]) for d in range(h_c) for j in range(m_f)]
    for perm in itertools.permutations(range(1, n + 1)):
        bgc = Bgc.empty(spec.height, spec.stack_count)
        for (l, m), b in zip(cells, perm):
            bgc.cells[l - 1, m - 1] = b
        yield bgc
