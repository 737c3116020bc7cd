"""Storage-stack selection policies and the shared dig-placement rule.

The layer-complete policy decides where a returning bin goes by checking
five cases in order; each case changes the distance to an equivalent
optimal configuration by a fixed amount (0, -2, -4, -1, 0).  The two
baselines pick a uniformly random storage stack and differ only in whether
dug-up bins are restored after a retrieval.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .model import Bgc, GridSpec, ValidationError
from .solver import (
    LayerGroupAssignment,
    coverage,
    classify_stack,
    popular_group_count,
)


class PolicyKind(enum.Enum):
    LAYER_COMPLETE = "layer_complete"
    DELAYED_RESHUFFLE = "delayed"
    IMMEDIATE_RESHUFFLE = "immediate"


class RestoreBehavior(enum.Enum):
    ALL = "all"                  # dug-up bins return to the target stack
    TEMPORARY_ONLY = "temporary" # only temporary-cell occupants return


def reshuffle_mode(kind: PolicyKind) -> RestoreBehavior:
    """Restore behavior per policy: delayed reshuffling leaves dug-up bins
    where they were parked, except temporary cells, which cannot hold bins
    permanently."""
    if kind is PolicyKind.DELAYED_RESHUFFLE:
        return RestoreBehavior.TEMPORARY_ONLY
    return RestoreBehavior.ALL


@dataclass
class LcpState:
    """Layer-complete policy parameters."""

    groups: LayerGroupAssignment
    buffer_stack: int
    check_period: float = 300.0
    epsilon: float = 0.2
    last_check: float = 0.0


@dataclass(frozen=True)
class StorageDecision:
    kind: str           # "case1".."case5" or "baseline"
    destination: int
    swap: tuple[int, int, int] | None = None  # (source stack, swap bin, swap dest)
    expected_delta: int = 0


_CASE_DELTA = {"case1": 0, "case2": -2, "case3": -4, "case4": -1, "case5": 0}


class LogicalGrid:
    """Stack-wise view of where every bin permanently belongs.

    Tracks the storage stacks plus the buffer stack, with per-stack group
    coverage cached so distance and completeness queries are O(1) after
    each mutation.  Bins in transit (at a workstation, or dug up and
    awaiting restore) are counted in their home stack until the policy
    commits a new location.
    """

    def __init__(self, spec: GridSpec, bgc: Bgc, occupied: list[int],
                 buffer_stack: int | None,
                 groups: LayerGroupAssignment | None = None,
                 epsilon: float = 0.2):
        self.height = spec.height
        self.occupied = list(occupied)
        self.buffer_stack = buffer_stack
        self.groups = groups
        self.stacks: dict[int, list[int]] = {
            m: bgc.stack_bins(m) for m in self.occupied
        }
        self.buffer: list[int] = (
            bgc.stack_bins(buffer_stack) if buffer_stack is not None else []
        )
        self.stack_of: dict[int, int | str] = {}
        for m, bins in self.stacks.items():
            for b in bins:
                self.stack_of[b] = m
        for b in self.buffer:
            self.stack_of[b] = "buffer"
        self._cov: dict[int, int] = {}
        self._qcov: dict[int, int] = {}
        if groups is not None:
            self.g_req = popular_group_count(groups.group_count, epsilon)
            for m in self.occupied:
                self._refresh(m)

    def _refresh(self, m: int):
        bins = self.stacks[m]
        self._cov[m] = coverage(bins, self.groups)
        self._qcov[m] = coverage(bins, self.groups, self.g_req)

    def free_cells(self, m: int) -> int:
        return self.height - len(self.stacks[m])

    def remove_bin(self, b: int):
        home = self.stack_of.pop(b)
        if home == "buffer":
            self.buffer.remove(b)
        else:
            self.stacks[home].remove(b)
            if self.groups is not None:
                self._refresh(home)
        return home

    def add_bin(self, b: int, dest: int | str):
        if dest == "buffer":
            if len(self.buffer) >= self.height:
                raise ValidationError("buffer stack is full")
            self.buffer.append(b)
        else:
            if self.free_cells(dest) <= 0:
                raise ValidationError(f"stack {dest} is full")
            self.stacks[dest].append(b)
            if self.groups is not None:
                self._refresh(dest)
        self.stack_of[b] = dest

    # group-coverage queries (require groups)

    def augments(self, m: int, b: int) -> bool:
        """Would adding bin b raise stack m's group coverage?"""
        return coverage(self.stacks[m] + [b], self.groups) == self._cov[m] + 1

    def redundant(self, m: int, b: int) -> bool:
        """Is bin b removable from stack m without losing coverage?"""
        bins = [x for x in self.stacks[m] if x != b]
        return coverage(bins, self.groups) == self._cov[m]

    def distance(self) -> int:
        g = self.groups.group_count
        return sum(len(self.stacks[m]) + g - 2 * self._cov[m]
                   for m in self.occupied)

    def is_equivalent_optimal(self) -> bool:
        g = self.groups.group_count
        return all(len(self.stacks[m]) == g and self._cov[m] == g
                   for m in self.occupied)

    def is_quasi_equivalent_optimal(self) -> bool:
        return all(self._qcov[m] == self.g_req for m in self.occupied)

    def clone(self) -> "LogicalGrid":
        other = object.__new__(LogicalGrid)
        other.height = self.height
        other.occupied = list(self.occupied)
        other.buffer_stack = self.buffer_stack
        other.groups = self.groups
        other.stacks = {m: list(bins) for m, bins in self.stacks.items()}
        other.buffer = list(self.buffer)
        other.stack_of = dict(self.stack_of)
        other._cov = dict(self._cov)
        other._qcov = dict(self._qcov)
        if self.groups is not None:
            other.g_req = self.g_req
        return other

    def to_bgc(self, spec: GridSpec) -> Bgc:
        """Materialize as a matrix (bins packed from the bottom up)."""
        bgc = Bgc.empty(self.height, spec.stack_count)
        cols = dict(self.stacks)
        if self.buffer_stack is not None:
            cols[self.buffer_stack] = self.buffer
        for m, bins in cols.items():
            for i, b in enumerate(bins):
                bgc.cells[self.height - 1 - i, m - 1] = b
        return bgc


def lcp_select_storage(state: LcpState, grid: LogicalGrid,
                       target_bin: int, target_stack: int) -> StorageDecision:
    """Pick the storage stack for a returning bin, first applicable case wins.

    The grid must reflect the post-retrieval state (target bin removed).
    Ties among qualifying stacks break toward the lowest stack ID.
    """
    b = target_bin
    # Case 1: the bin is needed in its own stack (it was the only bin there
    # classifiable to its group).
    if grid.augments(target_stack, b):
        return StorageDecision("case1", target_stack,
                               expected_delta=_CASE_DELTA["case1"])
    # Case 2: another stack with room lacks a group the bin can fill.
    for m in grid.occupied:
        if grid.free_cells(m) > 0 and grid.augments(m, b):
            return StorageDecision("case2", m,
                                   expected_delta=_CASE_DELTA["case2"])
    # Case 3: a full stack lacks the bin's group but holds a redundant bin
    # the target stack is missing; swap them.
    for m in grid.occupied:
        if m == target_stack or not grid.augments(m, b):
            continue
        swap = _pick_swap_bin(state, grid, m, target_stack)
        if swap is not None:
            return StorageDecision("case3", m, swap=(m, swap, target_stack),
                                   expected_delta=_CASE_DELTA["case3"])
    # Case 4: park the bin on the buffer stack.
    if len(grid.buffer) < grid.height:
        return StorageDecision("case4", state.buffer_stack,
                               expected_delta=_CASE_DELTA["case4"])
    # Case 5: the occupied stack with the most free cells.
    best = max(grid.occupied, key=lambda m: (grid.free_cells(m), -m))
    if grid.free_cells(best) <= 0:
        raise ValidationError("no storage capacity anywhere in the grid")
    return StorageDecision("case5", best, expected_delta=_CASE_DELTA["case5"])


def _pick_swap_bin(state: LcpState, grid: LogicalGrid,
                   source: int, target_stack: int) -> int | None:
    """Swap-bin choice for case 3: a redundant bin of the source stack that
    the target stack is missing; smallest group label first, then the
    uppermost bin in the stack."""
    bins = grid.stacks[source]
    labels = classify_stack(bins, state.groups)
    best: tuple[int, int] | None = None  # (label, -position)
    for pos, (s, y) in enumerate(zip(bins, labels)):
        if not grid.redundant(source, s):
            continue
        if not grid.augments(target_stack, s):
            continue
        key = (y, -pos)
        if best is None or key < best:
            best = key
            best_bin = s
    return None if best is None else best_bin


def apply_decision(grid: LogicalGrid, decision: StorageDecision, target_bin: int):
    """Commit a storage decision to the logical grid (swap first, then the
    returning bin, mirroring the physical order of operations)."""
    if decision.swap is not None:
        src, swap_bin, swap_dest = decision.swap
        grid.remove_bin(swap_bin)
        grid.add_bin(swap_bin, swap_dest)
    if decision.kind in ("case4", "buffer_return"):
        grid.add_bin(target_bin, "buffer")
    else:
        grid.add_bin(target_bin, decision.destination)


def buffer_check(state: LcpState, grid: LogicalGrid,
                 apply: bool = True) -> list[tuple[int, int]]:
    """Restore moves for the periodic buffer-stack check.

    Scans the buffer top-down; a bin moves to the lowest-ID occupied stack
    that has a free cell and gains coverage from it.  Each emitted move
    strictly decreases the distance to an equivalent optimal configuration.
    """
    work = grid if apply else grid.clone()
    moves: list[tuple[int, int]] = []
    for b in list(reversed(work.buffer)):
        dest = None
        for m in work.occupied:
            if work.free_cells(m) > 0 and work.augments(m, b):
                dest = m
                break
        if dest is None:
            continue
        moves.append((b, dest))
        work.remove_bin(b)
        work.add_bin(b, dest)
    return moves


def baseline_select_storage(eligible: list[int],
                            rng: np.random.Generator) -> StorageDecision:
    """Uniformly random stack among the occupied stacks with a free cell."""
    if not eligible:
        raise ValidationError("no occupied stack has a free cell")
    dest = eligible[int(rng.integers(len(eligible)))]
    return StorageDecision("baseline", dest)


@dataclass(frozen=True)
class DigPlacement:
    bin_id: int
    stack: int
    temporary: bool


def dig_placement_plan(spec: GridSpec, target_stack: int,
                       bins_top_down: list[int],
                       free_cells: dict[int, int],
                       temp_free: dict[int, bool],
                       eligible: list[int]) -> list[DigPlacement]:
    """Assign dug-up bins (top-down) to nearby stacks.

    Stacks are visited in ascending Manhattan distance from the target
    (ties: lowest ID), filling each stack's free cells and then its
    temporary cell before moving to the next.  Returns None-free plans
    only; the caller waits if capacity is insufficient.
    """
    order = sorted(
        (m for m in eligible if m != target_stack),
        key=lambda m: (spec.manhattan_cells(target_stack, m), m),
    )
    plan: list[DigPlacement] = []
    it = iter(bins_top_down)
    pending = next(it, None)
    for m in order:
        for _ in range(free_cells.get(m, 0)):
            if pending is None:
                return plan
            plan.append(DigPlacement(pending, m, temporary=False))
            pending = next(it, None)
        if temp_free.get(m, False):
            if pending is None:
                return plan
            plan.append(DigPlacement(pending, m, temporary=True))
            pending = next(it, None)
    if pending is not None:
        raise ValidationError("insufficient nearby capacity for dug-up bins")
    return plan


def select_and_apply(state: LcpState, grid: LogicalGrid,
                     target_bin: int) -> StorageDecision:
    """Remove the requested bin, run the case ladder, and commit the result.

    A bin requested while parked in the buffer is not covered by the five
    cases; it is re-stored like a buffer-check restore (distance -1) or
    returned to the buffer (distance 0).
    """
    b = target_bin
    home = grid.remove_bin(b)
    if home == "buffer":
        for m in grid.occupied:
            if grid.free_cells(m) > 0 and grid.augments(m, b):
                decision = StorageDecision("buffer_restore", m, expected_delta=-1)
                apply_decision(grid, decision, b)
                return decision
        decision = StorageDecision("buffer_return", state.buffer_stack,
                                   expected_delta=0)
        apply_decision(grid, decision, b)
        return decision
    decision = lcp_select_storage(state, grid, b, home)
    apply_decision(grid, decision, b)
    return decision


@dataclass
class TrajectoryResult:
    """Outcome of a request-by-request policy trajectory (no timing)."""

    distances: list[int] = field(default_factory=list)
    deltas: list[tuple[str, int]] = field(default_factory=list)
    first_equivalent: int | None = None
    first_quasi: int | None = None


def run_sequential_lcp(state: LcpState, grid: LogicalGrid,
                       popularity: np.ndarray, rng: np.random.Generator,
                       max_requests: int,
                       buffer_check_every: int | None = None) -> TrajectoryResult:
    """Apply the layer-complete policy to an i.i.d. popularity-driven
    request stream, one request at a time.

    Used by the convergence analysis: returns the distance after each
    request and the first request index reaching (quasi-)equivalence.
    """
    res = TrajectoryResult()
    if grid.is_equivalent_optimal():
        res.first_equivalent = 0
    if grid.is_quasi_equivalent_optimal():
        res.first_quasi = 0
    ids = np.arange(1, len(popularity) + 1)
    draws = rng.choice(ids, size=max_requests, p=popularity)
    prev = grid.distance()
    for k, b in enumerate(draws, start=1):
        b = int(b)
        decision = select_and_apply(state, grid, b)
        d = grid.distance()
        res.deltas.append((decision.kind, d - prev))
        res.distances.append(d)
        prev = d
        if buffer_check_every and k % buffer_check_every == 0:
            buffer_check(state, grid)
            prev = grid.distance()  # keep deltas attributable to decisions
        if res.first_equivalent is None and grid.is_equivalent_optimal():
            res.first_equivalent = k
        if res.first_quasi is None and grid.is_quasi_equivalent_optimal():
            res.first_quasi = k
    return res
