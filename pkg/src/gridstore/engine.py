"""Deterministic discrete-event simulator of the grid workflow.

One request flows through: robot travel to the target stack, digging,
delivery to a workstation, release, restore of the dug-up bins (policy
dependent), workstation processing, and return travel plus insertion at
the stack chosen by the active storage policy.

Robots dispatch FIFO with job priorities return > reshuffle > retrieval.
All randomness comes from the scenario seed, so identical scenarios yield
byte-identical event logs.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .model import Bgc, BinCatalog, GridSpec, ValidationError
from .policies import (
    DigPlacement,
    LcpState,
    LogicalGrid,
    PolicyKind,
    RestoreBehavior,
    StorageDecision,
    baseline_select_storage,
    buffer_check,
    dig_placement_plan,
    reshuffle_mode,
    select_and_apply,
)
from .solver import LayerGroupAssignment

PRIORITY_RETURN = 0
PRIORITY_RESHUFFLE = 1
PRIORITY_RETRIEVAL = 2

# simulated seconds with pending requests but zero completions before the
# run is declared deadlocked
STALL_LIMIT = 4 * 3600.0


@dataclass(frozen=True)
class RobotKinematics:
    top_speed: float = 3.1
    acceleration: float = 0.8
    lift_speed: float = 1.6
    load: float = 1.2
    unload: float = 1.0
    turn: float = 1.0

    def __post_init__(self):
        if min(self.top_speed, self.acceleration, self.lift_speed) <= 0:
            raise ValidationError("speeds and acceleration must be positive")
        if min(self.load, self.unload, self.turn) < 0:
            raise ValidationError("handling times must be non-negative")


def _leg_time(distance: float, k: RobotKinematics) -> float:
    """One-dimensional accel-limited travel time (trapezoid or triangle)."""
    if distance <= 0.0:
        return 0.0
    critical = k.top_speed * k.top_speed / k.acceleration
    if distance >= critical:
        return distance / k.top_speed + k.top_speed / k.acceleration
    return 2.0 * math.sqrt(distance / k.acceleration)


def travel_time(origin: tuple[int, int], dest: tuple[int, int],
                spec: GridSpec, k: RobotKinematics) -> float:
    """Travel time between grid coordinates: X leg, then Y leg, plus one
    turn when both legs are nonzero."""
    dr = abs(dest[0] - origin[0]) * spec.cell_width
    dc = abs(dest[1] - origin[1]) * spec.cell_length
    t = _leg_time(dc, k) + _leg_time(dr, k)
    if dr > 0.0 and dc > 0.0:
        t += k.turn
    return t


def gripper_time(cells: int, spec: GridSpec, k: RobotKinematics) -> float:
    """Vertical gripper travel time over a number of cell heights
    (constant lift speed, no handling)."""
    if cells < 0:
        raise ValidationError("cell count must be non-negative")
    return cells * spec.bin_height / k.lift_speed


@dataclass
class Scenario:
    spec: GridSpec
    catalog: BinCatalog          # padded: bin_count % fill_level == 0
    policy: PolicyKind
    robots: int = 4
    request_rate: float = 5.0    # requests per minute
    processing_time: float = 30.0
    horizon_seconds: float | None = None
    horizon_requests: int | None = None
    seed: int = 0
    randomization_percent: int = 0
    kinematics: RobotKinematics = field(default_factory=RobotKinematics)
    check_period: float = 300.0
    epsilon: float = 0.2
    snapshot_cadence: int | None = None  # record a BGC matrix every n inserts

    def __post_init__(self):
        if (self.horizon_seconds is None) == (self.horizon_requests is None):
            raise ValidationError(
                "exactly one of horizon_seconds / horizon_requests required")
        if not (0 <= self.randomization_percent <= 100):
            raise ValidationError("randomization percent must be in 0..100")
        if self.request_rate <= 0:
            raise ValidationError("request rate must be positive")
        if self.robots < 1:
            raise ValidationError("need at least one robot")
        if not self.spec.workstations:
            raise ValidationError("scenario needs at least one workstation")
        if self.policy is PolicyKind.LAYER_COMPLETE:
            if self.spec.buffer_stack is None:
                raise ValidationError("layer-complete policy needs a buffer stack")
        elif self.spec.buffer_stack is not None:
            raise ValidationError("baseline policies must not set a buffer stack")
        if self.catalog.bin_count % self.spec.fill_level != 0:
            raise ValidationError("catalog must be padded to the fill level")


def randomize_from_optimal(optimal: Bgc, percent: int,
                           rng: np.random.Generator) -> Bgc:
    """Swap uniformly drawn disjoint pairs of bins; percent/100 of the bins
    are involved in a swap (rounded down to an even count)."""
    if not (0 <= percent <= 100):
        raise ValidationError("percent must be in 0..100")
    bgc = optimal.copy()
    positions = {int(bgc.cells[l, m]): (l, m)
                 for l in range(bgc.height) for m in range(bgc.stack_count)
                 if bgc.cells[l, m] != 0}
    n = len(positions)
    pairs = (percent * n) // 200
    if pairs == 0:
        return bgc
    ids = sorted(positions)
    chosen = rng.choice(len(ids), size=2 * pairs, replace=False)
    for i in range(pairs):
        a, b = ids[int(chosen[2 * i])], ids[int(chosen[2 * i + 1])]
        (la, ma), (lb, mb) = positions[a], positions[b]
        bgc.cells[la, ma], bgc.cells[lb, mb] = b, a
    return bgc


@dataclass(frozen=True)
class Request:
    request_id: int
    arrival: float
    bin_id: int
    workstation: tuple[int, int]


def generate_requests(catalog: BinCatalog, rate: float,
                      rng: np.random.Generator,
                      horizon_seconds: float | None = None,
                      horizon_requests: int | None = None,
                      workstations: tuple[tuple[int, int], ...] = ((1, 1),),
                      ) -> list[Request]:
    """Poisson arrivals with bins drawn i.i.d. from the popularity
    distribution; workstations assigned round-robin (FCFS preserved)."""
    if rate <= 0:
        raise ValidationError("rate must be positive")
    p = np.asarray(catalog.popularity)
    p = p / p.sum()  # renormalize away float dust for the sampler
    scale = 60.0 / rate
    out: list[Request] = []
    t = 0.0
    i = 0
    while True:
        if horizon_requests is not None and i >= horizon_requests:
            break
        t += float(rng.exponential(scale))
        if horizon_seconds is not None and t > horizon_seconds:
            break
        bin_id = int(rng.choice(len(p), p=p)) + 1
        out.append(Request(i, t, bin_id, workstations[i % len(workstations)]))
        i += 1
    return out


@dataclass
class RequestRecord:
    request_id: int
    bin_id: int
    arrival: float
    zero_task: bool = False
    waiting: float = 0.0
    delivery1: float = 0.0
    digging: float = 0.0
    delivery2: float = 0.0
    released: float = 0.0
    digging_depth: int = 0
    bins_above: int = 0
    inserted: float | None = None
    decision: str | None = None
    distance_after: int | None = None
    k_index: int | None = None

    @property
    def retrieval_time(self) -> float:
        if self.zero_task:
            return 0.0
        return self.released - self.arrival


@dataclass
class SnapshotRecord:
    k_index: int
    request_id: int
    distance: int
    equivalent: bool
    quasi_equivalent: bool


@dataclass
class EventLog:
    records: list[RequestRecord] = field(default_factory=list)
    snapshots: list[SnapshotRecord] = field(default_factory=list)
    robot_delivery: list[float] = field(default_factory=list)
    robot_gripper: list[float] = field(default_factory=list)
    bgc_snapshots: list[tuple[int, list[list[int]]]] = field(default_factory=list)
    first_equivalent: int | None = None
    first_quasi: int | None = None

    def to_jsonl(self) -> str:
        lines = []
        for r in sorted(self.records, key=lambda x: x.request_id):
            lines.append(json.dumps({
                "type": "request", "id": r.request_id, "bin": r.bin_id,
                "arrival": r.arrival, "zero_task": r.zero_task,
                "waiting": r.waiting, "delivery1": r.delivery1,
                "digging": r.digging, "delivery2": r.delivery2,
                "released": r.released, "depth": r.digging_depth,
                "bins_above": r.bins_above, "inserted": r.inserted,
                "decision": r.decision, "distance": r.distance_after,
                "k": r.k_index,
            }, sort_keys=True))
        for s in self.snapshots:
            lines.append(json.dumps({
                "type": "snapshot", "k": s.k_index, "request": s.request_id,
                "distance": s.distance, "equivalent": s.equivalent,
                "quasi": s.quasi_equivalent,
            }, sort_keys=True))
        for i, (d, g) in enumerate(zip(self.robot_delivery, self.robot_gripper)):
            lines.append(json.dumps({
                "type": "robot", "id": i, "delivery_s": d, "gripper_s": g,
            }, sort_keys=True))
        return "\n".join(lines) + "\n"


class _Robot:
    __slots__ = ("index", "coord", "delivery_s", "gripper_s")

    def __init__(self, index: int, coord: tuple[int, int]):
        self.index = index
        self.coord = coord
        self.delivery_s = 0.0
        self.gripper_s = 0.0


class DeadlockError(RuntimeError):
    """The simulation stopped making progress with requests pending."""


class Simulation:
    """Single-run engine.  Build with a scenario plus the prepared initial
    state, then call :meth:`run`.

    Concurrency model: every stack mutation is an instantaneous bookkeeping
    step whose duration elapses on the simulated clock afterwards, so the
    stack lists are always in a consistent state.  Two gates protect them:
    ``reserved`` serializes retrievals per stack, and ``blocked_count``
    pins stacks hosting dug-up visitor bins until those are restored.
    """

    def __init__(self, scenario: Scenario, initial: Bgc, occupied: list[int],
                 groups: LayerGroupAssignment | None = None):
        self.sc = scenario
        self.spec = scenario.spec
        self.kin = scenario.kinematics
        self.occupied = list(occupied)
        self.groups = groups

        # physical state
        self.stacks: dict[int, list[int]] = {}   # bottom -> top, normal cells
        self.temp: dict[int, int | None] = {}
        all_stacks = list(self.occupied)
        if self.spec.buffer_stack is not None:
            all_stacks.append(self.spec.buffer_stack)
        for m in all_stacks:
            self.stacks[m] = initial.stack_bins(m)
            self.temp[m] = None
        self.bin_state: dict[int, tuple] = {}
        for m in all_stacks:
            for b in self.stacks[m]:
                self.bin_state[b] = ("stored", m)
        self.blocked_count: dict[int, int] = {m: 0 for m in all_stacks}
        self.reserved: set[int] = set()  # retrieval pending or active
        self.active: set[int] = set()    # dig in progress through restore
        # bins each stack will permanently hold once in-flight moves land;
        # the capacity gate for the baseline storage draw
        self.committed_fill: dict[int, int] = {
            m: len(self.stacks[m]) for m in all_stacks}

        # logical state for the layer-complete policy
        self.logical: LogicalGrid | None = None
        self.lcp: LcpState | None = None
        if scenario.policy is PolicyKind.LAYER_COMPLETE:
            self.logical = LogicalGrid(self.spec, initial, self.occupied,
                                       self.spec.buffer_stack, groups,
                                       scenario.epsilon)
            self.lcp = LcpState(groups, self.spec.buffer_stack,
                                scenario.check_period, scenario.epsilon)
        self.restore = reshuffle_mode(scenario.policy)

        # rng streams: initial randomization is consumed by the caller
        seq = np.random.SeedSequence(scenario.seed)
        _, req_seed, pol_seed = seq.spawn(3)
        self.requests = generate_requests(
            scenario.catalog, scenario.request_rate,
            np.random.default_rng(req_seed),
            scenario.horizon_seconds, scenario.horizon_requests,
            self.spec.workstations)
        self.policy_rng = np.random.default_rng(pol_seed)

        # robots start at the workstations, round-robin
        ws = self.spec.workstations
        self.robots = [_Robot(i, ws[i % len(ws)]) for i in range(scenario.robots)]
        self.free_robots: deque[int] = deque(range(scenario.robots))

        # task queues by priority class, each FIFO
        self.queues: dict[int, deque] = {
            PRIORITY_RETURN: deque(), PRIORITY_RESHUFFLE: deque(),
            PRIORITY_RETRIEVAL: deque(),
        }

        self.now = 0.0
        self._events: list = []
        self._seq = 0
        self.log = EventLog()
        self.records: dict[int, RequestRecord] = {}
        self.completed = 0
        self.k_counter = 0
        self._last_progress = 0.0

        # waiters
        self.bin_waiters: dict[int, list[int]] = {}    # bin -> request ids
        self.bin_conts: dict[int, list] = {}           # bin -> continuations
        self.stack_waiters: dict[int, list[int]] = {}  # stack -> request ids
        self.unblock_conts: dict[int, list] = {}       # stack -> continuations
        self.capacity_conts: list = []                 # any-stack-freed hooks
        self.ws_queue: dict[tuple[int, int], deque] = {
            w: deque() for w in self.spec.workstations}
        self.ws_busy: dict[tuple[int, int], bool] = {
            w: False for w in self.spec.workstations}
        self.deferred_moves: list[tuple[int, int]] = []

    # -- event core ---------------------------------------------------------

    def schedule(self, delay: float, fn, *args):
        heapq.heappush(self._events, (self.now + delay, self._seq, fn, args))
        self._seq += 1

    def run(self) -> EventLog:
        self._events = [(req.arrival, i, self._arrive, (req,))
                        for i, req in enumerate(self.requests)]
        self._seq = len(self.requests)
        heapq.heapify(self._events)
        if self.lcp is not None and self.requests:
            self.schedule(self.sc.check_period, self._buffer_check_event)
        total = len(self.requests)
        while self.completed < total:
            if not self._events:
                self._deadlock_dump("event queue empty")
            if self.now - self._last_progress > STALL_LIMIT:
                self._deadlock_dump(f"no completion for {STALL_LIMIT:.0f}s")
            t, _, fn, args = heapq.heappop(self._events)
            self.now = t
            fn(*args)
        self.log.robot_delivery = [r.delivery_s for r in self.robots]
        self.log.robot_gripper = [r.gripper_s for r in self.robots]
        return self.log

    def _deadlock_dump(self, why: str):
        pending = [r for r in self.records.values() if r.inserted is None
                   and not r.zero_task]
        raise DeadlockError(
            f"{why} at t={self.now:.1f}s with "
            f"{len(self.requests) - self.completed} requests unfinished; "
            f"first stuck requests: {[r.request_id for r in pending[:5]]}")

    # -- dispatch -----------------------------------------------------------

    def _enqueue_task(self, priority: int, fn, *args):
        self.queues[priority].append((fn, args))
        self._dispatch()

    def _dispatch(self):
        while self.free_robots:
            task = None
            for pr in (PRIORITY_RETURN, PRIORITY_RESHUFFLE, PRIORITY_RETRIEVAL):
                if self.queues[pr]:
                    task = self.queues[pr].popleft()
                    break
            if task is None:
                return
            robot = self.robots[self.free_robots.popleft()]
            fn, args = task
            fn(robot, *args)

    def _free_robot(self, robot: _Robot):
        self.free_robots.append(robot.index)
        self._dispatch()

    def _steal_reshuffle(self, robot: _Robot, cont) -> bool:
        """Run one queued reshuffle task on a robot that would otherwise
        park forever, then resume its own work.  Breaks the cycle where
        every robot waits on a stack whose unblocking task needs a robot."""
        q = self.queues[PRIORITY_RESHUFFLE]
        if not q:
            return False
        fn, args = q.popleft()
        fn(robot, *args, then=cont)
        return True

    def _end_task(self, robot: _Robot, then):
        if then is None:
            self._free_robot(robot)
        else:
            then(robot)

    # -- motion helpers -----------------------------------------------------

    def _travel(self, robot: _Robot, dest: tuple[int, int]) -> float:
        t = travel_time(robot.coord, dest, self.spec, self.kin)
        robot.coord = dest
        robot.delivery_s += t
        return t

    def _vertical(self, robot: _Robot, cells: int, handling: float) -> float:
        t = gripper_time(cells, self.spec, self.kin) + handling
        robot.gripper_s += t
        return t

    def _layer_of_top(self, m: int) -> int:
        return self.spec.height - len(self.stacks[m]) + 1

    def _free_cells(self, m: int) -> int:
        return self.spec.height - len(self.stacks[m])

    # -- arrival & gating ---------------------------------------------------

    def _arrive(self, req: Request):
        rec = RequestRecord(req.request_id, req.bin_id, req.arrival)
        self.records[req.request_id] = rec
        self._try_start(req)

    def _try_start(self, req: Request):
        state = self.bin_state.get(req.bin_id)
        if state is None:
            raise ValidationError(f"request for unknown bin {req.bin_id}")
        kind = state[0]
        if kind in ("ws_queue", "processing", "await_return"):
            rec = self.records[req.request_id]
            rec.zero_task = True
            rec.released = self.now
            self._complete(req.request_id)
            return
        if kind in ("carried", "dug"):
            self.bin_waiters.setdefault(req.bin_id, []).append(req.request_id)
            return
        # stored
        m = state[1]
        if self.blocked_count[m] > 0 or m in self.reserved:
            self.stack_waiters.setdefault(m, []).append(req.request_id)
            return
        self.reserved.add(m)  # one retrieval at a time per stack
        self._enqueue_task(PRIORITY_RETRIEVAL, self._exec_retrieval, req, m)

    def _wake_bin_waiters(self, bin_id: int):
        for cont in self.bin_conts.pop(bin_id, []):
            cont()
        for rid in self.bin_waiters.pop(bin_id, []):
            self._try_start(self.requests[rid])

    def _on_stack_freed(self, m: int):
        for cont in self.unblock_conts.pop(m, []):
            cont()
        if self.capacity_conts:
            conts, self.capacity_conts = self.capacity_conts, []
            for cont in conts:
                cont()
        for rid in self.stack_waiters.pop(m, []):
            self._try_start(self.requests[rid])

    def _release_reservation(self, m: int):
        self.reserved.discard(m)
        self.active.discard(m)
        self._on_stack_freed(m)

    # -- retrieval ----------------------------------------------------------

    def _exec_retrieval(self, robot: _Robot, req: Request, m: int):
        rec = self.records[req.request_id]
        rec.waiting = self.now - req.arrival
        # the bin may have moved while the request sat in the robot queue
        state = self.bin_state[req.bin_id]
        if state[0] != "stored" or state[1] != m:
            self._release_reservation(m)
            self._free_robot(robot)
            self._try_start(req)
            return
        d1 = self._travel(robot, self.spec.stack_coord(m))
        rec.delivery1 = d1
        self.schedule(d1, self._start_dig, robot, req, m)

    def _start_dig(self, robot: _Robot, req: Request, m: int):
        # the bin may have moved during travel (a swap relocated it)
        state = self.bin_state[req.bin_id]
        if state[0] != "stored" or state[1] != m:
            self._release_reservation(m)
            self._free_robot(robot)
            self._try_start(req)
            return
        if self.blocked_count[m] > 0:
            # visitors landed here while this retrieval sat in the queue
            cont = lambda: self._start_dig(robot, req, m)
            if not self._steal_reshuffle(
                    robot, lambda r: self._start_dig(r, req, m)):
                self.unblock_conts.setdefault(m, []).append(cont)
            return
        bins = self.stacks[m]
        idx = bins.index(req.bin_id)
        above = bins[idx + 1:][::-1]  # top-down
        rec = self.records[req.request_id]
        rec.bins_above = len(above)
        rec.digging_depth = self.spec.height - idx

        # stacks merely reserved by a queued retrieval may host dug-up bins;
        # that retrieval re-checks for visitors when it starts
        eligible = [s for s in self.occupied
                    if s != m and self.blocked_count[s] == 0
                    and s not in self.active]
        try:
            plan = dig_placement_plan(
                self.spec, m, above,
                {s: self._free_cells(s) for s in eligible},
                {s: self.temp[s] is None for s in eligible},
                eligible)
        except ValidationError:
            # not enough nearby capacity right now; retry when a stack frees
            retry = lambda r=robot: self._start_dig(r, req, m)
            if not self._steal_reshuffle(robot, lambda r: self._start_dig(r, req, m)):
                self.capacity_conts.append(retry)
            return
        self.active.add(m)
        dig_t = self._run_dig(robot, req, m, above, plan)
        self.schedule(dig_t, self._after_dig, robot, req, m, plan)
        rec.digging = dig_t

    def _run_dig(self, robot: _Robot, req: Request, m: int,
                 above: list[int], plan: list[DigPlacement]) -> float:
        """Execute the dig bookkeeping immediately; return its duration."""
        t = 0.0
        target_coord = self.spec.stack_coord(m)
        keep = self.restore is RestoreBehavior.ALL
        for p in plan:
            layer = self._layer_of_top(m)
            self.stacks[m].pop()
            t += self._vertical(robot, 2 * layer, self.kin.load)
            hop = travel_time(target_coord, self.spec.stack_coord(p.stack),
                              self.spec, self.kin)
            robot.delivery_s += 2 * hop
            t += hop
            if p.temporary:
                self.temp[p.stack] = p.bin_id
                t += self._vertical(robot, 0, self.kin.unload)
            else:
                land = self.spec.height - len(self.stacks[p.stack])
                self.stacks[p.stack].append(p.bin_id)
                t += self._vertical(robot, 2 * land, self.kin.unload)
                if not keep:
                    # delayed reshuffling: the bin stays here permanently
                    self.committed_fill[m] -= 1
                    self.committed_fill[p.stack] += 1
            t += hop
            self.bin_state[p.bin_id] = ("dug", p.stack, p.temporary)
            self.blocked_count[p.stack] += 1
        # the target bin itself
        layer = self._layer_of_top(m)
        self.stacks[m].pop()
        self.committed_fill[m] -= 1
        t += self._vertical(robot, 2 * layer, self.kin.load)
        self.bin_state[req.bin_id] = ("carried", robot.index)
        return t

    def _after_dig(self, robot: _Robot, req: Request, m: int,
                   plan: list[DigPlacement]):
        rec = self.records[req.request_id]
        if plan:
            if self.restore is RestoreBehavior.ALL:
                self._enqueue_task(PRIORITY_RESHUFFLE,
                                   self._exec_restore, m, plan)
            else:
                # delayed reshuffling: normal-cell bins become residents
                temp_plan = [p for p in plan if p.temporary]
                for p in plan:
                    if not p.temporary:
                        self.bin_state[p.bin_id] = ("stored", p.stack)
                        self.blocked_count[p.stack] -= 1
                        if self.blocked_count[p.stack] == 0:
                            self._on_stack_freed(p.stack)
                        self._wake_bin_waiters(p.bin_id)
                if temp_plan:
                    self._enqueue_task(PRIORITY_RESHUFFLE,
                                       self._exec_restore, m, temp_plan)
                else:
                    self._release_reservation(m)
        else:
            self._release_reservation(m)
        d2 = self._travel(robot, req.workstation)
        d2 += self._vertical(robot, 0, self.kin.unload)
        rec.delivery2 = d2
        self.schedule(d2, self._release, robot, req)

    def _release(self, robot: _Robot, req: Request):
        rec = self.records[req.request_id]
        rec.released = self.now
        self.bin_state[req.bin_id] = ("ws_queue", req.workstation)
        self._free_robot(robot)
        self._wake_bin_waiters(req.bin_id)
        self._ws_enqueue(req)

    # -- restore ------------------------------------------------------------

    def _exec_restore(self, robot: _Robot, m: int, plan: list[DigPlacement],
                      then=None):
        """Return dug-up bins to stack m in reverse dig order."""
        t = self._travel(robot, self.spec.stack_coord(m))
        target_coord = self.spec.stack_coord(m)
        for p in reversed(plan):
            hop = travel_time(target_coord, self.spec.stack_coord(p.stack),
                              self.spec, self.kin)
            robot.delivery_s += 2 * hop
            t += hop
            if p.temporary:
                self.temp[p.stack] = None
                t += self._vertical(robot, 0, self.kin.load)
            else:
                # usually on top (host stays blocked), but a deferred buffer
                # move may have landed above; remove by identity
                bins = self.stacks[p.stack]
                idx = bins.index(p.bin_id)
                land = self.spec.height - idx
                bins.pop(idx)
                t += self._vertical(robot, 2 * land, self.kin.load)
            t += hop
            land = self.spec.height - len(self.stacks[m])
            self.stacks[m].append(p.bin_id)
            t += self._vertical(robot, 2 * land, self.kin.unload)
        self.schedule(t, self._finish_restore, robot, m, plan, then)

    def _finish_restore(self, robot: _Robot, m: int, plan: list[DigPlacement],
                        then):
        for p in plan:
            self.bin_state[p.bin_id] = ("stored", m)
            self.blocked_count[p.stack] -= 1
            if self.blocked_count[p.stack] == 0:
                self._on_stack_freed(p.stack)
        self._release_reservation(m)
        for p in plan:
            self._wake_bin_waiters(p.bin_id)
        self._end_task(robot, then)

    # -- workstation --------------------------------------------------------

    def _ws_enqueue(self, req: Request):
        w = req.workstation
        self.ws_queue[w].append(req)
        self._ws_advance(w)

    def _ws_advance(self, w: tuple[int, int]):
        if self.ws_busy[w] or not self.ws_queue[w]:
            return
        req = self.ws_queue[w].popleft()
        self.ws_busy[w] = True
        self.bin_state[req.bin_id] = ("processing", w)
        self.schedule(self.sc.processing_time, self._ws_done, req)

    def _ws_done(self, req: Request):
        w = req.workstation
        self.ws_busy[w] = False
        self.bin_state[req.bin_id] = ("await_return", w)
        self._enqueue_task(PRIORITY_RETURN, self._exec_return, req)
        self._ws_advance(w)

    # -- return & insert ----------------------------------------------------

    def _baseline_eligible(self) -> list[int]:
        out = [m for m in self.occupied
               if self.committed_fill[m] < self.spec.height
               and self.blocked_count[m] == 0]
        if not out:
            out = [m for m in self.occupied
                   if self.committed_fill[m] < self.spec.height]
        return sorted(out)

    def _exec_return(self, robot: _Robot, req: Request):
        t = self._travel(robot, req.workstation)
        self.schedule(t, self._pickup, robot, req)

    def _pickup(self, robot: _Robot, req: Request):
        rec = self.records[req.request_id]
        b = req.bin_id
        if self.lcp is None:
            eligible = self._baseline_eligible()
            if not eligible:
                # grid-wide capacity exhausted until something completes
                retry = lambda: self._pickup(robot, req)
                if not self._steal_reshuffle(robot,
                                             lambda r: self._pickup(r, req)):
                    self.capacity_conts.append(retry)
                return
        self.bin_state[b] = ("carried", robot.index)
        load_t = self._vertical(robot, 0, self.kin.load)
        if self.lcp is not None:
            decision = select_and_apply(self.lcp, self.logical, b)
            self.k_counter += 1
            k = self.k_counter
            rec.decision = decision.kind
            rec.k_index = k
            d = self.logical.distance()
            rec.distance_after = d
            eq = self.logical.is_equivalent_optimal()
            quasi = self.logical.is_quasi_equivalent_optimal()
            self.log.snapshots.append(
                SnapshotRecord(k, req.request_id, d, eq, quasi))
            if eq and self.log.first_equivalent is None:
                self.log.first_equivalent = k
            if quasi and self.log.first_quasi is None:
                self.log.first_quasi = k
            if (self.sc.snapshot_cadence
                    and k % self.sc.snapshot_cadence == 0):
                self.log.bgc_snapshots.append(
                    (k, self.logical.to_bgc(self.spec).cells.tolist()))
        else:
            decision = baseline_select_storage(eligible, self.policy_rng)
            rec.decision = decision.kind
            self.committed_fill[decision.destination] += 1
        self.schedule(load_t, self._go_insert, robot, req, decision)

    def _go_insert(self, robot: _Robot, req: Request, decision: StorageDecision):
        if decision.kind == "case3":
            src = decision.swap[0]
            t = self._travel(robot, self.spec.stack_coord(src))
            self.schedule(t, self._insert_with_swap, robot, req, decision)
            return
        dest = decision.destination
        t = self._travel(robot, self.spec.stack_coord(dest))
        self.schedule(t, self._insert_arrive, robot, req, decision)

    def _redraw_insert(self, robot: _Robot, req: Request, old_dest: int):
        """Baseline only: pick a fresh destination after a race."""
        self.committed_fill[old_dest] -= 1
        eligible = self._baseline_eligible()
        if not eligible:
            retry = lambda: self._redraw_insert(robot, req, old_dest)
            self.committed_fill[old_dest] += 1  # keep the slot while waiting
            if not self._steal_reshuffle(
                    robot, lambda r: self._redraw_insert(r, req, old_dest)):
                self.capacity_conts.append(retry)
            return
        redo = baseline_select_storage(eligible, self.policy_rng)
        self.committed_fill[redo.destination] += 1
        t = self._travel(robot, self.spec.stack_coord(redo.destination))
        self.schedule(t, self._insert_arrive, robot, req, redo)

    def _insert_arrive(self, robot: _Robot, req: Request,
                       decision: StorageDecision):
        dest = decision.destination
        if self.blocked_count[dest] > 0:
            if self.lcp is None:
                self._redraw_insert(robot, req, dest)
                return
            # destination hosts dug-up visitors; restore must land first
            cont = lambda: self._insert_arrive(robot, req, decision)
            if not self._steal_reshuffle(
                    robot, lambda r: self._insert_arrive(r, req, decision)):
                self.unblock_conts.setdefault(dest, []).append(cont)
            return
        if self._free_cells(dest) <= 0:
            if self.lcp is None:
                self._redraw_insert(robot, req, dest)
                return
            raise ValidationError(
                f"stack {dest} physically full despite logical room")
        land = self.spec.height - len(self.stacks[dest])
        self.stacks[dest].append(req.bin_id)
        t = self._vertical(robot, 2 * land, self.kin.unload)
        self.schedule(t, self._finish_insert, robot, req, dest)

    def _insert_with_swap(self, robot: _Robot, req: Request,
                          decision: StorageDecision):
        src, swap_bin, swap_dest = decision.swap
        state = self.bin_state[swap_bin]
        if state[0] == "dug":
            # the swap bin is parked on a host stack awaiting restore
            cont = lambda: self._insert_with_swap(robot, req, decision)
            if not self._steal_reshuffle(
                    robot, lambda r: self._insert_with_swap(r, req, decision)):
                self.bin_conts.setdefault(swap_bin, []).append(cont)
            return
        if state != ("stored", src):
            # a later request already moved the swap bin; its own storage
            # decision supersedes the physical half of the swap
            self._insert_arrive(robot, req,
                                StorageDecision("case3", src))
            return
        if self.blocked_count[src] > 0 or self.blocked_count[swap_dest] > 0:
            gate = src if self.blocked_count[src] > 0 else swap_dest
            cont = lambda: self._insert_with_swap(robot, req, decision)
            if not self._steal_reshuffle(
                    robot, lambda r: self._insert_with_swap(r, req, decision)):
                self.unblock_conts.setdefault(gate, []).append(cont)
            return
        t = 0.0
        # park the returning bin on the source stack's temporary cell
        t += self._vertical(robot, 0, self.kin.unload)
        # extract the swap bin: dig down to it, re-stacking the bins above
        bins = self.stacks[src]
        idx = bins.index(swap_bin)
        above = len(bins) - idx - 1
        top_layer = self._layer_of_top(src)
        cells = 2 * (top_layer + above)
        for j in range(above):
            cells += 4 * (top_layer + j)
        t += self._vertical(robot, cells,
                            self.kin.load + above * (self.kin.load
                                                     + self.kin.unload))
        bins.pop(idx)
        src_coord = self.spec.stack_coord(src)
        hop = travel_time(src_coord, self.spec.stack_coord(swap_dest),
                          self.spec, self.kin)
        robot.delivery_s += 2 * hop
        t += hop
        land = self.spec.height - len(self.stacks[swap_dest])
        self.stacks[swap_dest].append(swap_bin)
        self.bin_state[swap_bin] = ("stored", swap_dest)
        self.committed_fill[src] -= 1
        self.committed_fill[swap_dest] += 1
        t += self._vertical(robot, 2 * land, self.kin.unload)
        t += hop
        # retrieve the returning bin from the temporary cell and store it
        t += self._vertical(robot, 0, self.kin.load)
        land = self.spec.height - len(self.stacks[src])
        self.stacks[src].append(req.bin_id)
        t += self._vertical(robot, 2 * land, self.kin.unload)
        self._wake_bin_waiters(swap_bin)
        self.schedule(t, self._finish_insert, robot, req, src)

    def _finish_insert(self, robot: _Robot, req: Request, dest: int):
        rec = self.records[req.request_id]
        rec.inserted = self.now
        self.bin_state[req.bin_id] = ("stored", dest)
        if self.lcp is not None:
            self.committed_fill[dest] += 1  # informational under this policy
        self._free_robot(robot)
        self._wake_bin_waiters(req.bin_id)
        self._complete(req.request_id)

    def _complete(self, request_id: int):
        rec = self.records[request_id]
        self.log.records.append(rec)
        self.completed += 1
        self._last_progress = self.now

    # -- buffer maintenance --------------------------------------------------

    def _buffer_check_event(self):
        moves = self.deferred_moves + buffer_check(self.lcp, self.logical,
                                                   apply=True)
        self.deferred_moves = []
        if moves:
            self._enqueue_task(PRIORITY_RESHUFFLE, self._exec_buffer_moves,
                               list(moves))
        if self.completed < len(self.requests):
            self.schedule(self.sc.check_period, self._buffer_check_event)

    def _exec_buffer_moves(self, robot: _Robot, moves: list[tuple[int, int]],
                           then=None):
        buf = self.spec.buffer_stack
        if self.blocked_count[buf] > 0 or buf in self.reserved:
            # buffer under dig; retry the whole batch at the next check
            self.deferred_moves.extend(moves)
            self._end_task(robot, then)
            return
        t = self._travel(robot, self.spec.stack_coord(buf))
        buf_coord = self.spec.stack_coord(buf)
        for b, dest in moves:
            if b not in self.stacks[buf]:
                continue  # requested away since the check ran
            if self.logical is not None and self.logical.stack_of.get(b) != dest:
                continue  # move superseded by a later storage decision
            if (self.blocked_count[dest] > 0
                    or len(self.stacks[dest]) >= self.spec.height):
                # destination physically unavailable right now; the move is
                # already committed logically, so retry it at the next check
                self.deferred_moves.append((b, dest))
                continue
            bins = self.stacks[buf]
            idx = bins.index(b)
            above = len(bins) - idx - 1
            top_layer = self.spec.height - len(bins) + 1
            cells = 2 * (top_layer + above)
            for j in range(above):
                cells += 4 * (top_layer + j)
            t += self._vertical(robot, cells,
                                self.kin.load + above * (self.kin.load
                                                         + self.kin.unload))
            bins.pop(idx)
            hop = travel_time(buf_coord, self.spec.stack_coord(dest),
                              self.spec, self.kin)
            robot.delivery_s += 2 * hop
            t += 2 * hop
            land = self.spec.height - len(self.stacks[dest])
            self.stacks[dest].append(b)
            self.bin_state[b] = ("stored", dest)
            self.committed_fill[buf] -= 1
            self.committed_fill[dest] += 1
            t += self._vertical(robot, 2 * land, self.kin.unload)
            self._wake_bin_waiters(b)
        self.schedule(t, self._end_task, robot, then)


def prepare_initial(scenario: Scenario) -> tuple[Bgc, list[int],
                                                 LayerGroupAssignment]:
    """Build the optimal configuration, derive layer groups, and apply the
    scenario's randomization; returns (initial BGC, occupied stacks, groups)."""
    from .solver import assign_layer_groups, build_optimal_bgc

    spec, catalog = scenario.spec, scenario.catalog
    optimal = build_optimal_bgc(spec, catalog, spec.empty_level)
    groups = assign_layer_groups(optimal, catalog)
    seq = np.random.SeedSequence(scenario.seed)
    init_seed, _, _ = seq.spawn(3)
    rng = np.random.default_rng(init_seed)
    initial = randomize_from_optimal(optimal, scenario.randomization_percent, rng)
    m_f = catalog.bin_count // spec.fill_level
    storage = spec.storage_stacks()
    if spec.buffer_stack is not None:
        storage = [m for m in storage if m != spec.buffer_stack]
    occupied = storage[:m_f]
    return initial, occupied, groups


def run(scenario: Scenario) -> EventLog:
    """Prepare the initial state and execute a full simulation run."""
    initial, occupied, groups = prepare_initial(scenario)
    sim = Simulation(scenario, initial, occupied, groups)
    return sim.run()
