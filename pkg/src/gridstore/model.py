"""Core data model: bin catalog, grid geometry, and the bin grid configuration."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POP_SUM_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a model invariant."""


@dataclass(frozen=True)
class BinCatalog:
    """Bins identified 1..N with normalized popularity, sorted so that a
    smaller bin ID never has lower popularity than a larger one."""

    popularity: tuple[float, ...]

    def __post_init__(self):
        p = self.popularity
        if len(p) == 0:
            raise ValidationError("catalog must contain at least one bin")
        if any(x < 0 for x in p):
            raise ValidationError("popularity values must be non-negative")
        if abs(sum(p) - 1.0) > POP_SUM_TOL:
            raise ValidationError(f"popularity must sum to 1, got {sum(p)!r}")
        if any(p[i] < p[i + 1] for i in range(len(p) - 1)):
            raise ValidationError("popularity must be non-increasing in bin ID")

    @property
    def bin_count(self) -> int:
        return len(self.popularity)

    def popularity_of(self, bin_id: int) -> float:
        """Popularity of a bin ID; ID 0 denotes an empty cell and has weight 0."""
        if bin_id == 0:
            return 0.0
        return self.popularity[bin_id - 1]


def normalize_catalog(raw_weights) -> BinCatalog:
    """Build a catalog from non-negative demand weights.

    Weights are scaled to sum to one and bins are re-indexed in
    non-increasing popularity order (stable, so ties keep input order).
    """
    w = [float(x) for x in raw_weights]
    if len(w) == 0:
        raise ValidationError("no weights given")
    if any(x < 0 for x in w):
        raise ValidationError("weights must be non-negative")
    total = sum(w)
    if total <= 0:
        raise ValidationError("at least one weight must be positive")
    order = sorted(range(len(w)), key=lambda i: -w[i])
    return BinCatalog(tuple(w[i] / total for i in order))


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry and storage parameters.

    Stacks are numbered 1..M row-major over a rows x cols footprint.
    ``fill_level`` is the common fill level h_c of occupied stacks; the
    empty level is h_e = H - h_c.  Workstations sit on the footprint
    perimeter and their positions are excluded from storage use.
    """

    rows: int
    cols: int
    height: int
    fill_level: int
    reserve_fraction: float = 0.0
    cell_length: float = 0.65
    cell_width: float = 0.45
    bin_height: float = 0.33
    workstations: tuple[tuple[int, int], ...] = ()
    buffer_stack: int | None = None

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.height < 1:
            raise ValidationError("grid dimensions must be positive")
        if not (0.0 <= self.reserve_fraction < 1.0):
            raise ValidationError("reserve fraction must be in [0, 1)")
        if not (self.min_fill_level <= self.fill_level <= self.height):
            raise ValidationError(
                f"fill level {self.fill_level} outside "
                f"[{self.min_fill_level}, {self.height}]"
            )
        for rc in self.workstations:
            if not self._on_perimeter(rc):
                raise ValidationError(f"workstation {rc} not on footprint perimeter")
        if self.buffer_stack is not None:
            if not (1 <= self.buffer_stack <= self.stack_count):
                raise ValidationError("buffer stack ID out of range")
            if self.stack_coord(self.buffer_stack) in self.workstations:
                raise ValidationError("buffer stack collides with a workstation")

    def _on_perimeter(self, rc) -> bool:
        r, c = rc
        if not (1 <= r <= self.rows and 1 <= c <= self.cols):
            return False
        return r in (1, self.rows) or c in (1, self.cols)

    @property
    def stack_count(self) -> int:
        return self.rows * self.cols

    @property
    def min_fill_level(self) -> int:
        return int(self.height * (1.0 - self.reserve_fraction))

    @property
    def empty_level(self) -> int:
        return self.height - self.fill_level

    def stack_coord(self, stack: int) -> tuple[int, int]:
        """Stack ID -> (row, col), both 1-based, row-major numbering."""
        return ((stack - 1) // self.cols + 1, (stack - 1) % self.cols + 1)

    def storage_stacks(self) -> list[int]:
        """Stack IDs usable for bin storage (workstation positions removed)."""
        ws = set(self.workstations)
        return [m for m in range(1, self.stack_count + 1)
                if self.stack_coord(m) not in ws]

    def occupied_stack_count(self, n_bins: int) -> int:
        return -(-n_bins // self.fill_level)  # ceil

    def manhattan_cells(self, a: int, b: int) -> int:
        (r1, c1), (r2, c2) = self.stack_coord(a), self.stack_coord(b)
        return abs(r1 - r2) + abs(c1 - c2)


def pad_with_empty_bins(spec: GridSpec, catalog: BinCatalog) -> BinCatalog:
    """Append zero-popularity bins so the bin count is a multiple of the
    fill level, making every occupied stack uniformly filled."""
    n = catalog.bin_count
    m_f = spec.occupied_stack_count(n)
    extra = m_f * spec.fill_level - n
    if extra == 0:
        return catalog
    return BinCatalog(catalog.popularity + (0.0,) * extra)


class Bgc:
    """Bin grid configuration: an H x M matrix of bin IDs, 0 for empty.

    Layer 1 is the top of the grid.  Within a stack bins are contiguous
    from the bottom of the occupied region upward; transient bins on top
    of stacks during digging live in per-stack temporary cells outside
    this matrix.
    """

    def __init__(self, cells: np.ndarray):
        cells = np.asarray(cells, dtype=np.int64)
        if cells.ndim != 2:
            raise ValidationError("cells must be a 2-D matrix")
        self.cells = cells

    @classmethod
    def empty(cls, height: int, stacks: int) -> "Bgc":
        return cls(np.zeros((height, stacks), dtype=np.int64))

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def stack_count(self) -> int:
        return self.cells.shape[1]

    def copy(self) -> "Bgc":
        return Bgc(self.cells.copy())

    def stack_bins(self, stack: int) -> list[int]:
        """Bin IDs in a stack, bottom to top."""
        col = self.cells[:, stack - 1]
        return [int(x) for x in col[::-1] if x != 0]

    def __eq__(self, other) -> bool:
        return isinstance(other, Bgc) and np.array_equal(self.cells, other.cells)

    def __repr__(self) -> str:
        return f"Bgc({self.cells!r})"


def fill_levels(bgc: Bgc) -> np.ndarray:
    """Number of bins stored in each stack."""
    return np.count_nonzero(bgc.cells, axis=0)


def surface_layer(bgc: Bgc, stack: int) -> int | None:
    """Layer of the topmost bin in a stack, or None if the stack is empty."""
    col = bgc.cells[:, stack - 1]
    nz = np.nonzero(col)[0]
    if nz.size == 0:
        return None
    return int(nz[0]) + 1


@dataclass
class Violation:
    code: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, message: str):
        self.violations.append(Violation(code, message))


def validate_initial_bgc(spec: GridSpec, bgc: Bgc, n_bins: int) -> ValidationReport:
    """Check that a BGC has the canonical block form: the first m_f storage
    stacks filled in layers h_e+1..H with each ID 1..N exactly once, and all
    remaining cells empty."""
    report = ValidationReport()
    if bgc.height != spec.height or bgc.stack_count != spec.stack_count:
        report.add("shape", f"matrix is {bgc.cells.shape}, grid wants "
                            f"({spec.height}, {spec.stack_count})")
        return report

    m_f = spec.occupied_stack_count(n_bins)
    storage = spec.storage_stacks()
    if spec.buffer_stack is not None:
        storage = [m for m in storage if m != spec.buffer_stack]
    if m_f > len(storage):
        report.add("capacity", f"{m_f} occupied stacks exceed the "
                               f"{len(storage)} available storage stacks")
        return report
    occupied = set(storage[:m_f])

    seen: dict[int, tuple[int, int]] = {}
    for m in range(1, spec.stack_count + 1):
        for l in range(1, spec.height + 1):
            v = int(bgc.cells[l - 1, m - 1])
            if v == 0:
                continue
            if not (1 <= v <= n_bins):
                report.add("unknown-id", f"bin {v} at (layer {l}, stack {m}) "
                                         f"is outside 1..{n_bins}")
            elif v in seen:
                report.add("duplicate-id", f"bin {v} appears at {seen[v]} "
                                           f"and (layer {l}, stack {m})")
            else:
                seen[v] = (l, m)
            if m not in occupied:
                report.add("outside-block", f"bin {v} in unoccupied stack {m}")
            elif l <= spec.empty_level:
                report.add("above-fill-region",
                           f"bin {v} at layer {l} is above the fill region "
                           f"(empty level {spec.empty_level})")
    for v in range(1, n_bins + 1):
        if v not in seen:
            report.add("missing-id", f"bin {v} missing from the grid")
    for m in occupied:
        col = bgc.cells[:, m - 1]
        if np.count_nonzero(col) != spec.fill_level:
            report.add("fill-level", f"stack {m} holds {np.count_nonzero(col)} "
                                     f"bins, expected {spec.fill_level}")
        nz = np.nonzero(col)[0]
        if nz.size and np.any(col[nz[0]:] == 0):
            report.add("gravity", f"stack {m} has an empty cell below a bin")
    return report
