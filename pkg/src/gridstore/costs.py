"""Gripper-motion cost model.

Costs are exact integers in units of one cell of vertical gripper travel.
Retrieving a bin from layer l with empty level h_e splits into the cost of
digging inside the target stack and the cost of parking the dug-up bins on
nearby stacks; the latter is precomputed in a lookup table.
"""

from __future__ import annotations

import io

from .model import Bgc, BinCatalog, ValidationError, fill_levels

import numpy as np


class CostDomainError(ValueError):
    """A (layer, empty level) pair outside the defined cost domain."""


def dig_cost_in_stack(l: int, h_e: int) -> int:
    """Cost of digging up the bins above a target in layer l, plus the target
    itself, inside one stack with empty level h_e.

    Equals 2*(h_e+1) + 2*(h_e+2) + ... + 2*l = l^2 + l - h_e^2 - h_e.
    """
    if h_e < 0:
        raise CostDomainError(f"negative empty level {h_e}")
    if l <= h_e:
        raise CostDomainError(f"layer {l} is above the surface (empty level {h_e})")
    return l * l + l - h_e * h_e - h_e


class CostTable:
    """Lookup table T[h_e, l] for the cost of parking dug-up bins.

    Rows are empty levels 0..H-1, columns layers 1..2H; entries with
    l <= h_e are undefined.
    """

    def __init__(self, height: int):
        if height < 1:
            raise ValidationError("height must be >= 1")
        self.height = height
        self.max_layer = 2 * height
        self._rows: list[list[int]] = []
        for h_e in range(height):
            # D sequence: the per-stack placement costs [2*h_e, ..., 2, 0]
            # repeated cyclically as each nearby stack fills up.
            cycle = [2 * (h_e - i) for i in range(h_e + 1)]
            row = []
            acc = 0
            for k in range(self.max_layer - h_e):
                row.append(acc)  # value for l = h_e + 1 + k
                acc += cycle[k % len(cycle)]
            self._rows.append(row)

    def defined(self, h_e: int, l: int) -> bool:
        return 0 <= h_e < self.height and h_e < l <= self.max_layer

    def __getitem__(self, key: tuple[int, int]) -> int:
        h_e, l = key
        if not self.defined(h_e, l):
            raise CostDomainError(f"T[{h_e}, {l}] is undefined")
        return self._rows[h_e][l - h_e - 1]

    def to_csv(self) -> str:
        """Dump the table with one row per empty level and '-' marking
        undefined entries."""
        out = io.StringIO()
        header = ["h_e"] + [str(l) for l in range(1, self.max_layer + 1)]
        out.write(",".join(header) + "\n")
        for h_e in range(self.height):
            cells = [str(h_e)]
            for l in range(1, self.max_layer + 1):
                cells.append(str(self[h_e, l]) if self.defined(h_e, l) else "-")
            out.write(",".join(cells) + "\n")
        return out.getvalue()


def build_cost_table(height: int) -> CostTable:
    return CostTable(height)


def placement_cost(l: int, h_e: int, table: CostTable) -> int:
    """Cost of placing the l - h_e - 1 dug-up bins on nearby stacks."""
    return table[h_e, l]


def retrieval_cost(l: int, h_e: int, table: CostTable) -> int:
    """Total gripper cost of retrieving a bin from layer l."""
    return dig_cost_in_stack(l, h_e) + placement_cost(l, h_e, table)


def layer_probabilities(bgc: Bgc, catalog: BinCatalog) -> np.ndarray:
    """Probability that the target bin of a request sits in each layer.

    Entry j holds the layer j+1 probability; empty cells contribute 0.
    """
    pi = np.zeros(bgc.height)
    for l in range(bgc.height):
        pi[l] = sum(catalog.popularity_of(int(v)) for v in bgc.cells[l] if v != 0)
    return pi


def expected_cost(bgc: Bgc, catalog: BinCatalog, table: CostTable) -> float:
    """Expected retrieval cost of a single request against a BGC.

    Requires every occupied stack to sit at a common fill level, which
    determines the empty level used by the cost functions.
    """
    h = fill_levels(bgc)
    occupied = h[h > 0]
    if occupied.size == 0:
        raise ValidationError("grid stores no bins")
    if not np.all(occupied == occupied[0]):
        raise ValidationError("occupied stacks have non-uniform fill levels")
    h_e = bgc.height - int(occupied[0])
    pi = layer_probabilities(bgc, catalog)
    total = 0.0
    for l in range(1, bgc.height + 1):
        if pi[l - 1] != 0.0:
            total += retrieval_cost(l, h_e, table) * pi[l - 1]
    return total
