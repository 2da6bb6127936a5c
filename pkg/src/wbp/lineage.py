"""Ergodic averages along ancestral lineages.

For a particle ``e`` of generation ``n``, the lineage measure puts mass
``1/n`` on each type met at generations 1..n of its ancestry (itself
included). The generation aggregate ``A_n(f) = sum_e w_e M_e(f)`` is
computed two ways: incrementally, by enriching each particle's type with
the running sum of ``f`` along its line, and by walking retained trees;
both must agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .population import (
    Generation,
    ProgenyBatch,
    ReproductionLaw,
    initial_generation,
    lineage_measure,
)


@dataclass
class LineageLaw(ReproductionLaw):
    """Wraps a finite-type law, carrying each particle's running f-sum.

    Enriched types are ``(base type, sum of f over generations 1..n)``
    stored as float pairs, so lineage averages need no tree retention.
    """

    base_law: ReproductionLaw
    f_table: np.ndarray

    def __post_init__(self):
        self.f_table = np.asarray(self.f_table, dtype=np.float64)

    def sample_progeny(self, x, rng):
        base_type = int(round(float(x[0])))
        running = float(x[1])
        offspring, lost = self.base_law.sample_progeny(base_type, rng)
        return [
            (u, np.array([float(y), running + self.f_table[int(y)]])) for u, y in offspring
        ], lost

    def sample_generation(self, weights, types, rng):
        t = np.asarray(types, dtype=np.float64)
        base_types = np.rint(t[:, 0]).astype(np.int64)
        batch = self.base_law.sample_generation(weights, base_types, rng)
        child_base = np.asarray(batch.types, dtype=np.int64)
        child_sum = t[batch.parent_index, 1] + self.f_table[child_base]
        child_types = np.column_stack([child_base.astype(np.float64), child_sum])
        return ProgenyBatch(batch.weights, child_types, batch.parent_index, batch.discarded_mass)

    def root_generation(self, type_index: int = 0, weight: float = 1.0) -> Generation:
        return initial_generation(
            [weight], np.array([[float(type_index), 0.0]], dtype=np.float64)
        )


def lineage_average_increment(g: Generation) -> float:
    """``A_n(f)`` from the enriched running sums of one generation (n >= 1)."""
    if g.index == 0:
        raise ValueError("lineage averages start at generation 1")
    if g.size == 0:
        return 0.0
    return float(np.dot(g.weights, g.types[:, 1]) / g.index)


def lineage_average_observable(trajectory: Sequence[Generation], f) -> np.ndarray:
    """``A_n(f)`` for n = 1..N from a tree-retained trajectory of a base law."""
    out = np.empty(len(trajectory) - 1)
    for n, g in enumerate(trajectory[1:], start=1):
        total = 0.0
        for i in range(g.size):
            total += g.weights[i] * lineage_measure(g, i).integrate(f)
        out[n - 1] = total
    return out
