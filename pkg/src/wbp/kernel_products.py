"""Products of random matrices indexed by branching trees.

Each particle's type is the running product of the matrices met along
its ancestry; weights stay at 1 (magnitudes live in the matrices). The
observable contracts a start coordinate and a test vector through that
product, and its expectation over the tree is driven by the deterministic
mean matrix summed over one progeny draw.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .population import Generation, ReproductionLaw, initial_generation

_RESCALE_THRESHOLD = 2.0**512


def kernel_norm(a) -> float:
    """Row-sup norm ``max_x sum_y |A[x, y]|`` (sub-multiplicative)."""
    m = np.asarray(a, dtype=np.float64)
    return float(np.max(np.sum(np.abs(m), axis=1)))


@dataclass
class KernelProductLaw(ReproductionLaw):
    """Finite-support distribution over lists of d x d matrices.

    A parent carrying product ``T`` begets one child per matrix ``A`` in
    the drawn list, carrying ``T @ A``. When a product's magnitude
    explodes, the excess scale is moved into the weight channel so the
    weighted observable stays exact (see ``kernel_product_observable``).
    """

    atom_lists: tuple
    probs: tuple[float, ...]

    def __post_init__(self):
        pr = np.asarray(self.probs, dtype=np.float64)
        if len(self.atom_lists) != pr.size:
            raise ValueError("atom_lists and probs must align")
        if np.any(pr < 0) or not np.isclose(pr.sum(), 1.0):
            raise ValueError("probs must form a probability vector")
        self._cum = np.cumsum(pr)
        dims = {np.asarray(a).shape for lst in self.atom_lists for a in lst}
        if len(dims) != 1:
            raise ValueError("all matrices must share one square shape")
        (shape,) = dims
        if len(shape) != 2 or shape[0] != shape[1]:
            raise ValueError("matrices must be square")
        self.dim = shape[0]

    def sample_progeny(self, x, rng):
        j = int(np.searchsorted(self._cum, rng.random(), side="right"))
        out = []
        for a in self.atom_lists[j]:
            prod = np.asarray(x, dtype=np.float64) @ np.asarray(a, dtype=np.float64)
            scale = 1.0
            mag = float(np.max(np.abs(prod)))
            if mag > _RESCALE_THRESHOLD:
                scale = 2.0 ** np.ceil(np.log2(mag))
                prod = prod / scale
            out.append((scale, prod))
        return out, 0.0

    def mean_matrix(self) -> np.ndarray:
        """``P = E(sum_i A_i)`` over one progeny draw."""
        p = np.zeros((self.dim, self.dim))
        for prob, lst in zip(self.probs, self.atom_lists):
            for a in lst:
                p += prob * np.asarray(a, dtype=np.float64)
        return p

    def root_generation(self) -> Generation:
        return initial_generation([1.0], np.eye(self.dim)[None, :, :])


def kernel_product_observable(trajectory: Sequence[Generation], x_index: int, f) -> np.ndarray:
    """Generation sums of ``<e_x, (product along ancestry) f>``.

    Each particle contributes ``w_e * (T_e f)[x]``; the weight carries any
    magnitude factored out of the stored product, so the value is exact.
    """
    fvec = np.asarray(f, dtype=np.float64)
    out = np.empty(len(trajectory))
    for k, g in enumerate(trajectory):
        if g.size == 0:
            out[k] = 0.0
            continue
        vals = g.types[:, x_index, :] @ fvec
        out[k] = float(np.dot(g.weights, vals))
    return out
