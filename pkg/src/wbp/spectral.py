"""Mean kernels on finite type grids and their spectral data.

The mean kernel matrix ``M[i, j]`` is the expected offspring mass (first
or p-th moment) a parent at grid point ``i`` sends to grid cell ``j``.
Iterated kernels drive all expectation-level predictions; the dominant
eigentriple ``(theta, eta, nu)`` and the deviation sequence ``alpha_n``
quantify how fast ``theta^-n Q^n f`` stabilizes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .population import ReproductionLaw


class SpectralConvergenceError(Exception):
    """Power iteration failed: non-primitive or slowly mixing kernel."""


@dataclass(frozen=True)
class TypeGrid:
    """Finite carrier for a type space.

    ``finite`` grids enumerate native discrete types (stored as their
    indices); ``interval`` grids are midpoint discretizations of a real
    interval with cell width ``h``.
    """

    points: np.ndarray
    kind: str = "finite"
    h: Optional[float] = None
    lo: float = 0.0

    @property
    def size(self) -> int:
        return int(np.asarray(self.points).shape[0])

    def locate(self, xs) -> np.ndarray:
        """Grid cell index of each point in ``xs``."""
        if self.kind == "finite":
            return np.asarray(xs, dtype=np.int64)
        idx = np.floor((np.asarray(xs, dtype=np.float64) - self.lo) / self.h).astype(np.int64)
        return np.clip(idx, 0, self.size - 1)

    @staticmethod
    def finite(n: int) -> "TypeGrid":
        return TypeGrid(np.arange(n, dtype=np.int64), kind="finite")

    @staticmethod
    def interval(lo: float, hi: float, h: float) -> "TypeGrid":
        if h <= 0 or hi <= lo:
            raise ValueError("need hi > lo and h > 0")
        n = int(round((hi - lo) / h))
        pts = lo + (np.arange(n) + 0.5) * h
        return TypeGrid(pts, kind="interval", h=float(h), lo=float(lo))


@dataclass
class MeanKernel:
    """Matrix form of a moment kernel on a grid."""

    matrix: np.ndarray
    grid: TypeGrid
    order: float = 1.0
    stderr: Optional[np.ndarray] = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("kernel matrix must be square")
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("kernel entries must be finite and non-negative")
        self.matrix = m

    @property
    def size(self) -> int:
        return self.matrix.shape[0]


def build_mean_kernel(
    law: ReproductionLaw,
    grid: TypeGrid,
    order: float = 1.0,
    mc_budget: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> MeanKernel:
    """Exact (analytic) or Monte Carlo estimate of the moment kernel.

    Analytic rows come from ``law.moment_row``; laws without closed forms
    need ``mc_budget`` draws per grid point and report per-entry standard
    errors.
    """
    d = grid.size
    rows = []
    analytic = True
    for i in range(d):
        row = law.moment_row(grid.points[i], grid, order)
        if row is None:
            analytic = False
            break
        rows.append(np.asarray(row, dtype=np.float64))
    if analytic:
        matrix = np.vstack(rows)
        _check_row_masses(matrix)
        return MeanKernel(matrix, grid, order)

    if mc_budget is None or rng is None:
        raise ValueError("law has no analytic moments; supply mc_budget and rng")
    matrix = np.zeros((d, d))
    stderr = np.zeros((d, d))
    for i in range(d):
        acc = np.zeros((mc_budget, d))
        for b in range(mc_budget):
            offspring, _ = law.sample_progeny(grid.points[i], rng)
            for u, y in offspring:
                acc[b, grid.locate([y])[0]] += u**order
        matrix[i] = acc.mean(axis=0)
        stderr[i] = acc.std(axis=0, ddof=1) / np.sqrt(mc_budget)
    _check_row_masses(matrix)
    return MeanKernel(matrix, grid, order, stderr=stderr)


def _check_row_masses(matrix):
    masses = matrix.sum(axis=1)
    if not np.all(np.isfinite(masses)):
        raise ValueError("kernel row with non-finite total mass")


def kernel_power_apply(k: MeanKernel, f, n: int, return_logscale: bool = False):
    """``Q^n f`` by repeated matrix-vector products.

    Internally renormalized so huge ``n`` cannot overflow; with
    ``return_logscale`` the result is the sup-normalized vector plus the
    log of the discarded scale.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    v = np.asarray(f, dtype=np.float64).astype(np.float64, copy=True)
    logscale = 0.0
    for _ in range(n):
        v = k.matrix @ v
        m = float(np.max(np.abs(v)))
        if m > 0.0 and not (1e-140 < m < 1e140):
            v = v / m
            logscale += np.log(m)
    if return_logscale:
        m = float(np.max(np.abs(v)))
        if m > 0.0:
            v = v / m
            logscale += np.log(m)
        return v, logscale
    return v * np.exp(logscale)


def kernel_power_expect(k: MeanKernel, init_measure, f, n: int) -> float:
    """``<init, Q^n f>``: the expected generation-``n`` integral of ``f``."""
    return float(np.dot(np.asarray(init_measure, dtype=np.float64), kernel_power_apply(k, f, n)))


@dataclass
class SpectralData:
    """Dominant eigendata of a mean kernel.

    ``eta`` is the right eigenvector (sup-norm 1), ``nu`` the left one
    (total mass 1), ``beta`` the polynomial degree of the growth
    correction (0 for primitive kernels). ``alpha`` holds the measured
    deviation sequence once :func:`alpha_sequence` ran.
    """

    theta: float
    beta: int
    eta: np.ndarray
    nu: np.ndarray
    residual_right: float = 0.0
    residual_left: float = 0.0
    alpha: Optional[np.ndarray] = None
    alpha_burn_in: Optional[int] = None
    psi1: Optional[np.ndarray] = None

    def eta_f(self, f) -> np.ndarray:
        """Rank-one limit profile ``eta * nu(f)`` for the observable ``f``."""
        return self.eta * float(np.dot(self.nu, np.asarray(f, dtype=np.float64)))


def power_iteration(k: MeanKernel, tol: float = 1e-12, max_iter: int = 100_000) -> SpectralData:
    """Dominant eigentriple ``(theta, eta, nu)`` of a non-negative kernel.

    Raises :class:`SpectralConvergenceError` when the iteration does not
    settle (periodic or nearly reducible kernels), and rejects the zero
    kernel outright.
    """
    m = k.matrix
    if not np.any(m > 0):
        raise SpectralConvergenceError("zero kernel has no dominant eigenvalue")
    d = m.shape[0]
    theta, eta = _power_iterate(m, np.ones(d), tol, max_iter)
    if d > 1:
        # primitivity probe: a skewed start must reach the same growth rate
        # (periodic kernels oscillate, near-reducible ones crawl)
        probe = 0.5 + np.arange(d) / (2.0 * d)
        theta_probe, _ = _power_iterate(m, probe, tol, max_iter)
        if abs(theta_probe - theta) > 1e-6 * max(theta, theta_probe):
            raise SpectralConvergenceError(
                "growth rate depends on the start vector: non-primitive kernel"
            )
    theta_l, nu = _power_iterate(m.T, np.ones(d), tol, max_iter)
    eta = eta / np.max(np.abs(eta))
    nu = nu / np.sum(nu)
    resid_r = float(np.max(np.abs(m @ eta - theta * eta)) / np.max(np.abs(eta)))
    resid_l = float(np.sum(np.abs(nu @ m - theta * nu)))
    return SpectralData(
        theta=float(theta),
        beta=0,
        eta=eta,
        nu=nu,
        residual_right=resid_r,
        residual_left=resid_l,
    )


def _power_iterate(m, start, tol, max_iter):
    v = np.asarray(start, dtype=np.float64)
    v = v / np.max(np.abs(v))
    theta = 1.0
    for _ in range(max_iter):
        w = m @ v
        theta = float(np.max(np.abs(w)))
        if theta == 0.0:
            raise SpectralConvergenceError("iterate hit the kernel's null space")
        w = w / theta
        if float(np.max(np.abs(w - v))) <= tol:
            return theta, w
        v = w
    raise SpectralConvergenceError(
        f"no convergence after {max_iter} iterations: non-primitive or slowly mixing"
    )


@dataclass
class BetaFit:
    """Result of the polynomial-geometric growth fit."""

    theta: float
    beta: int
    beta_raw: float
    residual: float
    intercept: float
    window: tuple[int, int]


def log_sup_norms(k: MeanKernel, f, n_max: int) -> np.ndarray:
    """``log ||Q^n f||_inf`` for n = 0..n_max, overflow-safe."""
    v = np.asarray(f, dtype=np.float64).astype(np.float64, copy=True)
    out = np.empty(n_max + 1)
    logscale = 0.0
    for n in range(n_max + 1):
        m = float(np.max(np.abs(v)))
        if m == 0.0:
            raise ValueError(f"Q^{n} f vanished; growth fit undefined")
        out[n] = np.log(m) + logscale
        if n < n_max:
            v = v / m
            logscale += np.log(m)
            v = k.matrix @ v
    return out


def estimate_beta(k: MeanKernel, f, window: Optional[range] = None) -> BetaFit:
    """Fit ``log ||Q^n f|| ~ n log(theta) + beta log(n) + c`` by least squares.

    ``beta`` is rounded to the nearest non-negative integer; fits whose raw
    exponent is farther than 0.25 from an integer are rejected. The default
    window sits high (n ~ 4096) where the polynomial term is cleanly
    separated and the geometric rate is accurate to ~1e-7.
    """
    if window is None:
        window = range(4096, 4161)
    ns = np.array(sorted(window), dtype=np.int64)
    if ns.size < 2 or ns[-1] - ns[0] < 8:
        raise ValueError("window must span at least 8 generations")
    if ns[0] < 1:
        raise ValueError("window must start at n >= 1")
    logs = log_sup_norms(k, f, int(ns[-1]))[ns]
    x = ns.astype(np.float64)
    design = np.column_stack([x, np.log(x), np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
    resid = float(np.linalg.norm(design @ coef - logs))
    beta_raw = float(coef[1])
    beta = int(round(beta_raw))
    if beta < 0 or abs(beta_raw - beta) > 0.25:
        raise ValueError(
            f"growth fit rejected: raw polynomial degree {beta_raw:.3f} "
            "is not near a non-negative integer"
        )
    return BetaFit(
        theta=float(np.exp(coef[0])),
        beta=beta,
        beta_raw=beta_raw,
        residual=resid,
        intercept=float(coef[2]),
        window=(int(ns[0]), int(ns[-1])),
    )


def alpha_sequence(
    k: MeanKernel,
    f,
    sd: SpectralData,
    psi1,
    n_max: int,
) -> np.ndarray:
    """Deviation sequence ``alpha_n`` of the scaled kernel powers.

    ``alpha_n = max_x |n^-beta theta^-n (Q^n f)(x) - eta_f(x)| / psi1(x)``
    for n = 1..n_max, with the rank-one limit ``eta_f = eta * nu(f)``.
    """
    psi = np.asarray(psi1, dtype=np.float64)
    if np.any(psi <= 0):
        raise ValueError("psi1 must be strictly positive on the grid")
    eta_f = sd.eta_f(f)
    v = np.asarray(f, dtype=np.float64).astype(np.float64, copy=True)
    out = np.empty(n_max)
    for n in range(1, n_max + 1):
        v = (k.matrix @ v) / sd.theta
        scaled = v / float(n) ** sd.beta if sd.beta else v
        out[n - 1] = float(np.max(np.abs(scaled - eta_f) / psi))
    return out


def alpha_burn_in(alpha: np.ndarray, rel_slack: float = 1e-9) -> int:
    """Smallest index from which the sequence is non-increasing."""
    n = alpha.shape[0]
    b = n - 1
    for i in range(n - 2, -1, -1):
        if alpha[i] >= alpha[i + 1] - rel_slack * max(alpha[i + 1], 1.0):
            b = i
        else:
            break
    return b


def attach_alpha(k: MeanKernel, f, sd: SpectralData, psi1, n_max: int) -> SpectralData:
    """Compute ``alpha_n`` and record it (with burn-in) on the spectral data."""
    alpha = alpha_sequence(k, f, sd, psi1, n_max)
    sd.alpha = alpha
    sd.alpha_burn_in = alpha_burn_in(alpha)
    sd.psi1 = np.asarray(psi1, dtype=np.float64)
    return sd
