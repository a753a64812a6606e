"""Finite-scale Lyapunov spectra, accelerations, large deviations and the avalanche test."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._parallel import map_blocks
from .cocycle import ScaledMatrix, chunk_length, graded_monodromy
from .models import BlockModel
from .torus import phase_grid


@dataclass(frozen=True)
class LyapunovProfile:
    """Finite-scale exponents ``L`` (descending) and partial sums ``Lsum``."""

    n: int
    eps: tuple
    grid: int
    L: tuple
    Lsum: tuple

    @property
    def d(self) -> int:
        return len(self.L) // 2


@dataclass(frozen=True)
class AccelerationEstimate:
    j: int
    eps0: float
    h: float
    kappa_raw: float
    kappa_rounded: int
    quantization_gap: float


def _eps_vector(model: BlockModel, eps) -> np.ndarray:
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (model.b,)).copy()
    model.check_strip(eps)
    return eps


def exterior_log_norms(model: BlockModel, E: float, eps, n: int, theta,
                       threads: int | None = None) -> np.ndarray:
    """``log || wedge^j M_{n,E}(theta + i eps) ||`` for ``j = 1..2d``.

    Returns an array of shape ``(N, 2d)`` (not divided by ``n``).
    """
    if n < 1:
        raise ValueError("n must be positive")
    eps = _eps_vector(model, eps)
    chunk = chunk_length(model, E, eps)

    def work(block):
        g = graded_monodromy(model, E, block, eps, n, chunk=chunk)
        return g.log_exterior_norms()

    out = map_blocks(work, np.asarray(theta, dtype=float).reshape(-1, model.b), threads)
    if not np.all(np.isfinite(out)):
        warnings.warn("exterior norms lost rank even in log form; exponents are unreliable")
    return out


def finite_scale_exponents(model: BlockModel, E: float, eps, n: int, grid: int,
                           threads: int | None = None) -> LyapunovProfile:
    """Phase-averaged finite-scale Lyapunov spectrum of ``M_{n,E}`` at offset ``eps``."""
    if grid < 1:
        raise ValueError("grid must be positive")
    logs = exterior_log_norms(model, E, eps, n, phase_grid(model.b, grid), threads)
    Lsum = np.mean(logs, axis=0) / n
    L = np.diff(np.concatenate([[0.0], Lsum]))
    eps_t = tuple(float(e) for e in np.broadcast_to(np.asarray(eps, dtype=float), (model.b,)))
    return LyapunovProfile(n, eps_t, grid, tuple(map(float, L)), tuple(map(float, Lsum)))


def acceleration(model: BlockModel, E: float, j: int, eps0: float, h: float, n: int,
                 grid: int, threads: int | None = None) -> AccelerationEstimate:
    """Forward-difference acceleration ``(L^j(eps0+h) - L^j(eps0)) / (2 pi h)``."""
    if model.b != 1:
        raise ValueError("acceleration is defined for one-frequency models")
    if not (0 <= eps0 < eps0 + h):
        raise ValueError("need 0 <= eps0 < eps0 + h")
    if not 1 <= j <= 2 * model.d:
        raise ValueError("exterior index out of range")
    lo = finite_scale_exponents(model, E, eps0, n, grid, threads).Lsum[j - 1]
    hi = finite_scale_exponents(model, E, eps0 + h, n, grid, threads).Lsum[j - 1]
    raw = (hi - lo) / (2 * np.pi * h)
    rounded = int(np.rint(raw))
    gap = abs(raw - rounded)
    if gap > 0.25:
        warnings.warn(f"acceleration {raw:.3f} is far from an integer; h may be below the "
                      "finite-scale noise")
    return AccelerationEstimate(j, float(eps0), float(h), float(raw), rounded, float(gap))


def complexified_profile(model: BlockModel, E: float, j: int, eps_list: Sequence[float],
                         n: int, grid: int, threads: int | None = None) -> list:
    """``[(eps, L^j_eps)]`` along a sorted list of offsets."""
    eps_list = [float(e) for e in eps_list]
    if eps_list != sorted(eps_list):
        raise ValueError("eps_list must be sorted")
    return [(e, finite_scale_exponents(model, E, e, n, grid, threads).Lsum[j - 1])
            for e in eps_list]


def convexity_defect(profile: list) -> float:
    """Largest violation of convexity among consecutive triples (0 if convex)."""
    eps = np.array([p[0] for p in profile])
    val = np.array([p[1] for p in profile])
    worst = 0.0
    for i in range(1, len(eps) - 1):
        t = (eps[i] - eps[i - 1]) / (eps[i + 1] - eps[i - 1])
        chord = (1 - t) * val[i - 1] + t * val[i + 1]
        worst = max(worst, val[i] - chord)
    return float(worst)


def lipschitz_constant(profile: list) -> float:
    """Largest slope between consecutive profile points."""
    eps = np.array([p[0] for p in profile])
    val = np.array([p[1] for p in profile])
    if len(eps) < 2:
        return 0.0
    return float(np.max(np.abs(np.diff(val) / np.diff(eps))))


class LDTReport(NamedTuple):
    fraction: float
    clusters: int
    mean: float


def _circular_runs(mask: np.ndarray) -> int:
    if mask.all():
        return 1
    if not mask.any():
        return 0
    starts = mask & ~np.roll(mask, 1)
    return int(np.count_nonzero(starts))


def ldt_deviation_fraction(model: BlockModel, E: float, eps, n: int, grid: int, delta: float,
                           threads: int | None = None) -> LDTReport:
    """Fraction of phases where ``(1/n) log||wedge^d M_n||`` falls ``n^-delta`` below its mean.

    ``clusters`` counts maximal runs of consecutive bad phases on the circle
    (for ``b = 1``) or bad lattice points in generation order otherwise.
    """
    if grid < 100:
        raise ValueError("grid must be at least 100")
    d = model.d
    logs = exterior_log_norms(model, E, eps, n, phase_grid(model.b, grid), threads)[:, d - 1] / n
    mean = float(np.mean(logs))
    bad = logs <= mean - n ** (-delta)
    return LDTReport(float(np.mean(bad)), _circular_runs(bad), mean)


class AvalancheReport(NamedTuple):
    applicable: bool
    lhs: float
    bound: float


def _log_product_norm(mats: Sequence[np.ndarray]) -> float:
    acc = ScaledMatrix.from_matrix(np.eye(mats[0].shape[1]))
    for g in mats:
        acc = ScaledMatrix.from_matrix(g) @ acc
    return acc.log_norm()


def avalanche_check(g: Sequence[np.ndarray], eps_ap: float, kappa_ap: float,
                    C0: float = 10.0) -> AvalancheReport:
    """Test the avalanche-principle hypotheses and compare both sides.

    The gap hypothesis is ``sigma_2 / sigma_1 <= kappa`` for each block and the
    alignment hypothesis is ``||g_j g_{j-1}|| > eps ||g_j|| ||g_{j-1}||``.
    """
    g = [np.asarray(x, dtype=complex) for x in g]
    if len(g) < 2:
        raise ValueError("need at least two matrices")
    sv = [np.linalg.svd(x, compute_uv=False) for x in g]
    if any(s[0] == 0 for s in sv):
        raise ValueError("matrices must be nonzero")
    log_norm = np.array([np.log(s[0]) for s in sv])
    gap_ok = all(s[1] <= kappa_ap * s[0] for s in sv)
    pair = np.array([np.log(np.linalg.norm(g[j] @ g[j - 1], 2)) for j in range(1, len(g))])
    align_ok = bool(np.all(pair - log_norm[1:] - log_norm[:-1] > np.log(eps_ap)))
    n = len(g)
    lhs = abs(_log_product_norm(g) + np.sum(log_norm[1:n - 1]) - np.sum(pair))
    bound = C0 * n * kappa_ap / eps_ap ** 2
    return AvalancheReport(bool(gap_ok and align_ok), float(lhs), float(bound))
