"""Finite-volume spectra, interval covers, duality checks and graphene identities."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._parallel import map_blocks
from .finite_volume import _assemble_batch, assemble
from .lyapunov import finite_scale_exponents
from .models import (GOLDEN, BlockModel, TridiagonalBlocks, as_frequency, graphene_blocks,
                     make_amo)
from .torus import Frequency, as_phase

DEFAULT_MERGE_TOL = 1e-3


# ---------------------------------------------------------------------------
# finite spectra and interval covers

def finite_spectrum(model: BlockModel, theta, n: int, bc: str = "periodic") -> np.ndarray:
    """Ascending eigenvalues of the ``n``-block truncation at a real phase."""
    z = as_phase(theta, model.b)
    if not z.is_real:
        raise ValueError("a complex phase gives a non-Hermitian truncation")
    op = assemble(model, z, n, bc)
    return np.linalg.eigvalsh(op.entries)


def merge_intervals(intervals, tol: float = 0.0) -> list:
    """Sorted disjoint cover of ``intervals``, joining pieces closer than ``tol``."""
    items = sorted((float(a), float(b)) for a, b in intervals)
    out: list = []
    for lo, hi in items:
        if out and lo <= out[-1][1] + tol:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(a, b) for a, b in out]


def _dist_to_cover(x: np.ndarray, cover) -> np.ndarray:
    lo = np.array([a for a, _ in cover])
    hi = np.array([b for _, b in cover])
    gap = np.maximum(np.maximum(lo[None, :] - x[:, None], x[:, None] - hi[None, :]), 0.0)
    return gap.min(axis=1)


def _directed_hausdorff(A, B) -> float:
    # on each interval of A the distance to B peaks at an endpoint or at a gap midpoint of B
    cand = [v for iv in A for v in iv]
    mids = [(B[i][1] + B[i + 1][0]) / 2.0 for i in range(len(B) - 1)]
    for m in mids:
        if any(a <= m <= b for a, b in A):
            cand.append(m)
    return float(_dist_to_cover(np.asarray(cand), B).max())


def hausdorff_intervals(A, B) -> float:
    """Exact Hausdorff distance between two finite unions of closed intervals."""
    A, B = merge_intervals(A), merge_intervals(B)
    if not A or not B:
        raise ValueError("interval covers must be nonempty")
    return max(_directed_hausdorff(A, B), _directed_hausdorff(B, A))


@dataclass(frozen=True)
class SpectrumApprox:
    """Interval cover of a union of finite-volume spectra.

    Attributes
    ----------
    eigenvalues : ndarray
        Every eigenvalue computed, sorted.
    intervals : list of (lo, hi)
        Sorted, pairwise disjoint cover containing every eigenvalue.
    """

    n: int
    theta_grid: int
    eigenvalues: np.ndarray
    intervals: list
    merge_tol: float
    method: str
    label: str = ""

    @property
    def total_length(self) -> float:
        return float(sum(b - a for a, b in self.intervals))

    def scaled(self, factor: float) -> "SpectrumApprox":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return dataclasses.replace(
            self, eigenvalues=self.eigenvalues * factor,
            intervals=[(a * factor, b * factor) for a, b in self.intervals])

    def metadata(self) -> dict:
        return {"label": self.label, "n": self.n, "grid": self.theta_grid,
                "merge_tol": self.merge_tol, "method": self.method}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            for key, value in self.metadata().items():
                fh.write(f"# {key}={value}\n")
            w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
            w.writerow(["lo", "hi"])
            for a, b in self.intervals:
                w.writerow([repr(a), repr(b)])


def rational_approximant(omega: float, n: int) -> int:
    """Numerator ``p`` coprime to ``n`` with ``p/n`` nearest to ``omega`` mod 1."""
    if n < 1:
        raise ValueError("n must be positive")
    w = omega % 1.0
    ps = [p for p in range(n + 1) if math.gcd(p, n) == 1]
    return min(ps, key=lambda p: (abs(p / n - w), p))


def spectrum_union(model: BlockModel, n: int, theta_grid: int,
                   merge_tol: float = DEFAULT_MERGE_TOL, method: str = "approximant",
                   twists: int = 2, threads: int | None = None) -> SpectrumApprox:
    """Cover of ``union_theta sigma(H_theta)`` from ``n``-block truncations.

    ``method="approximant"`` (one frequency only) replaces ``omega`` by the
    nearest ``p/n``, so the periodic truncation is one period of an exactly
    periodic operator.  Its spectrum at each ``theta`` is the union over Bloch
    twists ``t`` of the twisted truncations, and it is ``1/n``-periodic in
    ``theta``.  The ``k``-th sorted eigenvalue is continuous in ``(theta, t)``,
    so each branch contributes the interval between its extremes over
    ``theta = k/(theta_grid n)`` and ``t = j/twists``.

    ``method="direct"`` keeps ``omega``, takes periodic eigenvalues at
    ``theta = k/theta_grid`` and merges them as points.
    """
    if theta_grid < 1:
        raise ValueError("theta_grid must be positive")
    if n < 3:
        raise ValueError("spectrum_union needs n >= 3")
    if method == "approximant":
        if model.b != 1:
            raise ValueError("the periodic approximant needs a one-frequency model")
        if twists < 1:
            raise ValueError("twists must be positive")
        p = rational_approximant(model.omega.omega[0], n)
        periodic = dataclasses.replace(model, omega=Frequency((p / n,)))
        theta = (np.arange(theta_grid) / (theta_grid * n))[:, None]
        branches = []
        for j in range(twists):
            t = j / twists

            def work(block, t=t):
                return np.linalg.eigvalsh(_assemble_batch(periodic, block, 0.0, n, True, t))

            branches.append(map_blocks(work, theta, threads))
        eig = np.stack(branches)
        lo = eig.min(axis=(0, 1))
        hi = eig.max(axis=(0, 1))
        intervals = merge_intervals(zip(lo, hi), merge_tol)
    elif method == "direct":
        theta = np.arange(theta_grid)[:, None] / theta_grid * np.ones(model.b)

        def work(block):
            return np.linalg.eigvalsh(_assemble_batch(model, block, 0.0, n, True))

        eig = map_blocks(work, theta, threads)
        intervals = merge_intervals(((e, e) for e in eig.ravel()), merge_tol)
    else:
        raise ValueError(f"unknown spectrum_union method {method!r}")
    return SpectrumApprox(n, theta_grid, np.sort(eig.ravel()), intervals, float(merge_tol),
                          method, model.label)


def aubry_duality_gap(lam: float, omega=GOLDEN, n: int = 60, grid: int = 120,
                      merge_tol: float = DEFAULT_MERGE_TOL, threads: int | None = None) -> float:
    """Hausdorff distance between the covers of ``sigma(H_lam)`` and ``lam sigma(H_{1/lam})``."""
    if lam <= 0 or lam == 1:
        raise ValueError("aubry_duality_gap needs lam > 0 and lam != 1")
    a = spectrum_union(make_amo(lam, omega), n, grid, merge_tol, threads=threads)
    b = spectrum_union(make_amo(1.0 / lam, omega), n, grid, merge_tol, threads=threads)
    return hausdorff_intervals(a.intervals, b.scaled(lam).intervals)


# ---------------------------------------------------------------------------
# energies inside the spectrum

def bulk_eigenvalues(H: np.ndarray, d: int = 1, edge: float = 0.1,
                     max_edge_weight: float = 0.5) -> np.ndarray:
    """Eigenvalues of ``H`` whose eigenvectors are not concentrated near the ends.

    An eigenvector is rejected when more than ``max_edge_weight`` of its mass
    sits in the outer ``edge`` fraction of blocks at either end.
    """
    vals, vecs = np.linalg.eigh(H)
    nblocks = H.shape[0] // d
    k = max(1, int(round(edge * nblocks))) * d
    mass = np.abs(vecs) ** 2
    keep = (mass[:k].sum(axis=0) < max_edge_weight) & (mass[-k:].sum(axis=0) < max_edge_weight)
    return vals[keep]


def quantile_sample(values: np.ndarray, count: int) -> np.ndarray:
    """``count`` entries of sorted ``values`` at evenly spaced quantiles."""
    values = np.sort(np.asarray(values))
    if count < 1 or len(values) < count:
        raise ValueError("not enough values to sample from")
    idx = np.rint((np.arange(count) + 0.5) / count * len(values) - 0.5).astype(int)
    return values[np.clip(idx, 0, len(values) - 1)]


def sample_spectrum_energies(model: BlockModel, count: int, n: int = 200,
                             theta: float = 0.1) -> np.ndarray:
    """Bulk eigenvalues of a Dirichlet truncation at ``theta``, sampled at quantiles."""
    op = assemble(model, theta, n, "dirichlet")
    return quantile_sample(bulk_eigenvalues(op.entries, model.d), count)


# ---------------------------------------------------------------------------
# stacked graphene: the squared operator

def _half_operator(blocks: TridiagonalBlocks, theta: float, n: int) -> np.ndarray:
    """Periodic truncation of ``(H U)_m = P U_{m+1} + D U_m + Q U_{m-1}``; row block ``i`` is site ``n-1-i``."""
    w = blocks.omega.omega[0]
    ph = ((theta + np.arange(n) * w) % 1.0)[:, None]
    P, D, Q = (x.evaluate(ph) for x in (blocks.P, blocks.D, blocks.Q))
    d = D.shape[1]
    H = np.zeros((n * d, n * d), dtype=complex)
    row = lambda m: slice((n - 1 - m) * d, (n - m) * d)
    for m in range(n):
        H[row(m), row(m)] += D[m]
        H[row(m), row((m + 1) % n)] += P[m]
        H[row(m), row((m - 1) % n)] += Q[m]
    return H


def _block_jacobi_dense(B, V, w: float, theta: float, n: int) -> np.ndarray:
    """Periodic truncation from hopping and potential polynomials, without validation."""
    ph = ((theta + np.arange(n) * w) % 1.0)[:, None]
    Bz, Bs, Vz = B.evaluate(ph), B.star().evaluate(ph), V.evaluate(ph)
    d = Vz.shape[1]
    H = np.zeros((n * d, n * d), dtype=complex)
    row = lambda m: slice((n - 1 - m) * d, (n - m) * d)
    for m in range(n):
        H[row(m), row(m)] += Vz[m]
        # B(theta + (m+1) w) multiplies Phi_{m+1}; at the wrap it is B(theta)
        H[row(m), row((m + 1) % n)] += Bz[(m + 1) % n]
        H[row(m), row((m - 1) % n)] += Bs[m]
    return H


def _site_operator(stacking: str, l1: float, l2: float, l3: float, rho: float, w: float,
                   theta: float, n: int):
    """Bilayer tight-binding operator from its site equations, periodic in ``m``.

    Returns the matrix and a map from ``(layer, sublattice, m)`` to its row.
    """
    keys = [(layer, sub, m) for m in range(n) for layer in (1, 2) for sub in "AB"]
    index = {k: i for i, k in enumerate(keys)}
    H = np.zeros((len(keys), len(keys)), dtype=complex)

    def add(target, source, value):
        layer, sub, m = source
        H[index[target], index[(layer, sub, m % n)]] += value

    e = lambda s: np.exp(2j * np.pi * s)
    third = e(w / 3.0)
    for m in range(n):
        t = theta + m * w
        if stacking == "AA":
            for layer in (1, 2):
                other = 3 - layer
                add((layer, "A", m), (layer, "B", m), l1 + l3 * e(t))
                add((layer, "A", m), (layer, "B", m - 1), l2)
                add((layer, "A", m), (other, "A", m), rho)
                add((layer, "B", m), (layer, "A", m), l1 + l3 * e(-t))
                add((layer, "B", m), (layer, "A", m + 1), l2)
                add((layer, "B", m), (other, "B", m), rho)
        else:
            add((2, "A", m), (2, "B", m + 1), l2)
            add((2, "A", m), (2, "B", m), l3 * e(t) + l1)
            add((2, "A", m), (1, "B", m), rho)
            add((2, "B", m), (2, "A", m - 1), l2)
            add((2, "B", m), (2, "A", m), l3 * e(-t) + l1)
            add((1, "A", m), (1, "B", m + 1), l2)
            add((1, "A", m), (1, "B", m), l3 * e(t - 2.0 * w / 3.0) + l1 * third)
            add((1, "B", m), (1, "A", m - 1), l2)
            add((1, "B", m), (1, "A", m), l3 * e(-(t - 2.0 * w / 3.0)) + l1 * np.conj(third))
            add((1, "B", m), (2, "A", m), rho)
    return H, index


#: sublattice pairs forming (U1, U2) per site, top component first
_ORDER = {"AA": (((1, "A"), (2, "B")), ((1, "B"), (2, "A"))),
          "AB": (((2, "B"), (1, "B")), ((2, "A"), (1, "A")))}


def square_residual(stacking: str, l1: float, l2: float, l3: float, rho: float, omega,
                    theta: float, n: int) -> float:
    """Relative mismatch in ``H^2 = diag(H_hat H_hat^*, H_hat^* H_hat)`` for bilayer graphene.

    ``H`` is built from its site equations and reordered into ``(U1, U2)``
    with sites descending.  ``H_hat`` is built from its block recursion.  The
    result is the larger of the Frobenius-relative residual of the squared
    identity and the mismatch between ``H_hat H_hat^*`` and the block Jacobi
    form of the hopping and potential used by the graphene models.  The wrap
    blocks are left out of the second comparison, since the truncated product
    pairs phases ``theta + (n-1) w`` and ``theta`` there.
    """
    stacking = stacking.upper()
    if stacking not in _ORDER:
        raise ValueError(f"unknown stacking {stacking!r}")
    if n < 3:
        raise ValueError("square_residual needs n >= 3")
    omega = as_frequency(omega)
    w = omega.omega[0]
    H, index = _site_operator(stacking, l1, l2, l3, rho, w, theta, n)
    perm = [index[(layer, sub, m)] for half in _ORDER[stacking]
            for m in range(n - 1, -1, -1) for layer, sub in half]
    Hp = H[np.ix_(perm, perm)]
    blocks = graphene_blocks(stacking, l1, l2, l3, rho, omega)
    Hh = _half_operator(blocks, theta, n)
    Hs = Hh.conj().T
    half = 2 * n
    rhs = np.zeros_like(Hp)
    rhs[:half, :half] = Hh @ Hs
    rhs[half:, half:] = Hs @ Hh
    sq = Hp @ Hp
    r_square = np.linalg.norm(sq - rhs) / np.linalg.norm(sq)
    B, V = blocks.square_with_adjoint()
    model_form = _block_jacobi_dense(B, V, w, theta, n)
    mask = np.ones_like(model_form, dtype=bool)
    mask[:2, -2:] = False
    mask[-2:, :2] = False
    r_model = np.linalg.norm((rhs[:half, :half] - model_form)[mask]) / np.linalg.norm(model_form)
    return float(max(r_square, r_model))


def aa_square_residual(l1: float, l2: float, l3: float, rho: float, omega=GOLDEN,
                       theta: float = 0.0, n: int = 6) -> float:
    """:func:`square_residual` for AA stacking."""
    return square_residual("AA", l1, l2, l3, rho, omega, theta, n)


def ab_square_residual(l1: float, l2: float, l3: float, rho: float, omega=GOLDEN,
                       theta: float = 0.0, n: int = 6) -> float:
    """:func:`square_residual` for AB stacking."""
    return square_residual("AB", l1, l2, l3, rho, omega, theta, n)


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    eps: tuple
    values: tuple


def graphene_large_eps_slope(model: BlockModel, E: float, eps_hi: float, n: int, grid: int,
                             j: int = 2, step: float = 0.05,
                             threads: int | None = None) -> SlopeFit:
    """Least-squares line through ``(eps, L^j_eps)`` at four offsets ending at ``eps_hi``.

    The intercept is the line's value at ``eps = 0``.
    """
    if model.b != 1:
        raise ValueError("complexified slopes need a one-frequency model")
    eps = eps_hi - step * np.arange(3, -1, -1)
    for e in eps:
        model.check_strip(e)
    vals = [finite_scale_exponents(model, E, e, n, grid, threads).Lsum[j - 1] for e in eps]
    slope, intercept = np.polyfit(eps, vals, 1)
    return SlopeFit(float(slope), float(intercept), tuple(map(float, eps)), tuple(map(float, vals)))


# ---------------------------------------------------------------------------
# skew shift with rational frequency

def _check_rational(p: int, q: int) -> None:
    if q < 3 or not 0 < p < q or math.gcd(p, q) != 1:
        raise ValueError("need a reduced fraction p/q in (0, 1) with q >= 3")


def _y_value(y) -> float:
    return as_frequency(y).omega[0]


def skewshift_phase(x, m: int, y: float, p: int, q: int):
    """``x + m y + m(m-1) p/q`` with the rational part reduced exactly."""
    return x + m * y + ((m * (m - 1) * p) % q) / q


def skewshift_operator(lam: float, p: int, q: int, y, x: float, n: int) -> np.ndarray:
    """Dirichlet truncation of ``u_{m+1} + u_{m-1} + 2 lam cos(2 pi phase_m) u_m`` on ``m = 0..n-1``."""
    _check_rational(p, q)
    yv = _y_value(y)
    pot = np.array([2 * lam * np.cos(2 * np.pi * skewshift_phase(x, m, yv, p, q)) for m in range(n)])
    return np.diag(pot) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)


def skewshift_sample_energies(lam: float, p: int, q: int, y, count: int, n: int = 200,
                              x: float = 0.1) -> np.ndarray:
    """Bulk eigenvalues of a skew-shift truncation sampled at quantiles."""
    return quantile_sample(bulk_eigenvalues(skewshift_operator(lam, p, q, y, x, n)), count)


def skewshift_avg_lyapunov(lam: float, p: int, q: int, y, E: float, ell: int, x_grid: int,
                           threads: int | None = None) -> float:
    """``(1/ell)`` times the ``x``-average of ``log || prod_m M_E(x + m y + m(m-1)p/q) ||``.

    ``M_E(t) = [[E - 2 lam cos 2 pi t, -1], [1, 0]]``; products are renormalized
    at every step and ``x`` runs over ``k / x_grid``.
    """
    _check_rational(p, q)
    if ell < 1 or x_grid < 1:
        raise ValueError("ell and x_grid must be positive")
    yv = _y_value(y)
    rational = np.array([((m * (m - 1) * p) % q) / q for m in range(ell)])
    shifts = np.arange(ell) * yv + rational

    def work(xs):
        N = len(xs)
        vec = np.zeros((N, 2, 2))
        vec[:, 0, 0] = vec[:, 1, 1] = 1.0
        logs = np.zeros(N)
        for s in shifts:
            a = E - 2 * lam * np.cos(2 * np.pi * (xs + s))
            top = a[:, None] * vec[:, 0] - vec[:, 1]
            vec = np.stack([top, vec[:, 0]], axis=1)
            nrm = np.linalg.norm(vec, ord=2, axis=(1, 2))
            vec /= nrm[:, None, None]
            logs += np.log(nrm)
        return logs

    logs = map_blocks(work, np.arange(x_grid) / x_grid, threads)
    return float(np.mean(logs) / ell)


def duality_unitary_residual(lam: float, p: int, q: int, y, trunc: int, probe_count: int,
                             seed: int = 0, probes: Sequence[np.ndarray] | None = None) -> float:
    """Largest ``||(U H^sk - H_hat U) u|| / ||u||`` over test functions ``u(x, n)``.

    ``u`` lives on ``n = 0..trunc-1`` and on the grid ``x_k = k / trunc``.
    Fourier modes ``m`` run over ``-trunc/2 .. trunc/2 - 1`` with kernel
    ``e^{+2 pi i m x}``.  Writing ``(U u)(theta, m, j)`` as
    ``sum_{n = j mod q} e^{2 pi i theta n} W(m, n)`` makes the check exact on
    the coefficients ``W``.  Test functions must vanish within two sites and
    two modes of the window edges.  Random probes are drawn from ``seed``
    unless ``probes`` (arrays of shape ``(trunc, trunc)``, indexed ``[n, k]``)
    is given.
    """
    _check_rational(p, q)
    if trunc < 4 * q:
        raise ValueError("trunc must be at least 4q")
    yv = _y_value(y)
    L = trunc
    buf = 2
    ns = np.arange(L)
    xs = np.arange(L) / L
    modes = np.fft.fftfreq(L, 1.0 / L).astype(int)
    inner_modes = np.abs(modes) <= L // 2 - buf

    def coeffs(u):
        # c[m, n] = int e^{2 pi i m x} u(x, n) dx, exact on the grid
        return np.fft.ifft(u, axis=1).T

    def to_W(c):
        return np.exp(2j * np.pi * np.outer(modes, ns) * yv) * c

    def apply_hsk(u):
        out = np.zeros_like(u)
        out[:-1] += u[1:]
        out[1:] += u[:-1]
        ph = np.array([skewshift_phase(0.0, n, yv, p, q) for n in ns])
        return out + 2 * lam * np.cos(2 * np.pi * (xs[None, :] + ph[:, None])) * u

    def apply_hhat(W):
        jj = ns % q
        phase = np.exp(2j * np.pi * ((jj * (jj - 1) * p) % q) / q)
        out = np.zeros_like(W)
        # row for mode m takes the row for mode m + 1 (up) or m - 1 (down)
        up = np.zeros_like(W)
        down = np.zeros_like(W)
        for r, m in enumerate(modes):
            hit = np.flatnonzero(modes == m + 1)
            if hit.size:
                up[r] = W[hit[0]]
            hit = np.flatnonzero(modes == m - 1)
            if hit.size:
                down[r] = W[hit[0]]
        out += lam * phase[None, :] * up + lam * np.conj(phase)[None, :] * down
        em = np.exp(2j * np.pi * modes * yv)[:, None]
        out[:, :-1] += np.conj(em) * W[:, 1:]
        out[:, 1:] += em * W[:, :-1]
        return out

    def check_support(u):
        c = coeffs(u)
        if (np.any(np.abs(u[:buf]) > 0) or np.any(np.abs(u[L - buf:]) > 0)
                or np.any(np.abs(c[~inner_modes]) > 1e-12 * max(1.0, np.abs(c).max()))):
            raise ValueError("duality_unitary_residual: test function reaches the window buffer")

    if probes is None:
        rng = np.random.default_rng(seed)
        probes = []
        for _ in range(probe_count):
            c = np.zeros((L, L), dtype=complex)
            c[np.ix_(inner_modes, np.arange(buf, L - buf))] = (
                rng.standard_normal((inner_modes.sum(), L - 2 * buf))
                + 1j * rng.standard_normal((inner_modes.sum(), L - 2 * buf)))
            probes.append(np.fft.fft(c.T, axis=1))
    worst = 0.0
    for u in probes:
        u = np.asarray(u, dtype=complex)
        if u.shape != (L, L):
            raise ValueError("probe arrays must have shape (trunc, trunc)")
        check_support(u)
        norm = np.sqrt(np.sum(np.mean(np.abs(u) ** 2, axis=1)))
        if norm == 0:
            continue
        lhs = to_W(coeffs(apply_hsk(u)))
        rhs = apply_hhat(to_W(coeffs(u)))
        worst = max(worst, float(np.linalg.norm(lhs - rhs) / norm))
    return worst
