"""The periodic determinant as a Laurent polynomial and its zeros near the unit circle."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .finite_volume import log_f_batch
from .lyapunov import AccelerationEstimate, LyapunovProfile
from .models import BlockModel

MAX_ZERO_SCALE = 60
TRIM_REL = 1e-13
BOUNDARY_TOL = 1e-8
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class LaurentPoly:
    """``exp(global_log_scale) * sum_{k=k_min}^{k_max} coeffs[k-k_min] z^k``."""

    k_min: int
    coeffs: np.ndarray
    global_log_scale: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "coeffs", np.asarray(self.coeffs, dtype=complex))

    @property
    def k_max(self) -> int:
        return self.k_min + len(self.coeffs) - 1

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def coefficient(self, k: int) -> complex:
        i = k - self.k_min
        return complex(self.coeffs[i]) if 0 <= i < len(self.coeffs) else 0j

    def scaled_values(self, z) -> np.ndarray:
        """``sum c_k z^k`` without the global scale."""
        z = np.asarray(z, dtype=complex)
        return np.polyval(self.coeffs[::-1], z) * z ** self.k_min

    def trimmed(self, rel: float = TRIM_REL) -> "LaurentPoly":
        mag = np.abs(self.coeffs)
        if not np.any(mag):
            return LaurentPoly(0, np.zeros(1, dtype=complex), self.global_log_scale)
        keep = np.flatnonzero(mag >= rel * mag.max())
        lo, hi = keep[0], keep[-1]
        return LaurentPoly(self.k_min + int(lo), self.coeffs[lo:hi + 1], self.global_log_scale)


def extract_laurent(model: BlockModel, E: float, n: int, oversample: int = 2) -> LaurentPoly:
    """Fourier coefficients of ``theta -> det(P_n(theta) - E)`` in ``z = e^{2 pi i theta}``.

    The determinant is sampled at ``oversample * (2D + 1)`` phases, where ``D``
    bounds the trigonometric degree, rescaled by its largest modulus, and
    inverted with an FFT.
    """
    if model.b != 1:
        raise ValueError("Laurent extraction needs a one-frequency model")
    if n > MAX_ZERO_SCALE:
        raise ValueError(f"zero counting is limited to n <= {MAX_ZERO_SCALE}; "
                         "use the Lyapunov tools for larger scales")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    deg = max(model.V.degree, model.B.degree)
    D = n * model.d * deg
    M = oversample * (2 * D + 1)
    logdet, ang = log_f_batch(model, E, n, np.arange(M) / M)
    finite = np.isfinite(logdet)
    if not np.any(finite):
        return LaurentPoly(0, np.zeros(1, dtype=complex), 0.0)
    scale = float(np.max(logdet[finite]))
    vals = np.where(finite, np.exp(logdet - scale + 1j * ang), 0.0)
    spec = np.fft.fft(vals) / M
    ks = np.arange(-D, D + 1)
    poly = LaurentPoly(-D, spec[ks % M], scale).trimmed()
    probe = (np.arange(16) + (3.0 - np.sqrt(5.0)) / 2.0) / 16.0
    lp, ap = log_f_batch(model, E, n, probe)
    truth = np.exp(lp - scale + 1j * ap)
    approx = poly.scaled_values(np.exp(2j * np.pi * probe))
    if np.max(np.abs(truth - approx)) > RESIDUAL_TOL:
        raise ArithmeticError("zero_count.extract_laurent: insufficient oversampling or dynamic range")
    return poly


@dataclass(frozen=True)
class AnnulusZeroReport:
    n: int | None
    E: float | None
    eps_annulus: float
    roots: np.ndarray
    count: int
    boundary_flags: np.ndarray
    pairing: list

    @property
    def log_mag_over_2pi(self) -> np.ndarray:
        return np.log(np.abs(self.roots)) / (2 * np.pi)


def _winding(poly: LaurentPoly, radius: float) -> int:
    """Zeros of ``z^{-k_min} f`` inside ``|z| < radius`` by the argument principle."""
    a = poly.coeffs
    m = len(a)
    if m == 1:
        return 0
    logr = np.log(radius)
    with np.errstate(divide="ignore"):
        la = np.log(np.abs(a)) + np.arange(m) * logr
    w = np.exp(la - la.max()) * np.exp(1j * np.angle(a))
    npts = max(8 * (m - 1), m)
    while True:
        vals = np.fft.ifft(w, n=npts) * npts
        step = np.angle(np.roll(vals, -1) / vals)
        if np.max(np.abs(step)) < np.pi / 4 or npts >= 2 ** 20:
            return int(np.rint(np.sum(step) / (2 * np.pi)))
        npts *= 2


def match_roots(roots: np.ndarray, images: np.ndarray) -> tuple:
    """Nearest root to each image point: returns (indices, relative distances)."""
    if roots.size == 0:
        return np.zeros(0, dtype=int), np.zeros(0)
    dist = np.abs(images[:, None] - roots[None, :])
    idx = np.argmin(dist, axis=1)
    rel = dist[np.arange(len(images)), idx] / np.maximum(1.0, np.abs(images))
    return idx, rel


def count_zeros(poly: LaurentPoly, eps_annulus: float, n: int | None = None,
                E: float | None = None) -> AnnulusZeroReport:
    """Count zeros in ``{|log|z|| / 2 pi <= eps_annulus}``.

    Roots come from the companion matrix of ``z^{-k_min} f`` plus one Newton
    step; the count is cross-checked against argument-principle integrals over
    the two boundary circles.  Roots within ``1e-8`` of the boundary count as
    inside and are flagged.
    """
    if eps_annulus <= 0:
        raise ValueError("eps_annulus must be positive")
    coeffs = poly.coeffs
    if not np.any(coeffs):
        raise ValueError("the zero polynomial has no isolated zeros")
    high_first = coeffs[::-1]
    if len(coeffs) > 1:
        roots = np.roots(high_first)
        deriv = np.polyder(high_first)
        dp = np.polyval(deriv, roots)
        ok = dp != 0
        roots[ok] = roots[ok] - np.polyval(high_first, roots[ok]) / dp[ok]
    else:
        roots = np.zeros(0, dtype=complex)
    level = np.log(np.abs(roots)) / (2 * np.pi)
    inside = np.abs(level) <= eps_annulus + BOUNDARY_TOL
    flags = np.abs(np.abs(level) - eps_annulus) <= BOUNDARY_TOL
    count = int(np.count_nonzero(inside))
    R = np.exp(2 * np.pi * (eps_annulus + BOUNDARY_TOL))
    arg_count = _winding(poly, R) - _winding(poly, 1.0 / R)
    if arg_count != count:
        raise ArithmeticError(
            f"zero_count.count_zeros: companion roots give {count}, argument principle {arg_count}")
    idx, _ = match_roots(roots, 1.0 / np.conj(roots))
    pairing = sorted({tuple(sorted((i, int(j)))) for i, j in enumerate(idx)})
    return AnnulusZeroReport(n, E, float(eps_annulus), roots, count, flags, pairing)


def pairing_check(report: AnnulusZeroReport, kind: str, alpha: float | None = None,
                  d: int | None = None) -> float:
    """Largest distance from a transformed root to the nearest root.

    ``kind`` is ``"unit-reflection"`` (``w -> 1/conj(w)``),
    ``"conjugate-rotation"`` (``w -> conj(w) e^{2 pi i alpha}``) or
    ``"rotation"`` (``w -> w e^{2 pi i/d}``).  Distances are divided by
    ``max(1, |image|)``.
    """
    w = np.asarray(report.roots)
    if kind == "unit-reflection":
        img = 1.0 / np.conj(w)
    elif kind == "conjugate-rotation":
        if alpha is None:
            raise ValueError("conjugate-rotation needs alpha")
        img = np.conj(w) * np.exp(2j * np.pi * alpha)
    elif kind == "rotation":
        if d is None:
            raise ValueError("rotation needs d")
        img = w * np.exp(2j * np.pi / d)
    else:
        raise ValueError(f"unknown pairing kind {kind!r}")
    _, rel = match_roots(w, img)
    return float(rel.max()) if rel.size else 0.0


class RieszRatio(NamedTuple):
    ratio: float
    gap: float
    count: int


def riesz_ratio(model: BlockModel, E: float, n: int, eta_third: float | None = None,
                kappa_reference: AccelerationEstimate | None = None,
                profile: LyapunovProfile | None = None) -> RieszRatio:
    """Normalized zero count ``N_n(E, eta/3) / 2n`` and its distance to the acceleration.

    Without ``kappa_reference`` the gap is measured to the nearest integer.
    """
    if profile is not None and profile.L[model.d - 1] <= 0:
        raise ValueError("riesz_ratio needs a positive middle exponent L_d")
    if eta_third is None:
        eta_third = model.eta / 3.0
    poly = extract_laurent(model, E, n)
    report = count_zeros(poly, eta_third, n, E)
    ratio = report.count / (2.0 * n)
    target = kappa_reference.kappa_rounded if kappa_reference is not None else round(ratio)
    return RieszRatio(ratio, abs(ratio - target), report.count)
