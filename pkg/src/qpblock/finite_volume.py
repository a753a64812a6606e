"""Finite-volume truncations, periodic determinants and Green's functions."""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.linalg as sla

from .cocycle import log_abs_det_monodromy_minus_identity
from .models import BlockModel
from .torus import ComplexPhase, as_phase, phase_grid

ZERO_ABS = 1e-300
ZERO_REL = 1e-14
CRAMER_TOL = 1e-8
DEGENERATE_REL = 1e-10


@dataclass(frozen=True)
class LogComplex:
    """Nonzero complex number ``exp(log_mag + i*phase_angle)``; ``log_mag = -inf`` is zero."""

    log_mag: float
    phase_angle: float = 0.0

    @classmethod
    def from_complex(cls, value: complex) -> "LogComplex":
        if value == 0:
            return cls(-np.inf, 0.0)
        return cls(float(np.log(abs(value))), float(np.angle(value)))

    @property
    def is_zero(self) -> bool:
        return self.log_mag == -np.inf

    def to_complex(self) -> complex:
        if self.is_zero:
            return 0j
        return complex(np.exp(self.log_mag + 1j * self.phase_angle))

    def __mul__(self, other: "LogComplex") -> "LogComplex":
        return LogComplex(self.log_mag + other.log_mag,
                          float(np.angle(np.exp(1j * (self.phase_angle + other.phase_angle)))))

    def __truediv__(self, other: "LogComplex") -> "LogComplex":
        if other.is_zero:
            raise ZeroDivisionError("division by a zero LogComplex")
        return LogComplex(self.log_mag - other.log_mag,
                          float(np.angle(np.exp(1j * (self.phase_angle - other.phase_angle)))))


@dataclass(frozen=True, eq=False)
class FiniteVolumeOperator:
    """``nd x nd`` truncation of a block model; block row ``i`` is lattice site ``n-1-i``."""

    n: int
    d: int
    entries: np.ndarray
    bc: str
    phase: ComplexPhase
    _cache: dict = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    @property
    def size(self) -> int:
        return self.n * self.d

    def shifted(self, E: float) -> np.ndarray:
        return self.entries - E * np.eye(self.size)

    def lu(self, E: float):
        """Pivoted LU of ``P_n - E``, computed once per energy."""
        key = float(E)
        with self._lock:
            if key not in self._cache:
                with warnings.catch_warnings():
                    # exact singularity is reported through the pivots instead
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    self._cache[key] = sla.lu_factor(self.shifted(E), check_finite=False)
            return self._cache[key]


def _assemble_batch(model: BlockModel, theta: np.ndarray, eps, n: int, periodic: bool,
                    twist: float = 0.0) -> np.ndarray:
    """Batch assembly; ``twist`` imposes ``Phi_{j+n} = e^{2 pi i twist} Phi_j`` at the wrap."""
    th = np.asarray(theta, dtype=float).reshape(-1, model.b)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (model.b,))
    d, N = model.d, th.shape[0]
    w = model.omega.vector
    out = np.zeros((N, n * d, n * d), dtype=complex)
    # site s = n-1-i sits in block row i
    sites = np.arange(n)
    ph = (th[:, None, :] + sites[None, :, None] * w) % 1.0
    flat = ph.reshape(-1, model.b)
    V = model.V.evaluate(flat, eps).reshape(N, n, d, d)
    B = model.B.evaluate(flat, eps).reshape(N, n, d, d)
    Bs = model.Bstar.evaluate(flat, eps).reshape(N, n, d, d)
    for i in range(n):
        s = n - 1 - i
        r = slice(i * d, (i + 1) * d)
        out[:, r, r] = V[:, s]
        if i + 1 < n:
            r1 = slice((i + 1) * d, (i + 2) * d)
            out[:, r, r1] = Bs[:, s]
            out[:, r1, r] = B[:, s]
    if periodic:
        first = slice(0, d)
        last = slice((n - 1) * d, n * d)
        bloch = np.exp(2j * np.pi * twist)
        out[:, first, last] += bloch * B[:, 0]
        out[:, last, first] += np.conj(bloch) * Bs[:, 0]
    return out


def assemble(model: BlockModel, z, n: int, bc: str = "periodic") -> FiniteVolumeOperator:
    """Finite-volume operator on ``n`` blocks, periodic or with Dirichlet ends."""
    if bc not in ("periodic", "dirichlet"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    if bc == "periodic" and n < 3:
        raise ValueError("periodic assembly requires n >= 3")
    if n < 1:
        raise ValueError("n must be positive")
    z = as_phase(z, model.b)
    model.check_strip(z.eps_vec)
    mat = _assemble_batch(model, z.theta_vec, z.eps_vec, n, bc == "periodic")[0]
    return FiniteVolumeOperator(n, model.d, mat, bc, z)


def log_determinant(op: FiniteVolumeOperator, E: float) -> LogComplex:
    """``det(P_n - E)`` in log form from a pivoted LU factorization."""
    lu, piv = op.lu(E)
    diag = np.diag(lu)
    rows = np.max(np.abs(op.shifted(E)), axis=1)
    scale = np.max(rows) if rows.size else 1.0
    if np.any(np.abs(diag) <= ZERO_ABS) or np.any(np.abs(diag) <= ZERO_REL * scale):
        return LogComplex(-np.inf, 0.0)
    swaps = np.count_nonzero(piv != np.arange(piv.size))
    angle = np.sum(np.angle(diag)) + np.pi * swaps
    return LogComplex(float(np.sum(np.log(np.abs(diag)))), float(np.angle(np.exp(1j * angle))))


def log_f_batch(model: BlockModel, E: float, n: int, theta, eps=0.0) -> tuple:
    """``log|f_{E,n}|`` and ``arg f_{E,n}`` for a batch of phases (no zero snapping)."""
    mats = _assemble_batch(model, theta, eps, n, True)
    mats -= E * np.eye(mats.shape[-1])
    sign, logdet = np.linalg.slogdet(mats)
    return logdet, np.angle(sign)


def determinant_values(model: BlockModel, E: float, n: int, theta, eps=0.0) -> np.ndarray:
    """``f_{E,n}`` as complex numbers; only for moderate ``n``."""
    logdet, ang = log_f_batch(model, E, n, theta, eps)
    return np.exp(logdet + 1j * ang)


class DetPResidual(NamedTuple):
    residual: float
    degenerate: bool


def detP_identity_residual(model: BlockModel, E: float, z, n: int) -> DetPResidual:
    """Log-magnitude mismatch in ``|f| = |det(M_n - I)| prod |det B|``."""
    if n < 3:
        raise ValueError("periodic determinants require n >= 3")
    z = as_phase(z, model.b)
    op = assemble(model, z, n)
    lf = log_determinant(op, E).log_mag
    lm = log_abs_det_monodromy_minus_identity(model, E, z, n)
    th = (z.theta_vec[None, :] + np.arange(n)[:, None] * model.omega.vector) % 1.0
    lb = float(np.sum(np.log(np.abs(np.linalg.det(model.B.evaluate(th, z.eps_vec))))))
    if np.isneginf(lf):
        # f snapped to zero; the identity holds if the other side is zero at the same relative scale
        hadamard = float(np.sum(np.log(np.linalg.norm(op.shifted(E), axis=1))))
        if np.isneginf(lm) or lm + lb - hadamard <= np.log(DEGENERATE_REL):
            return DetPResidual(0.0, True)
    return DetPResidual(float(abs(lf - lm - lb)), False)


class GreenEntry(NamedTuple):
    value: complex
    minor: LogComplex
    determinant: LogComplex
    cramer_mismatch: float


def minor_mu(op: FiniteVolumeOperator, E: float, x: int, y: int) -> LogComplex:
    """Determinant of ``P_n - E`` with row ``x`` and column ``y`` removed."""
    A = np.delete(np.delete(op.shifted(E), x, axis=0), y, axis=1)
    sign, logdet = np.linalg.slogdet(A)
    if sign == 0:
        return LogComplex(-np.inf, 0.0)
    return LogComplex(float(logdet), float(np.angle(sign)))


def green(op: FiniteVolumeOperator, E: float, x: int, y: int) -> GreenEntry:
    """Entry ``(x, y)`` of ``(P_n - E)^{-1}`` with a Cramer-rule cross-check.

    The cofactor relation used is ``G(x, y) = (-1)^{x+y} mu(y, x) / f``; the
    minor ``mu(x, y)`` deletes row ``x`` and column ``y`` and is exposed in
    the result.
    """
    size = op.size
    if not (0 <= x < size and 0 <= y < size):
        raise IndexError("green indices outside the window")
    lu, piv = op.lu(E)
    diag = np.abs(np.diag(lu))
    k = int(np.argmin(diag))
    if diag[k] <= ZERO_ABS or diag[k] <= ZERO_REL * np.max(np.abs(op.shifted(E))):
        raise ZeroDivisionError(f"finite_volume.green: P_n - E is singular (pivot {k})")
    rhs = np.zeros(size, dtype=complex)
    rhs[y] = 1.0
    value = complex(sla.lu_solve((lu, piv), rhs, check_finite=False)[x])
    f = log_determinant(op, E)
    cofactor = minor_mu(op, E, y, x)
    mismatch = 0.0
    if not cofactor.is_zero and not f.is_zero:
        ratio = (cofactor / f).to_complex() * (-1) ** (x + y)
        mismatch = abs(ratio - value) / max(abs(value), 1e-300)
        hadamard = float(np.sum(np.log(np.linalg.norm(op.shifted(E), axis=1))))
        if mismatch > CRAMER_TOL and f.log_mag - hadamard > np.log(CRAMER_TOL):
            raise ArithmeticError(
                f"finite_volume.green: Cramer ratio disagrees with direct solve ({mismatch:.2e})")
    return GreenEntry(value, minor_mu(op, E, x, y), f, float(mismatch))


class RecursionSolution:
    """Block sequence solving ``H u = E u`` on a finite range of sites.

    Built forward from the seeds ``Phi_{j_lo-1}`` and ``Phi_{j_lo}``.
    """

    def __init__(self, model: BlockModel, E: float, theta, seed_prev, seed_cur,
                 j_lo: int, j_hi: int):
        z = as_phase(theta, model.b)
        w = model.omega.vector
        d = model.d
        self.j_lo = j_lo - 1
        vals = [np.asarray(seed_prev, dtype=complex).reshape(d),
                np.asarray(seed_cur, dtype=complex).reshape(d)]
        for j in range(j_lo, j_hi):
            ph = ComplexPhase(tuple(z.theta_vec + j * w), z.eps)
            nxt = ComplexPhase(tuple(z.theta_vec + (j + 1) * w), z.eps)
            rhs = (E * np.eye(d) - model.V(ph)) @ vals[-1] - model.Bstar(ph) @ vals[-2]
            vals.append(np.linalg.solve(model.B(nxt), rhs))
        self.values = np.array(vals)

    def __call__(self, j: int) -> np.ndarray:
        i = j - self.j_lo
        if not 0 <= i < len(self.values):
            raise IndexError(f"site {j} outside the generated range")
        return self.values[i]


def poisson_residual(model: BlockModel, E: float, theta, n: int, k: int, m: int,
                     u: Callable[[int], np.ndarray]) -> float:
    """Check the two-boundary Poisson representation of a solution on a window.

    The window holds blocks ``k..k+n-1``.  ``m`` is a scalar site index in
    ``[k d, k d + n d - 1]``: block ``m // d``, component ``m % d``.  The
    boundary data are ``B(z_k) Phi_k - B(z_{k+n}) Phi_{k+n}`` (first block row,
    lattice site ``k+n-1``) and ``B^(*)(z_k)(Phi_{k+n-1} - Phi_{k-1})`` (last
    block row, lattice site ``k``), with ``z_j = theta + j w``.
    """
    d = model.d
    if not k * d <= m <= k * d + n * d - 1:
        raise ValueError("m must lie in the window")
    z = as_phase(theta, model.b)
    w = model.omega.vector
    zk = ComplexPhase(tuple(z.theta_vec + k * w), z.eps)
    zkn = ComplexPhase(tuple(z.theta_vec + (k + n) * w), z.eps)
    op = assemble(model, zk, n)
    top = model.B(zk) @ u(k) - model.B(zkn) @ u(k + n)
    bottom = model.Bstar(zk) @ (u(k + n - 1) - u(k - 1))
    j, c = divmod(m, d)
    x = (k + n - 1 - j) * d + c
    lu = op.lu(E)
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= ZERO_REL * np.max(np.abs(op.shifted(E))):
        raise ZeroDivisionError("finite_volume.poisson_residual: P_n - E is singular")
    rhs = np.zeros(n * d, dtype=complex)
    rhs[:d] = top
    rhs[(n - 1) * d:] = bottom
    # row x of G applied to the boundary vector, G = (P_n - E)^{-1}
    e_x = np.zeros(n * d, dtype=complex)
    e_x[x] = 1.0
    g_row = sla.lu_solve(lu, e_x, trans=1, check_finite=False)
    value = complex(g_row @ rhs)
    um = complex(u(j)[c])
    return abs(um - value) / (1.0 + abs(um))


class AverageLogF(NamedTuple):
    value: float
    zero_count: int


def avg_log_f(model: BlockModel, E: float, eps, n: int, grid: int) -> AverageLogF:
    """Grid average of ``(1/n) log|f_{E,n}(theta + i eps)|``; exact zeros are skipped."""
    th = phase_grid(model.b, grid)
    model.check_strip(eps)
    logdet, _ = log_f_batch(model, E, n, th, eps)
    good = np.isfinite(logdet)
    if not np.any(good):
        raise ZeroDivisionError("f vanishes on every grid point")
    return AverageLogF(float(np.mean(logdet[good]) / n), int(np.count_nonzero(~good)))


def export_matrix_market(op: FiniteVolumeOperator, path, E: float = 0.0) -> None:
    """Write ``P_n - E`` as a dense complex array in matrix-market text form."""
    A = op.shifted(E)
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix array complex general\n")
        fh.write(f"% n={op.n} d={op.d} bc={op.bc} theta={list(op.phase.theta)} "
                 f"eps={list(op.phase.eps)} E={E!r}\n")
        fh.write(f"{A.shape[0]} {A.shape[1]}\n")
        for val in A.T.reshape(-1):
            fh.write(f"{val.real:.17g} {val.imag:.17g}\n")
