"""Transfer matrices, monodromy products and their symplectic structure."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .models import SINGULAR_COND, BlockModel, LongRangeModel, longrange_to_block
from .torus import ComplexPhase, as_phase

#: budget for the log condition number accumulated inside one unstabilized chunk
CHUNK_LOG_COND = 12.0
DEFAULT_CHUNK = 20


class SingularHoppingError(ArithmeticError):
    """Raised when ``B`` is numerically singular at an evaluation point."""


@dataclass(frozen=True)
class ScaledMatrix:
    """The matrix ``exp(log_scale) * unit`` with ``unit`` of spectral norm near one."""

    unit: np.ndarray
    log_scale: float

    @classmethod
    def from_matrix(cls, M) -> "ScaledMatrix":
        M = np.asarray(M, dtype=complex)
        nrm = np.linalg.norm(M, 2)
        if nrm == 0:
            return cls(M, 0.0)
        return cls(M / nrm, float(np.log(nrm)))

    @property
    def matrix(self) -> np.ndarray:
        return np.exp(self.log_scale) * self.unit

    def log_norm(self) -> float:
        return self.log_scale + float(np.log(np.linalg.norm(self.unit, 2)))

    def __matmul__(self, other: "ScaledMatrix") -> "ScaledMatrix":
        out = ScaledMatrix.from_matrix(self.unit @ other.unit)
        return ScaledMatrix(out.unit, out.log_scale + self.log_scale + other.log_scale)

    def log_singular_values(self) -> np.ndarray:
        return self.log_scale + np.log(np.linalg.svd(self.unit, compute_uv=False))


# ---------------------------------------------------------------------------
# single-step matrices

def _phases(model: BlockModel, theta) -> np.ndarray:
    th = np.asarray(theta, dtype=float)
    return th.reshape(-1, model.b)


def _check_hopping(Bz: np.ndarray, theta: np.ndarray, eps, ref: float, step=None) -> None:
    # ref bounds ||B|| on the real torus; comparing against it also covers d = 1
    s = np.linalg.svd(Bz, compute_uv=False)
    bad = s[:, -1] <= max(s[:, 0].max(), ref) / SINGULAR_COND
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        where = f" at step {step}" if step is not None else ""
        raise SingularHoppingError(
            f"cocycle_core: B is numerically singular{where} at theta={theta[i].tolist()}, "
            f"eps={np.atleast_1d(eps).tolist()}")


def transfer_batch(model: BlockModel, E: float, theta, eps=0.0, step=None) -> np.ndarray:
    """Transfer matrices ``[[(E - V) B^{-1}, -B^(*)], [B^{-1}, 0]]`` for a batch of phases.

    Returns an array of shape ``(N, 2d, 2d)``.
    """
    th = _phases(model, theta)
    eps = np.broadcast_to(np.asarray(eps, dtype=float), (model.b,))
    d, N = model.d, th.shape[0]
    Vz = model.V.evaluate(th, eps)
    if model.B.is_constant:
        B0 = model.B.coefficient((0,) * model.b)
        Binv = np.broadcast_to(np.linalg.inv(B0), (N, d, d))
        Bs = np.broadcast_to(model.Bstar.coefficient((0,) * model.b), (N, d, d))
    else:
        Bz = model.B.evaluate(th, eps)
        ref = float(np.sum(np.linalg.norm(model.B.mats, ord=2, axis=(1, 2))))
        _check_hopping(Bz, th, eps, ref, step)
        Binv = np.linalg.inv(Bz)
        Bs = model.Bstar.evaluate(th, eps)
    out = np.zeros((N, 2 * d, 2 * d), dtype=complex)
    out[:, :d, :d] = (E * np.eye(d) - Vz) @ Binv
    out[:, :d, d:] = -Bs
    out[:, d:, :d] = Binv
    return out


def transfer_matrix(model: BlockModel, E: float, z) -> np.ndarray:
    """Single transfer matrix ``M_E(z)``."""
    z = as_phase(z, model.b)
    model.check_strip(z.eps_vec)
    return transfer_batch(model, E, z.theta_vec[None, :], z.eps_vec)[0]


def longrange_step(m: LongRangeModel, E: float, z) -> np.ndarray:
    """Companion matrix advancing the scalar recursion by one site.

    Acts on ``(phi_{n+d-1}, ..., phi_{n-d})`` and returns the vector shifted
    by one site; the first row solves the recursion for ``phi_{n+d}``.
    """
    z = as_phase(z, 1)
    d = m.d
    g = m.g(z)[0, 0]
    row = np.empty(2 * d, dtype=complex)
    for i in range(2 * d):
        k = i - (d - 1)
        row[i] = E - g if k == 0 else -m.hop(k)
    A = np.zeros((2 * d, 2 * d), dtype=complex)
    A[0] = row / m.hop(-d)
    A[1:, :-1] = np.eye(2 * d - 1)
    return A


def symplectic_residual(M) -> float:
    """``|| M^* Omega M - Omega ||`` with ``Omega = [[0, I], [-I, 0]]``."""
    M = np.asarray(M, dtype=complex)
    d = M.shape[0] // 2
    omega = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
    return float(np.linalg.norm(M.conj().T @ omega @ M - omega, 2))


def block_factorization_residual(m: LongRangeModel, E: float, z) -> float:
    """Mismatch between the block transfer matrix and ``d`` conjugated scalar steps."""
    z = as_phase(z, 1)
    d, w = m.d, m.omega.omega[0]
    block = longrange_to_block(m)
    lhs = transfer_matrix(block, E, z)
    prod = np.eye(2 * d, dtype=complex)
    for j in range(d):
        prod = longrange_step(m, E, z.shifted(j * w / d)) @ prod
    B = block.B(z)
    left = np.eye(2 * d, dtype=complex)
    right = np.eye(2 * d, dtype=complex)
    left[:d, :d] = B
    right[:d, :d] = np.linalg.inv(B)
    return float(np.linalg.norm(lhs - left @ prod @ right, 2))


# ---------------------------------------------------------------------------
# products

def monodromy_batch(model: BlockModel, E: float, theta, eps, n: int):
    """Renormalized products ``M_E(z + (n-1) w) ... M_E(z)`` for a batch of phases.

    Returns
    -------
    units : ndarray, shape (N, 2d, 2d)
    log_scales : ndarray, shape (N,)
    """
    if n < 1:
        raise ValueError("monodromy needs n >= 1")
    th = _phases(model, theta)
    w = model.omega.vector
    N, D = th.shape[0], 2 * model.d
    unit = np.broadcast_to(np.eye(D, dtype=complex), (N, D, D)).copy()
    logs = np.zeros(N)
    for j in range(n):
        A = transfer_batch(model, E, (th + j * w) % 1.0, eps, step=j)
        unit = A @ unit
        nrm = np.linalg.norm(unit, ord=2, axis=(1, 2))
        unit /= nrm[:, None, None]
        logs += np.log(nrm)
    return unit, logs


def monodromy(model: BlockModel, E: float, z, n: int) -> ScaledMatrix:
    """``M_{n,E}(z)`` as a :class:`ScaledMatrix`; only the real part of ``z`` is shifted."""
    z = as_phase(z, model.b)
    model.check_strip(z.eps_vec)
    unit, logs = monodromy_batch(model, E, z.theta_vec[None, :], z.eps_vec, n)
    return ScaledMatrix(unit[0], float(logs[0]))


@dataclass
class GradedProduct:
    """Batch of products stored as ``Q diag(exp(s)) T``.

    ``Q`` is unitary, ``s`` holds log scales and ``T`` is a moderately
    conditioned matrix.  This keeps the small singular directions of long
    products that a plain renormalized product loses to roundoff.
    """

    Q: np.ndarray
    s: np.ndarray
    T: np.ndarray

    @classmethod
    def identity(cls, N: int, D: int) -> "GradedProduct":
        eye = np.broadcast_to(np.eye(D, dtype=complex), (N, D, D)).copy()
        return cls(eye, np.zeros((N, D)), eye.copy())

    def absorb(self, C: np.ndarray) -> None:
        """Left-multiply by the batch ``C`` and restratify."""
        N, D, _ = C.shape
        CQ = C @ self.Q
        key = np.log(np.linalg.norm(CQ, axis=1) + 1e-300) + self.s
        perm = np.argsort(-key, axis=1, kind="stable")
        CQp = np.take_along_axis(CQ, perm[:, None, :], axis=2)
        sp = np.take_along_axis(self.s, perm, axis=1)
        Qn, R = np.linalg.qr(CQp)
        diag = np.diagonal(R, axis1=1, axis2=2)
        mag = np.abs(diag)
        mag = np.where(mag > 0, mag, 1e-300)
        phase = diag / mag
        Qn = Qn * phase[:, None, :]
        U = R / diag[:, :, None]
        U = np.triu(U * np.exp(np.triu(sp[:, None, :] - sp[:, :, None])))
        Tp = np.take_along_axis(self.T, perm[:, :, None], axis=1)
        self.Q = Qn
        self.s = np.log(mag) + sp
        self.T = U @ Tp

    def log_exterior_norms(self) -> np.ndarray:
        """``log || wedge^j M ||`` for ``j = 1..D``, shape ``(N, D)``."""
        N, D = self.s.shape
        out = np.empty((N, D))
        for j in range(1, D):
            subsets = list(itertools.combinations(range(D), j))
            idx = np.asarray(subsets)
            S = self.s[:, idx].sum(axis=2)
            Smax = S.max(axis=1)
            rows = self.T[:, idx[:, None, :, None], idx[None, :, None, :]]
            comp = np.linalg.det(rows)
            comp = comp * np.exp(S - Smax[:, None])[:, :, None]
            out[:, j - 1] = Smax + np.log(np.linalg.norm(comp, ord=2, axis=(1, 2)))
        out[:, D - 1] = self.s.sum(axis=1) + np.log(np.abs(np.linalg.det(self.T)))
        return out

    def log_abs_det_minus_identity(self) -> np.ndarray:
        """``log |det(M - I)|`` per batch element, computed row-graded."""
        es = np.exp(np.minimum(self.s, 0.0))
        big = np.maximum(self.s, 0.0)
        Qh = np.conj(np.swapaxes(self.Q, 1, 2))
        inner = es[:, :, None] * self.T - np.exp(-big)[:, :, None] * Qh
        return big.sum(axis=1) + np.log(np.abs(np.linalg.det(inner)))


def chunk_length(model: BlockModel, E: float, eps, budget: float = CHUNK_LOG_COND,
                 cap: int = DEFAULT_CHUNK) -> int:
    """Number of raw transfer steps multiplied between restratifications.

    Chosen from the worst one-step log condition number over a fixed probe set,
    so the choice never depends on how the phase grid is partitioned.
    """
    probe = (np.arange(16) / 16.0)[:, None] * np.ones(model.b)
    A = transfer_batch(model, E, probe, eps)
    s = np.linalg.svd(A, compute_uv=False)
    worst = float(np.max(np.log(s[:, 0] / s[:, -1])))
    return int(np.clip(np.floor(budget / max(worst, 1e-12)), 1, cap))


def graded_monodromy(model: BlockModel, E: float, theta, eps, n: int,
                     chunk: int | None = None) -> GradedProduct:
    """Stratified product ``M_{n,E}`` for a batch of phases at fixed ``eps``."""
    th = _phases(model, theta)
    w = model.omega.vector
    if chunk is None:
        chunk = chunk_length(model, E, eps)
    N, D = th.shape[0], 2 * model.d
    g = GradedProduct.identity(N, D)
    j = 0
    while j < n:
        stop = min(j + chunk, n)
        C = transfer_batch(model, E, (th + j * w) % 1.0, eps, step=j)
        for k in range(j + 1, stop):
            C = transfer_batch(model, E, (th + k * w) % 1.0, eps, step=k) @ C
        g.absorb(C)
        j = stop
    return g


def log_abs_det_monodromy_minus_identity(model: BlockModel, E: float, z, n: int) -> float:
    """``log |det(M_{n,E}(z) - I)|`` from the stratified product."""
    z = as_phase(z, model.b)
    g = graded_monodromy(model, E, z.theta_vec[None, :], z.eps_vec, n)
    return float(g.log_abs_det_minus_identity()[0])
