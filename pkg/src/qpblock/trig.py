"""Matrix-valued trigonometric polynomials on the complexified torus."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .torus import ComplexPhase, as_phase

HERMITIAN_TOL = 1e-12


class TrigMatrixPolynomial:
    """Finite Fourier series ``F(z) = sum_k C_k exp(2 pi i k.z)``.

    Parameters
    ----------
    coeffs : mapping
        Maps integer vectors ``k`` (tuples of length ``b``, or ints when
        ``b = 1``) to ``d x d`` complex matrices.
    dim, torus_dim : int, optional
        Inferred from ``coeffs`` when omitted.
    hermitian : bool
        Declares that ``C_{-k} = C_k^*``; checked on construction.

    Notes
    -----
    Instances are immutable.  Coefficient storage is a pair of arrays: the
    frequency table ``ks`` of shape ``(m, b)`` and ``mats`` of shape
    ``(m, d, d)``.
    """

    __slots__ = ("_ks", "_mats", "_dim", "_b", "_hermitian")

    def __init__(self, coeffs: Mapping, dim: int | None = None, torus_dim: int | None = None,
                 hermitian: bool = False):
        table: dict = {}
        for k, c in coeffs.items():
            key = tuple(int(v) for v in np.atleast_1d(k))
            mat = np.atleast_2d(np.asarray(c, dtype=complex))
            table[key] = table.get(key, 0) + mat
        if not table:
            if dim is None or torus_dim is None:
                raise ValueError("empty polynomial needs explicit dim and torus_dim")
            table = {(0,) * torus_dim: np.zeros((dim, dim), dtype=complex)}
        keys = sorted(table)
        b = len(keys[0])
        if any(len(k) != b for k in keys):
            raise ValueError("inconsistent frequency vector lengths")
        mats = np.stack([table[k] for k in keys])
        if mats.shape[1] != mats.shape[2]:
            raise ValueError("coefficients must be square matrices")
        if dim is not None and mats.shape[1] != dim:
            raise ValueError("coefficient size does not match dim")
        if torus_dim is not None and b != torus_dim:
            raise ValueError("frequency vectors do not match torus_dim")
        self._ks = np.asarray(keys, dtype=np.int64).reshape(len(keys), b)
        self._mats = mats
        self._dim = mats.shape[1]
        self._b = b
        self._hermitian = bool(hermitian)
        self._ks.setflags(write=False)
        self._mats.setflags(write=False)
        if hermitian:
            mirror = {tuple(-k): m.conj().T for k, m in zip(self._ks, self._mats)}
            zero = np.zeros((self._dim, self._dim))
            err = max(np.max(np.abs(mirror.get(tuple(k), zero) - m))
                      for k, m in zip(self._ks, self._mats))
            if err > HERMITIAN_TOL * max(1.0, np.max(np.abs(self._mats))):
                raise ValueError("coefficients violate C[-k] = C[k]^* for a Hermitian polynomial")

    # -- constructors --------------------------------------------------
    @classmethod
    def constant(cls, mat, torus_dim: int = 1, hermitian: bool = False):
        mat = np.atleast_2d(np.asarray(mat, dtype=complex))
        return cls({(0,) * torus_dim: mat}, hermitian=hermitian)

    @classmethod
    def cosine(cls, amplitude: float, dim: int = 1, torus_dim: int = 1, axis: int = 0):
        """``2 * amplitude * cos(2 pi theta_axis)`` times the identity."""
        k = np.zeros(torus_dim, dtype=int)
        k[axis] = 1
        c = amplitude * np.eye(dim)
        return cls({tuple(k): c, tuple(-k): c}, hermitian=True)

    @classmethod
    def exponential(cls, k, mat):
        """Single term ``mat * exp(2 pi i k.theta)``."""
        return cls({tuple(np.atleast_1d(k)): mat})

    # -- basic properties ---------------------------------------------
    @property
    def dim(self) -> int:
        return self._dim

    @property
    def torus_dim(self) -> int:
        return self._b

    @property
    def hermitian(self) -> bool:
        return self._hermitian

    @property
    def ks(self) -> np.ndarray:
        return self._ks

    @property
    def mats(self) -> np.ndarray:
        return self._mats

    @property
    def degree(self) -> int:
        nz = np.any(self._mats != 0, axis=(1, 2))
        if not np.any(nz):
            return 0
        return int(np.max(np.abs(self._ks[nz])))

    @property
    def is_constant(self) -> bool:
        nz = np.any(self._mats != 0, axis=(1, 2))
        return not np.any(np.any(self._ks[nz] != 0, axis=1))

    @property
    def coeffs(self) -> dict:
        return {tuple(int(v) for v in k): m.copy() for k, m in zip(self._ks, self._mats)}

    def coefficient(self, k) -> np.ndarray:
        key = np.asarray(np.atleast_1d(k), dtype=np.int64)
        hit = np.flatnonzero(np.all(self._ks == key, axis=1))
        if hit.size == 0:
            return np.zeros((self._dim, self._dim), dtype=complex)
        return self._mats[hit[0]].copy()

    def coefficient_array(self, ks) -> np.ndarray:
        return np.stack([self.coefficient(k) for k in ks])

    # -- evaluation ----------------------------------------------------
    def evaluate(self, theta, eps=None) -> np.ndarray:
        """Evaluate at a batch of phases.

        Parameters
        ----------
        theta : array_like, shape (N, b) or (N,) for b = 1
        eps : array_like, optional
            Imaginary parts, broadcast against ``theta``.

        Returns
        -------
        ndarray, shape (N, d, d)
        """
        th = np.asarray(theta, dtype=float)
        if th.ndim <= 1 and self._b == 1:
            th = th.reshape(-1, 1)
        th = np.atleast_2d(th)
        if eps is None:
            ep = np.zeros_like(th)
        else:
            ep = np.asarray(eps, dtype=float)
            if ep.ndim == 1 and self._b == 1 and ep.size != 1:
                ep = ep.reshape(-1, 1)
            ep = np.broadcast_to(ep, th.shape)
        phase = 2j * np.pi * (th @ self._ks.T) - 2.0 * np.pi * (ep @ self._ks.T)
        return np.einsum("nm,mij->nij", np.exp(phase), self._mats)

    def __call__(self, z) -> np.ndarray:
        z = as_phase(z, self._b)
        return self.evaluate(z.theta_vec[None, :], z.eps_vec[None, :])[0]

    # -- algebra -------------------------------------------------------
    def star(self) -> "TrigMatrixPolynomial":
        """Analytic continuation of ``F(theta)^*`` off the real torus."""
        table = {tuple(-k): m.conj().T for k, m in zip(self._ks, self._mats)}
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b, hermitian=self._hermitian)

    def shift(self, s) -> "TrigMatrixPolynomial":
        """The polynomial ``theta -> F(theta + s)`` for a real vector ``s``."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        ph = np.exp(2j * np.pi * (self._ks @ s))
        table = {tuple(k): p * m for k, p, m in zip(self._ks, ph, self._mats)}
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b, hermitian=self._hermitian)

    def transpose(self) -> "TrigMatrixPolynomial":
        table = {tuple(k): m.T for k, m in zip(self._ks, self._mats)}
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b)

    def reflect(self) -> "TrigMatrixPolynomial":
        """The polynomial ``theta -> F(-theta)``."""
        table = {tuple(-k): m for k, m in zip(self._ks, self._mats)}
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b)

    def conjugate_by(self, J) -> "TrigMatrixPolynomial":
        """``J F J^{-1}`` coefficientwise."""
        J = np.asarray(J, dtype=complex)
        Ji = np.linalg.inv(J)
        table = {tuple(k): J @ m @ Ji for k, m in zip(self._ks, self._mats)}
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b)

    def _combine(self, other, sign):
        if not isinstance(other, TrigMatrixPolynomial):
            other = TrigMatrixPolynomial.constant(np.asarray(other) * np.eye(self._dim), self._b)
        table = self.coeffs
        for k, m in zip(other.ks, other.mats):
            key = tuple(int(v) for v in k)
            table[key] = table.get(key, 0) + sign * m
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if isinstance(scalar, TrigMatrixPolynomial):
            return self @ scalar
        table = {tuple(k): scalar * m for k, m in zip(self._ks, self._mats)}
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b)

    __rmul__ = __mul__

    def __matmul__(self, other: "TrigMatrixPolynomial") -> "TrigMatrixPolynomial":
        table: dict = {}
        for k1, m1 in zip(self._ks, self._mats):
            for k2, m2 in zip(other.ks, other.mats):
                key = tuple(int(v) for v in k1 + k2)
                table[key] = table.get(key, 0) + m1 @ m2
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b)

    def with_hermitian_flag(self) -> "TrigMatrixPolynomial":
        return TrigMatrixPolynomial(self.coeffs, dim=self._dim, torus_dim=self._b, hermitian=True)

    def pruned(self, tol: float = 0.0) -> "TrigMatrixPolynomial":
        keep = np.max(np.abs(self._mats), axis=(1, 2)) > tol
        table = {tuple(k): m for k, m, f in zip(self._ks, self._mats, keep) if f}
        return TrigMatrixPolynomial(table, dim=self._dim, torus_dim=self._b, hermitian=self._hermitian)

    def __repr__(self) -> str:
        return (f"TrigMatrixPolynomial(dim={self._dim}, torus_dim={self._b}, "
                f"degree={self.degree}, terms={len(self._ks)})")


def block_matrix(entries) -> TrigMatrixPolynomial:
    """Assemble a matrix polynomial from a nested list of scalar polynomials.

    Entries may be scalar :class:`TrigMatrixPolynomial` objects (``dim = 1``)
    or plain numbers.
    """
    rows = len(entries)
    cols = len(entries[0])
    b = 1
    for row in entries:
        for e in row:
            if isinstance(e, TrigMatrixPolynomial):
                b = e.torus_dim
    table: dict = {}
    for i, row in enumerate(entries):
        for j, e in enumerate(row):
            if not isinstance(e, TrigMatrixPolynomial):
                e = TrigMatrixPolynomial.constant([[e]], b)
            for k, m in zip(e.ks, e.mats):
                key = tuple(int(v) for v in k)
                if key not in table:
                    table[key] = np.zeros((rows, cols), dtype=complex)
                table[key][i, j] += m[0, 0]
    return TrigMatrixPolynomial(table, dim=rows, torus_dim=b)


def scalar(value, k=0, torus_dim: int = 1) -> TrigMatrixPolynomial:
    """Scalar monomial ``value * exp(2 pi i k theta)``."""
    key = tuple(np.broadcast_to(np.atleast_1d(k), (torus_dim,)))
    return TrigMatrixPolynomial({key: [[value]]})


def evaluate(F: TrigMatrixPolynomial, z: ComplexPhase) -> np.ndarray:
    """Evaluate ``F`` at a single complex phase."""
    return F(z)


def star_extension(F: TrigMatrixPolynomial) -> TrigMatrixPolynomial:
    """Coefficientwise construction of the analytic extension of ``F^*``."""
    return F.star()
