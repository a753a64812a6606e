"""Torus points, frequency vectors and finite-horizon arithmetic predicates."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


def torus_norm(x) -> np.ndarray:
    """Euclidean distance from ``x`` to the integer lattice.

    The last axis of ``x`` holds the torus coordinates; scalars and 1-d
    inputs of length ``b`` are treated as single points.  The distance is the
    minimum over the ``3**b`` integer translates surrounding ``floor(x)``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    base = x - np.floor(x)
    b = x.shape[-1]
    best = np.full(x.shape[:-1], np.inf)
    for shift in itertools.product((-1.0, 0.0, 1.0), repeat=b):
        dist = np.sqrt(np.sum((base - np.asarray(shift)) ** 2, axis=-1))
        best = np.minimum(best, dist)
    return best


def circle_dist(x) -> np.ndarray:
    """Distance from real numbers to the nearest integer, elementwise."""
    x = np.asarray(x, dtype=float)
    return np.abs(x - np.round(x))


@dataclass(frozen=True)
class Frequency:
    """A frequency vector on the ``b``-torus with Diophantine test constants.

    Parameters
    ----------
    omega : sequence of float or float
        Components are reduced mod 1 on construction.
    dioph_a, dioph_A : float
        Constants of the finite Diophantine check ``||k.omega|| >= a/|k|^A``.
    check_horizon : int
        Largest sup-norm of ``k`` examined by :func:`is_diophantine_finite`.
    """

    omega: tuple
    dioph_a: float = 0.01
    dioph_A: float = 3.0
    check_horizon: int = 200

    def __post_init__(self):
        om = np.atleast_1d(np.asarray(self.omega, dtype=float)) % 1.0
        object.__setattr__(self, "omega", tuple(float(w) for w in om))
        if self.check_horizon < 1:
            raise ValueError("check_horizon must be >= 1")

    @property
    def b(self) -> int:
        return len(self.omega)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.omega, dtype=float)

    @classmethod
    def golden(cls, **kw) -> "Frequency":
        return cls(((np.sqrt(5.0) - 1.0) / 2.0,), **kw)


@dataclass(frozen=True)
class ComplexPhase:
    """A point ``theta + i*eps`` of the complexified torus."""

    theta: tuple
    eps: tuple = field(default=None)

    def __post_init__(self):
        th = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if self.eps is None:
            ep = np.zeros_like(th)
        else:
            ep = np.atleast_1d(np.asarray(self.eps, dtype=float))
            if ep.size == 1 and th.size > 1:
                ep = np.full_like(th, ep[0])
        if ep.shape != th.shape:
            raise ValueError("theta and eps must have the same length")
        object.__setattr__(self, "theta", tuple(float(t) for t in th))
        object.__setattr__(self, "eps", tuple(float(e) for e in ep))

    @property
    def b(self) -> int:
        return len(self.theta)

    @property
    def theta_vec(self) -> np.ndarray:
        return np.asarray(self.theta)

    @property
    def eps_vec(self) -> np.ndarray:
        return np.asarray(self.eps)

    @property
    def is_real(self) -> bool:
        return not np.any(self.eps_vec)

    def shifted(self, s) -> "ComplexPhase":
        """Return the phase translated by the real vector ``s`` (eps unchanged)."""
        return ComplexPhase(tuple(self.theta_vec + np.asarray(s, dtype=float)), self.eps)


def as_phase(z, b: int = 1) -> ComplexPhase:
    """Coerce a float, a complex number or a :class:`ComplexPhase` to a phase."""
    if isinstance(z, ComplexPhase):
        return z
    if np.iscomplexobj(z):
        z = np.atleast_1d(np.asarray(z))
        return ComplexPhase(tuple(z.real), tuple(z.imag))
    th = np.atleast_1d(np.asarray(z, dtype=float))
    if th.size == 1 and b > 1:
        th = np.full(b, th[0])
    return ComplexPhase(tuple(th))


def _integer_vectors(b: int, horizon: int):
    """Yield blocks of nonzero integer vectors with sup-norm <= horizon.

    Only one of each pair ``{k, -k}`` is produced, since both give the same
    torus distance.  Vectors are yielded in slices of the first coordinate so
    memory stays bounded for ``b = 3``.
    """
    rng = np.arange(-horizon, horizon + 1)
    for k0 in range(0, horizon + 1):
        if b == 1:
            if k0 > 0:
                yield np.array([[k0]])
            continue
        rest = np.array(list(itertools.product(rng, repeat=b - 1)))
        block = np.column_stack([np.full(len(rest), k0), rest])
        if k0 == 0:
            # keep the half with first nonzero coordinate positive
            first = np.argmax(rest != 0, axis=1)
            lead = rest[np.arange(len(rest)), first]
            block = block[lead > 0]
        yield block


def is_diophantine_finite(omega: Frequency) -> bool:
    """Check ``||k.omega|| >= a/|k|^A`` for all ``0 < |k|_inf <= K``."""
    a, A, K = omega.dioph_a, omega.dioph_A, omega.check_horizon
    if a <= 0:
        raise ValueError("Diophantine constant a must be positive")
    if A <= omega.b:
        raise ValueError("Diophantine exponent A must exceed the torus dimension")
    w = omega.vector
    for block in _integer_vectors(omega.b, K):
        if block.size == 0:
            continue
        dist = circle_dist(block @ w)
        size = np.max(np.abs(block), axis=1).astype(float)
        if np.any(dist < a / size**A):
            return False
    return True


def is_nonresonant_phase(
    theta: float,
    omega: Frequency,
    a_prime: float,
    t: float,
    denom: int = 1,
    horizon: int = 1000,
    include_zero: bool = True,
) -> bool:
    """Check ``||2 theta - n omega|| >= a'/(1+|n|)^t`` for ``n`` in ``Z/denom``.

    ``include_zero=False`` drops the ``n = 0`` term, which otherwise excludes
    ``theta`` in ``{0, 1/2}`` outright.
    """
    if t <= 1:
        raise ValueError("exponent t must exceed 1")
    if horizon < 1 or denom < 1:
        raise ValueError("horizon and denom must be positive")
    if omega.b != 1:
        raise ValueError("phase resonance is defined for one-frequency models")
    m = np.arange(-horizon * denom, horizon * denom + 1)
    if not include_zero:
        m = m[m != 0]
    n = m / denom
    dist = circle_dist(2.0 * theta - n * omega.omega[0])
    return bool(np.all(dist >= a_prime / (1.0 + np.abs(n)) ** t))


class AdmissibleScales(NamedTuple):
    scales: list
    max_gap: int


def admissible_scales(omega: Frequency, kappa0: float, n_min: int, n_max: int) -> AdmissibleScales:
    """All ``n`` in ``[n_min, n_max]`` with ``||n omega|| <= kappa0``.

    ``max_gap`` is the largest difference between consecutive returned scales
    (0 when fewer than two scales are found).
    """
    if not 0 < kappa0 <= 0.5:
        raise ValueError("kappa0 must lie in (0, 1/2]")
    if n_min < 1:
        raise ValueError("n_min must be >= 1")
    n = np.arange(n_min, n_max + 1)
    dist = torus_norm(np.outer(n, omega.vector))
    scales = [int(k) for k in n[dist <= kappa0]]
    gap = int(np.max(np.diff(scales))) if len(scales) > 1 else 0
    return AdmissibleScales(scales, gap)


def epsilon_resonances(theta: float, y: Frequency, q: int, eps_exp: float, horizon: int) -> list:
    """Resonant indices ``k`` of ``theta`` relative to the rotation ``y``.

    ``k`` qualifies when ``||q(2 theta - k y)|| <= exp(-|k|^eps_exp)`` and the
    distance is minimal among all ``|j| <= |k|``.  The result is ordered by
    ``|k|`` and then by ``k``.
    """
    if y.b != 1:
        raise ValueError("resonances are defined for a single frequency")
    if not 0 < eps_exp < 1:
        raise ValueError("eps_exp must lie in (0, 1)")
    if q < 1 or horizon < 1:
        raise ValueError("q and horizon must be positive")
    out = []
    running = np.inf
    for size in range(horizon + 1):
        ks = [0] if size == 0 else [-size, size]
        dists = {k: float(circle_dist(q * (2.0 * theta - k * y.omega[0]))) for k in ks}
        running = min(running, *dists.values())
        for k in ks:
            if dists[k] <= np.exp(-(abs(k) ** eps_exp)) and dists[k] <= running:
                out.append(k)
    return out


def phase_grid(b: int, size: int) -> np.ndarray:
    """Deterministic quadrature nodes on ``T^b``, shape ``(size, b)``.

    Equispaced for ``b = 1``; for ``b >= 2`` a rank-1 lattice with a
    Korobov-type generator built from powers of ``round(size * golden)``.
    """
    k = np.arange(size)
    if b == 1:
        return (k / size)[:, None]
    a = max(1, int(round(size * (np.sqrt(5.0) - 1.0) / 2.0)))
    gen = np.array([pow(a, i, size) if size > 1 else 0 for i in range(b)], dtype=np.int64)
    gen[0] = 1
    return (np.outer(k, gen) % size) / size
