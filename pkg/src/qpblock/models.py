"""Block Jacobi models: the model bundle, named constructors and symmetry checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gcd
from typing import Callable

import numpy as np

from .torus import Frequency
from .trig import TrigMatrixPolynomial, block_matrix, scalar

#: condition number above which a hopping matrix is treated as singular
SINGULAR_COND = 1e14
ORTHONORMAL_TOL = 1e-12
GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def as_frequency(omega) -> Frequency:
    if isinstance(omega, Frequency):
        return omega
    return Frequency(tuple(np.atleast_1d(np.asarray(omega, dtype=float))))


@dataclass(frozen=True)
class BlockModel:
    """Hopping ``B`` and potential ``V`` of a quasi-periodic block Jacobi operator.

    The operator acts on sequences of ``d``-vectors by
    ``B(theta+(n+1)w) Phi_{n+1} + B^(*)(theta+n w) Phi_{n-1} + V(theta+n w) Phi_n``.

    Attributes
    ----------
    eta : float
        Upper edge of the strip of imaginary offsets on which the model is used.
    eps_min : float, optional
        Lower edge of that strip; defaults to ``-eta``.  Models whose hopping
        degenerates on one side of the real torus narrow it.
    """

    B: TrigMatrixPolynomial
    V: TrigMatrixPolynomial
    omega: Frequency
    eta: float = 1.0
    label: str = ""
    eps_min: float | None = None
    Bstar: TrigMatrixPolynomial = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "omega", as_frequency(self.omega))
        if self.eps_min is None:
            object.__setattr__(self, "eps_min", -float(self.eta))
        if self.B.dim != self.V.dim:
            raise ValueError("B and V must have the same block size")
        if not (self.B.torus_dim == self.V.torus_dim == self.omega.b):
            raise ValueError("torus dimension mismatch between B, V and omega")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if not self.V.hermitian:
            object.__setattr__(self, "V", self.V.with_hermitian_flag())
        object.__setattr__(self, "Bstar", self.B.star())
        self.validate()

    @property
    def d(self) -> int:
        return self.B.dim

    @property
    def b(self) -> int:
        return self.omega.b

    @property
    def constant_hopping(self) -> bool:
        return self.B.is_constant

    def check_strip(self, eps) -> None:
        eps = np.atleast_1d(np.asarray(eps, dtype=float))
        if np.any(eps > self.eta + 1e-12) or np.any(eps < self.eps_min - 1e-12):
            raise ValueError(
                f"imaginary offset {eps.tolist()} outside the model strip "
                f"[{self.eps_min}, {self.eta}]")

    def validate(self, grid: int = 64, eps_samples: int = 5) -> None:
        """Sample ``det B`` on the strip and raise if it degenerates."""
        if self.B.is_constant:
            s = np.linalg.svd(self.B.coefficient((0,) * self.b), compute_uv=False)
            if s[-1] <= s[0] / SINGULAR_COND:
                raise ValueError("hopping matrix B is singular")
            return
        th = _validation_grid(self.b, grid)
        for e in np.linspace(self.eps_min, self.eta, eps_samples):
            s = np.linalg.svd(self.B.evaluate(th, e), compute_uv=False)
            # relative to the largest singular value on the sample, so d = 1 is covered
            if np.any(s[:, -1] <= s[:, 0].max() / SINGULAR_COND):
                raise ValueError(f"hopping matrix B is singular on the strip near eps={e:.4g}")


def _validation_grid(b: int, grid: int) -> np.ndarray:
    axes = [np.arange(grid) / grid] * b
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, b)


@dataclass(frozen=True)
class LongRangeModel:
    """Scalar operator with finite-range hopping and a quasi-periodic potential.

    ``sum_{1<=|k|<=d} v_k phi_{n-k} + g(theta + n w/d) phi_n`` with
    ``v_{-k} = conj(v_k)``.
    """

    v: tuple
    g: TrigMatrixPolynomial
    omega: Frequency
    eta: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "omega", as_frequency(self.omega))
        object.__setattr__(self, "v", tuple(complex(x) for x in self.v))
        if self.omega.b != 1:
            raise ValueError("long-range models use a single frequency")
        if not self.v or self.v[-1] == 0:
            raise ValueError("the longest hopping v_d must be nonzero")
        if self.g.dim != 1 or not self.g.hermitian:
            raise ValueError("g must be a real-valued scalar trigonometric polynomial")
        if self.g.is_constant:
            raise ValueError("g must be non-constant")

    @property
    def d(self) -> int:
        return len(self.v)

    def hop(self, k: int) -> complex:
        """``v_k`` for ``1 <= |k| <= d``."""
        if k > 0:
            return self.v[k - 1]
        return np.conj(self.v[-k - 1])


def longrange_to_block(m: LongRangeModel) -> BlockModel:
    """Regroup a range-``d`` scalar operator into ``d x d`` blocks."""
    d, w = m.d, m.omega.omega[0]
    V = None
    for i in range(d):
        unit = np.zeros((d, d))
        unit[i, i] = 1.0
        gi = m.g.shift((d - 1 - i) * w / d)
        term = TrigMatrixPolynomial({k: c[0, 0] * unit for k, c in gi.coeffs.items()})
        V = term if V is None else V + term
    hop = np.zeros((d, d), dtype=complex)
    Bc = np.zeros((d, d), dtype=complex)
    for i in range(d):
        for j in range(i + 1, d):
            hop[i, j] = m.hop(j - i)
            hop[j, i] = np.conj(m.hop(j - i))
        for j in range(i, d):
            Bc[i, j] = np.conj(m.hop(d - (j - i)))
    V = (V + TrigMatrixPolynomial.constant(hop)).with_hermitian_flag()
    return BlockModel(TrigMatrixPolynomial.constant(Bc), V, m.omega, eta=m.eta,
                      label=f"long-range d={d}")


# ---------------------------------------------------------------------------
# named constructors

def make_amo(lam: float, omega=GOLDEN, eta: float = 1.0) -> BlockModel:
    """Almost Mathieu operator ``phi_{n+1} + phi_{n-1} + 2 lam cos(2 pi(theta+n w)) phi_n``."""
    B = TrigMatrixPolynomial.constant([[1.0]])
    V = TrigMatrixPolynomial.cosine(lam)
    return BlockModel(B, V, as_frequency(omega), eta=eta, label=f"amo lam={lam:g}")


def make_free(omega=GOLDEN, eta: float = 1.0) -> BlockModel:
    """Discrete Laplacian as a ``d = 1`` block model."""
    B = TrigMatrixPolynomial.constant([[1.0]])
    V = TrigMatrixPolynomial.constant([[0.0]], hermitian=True)
    return BlockModel(B, V, as_frequency(omega), eta=eta, label="free")


def make_xy(rho: float, v: TrigMatrixPolynomial | None = None, omega=GOLDEN,
            eta: float = 1.0) -> BlockModel:
    """Anisotropic XY chain: ``B = [[1, rho], [-rho, -1]]``, ``V = diag(v, -v)``."""
    if abs(abs(rho) - 1.0) < 1e-12:
        raise ValueError("XY hopping is singular at |rho| = 1")
    if v is None:
        v = TrigMatrixPolynomial.cosine(1.0)
    B = TrigMatrixPolynomial.constant([[1.0, rho], [-rho, -1.0]])
    V = block_matrix([[v, 0.0], [0.0, -v]]).with_hermitian_flag()
    return BlockModel(B, V, as_frequency(omega), eta=eta, label=f"xy rho={rho:g}")


def make_skewshift_dual(lam: float, p: int, q: int, y=GOLDEN, eta: float = 3.0) -> BlockModel:
    """Dual block model of the skew-shift operator with rational ``p/q``.

    Blocks are indexed ``j = q-1, ..., 0`` from top to bottom.
    """
    if q < 3:
        raise ValueError("skew-shift dual requires q >= 3 (q <= 2 reduces to a scalar model)")
    if gcd(p, q) != 1:
        raise ValueError("p/q must be in lowest terms")
    if lam == 0:
        raise ValueError("lam = 0 makes the dual hopping singular")
    js = np.arange(q - 1, -1, -1)
    B = TrigMatrixPolynomial.constant(lam * np.diag(np.exp(2j * np.pi * (js * (js - 1) * p % q) / q)))
    up = np.zeros((q, q))
    for i in range(q - 1):
        up[i, i + 1] = 1.0
    up[q - 1, 0] = 1.0
    V = TrigMatrixPolynomial({(1,): up, (-1,): up.T}, hermitian=True)
    return BlockModel(B, V, as_frequency(y), eta=eta, label=f"skew-dual lam={lam:g} p/q={p}/{q}")


def make_dirac_harper(lam: float, omega=GOLDEN, eta: float = 1.0) -> BlockModel:
    """Four-band Dirac-Harper model with permutation hopping."""
    swap = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float)

    def shifted_cos(phase):
        # 2 cos(2 pi theta + phase)
        return scalar(np.exp(1j * phase), 1) + scalar(np.exp(-1j * phase), -1)

    a11 = 1.0 + shifted_cos(0.0)
    a12 = 1.0 - shifted_cos(-np.pi / 3)
    a21 = 1.0 + shifted_cos(np.pi / 3)
    A = [[a11, a12], [a21, a11]]
    V1 = block_matrix([[0.0, 0.0, A[0][0], A[0][1]],
                       [0.0, 0.0, A[1][0], A[1][1]],
                       [A[0][0], A[1][0], 0.0, 0.0],
                       [A[0][1], A[1][1], 0.0, 0.0]])
    V = (TrigMatrixPolynomial.constant(swap) + lam * V1).with_hermitian_flag()
    return BlockModel(TrigMatrixPolynomial.constant(swap), V, as_frequency(omega), eta=eta,
                      label=f"dirac-harper lam={lam:g}")


def make_coupled_harper(l1: float, l2: float, eps: float, omega=GOLDEN, eta: float = 1.0) -> BlockModel:
    """Two Harper chains with potentials ``2 l1 cos`` and ``2 l2 cos`` coupled by ``eps``."""
    c1 = TrigMatrixPolynomial.cosine(l1)
    c2 = TrigMatrixPolynomial.cosine(l2)
    V = block_matrix([[c1, eps], [eps, c2]]).with_hermitian_flag()
    return BlockModel(TrigMatrixPolynomial.constant(np.eye(2)), V, as_frequency(omega), eta=eta,
                      label=f"coupled-harper l1={l1:g} l2={l2:g} eps={eps:g}")


@dataclass(frozen=True)
class TridiagonalBlocks:
    """A block operator ``(H U)_m = P_m U_{m+1} + D_m U_m + Q_m U_{m-1}``.

    ``P``, ``D``, ``Q`` are trig polynomials sampled at ``theta + m*omega``.
    """

    P: TrigMatrixPolynomial
    D: TrigMatrixPolynomial
    Q: TrigMatrixPolynomial
    omega: Frequency

    def square_with_adjoint(self) -> tuple:
        """Hopping and potential of ``H H^*`` written in block Jacobi form."""
        w = np.asarray(self.omega.omega)
        P, D, Q = self.P, self.D, self.Q
        Ps, Ds, Qs = P.star(), D.star(), Q.star()
        far = P @ Qs.shift(2 * w)
        if np.max(np.abs(far.mats)) > 1e-14:
            raise ValueError("H H^* is not tridiagonal for these blocks")
        B = P.shift(-w) @ Ds + D.shift(-w) @ Qs
        V = P @ Ps + D @ Ds + Q @ Qs
        return B.pruned(), V.pruned().with_hermitian_flag()


def graphene_blocks(stacking: str, l1: float, l2: float, l3: float, rho: float,
                    omega=GOLDEN) -> TridiagonalBlocks:
    """Blocks of the half-operator ``H_hat`` of stacked bilayer graphene.

    ``c(theta) = l1 + l3 e^{2 pi i theta}`` and ``d(theta) = l1 + l3 e^{-2 pi i theta}``.
    """
    omega = as_frequency(omega)
    w = omega.omega[0]
    c = scalar(l1) + scalar(l3, 1)
    dd = scalar(l1) + scalar(l3, -1)
    if stacking.upper() == "AA":
        P = TrigMatrixPolynomial.constant([[0.0, 0.0], [0.0, l2]])
        D = block_matrix([[c, rho], [rho, dd]])
        Q = TrigMatrixPolynomial.constant([[l2, 0.0], [0.0, 0.0]])
    elif stacking.upper() == "AB":
        P = TrigMatrixPolynomial.constant(np.zeros((2, 2)))
        D = block_matrix([[dd, 0.0], [rho, np.exp(-2j * np.pi * w / 3) * dd.shift(-w)]])
        Q = TrigMatrixPolynomial.constant(l2 * np.eye(2))
    else:
        raise ValueError(f"unknown stacking {stacking!r}")
    return TridiagonalBlocks(P, D, Q, omega)


def _graphene_strip(sing: float, eta: float) -> tuple:
    # det B vanishes only on the line eps = sing; keep the strip on the side containing 0
    margin = 0.05
    if abs(sing) >= eta + margin:
        return eta, -eta
    if sing > 0:
        hi = sing - margin
        if hi <= 0:
            raise ValueError("hopping degenerates too close to the real torus")
        return hi, -hi
    return eta, max(-eta, sing + margin)


def make_aa(l1: float, l2: float, l3: float, rho: float, omega=GOLDEN, eta: float = 1.0) -> BlockModel:
    """``H_hat H_hat^*`` for AA-stacked bilayer graphene as a block model."""
    if min(abs(l1), abs(l2), abs(l3)) == 0 or abs(l1) == abs(l3):
        raise ValueError("AA model needs nonzero couplings with |l1| != |l3|")
    B, V = graphene_blocks("AA", l1, l2, l3, rho, omega).square_with_adjoint()
    top, low = _graphene_strip(-np.log(abs(l1 / l3)) / (2 * np.pi), eta)
    return BlockModel(B, V, as_frequency(omega), eta=top, eps_min=low,
                      label=f"graphene-AA l=({l1:g},{l2:g},{l3:g}) rho={rho:g}")


def make_ab(l1: float, l2: float, l3: float, rho: float, omega=GOLDEN, eta: float = 1.0) -> BlockModel:
    """``H_hat H_hat^*`` for AB-stacked bilayer graphene as a block model."""
    if min(abs(l1), abs(l2), abs(l3)) == 0 or abs(l1) == abs(l3):
        raise ValueError("AB model needs nonzero couplings with |l1| != |l3|")
    B, V = graphene_blocks("AB", l1, l2, l3, rho, omega).square_with_adjoint()
    top, low = _graphene_strip(np.log(abs(l1 / l3)) / (2 * np.pi), eta)
    return BlockModel(B, V, as_frequency(omega), eta=top, eps_min=low,
                      label=f"graphene-AB l=({l1:g},{l2:g},{l3:g}) rho={rho:g}")


# ---------------------------------------------------------------------------
# symmetry verifiers

def j_preset(name: str, d: int) -> np.ndarray:
    """Standard reflection matrices: ``identity``, ``alternating`` or ``antidiagonal``."""
    if name == "identity":
        return np.eye(d)
    if name == "alternating":
        return np.diag((-1.0) ** np.arange(d))
    if name == "antidiagonal":
        return np.eye(d)[::-1]
    raise ValueError(f"unknown J preset {name!r}")


def verify_J_symmetry(model: BlockModel, J, shift: float = 0.0, grid: int = 64) -> float:
    """Residual of ``J V(theta+s) J^{-1} = V(-theta+s)^T`` and ``J B J^{-1} = B^T``.

    Parameters
    ----------
    shift : float
        Phase offset ``s``; long-range models need ``s = -(d-1) w / (2d)``.
    """
    J = np.asarray(J, dtype=complex)
    if np.max(np.abs(J @ J.conj().T - np.eye(model.d))) > ORTHONORMAL_TOL:
        raise ValueError("J must be unitary")
    if not model.B.is_constant:
        raise ValueError("J-symmetry check requires constant B")
    Ji = J.conj().T
    th = _validation_grid(model.b, grid)
    s = np.full(model.b, shift)
    lhs = J @ model.V.evaluate(th + s) @ Ji
    rhs = np.swapaxes(model.V.evaluate(-th + s), 1, 2)
    Bm = model.B.coefficient((0,) * model.b)
    res_v = np.max(np.linalg.norm(lhs - rhs, ord=2, axis=(1, 2)))
    return float(res_v + np.linalg.norm(J @ Bm @ Ji - Bm.T, ord=2))


def verify_f_periodicity(model: BlockModel, E: float, n: int, period_denom: int,
                         grid: int = 64) -> float:
    """Max relative change of ``f_{E,n}`` under ``theta -> theta + 1/period_denom``."""
    from .finite_volume import determinant_values

    if n < 3:
        raise ValueError("periodic determinants require n >= 3")
    th = _validation_grid(model.b, grid)
    f0 = determinant_values(model, E, n, th)
    f1 = determinant_values(model, E, n, th + 1.0 / period_denom)
    return float(np.max(np.abs(f1 - f0) / (1.0 + np.abs(f0))))


# ---------------------------------------------------------------------------
# configuration

CONSTRUCTORS: dict[str, Callable[..., BlockModel]] = {
    "amo": make_amo,
    "free": make_free,
    "xy": make_xy,
    "skewshift_dual": make_skewshift_dual,
    "dirac_harper": make_dirac_harper,
    "coupled_harper": make_coupled_harper,
    "aa": make_aa,
    "ab": make_ab,
}


def _coefficient_table(rows, d: int, b: int) -> TrigMatrixPolynomial:
    table: dict = {}
    for row in rows:
        if len(row) != b + 4:
            raise ValueError(f"coefficient rows need {b + 4} entries (k..., row, col, re, im)")
        k = tuple(int(x) for x in row[:b])
        i, j = int(row[b]), int(row[b + 1])
        if not (0 <= i < d and 0 <= j < d):
            raise ValueError(f"coefficient index ({i}, {j}) outside a {d}x{d} block")
        table.setdefault(k, np.zeros((d, d), dtype=complex))
        table[k][i, j] += complex(float(row[b + 2]), float(row[b + 3]))
    return TrigMatrixPolynomial(table, dim=d, torus_dim=b)


def model_from_config(spec: dict) -> BlockModel:
    """Build a :class:`BlockModel` from a JSON-style mapping.

    Either ``{"constructor": name, "params": {...}, "omega": ..., "eta": ...}``
    or ``{"d": d, "b": b, "omega": [...], "eta": ..., "coefficients":
    {"B": rows, "V": rows}}`` with rows ``(k_1..k_b, row, col, re, im)``.
    A long-range model is given by ``{"constructor": "longrange", "params":
    {"v": [[re, im], ...], "g_cos": amplitude}}``.
    """
    spec = dict(spec)
    omega = spec.get("omega", GOLDEN)
    name = spec.get("constructor")
    params = dict(spec.get("params", {}))
    extra = {"eta": float(spec["eta"])} if "eta" in spec else {}
    if name == "longrange":
        v = [complex(*x) if isinstance(x, (list, tuple)) else complex(x) for x in params["v"]]
        g = TrigMatrixPolynomial.cosine(float(params.get("g_cos", 1.0)))
        return longrange_to_block(LongRangeModel(tuple(v), g, as_frequency(omega), **extra))
    if name is not None:
        if name not in CONSTRUCTORS:
            raise ValueError(f"unknown model constructor {name!r}")
        if name == "skewshift_dual":
            params.setdefault("y", omega)
        else:
            params.setdefault("omega", omega)
        if name == "xy" and "v_cos" in params:
            params["v"] = TrigMatrixPolynomial.cosine(float(params.pop("v_cos")))
        return CONSTRUCTORS[name](**params, **extra)
    if "coefficients" not in spec:
        raise ValueError("model config needs a constructor or a coefficient table")
    d, b = int(spec["d"]), int(spec["b"])
    freq = as_frequency(omega)
    if freq.b != b:
        raise ValueError("omega length does not match b")
    coeffs = spec["coefficients"]
    B = _coefficient_table(coeffs["B"], d, b)
    V = TrigMatrixPolynomial(_coefficient_table(coeffs["V"], d, b).coeffs, dim=d, torus_dim=b,
                             hermitian=True)
    return BlockModel(B, V, freq, eta=float(spec.get("eta", 1.0)), label=spec.get("label", "custom"))
