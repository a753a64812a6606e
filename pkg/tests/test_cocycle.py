import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpblock.cocycle import (GradedProduct, SingularHoppingError, block_factorization_residual,
                             graded_monodromy, log_abs_det_monodromy_minus_identity, longrange_step,
                             monodromy, symplectic_residual, transfer_batch, transfer_matrix)
from qpblock.models import (GOLDEN, LongRangeModel, make_aa, make_amo, make_coupled_harper,
                            make_free, make_skewshift_dual, make_xy)
from qpblock.torus import ComplexPhase
from qpblock.trig import TrigMatrixPolynomial


def _mp_product(lam, E, theta, n, dps=60):
    # extended-precision AMO monodromy, independent of the library
    mpmath.mp.dps = dps
    w = (mpmath.sqrt(5) - 1) / 2
    M = mpmath.eye(2)
    for j in range(n):
        a = E - 2 * lam * mpmath.cos(2 * mpmath.pi * (theta + j * w))
        M = mpmath.matrix([[a, -1], [1, 0]]) * M
    return M


def test_transfer_examples():
    assert np.allclose(transfer_matrix(make_free(), 0.0, 0.0), [[0, -1], [1, 0]])
    lam, E, th = 1.3, 0.4, 0.27
    M = transfer_matrix(make_amo(lam), E, th)
    assert np.allclose(M, [[E - 2 * lam * np.cos(2 * np.pi * th), -1], [1, 0]])
    rho = 0.3
    M = transfer_matrix(make_xy(rho), 0.0, 0.0)
    a, b, c, d = 1.0, rho, -rho, -1.0
    Binv = np.array([[d, -b], [-c, a]]) / (a * d - b * c)
    assert np.allclose(M[:2, :2], -np.diag([2.0, -2.0]) @ Binv)
    assert np.allclose(M[2:, :2], Binv)
    assert np.allclose(M[:2, 2:], -np.array([[1.0, -rho], [rho, -1.0]]))


def test_transfer_strip_and_singular_hopping():
    with pytest.raises(ValueError):
        transfer_matrix(make_amo(2.0), 0.0, ComplexPhase((0.1,), (1.5,)))
    # c(z) = 10 + e^{2 pi i z} vanishes at z = 1/2 - i log(10)/(2 pi)
    m = make_aa(10.0, 1.0, 1.0, 0.5)
    with pytest.raises(SingularHoppingError, match="theta"):
        transfer_batch(m, 0.3, [[0.5]], -np.log(10.0) / (2 * np.pi))


def test_longrange_step_examples():
    v1 = 0.6 + 0.3j
    lr = LongRangeModel((v1,), TrigMatrixPolynomial.cosine(1.0), GOLDEN)
    E, th = 0.4, 0.2
    g = 2 * np.cos(2 * np.pi * th)
    assert np.allclose(longrange_step(lr, E, th),
                       [[(E - g) / np.conj(v1), -v1 / np.conj(v1)], [1, 0]])
    lr2 = LongRangeModel((0.0, 1.0), TrigMatrixPolynomial.cosine(1.0), GOLDEN)
    A = longrange_step(lr2, E, th)
    assert np.allclose(A[0], [0, E - g, 0, -1])
    assert np.allclose(A[1:, :-1], np.eye(3)) and np.allclose(A[1:, -1], 0)


@given(st.integers(0, 10_000))
def test_longrange_step_unimodular(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    v = tuple(rng.standard_normal(d) + 1j * rng.standard_normal(d))
    lr = LongRangeModel(v, TrigMatrixPolynomial.cosine(rng.uniform(0.2, 3)), GOLDEN)
    A = longrange_step(lr, rng.uniform(-3, 3), rng.random())
    assert abs(abs(np.linalg.det(A)) - 1.0) < 1e-10


def test_monodromy_examples():
    m = make_amo(2.0)
    one = monodromy(m, 0.3, 0.1, 1)
    assert np.allclose(one.matrix, transfer_matrix(m, 0.3, 0.1))
    assert np.allclose(monodromy(make_free(), 0.0, 0.0, 2).matrix, -np.eye(2))
    M = monodromy(m, 0.0, 0.1, 100)
    ref = _mp_product(2.0, 0, mpmath.mpf("0.1"), 100)
    svd = mpmath.svd_r(ref, compute_uv=False)
    ref_log = float(mpmath.log(max(svd)))
    assert M.log_norm() == pytest.approx(ref_log, abs=1e-9)
    assert abs(M.log_norm() / 100 - np.log(2.0)) < 0.15


def test_symplectic_examples():
    assert symplectic_residual([[0, -1], [1, 0]]) == 0.0
    for model in (make_amo(2.0), make_xy(0.3), make_skewshift_dual(0.8, 1, 3),
                  make_coupled_harper(0.4, 0.7, 0.1)):
        M = monodromy(model, 0.37, 0.21, 12).matrix
        assert symplectic_residual(M) < 1e-10 * np.linalg.norm(M, 2) ** 2
    M = transfer_matrix(make_amo(2.0), 0.3, ComplexPhase((0.2,), (0.1,)))
    assert symplectic_residual(M) > 1e-3


@pytest.mark.parametrize("d,eps", [(1, 0.0), (2, 0.0), (3, 0.05)])
def test_block_factorization(d, eps):
    rng = np.random.default_rng(d)
    v = (0.5, 1.0) if d == 2 else tuple(rng.standard_normal(d) + 1j * rng.standard_normal(d))
    lr = LongRangeModel(v, TrigMatrixPolynomial.cosine(1.0), GOLDEN)
    for _ in range(10):
        z = ComplexPhase((rng.random(),), (eps,))
        assert block_factorization_residual(lr, 0.7, z) < (1e-12 if d == 1 else 1e-9)


@given(st.integers(1, 15), st.integers(1, 15), st.floats(0, 1), st.floats(-3, 3))
def test_cocycle_law(n, m, theta, E):
    model = make_coupled_harper(0.8, 1.3, 0.2)
    a = monodromy(model, E, theta, n)
    b = monodromy(model, E, theta + n * GOLDEN, m)
    c = monodromy(model, E, theta, n + m)
    rhs = b.unit @ a.unit
    scale = b.log_scale + a.log_scale - c.log_scale
    assert np.allclose(c.unit, np.exp(scale) * rhs, atol=1e-9)


@given(st.integers(0, 10_000))
def test_transfer_determinant(seed):
    rng = np.random.default_rng(seed)
    m = make_aa(1.3, 0.9, 0.6, 0.4)
    th = rng.random()
    M = transfer_matrix(m, rng.uniform(-3, 3), th)
    B = m.B.evaluate([[th]])[0]
    Bs = m.Bstar.evaluate([[th]])[0]
    det = np.linalg.det(M)
    assert det == pytest.approx(np.linalg.det(Bs) / np.linalg.det(B), rel=1e-10)
    assert abs(det) == pytest.approx(1.0, rel=1e-10)


@pytest.mark.parametrize("model", [make_xy(0.3), make_coupled_harper(0.4, 0.7, 0.1),
                                   make_aa(1.3, 0.9, 0.6, 0.4)], ids=lambda m: m.label)
def test_singular_values_pair(model):
    n = 15
    M = monodromy(model, 0.3, 0.17, n)
    ls = np.sort(M.log_singular_values())[::-1]
    logdet = np.log(abs(np.linalg.det(M.unit))) + 2 * model.d * M.log_scale
    D = 2 * model.d
    for j in range(model.d):
        assert ls[j] + ls[D - 1 - j] == pytest.approx(logdet / model.d, abs=1e-8 * n)


def test_graded_product_against_mpmath():
    # coupled Harper is real, so an mpmath SVD of the product is an independent oracle
    model = make_coupled_harper(1.5, 2.5, 0.3)
    n, E, th = 20, 0.3, 0.1
    g = graded_monodromy(model, E, [[th]], 0.0, n)
    logs = g.log_exterior_norms()[0]
    mpmath.mp.dps = 80
    w = (mpmath.sqrt(5) - 1) / 2
    P = mpmath.eye(4)
    for j in range(n):
        t = th + j * w
        c1 = 3 * mpmath.cos(2 * mpmath.pi * t)
        c2 = 5 * mpmath.cos(2 * mpmath.pi * t)
        V = mpmath.matrix([[c1, 0.3], [0.3, c2]])
        A = mpmath.zeros(4)
        for i in range(2):
            for k in range(2):
                A[i, k] = (E if i == k else 0) - V[i, k]
            A[i, 2 + i] = -1
            A[2 + i, i] = 1
        P = A * P
    sv = sorted((float(mpmath.log(s)) for s in mpmath.svd_r(P, compute_uv=False)), reverse=True)
    assert logs == pytest.approx(np.cumsum(sv), abs=1e-8)


def test_det_minus_identity():
    model = make_amo(1.5)
    for n in (3, 8, 14):
        M = monodromy(model, 0.4, 0.3, n).matrix
        direct = np.log(abs(np.linalg.det(M - np.eye(2))))
        assert log_abs_det_monodromy_minus_identity(model, 0.4, 0.3, n) == pytest.approx(
            direct, abs=1e-9)


def test_graded_identity_is_neutral():
    g = GradedProduct.identity(3, 4)
    assert np.allclose(g.log_exterior_norms(), 0.0)
