"""Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.

CLI-backed criteria run each config twice (``--threads 1`` and ``--threads 8``);
values and wall times are read from the single-thread artifacts and the
determinism criterion compares both runs byte for byte.
"""

import csv
import json
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES

from qpblock.cocycle import block_factorization_residual, monodromy, symplectic_residual
from qpblock.lyapunov import avalanche_check
from qpblock.models import (GOLDEN, LongRangeModel, longrange_to_block, make_aa, make_ab,
                            make_amo, make_coupled_harper, make_dirac_harper, make_free,
                            make_skewshift_dual, make_xy)
from qpblock.spectra import (aa_square_residual, ab_square_residual, aubry_duality_gap,
                             graphene_large_eps_slope, sample_spectrum_energies)
from qpblock.torus import ComplexPhase
from qpblock.trig import TrigMatrixPolynomial
from qpblock.zeros import count_zeros, extract_laurent, pairing_check

# pinned tolerances and limits
SYMPLECTIC_REL = 1e-9
FACTOR_TOL = 1e-9
DETP_TOL = 1e-6
PAIR_SUM_TOL = 1e-5
HERMAN_SLACK = 0.02
ACCEL_GAP = 0.2
ZERO_PAIR_TOL = 1e-6
SYMMETRY_TOL = 1e-10
MEASURE_REL = 0.10
AUBRY_TOL = 0.1
SQUARE_TOL = 1e-9
SLOPE_TOL = 0.5
INTERCEPT_TOL = 0.3
SKEW_SMALL = 0.03
SKEW_LARGE = 0.8
DUALITY_TOL = 1e-8
LDT_FRACTION = 0.01

AMO = lambda lam: {"constructor": "amo", "params": {"lam": lam}}
SAMPLES = lambda count: {"from_spectrum": {"count": count}}

CLI_CONFIGS = {
    "c3_amo": ("verify", {"model": AMO(2.0),
                          "params": {"n_detP": 25, "detP_samples": 20}}),
    "c3_xy": ("verify", {"model": {"constructor": "xy", "params": {"rho": 0.3}},
                         "params": {"J": "alternating", "period_denom": 2, "n_period": 6,
                                    "n_detP": 12, "detP_samples": 20}}),
    "c3_skew": ("verify", {"model": {"constructor": "skewshift_dual",
                                     "params": {"lam": 0.8, "p": 1, "q": 3}},
                           "params": {"J": "identity", "period_denom": 3, "n_period": 6,
                                      "n_detP": 9, "detP_samples": 20}}),
    "c4": ("lyapunov", {"model": AMO(2.0), "params": {"n": 2000, "grid": 200, "eps": [0.0]},
                        "energies": SAMPLES(10)}),
    "c5_accel": ("accel", {"model": AMO(3.0),
                           "params": {"j": 1, "eps0": 0.03, "h": 0.03, "n": 3000, "grid": 100},
                           "energies": SAMPLES(5)}),
    "c5_zeros": ("zeros", {"model": AMO(3.0), "params": {"n": 30}, "energies": SAMPLES(5)}),
    "c8_half": ("spectrum", {"model": AMO(0.5), "params": {"n": 60, "grid": 120}}),
    "c8_two": ("spectrum", {"model": AMO(2.0), "params": {"n": 60, "grid": 120}}),
    "c11_small": ("skewshift", {"params": {"lam": 0.1, "p": 1, "q": 3, "ell": 4000, "x_grid": 64},
                                "energies": SAMPLES(5)}),
    "c11_large": ("skewshift", {"params": {"lam": 3.0, "p": 1, "q": 3, "ell": 4000, "x_grid": 64},
                                "energies": [0.0]}),
    "c12": ("duality", {"params": {"lam": 1.0, "p": 1, "q": 3, "trunc": 24, "probe_count": 10}}),
    "c13": ("ldt", {"model": AMO(3.0), "params": {"n": 500, "grid": 4096, "delta": 0.3},
                    "energies": SAMPLES(3)}),
    "c15": ("accel", {"model": {"constructor": "coupled_harper",
                                "params": {"l1": 0.4, "l2": 0.7, "eps": 0.02}},
                      "params": {"j": [1, 2], "eps0": 0.0, "h": 0.03, "n": 3000, "grid": 50},
                      "energies": SAMPLES(5)}),
}


def record(k: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {k}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def cli(tmp_path_factory):
    """Run every CLI config at 1 and 8 threads; returns name -> (dir1, dir8, seconds)."""
    root = tmp_path_factory.mktemp("acceptance")
    out = {}
    for name, (task, cfg) in CLI_CONFIGS.items():
        cfg_path = root / f"{name}.json"
        cfg_path.write_text(json.dumps(cfg))
        dirs = []
        for threads in (1, 8):
            d = root / f"{name}_t{threads}"
            proc = subprocess.run(
                [sys.executable, "-m", "qpblock", task, "--config", str(cfg_path),
                 "--out", str(d), "--threads", str(threads)],
                capture_output=True, text=True)
            assert proc.returncode == 0, f"{name}: {proc.stderr}"
            dirs.append(d)
        wall = json.loads((dirs[0] / f"{task}.timing.json").read_text())["wall_seconds"]
        out[name] = (dirs[0], dirs[1], wall)
    return out


def _zoo():
    lr2 = longrange_to_block(LongRangeModel((0.5, 1.0), TrigMatrixPolynomial.cosine(1.0), GOLDEN))
    lr3 = longrange_to_block(LongRangeModel((0.3, -0.4j, 1.0), TrigMatrixPolynomial.cosine(1.2),
                                            GOLDEN))
    return [make_amo(2.0), make_free(), make_xy(0.3), make_skewshift_dual(0.8, 1, 3),
            make_dirac_harper(0.7), make_coupled_harper(0.4, 0.7, 0.1),
            make_aa(1.0, 1.0, 1.5, 0.5), make_ab(1.0, 1.0, 1.5, 0.4), lr2, lr3]


def test_criterion_01_symplectic():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    zoo = _zoo()
    worst = 0.0
    for _ in range(200):
        model = zoo[rng.integers(len(zoo))]
        M = monodromy(model, rng.uniform(-3, 3), rng.random(), int(rng.integers(1, 11))).matrix
        worst = max(worst, symplectic_residual(M) / np.linalg.norm(M, 2) ** 2)
    dt = time.perf_counter() - t0
    ok = worst < SYMPLECTIC_REL and dt < 5
    record(1, ok, f"max residual/||M||^2 = {worst:.2e} (tol {SYMPLECTIC_REL:g}), {dt:.2f}s (< 5s)")
    assert ok


def test_criterion_02_block_factorization():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = {}
    for d in (1, 2, 3):
        worst[d] = 0.0
        for _ in range(50):
            # lower hoppings complex Gaussian; the leading one is kept away from zero
            lead = rng.uniform(0.5, 2.0) * np.exp(2j * np.pi * rng.random())
            v = tuple(rng.standard_normal(d - 1) + 1j * rng.standard_normal(d - 1)) + (lead,)
            lr = LongRangeModel(v, TrigMatrixPolynomial.cosine(rng.uniform(0.2, 3)), GOLDEN)
            z = ComplexPhase((rng.random(),), (rng.uniform(-0.2, 0.2),))
            worst[d] = max(worst[d], block_factorization_residual(lr, rng.uniform(-3, 3), z))
    dt = time.perf_counter() - t0
    ok = max(worst.values()) < FACTOR_TOL and dt < 5
    detail = ", ".join(f"d={d}: {w:.1e}" for d, w in worst.items())
    record(2, ok, f"max residual {detail} (tol {FACTOR_TOL:g}), {dt:.2f}s (< 5s)")
    assert ok


def test_criterion_03_detP(cli):
    parts, ok, total = [], True, 0.0
    for name in ("c3_amo", "c3_xy", "c3_skew"):
        d1, _, wall = cli[name]
        row = [r for r in _rows(d1 / "verify.csv") if r["check"].startswith("detP")][0]
        res = float(row["residual"])
        ok &= res < DETP_TOL
        total += wall
        parts.append(f"{name[3:]} {res:.1e}")
    ok &= total < 30
    record(3, ok, f"max log residual {', '.join(parts)} (tol {DETP_TOL:g}), {total:.1f}s (< 30s)")
    assert ok


def test_criterion_04_pairing_and_herman(cli):
    d1, _, wall = cli["c4"]
    rows = _rows(d1 / "lyapunov.csv")
    Es = sorted({r["E"] for r in rows})
    L = {(r["E"], r["j"]): float(r["L_j"]) for r in rows}
    pair = max(abs(L[(E, "1")] + L[(E, "2")]) for E in Es)
    low = min(L[(E, "1")] for E in Es)
    ok = len(Es) == 10 and pair < PAIR_SUM_TOL and low >= np.log(2) - HERMAN_SLACK and wall < 120
    record(4, ok, f"{len(Es)} E: max |L1+L2| = {pair:.1e} (tol {PAIR_SUM_TOL:g}), min L1 = {low:.4f} "
                  f"(>= log2-{HERMAN_SLACK}), {wall:.1f}s (< 120s)")
    assert ok


def test_criterion_05_acceleration_and_riesz(cli):
    da, _, wa = cli["c5_accel"]
    dz, _, wz = cli["c5_zeros"]
    acc = _rows(da / "accel.csv")
    zer = _rows(dz / "zeros.csv")
    gap = max(float(r["gap"]) for r in acc)
    kap = {int(r["kappa_rounded"]) for r in acc}
    counts = [int(r["count"]) for r in zer]
    ok = (len(acc) == 5 and kap == {1} and gap < ACCEL_GAP and counts == [60] * 5
          and wa + wz < 180)
    record(5, ok, f"kappa {sorted(kap)} max gap {gap:.3f} (< {ACCEL_GAP}), N_30 = {counts} (== 60), "
                  f"{wa + wz:.1f}s (< 180s)")
    assert ok


def test_criterion_06_zero_symmetries():
    t0 = time.perf_counter()
    amo = make_amo(3.0)
    E = float(sample_spectrum_energies(amo, 1)[0])
    a = pairing_check(count_zeros(extract_laurent(amo, E, 20), 1 / 3), "unit-reflection")
    n, d = 10, 2
    lr = longrange_to_block(LongRangeModel((0.5, 1.0), TrigMatrixPolynomial.cosine(1.0), GOLDEN))
    rep = count_zeros(extract_laurent(lr, 0.3, n), 1 / 3)
    b = pairing_check(rep, "conjugate-rotation", alpha=-(n * d - 1) * GOLDEN / d)
    rep = count_zeros(extract_laurent(make_skewshift_dual(0.8, 1, 3), 0.3, 6), 1.0)
    c = pairing_check(rep, "rotation", d=3)
    dt = time.perf_counter() - t0
    ok = max(a, b, c) < ZERO_PAIR_TOL and dt < 60
    record(6, ok, f"reflection {a:.1e}, conjugate-rotation {b:.1e}, rotation(1/3) {c:.1e} "
                  f"(tol {ZERO_PAIR_TOL:g}), {dt:.2f}s (< 60s)")
    assert ok


def test_criterion_07_symmetry_verifiers(cli):
    vals, total = {}, 0.0
    for name in ("c3_xy", "c3_skew"):
        d1, _, wall = cli[name]
        total += wall
        for r in _rows(d1 / "verify.csv"):
            if not r["check"].startswith("detP"):
                vals[f"{name[3:]} {r['check']}"] = float(r["residual"])
    ok = len(vals) == 4 and max(vals.values()) < SYMMETRY_TOL and total < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in vals.items())
    record(7, ok, f"{detail} (tol {SYMMETRY_TOL:g}), {total:.1f}s (< 30s)")
    assert ok


def test_criterion_08_measure_and_aubry(cli):
    t0 = time.perf_counter()
    lengths, ok = {}, True
    wall = 0.0
    for name, lam in (("c8_half", 0.5), ("c8_two", 2.0)):
        d1, _, w = cli[name]
        wall += w
        meas = json.loads((d1 / "spectrum.meta.json").read_text())["total_length"]
        target = 4 * abs(1 - lam)
        lengths[lam] = meas
        ok &= abs(meas - target) <= MEASURE_REL * target
    gaps = {lam: aubry_duality_gap(lam) for lam in (2.0, 4.0)}
    ok &= max(gaps.values()) < AUBRY_TOL
    dt = wall + time.perf_counter() - t0
    ok &= dt < 120
    record(8, ok, f"|sigma| lam=0.5: {lengths[0.5]:.4f} (2 +-10%), lam=2: {lengths[2.0]:.4f} "
                  f"(4 +-10%); Aubry gap lam=2 {gaps[2.0]:.1e}, lam=4 {gaps[4.0]:.1e} "
                  f"(< {AUBRY_TOL}), {dt:.1f}s (< 120s)")
    assert ok


def test_criterion_09_graphene_square():
    t0 = time.perf_counter()
    params = [(1.0, 1.0, 1.0, 0.5, 0.0), (2.0, 0.7, 1.3, 0.4, 0.21), (0.6, 1.4, 2.2, 0.9, 0.37)]
    res = []
    for l1, l2, l3, rho, th in params:
        res.append(aa_square_residual(l1, l2, l3, rho, theta=th, n=6))
        res.append(ab_square_residual(l1, l2, l3, rho, theta=th, n=6))
    dt = time.perf_counter() - t0
    ok = max(res) < SQUARE_TOL and dt < 10
    record(9, ok, f"max AA {max(res[::2]):.1e}, AB {max(res[1::2]):.1e} (tol {SQUARE_TOL:g}), "
                  f"{dt:.2f}s (< 10s)")
    assert ok


def test_criterion_10_graphene_asymptotics():
    t0 = time.perf_counter()
    aa = make_aa(10.0, 1.0, 1.0, 0.5)
    ab = make_ab(1.0, 1.0, 10.0, 0.5)
    fa = graphene_large_eps_slope(aa, float(sample_spectrum_energies(aa, 1)[0]), 0.8, 300, 64)
    fb = graphene_large_eps_slope(ab, float(sample_spectrum_energies(ab, 1)[0]), 0.8, 300, 64)
    dt = time.perf_counter() - t0
    # AA: slope 4 pi, intercept 2 log|l3/l2|; AB: eps-independent, intercept 2 log|l1/l2|
    ok = (abs(fa.slope - 4 * np.pi) < SLOPE_TOL and abs(fa.intercept - 0.0) < INTERCEPT_TOL
          and abs(fb.slope - 0.0) < SLOPE_TOL and abs(fb.intercept - 0.0) < INTERCEPT_TOL
          and dt < 120)
    record(10, ok, f"AA slope {fa.slope:.4f} (4pi +-{SLOPE_TOL}), intercept {fa.intercept:.4f}; "
                   f"AB slope {fb.slope:.1e} (0 +-{SLOPE_TOL}), intercept {fb.intercept:.4f} "
                   f"(+-{INTERCEPT_TOL}), {dt:.1f}s (< 120s)")
    assert ok


def test_criterion_11_skewshift(cli):
    ds, _, ws = cli["c11_small"]
    dl, _, wl = cli["c11_large"]
    small = [float(r["avg_lyapunov"]) for r in _rows(ds / "skewshift.csv")]
    large = float(_rows(dl / "skewshift.csv")[0]["avg_lyapunov"])
    ok = len(small) == 5 and max(small) < SKEW_SMALL and large > SKEW_LARGE and ws + wl < 180
    record(11, ok, f"lam=0.1 max {max(small):.1e} (< {SKEW_SMALL}), lam=3 {large:.4f} "
                   f"(> {SKEW_LARGE}), {ws + wl:.1f}s (< 180s)")
    assert ok


def test_criterion_12_duality(cli):
    d1, _, wall = cli["c12"]
    res = float(_rows(d1 / "duality.csv")[0]["residual"])
    ok = res < DUALITY_TOL and wall < 10
    record(12, ok, f"residual {res:.1e} (tol {DUALITY_TOL:g}), {wall:.1f}s (< 10s)")
    assert ok


def test_criterion_13_ldt(cli):
    d1, _, wall = cli["c13"]
    rows = _rows(d1 / "ldt.csv")
    frac = max(float(r["fraction"]) for r in rows)
    clusters = max(int(r["clusters"]) for r in rows)
    ok = frac < LDT_FRACTION and clusters <= 4 * 500 and wall < 60
    record(13, ok, f"{len(rows)} E: max fraction {frac:.4f} (< {LDT_FRACTION}), clusters {clusters} "
                   f"(<= 2000), {wall:.1f}s (< 60s)")
    assert ok


def test_criterion_14_avalanche():
    t0 = time.perf_counter()
    rng = np.random.default_rng(14)
    good = 0
    for _ in range(50):
        count = int(rng.integers(3, 30))
        big = rng.uniform(10, 100)
        mats = []
        for _ in range(count):
            a = rng.uniform(-0.3, 0.3)
            R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
            mats.append(R @ np.diag([big, 1 / big]))
        r = avalanche_check(mats, 0.5, 1.0001 / big ** 2)
        good += r.applicable and r.lhs <= r.bound
    rejected = 0
    for _ in range(10):
        a = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        rejected += not avalanche_check([R] * int(rng.integers(3, 20)), 0.5, 0.1).applicable
    dt = time.perf_counter() - t0
    ok = good == 50 and rejected == 10 and dt < 5
    record(14, ok, f"hyperbolic {good}/50 applicable with lhs <= bound, rotations "
                   f"{rejected}/10 rejected, {dt:.2f}s (< 5s)")
    assert ok


def test_criterion_15_coupled_harper(cli):
    d1, _, wall = cli["c15"]
    rows = _rows(d1 / "accel.csv")
    kap = {(r["j"], int(r["kappa_rounded"])) for r in rows}
    gap = max(float(r["gap"]) for r in rows)
    ok = len(rows) == 10 and kap == {("1", 0), ("2", 0)} and gap < ACCEL_GAP and wall < 180
    record(15, ok, f"kappa^1, kappa^2 rounded {sorted({k for _, k in kap})} over 5 E, max gap "
                   f"{gap:.1e} (< {ACCEL_GAP}), {wall:.1f}s (< 180s)")
    assert ok


def test_criterion_16_determinism(cli):
    compared, diffs = 0, []
    for name, (d1, d8, _) in cli.items():
        files = sorted(p.name for p in d1.iterdir() if not p.name.endswith(".timing.json"))
        for f in files:
            compared += 1
            if (d1 / f).read_bytes() != (d8 / f).read_bytes():
                diffs.append(f"{name}/{f}")
    ok = not diffs
    record(16, ok, f"{compared} artifacts byte-identical at --threads 1 vs 8"
                   + (f"; differing: {diffs}" if diffs else ""))
    assert ok
