"""Command-line front end: JSON experiment configs in, CSV tables and metadata out.

Usage::

    qpblock <task> --config cfg.json [--out DIR] [--threads K] [--seed S]

Tasks: ``lyapunov``, ``accel``, ``zeros``, ``green``, ``spectrum``, ``verify``,
``ldt``, ``skewshift``, ``duality``.

Config schema (JSON object)
---------------------------
``model``
    Model mapping accepted by :func:`qpblock.models.model_from_config`.  Not
    used by ``skewshift`` and ``duality``, which read ``params`` only.
``task``
    Optional; must match the subcommand when present.
``params``
    Task parameters (see the ``_task_*`` functions for names and defaults).
``energies``
    A list of energies, or ``{"from_spectrum": {"count": c, "n_spec": n,
    "theta_spec": t}}`` to sample bulk eigenvalues of a Dirichlet truncation.
``seed``
    Integer seed for randomized checks (default 0).
``out``
    Output directory (default ``out``).

Environment overrides: ``QPBLOCK_CONFIG``, ``QPBLOCK_OUT``, ``QPBLOCK_SEED``
and ``QPBLOCK_THREADS`` supply the corresponding flag when it is omitted.

Each run writes ``<task>.csv`` (plus ``zeros_roots.csv`` for ``zeros``), a
``<task>.meta.json`` sidecar echoing the config and library versions, and a
``<task>.timing.json`` file with the wall time.  Everything except the timing
file is byte-identical across reruns and thread counts.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import traceback
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np
import scipy

from . import finite_volume as fv
from . import lyapunov as ly
from . import models as mz
from . import spectra as sp
from . import zeros as zc

TASKS = ("lyapunov", "accel", "zeros", "green", "spectrum", "verify", "ldt", "skewshift",
         "duality")
ENV_PREFIX = "QPBLOCK_"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class Table:
    def __init__(self, name: str, header: list, rows: list | None = None):
        self.name, self.header, self.rows = name, header, rows or []

    def add(self, *row) -> None:
        self.rows.append([_fmt(v) for v in row])

    def write(self, out: Path) -> None:
        with open(out / self.name, "w", newline="") as fh:
            w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
            w.writerow(self.header)
            w.writerows(self.rows)


# ---------------------------------------------------------------------------
# config handling

def _require(mapping: dict, key: str, where: str):
    if key not in mapping:
        raise ConfigError(f"missing {where}.{key}")
    return mapping[key]


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _model(cfg: dict) -> mz.BlockModel:
    spec = _require(cfg, "model", "config")
    if not isinstance(spec, dict):
        raise ConfigError("config.model must be an object")
    return mz.model_from_config(spec)


def _energies(cfg: dict, model: mz.BlockModel | None = None, sampler=None) -> list:
    spec = _require(cfg, "energies", "config")
    if isinstance(spec, list):
        return [float(e) for e in spec]
    if isinstance(spec, dict) and "from_spectrum" in spec:
        fs = spec["from_spectrum"]
        count = int(_require(fs, "count", "energies.from_spectrum"))
        n_spec = int(fs.get("n_spec", 200))
        theta_spec = float(fs.get("theta_spec", 0.1))
        if sampler is not None:
            return [float(e) for e in sampler(count, n_spec, theta_spec)]
        return [float(e) for e in sp.sample_spectrum_energies(model, count, n_spec, theta_spec)]
    raise ConfigError("config.energies must be a list or a from_spectrum directive")


# ---------------------------------------------------------------------------
# tasks

def _task_lyapunov(cfg, params, ctx):
    model = _model(cfg)
    n, grid = int(params.get("n", 500)), int(params.get("grid", 100))
    eps_list = [float(e) for e in params.get("eps", [0.0])]
    t = Table("lyapunov.csv", ["E", "eps", "j", "L_j", "Lsum_j", "n", "grid"])
    for E in _energies(cfg, model):
        profs = [ly.finite_scale_exponents(model, E, e, n, grid, ctx["threads"]) for e in eps_list]
        for j in range(2 * model.d):
            for e, prof in zip(eps_list, profs):
                t.add(E, e, j + 1, prof.L[j], prof.Lsum[j], n, grid)
    return [t]


def _task_accel(cfg, params, ctx):
    model = _model(cfg)
    js = params.get("j", model.d)
    js = [int(j) for j in (js if isinstance(js, list) else [js])]
    eps0, h = float(params.get("eps0", 0.03)), float(params.get("h", 0.03))
    n, grid = int(params.get("n", 1000)), int(params.get("grid", 100))
    t = Table("accel.csv", ["E", "j", "eps0", "h", "kappa_raw", "kappa_rounded", "gap"])
    for E in _energies(cfg, model):
        for j in js:
            a = ly.acceleration(model, E, j, eps0, h, n, grid, ctx["threads"])
            t.add(E, a.j, a.eps0, a.h, a.kappa_raw, a.kappa_rounded, a.quantization_gap)
    return [t]


def _task_zeros(cfg, params, ctx):
    model = _model(cfg)
    n = int(params.get("n", 20))
    eps_ann = float(params.get("eps_annulus", model.eta / 3.0))
    summary = Table("zeros.csv", ["E", "n", "eps_annulus", "count", "ratio", "boundary_flags",
                                  "reflection_mismatch"])
    roots = Table("zeros_roots.csv", ["E", "index", "re", "im", "log_mag_over_2pi", "inside",
                                      "boundary_flag", "pair_index"])
    for E in _energies(cfg, model):
        rep = zc.count_zeros(zc.extract_laurent(model, E, n), eps_ann, n, E)
        mism = zc.pairing_check(rep, "unit-reflection") if rep.roots.size else 0.0
        summary.add(E, n, eps_ann, rep.count, rep.count / (2.0 * n),
                    int(np.count_nonzero(rep.boundary_flags)), mism)
        partner, _ = zc.match_roots(rep.roots, 1.0 / np.conj(rep.roots))
        for i, w in enumerate(rep.roots):
            lvl = np.log(abs(w)) / (2 * np.pi)
            roots.add(E, i, w.real, w.imag, lvl, bool(abs(lvl) <= eps_ann + zc.BOUNDARY_TOL),
                      bool(rep.boundary_flags[i]), int(partner[i]))
    return [summary, roots]


def _task_green(cfg, params, ctx):
    model = _model(cfg)
    n = int(params.get("n", 40))
    theta = float(params.get("theta", 0.0))
    pairs = params.get("pairs", [[0, 0]])
    op = fv.assemble(model, theta, n)
    t = Table("green.csv", ["E", "theta", "x", "y", "re", "im", "abs", "log_abs_f",
                            "cramer_mismatch"])
    for E in _energies(cfg, model):
        for x, y in pairs:
            g = fv.green(op, E, int(x), int(y))
            t.add(E, theta, int(x), int(y), g.value.real, g.value.imag, abs(g.value),
                  g.determinant.log_mag, g.cramer_mismatch)
    return [t]


def _task_spectrum(cfg, params, ctx):
    model = _model(cfg)
    approx = sp.spectrum_union(model, int(params.get("n", 60)), int(params.get("grid", 120)),
                               float(params.get("merge_tol", sp.DEFAULT_MERGE_TOL)),
                               params.get("method", "approximant"),
                               int(params.get("twists", 2)), ctx["threads"])
    t = Table("spectrum.csv", ["lo", "hi"])
    for a, b in approx.intervals:
        t.add(a, b)
    ctx["extra_meta"].update(approx.metadata())
    ctx["extra_meta"]["total_length"] = approx.total_length
    return [t]


def _task_verify(cfg, params, ctx):
    model = _model(cfg)
    rng = np.random.default_rng(ctx["seed"])
    tol = float(params.get("tol", 1e-10))
    t = Table("verify.csv", ["check", "residual", "tolerance", "pass"])
    if "J" in params:
        J = params["J"]
        J = mz.j_preset(J, model.d) if isinstance(J, str) else np.asarray(J, dtype=complex)
        r = mz.verify_J_symmetry(model, J, float(params.get("J_shift", 0.0)))
        t.add("J-symmetry", r, tol, r < tol)
    if "period_denom" in params:
        n_per = int(params.get("n_period", 6))
        E = float(params.get("E_period", 0.3))
        r = mz.verify_f_periodicity(model, E, n_per, int(params["period_denom"]))
        t.add(f"f-periodicity 1/{int(params['period_denom'])}", r, tol, r < tol)
    n_det = int(params.get("n_detP", 12))
    det_tol = float(params.get("detP_tol", 1e-6))
    samples = int(params.get("detP_samples", 20))
    worst = 0.0
    for _ in range(samples):
        theta = rng.random(model.b)
        E = float(rng.uniform(-3.0, 3.0))
        worst = max(worst, fv.detP_identity_residual(model, E, theta, n_det).residual)
    t.add(f"detP identity n={n_det}", worst, det_tol, worst < det_tol)
    return [t]


def _task_ldt(cfg, params, ctx):
    model = _model(cfg)
    n, grid = int(params.get("n", 500)), int(params.get("grid", 4096))
    delta, eps = float(params.get("delta", 0.3)), float(params.get("eps", 0.0))
    t = Table("ldt.csv", ["E", "n", "grid", "delta", "fraction", "clusters", "mean"])
    for E in _energies(cfg, model):
        r = ly.ldt_deviation_fraction(model, E, eps, n, grid, delta, ctx["threads"])
        t.add(E, n, grid, delta, r.fraction, r.clusters, r.mean)
    return [t]


def _skew_params(params):
    lam = float(_require(params, "lam", "params"))
    p, q = int(_require(params, "p", "params")), int(_require(params, "q", "params"))
    return lam, p, q, params.get("y", mz.GOLDEN)


def _task_skewshift(cfg, params, ctx):
    lam, p, q, y = _skew_params(params)
    ell, x_grid = int(params.get("ell", 4000)), int(params.get("x_grid", 64))
    sampler = lambda c, n, x: sp.skewshift_sample_energies(lam, p, q, y, c, n, x)
    t = Table("skewshift.csv", ["E", "ell", "x_grid", "avg_lyapunov"])
    for E in _energies(cfg, sampler=sampler):
        t.add(E, ell, x_grid, sp.skewshift_avg_lyapunov(lam, p, q, y, E, ell, x_grid,
                                                         ctx["threads"]))
    return [t]


def _task_duality(cfg, params, ctx):
    lam, p, q, y = _skew_params(params)
    trunc, probes = int(params.get("trunc", 24)), int(params.get("probe_count", 10))
    r = sp.duality_unitary_residual(lam, p, q, y, trunc, probes, seed=ctx["seed"])
    t = Table("duality.csv", ["lam", "p", "q", "trunc", "probe_count", "residual"])
    t.add(lam, p, q, trunc, probes, r)
    return [t]


_RUNNERS = {name: globals()[f"_task_{name}"] for name in TASKS}


# ---------------------------------------------------------------------------
# driver

def _versions() -> dict:
    try:
        pkg = importlib_metadata.version("artifact")
    except importlib_metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"artifact": pkg, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": ".".join(map(str, sys.version_info[:3]))}


def _failing_op(exc: BaseException) -> str:
    frames = [f for f in traceback.extract_tb(exc.__traceback__)
              if f"{os.sep}qpblock{os.sep}" in f.filename and not f.filename.endswith("cli.py")]
    if not frames:
        return "cli.run"
    last = frames[-1]
    return f"{Path(last.filename).stem}.{last.name}"


def run(task: str, cfg: dict, out: Path, threads: int = 1, seed: int | None = None) -> int:
    """Execute ``task`` and write its artifacts into ``out``; returns the exit code."""
    start = time.perf_counter()
    try:
        if task not in _RUNNERS:
            raise ConfigError(f"unknown task {task!r}")
        if cfg.get("task", task) != task:
            raise ConfigError(f"config task {cfg['task']!r} does not match subcommand {task!r}")
        if threads < 1:
            raise ConfigError("--threads must be positive")
        seed = int(cfg.get("seed", 0)) if seed is None else int(seed)
        params = cfg.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("config.params must be an object")
        ctx = {"threads": threads, "seed": seed, "extra_meta": {}}
        tables = _RUNNERS[task](cfg, params, ctx)
    except (ConfigError, KeyError, TypeError) as exc:
        print(f"error [cli.{task}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure [{_failing_op(exc)}]: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error [{_failing_op(exc)}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    for t in tables:
        t.write(out)
    meta = {"task": task, "seed": seed, "config": cfg, "files": [t.name for t in tables],
            "columns": {t.name: t.header for t in tables}, "versions": _versions()}
    meta.update(ctx["extra_meta"])
    with open(out / f"{task}.meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(out / f"{task}.timing.json", "w") as fh:
        json.dump({"wall_seconds": time.perf_counter() - start, "threads": threads}, fh)
        fh.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qpblock", description="Quasi-periodic block Jacobi lab")
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", default=os.environ.get(ENV_PREFIX + "CONFIG"))
    ap.add_argument("--out", default=os.environ.get(ENV_PREFIX + "OUT"))
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=os.environ.get(ENV_PREFIX + "SEED"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.config is None:
        print("error [cli.main]: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        threads = args.threads
        if threads is None:
            threads = int(os.environ.get(ENV_PREFIX + "THREADS", "1"))
    except (ConfigError, ValueError) as exc:
        print(f"error [cli.main]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.get("out", "out"))
    seed = None if args.seed is None else int(args.seed)
    return run(args.task, cfg, out, threads, seed)


if __name__ == "__main__":
    sys.exit(main())
