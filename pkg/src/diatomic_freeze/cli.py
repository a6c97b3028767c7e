"""Command-line experiment runner: ``diatomic-freeze <subcommand> --config <path>``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .chain import ChainParams, PhasePoint, hamiltonian
from .config import ConfigError, ExperimentConfig, load
from .dynamics import IntegratorConfig, NonFiniteState, _Stepper, omega_max
from .gibbs import estimate, sample_ensemble
from .modes import build_basis
from .normalform import TermBudgetExceeded, lie_construct, params_hash
from .observables import autocorrelation, branch_energies, first_crossing, freezing_report

SCHEMA_VERSION = 1
CHUNK = 64          # trajectories per work unit; fixed so outputs do not depend on --workers
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
ENERGY_COLUMNS = ("e_plus", "e_minus", "h_nl", "phi0", "H")
SCHEMAS = {
    "samples.csv": ("index",) + ENERGY_COLUMNS,
    "summary.csv": ("quantity", "mean", "variance", "stderr_mean", "stderr_variance", "n_effective"),
    "timeseries.csv": ("t",) + ENERGY_COLUMNS + ("max_rel_drift",),
    "correlation.csv": ("t", "c_f", "stderr", "c0"),
    "freezing.csv": ("t", "fraction", "normalized_drift", "stderr"),
    "sweep.csv": ("N", "mass_ratio", "beta", "mean", "stderr_mean", "variance",
                  "final_drift", "final_drift_stderr", "first_crossing", "max_rel_drift"),
}


# -- CSV ----------------------------------------------------------------------------

@dataclasses.dataclass
class Table:
    columns: tuple
    rows: list


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def emit_csv(table: Table, path) -> None:
    """Header plus rows, ``%.17g`` floats, LF line endings."""
    width = len(table.columns)
    for i, row in enumerate(table.rows):
        if len(row) != width:
            raise ValueError(f"row {i} has {len(row)} fields, header has {width}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.columns)
        for row in table.rows:
            w.writerow([_fmt(v) for v in row])


def parse_csv(path) -> Table:
    """Inverse of :func:`emit_csv` for numeric tables (ints stay ints)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = []
        for rec in reader:
            rows.append([_parse_num(v) for v in rec])
    return Table(header, rows)


def _parse_num(v: str):
    try:
        return int(v)
    except ValueError:
        try:
            return float(v)
        except ValueError:
            return v


# -- experiment pieces ----------------------------------------------------------------

def _energies(state: PhasePoint, basis) -> np.ndarray:
    be = branch_energies(state, basis)
    return np.stack([be.e_plus, be.e_minus, be.h_nl, be.phi0, hamiltonian(state, basis.params)], axis=-1)


def _evolve_chunk(args):
    """Evolve one chunk of trajectories, recording the five energies on the record grid."""
    params, integ, p, x = args
    basis = build_basis(params)
    st = _Stepper(PhasePoint(p, x), params, integ.dt, integ.scheme)
    n_rec = integ.n_steps // integ.record_stride + 1
    out = np.empty((n_rec, p.shape[0], len(ENERGY_COLUMNS)))
    out[0] = _energies(st.state, basis)
    for r in range(1, n_rec):
        st.advance(integ.record_stride)
        if not (np.all(np.isfinite(st.p)) and np.all(np.isfinite(st.x))):
            raise NonFiniteState(f"non-finite state at step {r * integ.record_stride}")
        out[r] = _energies(st.state, basis)
    return out


def run_ensemble(params: ChainParams, integ: IntegratorConfig, ens: PhasePoint, workers: int):
    """Energies of shape (records, trajectories, 5) for the whole ensemble."""
    n = ens.p.shape[0]
    jobs = [(params, integ, ens.p[a:a + CHUNK], ens.x[a:a + CHUNK]) for a in range(0, n, CHUNK)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_evolve_chunk, jobs))
    else:
        parts = [_evolve_chunk(j) for j in jobs]
    return np.concatenate(parts, axis=1)


def _drift(series: np.ndarray) -> float:
    H = series[..., ENERGY_COLUMNS.index("H")]
    return float(np.max(np.abs(H - H[0]) / np.maximum(np.abs(H[0]), 1e-300)))


def do_sample(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    basis = build_basis(cfg.chain)
    ens, diag = sample_ensemble(cfg.chain, cfg.sampler, workers)
    E = _energies(ens, basis)
    emit_csv(Table(SCHEMAS["samples.csv"], [[i, *row] for i, row in enumerate(E)]), out / "samples.csv")
    rows = []
    for c, name in enumerate(ENERGY_COLUMNS):
        est = estimate(E[:, c]) if len(E) >= 16 else None
        rows.append([name] + ([est.mean, est.variance, est.stderr_mean, est.stderr_variance,
                               est.n_effective] if est else [math.nan] * 5))
    emit_csv(Table(SCHEMAS["summary.csv"], rows), out / "summary.csv")
    return {"outputs": ["samples.csv", "summary.csv"], "sampler": dataclasses.asdict(diag)}


def do_evolve(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    ens, diag = sample_ensemble(cfg.chain, cfg.sampler, workers)
    series = run_ensemble(cfg.chain, cfg.integrator, ens, workers)
    t = np.arange(series.shape[0]) * cfg.integrator.record_stride * cfg.integrator.dt
    H = series[..., -1]
    drift = np.max(np.abs(H - H[0]) / np.abs(H[0]), axis=-1)
    means = series.mean(axis=1)
    emit_csv(Table(SCHEMAS["timeseries.csv"], [[t[i], *means[i], drift[i]] for i in range(len(t))]),
             out / "timeseries.csv")
    d = _drift(series)
    return {"outputs": ["timeseries.csv"], "max_rel_drift": d, "drift_flagged": d > 1e-5,
            "sampler": dataclasses.asdict(diag)}


def _correlate_tables(cfg: ExperimentConfig, series: np.ndarray):
    col = ENERGY_COLUMNS.index(cfg.observable)
    F = series[..., col]
    t = np.arange(series.shape[0]) * cfg.integrator.record_stride * cfg.integrator.dt
    cs = autocorrelation(F, t)
    rep = freezing_report(F, t, cfg.threshold)
    corr = Table(SCHEMAS["correlation.csv"], [[t[i], cs.c_f[i], cs.stderr[i], cs.c0] for i in range(len(t))])
    frz = Table(SCHEMAS["freezing.csv"], [[t[i], rep.fraction[i], rep.normalized_drift[i], rep.stderr[i]]
                                          for i in range(len(t))])
    return corr, frz, rep


def do_correlate(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    ens, diag = sample_ensemble(cfg.chain, cfg.sampler, workers)
    series = run_ensemble(cfg.chain, cfg.integrator, ens, workers)
    corr, frz, rep = _correlate_tables(cfg, series)
    emit_csv(corr, out / "correlation.csv")
    emit_csv(frz, out / "freezing.csv")
    d = _drift(series)
    return {"outputs": ["correlation.csv", "freezing.csv"], "max_rel_drift": d,
            "drift_flagged": d > 1e-5, "first_crossing": first_crossing(rep, cfg.threshold),
            "sampler": dataclasses.asdict(diag)}


def do_normalform(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    basis = build_basis(cfg.chain)
    res = lie_construct(basis, cfg.normalform_order)
    tag = params_hash(cfg.chain)
    files = []

    def dump(name, poly):
        (out / name).write_text(poly.dumps(tag), newline="\n")
        files.append(name)

    for s, f in enumerate(res.chi, 1):
        dump(f"chi_{s}.poly", f)
    for s, f in enumerate(res.z, 1):
        dump(f"z_{s}.poly", f)
    for s, f in enumerate(res.phi):
        dump(f"phi_{s}.poly", f)
    dump(f"upsilon_{res.order}.poly", res.upsilon_s)
    dump(f"upsilon_{res.order + 1}.poly", res.upsilon_s1)
    diag = dict(res.diagnostics)
    diag["max_residual"] = max(diag["residual"], default=0.0)
    (out / "diagnostics.json").write_text(json.dumps(_jsonable(diag), indent=2, sort_keys=True) + "\n")
    files.append("diagnostics.json")
    return {"outputs": files, "max_homological_residual": diag["max_residual"]}


def _sweep_point(args):
    i, cfg, N, ratio, beta = args
    chain = dataclasses.replace(cfg.chain, N=N, m1=ratio * cfg.chain.m2)
    seed = int(np.random.SeedSequence([cfg.sampler.seed, i]).generate_state(1, np.uint64)[0])
    sampler = dataclasses.replace(cfg.sampler, beta=beta, seed=seed)
    dt_raw = cfg.raw.get("integrator.dt")
    dt = float(dt_raw) if dt_raw and float(dt_raw) > 0 else \
        float(cfg.raw.get("integrator.dt_omega", 0.05)) / omega_max(chain)
    integ = dataclasses.replace(cfg.integrator, dt=dt)
    integ.check(chain)
    ens, _ = sample_ensemble(chain, sampler, 1)
    series = run_ensemble(chain, integ, ens, 1)
    point = dataclasses.replace(cfg, chain=chain, sampler=sampler, integrator=integ)
    _, _, rep = _correlate_tables(point, series)
    F = series[0, :, ENERGY_COLUMNS.index(cfg.observable)]
    est = estimate(F)
    return [N, ratio, beta, est.mean, est.stderr_mean, est.variance, rep.normalized_drift[-1],
            rep.stderr[-1], first_crossing(rep, cfg.threshold), _drift(series)]


def do_sweep(cfg: ExperimentConfig, out: Path, workers: int) -> dict:
    grid = [(N, r, b) for N in cfg.sweep["N"] for r in cfg.sweep["mass_ratio"] for b in cfg.sweep["beta"]]
    jobs = [(i, cfg, N, r, b) for i, (N, r, b) in enumerate(grid)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    if len(rows) != len(grid):
        raise RuntimeError(f"sweep produced {len(rows)} rows for {len(grid)} grid points")
    emit_csv(Table(SCHEMAS["sweep.csv"], rows), out / "sweep.csv")
    return {"outputs": ["sweep.csv"], "grid_points": len(grid)}


RUNNERS = {"sample": do_sample, "evolve": do_evolve, "correlate": do_correlate,
           "normalform": do_normalform, "sweep": do_sweep}


# -- entry point ---------------------------------------------------------------------

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if obj is None or isinstance(obj, (int, str, bool)):
        return obj
    return str(obj)


def _workers(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("DIATOMIC_FREEZE_WORKERS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError("DIATOMIC_FREEZE_WORKERS", f"not an integer: {env!r}") from None
    return 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diatomic-freeze", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in RUNNERS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path)
        sp.add_argument("--out", type=Path, default=Path("out"))
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--workers", type=int, default=None)
    return ap


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        cfg = load(text, kind=args.command, seed=args.seed)
        workers = _workers(args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"schema_version": SCHEMA_VERSION, "code_version": __version__,
                "command": args.command, "config": cfg.raw, "config_hash": cfg.digest(),
                "seed": cfg.sampler.seed, "workers": workers, "status": "running",
                "schemas": {k: list(v) for k, v in SCHEMAS.items()}}
    _write_manifest(out, manifest)
    t0 = time.perf_counter()
    try:
        info = RUNNERS[args.command](cfg, out, workers)
    except KeyboardInterrupt:
        manifest.update(status="interrupted", runtime_s=time.perf_counter() - t0,
                        note="outputs in this directory may be partial")
        _write_manifest(out, manifest)
        return 130
    except (ArithmeticError, FloatingPointError, NonFiniteState, TermBudgetExceeded) as exc:
        manifest.update(status="failed", runtime_s=time.perf_counter() - t0,
                        error=f"{type(exc).__name__}: {exc}")
        _write_manifest(out, manifest)
        print(f"numeric failure during {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    manifest.update(status="complete", runtime_s=time.perf_counter() - t0, **info)
    _write_manifest(out, manifest)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
