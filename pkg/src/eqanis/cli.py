"""Command-line interface: ``eqanis <subcommand> [--config c.json] [--set key=value ...]``.

Exit codes: 0 success, 1 validation error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    build_anisotropy,
    build_grid,
    build_params,
    build_sequence,
    config_hash,
    fp_options,
    load_config,
)
from .fokker_planck import FPSolverError
from .oracle import QuadratureError, oracle_Zz
from .series import SeriesConvergenceError, series_sums

log = logging.getLogger("eqanis")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


# --- output helpers --------------------------------------------------------


def _sha256(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _versions():
    import scipy
    import sklearn

    return {"eqanis": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "scikit-learn": sklearn.__version__, "python": platform.python_version()}


def write_manifest(paths, command, cfg, seed, extra=None):
    """Record config hash, seed and versions in ``manifest.json`` beside each output."""
    by_dir = {}
    for p in paths:
        by_dir.setdefault(os.path.dirname(os.path.abspath(p)), []).append(p)
    for d, files in by_dir.items():
        mpath = os.path.join(d, "manifest.json")
        data = {"outputs": {}}
        if os.path.exists(mpath):
            try:
                with open(mpath, encoding="utf-8") as fh:
                    data = json.load(fh)
            except (OSError, json.JSONDecodeError):
                data = {"outputs": {}}
        data["versions"] = _versions()
        for f in files:
            data.setdefault("outputs", {})[os.path.basename(f)] = {
                "command": command,
                "config_sha256": config_hash(cfg),
                "seed": seed,
                "sha256": _sha256(f),
                **(extra or {}),
            }
        with open(mpath, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _fmt(v):
    return repr(float(v))


def write_grid_csv(path, grid, values):
    """One row per cell in position order: ``ix, iy, x_m, y_m, value``."""
    pos = grid.positions()
    values = np.asarray(values, dtype=float).ravel()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ix", "iy", "x_m", "y_m", "value"])
        for i, (p, v) in enumerate(zip(pos, values)):
            w.writerow([i % grid.nx, i // grid.nx, _fmt(p[0]), _fmt(p[1]), _fmt(v)])


def read_grid_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "value" not in rows[0]:
        raise ConfigError(f"{path} is not a grid CSV")
    nx = max(int(r["ix"]) for r in rows) + 1
    ny = max(int(r["iy"]) for r in rows) + 1
    return np.array([float(r["value"]) for r in rows]), (ny, nx)


def write_signal_csv(path, u, sigma):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row", "re", "im", "sigma"])
        for i, (z, s) in enumerate(zip(u, sigma)):
            w.writerow([i, _fmt(z.real), _fmt(z.imag), _fmt(s)])


def read_signal_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "re" not in rows[0]:
        raise ConfigError(f"{path} is not a signal CSV")
    u = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    return u, np.array([float(r["sigma"]) for r in rows])


def write_table_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def _linspace(text):
    try:
        lo, hi, n = text.split(",")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"range {text!r} must be 'start,stop,count'") from exc


def _map_csv(path, row_label, rows, cols, values):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([row_label] + [_fmt(c) for c in cols])
        for r, vals in zip(rows, values):
            w.writerow([_fmt(r)] + [_fmt(v) for v in vals])


def read_map_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    cols = np.array([float(v) for v in rows[0][1:]])
    ys = np.array([float(r[0]) for r in rows[1:]])
    vals = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return ys, cols, vals, rows[0][0]


# --- subcommands -----------------------------------------------------------


def cmd_simulate_sm(args, cfg):
    from .reduced import reduced_sm_rows
    from .system import assemble_system_matrix, write_sm

    seq, grid, params, anis = build_sequence(cfg), build_grid(cfg), build_params(cfg), build_anisotropy(cfg)
    t0 = time.perf_counter()
    if args.model == "reduced":
        S = reduced_sm_rows(grid, seq, anis, params, n_torus=cfg["reduced"]["n_torus"],
                            isotropic=cfg["anisotropy"]["type"] == "isotropic", tol=cfg["series"]["tol"],
                            rule=cfg["reduced"]["lambda_rule"])
    else:
        S = assemble_system_matrix(args.model, grid, seq, anis, params, tol=cfg["series"]["tol"],
                                   fp_options=fp_options(cfg), n_jobs=cfg["n_jobs"])
    elapsed = time.perf_counter() - t0
    write_sm(args.output, S)
    write_manifest([args.output], "simulate-sm", cfg, cfg["seed"], {"model": args.model})
    print(f"{S.model}: {S.data.shape[0]} channel(s) x {S.n_freq} frequencies x {S.n_pos} positions "
          f"in {elapsed:.2f} s -> {args.output}")
    return 0


def cmd_oracle_check(args, cfg):
    rng = np.random.default_rng(cfg["seed"])
    n = args.n_points
    a = rng.uniform(0, 30, n)
    b = rng.uniform(-30, 30, n)
    c = rng.uniform(0, 25, n)
    t0 = time.perf_counter()
    logZ, par, perp, used = series_sums(a, b, c, tol=cfg["series"]["tol"])
    t_series = time.perf_counter() - t0
    rows = []
    worst = 0.0
    for i in range(n):
        o = oracle_Zz(a[i], b[i], c[i])
        # Z, z3 and z_perp relative errors, all sharing the series scale exp(logZ)
        eZ = abs(np.expm1(logZ[i] - o.logZ))
        Zs = np.exp(logZ[i] - o.log_scale)
        e3 = abs(par[i] * Zs - o.z3) / max(abs(o.z3), 1e-300) if o.z3 else abs(par[i])
        ep = abs(perp[i] * Zs - o.z_perp) / o.z_perp
        worst = max(worst, eZ, e3, ep)
        rows.append((a[i], b[i], c[i], int(used[i]), eZ, e3, ep))
    if args.output:
        write_table_csv(args.output, ["a", "b", "c", "L", "rel_err_Z", "rel_err_z3", "rel_err_zperp"], rows)
        write_manifest([args.output], "oracle-check", cfg, cfg["seed"])
    status = "PASS" if worst <= args.tol else "FAIL"
    print(f"oracle-check {status}: {n} points, max relative error {worst:.3e} (tol {args.tol:g}), "
          f"max L {int(used.max())}, series time {t_series:.3f} s")
    return 0 if worst <= args.tol else 2


def _study_seq(args):
    from .metrics import study_sequence

    return study_sequence(divider=args.divider, oversample=args.oversample)


def cmd_error_map(args, cfg):
    from .metrics import error_map
    from .render import render_heatmap

    D = _linspace(args.diameters)
    K = _linspace(args.k_values)
    seq = _study_seq(args)
    base = build_params(cfg)
    t0 = time.perf_counter()
    res = error_map(D * 1e-9, K, seq, args.model_a, args.model_b, tuple(args.easy_axis), args.offsets,
                    fp_options(cfg), cfg["n_jobs"], base)
    _map_csv(args.output, "D_nm\\K_Jm3", D, K, res)
    outs = [args.output]
    png = os.path.splitext(args.output)[0] + ".png"
    render_heatmap(res, K, D, png, title=f"eps_TD({args.model_a}, {args.model_b})")
    outs.append(png)
    write_manifest(outs, "error-map", cfg, cfg["seed"])
    print(f"error map {res.shape} in {time.perf_counter() - t0:.1f} s; max {np.nanmax(res):.4g}, "
          f"missing cells {int(np.isnan(res).sum())}")
    return 0


def cmd_truncation_map(args, cfg):
    from .metrics import truncation_map
    from .render import render_heatmap

    D = _linspace(args.diameters)
    K = _linspace(args.k_values)
    seq = _study_seq(args)
    t0 = time.perf_counter()
    res = truncation_map(D * 1e-9, K, seq, args.target, args.ref_terms, args.offsets, tuple(args.easy_axis))
    stem = os.path.splitext(args.output)[0]
    _map_csv(args.output, "D_nm\\K_Jm3", D, K, res["min_L"])
    _map_csv(stem + "_adaptive.csv", "D_nm\\K_Jm3", D, K, res["adaptive_L"])
    render_heatmap(res["min_L"], K, D, stem + ".png", levels=(), title="minimal truncation index L")
    outs = [args.output, stem + "_adaptive.csv", stem + ".png"]
    write_manifest(outs, "truncation-map", cfg, cfg["seed"])
    print(f"truncation map {res['min_L'].shape} in {time.perf_counter() - t0:.1f} s; "
          f"max min-L {int(res['min_L'].max())}, max adaptive L {int(res['adaptive_L'].max())}, "
          f"max adaptive error {res['adaptive_err'].max():.3g}")
    return 0


def _phantom(args, grid):
    from .phantoms import phantom_generate

    kw = {}
    if args.phantom == "resolution":
        kw["distance"] = args.distance * 1e-3
    elif args.phantom == "delta":
        kw.update(x=args.x * 1e-3, y=args.y * 1e-3)
    elif args.phantom == "disk":
        kw.update(radius=args.radius * 1e-3, x=args.x * 1e-3, y=args.y * 1e-3)
    return phantom_generate(args.phantom, grid, **kw)


def cmd_signal(args, cfg):
    from .estimators import SystemFunction
    from .phantoms import simulate_measurement
    from .system import read_sm

    grid = build_grid(cfg)
    ph = _phantom(args, grid)
    c = ph.vector()
    if args.sm:
        S = read_sm(args.sm).matrix()
        if S.shape[1] != c.size:
            raise ConfigError("system matrix does not match the configured grid")
        A, cc = S, c
    else:
        # forward model evaluated only on occupied cells
        nz = np.flatnonzero(c)
        sf = SystemFunction(build_sequence(cfg), build_params(cfg), build_anisotropy(cfg), args.model,
                            fp_options=fp_options(cfg), n_jobs=cfg["n_jobs"]).fit()
        A = sf.transform(grid.positions()[nz]).T
        cc = c[nz]
    snr = float("inf") if args.snr_db.lower() in ("inf", "none") else float(args.snr_db)
    u, sigma = simulate_measurement(A, cc, snr, seed=cfg["seed"])
    write_signal_csv(args.output, u, sigma)
    truth = os.path.splitext(args.output)[0] + "_phantom.csv"
    write_grid_csv(truth, grid, c)
    write_manifest([args.output, truth], "signal", cfg, cfg["seed"], {"phantom": args.phantom, "snr_db": args.snr_db})
    print(f"signal: {u.size} rows, phantom {args.phantom} ({np.count_nonzero(c)} cells), sigma {sigma[0]:.4g}")
    return 0


def nrmse(truth, recon):
    truth = np.asarray(truth, float)
    rng_ = truth.max() - truth.min()
    if rng_ <= 0:
        raise ValueError("ground truth is constant")
    return float(np.sqrt(np.mean((np.asarray(recon) - truth) ** 2)) / rng_)


def cmd_recon(args, cfg):
    from .recon import kaczmarz
    from .render import render_gray
    from .system import read_sm

    S = read_sm(args.sm)
    u, sigma = read_signal_csv(args.signal)
    A = S.matrix()
    if A.shape[0] != u.size:
        raise ConfigError(f"signal has {u.size} rows, system matrix {A.shape[0]}")
    r = cfg["recon"]
    w = None if args.no_whiten else 1.0 / sigma
    c = kaczmarz(A, u, r["iterations"], r["lambda_r"], w, r["nonneg"], r["shuffle"], cfg["seed"])
    grid = build_grid(cfg)
    if c.size != grid.size:
        raise ConfigError("system matrix column count does not match the configured grid")
    write_grid_csv(args.output, grid, c)
    png = os.path.splitext(args.output)[0] + ".png"
    render_gray(c, grid.shape, png)
    write_manifest([args.output, png], "recon", cfg, cfg["seed"], {"sm_model": S.model})
    msg = f"recon: {r['iterations']} sweeps, lambda_r {r['lambda_r']:g}, model {S.model}"
    if args.truth:
        t, _ = read_grid_csv(args.truth)
        msg += f", NRMSE {nrmse(t, c):.4f}"
    print(msg)
    return 0


def cmd_compare_sm(args, cfg):
    from .metrics import compare_mixing_orders
    from .system import read_sm

    a, b = read_sm(args.a), read_sm(args.b)
    if a.data.shape != b.data.shape:
        raise ConfigError(f"system matrices differ in shape: {a.data.shape} vs {b.data.shape}")
    table = compare_mixing_orders(a, b, range(1, args.max_order + 1))
    lines = [f"{'kx':>3} {'ky':>3} {'ch':>3} {'eps_SM':>12}"]
    lines += [f"{kx:3d} {ky:3d} {ch:3d} {e:12.5e}" for kx, ky, ch, e in table]
    mean = float(np.mean([t[3] for t in table])) if table else float("nan")
    print("\n".join(lines))
    print(f"mean eps_SM {mean:.5e} over {len(table)} rows")
    if args.output:
        write_table_csv(args.output, ["kx", "ky", "channel", "eps_SM"], table)
        write_manifest([args.output], "compare-sm", cfg, cfg["seed"])
    return 0


def cmd_render(args, cfg):
    from .render import render_complex_map, render_gray, render_heatmap
    from .system import read_sm

    if args.sm:
        S = read_sm(args.sm)
        g = S.meta.get("grid")
        if not g:
            raise ConfigError("system matrix has no grid metadata")
        k = args.k
        if args.kx is not None:
            from .metrics import mixing_order_index

            k = mixing_order_index(args.kx, args.ky, S.meta["sequence"]["divider"])
        if not 0 <= k < S.n_freq:
            raise ConfigError(f"frequency index {k} outside [0, {S.n_freq})")
        render_complex_map(S.row(k, args.channel), (g["ny"], g["nx"]), args.output, scale=args.scale)
    elif args.concentration:
        vals, shape = read_grid_csv(args.concentration)
        render_gray(vals, shape, args.output, scale=args.scale)
    elif args.map:
        ys, xs, vals, _ = read_map_csv(args.map)
        render_heatmap(vals, xs, ys, args.output)
    else:
        raise ConfigError("render needs one of --sm, --concentration, --map")
    write_manifest([args.output], "render", cfg, cfg["seed"])
    print(f"wrote {args.output}")
    return 0


def cmd_bench(args, cfg):
    from .system import assemble_system_matrix, fp_moments

    seq, grid, params, anis = build_sequence(cfg), build_grid(cfg), build_params(cfg), build_anisotropy(cfg)
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    for m in models:
        if m not in ("eq", "eqanis", "fp"):
            raise ConfigError(f"bench model must be eq, eqanis or fp, got {m!r}")
    times = {}
    for m in models:
        if m == "fp" and args.fp_sample and args.fp_sample < grid.size:
            # time a fixed, evenly spread subset and scale to the full grid
            idx = np.linspace(0, grid.size - 1, args.fp_sample).round().astype(int)
            t0 = time.perf_counter()
            fp_moments(grid.positions()[idx], seq, anis, params, fp_options(cfg), cfg["n_jobs"])
            times[m] = (time.perf_counter() - t0) * grid.size / idx.size
            note = f" (extrapolated from {idx.size} positions)"
        else:
            t0 = time.perf_counter()
            assemble_system_matrix(m, grid, seq, anis, params, fp_options=fp_options(cfg), n_jobs=cfg["n_jobs"])
            times[m] = time.perf_counter() - t0
            note = ""
        print(f"{m}: {times[m]:.4f} s for {grid.size} positions, {cfg['n_jobs']} worker(s){note}")
    if "fp" in times:
        for m in models:
            if m != "fp":
                print(f"speedup fp/{m}: {times['fp'] / times[m]:.1f}")
    return 0


# --- parser ----------------------------------------------------------------


def _common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry, e.g. particle.diameter_nm=20 (repeatable)")
    p.add_argument("--seed", type=int, help="RNG seed (overrides config)")
    p.add_argument("--n-jobs", type=int, help="worker processes for FP solves")
    p.add_argument("-v", "--verbose", action="store_true")


def _study(p):
    p.add_argument("--diameters", default="15,25,11", help="start,stop,count in nm")
    p.add_argument("--k-values", default="0,10000,11", help="start,stop,count in J/m^3")
    p.add_argument("--offsets", type=int, default=7, help="number of offset positions")
    p.add_argument("--divider", type=int, default=102)
    p.add_argument("--oversample", type=int, default=10, help="samples per clock tick")
    p.add_argument("--easy-axis", type=float, nargs=3, default=(1.0, 0.0, 0.0))


def _phantom_args(p):
    p.add_argument("--phantom", choices=["snake", "resolution", "delta", "disk"], default="snake")
    p.add_argument("--distance", type=float, default=5.0, help="resolution phantom gap in mm")
    p.add_argument("--radius", type=float, default=5.0, help="disk radius in mm")
    p.add_argument("--x", type=float, default=0.0, help="delta/disk position in mm")
    p.add_argument("--y", type=float, default=0.0, help="delta/disk position in mm")


def build_parser():
    parser = _Parser(prog="eqanis", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate-sm", help="assemble a system matrix")
    _common(p)
    p.add_argument("--model", choices=["eq", "eqanis", "reduced", "fp"], default="eqanis")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_simulate_sm)

    p = sub.add_parser("oracle-check", help="series vs quadrature on random (a, b, c)")
    _common(p)
    p.add_argument("--n-points", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("error-map", help="eps_TD between two models over (D, K)")
    _common(p)
    _study(p)
    p.add_argument("--model-a", choices=["eq", "eqanis", "fp"], default="fp")
    p.add_argument("--model-b", choices=["eq", "eqanis", "fp"], default="eqanis")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_error_map)

    p = sub.add_parser("truncation-map", help="series truncation index over (D, K)")
    _common(p)
    _study(p)
    p.add_argument("--target", type=float, default=1e-6)
    p.add_argument("--ref-terms", type=int, default=200)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_truncation_map)

    p = sub.add_parser("signal", help="simulate a noisy phantom measurement")
    _common(p)
    _phantom_args(p)
    p.add_argument("--sm", help="system matrix file; otherwise --model is evaluated on occupied cells")
    p.add_argument("--model", choices=["eq", "eqanis", "fp"], default="fp")
    p.add_argument("--snr-db", default="40")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_signal)

    p = sub.add_parser("recon", help="Kaczmarz reconstruction")
    _common(p)
    p.add_argument("--sm", required=True)
    p.add_argument("--signal", required=True)
    p.add_argument("--truth", help="ground-truth grid CSV; prints NRMSE")
    p.add_argument("--no-whiten", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_recon)

    p = sub.add_parser("compare-sm", help="eps_SM table over mixing orders")
    _common(p)
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--max-order", type=int, default=9)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_compare_sm)

    p = sub.add_parser("render", help="PNG of a system-matrix row, a concentration or an error map")
    _common(p)
    p.add_argument("--sm")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--kx", type=int)
    p.add_argument("--ky", type=int, default=0)
    p.add_argument("--channel", type=int, default=0)
    p.add_argument("--concentration")
    p.add_argument("--map")
    p.add_argument("--scale", type=int, default=8)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench", help="system-matrix assembly timing")
    _common(p)
    p.add_argument("--models", default="eqanis,fp")
    p.add_argument("--fp-sample", type=int, default=0,
                   help="time FP on this many positions and extrapolate (0 = full grid)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        if args.n_jobs is not None:
            overrides.append(f"n_jobs={args.n_jobs}")
        cfg = load_config(args.config, overrides)
        return args.func(args, cfg)
    except (FPSolverError, QuadratureError, SeriesConvergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, TypeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
