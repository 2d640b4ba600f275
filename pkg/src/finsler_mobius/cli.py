"""Command-line driver.

    finsler-mobius check-mobius --config cfg.json --out results/
    finsler-mobius suite --config suite.json --jobs 4 --tol cocycle=1e-8

Every command reads a JSON config (see ``config.SCHEMA``), runs its checks
and writes ``report.json`` (plus CSV trajectories where relevant) into
``--out``; without ``--out`` the report goes to stdout. Exit codes: 0 all
checks pass, 1 a tolerance failed, 2 bad config, 3 numerical breakdown.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .conformal import (ConformalChange, b_contraction_check, cartan_covariant_change_check,
                        conformal_christoffel_check, conformal_metric_check, conformal_spray_check,
                        vertical_action_on_x_functions)
from .config import ExperimentConfig, draw_samples, load, parse_tol_overrides
from .core import connection_bundle, connection_invariants, flag_curvature, ricci
from .curves import (circle_preservation_experiment, frenet_curvatures, geodesic_ricci_profile,
                     integrate_geodesic, integrate_geodesic_circle, numeric_schwarzian, orthonormal_frame,
                     projective_invariance_check, projective_parameter_solve)
from .errors import (BadFrame, ConfigError, FinslerError, NumericalBreakdown, OrderUnsupported,
                     PoleOnGrid, SingularSample)
from .fields import exp as field_exp
from .jets import TangentSample
from .schwarzian import cartan_change_terms, cocycle_terms, mobius_residual
from .suite import CHECKS, Check, SuiteContext, run_group

EXIT_OK, EXIT_TOL, EXIT_CONFIG, EXIT_BREAKDOWN = 0, 1, 2, 3
INPUT_ERRORS = (ConfigError, BadFrame, SingularSample, PoleOnGrid, OrderUnsupported)
CHUNK = 16  # samples per work unit; fixed so --jobs never changes the grouping


# JSON output -------------------------------------------------------------------

def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return format(v, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with every float written to 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_string(str(k))}: {dumps(v, indent, _level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.floating, np.integer)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(dumps(v, indent, _level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + dumps(v, indent, _level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, np.ndarray):
        return dumps(obj.tolist(), indent, _level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _fmt_float(float(obj))
    return _string(str(obj))


def _string(s: str) -> str:
    import json
    return json.dumps(s)


# helpers -----------------------------------------------------------------------

def _samples(cfg: ExperimentConfig, n: int) -> list[TangentSample]:
    """Sample chunks for the configured count, honouring an explicit 'sample'."""
    if "sample" in cfg.raw:
        s = cfg.raw["sample"]
        if len(s["x"]) != n or len(s["y"]) != n:
            raise ConfigError(f"sample must have dimension {n}")
        return [TangentSample(np.asarray(s["x"], float)[None], np.asarray(s["y"], float)[None])]
    block = cfg.block("samples")
    count = block["count"]
    box = block.get("box", [-0.5, 0.5])
    return [draw_samples(cfg.seed, n, range(i, min(i + CHUNK, count)), box) for i in range(0, count, CHUNK)]


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _validate_on(m, chunks):
    for z in chunks:
        m.validate(z.x)


# commands: each returns (checks, data, verdict-or-None, csv files) -----------------

def cmd_inspect(cfg: ExperimentConfig, jobs: int):
    m = cfg.metric()
    z = _samples(cfg, m.dim)[0][0:1]
    _validate_on(m, [z])
    b = connection_bundle(m, z)
    ric, ric_ij = ricci(m, z)
    n = m.dim
    u = np.roll(np.eye(n)[0], 1) if abs(z.y[0, 1]) < abs(z.y[0, 0]) else np.eye(n)[0]
    data = {
        "x": z.x[0], "y": z.y[0], "F": float(m.norm(z.x[0], z.y[0])),
        "g": b.g[0], "g_inv": b.g_inv[0], "C": b.C[0], "G": b.G[0], "N": b.N[0],
        "gamma": b.gamma[0], "Gamma": b.Gamma[0],
        "ricci_scalar": float(ric[0]), "ricci_tensor": ric_ij[0],
        "flag_curvature": {"transverse": u, "K": float(flag_curvature(m, z, u[None])[0])},
    }
    checks = [Check(f"connection.{k}", v, cfg.tol("connection")) for k, v in connection_invariants(m, z).items()]
    return checks, data, None, {}


def _mobius_chunk(args):
    m, phi, z, tol = args
    r = mobius_residual(m, phi, z, tol)
    return r.per_sample, r.Phi


def cmd_check_mobius(cfg: ExperimentConfig, jobs: int):
    m = cfg.metric()
    phi = cfg.field("phi", m.dim)
    chunks = _samples(cfg, m.dim)
    _validate_on(m, chunks)
    tol = cfg.tol("mobius")
    parts = _map(_mobius_chunk, [(m, phi, z, tol) for z in chunks], jobs)
    per = np.concatenate([p[0] for p in parts])
    Phi = np.concatenate([p[1] for p in parts])
    resid = float(np.max(per))
    verdict = "mobius" if resid <= tol else "not-mobius"
    return [Check("mobius_residual", resid, tol)], {"per_sample_max_B": per, "Phi": Phi}, verdict, {}


def _cocycle_chunk(args):
    m, phi, sigma, z = args
    t = cocycle_terms(m, phi, sigma, z)
    raw = cartan_change_terms(ConformalChange(m, phi), z, sigma, traceless=False)
    resid = np.abs(t["sum"] - t["phi"] - t["sigma_scaled"] - t["A"])
    raw_resid = np.abs(t["sum"] - t["phi"] - t["sigma_scaled"] - raw)
    asym = np.abs(raw - np.swapaxes(raw, -1, -2))
    return float(np.max(resid)), float(np.max(raw_resid)), float(np.max(asym))


def cmd_cocycle(cfg: ExperimentConfig, jobs: int):
    m = cfg.metric()
    phi = cfg.field("phi", m.dim)
    sigma = cfg.field("sigma", m.dim)
    chunks = _samples(cfg, m.dim)
    _validate_on(m, chunks)
    parts = _map(_cocycle_chunk, [(m, phi, sigma, z) for z in chunks], jobs)
    resid = max(p[0] for p in parts)
    data = {"raw_A_residual": max(p[1] for p in parts), "A_asymmetry": max(p[2] for p in parts)}
    return [Check("cocycle", resid, cfg.tol("cocycle"))], data, None, {}


def _conformal_chunk(args):
    ch, z = args
    met = conformal_metric_check(ch, z)
    sp = conformal_spray_check(ch, z)
    cv = cartan_covariant_change_check(ch, z)
    return {"metric_g": met["g"], "metric_g_inv": met["g_inv"], "metric_F": met["F"],
            "christoffel": conformal_christoffel_check(ch, z), "spray": sp["spray"],
            "nonlinear_connection": sp["nonlinear_connection"], "cartan_horizontal": cv["horizontal"],
            "cartan_vertical": cv["vertical"], "b_contraction": b_contraction_check(ch, z),
            "L_annihilates_e2phi": vertical_action_on_x_functions(ch, z, field_exp(2.0 * ch.phi))}


def cmd_conformal_verify(cfg: ExperimentConfig, jobs: int):
    m = cfg.metric()
    ch = ConformalChange(m, cfg.field("phi", m.dim))
    chunks = _samples(cfg, m.dim)
    _validate_on(m, chunks)
    parts = _map(_conformal_chunk, [(ch, z) for z in chunks], jobs)
    worst = {k: max(p[k] for p in parts) for k in parts[0]}
    tol_name = {"metric_g": "metric_scaling", "metric_g_inv": "metric_scaling", "metric_F": "metric_scaling",
                "b_contraction": "riemannian"}
    checks = [Check(k, v, cfg.tol(tol_name.get(k, "conformal")))
              for k, v in worst.items()]
    return checks, {}, None, {}


def cmd_trace_geodesic(cfg: ExperimentConfig, jobs: int):
    m = cfg.metric()
    p = cfg.block("geodesic")
    traj = integrate_geodesic(m, p["x0"], p["y0"], p["length"], p.get("step", 1e-3))
    fr = frenet_curvatures(m, traj.x, traj.s)
    checks = [Check("unit_speed", traj.speed_drift(), cfg.tol("unit_speed")),
              Check("geodesic_kappa1", float(np.max(fr.kappa1)), cfg.tol("geodesic_kappa"))]
    data = {"end_point": traj.x[-1], "end_tangent": traj.X[-1], "steps": len(traj.s) - 1}
    return checks, data, None, {"geodesic.csv": traj}


def cmd_trace_circle(cfg: ExperimentConfig, jobs: int):
    m = cfg.metric()
    p = cfg.block("circle")
    X0, Y0 = p["X0"], p["Y0"]
    if not p.get("strict_frame", False):
        X0, Y0 = orthonormal_frame(m, p["x0"], X0, Y0)
    traj = integrate_geodesic_circle(m, p["x0"], X0, Y0, p["kappa"], p["length"], p.get("step", 1e-3))
    fr = frenet_curvatures(m, traj.x, traj.s)
    drift = traj.frame_drift()
    inner = slice(fr.margin, len(fr.kappa1) - fr.margin)
    checks = [Check("unit_speed", traj.speed_drift(), cfg.tol("unit_speed")),
              Check("frame_orthogonality", drift["orthogonality"], cfg.tol("frame")),
              Check("frame_unit_normal", drift["unit_normal"], cfg.tol("frame")),
              Check("frenet_kappa1", float(np.max(np.abs(fr.kappa1[inner] - traj.kappa))), cfg.tol("frenet")),
              Check("frenet_kappa2", fr.kappa2_max, cfg.tol("frenet"))]
    data = {"end_point": traj.x[-1], "steps": len(traj.s) - 1}
    return checks, data, None, {"circle.csv": traj}


def cmd_circle_preserve(cfg: ExperimentConfig, jobs: int):
    m = cfg.metric()
    phi = cfg.field("phi", m.dim)
    p = cfg.block("circle")
    rep = circle_preservation_experiment(m, phi, p["x0"], p["X0"], p["Y0"], p["kappa"], p["length"],
                                         p.get("step", 1e-3), mobius_tol=cfg.tol("mobius"))
    tol = cfg.tol("frenet")
    data = {"kappa1_mean": rep.kappa1_mean, "kappa1_std": rep.kappa1_std, "kappa1_rel_std": rep.kappa1_rel_std,
            "kappa2_max": rep.kappa2_max, "mobius_residual": rep.mobius_residual}
    checks = []
    if rep.is_mobius:
        checks = [Check("image_kappa1_rel_std", rep.kappa1_rel_std, tol),
                  Check("image_kappa2_max", rep.kappa2_max, tol)]
    verdict = "mobius" if rep.is_mobius else "not-mobius"
    return checks, data, verdict, {"circle.csv": rep.trajectory}


def cmd_projective(cfg: ExperimentConfig, jobs: int):
    p = cfg.block("projective")
    q = p.get("q", 0.0)
    step = p.get("step", 1e-3)
    data = {}
    if q == "ricci":
        m = cfg.metric()
        g = cfg.block("geodesic")
        geo = integrate_geodesic(m, g["x0"], g["y0"], p["length"], g.get("step", step))
        qs = geodesic_ricci_profile(m, geo)
        q = (geo.s, qs)
        data["q_range"] = [float(np.min(qs)), float(np.max(qs))]
    sol = projective_parameter_solve(q, p.get("p0", 0.0), p.get("dp0", 1.0), p.get("d2p0", 0.0), p["length"], step)
    # resample on the coarser grid where the finite-difference Schwarzian is resolved
    fd = p.get("fd_step", 2e-3)
    stride = max(1, int(round(fd / (sol.s[1] - sol.s[0]))))
    ps = sol.p[::stride]
    h = float(sol.s[stride] - sol.s[0])
    T = p.get("T", [1.0, 0.0, 0.0, 1.0])
    S = numeric_schwarzian(ps, h)
    if callable(q) or isinstance(q, tuple):
        s_grid = sol.s[::stride]
        q_vals = np.interp(s_grid, q[0], q[1]) if isinstance(q, tuple) else np.array([q(s) for s in s_grid])
    else:
        q_vals = float(q)
    checks = [Check("invariance", projective_invariance_check(ps, h, T), cfg.tol("projective")),
              Check("schwarzian_recovers_q", float(np.max(np.abs(S - q_vals)[3:-3])), cfg.tol("projective_q"))]
    data.update({"p_end": float(sol.p[-1]), "dp_end": float(sol.dp[-1]), "fd_step": h})
    return checks, data, None, {}


def cmd_suite(cfg: ExperimentConfig, jobs: int):
    if cfg.seed is None:
        raise ConfigError("suite needs a seed (config 'seed' or --seed)")
    opts = cfg.raw.get("suite", {})
    ctx = SuiteContext(seed=cfg.seed, samples=opts.get("samples", 20),
                       curve_length=float(opts.get("curve_length", 5.0)), tolerances=dict(cfg.tolerances))
    names = opts.get("only", list(CHECKS))
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown suite groups: {unknown}")
    groups = _map(run_group, [(n, ctx) for n in names], jobs)
    return [c for grp in groups for c in grp], {"groups": names}, None, {}


COMMANDS = {
    "inspect": (cmd_inspect, "connection objects and curvatures at one sample"),
    "check-mobius": (cmd_check_mobius, "Schwarzian tensor of phi on random samples"),
    "cocycle": (cmd_cocycle, "composition law of the Schwarzian tensor"),
    "conformal-verify": (cmd_conformal_verify, "conformal-change formulas vs direct recomputation"),
    "trace-geodesic": (cmd_trace_geodesic, "integrate a unit-speed geodesic"),
    "trace-circle": (cmd_trace_circle, "integrate a geodesic circle"),
    "circle-preserve": (cmd_circle_preserve, "image of a circle under a conformal change"),
    "projective": (cmd_projective, "projective parameter ODE and fractional-linear invariance"),
    "suite": (cmd_suite, "every property check"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finsler-mobius", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", help="directory for report.json and CSV dumps (default: stdout)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
        p.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a tolerance")
        p.add_argument("--seed", type=int, help="override the config seed")
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    fn, _ = COMMANDS[args.command]
    report = {"command": args.command}
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        if args.seed is not None and not 0 <= args.seed < 2 ** 64:
            raise ConfigError("--seed must fit in an unsigned 64-bit integer")
        cfg = load(args.config, seed=args.seed, tol_overrides=parse_tol_overrides(args.tol))
        report["config"] = cfg.echo()
        checks, data, verdict, dumps_ = fn(cfg, args.jobs)
    except (*INPUT_ERRORS, ValueError, KeyError) as exc:
        # ValueError/KeyError here come from malformed metric or field descriptions
        msg = f"missing key {exc}" if isinstance(exc, KeyError) else str(exc)
        print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalBreakdown, FinslerError) as exc:
        print(f"numerical breakdown: {type(exc).__name__}: {exc}", file=sys.stderr)
        report.update({"checks": [], "verdict": "breakdown", "error": f"{type(exc).__name__}: {exc}"})
        _emit(report, args.out, {}, t0)
        return EXIT_BREAKDOWN
    ok = all(c.passed for c in checks)
    report["checks"] = [c.as_dict() for c in checks]
    report["verdict"] = verdict if verdict is not None else ("pass" if ok else "fail")
    report["data"] = data
    _emit(report, args.out, dumps_, t0)
    for c in checks:
        if not c.passed:
            print(f"FAIL {c.name}: residual {c.residual:.3g} > tol {c.tol:.3g}", file=sys.stderr)
    return EXIT_OK if ok else EXIT_TOL


def _emit(report: dict, out, trajectories: dict, t0: float) -> None:
    report["engine_version"] = __version__
    report["wall_time"] = time.perf_counter() - t0
    text = dumps(report) + "\n"
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(text)
    for name, traj in trajectories.items():
        traj.write_csv(out / name)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
