"""Command-line front end: ``talweg {trace,talweg,align,valley-entry,concentrate,verify}``.

Exit codes: 0 success, 1 usage or config error, 2 numerical condition
(continuation stall, level too small, excessive exclusions, failed checks).
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
import warnings

import numpy as np

from . import analysis, geometry
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DegenerateSpectrumError, TalwegError
from .field import (
    _ball_points,
    _fd_jacobian,
    critical_point_info,
    default_working_radius,
    fd_gradient,
    find_critical_point,
    third_directional,
)
from .flow import gd_iterates, integrate_flow, rate_constants
from .io import write_csv, write_json
from .spectra import check_nonresonance

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclasses.dataclass
class Context:
    cfg: ExperimentConfig
    field: object
    x_star: np.ndarray
    frame: object
    radius: float
    out: str
    fmt: str
    hash: str

    def csv(self, name, header, rows):
        if self.fmt in ("csv", "both"):
            write_csv(os.path.join(self.out, name), header, rows, self.hash, self.cfg.seed)

    def json(self, name, payload):
        if self.fmt in ("json", "both"):
            write_json(os.path.join(self.out, name), payload, self.hash, self.cfg.seed)


def _context(cfg: ExperimentConfig) -> Context:
    field = cfg.field.build()
    guess = np.zeros(field.dim) if cfg.critical_point is None else np.asarray(cfg.critical_point, float)
    if guess.shape != (field.dim,):
        raise ConfigError(f"critical_point must have length {field.dim}")
    x_star = find_critical_point(field, guess)
    info = critical_point_info(field, x_star)
    radius = cfg.radius if cfg.radius is not None else default_working_radius(field, x_star)
    return Context(cfg, field, x_star, info.frame, float(radius), cfg.output.dir,
                   cfg.output.format, cfg.hash())


def _need(cfg, block):
    value = getattr(cfg, block)
    if value is None:
        raise ConfigError(f"config has no '{block}' block")
    return value


def _coords(x):
    return [float(v) for v in np.atleast_1d(x)]


def _xcols(d, prefix="x"):
    return [f"{prefix}{j + 1}" for j in range(d)]


# ---------------------------------------------------------------------------


def cmd_trace(ctx: Context):
    tc = _need(ctx.cfg, "trace")
    d = ctx.field.dim
    if tc.index > d:
        raise ConfigError(f"trace.index {tc.index} out of range for a {d}-dimensional field")
    curves = {}
    for name, direction in (("plus", 1), ("minus", -1)):
        curves[name] = geometry.trace_extremal(
            ctx.field, ctx.x_star, tc.index, step=tc.step, max_arclength=tc.arclength,
            direction=direction, radius=ctx.radius,
        )
    for name, c in curves.items():
        rows = [
            [name, k, c.arclength[k], *_coords(c.points[k]), c.residuals[k], c.eigenvalue_along[k]]
            for k in range(len(c.points))
        ]
        ctx.csv(f"trace_ext{tc.index}_{name}.csv",
                ["branch", "k", "arclength", *_xcols(d), "residual", "eigenvalue"], rows)
    ctx.json(f"trace_ext{tc.index}.json", {
        "index": tc.index,
        "x_star": ctx.x_star,
        "branches": {
            name: {"points": c.points, "arclength": c.arclength, "residuals": c.residuals,
                   "eigenvalue": c.eigenvalue_along, "stop_reason": c.stop_reason}
            for name, c in curves.items()
        },
    })
    stalled = [n for n, c in curves.items() if c.stalled]
    for name, c in curves.items():
        print(f"ext{tc.index} {name}: {len(c.points)} points, arclength {c.arclength[-1]:.6g}, "
              f"max residual {np.max(c.residuals):.3e}, stop: {c.stop_reason}")
    if stalled:
        print(f"continuation stalled on branch(es) {', '.join(stalled)}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _levels(tc, r_star):
    if tc.levels is not None:
        return np.asarray(tc.levels, dtype=float)
    return r_star + np.geomspace(tc.level_min, tc.level_max, tc.count)


def cmd_talweg(ctx: Context):
    tc = _need(ctx.cfg, "talweg")
    r_star = float(ctx.field.value(ctx.x_star))
    levels = _levels(tc, r_star)
    scan = geometry.talweg_branch_scan(ctx.field, ctx.x_star, levels, mode=tc.mode)
    d = ctx.field.dim
    rows = []
    for name, s in scan.items():
        for k in range(len(s.levels)):
            rows.append([name, s.levels[k], *_coords(s.points[k]), s.grad_norm[k], s.speed[k],
                         s.product[k], s.multiplier[k], s.second_order_ok[k]])
    ctx.csv("talweg_scan.csv",
            ["branch", "level", *_xcols(d), "grad_norm", "speed", "product", "multiplier",
             "second_order_ok"], rows)
    ctx.json("talweg_scan.json", {
        "mode": tc.mode,
        "r_star": r_star,
        "branches": {n: dataclasses.asdict(s) for n, s in scan.items()},
    })
    for name, s in scan.items():
        print(f"{name}: product at smallest level {s.product[0]:.8f}, "
              f"second order ok at all levels: {bool(np.all(s.second_order_ok))}")
    return EXIT_OK


def _starts(block, ctx, rng_offset=0):
    if block.starts is not None:
        X = np.asarray(block.starts, dtype=float)
        if X.ndim != 2 or X.shape[1] != ctx.field.dim:
            raise ConfigError(f"starts must be a list of {ctx.field.dim}-vectors")
        return X
    rng = np.random.default_rng(ctx.cfg.seed + rng_offset)
    return analysis.ball_sampler(ctx.x_star, ctx.radius)(rng, block.n)


def _run(ctx, x0, mode, gamma, horizon, samples):
    if mode == "continuous":
        return integrate_flow(ctx.field, x0, horizon, sample_times=np.linspace(0, horizon, samples),
                              abs_tol=0.0, x_star=ctx.x_star)
    return gd_iterates(ctx.field, x0, gamma, int(horizon), x_star=ctx.x_star, radius=ctx.radius)


def _prediction(frame, mode, gamma):
    lam = frame.eigenvalues
    if mode == "continuous":
        gap, l1 = lam[1] - lam[0], lam[0]
        return min(gap, l1), f"min(gap={gap:.6g}, lambda1={l1:.6g})"
    rc = rate_constants(lam, gamma)
    kd = rc.kappa_dir.get(frame.dim)
    mu = 1 - gamma * lam[0]
    if kd is None:
        return None, f"gamma outside kappa_dir interval ({rc.reasons.get(f'kappa_dir_{frame.dim}')})"
    return max(kd, mu), f"max(kappa_dir={kd:.6g}, 1-gamma*lambda1={mu:.6g})"


def cmd_align(ctx: Context):
    ac = _need(ctx.cfg, "align")
    d = ctx.field.dim
    if d < 2:
        raise ConfigError("alignment needs a field of dimension >= 2")
    if not 1 <= ac.target_index <= d:
        raise ConfigError(f"align.target_index {ac.target_index} out of range")
    v = ctx.frame.vector(ac.target_index)
    X0 = _starts(ac, ctx)
    predicted, label = _prediction(ctx.frame, ac.mode, ac.gamma)
    series_rows, summary_rows, summary = [], [], []
    for s, x0 in enumerate(X0):
        traj = _run(ctx, x0, ac.mode, ac.gamma, ac.horizon, ac.samples)
        al = analysis.alignment_series(traj, ctx.x_star, v)
        for k in range(len(al.times)):
            series_rows.append([s, al.times[k], al.secant_dist[k], al.velocity_dist[k]])
        fit = al.fit
        row = {
            "start": s, "x0": _coords(x0), "fitted_rate": None if fit is None else fit.rate,
            "ci_low": None if fit is None else fit.ci_low, "ci_high": None if fit is None else fit.ci_high,
            "r2": None if fit is None else fit.r2,
            "low_confidence": True if fit is None else fit.low_confidence,
            "fit_window": None if fit is None else list(fit.window),
            "predicted": predicted, "prediction": label, "escaped": traj.flag == "escape",
        }
        summary.append(row)
        summary_rows.append([s, *row["x0"], row["fitted_rate"], row["ci_low"], row["ci_high"],
                             row["r2"], row["low_confidence"], predicted, label])
    ctx.csv("align_series.csv", ["start", "time", "secant_dist", "velocity_dist"], series_rows)
    ctx.csv("align_summary.csv",
            ["start", *_xcols(d, "x0_"), "fitted_rate", "ci_low", "ci_high", "r2",
             "low_confidence", "predicted", "prediction"], summary_rows)
    ctx.json("align.json", {"mode": ac.mode, "gamma": ac.gamma, "target_index": ac.target_index,
                            "summary": summary})
    flagged = sum(r["low_confidence"] for r in summary)
    print(f"{len(summary)} starts, {flagged} low-confidence fits; prediction {label}")
    return EXIT_OK


def cmd_valley(ctx: Context):
    vc = _need(ctx.cfg, "valley")
    spec = geometry.ValleySpec(ctx.x_star, vc.width, ctx.radius)
    X0 = _starts(vc, ctx)
    rows, out = [], []
    for s, x0 in enumerate(X0):
        traj = _run(ctx, x0, vc.mode, vc.gamma, vc.horizon, vc.samples)
        try:
            t = analysis.valley_entry_time(traj, ctx.field, spec)
            note = "" if t is not None else "never settles in the valley"
        except ValueError as exc:
            t, note = None, str(exc)
        rows.append([s, *_coords(x0), t, note])
        out.append({"start": s, "x0": _coords(x0), "entry": t, "note": note})
    ctx.csv("valley_entry.csv", ["start", *_xcols(ctx.field.dim, "x0_"), "entry", "note"], rows)
    ctx.json("valley_entry.json", {"width": vc.width, "mode": vc.mode, "gamma": vc.gamma,
                                   "entries": out})
    for r in out:
        print(f"start {r['start']}: entry {r['entry']} {r['note']}")
    return EXIT_OK


def cmd_concentrate(ctx: Context):
    cc = _need(ctx.cfg, "concentrate")
    center = ctx.x_star if cc.set_center is None else np.asarray(cc.set_center, float)
    sampler = analysis.ball_sampler(center, cc.set_radius)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        rep = analysis.volume_concentration(
            ctx.field, ctx.x_star, sampler, cc.width, cc.times, n=cc.n, mode=cc.mode,
            gamma=cc.gamma, radius=ctx.radius, seed=ctx.cfg.seed,
        )
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    rows = [[rep.times[k], rep.ratios[k], rep.std_errors[k]] for k in range(len(rep.times))]
    ctx.csv("concentrate.csv", ["time", "ratio", "std_error"], rows)
    ctx.json("concentrate.json", dataclasses.asdict(rep))
    for r in rows:
        print(f"t={r[0]:g}: ratio {r[1]:.4f} +/- {r[2]:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _rel_err(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b))))


def _derivative_checks(field, x_star, radius, n, seed):
    X = _ball_points(field.dim, radius, n, seed=seed, center=x_star)
    rng = np.random.default_rng(seed)
    checks = []
    if field.grad_fn is not None:
        err = max(_rel_err(field.grad(x), fd_gradient(field.value_fn, x)) for x in X)
        checks.append(("gradient vs finite differences", err <= 1e-5, f"max rel err {err:.2e}"))
    if field.hess_fn is not None and field.grad_fn is not None:
        err = max(_rel_err(field.hess(x), _fd_jacobian(field.grad_fn, x)) for x in X)
        checks.append(("Hessian vs finite differences", err <= 1e-5, f"max rel err {err:.2e}"))
    if field.third_fn is not None and field.hess_fn is not None:
        errs = []
        for x in X:
            u = rng.standard_normal(field.dim)
            u /= np.linalg.norm(u)
            h = 1e-5
            fd = (field.hess(x + h * u) - field.hess(x - h * u)) / (2 * h)
            errs.append(_rel_err(third_directional(field, x, u), fd))
        err = max(errs)
        checks.append(("third derivative vs finite differences", err <= 1e-5, f"max rel err {err:.2e}"))
    if not checks:
        checks.append(("derivative cross-checks", True, "no analytic derivatives; FD only"))
    return checks


def cmd_verify(cfg: ExperimentConfig, out, fmt):
    max_order = 10 if cfg.verify is None else cfg.verify.max_order
    n_probe = 8 if cfg.verify is None else cfg.verify.probe_points
    checks = []
    ctx = None
    try:
        field = cfg.field.build()
        checks.append(("field construction", True, field.name))
    except DegenerateSpectrumError as exc:
        checks.append(("field construction", False, f"degenerate spectrum: {exc}"))
        field = None
    if field is not None:
        try:
            ctx = _context(cfg)
            ctx.out, ctx.fmt = out, fmt
            lam = ctx.frame.eigenvalues
            checks.append(("critical point", True, f"x* = {_coords(ctx.x_star)}"))
            checks.append(("simple spectrum", True, f"eigenvalues {[float(v) for v in lam]}"))
            checks.append(("strong minimum", bool(lam[0] > 0), f"lambda_1 = {lam[0]:.6g}"))
            ok, res = check_nonresonance(lam, max_order=max_order)
            detail = (f"none up to order {max_order}" if ok else
                      f"lambda_{res.index} = sum m_j lambda_j with m = {list(res.multi_index)}")
            checks.append(("non-resonance", ok, detail))
            checks.extend(_derivative_checks(ctx.field, ctx.x_star, ctx.radius, n_probe, cfg.seed))
        except DegenerateSpectrumError as exc:
            checks.append(("simple spectrum", False, f"degenerate spectrum: {exc}"))
        except TalwegError as exc:
            checks.append(("critical point", False, str(exc)))
    width = max(len(c[0]) for c in checks)
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")
    all_ok = all(c[1] for c in checks)
    h, seed = cfg.hash(), cfg.seed
    rows = [[name, ok, detail] for name, ok, detail in checks]
    if fmt in ("csv", "both"):
        write_csv(os.path.join(out, "verify.csv"), ["check", "passed", "detail"], rows, h, seed)
    if fmt in ("json", "both"):
        write_json(os.path.join(out, "verify.json"),
                   {"all_passed": all_ok,
                    "checks": [{"check": n, "passed": o, "detail": d} for n, o, d in checks]},
                   h, seed)
    return EXIT_OK if all_ok else EXIT_NUMERIC


COMMANDS = {
    "trace": cmd_trace,
    "talweg": cmd_talweg,
    "align": cmd_align,
    "valley-entry": cmd_valley,
    "concentrate": cmd_concentrate,
}


def build_parser():
    p = _Parser(prog="talweg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in [*COMMANDS, "verify"]:
        s = sub.add_parser(name)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--seed", type=int, help="override the config seed")
        s.add_argument("--out", help="output directory (overrides config)")
        s.add_argument("--format", choices=["csv", "json", "both"], help="output formats")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output.dir = args.out
        if args.format is not None:
            cfg.output.format = args.format
        if args.command == "verify":
            return cmd_verify(cfg, cfg.output.dir, cfg.output.format)
        ctx = _context(cfg)
        return COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TalwegError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
