"""``tslab``: reproducible experiment runner.

Every subcommand writes ``results.csv`` and ``report.json`` (and ``plot.svg``
with ``--plot``) into ``--out``. Exit status is 0 on success, 1 on usage or
configuration errors and 2 when an invariant or acceptance check fails.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import bounds as bnd
from . import elliptical as ell
from . import logconcave as lc
from . import regret as rl
from .config import ExperimentConfig, load_config
from .errors import TslabError
from .io import emit_csv, line_plot_svg, write_json

EXIT_OK, EXIT_USAGE, EXIT_CHECK = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--replicates", type=int)
    common.add_argument("--horizon", type=int)
    common.add_argument("--d", type=int, help="override the dimension (resets prior to identity)")
    common.add_argument("--r", type=float, help="override the action radius")
    common.add_argument("--sigma", type=float, help="override the noise scale")
    common.add_argument("--out", type=Path, default=Path("tslab-out"))
    common.add_argument("--plot", action="store_true", help="also write plot.svg")
    common.add_argument("--workers", type=int, help="worker processes (default: TSLAB_THREADS or CPU count)")

    p = _Parser(prog="tslab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", parents=[common], help="Monte Carlo regret curve with bound envelopes")
    s.add_argument("--policy", choices=("ts", "random"), default="ts")

    sub.add_parser("bounds", parents=[common], help="evaluate the closed-form bounds")

    e = sub.add_parser("elliptical-check", parents=[common], help="fuzz the generalized elliptical potential bound")
    e.add_argument("--instances", type=int)
    e.add_argument("--max-dim", type=int)
    e.add_argument("--max-log10-cond", type=float)

    sub.add_parser("lowerbound", parents=[common], help="lower-bound formulas over a horizon grid")

    g = sub.add_parser("logconcave", parents=[common], help="MALA-based Thompson sampling")
    g.add_argument("--mala-steps", type=int)
    g.add_argument("--mala-step-size", type=float)
    g.add_argument("--noise", choices=("gauss", "smoothed-laplace"))
    g.add_argument("--theorem3-c", type=float)

    c = sub.add_parser("decouple", parents=[common], help="burn-in versus long-run regret under prior scaling")
    c.add_argument("--scales", type=_float_list)
    c.add_argument("--sigma-factor", type=float)
    return p


def resolve_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    over = dict(seed=args.seed, replicates=args.replicates, horizon=args.horizon, r=args.r, sigma=args.sigma)
    if args.d is not None and args.d != cfg.d:
        # A new dimension invalidates the prior settings; fall back to the identity.
        cfg = replace(cfg, d=args.d, prior_eigenvalues=None, prior_rotation_seed=None, prior_mean=None)
    extras = {}
    for key in ("instances", "max_dim", "max_log10_cond", "mala_steps", "mala_step_size", "noise", "theorem3_c", "sigma_factor"):
        val = getattr(args, key, None)
        if val is not None:
            extras[key] = repr(val) if isinstance(val, float) else str(val)
    if getattr(args, "scales", None) is not None:
        extras["scales"] = ", ".join(repr(float(x)) for x in args.scales)
    return cfg.with_overrides(extras=extras, **over)


def _typed(cfg: ExperimentConfig, key: str, kind, default):
    raw = cfg.extra(key)
    if raw is None:
        return default
    try:
        return kind(raw)
    except ValueError:
        raise UsageError(f"config key {key}: cannot parse {raw!r}") from None


def _warn_nonzero_mean(cfg: ExperimentConfig) -> bool:
    if cfg.prior_mean is not None and any(cfg.prior_mean):
        print("warning: bounds assume a zero prior mean; checks against them are reported but not enforced", file=sys.stderr)
        return True
    return False


def _base_report(cfg: ExperimentConfig, command: str) -> dict:
    return {"command": command, "config": cfg.serialize(), "config_hash": cfg.config_hash()}


# ---------------------------------------------------------------------------
# Subcommands. Each returns (rows, schema, report, plot series or None, ok).


def cmd_simulate(cfg, args):
    nonzero = _warn_nonzero_mean(cfg)
    bc = cfg.bandit()
    curve = rl.bayes_regret_curve(bc, cfg.horizon, cfg.replicates, cfg.seed, policy=args.policy, workers=args.workers)
    rows = rl.regret_rows(bc, curve)
    for row in rows:
        row["config_hash"] = cfg.config_hash()
    pts = rl.sandwich(bc, curve)
    sandwich_ok = all(p.ok for p in pts)
    monotone = curve.is_monotone()
    enforce = args.policy == "ts" and not nonzero
    report = _base_report(cfg, "simulate")
    report.update(
        policy=args.policy,
        replicates=cfg.replicates,
        horizon=cfg.horizon,
        monotone=monotone,
        sandwich_ok=sandwich_ok,
        sandwich_enforced=enforce,
        ci_multiplier=rl.CI_MULTIPLIER,
    )
    series = {
        "mean regret": (curve.horizons, curve.mean_regret),
        "upper bound": (curve.horizons, [p.upper for p in pts]),
        "lower bound": (curve.horizons, [p.lower for p in pts]),
    }
    return rows, rl.REGRET_CSV_COLUMNS, report, series, monotone and (sandwich_ok or not enforce)


BOUNDS_COLUMNS = (
    "T", "c1", "c2", "beta", "upper_theorem1", "lower_theorem2", "lower_theorem2_to_d",
    "lower_zhang", "theorem3_bound",
)


def cmd_bounds(cfg, args):
    _warn_nonzero_mean(cfg)
    C = _typed(cfg, "theorem3_c", float, bnd.THEOREM3_DEFAULT_C)
    T = max(cfg.horizon, 1)
    s0 = cfg.prior_cov()
    rep = bnd.bound_report(cfg.d, T, cfg.sigma, cfg.r, s0, C)
    rows = []
    for t in rl.geometric_horizons(T):
        t = int(t)
        r = bnd.bound_report(cfg.d, t, cfg.sigma, cfg.r, s0, C)
        rows.append(
            {
                "T": t,
                "c1": r.c1,
                "c2": r.c2,
                "beta": r.beta,
                "upper_theorem1": r.upper_theorem1,
                "lower_theorem2": r.lower_theorem2,
                "lower_theorem2_to_d": r.lower_theorem2_to_d,
                "lower_zhang": r.lower_zhang,
                "theorem3_bound": C * sum(r.theorem3_terms),
            }
        )
    report = _base_report(cfg, "bounds")
    report.update(rep.to_dict())
    ok = all(r["upper_theorem1"] >= r["lower_theorem2"] for r in rows)
    series = {
        "upper": ([r["T"] for r in rows], [r["upper_theorem1"] for r in rows]),
        "lower": ([r["T"] for r in rows], [r["lower_theorem2"] for r in rows]),
    }
    return rows, BOUNDS_COLUMNS, report, series, ok


ELLIPTICAL_COLUMNS = ("index", "d", "T", "p", "cond", "mode", "lhs", "rhs", "rel_margin", "violated")


def cmd_elliptical(cfg, args):
    n = _typed(cfg, "instances", int, 1000)
    if n < 0:
        raise UsageError("--instances must be nonnegative")
    kwargs = {
        "max_dim": _typed(cfg, "max_dim", int, 8),
        "max_T": _typed(cfg, "max_horizon", int, 200),
        "max_log10_cond": _typed(cfg, "max_log10_cond", float, 8.0),
    }
    rep = ell.fuzz_campaign(n, cfg.seed, **kwargs)
    rows = [
        {
            "index": r.index,
            "d": r.d,
            "T": r.T,
            "p": r.p,
            "cond": r.cond,
            "mode": r.mode,
            "lhs": r.lhs,
            "rhs": r.rhs,
            "rel_margin": r.rel_margin,
            "violated": r.violated,
        }
        for r in rep.records
    ]
    report = _base_report(cfg, "elliptical-check")
    report.update(rep.summary())
    report.update(classic_checked=rep.classic_checked, classic_violations=rep.classic_violations, **kwargs)
    series = None
    if rows:
        series = {"relative margin": (list(range(len(rows))), sorted(r["rel_margin"] for r in rows))}
    return rows, ELLIPTICAL_COLUMNS, report, series, rep.violations == 0 and rep.classic_violations == 0


LOWER_COLUMNS = (
    "T", "d", "r", "tr_sigma0", "theorem2", "theorem2_to_d", "zhang", "corollary2_shape",
    "expected_norm", "expected_norm_floor",
)


def cmd_lowerbound(cfg, args):
    _warn_nonzero_mean(cfg)
    s0 = cfg.prior_cov()
    S = math.sqrt(s0.trace)
    en = bnd.expected_gaussian_norm(cfg.d)
    floor = math.sqrt(2 * cfg.d / math.pi)
    rows = []
    for t in rl.geometric_horizons(max(cfg.horizon, 1)):
        t = int(t)
        rows.append(
            {
                "T": t,
                "d": cfg.d,
                "r": cfg.r,
                "tr_sigma0": s0.trace,
                "theorem2": bnd.theorem2_from_cov(cfg.r, s0, t),
                "theorem2_to_d": bnd.theorem2_from_cov(cfg.r, s0, t, upper="d"),
                "zhang": cfg.r * bnd.zhang_bound(S, cfg.d, t),
                "corollary2_shape": bnd.corollary2_shape(S, cfg.r, cfg.d, t),
                "expected_norm": en,
                "expected_norm_floor": floor,
            }
        )
    report = _base_report(cfg, "lowerbound")
    report.update(expected_norm=en, expected_norm_floor=floor, expected_norm_ok=en >= floor)
    series = {
        "theorem 2": ([r["T"] for r in rows], [r["theorem2"] for r in rows]),
        "noiseless minimax": ([r["T"] for r in rows], [r["zhang"] for r in rows]),
    }
    return rows, LOWER_COLUMNS, report, series, en >= floor


def cmd_logconcave(cfg, args):
    nonzero = _warn_nonzero_mean(cfg)
    bc = cfg.bandit()
    noise_name = _typed(cfg, "noise", str, "gauss")
    try:
        noise = lc.make_noise(noise_name, cfg.sigma)
    except TslabError as exc:
        raise UsageError(str(exc)) from None
    sampler = lc.SamplerSettings(
        n_steps=_typed(cfg, "mala_steps", int, None),
        step_size=_typed(cfg, "mala_step_size", float, lc.DEFAULT_STEP_SIZE),
    )
    C = _typed(cfg, "theorem3_c", float, bnd.THEOREM3_DEFAULT_C)
    lcc = lc.LogConcaveConfig(cfg.d, cfg.r, lc.GaussianDensity(bc.mu0, bc.prior_cov), noise)
    curve = lc.lc_regret_curve(
        lcc, cfg.horizon, cfg.replicates, cfg.seed, sampler=sampler, config_hash=cfg.config_hash(), workers=args.workers
    )
    upper = lambda t: bnd.theorem3_bound(cfg.d, t, cfg.sigma, cfg.r, bc.prior_cov, C)  # noqa: E731
    rows = rl.regret_rows(bc, curve, upper=upper)
    within = all(
        r["mean_regret"] <= r["bound_upper"] + rl.CI_MULTIPLIER * r["ci_half_width"] for r in rows
    )
    report = _base_report(cfg, "logconcave")
    report.update(
        noise=noise_name,
        mala_steps=sampler.steps_for(cfg.d),
        mala_step_size=sampler.step_size,
        acceptance_rate=curve.acceptance_rate,
        theorem3_C=C,
        theorem3_C_is_calibration=True,
        within_theorem3=within,
    )
    ok = within or nonzero
    series = {
        "MALA-TS": (curve.horizons, curve.mean_regret),
        "log-concave bound": (curve.horizons, [r["bound_upper"] for r in rows]),
    }
    if noise_name == "gauss":
        exact = rl.bayes_regret_curve(bc, cfg.horizon, cfg.replicates, cfg.seed, horizons=curve.horizons, workers=args.workers)
        overlap = bool(np.all(np.abs(exact.mean_regret - curve.mean_regret) <= exact.half_width + curve.half_width))
        report.update(exact_mean_regret=exact.mean_regret, exact_half_width=exact.half_width, overlaps_exact=overlap)
        series["exact TS"] = (exact.horizons, exact.mean_regret)
        ok = ok and overlap
    return rows, rl.REGRET_CSV_COLUMNS, report, series, ok


DECOUPLE_COLUMNS = (
    "sigma", "scale", "tr_sigma0", "early_regret", "early_half_width", "late_slope", "late_half_width",
)

# Acceptance bands for the prior-scaling and noise-scaling comparisons.
LATE_SLOPE_TOL = 0.25
EARLY_RATIO_BAND = (2.5, 6.5)
SIGMA_SLOPE_TOL = 0.15


def cmd_decouple(cfg, args):
    bc = cfg.bandit()
    scales = _typed(cfg, "scales", lambda s: [float(x) for x in s.split(",")], [1.0, 16.0])
    factor = _typed(cfg, "sigma_factor", float, 2.0)
    T, n = cfg.horizon, cfg.replicates
    base = rl.decoupling_experiment(bc, scales, T, n, cfg.seed, workers=args.workers)
    noisy = rl.decoupling_experiment(bc.with_sigma(cfg.sigma * factor), [scales[0]], T, n, cfg.seed, workers=args.workers)
    rows = []
    for rep, sigma in ((base, cfg.sigma), (noisy, cfg.sigma * factor)):
        for k in range(rep.scales.size):
            rows.append(
                {
                    "sigma": sigma,
                    "scale": float(rep.scales[k]),
                    "tr_sigma0": float(rep.tr_sigma0[k]),
                    "early_regret": float(rep.early_regret[k]),
                    "early_half_width": float(rep.early_half_width[k]),
                    "late_slope": float(rep.late_slope[k]),
                    "late_half_width": float(rep.late_half_width[k]),
                }
            )
    checks = {"regrets_nonnegative": bool(np.all(base.early_regret >= 0) and np.all(base.late_slope >= 0))}
    summary = {}
    if base.scales.size > 1:
        lo, hi = int(np.argmin(base.scales)), int(np.argmax(base.scales))
        slope_change = abs(base.late_slope[hi] / base.late_slope[lo] - 1.0)
        early_ratio = base.early_regret[hi] / base.early_regret[lo]
        summary.update(scale_ratio=float(base.scales[hi] / base.scales[lo]), late_slope_change=slope_change, early_ratio=early_ratio)
        if math.isclose(base.scales[hi] / base.scales[lo], 16.0):
            checks["late_slope_stable"] = bool(slope_change < LATE_SLOPE_TOL)
            checks["early_ratio_in_band"] = bool(EARLY_RATIO_BAND[0] <= early_ratio <= EARLY_RATIO_BAND[1])
    sigma_ratio = noisy.late_slope[0] / base.late_slope[0]
    summary["sigma_slope_ratio"] = sigma_ratio
    checks["sigma_slope_scales"] = bool(abs(sigma_ratio / factor - 1.0) <= SIGMA_SLOPE_TOL)
    report = _base_report(cfg, "decouple")
    report.update(base=base.to_dict(), sigma_scaled=noisy.to_dict(), sigma_factor=factor, checks=checks, **summary)
    series = {
        "early regret": (base.tr_sigma0, base.early_regret),
        "late slope": (base.tr_sigma0, base.late_slope),
    }
    return rows, DECOUPLE_COLUMNS, report, series, all(checks.values())


COMMANDS = {
    "simulate": cmd_simulate,
    "bounds": cmd_bounds,
    "elliptical-check": cmd_elliptical,
    "lowerbound": cmd_lowerbound,
    "logconcave": cmd_logconcave,
    "decouple": cmd_decouple,
}


def _prepare_out(out: Path) -> None:
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".tslab-write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise UsageError(f"output directory {out} is not writable: {exc.strerror}") from None


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        _prepare_out(args.out)
        rows, schema, report, series, ok = COMMANDS[args.command](cfg, args)
    except UsageError as exc:
        print(f"tslab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TslabError, ValueError) as exc:
        print(f"tslab: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report["status"] = "ok" if ok else "check-failed"
    emit_csv(rows, schema, args.out / "results.csv")
    write_json(report, args.out / "report.json")
    if args.plot and series:
        line_plot_svg(series, args.out / "plot.svg", title=f"tslab {args.command}", log_x=args.command != "decouple")
    if not ok:
        print(f"tslab: {args.command}: invariant check failed (see report.json)", file=sys.stderr)
        return EXIT_CHECK
    return EXIT_OK


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
