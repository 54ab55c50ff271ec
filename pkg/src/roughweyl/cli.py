"""Command line entry point.

    roughweyl sweep CONFIG
    roughweyl mollify-check CONFIG
    roughweyl cover CONFIG
    roughweyl bracketing CONFIG
    roughweyl oscillator --d 2 --hbar-min 0.02 --hbar-max 0.2 --gamma 0

Exit status: 0 when every verdict passes, 2 when any fails, 3 on a bad config.
"""
from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import (SweepConfig, _floats, echo, geometric_hbars, load_sweep_config,
                     potential_from_section, read_ini)
from .errors import ConfigError, PreconditionError
from .grid import GridSpec
from .mollify import build_framing, certify_mollifier_bounds, eigenvalue_bracketing_check
from .potentials import HolderClass, choose_scaling
from .report import emit_report, write_json
from .sweep import ExploratoryWarning, run_sweep, sweep_report
from .weyl import phase_space_experiment

log = logging.getLogger("roughweyl")

OK, FAIL, BAD_CONFIG = 0, 2, 3


def _verdict(flag: bool) -> str:
    return "PASS" if flag else "FAIL"


def _section(cp, name):
    if not cp.has_section(name):
        raise ConfigError(f"missing [{name}] section")
    return cp[name]


def _json_path(cp, base: Path):
    if cp.has_section("output") and "json" in cp["output"]:
        return base / cp["output"]["json"]
    return None


def _sweep_verdict(cfg: SweepConfig, records) -> bool:
    rep, bad = sweep_report(cfg, records)
    if bad:
        print(f"exploratory: {'; '.join(bad)}")
    emit_report(records, rep, cfg.csv_path, cfg.json_path, cfg.echo,
                {"exploratory": bool(bad), "theorem_violations": bad})
    for r in records:
        if r.status != "ok":
            print(f"hbar={r.hbar:.6g}: {r.status}")
    if rep.slope is None:
        print(f"{cfg.name}: {rep.status} -> {rep.verdict}")
    else:
        print(f"{cfg.name}: slope {rep.slope:.4f} +- {rep.half_width:.4f} on '{rep.column}', "
              f"predicted {rep.predicted:.4f} (tol {rep.tolerance}) -> {rep.verdict}")
    return rep.verdict == "PASS"


def cmd_sweep(args) -> bool:
    cfg = load_sweep_config(args.config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExploratoryWarning)
        records = run_sweep(cfg)
    return _sweep_verdict(cfg, records)


def cmd_oscillator(args) -> bool:
    try:
        hbars = geometric_hbars(args.hbar_max, args.hbar_min, args.points)
        cfg = SweepConfig(name=f"oscillator-d{args.d}", strategy="oscillator", gamma=args.gamma,
                          mode="capped", hbars=hbars, dim=args.d, lam=args.lam,
                          csv_path=args.csv, json_path=args.json,
                          echo={"oscillator": {"d": args.d, "hbar_min": args.hbar_min,
                                               "hbar_max": args.hbar_max, "gamma": args.gamma,
                                               "points": args.points, "lambda": args.lam}})
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    records = run_sweep(cfg)
    return _sweep_verdict(cfg, records)


def _mollify_section(s) -> tuple[bool, dict]:
    try:
        if s.get("function", "abs_power") != "abs_power":
            raise ConfigError("only function = abs_power is supported")
        hc = HolderClass(s.getint("k", 1), s.getfloat("mu", 0.5))
        p = s.getfloat("exponent", hc.order)
        eps = _floats(s.get("eps", "0.0625,0.03125,0.015625,0.0078125,0.00390625"))
        alpha_max = s.getint("alpha_max", 2)
        window = s.getfloat("window", 0.5)
    except ValueError as exc:
        raise ConfigError(f"[mollify]: {exc}") from exc
    rep = certify_mollifier_bounds(lambda x: np.abs(x) ** p, hc, eps, alpha_max, window=window)
    for a in sorted(rep.variation):
        print(f"alpha={a}: ratios {' '.join(f'{r:.4g}' for r in rep.ratios[a])} "
              f"variation {rep.variation[a]:.3f}")
    print(f"mollifier bounds |x|^{p:g} (k={hc.k}, mu={hc.mu}): {_verdict(rep.passed)}")
    return rep.passed, rep.to_dict()


def _phase_section(cp, s, name) -> tuple[bool, dict]:
    spec = potential_from_section(_section(cp, "potential"), name)
    try:
        eps = _floats(s["eps"])
        hbar = s.getfloat("hbar", 0.1)
        gamma = s.getfloat("gamma", 0.0)
        n = s.getint("n", 100_001)
        half = s.getfloat("half_width") if "half_width" in s else None
        tol = s.getfloat("tolerance", 0.2)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"[phase]: {exc}") from exc
    rep = phase_space_experiment(spec, hbar, eps, n, gamma, half, tol)
    slope = "n/a" if rep.slope is None else f"{rep.slope:.4f} +- {rep.half_width:.4f}"
    print(f"phase-space |Weyl(V_eps) - Weyl(V)|: slope {slope}, need >= {rep.predicted - tol:.3g} "
          f"-> {_verdict(rep.passed)}")
    return rep.passed, rep.to_dict()


def cmd_mollify(args) -> bool:
    cp, base = read_ini(args.config)
    if not (cp.has_section("mollify") or cp.has_section("phase")):
        raise ConfigError("need a [mollify] or [phase] section")
    ok, payload = True, {"config": echo(cp), "environment": _env()}
    if cp.has_section("mollify"):
        passed, payload["mollify"] = _mollify_section(cp["mollify"])
        ok &= passed
    if cp.has_section("phase"):
        passed, payload["phase"] = _phase_section(cp, cp["phase"], Path(args.config).stem)
        ok &= passed
    out = _json_path(cp, base)
    if out is not None:
        write_json(out.with_name(out.stem + "_mollify.json"), payload)
    return ok


def _env():
    from .report import environment_stamp

    return environment_stamp()


def _grid_from(sec, spec, default_n: int) -> GridSpec:
    return GridSpec(spec.dim, sec.getfloat("half_width", spec.box), sec.getint("n", default_n))


def cmd_bracketing(args) -> bool:
    cp, base = read_ini(args.config)
    spec = potential_from_section(_section(cp, "potential"), Path(args.config).stem)
    s = _section(cp, "bracketing")
    try:
        hbars = _floats(s.get("hbar", "0.1"))
        grid = _grid_from(s, spec, 1001 if spec.dim == 1 else 51)
        margin = s.getfloat("margin", 0.1)
        gamma = s.getfloat("gamma", 0.0)
        mode = s.get("mode", "capped")
    except ValueError as exc:
        raise ConfigError(f"[bracketing]: {exc}") from exc
    rule = choose_scaling(gamma, spec.regularity, mode)
    results, ok = [], True
    for hbar in hbars:
        fr = build_framing(spec, rule(hbar), grid, margin)
        rep = eigenvalue_bracketing_check(fr, hbar, check_resolution=False)
        ok &= rep.passed
        print(f"hbar={hbar:.4g} eps={fr.epsilon:.4g} shift={fr.shift:.3g}: "
              f"framing violations {rep.framing_violations}, eigenvalue inversions {len(rep.violations)} "
              f"(max {rep.max_inversion:.2e}), N+ <= N <= N- {rep.counts} -> {_verdict(rep.passed)}")
        results.append({"hbar": hbar, "epsilon": fr.epsilon, "c_shift": fr.c_shift, **rep.to_dict()})
    out = _json_path(cp, base)
    if out is not None:
        write_json(out.with_name(out.stem + "_bracketing.json"),
                   {"config": echo(cp), "runs": results, "verdict": _verdict(ok), "environment": _env()})
    print(f"bracketing: {_verdict(ok)}")
    return ok


def cmd_cover(args) -> bool:
    from .cover import build_partition, cover_setup, greedy_cover, ratio_spread, scaled_derivative_ratios

    cp, base = read_ini(args.config)
    spec = potential_from_section(_section(cp, "potential"), Path(args.config).stem)
    s = _section(cp, "cover")
    try:
        hbars = _floats(s.get("hbars", "0.1,0.05,0.025"))
        grid = _grid_from(s, spec, 480_000 if spec.dim == 1 else 801)
        rho = s.getfloat("rho", 0.1)
        spread_max = s.getfloat("spread_max", 10.0)
        sum_tol = s.getfloat("sum_tol", 1e-10)
    except ValueError as exc:
        raise ConfigError(f"[cover]: {exc}") from exc
    rule = choose_scaling(0.0, spec.regularity, s.get("mode", "capped"))
    runs, ok, bounds = [], True, set()
    for hbar in hbars:
        params = rule(hbar)
        fr = build_framing(spec, params, grid)
        setup = cover_setup(fr, hbar, rho)
        cov = greedy_cover(setup.scale, delta=params.delta)
        pou = build_partition(cov, setup.support)
        ratios = scaled_derivative_ratios(pou)
        spreads = {a: ratio_spread(r) for a, r in ratios.items()}
        err = pou.sum_error()
        bounds.add(cov.packing_bound)
        good = (cov.covered and cov.multiplicity <= cov.packing_bound and err <= sum_tol
                and all(v <= spread_max for v in spreads.values()))
        ok &= good
        print(f"hbar={hbar:.4g}: A={setup.scale.A:g} patches={len(cov.patches)} "
              f"multiplicity={cov.multiplicity} bound={cov.packing_bound} sum_error={err:.2e} "
              f"spreads={[round(v, 3) for v in spreads.values()]} -> {_verdict(good)}")
        runs.append({"hbar": hbar, "A": setup.scale.A, "rho": setup.scale.rho, "margin": setup.scale.margin,
                     "patches": len(cov.patches), "multiplicity": cov.multiplicity,
                     "packing_bound": cov.packing_bound, "covered": cov.covered, "sum_error": err,
                     "spreads": {str(a): v for a, v in spreads.items()}, "verdict": _verdict(good)})
    if len(bounds) > 1:
        print(f"packing bound changes with hbar: {sorted(bounds)}")
        ok = False
    out = _json_path(cp, base)
    if out is not None:
        write_json(out.with_name(out.stem + "_cover.json"),
                   {"config": echo(cp), "runs": runs, "verdict": _verdict(ok), "environment": _env()})
    print(f"cover: {_verdict(ok)}")
    return ok


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roughweyl", description="Weyl-law remainder experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in (("sweep", cmd_sweep), ("mollify-check", cmd_mollify), ("cover", cmd_cover),
                     ("bracketing", cmd_bracketing)):
        q = sub.add_parser(name)
        q.add_argument("config")
        q.set_defaults(func=fn)
    q = sub.add_parser("oscillator", help="lattice-oracle sweep for the harmonic oscillator")
    q.add_argument("--d", type=int, required=True)
    q.add_argument("--hbar-min", type=float, default=0.02)
    q.add_argument("--hbar-max", type=float, default=0.2)
    q.add_argument("--gamma", type=float, default=0.0)
    q.add_argument("--points", type=int, default=8)
    q.add_argument("--lambda", dest="lam", type=float, default=1.0)
    q.add_argument("--csv", type=Path)
    q.add_argument("--json", type=Path)
    q.set_defaults(func=cmd_oscillator)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return BAD_CONFIG if exc.code else OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        passed = args.func(args)
    except (ConfigError, PreconditionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return BAD_CONFIG
    return OK if passed else FAIL


if __name__ == "__main__":
    sys.exit(main())
