"""Command-line front end.

Subcommands:
    run      one flow-map trajectory, records CSV + JSON summary
    decay    run + decay-rate fits + quantitative gates
    msweep   background-strength sweep against the exact linear evolution
    compare  flow-map vs fixed-grid cross-validation from matched data
    linear   exact single-mode trajectory (no PDE solve)
    gen-ic   write a validated initial-data checkpoint

Exit codes: 0 success / gates passed, 1 a quantitative gate failed,
2 configuration or runtime error.  Gates exist only in decay and msweep;
their thresholds live in the gates.* config keys.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from dataclasses import replace
from typing import Dict, List

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .config import (SimConfig, config_from_mapping, config_to_mapping,
                     load_config)
from .diagnostics import fit_decay, msweep_slope
from .driver import (RunResult, compare_eulerian, deviation_sweep,
                     make_initial_state, run_flow_map)
from .errors import ConfigError, MhdflowError
from .initial_data import InitialDataSpec, validate
from .linear import LinearModeState, evolve_mode_exact
from .output import (Check, fit_entry, summarize_run, write_records_csv,
                     write_summary)
from .spectral import Grid

ENVELOPE_FACTOR = 1.05   # late energy may not exceed this times its t<=1 sup
_WEIGHT_POWERS = {"v_H1": 1.5, "v_H2": 1.0, "b_H2": 0.5}


def _build_config(args) -> SimConfig:
    overrides: Dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        cfg = config_from_mapping(overrides)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed).validate()
    return cfg


def _log(args):
    if args.quiet:
        return None
    return lambda msg: print(msg, file=sys.stderr)


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _initial_fields(cfg: SimConfig):
    """(grid, eta0, u0) per the config's data family."""
    if cfg.family == "from_file":
        state = load_checkpoint(cfg.path)
        return state.grid, state.eta, state.u
    grid = Grid(cfg.n, cfg.length)
    spec = InitialDataSpec(family=cfg.family, epsilon=cfg.epsilon,
                           seed=cfg.seed, band=cfg.band)
    state = make_initial_state(grid, spec, m=cfg.m, nu=cfg.nu, kappa=cfg.kappa)
    return grid, state.eta, state.u


def _run_info(res: RunResult) -> dict:
    return {"dt": res.dt, "n_steps": res.n_steps, "scheme": res.scheme,
            "wall_time": res.wall_time}


def _finish(out: str, summary: dict, checks: List[Check], quiet: bool) -> int:
    write_summary(os.path.join(out, "summary.json"), summary)
    for c in checks:
        print(c.line())
    if not quiet:
        print(f"wrote {os.path.join(out, 'summary.json')}", file=sys.stderr)
    return 0 if all(c.passed for c in checks) else 1


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_run(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    _, eta0, u0 = _initial_fields(cfg)
    report = validate(eta0, u0, cfg.m)
    res = run_flow_map(eta0, u0, m=cfg.m, nu=cfg.nu, kappa=cfg.kappa,
                       dt=cfg.dt, n_steps=cfg.n_steps,
                       record_every=cfg.record_every, scheme=cfg.scheme,
                       odevity_project_steps=cfg.odevity_project,
                       pullback=cfg.pullback,
                       state_every=cfg.state_every or None,
                       companion=cfg.companion, log=_log(args))
    write_records_csv(os.path.join(out, "records.csv"), res.records)
    if args.save_final:
        save_checkpoint(args.save_final, res.final)
    summary = summarize_run("run", config=config_to_mapping(cfg),
                            run=_run_info(res), final=res.records[-1],
                            validation=report.as_dict())
    return _finish(out, summary, [], args.quiet)


def _decay_window(cfg: SimConfig, damped: bool) -> tuple:
    lo = cfg.window_lo
    if lo < 0:
        lo = min(5.0, 0.4 * cfg.t_final) if damped else 0.2 * cfg.t_final
    hi = cfg.window_hi if cfg.window_hi >= 0 else cfg.t_final
    return lo, hi


def _cmd_decay(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    if cfg.kappa > 0:
        return _decay_damped(args, cfg, out)
    if cfg.nu <= 0:
        raise ConfigError("decay needs physics.nu > 0 or physics.kappa > 0")
    return _decay_viscous(args, cfg, out)


def _decay_viscous(args, cfg: SimConfig, out: str) -> int:
    _, eta0, u0 = _initial_fields(cfg)
    report = validate(eta0, u0, cfg.m)
    res = run_flow_map(eta0, u0, m=cfg.m, nu=cfg.nu, dt=cfg.dt,
                       n_steps=cfg.n_steps, record_every=cfg.record_every,
                       pullback=True, log=_log(args))
    write_records_csv(os.path.join(out, "records.csv"), res.records)
    window = _decay_window(cfg, damped=False)
    t = np.array([r.t for r in res.records])

    fits, checks = [], []
    gate = {"v_H1": cfg.slope_v_h1, "v_H2": cfg.slope_v_h2,
            "b_H2": cfg.slope_b_h2}
    slopes = {}
    for key in ("v_H1", "v_H2", "b_H2"):
        fit = fit_decay(t, [r.norms[key] for r in res.records], "power", window)
        slopes[key] = fit.slope
        fits.append(fit_entry(key, fit))
        checks.append(Check(f"slope_{key}", fit.slope, gate[key],
                            claim="C4-viscous-decay"))
    for key, p in _WEIGHT_POWERS.items():
        v = np.array([r.norms[key] for r in res.records])
        weighted = (1.0 + t) ** p * v
        early = weighted[t <= window[0]].max()
        checks.append(Check(f"weighted_{key}_ratio", weighted[-1] / early,
                            cfg.weighted_factor, claim="C4-viscous-decay"))
    checks.append(Check("separation_vH2_bH2", slopes["v_H2"] - slopes["b_H2"],
                        -cfg.separation, claim="C4-viscous-decay"))
    e20 = np.array([r.norms["e20"] for r in res.records])
    early_sup = e20[t <= 1.0].max()
    checks.append(Check("energy_envelope", e20.max() / early_sup,
                        ENVELOPE_FACTOR, claim="C10-boundedness"))

    summary = summarize_run("decay", config=config_to_mapping(cfg),
                            run=_run_info(res), final=res.records[-1],
                            validation=report.as_dict(), fits=fits,
                            checks=checks)
    return _finish(out, summary, checks, args.quiet)


def _decay_damped(args, cfg: SimConfig, out: str) -> int:
    if cfg.nu > 0:
        raise ConfigError("damped decay needs physics.nu = 0")
    window = _decay_window(cfg, damped=True)
    fits, checks, rates = [], [], {}
    m2 = 2.0 * cfg.m
    for label, m, dt in (("primary", cfg.m, cfg.dt),
                         ("double_m", m2, cfg.dt * cfg.m / m2)):
        grid = Grid(cfg.n, cfg.length)
        eps = cfg.epsilon if cfg.scaling == "fixed_data" else 1.0 / m
        spec = InitialDataSpec(family=cfg.family, epsilon=eps,
                               seed=cfg.seed, band=cfg.band)
        state0 = make_initial_state(grid, spec, m=m, kappa=cfg.kappa)
        res = run_flow_map(state0.eta, state0.u, m=m, kappa=cfg.kappa, dt=dt,
                           n_steps=int(round(cfg.t_final / dt)),
                           record_every=cfg.record_every, log=_log(args))
        name = ("records.csv" if label == "primary"
                else f"records_m{m:g}.csv")
        write_records_csv(os.path.join(out, name), res.records)
        fit = fit_decay([r.t for r in res.records],
                        [r.norms["damped_sq"] for r in res.records],
                        "exponential", window)
        rates[label] = fit.slope
        fits.append(fit_entry(f"damped_sq_m{m:g}", fit))
        if label == "primary":
            checks.append(Check("damped_rate_positive", fit.slope, 0.0,
                                comparator=">", claim="C6-damped-decay"))
            checks.append(Check("damped_fit_r2", fit.r2, cfg.damped_r2,
                                comparator=">", claim="C6-damped-decay"))
            primary_run = res
    agreement = abs(rates["primary"] - rates["double_m"]) / rates["primary"]
    checks.append(Check("rate_m_independence", agreement, cfg.rate_agreement,
                        claim="C6-damped-decay"))
    summary = summarize_run("decay", config=config_to_mapping(cfg),
                            run=_run_info(primary_run),
                            final=primary_run.records[-1], fits=fits,
                            checks=checks)
    return _finish(out, summary, checks, args.quiet)


def _cmd_msweep(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    if cfg.kappa > 0:
        mode, gate = "damped", cfg.msweep_slope_damped
    elif cfg.nu > 0:
        mode, gate = "viscous", cfg.msweep_slope
    else:
        raise ConfigError("msweep needs physics.nu > 0 or physics.kappa > 0")
    try:
        ms = [float(x) for x in cfg.ms.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"sweep.ms is not a comma list of numbers: {cfg.ms!r}")
    points = deviation_sweep(cfg.n, ms, mode=mode, nu=cfg.nu, kappa=cfg.kappa,
                             t_final=cfg.t_final, family=cfg.family,
                             seed=cfg.seed, band=cfg.band,
                             scaling=cfg.scaling, epsilon=cfg.epsilon,
                             max_workers=args.threads, log=_log(args))
    for p in points:
        write_records_csv(os.path.join(out, f"records_m{p.m:g}.csv"),
                          p.records)
    slope, stderr = msweep_slope([p.m for p in points], [p.d for p in points])
    claim = "C7-damped-msweep" if mode == "damped" else "C5-viscous-msweep"
    checks = [Check("msweep_slope", slope, gate, claim=claim)]
    sweep_rows = [{"m": p.m, "d": p.d, "dt": p.dt, "n_steps": p.n_steps,
                   "sup_eta_h3_sq": p.deviation.sup_eta_h3_sq,
                   "int_ub_h2_sq": p.deviation.int_ub_h2_sq,
                   "sup_damped_sq": p.deviation.sup_damped_sq}
                  for p in points]
    summary = summarize_run("msweep", config=config_to_mapping(cfg),
                            sweep=sweep_rows, checks=checks,
                            comparison={"slope": slope, "stderr": stderr,
                                        "mode": mode})
    return _finish(out, summary, checks, args.quiet)


def _cmd_compare(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    comp = compare_eulerian(cfg.n, m=cfg.m, epsilon=cfg.epsilon, nu=cfg.nu,
                            dt=cfg.dt, t_final=cfg.t_final,
                            frame_count=args.frames, log=_log(args))
    doc = {"n": comp.n, "m": comp.m, "epsilon": comp.epsilon, "dt": comp.dt,
           "t_final": comp.t_final, "v_rel_diff": comp.v_rel_diff,
           "frozen_in_rel": comp.frozen_in_rel,
           "particle_rel": comp.particle_rel, "v_lag_l2": comp.v_lag_l2,
           "wall_time": comp.wall_time}
    summary = summarize_run("compare", config=config_to_mapping(cfg),
                            comparison=doc)
    if not args.quiet:
        for k in ("v_rel_diff", "frozen_in_rel", "particle_rel"):
            print(f"{k} = {doc[k]:.3e}", file=sys.stderr)
    return _finish(out, summary, [], args.quiet)


def _cmd_linear(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    k1, k2 = args.k1, args.k2
    norm = float(np.hypot(k1, k2))
    if norm == 0.0:
        raise ConfigError("the mode (0, 0) does not evolve; pick k != 0")
    direction = np.array([-k2, k1], dtype=np.complex128) / norm
    mode = LinearModeState(k=(float(k1), float(k2)),
                           eta_hat=args.amplitude * direction,
                           u_hat=args.amplitude * direction,
                           nu=cfg.nu, kappa=cfg.kappa, m=cfg.m)
    ts = np.linspace(0.0, cfg.t_final, args.samples)
    path = os.path.join(out, "linear.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "eta1_re", "eta1_im", "eta2_re", "eta2_im",
                         "u1_re", "u1_im", "u2_re", "u2_im"])
        for t in ts:
            st = evolve_mode_exact(mode, float(t))
            row = [repr(float(t))]
            for z in (*st.eta_hat, *st.u_hat):
                row += [repr(float(z.real)), repr(float(z.imag))]
            writer.writerow(row)
    summary = summarize_run("linear", config=config_to_mapping(cfg),
                            comparison={"k1": float(k1), "k2": float(k2),
                                        "amplitude": args.amplitude,
                                        "samples": float(args.samples)})
    return _finish(out, summary, [], args.quiet)


def _cmd_gen_ic(args) -> int:
    cfg = _build_config(args)
    out = _outdir(args)
    if cfg.family == "from_file":
        raise ConfigError("gen-ic generates data; initial.family must not be"
                          " from_file")
    grid = Grid(cfg.n, cfg.length)
    spec = InitialDataSpec(family=cfg.family, epsilon=cfg.epsilon,
                           seed=cfg.seed, band=cfg.band)
    state0 = make_initial_state(grid, spec, m=cfg.m, nu=cfg.nu,
                                kappa=cfg.kappa)
    report = validate(state0.eta, state0.u, cfg.m)
    path = os.path.join(out, args.file)
    save_checkpoint(path, state0)
    summary = summarize_run("gen-ic", config=config_to_mapping(cfg),
                            validation=report.as_dict())
    if not args.quiet:
        print(f"wrote {path}", file=sys.stderr)
    return _finish(out, summary, [], args.quiet)


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mhdflow",
        description="Spectral simulation and verification suite for strong-"
                    "background MHD on the periodic box.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat dotted-key config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override initial.seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker processes for sweep members")
        sp.add_argument("--quiet", action="store_true",
                        help="suppress progress output")

    sp = sub.add_parser("run", help="one flow-map trajectory")
    common(sp)
    sp.add_argument("--save-final", metavar="PATH",
                    help="write the final state as a checkpoint")
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("decay", help="decay-rate fits with pass/fail gates")
    common(sp)
    sp.set_defaults(func=_cmd_decay)

    sp = sub.add_parser("msweep",
                        help="deviation-from-linear sweep over m with gates")
    common(sp)
    sp.set_defaults(func=_cmd_msweep)

    sp = sub.add_parser("compare",
                        help="flow-map vs fixed-grid cross-validation")
    common(sp)
    sp.add_argument("--frames", type=int, default=21,
                    help="velocity frames kept for particle paths (odd)")
    sp.set_defaults(func=_cmd_compare)

    sp = sub.add_parser("linear", help="exact single-mode trajectory")
    common(sp)
    sp.add_argument("--k1", type=int, default=1)
    sp.add_argument("--k2", type=int, default=1)
    sp.add_argument("--amplitude", type=float, default=1.0)
    sp.add_argument("--samples", type=int, default=101)
    sp.set_defaults(func=_cmd_linear)

    sp = sub.add_parser("gen-ic", help="write validated initial data")
    common(sp)
    sp.add_argument("--file", default="ic.bin",
                    help="checkpoint file name inside --out")
    sp.set_defaults(func=_cmd_gen_ic)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except MhdflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
