"""Command-line interface.

Exit codes: 0 success, 1 configuration or other usage error, 2 invalid
nonlinearity (parse error or degree below 2), 3 blow-up suspected (partial
outputs are still written), 4 non-finite state, 5 lattice budget exceeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_config, parse_override
from .energy import (
    EnergyParams,
    calibrate_cs,
    energy_csv,
    energy_residual_report,
    sample_pair,
    sandwich_terms,
)
from .errors import (
    BudgetExceeded,
    ConfigError,
    DegreeTooLow,
    DispersionLabError,
    NonFinite,
    ParseError,
)
from .field import random_band_field
from .multipliers import DispersionSymbol, resonance_csv, resonance_search, verify_oscillation
from .nonlinearity import classify, conserves_mean, euler_operator, p_density, parse_nonlinearity
from .presets import preset, preset_names
from .solver import (
    Equation,
    convergence_family,
    evolve,
    run_metadata,
    smoothing_metrics,
    time_reversed,
    trajectory_csv,
)

__all__ = ["main", "run_simulation"]


def _equation_from_args(args):
    if getattr(args, "preset", None):
        return preset(args.preset).equation
    N = parse_nonlinearity(args.expr)
    return Equation(_symbol_from_args(args), N)


def _symbol_from_args(args) -> DispersionSymbol:
    gammas = args.gammas if args.gammas else [1] + [0] * args.j
    return DispersionSymbol(args.j, tuple(gammas))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


# ---------------------------------------------------------------------------
# commands


def cmd_classify(args) -> int:
    N = preset(args.preset).N if args.preset else parse_nonlinearity(args.expr)
    dens = p_density(N)
    out = {
        "type": classify(N).value,
        "conserves_mean": conserves_mean(N),
        "p_density": str(dens),
        "euler": str(euler_operator(dens)),
        "nonlinearity": str(N),
    }
    print(json.dumps(out))
    return 0


def run_simulation(cfg: RunConfig, base_dir: Path | None = None) -> int:
    """Run one configured simulation and write its artifacts; returns the exit code."""
    eq = cfg.equation()
    phi0 = cfg.initial_field(base_dir)
    out = Path(cfg.output_dir)
    if base_dir is not None and not out.is_absolute():
        out = base_dir / out
    t_end = cfg.t_end if cfg.direction == "forward" else -cfg.t_end
    traj = evolve(eq, phi0, t_end, cfg.dt, cfg.scheme, cfg.stride, cfg.blowup,
                  s_values=cfg.s_values, tail_split=cfg.tail_split)
    k_split = traj.meta["tail_split"]
    _write(out / "trajectory.csv", trajectory_csv(traj, cfg.s))
    rows = ["t,tail_energy,p_value,p_flag"]
    for r in smoothing_metrics(traj, cfg.s, k_split):
        rows.append(f"{r['t']!r},{r['tail_energy']!r},{r['p_value']!r},{str(r['p_flag']).lower()}")
    _write(out / "smoothing.csv", "\n".join(rows) + "\n")
    extra = {"config": cfg.to_dict()}
    if cfg.energy:
        params = EnergyParams(cfg.s, cfg.C_s, cfg.K_corr, cfg.C_mh)
        _write(out / "energy.csv", energy_csv(traj, eq.N, eq.sym, params))
        if len(traj.frames) >= 3:
            rep = energy_residual_report(traj, eq.N, eq.sym, params)
            extra["energy_residual"] = {
                "max_quotient": rep.max_quotient, "positive_part": rep.positive_part,
                "finite": rep.finite, "within_ceiling": rep.within_ceiling, "r": rep.r,
            }
    if cfg.etas:
        template = time_reversed(eq.with_eps(0.0)) if cfg.direction == "backward" else eq.with_eps(0.0)
        fam = convergence_family(
            template, phi0, cfg.bona_smith_s or cfg.s, cfg.etas, cfg.t_end, cfg.dt,
            s_prime=cfg.s_prime, scheme=cfg.scheme, stride=cfg.stride, blowup=cfg.blowup,
        )
        _write(out / "family.json", json.dumps({
            "etas": fam.etas, "distances": fam.distances, "ratios": fam.ratios,
            "verdict": fam.verdict, "statuses": fam.statuses, "errors": fam.errors,
        }, indent=2))
    if cfg.snapshots:
        _write(out / "snapshots.jsonl", "".join(
            json.dumps({"t": t, "field": u.to_json()}) + "\n" for t, u in traj.frames))
    _write(out / "metadata.json", json.dumps(run_metadata(traj, cfg.seed, extra), indent=2, sort_keys=True))
    return 3 if traj.blew_up else 0


def cmd_simulate(args) -> int:
    overrides = dict(parse_override(o) for o in args.set or [])
    for key in ("dt", "t_end", "eps", "K_grid", "scheme", "output_dir"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    cfg = load_config(args.config, overrides)
    code = run_simulation(cfg, Path(args.config).resolve().parent if not args.out_relative_cwd else None)
    print(json.dumps({"output_dir": cfg.output_dir, "exit_code": code}))
    return code


def cmd_resonance(args) -> int:
    sym = _symbol_from_args(args)
    rows = resonance_search(sym, args.p, args.K, budget=args.budget, nontrivial_only=args.nontrivial)
    text = resonance_csv(rows, args.p, args.K, sym)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_verify_oscillation(args) -> int:
    sym = _symbol_from_args(args)
    rep = verify_oscillation(sym, args.p, args.C, args.K, budget=args.budget, est2=not args.no_est2)
    sys.stdout.write(rep.to_csv())
    if args.verbose:
        sys.stderr.write(json.dumps({
            "n_support": rep.n_support, "min_ratio_order": rep.min_ratio_order,
            "est2_min_ratio": rep.est2_min_ratio, "est2_max_ratio": rep.est2_max_ratio,
            "flagged": rep.flagged,
        }) + "\n")
    return 0


def cmd_energy_check(args) -> int:
    eq = _equation_from_args(args)
    params = EnergyParams(args.s, K_corr=args.K_corr, C_mh=args.C_mh)
    C_s = calibrate_cs(eq.N, eq.sym, args.s, samples=args.samples, seed=args.seed, params=params)
    params = EnergyParams(args.s, C_s, args.K_corr, args.C_mh)
    rng = np.random.default_rng(args.seed + 1)
    failures = 0
    worst = 0.0
    for _ in range(args.check):
        f, g = sample_pair(rng, args.K_corr, args.s)
        B0, W, corr = sandwich_terms(eq.N, eq.sym, params, f, g)
        B = B0 + C_s * W
        F = 0.5 * B + corr
        if B > 0:
            worst = max(worst, abs(corr) / B)
        failures += not (F <= B <= 4 * F)
    print(json.dumps({"s": args.s, "C_s": C_s, "checked": args.check, "failures": failures,
                      "max_corr_over_norm": worst}))
    return 0 if failures == 0 else 1


def cmd_bona_smith(args) -> int:
    eq = _equation_from_args(args).with_eps(0.0)
    if args.backward:
        eq = time_reversed(eq)
    phi0 = random_band_field(args.seed, args.data_s, args.amplitude, args.K_grid, args.mean)
    etas = args.etas or [2.0**-i for i in range(8, 13)]
    rep = convergence_family(eq, phi0, args.s, etas, args.t_end, args.dt, s_prime=args.s_prime,
                             rho=args.rho, stride=args.stride)
    print(json.dumps({"verdict": rep.verdict, "etas": rep.etas, "distances": rep.distances,
                      "ratios": rep.ratios, "statuses": rep.statuses}))
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_equation_args(p, require=True):
    g = p.add_mutually_exclusive_group(required=require)
    g.add_argument("--preset", choices=preset_names())
    g.add_argument("--expr", help="nonlinearity, e.g. '2*u2*u1^2'")
    _add_symbol_args(p)


def _add_symbol_args(p):
    p.add_argument("--j", type=int, default=2, help="equation order is 2j+1")
    p.add_argument("--gammas", type=float, nargs="+", help="g0 .. gj (default 1, 0, ...)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dispersion-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("classify", help="parabolic / non-parabolic verdict for a nonlinearity")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=preset_names())
    g.add_argument("--expr")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("simulate", help="run a JSON-configured simulation")
    p.add_argument("config")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
    p.add_argument("--dt", type=float)
    p.add_argument("--t-end", dest="t_end", type=float)
    p.add_argument("--eps", type=float)
    p.add_argument("--K-grid", dest="K_grid", type=int)
    p.add_argument("--scheme")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--out-relative-cwd", action="store_true",
                   help="resolve relative paths against the working directory, not the config file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("resonance", help="exact zeros of the resonance function in a box")
    p.add_argument("-p", type=int, required=True)
    p.add_argument("-K", type=int, required=True)
    p.add_argument("--budget", type=float)
    p.add_argument("--nontrivial", action="store_true", help="drop pairwise-cancelling tuples")
    p.add_argument("--out")
    _add_symbol_args(p)
    p.set_defaults(func=cmd_resonance)

    p = sub.add_parser("verify-oscillation", help="scan the oscillation lower bound on a box")
    p.add_argument("-p", type=int, required=True)
    p.add_argument("-K", type=int, default=200)
    p.add_argument("-C", type=float, default=4.0)
    p.add_argument("--budget", type=float)
    p.add_argument("--no-est2", action="store_true")
    p.add_argument("--verbose", action="store_true")
    _add_symbol_args(p)
    p.set_defaults(func=cmd_verify_oscillation)

    p = sub.add_parser("energy-check", help="calibrate C_s and test the comparison sandwich")
    _add_equation_args(p)
    p.add_argument("--s", type=int, default=8)
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--check", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--K-corr", dest="K_corr", type=int, default=16)
    p.add_argument("--C-mh", dest="C_mh", type=float, default=4.0)
    p.set_defaults(func=cmd_energy_check)

    p = sub.add_parser("bona-smith", help="regularized Bona-Smith family and its verdict")
    _add_equation_args(p)
    p.add_argument("--s", type=float, default=13.0, help="smoothing index of J_{eta,s}")
    p.add_argument("--s-prime", type=float, default=4.0)
    p.add_argument("--etas", type=float, nargs="+")
    p.add_argument("--t-end", dest="t_end", type=float, default=0.1)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--rho", type=float, default=1.3)
    p.add_argument("--K-grid", dest="K_grid", type=int, default=64)
    p.add_argument("--seed", type=int, default=11)
    p.add_argument("--data-s", dest="data_s", type=float, default=13.0)
    p.add_argument("--amplitude", type=float, default=0.05)
    p.add_argument("--mean", type=float, default=0.0)
    p.add_argument("--backward", action="store_true", help="use the t -> -t transformed equation")
    p.set_defaults(func=cmd_bona_smith)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (DegreeTooLow, ParseError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except NonFinite as exc:
        print(f"error: NonFinite: {exc}", file=sys.stderr)
        return 4
    except BudgetExceeded as exc:
        print(f"error: BudgetExceeded: {exc}", file=sys.stderr)
        return 5
    except (ConfigError, DispersionLabError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
