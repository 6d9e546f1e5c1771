"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical or integrity
failure, 64 usage error (unknown subcommand or bad flags).
"""
from __future__ import annotations

import argparse
import glob
import json
import math
import os
import sys

import numpy as np

from . import persistence
from .errors import (AcGibbsError, BudgetError, ConfigError, IntegrityError, NumericalError,
                     PrecisionError)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _threads(args) -> int:
    env = os.environ.get("AC_GIBBS_THREADS")
    if env:
        try:
            t = int(env)
        except ValueError:
            raise ConfigError("AC_GIBBS_THREADS: must be an integer") from None
        if t < 1:
            raise ConfigError("AC_GIBBS_THREADS: must be >= 1")
        return t
    return max(1, int(args.threads or 1))


def _potential(args):
    from .potential import Potential

    spec = getattr(args, "potential", None) or "quartic"
    if spec == "quartic":
        return Potential.quartic()
    return Potential.from_csv(spec)


def _config(args) -> dict:
    return persistence.load_config(args.config) if args.config else {}


def _emit(obj, args, name: str):
    text = persistence.dumps(obj)
    print(text)
    if args.out_dir:
        persistence.save_json(os.path.join(args.out_dir, name), obj)


# ------------------------------------------------------------- subcommands

def cmd_constants(args):
    from .potential import optimal_profile, well_constants

    pot = _potential(args)
    wc = well_constants(pot)
    out = wc.to_json()
    prof = optimal_profile(pot, half_width=10.0, dx=0.01)
    x = prof.x
    out["profile"] = {"half_width": 10.0, "dx": 0.01, "points": int(x.size),
                      "tanh_sup_error": float(np.max(np.abs(prof.m - np.tanh(x / math.sqrt(2)))))
                      if pot.name == "quartic" else None}
    _emit(out, args, "constants.json")
    if args.out_dir:
        persistence.save_dat(os.path.join(args.out_dir, "profile.dat"),
                             [{"x": float(a), "m": float(b)} for a, b in zip(x, prof.m)],
                             ["x", "m"])


def _sampler_config(cfg: dict, args):
    from .gibbs_sampler import SamplerConfig
    from .path_domain import Grid

    eps = cfg.get("epsilon", args.eps)
    L = cfg.get("L", args.L)
    dx = cfg.get("dx", args.dx)
    cfg = persistence.validate_config({"epsilon": eps, "L": L, "dx": dx, **{
        k: v for k, v in cfg.items() if k not in ("epsilon", "L", "dx")}})
    seed = args.seed if args.seed is not None else cfg.get("seed", 0)
    g = Grid.symmetric(cfg["L"], cfg["dx"])
    return SamplerConfig(cfg["epsilon"], g, float(cfg.get("u_minus", -1.0)),
                         float(cfg.get("u_plus", 1.0)), block=int(cfg.get("block", 20)),
                         kernel=cfg.get("kernel", "block-independence"),
                         beta=float(cfg.get("beta", 0.2)), sweeps=int(cfg.get("sweeps", 10000)),
                         burn_in=int(cfg.get("burn_in", 1000)), thin=int(cfg.get("thin", 10)),
                         seed=int(seed)), int(cfg.get("chains", 1))


def cmd_sample(args):
    from .gibbs_sampler import estimate_mean, integrated_autocorr, run_chains

    cfg = _config(args)
    sc, chains = _sampler_config(cfg, args)
    ens = run_chains(sc, _potential(args), chains=chains, threads=_threads(args))
    u0 = ens.values[:, sc.grid.nearest_index(0.0)]
    est = estimate_mean(u0, ens.chain_ids)
    diag = {"config_hash": sc.hash(), "paths": len(ens), "chains": chains,
            "acceptance": float(np.mean(ens.metadata["acceptance"])),
            "ess": est.ess, "iact": est.iact, "mean_u0": est.value, "se_u0": est.se,
            "iact_u0_chain0": integrated_autocorr(u0[ens.chain_ids == 0])}
    if args.out_dir:
        persistence.save_ensemble(os.path.join(args.out_dir, "ensemble.acp"), ens)
    _emit(diag, args, "sample.json")


def cmd_oracle(args):
    from . import automata as A
    from .path_domain import Grid
    from .transfer_oracle import build_transfer, event_probability_exact, marginal

    cfg = _config(args)
    eps = float(cfg.get("epsilon", args.eps))
    L = float(cfg.get("L", args.L))
    dx = float(cfg.get("dx", args.dx))
    delta = float(cfg.get("delta", args.delta))
    persistence.validate_config({"epsilon": eps, "L": L, "dx": dx, "delta": delta})
    um = float(cfg.get("u_minus", args.u_minus))
    up = float(cfg.get("u_plus", args.u_plus))
    g = Grid.symmetric(L, dx)
    pot = _potential(args)
    model = build_transfer(eps, dx, pot)
    event = cfg.get("event", args.event)
    builders = {
        "three-delta-layers": lambda: A.layer_counter(1 - delta, 3),
        "delta-layer": lambda: A.layer_counter(1 - delta, 1),
        "short-up-layer": lambda: A.short_up_layer(args.max_len, dx, 1.0),
        "threshold": lambda: A.threshold(args.level, (-args.window, args.window)),
        "band": lambda: A.band(-args.level, args.level, (-args.window, args.window)),
        "parity": lambda: A.layer_parity(1.0),
    }
    if event == "marginal":
        mt = marginal(model, g, um, up, [g.nearest_index(0.0)])
        out = {"event": "marginal", "x": 0.0, "mean": float(mt.mean()[0]),
               "var": float(mt.var()[0]), "log_Z": mt.log_Z}
    elif event in builders:
        out = event_probability_exact(model, g, um, up, builders[event]()).to_json()
    else:
        raise ConfigError(f"event: unknown event {event!r}; expected one of "
                          f"{sorted(builders) + ['marginal']}")
    if not all(math.isfinite(v) for v in (out.get("log_Z", 0.0),)):
        raise NumericalError("non-finite normalisation")
    _emit(out, args, "oracle.json")


def cmd_reflect_test(args):
    from .path_domain import StoppingSpec
    from .reflections import ReflectionSpec, invariance_test

    if args.archive:
        ens = persistence.load_ensemble(args.archive)
    else:
        from .gibbs_sampler import run_chains
        sc, chains = _sampler_config(_config(args), args)
        ens = run_chains(sc, _potential(args), chains=chains, threads=_threads(args))
    g = ens.grid
    eps = ens.metadata.get("config", {}).get("epsilon", args.eps)
    kind = args.kind
    xm, xp = g.x_minus, g.x_plus
    if kind in ("between", "between-stopping-points"):
        spec = ReflectionSpec("between", StoppingSpec("left", (xm, xp), 0.0),
                              StoppingSpec("right", (xm, xp), 0.0), epsilon=eps)
    elif kind in ("r_yz", "point-between-hits"):
        spec = ReflectionSpec("point-between-hits",
                              StoppingSpec("left", (xm + 0.1 * g.length, xm + 0.4 * g.length), -1.0),
                              StoppingSpec("right", (xp - 0.4 * g.length, xp - 0.1 * g.length), 1.0),
                              epsilon=eps)
    elif kind == "fixed-window":
        spec = ReflectionSpec("fixed-window", window=(0.1 * xp, 0.8 * xp), epsilon=eps)
    else:
        spec = ReflectionSpec(kind, epsilon=eps)
    stats_ = tuple(args.statistics.split(",")) if args.statistics else (
        "integral", "zero_crossings", "energy_grad", "u_at:0", f"u_at:{0.5 * xp:g}")
    rep = invariance_test(spec, ens, stats_, alpha=args.alpha,
                          rng=args.seed if args.seed is not None else 0, epsilon=eps)
    _emit(rep.to_json(), args, "reflect_test.json")


def cmd_minimize(args):
    from . import energy_min as EM
    from .path_domain import Grid

    pot = _potential(args)
    if args.lemma:
        params = _config(args).get("lemma_params", {}) if args.config else {}
        rep = EM.verify_energy_lemma(args.lemma, pot, params, threads=_threads(args))
        _emit(rep.to_json(), args, f"lemma_{args.lemma}.json")
        return
    g = Grid.symmetric(args.L, args.dx)
    ell, d = args.ell, args.delta
    cons = {"none": EM.no_constraint(), "band": EM.band(-1 + d, 1 - d, (-ell, ell)),
            "wasted": EM.wasted_dminus((-ell, ell), d),
            "dplus-pre": EM.dplus_pre((-ell, ell), d)}
    if args.constraint not in cons:
        raise ConfigError(f"constraint: expected one of {sorted(cons)}")
    prob = EM.EnergyProblem(g, args.u_minus, args.u_plus, cons[args.constraint])
    gap, rc, _ = EM.energy_gap(prob, pot, h=args.h)
    out = rc.to_json()
    out["gap"] = gap
    _emit(out, args, "minimize.json")
    if args.out_dir:
        persistence.save_dat(os.path.join(args.out_dir, "argmin.dat"),
                             [{"x": float(a), "u": float(b)} for a, b in
                              zip(rc.path.x, rc.path.values)], ["x", "u"])


def cmd_experiment(args):
    from .experiments import ExperimentConfig, run_experiment

    over = {"threads": _threads(args)}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.config:
        raw = persistence.load_json(args.config)
        if not isinstance(raw, dict):
            raise ConfigError("config: expected a JSON object")
        raw.setdefault("experiment", args.id)
        if raw["experiment"] != args.id:
            raise ConfigError("experiment: config id differs from the command line")
        cfg = ExperimentConfig.from_dict(raw, **over)
    else:
        cfg = ExperimentConfig.default(args.id, **over)
    res = run_experiment(cfg, _potential(args))
    out_dir = args.out_dir or cfg.out_dir
    res.write(out_dir)
    print(persistence.dumps({"experiment": res.experiment, "passed": res.passed,
                             "checks": res.checks, "fits": res.fits,
                             "config_hash": res.provenance["config_hash"]}))


def cmd_report(args):
    src = args.out_dir or "results"
    results = sorted(glob.glob(os.path.join(src, "*.json")))
    rows = []
    for p in results:
        rec = persistence.load_json(p)
        if not isinstance(rec, dict) or "experiment" not in rec or "provenance" not in rec:
            continue
        h = rec["provenance"]["config_hash"]
        eid = rec["experiment"]
        for q in glob.glob(os.path.join(src, "points", f"{eid}-*.json")):
            ph = persistence.load_json(q).get("config_hash")
            if ph != h:
                raise ConfigError(f"config_hash: {q} has {ph}, result {p} has {h}; "
                                  "refusing to aggregate mismatched runs")
        for name, chk in rec["checks"].items():
            rows.append({"experiment": eid, "check": name, "passed": chk["passed"],
                         "value": chk["value"], "target": chk["target"], "config_hash": h})
        persistence.save_csv(os.path.join(src, "tables", f"{eid}.csv"), rec["records"])
        num = sorted({k for r in rec["records"] for k, v in r.items()
                      if isinstance(v, (int, float)) and not isinstance(v, bool)})
        persistence.save_dat(os.path.join(src, "tables", f"{eid}.dat"), rec["records"], num)
    persistence.save_csv(os.path.join(src, "tables", "summary.csv"), rows)
    print(persistence.dumps({"results": len(results), "checks": len(rows),
                             "passed": sum(bool(r["passed"]) for r in rows)}))


# ----------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", dest="out_dir", default=None)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--potential", default="quartic", help="'quartic' or a CSV table")

    p = _Parser(prog="acgibbs", description="Allen-Cahn path measure toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sub.add_parser("constants", parents=[common], help="well constants and optimal profile")

    s = sub.add_parser("sample", parents=[common], help="run the Gibbs sampler")
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--L", type=float, default=5.0)
    s.add_argument("--dx", type=float, default=0.05)

    o = sub.add_parser("oracle", parents=[common], help="exact event probabilities")
    o.add_argument("--event", default="three-delta-layers")
    o.add_argument("--eps", type=float, default=0.1)
    o.add_argument("--L", type=float, default=5.0)
    o.add_argument("--dx", type=float, default=0.05)
    o.add_argument("--delta", type=float, default=0.2)
    o.add_argument("--u-minus", dest="u_minus", type=float, default=-1.0)
    o.add_argument("--u-plus", dest="u_plus", type=float, default=1.0)
    o.add_argument("--level", type=float, default=0.5)
    o.add_argument("--window", type=float, default=1.0)
    o.add_argument("--max-len", dest="max_len", type=float, default=4.0)

    r = sub.add_parser("reflect-test", parents=[common], help="reflection invariance test")
    r.add_argument("--kind", default="between")
    r.add_argument("--archive", default=None)
    r.add_argument("--statistics", default=None)
    r.add_argument("--alpha", type=float, default=0.01)
    r.add_argument("--eps", type=float, default=0.1)
    r.add_argument("--L", type=float, default=5.0)
    r.add_argument("--dx", type=float, default=0.05)

    m = sub.add_parser("minimize", parents=[common], help="constrained energy minimisation")
    m.add_argument("--lemma", default=None)
    m.add_argument("--constraint", default="none")
    m.add_argument("--L", type=float, default=10.0)
    m.add_argument("--dx", type=float, default=0.05)
    m.add_argument("--ell", type=float, default=5.0)
    m.add_argument("--delta", type=float, default=0.2)
    m.add_argument("--h", type=float, default=0.01)
    m.add_argument("--u-minus", dest="u_minus", type=float, default=-1.0)
    m.add_argument("--u-plus", dest="u_plus", type=float, default=1.0)

    e = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    e.add_argument("id")

    sub.add_parser("report", parents=[common], help="aggregate results into tables")
    return p


COMMANDS = {"constants": cmd_constants, "sample": cmd_sample, "oracle": cmd_oracle,
            "reflect-test": cmd_reflect_test, "minimize": cmd_minimize,
            "experiment": cmd_experiment, "report": cmd_report}


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        print(parser.format_usage(), file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, PrecisionError, BudgetError, IntegrityError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AcGibbsError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main():
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
