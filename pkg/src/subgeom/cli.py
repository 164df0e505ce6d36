"""Command-line entry point: ``subgeom <verb> [options]``.

Exit codes: 0 pass, 1 fail, 2 inconclusive, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness, lyapunov, rate_kernel, transport
from .chains import SegmentGrid, SegmentState, sample_marginal
from .errors import SubgeomError
from .rate_kernel import PsiFunction, RateBoundParams, RateFunction
from .reports import CheckReport, dumps

EX_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(args) -> dict:
    if not args.config:
        raise UsageError(f"{args.verb} needs --config")
    p = Path(args.config)
    if not p.exists():
        raise UsageError(f"config file {p} not found")
    text = p.read_text()
    cfg = harness.tomllib.loads(text) if p.suffix == ".toml" else json.loads(text)
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _fmt(v: float) -> str:
    return f"{v:.15g}"


def _report_out(rep: CheckReport, args) -> int:
    _emit(rep.to_json() if args.format == "json" else rep.to_text(), args.out)
    return rep.exit_code


def _state(model, x, cfg):
    if model.continuous:
        grid = SegmentGrid(model.sdde.r, int(cfg["model"].get("m", 10)))
        return SegmentState.constant(grid, x)
    return x


# ---------------------------------------------------------------------------
# verbs


def cmd_rates(args) -> int:
    phi = RateFunction.from_config(args.phi)
    if args.action == "invert":
        if args.y is None:
            raise UsageError("rates invert needs --y")
        vals = [rate_kernel.h_inverse(phi, y) for y in args.y]
        key = "y"
        xs = args.y
    else:
        if args.x is None:
            raise UsageError("rates eval needs --x")
        xs, key = args.x, "x"
        if args.what == "phi":
            vals = [float(phi(x)) for x in xs]
        elif args.what == "H":
            vals = [rate_kernel.h_transform(phi, x) for x in xs]
        else:
            params = RateBoundParams(args.C1, args.C2, args.eps, args.V)
            vals = [rate_kernel.rate_bound(phi, params, x) for x in xs]
    if args.format == "json":
        _emit(dumps({"phi": phi.to_config(), "rows": [{key: a, "value": v} for a, v in zip(xs, vals)]}), args.out)
    elif args.format == "csv":
        _emit(f"{key},value\n" + "".join(f"{_fmt(a)},{_fmt(v)}\n" for a, v in zip(xs, vals)), args.out)
    else:
        _emit("".join(_fmt(v) + "\n" for v in vals), args.out)
    return 0


def cmd_wasserstein(args) -> int:
    mu, nu = transport.load_measure(args.mu), transport.load_measure(args.nu)
    metric = transport.BoundedMetric.from_spec(args.metric)
    plan = None
    if metric.kind == "euclidean" and mu.dim == 1 and not args.plan:
        w = transport.wasserstein_1d(mu, nu)
    else:
        w, plan = transport.wasserstein_exact(mu, nu, metric)
    if args.format == "json":
        obj = {"distance": w, "metric": args.metric}
        if plan is not None:
            obj["plan"] = json.loads(plan.to_json())
        _emit(dumps(obj), args.out)
    else:
        _emit(_fmt(w) + "\n", args.out)
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if "seed" not in cfg:
        raise UsageError("simulate needs a seed")
    model = harness.build_model(cfg["model"])
    x0 = _state(model, cfg.get("x0", 0.0), cfg)
    horizon = cfg.get("horizon", cfg.get("n", 1))
    mu = sample_marginal(model, x0, horizon, int(cfg.get("n_samples", 1000)), int(cfg["seed"]),
                         observable=cfg.get("observable", "point"), dt=cfg.get("dt"))
    if args.format == "json":
        _emit(mu.to_json(), args.out)
    else:
        rows = "".join(",".join(_fmt(v) for v in p) + f",{_fmt(w)}\n" for p, w in zip(mu.points, mu.weights))
        _emit(rows, args.out)
    return 0


def cmd_drift_check(args) -> int:
    cfg = _load_config(args)
    model = harness.build_model(cfg["model"])
    phi = RateFunction.from_config(cfg.get("phi", model.phi.to_config() if model.phi else "linear:1"))
    K = float(cfg.get("K", model.K if model.K is not None else 0.0))
    seed = int(cfg.get("seed", 0))
    if cfg.get("cumulative"):
        rep = lyapunov.check_cumulative_drift(model, phi, K, cfg["states"][0], int(cfg["cumulative"]),
                                              int(cfg.get("n_mc", 10_000)), seed, cfg.get("method", "mc"))
    elif model.continuous:
        states = [_state(model, x, cfg) for x in cfg["states"]]
        rep = lyapunov.check_drift_continuous(model, phi, K, states, float(cfg["horizon"]),
                                              int(cfg.get("n_mc", 2000)), float(cfg["dt"]), seed)
    else:
        rep = lyapunov.check_drift_discrete(model, phi, K, cfg["states"], int(cfg.get("n_mc", 10_000)), seed,
                                            method=cfg.get("method", "mc"))
    return _report_out(rep, args)


def cmd_dsmall(args) -> int:
    cfg = _load_config(args)
    model = harness.build_model(cfg["model"])
    metric = transport.BoundedMetric.from_spec(cfg.get("metric", "euclid1d"))
    pairs = [tuple(_state(model, v, cfg) for v in p) for p in cfg["pairs"]]
    if model.continuous:
        grid = pairs[0][0].grid
        beta = metric.beta if metric.beta else 1.0
        metric = transport.BoundedMetric.sup_segment(beta, grid.m + 1)
    est = lyapunov.estimate_dsmall(model, metric, model.V, float(cfg["R"]), pairs, int(cfg.get("n_mc", 512)),
                                   int(cfg.get("seed", 0)), horizon=cfg.get("horizon"), dt=cfg.get("dt"),
                                   phi=model.phi, K=model.K)
    return _report_out(est.report(), args)


def cmd_petrov(args) -> int:
    rep = rate_kernel.petrov_bound_check(PsiFunction.builtin(args.psi), args.a0, args.n)
    return _report_out(rep, args)


def cmd_converge(args) -> int:
    cfg = _load_config(args)
    if args.out:
        cfg["out_csv" if args.format != "json" else "out_json"] = args.out
    curve = harness.run_convergence_experiment(harness.ExperimentConfig.from_dict(cfg))
    if not args.out and not cfg.get("out_csv") and not cfg.get("out_json"):
        sys.stdout.write(curve.to_json() if args.format == "json" else curve.to_csv())
    return 0


def cmd_fit(args) -> int:
    curve = harness.ConvergenceCurve.from_csv(Path(args.curve).read_text())
    fit = harness.fit_rate_constants(curve, RateFunction.from_config(args.phi), args.eps, args.V)
    obj = {"C1": fit.C1, "C2": fit.C2, "residual": fit.residual, "C1_least_squares": fit.C1_least_squares,
           "adjustment": fit.adjustment}
    if args.format == "json":
        _emit(dumps(obj), args.out)
    else:
        _emit("C1,C2,residual\n" + f"{_fmt(fit.C1)},{_fmt(fit.C2)},{_fmt(fit.residual)}\n", args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config")
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--format", choices=("csv", "json", "text"), default="text")

    p = _Parser(prog="subgeom", description="Subgeometric convergence toolkit")
    sub = p.add_subparsers(dest="verb", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("rates", parents=[common], help="evaluate or invert rate functions")
    r.add_argument("action", choices=("eval", "invert"))
    r.add_argument("--phi", required=True, help="linear:L, power:G, logpower:A")
    r.add_argument("--x", type=float, nargs="+")
    r.add_argument("--y", type=float, nargs="+")
    r.add_argument("--what", choices=("H", "phi", "bound"), default="H")
    r.add_argument("--C1", type=float, default=1.0)
    r.add_argument("--C2", type=float, default=1.0)
    r.add_argument("--eps", type=float, default=0.1)
    r.add_argument("--V", type=float, default=0.0)
    r.set_defaults(func=cmd_rates)

    w = sub.add_parser("wasserstein", parents=[common], help="distance between two measure files")
    w.add_argument("--mu", required=True)
    w.add_argument("--nu", required=True)
    w.add_argument("--metric", default="euclid1d")
    w.add_argument("--plan", action="store_true", help="solve exactly and include the plan")
    w.set_defaults(func=cmd_wasserstein)

    for name, fn, hlp in (("simulate", cmd_simulate, "sample a marginal law"),
                          ("drift-check", cmd_drift_check, "verify a drift condition"),
                          ("dsmall", cmd_dsmall, "estimate d-smallness of a level set"),
                          ("converge", cmd_converge, "run a convergence experiment")):
        sp = sub.add_parser(name, parents=[common], help=hlp)
        sp.set_defaults(func=fn)

    pt = sub.add_parser("petrov", parents=[common], help="check the Petrov recursion bound")
    pt.add_argument("--psi", required=True, choices=("linear", "square", "clip2"))
    pt.add_argument("--a0", type=float, required=True)
    pt.add_argument("--n", type=int, required=True)
    pt.set_defaults(func=cmd_petrov)

    f = sub.add_parser("fit", parents=[common], help="fit rate constants to a curve CSV")
    f.add_argument("--curve", required=True)
    f.add_argument("--phi", required=True)
    f.add_argument("--eps", type=float, default=0.1)
    f.add_argument("--V", type=float, default=0.0)
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"subgeom: {e}", file=sys.stderr)
        return EX_USAGE
    except (SubgeomError, ValueError, KeyError, FileNotFoundError) as e:
        print(f"subgeom {args.verb}: {type(e).__name__}: {e}", file=sys.stderr)
        return EX_USAGE


if __name__ == "__main__":
    sys.exit(main())
