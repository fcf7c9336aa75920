"""Command-line front end.

    coopra region   [CONFIG] [--a 0.3,0.6,0.9|a_l,a_m,a_u] [--grid 0:0.45:0.005]
    coopra delay    [CONFIG] [--simulate]
    coopra simulate [CONFIG]
    coopra optimize [CONFIG]
    coopra sweep    [CONFIG]
    coopra validate [CONFIG] [--mutate beta-sign]

Output files start with ``#`` comment lines carrying the schema and a digest
of the run manifest; identical configuration and seed give identical bytes.
"""
from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from . import analysis as an
from . import config as cf
from .model import ArrivalRates, OperatingPoint, OutOfRange, PolicyParam
from .optimize import (
    Infeasible,
    OptimizationRequest,
    SweepAxis,
    SweepSpec,
    optimal_a,
    point_seed,
    tradeoff_sweep,
)
from .sim import NoDeliveries, Policy, PolicyKind, SimConfig, run
from .validate import MUTATIONS, run_battery, summarize

SCHEMA_VERSION = 1


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, ".9g")
    return str(x)


def _json_value(x):
    if isinstance(x, float):
        return None if not math.isfinite(x) else float(format(x, ".9g"))
    return x


@dataclass
class RunManifest:
    version: str
    command: str
    config: dict
    seed: int
    timestamp: str = ""
    digests: dict = field(default_factory=dict)

    def digest(self) -> str:
        """Hash of everything except the timestamp."""
        payload = {"version": self.version, "command": self.command, "config": self.config,
                   "seed": self.seed, "digests": self.digests}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass
class Table:
    columns: list
    rows: list  # list of dicts


def render(table: Table, command: str, cfg: dict, fmt_name: str) -> tuple[str, RunManifest]:
    if fmt_name == "json":
        records = [{k: _json_value(row.get(k)) for k in table.columns} for row in table.rows]
        body = json.dumps({"columns": table.columns, "rows": records}, sort_keys=False) + "\n"
    else:
        buf = io.StringIO()
        buf.write(",".join(table.columns) + "\n")
        for row in table.rows:
            buf.write(",".join(fmt(row.get(k)) for k in table.columns) + "\n")
        body = buf.getvalue()
    manifest = RunManifest(__version__, command, cfg, cfg["sim"]["seed"],
                           time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                           {"output": hashlib.sha256(body.encode()).hexdigest()})
    schema = f"{command}/{SCHEMA_VERSION}"
    if fmt_name == "json":
        doc = json.loads(body)
        text = json.dumps({"schema": schema, "manifest": manifest.digest(), **doc}) + "\n"
    else:
        text = f"# coopra {__version__} schema={schema}\n# manifest={manifest.digest()}\n" + body
    return text, manifest


def emit(table: Table, command: str, cfg: dict, args) -> None:
    text, manifest = render(table, command, cfg, args.format)
    if args.out:
        out = Path(args.out)
        out.write_text(text, encoding="utf-8", newline="\n")
        side = out.with_name(out.name + ".manifest.json")
        side.write_text(json.dumps({**asdict(manifest), "digest": manifest.digest()}, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------- commands


def _a_values(tokens, ch, r) -> list[tuple[str, float]]:
    """Resolve ``a`` tokens; a_l/a_m/a_u refer to the configured rates."""
    out = []
    for tok in tokens:
        tok = str(tok).strip()
        if tok in ("a_l", "a_m", "a_u"):
            iv = an.feasible_a_interval(ch, r)
            val = {"a_l": iv.lower, "a_u": iv.upper, "a_m": iv.midpoint}[tok]
        else:
            val = float(tok)
        out.append((tok, val))
    return out


def cmd_region(cfg: dict, args) -> Table:
    ch, r = cf.channel(cfg), cf.rates(cfg)
    a_list = _a_values(cfg["sweep"]["a_values"], ch, r)
    cols = ["lambda_p"] + [f"lambda_s_max[a={fmt(v)}]" for _, v in a_list] + ["union", "no_cooperation", "status"]
    rows = []
    for lp in cf.grid_values(cfg["sweep"]["grid"]):
        row = {"lambda_p": lp}
        complete = True
        for (_, a), col in zip(a_list, cols[1:]):
            if 0.0 < a < 1.0 and lp <= an.primary_rate_bound(ch, a) + 1e-12:
                row[col] = an.secondary_rate_bound(ch, a, lp)
            else:
                row[col] = math.nan
                complete = False
        row["union"] = an.union_boundary(ch, lp) if lp <= an.union_intercept(ch) else math.nan
        try:
            row["no_cooperation"] = an.no_cooperation_boundary(ch, lp)
        except an.PrimaryOverloaded:
            row["no_cooperation"] = math.nan
        complete = complete and not math.isnan(row["union"]) and not math.isnan(row["no_cooperation"])
        row["status"] = "ok" if complete else "partial"
        rows.append(row)
    return Table(cols, rows)


def _rates_for(axis: SweepAxis, x: float, fixed: float) -> ArrivalRates:
    if axis is SweepAxis.LAMBDA_P:
        return ArrivalRates(x, fixed)
    if axis is SweepAxis.LAMBDA_S:
        return ArrivalRates(fixed, x)
    return ArrivalRates(x, x)


def cmd_delay(cfg: dict, args) -> Table:
    ch = cf.channel(cfg)
    sw, sim = cfg["sweep"], cfg["sim"]
    axis = SweepAxis(sw["axis"])
    cols = ["lambda_p", "lambda_s", "a", "status", "n_p", "n_sp", "n_s", "d_p", "d_s", "g00"]
    if args.simulate:
        cols += ["d_p_sim", "d_p_sim_ci", "d_s_sim", "d_s_sim_ci"]
    rows = []
    idx = 0
    for x in cf.grid_values(sw["grid"]):
        r = _rates_for(axis, x, sw["fixed_rate"])
        for tok, a in _a_values(sw["a_values"], ch, r):
            row = {"lambda_p": r.lambda_p, "lambda_s": r.lambda_s, "a": a}
            idx += 1
            try:
                rep = an.delay_report(OperatingPoint(ch, r, PolicyParam(a)))
            except an.Unstable:
                row["status"] = "unstable"
            except an.ZeroRateFlow as exc:
                row["status"] = f"zero_rate_{exc.flow}"
            except OutOfRange as exc:
                row["status"] = f"invalid_{exc.field}"
            else:
                row.update(status="ok", n_p=rep.n_p, n_sp=rep.n_sp, n_s=rep.n_s, d_p=rep.d_p, d_s=rep.d_s, g00=rep.g00)
                if args.simulate:
                    scfg = SimConfig(ch, r, Policy.randomized(a), sim["horizon"], sim["warmup"],
                                     point_seed(sim["seed"], idx), sim["replications"])
                    try:
                        res = run(scfg, workers=args.workers)
                    except NoDeliveries:
                        row["status"] = "no_deliveries"
                    else:
                        row.update(d_p_sim=res.d_p_hat, d_p_sim_ci=res.ci("d_p_hat"),
                                   d_s_sim=res.d_s_hat, d_s_sim_ci=res.ci("d_s_hat"))
            rows.append(row)
    return Table(cols, rows)


def cmd_simulate(cfg: dict, args) -> Table:
    ch, r, pol, sim = cf.channel(cfg), cf.rates(cfg), cf.policy(cfg), cfg["sim"]
    scfg = SimConfig(ch, r, pol, sim["horizon"], sim["warmup"], sim["seed"], sim["replications"])
    res = run(scfg, workers=args.workers)
    row = {"policy": pol.label, "lambda_p": r.lambda_p, "lambda_s": r.lambda_s, **res.as_dict()}
    cols = list(row)
    if pol.kind is PolicyKind.RANDOMIZED:
        try:
            rep = an.delay_report(OperatingPoint(ch, r, PolicyParam(pol.a)))
        except (an.Unstable, an.ZeroRateFlow):
            pass
        else:
            row.update(d_p_analytic=rep.d_p, d_s_analytic=rep.d_s)
        cols += ["d_p_analytic", "d_s_analytic"]
    return Table(cols, [row])


def cmd_optimize(cfg: dict, args) -> Table:
    ch, r = cf.channel(cfg), cf.rates(cfg)
    obj = cf.objective(cfg)
    cols = ["lambda_p", "lambda_s", "objective", "status", "a_star", "a_l", "a_u", "objective_value",
            "infimum", "d_p", "d_s", "unimodal"]
    row = {"lambda_p": r.lambda_p, "lambda_s": r.lambda_s, "objective": obj.kind.value}
    try:
        opt = optimal_a(OptimizationRequest(ch, r, obj, cfg["optimize"]["margin"]))
    except Infeasible:
        row["status"] = "infeasible"
    else:
        row.update(status="ok", a_star=opt.a, a_l=opt.interval.lower, a_u=opt.interval.upper,
                   objective_value=opt.objective_value, infimum=opt.infimum,
                   d_p=opt.report.d_p, d_s=opt.report.d_s, unimodal=opt.unimodal)
    return Table(cols, [row])


def cmd_sweep(cfg: dict, args) -> Table:
    sw, sim = cfg["sweep"], cfg["sim"]
    policies = tuple(PolicyKind[p.upper()] for p in sw["policies"])
    spec = SweepSpec(cf.channel(cfg), SweepAxis(sw["axis"]), cf.grid_values(sw["grid"]), sw["fixed_rate"],
                     policies, cf.objective(cfg), cfg["optimize"]["margin"], sim["horizon"], sim["warmup"],
                     sim["replications"], sim["seed"])
    cols = ["x", "lambda_p", "lambda_s"]
    for kind in policies:
        name = kind.name.lower()
        cols += [f"{name}.{k}" for k in ("status", "a", "d_p", "d_s", "d_p_ci", "d_s_ci")]
    rows = []
    for srow in tradeoff_sweep(spec, workers=args.workers):
        row = {"x": srow.x}
        if srow.rates is not None:
            row.update(lambda_p=srow.rates.lambda_p, lambda_s=srow.rates.lambda_s)
        for kind, cell in srow.cells.items():
            name = kind.name.lower()
            for k in ("status", "a", "d_p", "d_s", "d_p_ci", "d_s_ci"):
                row[f"{name}.{k}"] = getattr(cell, k)
        rows.append(row)
    return Table(cols, rows)


def cmd_validate(cfg: dict, args) -> int:
    sim = cfg["sim"]
    checks = run_battery(cf.channel(cfg), sim["horizon"], sim["warmup"], sim["replications"], sim["seed"],
                         mutation=args.mutate, workers=args.workers)
    width = max(len(c.name) for c in checks)
    for c in checks:
        print(f"{c.status.upper():12s} {c.name:{width}s}  expected={fmt(c.expected)} observed={fmt(c.observed)} "
              f"tol={fmt(c.tolerance)} {c.detail}".rstrip())
    verdict = summarize(checks)
    result = {"status": verdict, "checks": [{k: _json_value(v) for k, v in asdict(c).items()} for c in checks]}
    print(json.dumps(result))
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2) + "\n", encoding="utf-8", newline="\n")
    return 1 if verdict == "fail" else 0


COMMANDS = {"region": cmd_region, "delay": cmd_delay, "simulate": cmd_simulate,
            "optimize": cmd_optimize, "sweep": cmd_sweep, "validate": cmd_validate}


def _parse_grid(text: str):
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected start:stop:step, got {text!r}") from exc
    return {"start": start, "stop": stop, "step": step}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coopra", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", nargs="?", help="JSON configuration file")
        p.add_argument("--config", dest="config_opt", help="JSON configuration file")
        p.add_argument("--simulate", action="store_true", help="add simulated columns (delay)")
        p.add_argument("--horizon", type=int)
        p.add_argument("--warmup", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        p.add_argument("--margin", type=float)
        p.add_argument("--workers", type=int, default=1, help="threads for replications (output unaffected)")
        p.add_argument("--a", help="comma-separated a values; a_l, a_m, a_u allowed")
        p.add_argument("--grid", type=_parse_grid, help="start:stop:step")
        p.add_argument("--axis", choices=[a.value for a in SweepAxis])
        p.add_argument("--fixed-rate", type=float)
        p.add_argument("--lambda-p", type=float)
        p.add_argument("--lambda-s", type=float)
        p.add_argument("--objective", choices=["min_primary_delay", "min_secondary_delay", "weighted_sum"])
        if name == "validate":
            p.add_argument("--mutate", choices=MUTATIONS, help="inject a known fault into the closed forms")
    return parser


def resolve(args) -> dict:
    path = args.config_opt or args.config
    cfg = cf.load_config(path)
    overrides = {
        ("sim", "horizon"): args.horizon, ("sim", "warmup"): args.warmup, ("sim", "replications"): args.reps,
        ("optimize", "margin"): args.margin, ("sweep", "grid"): args.grid, ("sweep", "axis"): args.axis,
        ("sweep", "fixed_rate"): args.fixed_rate, ("rates", "lambda_p"): args.lambda_p,
        ("rates", "lambda_s"): args.lambda_s, ("optimize", "objective"): args.objective,
    }
    for (section, key), value in overrides.items():
        if value is not None:
            cfg[section][key] = value
    if args.a is not None:
        cfg["sweep"]["a_values"] = [t for t in args.a.split(",") if t.strip()]
    if args.horizon is not None and args.warmup is None:
        cfg["sim"]["warmup"] = args.horizon // 10
    cfg = cf.resolve_seed(cfg, args.seed)
    cf.check_config(cfg)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve(args)
    except cf.ConfigError as exc:
        print(f"coopra: config error: {exc}", file=sys.stderr)
        return 2
    warnings.simplefilter("ignore", an.ConditionWarning)
    try:
        if args.command == "validate":
            return cmd_validate(cfg, args)
        table = COMMANDS[args.command](cfg, args)
    except (OutOfRange, an.PrimaryOverloaded, NoDeliveries, ValueError) as exc:
        print(f"coopra {args.command}: {exc}", file=sys.stderr)
        return 1
    emit(table, args.command, cfg, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
