"""Command-line entry point: ``ssearch generate|estimate|replicate|validate``.

Exit codes: 0 success, 1 a validation check failed, 2 bad input,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
from dataclasses import replace
from pathlib import Path

import jsonschema

from . import __version__
from .core import Kind
from .estimate import EstimationConfig, default_start, maximize_simulated_likelihood
from .presets import PRESETS, get_preset, run_table_study, scaled
from .simulate.dataset import DataError, DgpConfig, DiscoveryDesign, generate_dataset, read_dataset, write_dataset
from .simulate.params import PARAM_NAMES, SPECS, ModelParams
from .values import SolverError

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
SCHEMA_VERSION = 1

_num = {"type": "number"}
_params_schema = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "gamma": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
        **{k: _num for k in ("gamma_outside", "beta_mean", "beta_sd", "log_cost_mean", "cost_scale",
                             "disc_log_cost_mean", "disc_log_cost_sd", "sigma_eps", "sigma_taste")},
        "spec": {"enum": list(SPECS)},
    },
}
_scenarios = [k.value for k in Kind]
RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema_version"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "dgp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "preset": {"enum": sorted(PRESETS)},
                "column": {"type": "string"},
                "params": _params_schema,
                "n_consumers": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "scenario": {"enum": _scenarios},
                "n_products": {"type": "integer", "minimum": 1, "maximum": 8},
                "has_outside": {"type": "boolean"},
                "price_low": _num,
                "price_high": _num,
                "n_observable": {"type": "integer", "minimum": 0},
                "scale": {"type": "number", "exclusiveMinimum": 0},
                "discovery": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "route_sizes": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                        "attr_prob": {"type": "array", "items": _num},
                        "price_range": {"type": "array", "items": {"type": "array", "items": _num,
                                                                   "minItems": 2, "maxItems": 2}},
                        "n_initial": {"type": "integer", "minimum": 1},
                        "pool_size": {"type": "integer", "minimum": 0},
                        "n_per_discovery": {"type": "integer", "minimum": 1},
                        "max_discoveries": {"type": "integer", "minimum": 0},
                    },
                },
            },
        },
        "estimation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "free": {"type": "array", "items": {"enum": list(PARAM_NAMES)}, "minItems": 1},
                "initial_params": _params_schema,
                "start_step": _num,
                "warmstart_iters": {"type": "integer", "minimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "xtol": {"type": "number", "exclusiveMinimum": 0},
                "ftol": {"type": "number", "exclusiveMinimum": 0},
                "n_draws": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "simplex_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "likelihood": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tail_clip": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e-3}},
        },
        "scenario": {"enum": _scenarios},
        "output_dir": {"type": "string"},
    },
}


class InputError(Exception):
    """Bad configuration or data; exit code 2."""


def version_string() -> str:
    """Package version plus the source commit, ``git describe`` style."""
    try:
        out = subprocess.run(["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"v{__version__}-g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return f"v{__version__}"


def load_config(path) -> dict:
    """Read and schema-check a RunConfig file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise InputError(f"cannot read config {p}: {exc.strerror}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{p}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    validator = jsonschema.Draft202012Validator(RUN_CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{p}: field {'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}" for e in errors]
        raise InputError("\n".join(lines))
    return cfg


def _params(base: ModelParams, d: dict | None) -> ModelParams:
    if not d:
        return base
    d = dict(d)
    if "gamma" in d:
        d["gamma"] = tuple(d["gamma"])
    try:
        return replace(base, **d)
    except ValueError as exc:
        raise InputError(f"params: {exc}") from None


def dgp_from_config(cfg: dict) -> tuple[DgpConfig, tuple | None]:
    """DgpConfig and the preset's free parameters (if a preset is named)."""
    d = dict(cfg.get("dgp", {}))
    free = None
    preset = d.pop("preset", None)
    column = d.pop("column", None)
    scale = d.pop("scale", 1.0)
    if preset:
        tab = get_preset(preset)
        try:
            col = tab.column(column) if column else tab.columns[-1]
        except KeyError:
            raise InputError(f"dgp/column: {preset} has columns {[c.label for c in tab.columns]}") from None
        base, free = col.dgp, col.free
    else:
        if column:
            raise InputError("dgp/column needs dgp/preset")
        base = DgpConfig()
    params = _params(base.params, d.pop("params", None))
    if "scenario" in cfg:
        d["scenario"] = cfg["scenario"]
    if "discovery" in d:
        d["discovery"] = DiscoveryDesign.from_dict(d["discovery"])
    try:
        dgp = replace(base, params=params, **d)
    except (ValueError, TypeError) as exc:
        raise InputError(f"dgp: {exc}") from None
    if scale != 1.0:
        dgp = scaled(dgp, scale)
    return dgp, free


def default_free(spec: str, scenario: Kind, has_outside: bool) -> tuple:
    """Parameters estimated when neither the config nor a preset lists them."""
    cost = ("cost_scale",) if spec == "stochastic_cost_exp" else ("log_cost_mean",)
    if scenario is Kind.DISCOVERY_LOG:
        return ("gamma1", "gamma2", "gamma3", "beta_mean") + cost + ("disc_log_cost_mean",)
    out = ("gamma1", "gamma2", "gamma3", "beta_mean", "beta_sd") + cost
    return (("gamma_outside",) + out) if has_outside else out


def estimation_from_config(cfg: dict, free) -> tuple[EstimationConfig, float]:
    e = dict(cfg.get("estimation", {}))
    start_step = e.pop("start_step", 0.1)
    init = e.pop("initial_params", None)
    if "free" in e:
        e["free"] = tuple(e["free"])
    else:
        e["free"] = tuple(free)
    if "tail_clip" in cfg.get("likelihood", {}):
        e["tail_clip"] = cfg["likelihood"]["tail_clip"]
    try:
        est = EstimationConfig(**e)
    except ValueError as exc:
        raise InputError(f"estimation: {exc}") from None
    if init is not None:
        est = replace(est, initial_params=_params(ModelParams(), init))
    return est, start_step


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def threads_from(arg) -> int:
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get("SSEARCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise InputError(f"SSEARCH_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


# ---------------------------------------------------------------- commands

def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    dgp, _ = dgp_from_config(cfg)
    if args.seed is not None:
        dgp = replace(dgp, seed=args.seed)
    out = Path(args.out or cfg.get("output_dir") or ".")
    ds = generate_dataset(dgp)
    write_dataset(ds, out)
    summary = ds.summary()
    print(f"wrote {ds.n_consumers} consumers ({dgp.scenario.value}) to {out}")
    for k, v in summary.items():
        if isinstance(v, float):
            print(f"  {k:<18} {v:.4f}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    dgp, free = dgp_from_config(cfg)
    try:
        data = read_dataset(args.data)
    except DataError as exc:
        raise InputError(str(exc)) from None
    if ("scenario" in cfg or "scenario" in cfg.get("dgp", {}) or "preset" in cfg.get("dgp", {})) \
            and data.scenario is not dgp.scenario:
        raise InputError(f"config scenario {dgp.scenario.value} does not match data scenario {data.scenario.value}")
    truth = None
    truth_path = Path(args.data) / "truth.json"
    if truth_path.exists():
        try:
            truth = ModelParams.from_dict(json.loads(truth_path.read_text())["params"])
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"truth.json: {exc}") from None
        if truth.spec != dgp.params.spec:
            raise InputError(f"config spec {dgp.params.spec} does not match data spec {truth.spec}")
    template = truth or dgp.params
    free = free or default_free(template.spec, data.scenario, data.markets[0].has_outside)
    est, step = estimation_from_config(cfg, free)
    if args.draws:
        est = replace(est, n_draws=args.draws)
    if args.seed is not None:
        est = replace(est, seed=args.seed)
    if est.initial_params is None:
        est = replace(est, initial_params=default_start(template, est.free, step))
    res = maximize_simulated_likelihood(data, est, template=template, truth=truth)
    out = res.to_dict()
    out["loglik"] = out["loglik_at_hat"]
    out["config"] = cfg
    out["version"] = version_string()
    if truth is None:
        out.pop("loglik_at_truth")
    path = Path(args.out or Path(cfg.get("output_dir") or ".") / "estimate.json")
    _write_json(path, out)
    print(f"log-likelihood {res.loglik_at_hat:.3f} after {res.iterations} iterations "
          f"({'converged' if res.converged else 'not converged'})")
    for n, v in res.estimates().items():
        print(f"  {n:<20} {v: .4f}")
    return EXIT_OK


def run_replication(table: str, reps: int | None, draws: int | None, scale: float, seed: int,
                    threads: int, columns=None) -> tuple[dict, dict]:
    """Run a table study; returns the deterministic report and the timings."""
    tab = get_preset(table)
    results, cols = run_table_study(table, reps, draws, scale, seed, threads, columns)
    report = {
        "table": tab.name,
        "title": tab.title,
        "reps": reps or tab.n_reps,
        "draws": draws or tab.n_draws,
        "scale": scale,
        "seed": seed,
        "version": version_string(),
        "columns": results,
    }
    timing = {"threads": threads, "columns": cols}
    return report, timing


LABELS = {
    "gamma_outside": "outside mean", "gamma1": "gamma_1", "gamma2": "gamma_2", "gamma3": "gamma_3",
    "beta_mean": "beta mean", "beta_sd": "beta sd", "log_cost_mean": "log cost mean",
    "cost_scale": "cost scale", "disc_log_cost_mean": "disc. log cost", "disc_log_cost_sd": "disc. log sd",
}


def render_table(report: dict) -> str:
    """Text table with truth, mean (sd) per column, log-likelihoods and RMSE."""
    cols = list(report["columns"].items())
    names = []
    for _, c in cols:
        names += [n for n in c["truth"] if n not in names]
    width = 18
    head = f"{'':<16}{'true':>8}" + "".join(f"{lab[:width]:>{width}}" for lab, _ in cols)
    lines = [f"{report['table']}: {report['title']}",
             f"{report['reps']} replications, {report['draws']} draws, scale {report['scale']}",
             head, "-" * len(head)]
    for n in names:
        truth = next(c["truth"][n] for _, c in cols if n in c["truth"])
        row = f"{LABELS.get(n, n):<16}{truth:>8.3f}"
        for _, c in cols:
            m, s = c["mean"].get(n), c["sd"].get(n)
            cell = "" if m is None else f"{m:.3f} ({s:.3f})"
            row += f"{cell:>{width}}"
        lines.append(row)
    lines.append("")
    for key, lab in (("mean_loglik_truth", "log-L (truth)"), ("mean_loglik_hat", "log-L (est.)")):
        lines.append(f"{lab:<16}{'':>8}" + "".join(
            f"{'' if c[key] is None else format(c[key], '.1f'):>{width}}" for _, c in cols))
    lines.append(f"{'RMSE':<16}{'':>8}" + "".join(
        f"{'' if c['rmse_all'] is None else format(c['rmse_all'], '.3f'):>{width}}" for _, c in cols))
    failed = sum(c["n_failed"] for _, c in cols)
    if failed:
        lines.append(f"{failed} replication(s) failed; see report.json")
    return "\n".join(lines)


def cmd_replicate(args) -> int:
    threads = threads_from(args.threads)
    report, timing = run_replication(args.table, args.reps, args.draws, args.scale, args.seed or 0,
                                     threads, args.column)
    out = Path(args.out or f"replicate-{args.table}")
    _write_json(out / "report.json", report)
    _write_json(out / "timing.json", timing)
    text = render_table(report)
    (out / "table.txt").write_text(text + "\n")
    print(text)
    if all(c["n_failed"] == c["n_reps"] for c in report["columns"].values()):
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validate import run_suite

    checks = run_suite(args.suite)
    report = {"suite": args.suite, "version": version_string(),
              "passed": all(c.passed for c in checks), "checks": [c.to_dict() for c in checks]}
    if args.out:
        _write_json(Path(args.out), report)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.measured:.3g} (tol {c.tolerance:.3g})")
    return EXIT_OK if report["passed"] else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssearch", description="Sequential search simulation and estimation.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a dataset from a run config")
    g.add_argument("--config", required=True)
    g.add_argument("--out")
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="maximum simulated likelihood on a dataset")
    e.add_argument("--config", required=True)
    e.add_argument("--data", required=True, help="dataset directory")
    e.add_argument("--out", help="result JSON path")
    e.add_argument("--draws", type=int)
    e.add_argument("--seed", type=int, help="draw-set seed")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("replicate", help="Monte Carlo study of a published table")
    r.add_argument("table", choices=sorted(PRESETS))
    r.add_argument("--reps", type=int)
    r.add_argument("--draws", type=int)
    r.add_argument("--scale", type=float, default=1.0)
    r.add_argument("--threads", type=int)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--column", action="append", help="restrict to a column (repeatable)")
    r.add_argument("--out", help="output directory")
    r.set_defaults(func=cmd_replicate)

    v = sub.add_parser("validate", help="run self-check suites")
    v.add_argument("suite", choices=["equivalence", "oracle", "invariance", "all"])
    v.add_argument("--out", help="JSON report path")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_INPUT
    except (FloatingPointError, SolverError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
