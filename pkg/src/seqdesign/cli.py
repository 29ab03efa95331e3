"""Command-line interface.

Every flag may also come from ``--config FILE`` (``key = value`` lines, ``#``
comments, keys spelled like the long flag with or without leading dashes).
``SEQDESIGN_SEED`` and ``SEQDESIGN_OUT_DIR`` override config values;
explicit flags override both. Exit codes: 0 success, 1 computation or input
error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, switching
from . import io as sio
from .canonical import derive_canonical
from .engine import (
    AdhocGrowth,
    CostEfficient,
    ExperimentConfig,
    Fixed,
    BernoulliResponder,
    compare_policies,
    median_path,
    replicate_seed,
    run_experiment,
)
from .estimation import Estimate, pseudo_data_from_estimate
from .exceptions import SeqDesignError
from .gain import (
    DEFAULT_DRAWS,
    DEFAULT_GRID_MAX,
    DEFAULT_GRID_MIN,
    DEFAULT_GRID_POINTS,
    default_grid,
    fit_gain,
)
from .glm import FisherInfo, LinkModel, ModelParams, d_criterion, fisher_info_arrays
from .stage import (
    DEFAULT_CS_POINTS,
    DEFAULT_D_POINTS,
    CostModel,
    fit_stage_rule,
    published_rule,
    suggest_stage_size,
    sweep_grid,
)

logger = logging.getLogger("seqdesign")

ENV_SEED = "SEQDESIGN_SEED"
ENV_OUT_DIR = "SEQDESIGN_OUT_DIR"
MODELS = [m.value for m in LinkModel]


class InputFileError(Exception):
    pass


def _sig(v, digits: int = 6):
    if isinstance(v, float):
        return float(f"{v:.{digits}g}")
    if isinstance(v, dict):
        return {k: _sig(x, digits) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_sig(x, digits) for x in v]
    return v


def _read_json(path) -> dict:
    p = Path(path)
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputFileError(f"{p}: file not found") from None
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputFileError(f"{p}: cannot read JSON ({exc})") from None


def _out_path(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(ENV_OUT_DIR)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def _write(path: Path, text: str) -> bytes:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode("utf-8")
    path.write_bytes(data)
    return data


def _params(args, *skip) -> dict:
    out = {}
    for k, v in sorted(vars(args).items()):
        if k in ("func", "config", "verbose") + skip:
            continue
        out[k] = v
    return out


# -- commands ---------------------------------------------------------------------

def cmd_derive_canonical(args) -> int:
    print(json.dumps(_sig(derive_canonical(args.model).to_dict())))
    return 0


def cmd_estimate_gain(args) -> int:
    grid = default_grid(args.grid_min, args.grid_max, args.grid_points)
    interp = fit_gain(args.model, grid, args.draws, args.seed,
                      variance_exponent=args.variance_exponent)
    params = _params(args, "out")
    doc = sio.gain_document(interp, params)
    out = _out_path(args.out)
    data = _write(out, sio.dumps(doc))
    _write(out.with_name(out.name + ".manifest.json"), sio.dumps(
        sio.manifest("estimate-gain", params, args.seed, __version__, outputs={out.name: data})))
    resid = max(abs(float(interp(s.d0)) - s.mean_gain) for s in interp.samples)
    print(json.dumps(_sig({"out": str(out), "eta": interp.eta, "theta": interp.theta,
                           "max_abs_residual": resid,
                           "monotone_projected": interp.monotone_projected})))
    return 0


def cmd_fit_rule(args) -> int:
    gain_path = Path(args.gain)
    try:
        interp = sio.load_gain(_read_json(gain_path))
    except (KeyError, ValueError, TypeError) as exc:
        raise InputFileError(f"{gain_path}: corrupt gain file ({exc})") from None
    if interp.model is not LinkModel.from_name(args.model):
        raise InputFileError(f"{gain_path}: gain file is for model {interp.model}, not {args.model}")
    d_grid = np.geomspace(1.0, 1000.0, args.d_points)
    cs_grid = np.geomspace(1.0, 1000.0, args.cs_points)
    table = sweep_grid(interp, d_grid, cs_grid)
    rule = fit_stage_rule(table, args.model)
    params = _params(args, "out", "table")
    out = _out_path(args.out)
    table_path = _out_path(args.table) if args.table else out.with_suffix(".sweep.csv")
    rule_bytes = _write(out, sio.dumps(sio.rule_document(rule, params, len(table), table.n_null)))
    table_bytes = _write(table_path, table.to_csv())
    _write(out.with_name(out.name + ".manifest.json"), sio.dumps(sio.manifest(
        "fit-rule", params, None, __version__, inputs={"gain": gain_path},
        outputs={out.name: rule_bytes, table_path.name: table_bytes})))
    print(json.dumps(_sig({"out": str(out), "table": str(table_path), **rule.to_dict(),
                           "null_rows": table.n_null})))
    return 0


def _stage_cost(args) -> float:
    if args.stage_cost is not None:
        return float(args.stage_cost)
    if args.stage_seconds is not None and args.unit_seconds is not None:
        return CostModel.from_seconds(args.stage_seconds, args.unit_seconds).stage_cost
    raise SeqDesignError("give --stage-cost or both --stage-seconds and --unit-seconds")


def _rule(args):
    if getattr(args, "paper_coefficients", False):
        return published_rule(args.model)
    if getattr(args, "rule", None):
        path = Path(args.rule)
        try:
            return sio.load_rule(_read_json(path))
        except (KeyError, ValueError, TypeError) as exc:
            raise InputFileError(f"{path}: corrupt rule file ({exc})") from None
    return None


def cmd_suggest(args) -> int:
    rule = _rule(args)
    if rule is None:
        raise SeqDesignError("give --rule FILE or --paper-coefficients")
    print(suggest_stage_size(rule, args.a_hat, args.d, _stage_cost(args)))
    return 0


def _scenario(args):
    model = LinkModel.from_name(args.model)
    true_params = ModelParams(args.true_a, args.true_b)
    init_params = ModelParams(args.initial_a, args.initial_b)
    stub = Estimate(init_params, FisherInfo(0.0, 0.0, 0.0), args.initial_d)
    pseudo = pseudo_data_from_estimate(model, stub)
    info = fisher_info_arrays(model, init_params, [p.x for p in pseudo], [p.n for p in pseudo])
    initial = Estimate(init_params, info, d_criterion(info))
    if args.target is not None:
        target = args.target
    elif model is switching.MODEL:
        target = switching.experiment_target()
    else:
        raise SeqDesignError("--target is required for models other than cloglog")
    cost = CostModel(_stage_cost(args))
    initial_cost = (args.initial_cost if args.initial_cost is not None
                    else switching.initial_cost())
    return model, true_params, initial, target, cost, initial_cost


def _policy(args, name):
    if name == "cost-efficient":
        rule = _rule(args) or published_rule(args.model)
        return CostEfficient(rule)
    if name == "adhoc":
        return AdhocGrowth(args.adhoc_start, args.adhoc_factor)
    if name == "fixed":
        if args.fixed_n is None:
            raise SeqDesignError("--fixed-n is required with --policy fixed")
        return Fixed(args.fixed_n)
    raise SeqDesignError(f"unknown policy {name!r}")


def _config(args, policy, model, target, cost, initial_cost):
    return ExperimentConfig(model=model, cost=cost, policy=policy, target_d=target,
                            budget=args.budget, max_stages=args.max_stages,
                            seed=args.seed, initial_cost=initial_cost)


def _median_csv(path_rows) -> str:
    return sio.table_csv(["stage", "D", "C"], path_rows)


def cmd_simulate(args) -> int:
    model, true_params, initial, target, cost, initial_cost = _scenario(args)
    config = _config(args, _policy(args, args.policy), model, target, cost, initial_cost)
    out_dir = Path(args.out_dir)
    outputs = {}
    results = []
    for r in range(args.replications):
        responder = BernoulliResponder(model, true_params, replicate_seed(args.seed, r))
        res = run_experiment(config, responder, initial)
        results.append(res)
        name = f"path_{r:03d}"
        outputs[name + ".csv"] = _write(out_dir / f"{name}.csv", sio.path_csv(res.records))
        outputs[name + ".json"] = _write(out_dir / f"{name}.json", sio.path_json(res.records))
    outputs["median_path.csv"] = _write(out_dir / "median_path.csv", _median_csv(median_path(results)))
    params = _params(args, "out_dir")
    params["target_resolved"] = target
    _write(out_dir / "manifest.json", sio.dumps(
        sio.manifest("simulate", params, args.seed, __version__, outputs=outputs)))
    costs = [res.final_c for res in results]
    print(json.dumps(_sig({"out_dir": str(out_dir), "replications": args.replications,
                           "target": target, "median_total_cost": float(np.median(costs)),
                           "median_stages": float(np.median([len(r) for r in results]))})))
    return 0


def cmd_compare(args) -> int:
    model, true_params, initial, target, cost, initial_cost = _scenario(args)
    ce = _config(args, _policy(args, "cost-efficient"), model, target, cost, initial_cost)
    ah = _config(args, _policy(args, "adhoc"), model, target, cost, initial_cost)
    cmp = compare_policies(ce, ah, true_params, initial, args.replications, args.seed,
                           names=("cost_efficient", "adhoc"))
    out_dir = Path(args.out_dir)
    outputs = {}
    for summary in (cmp.a, cmp.b):
        for r, res in enumerate(summary.results):
            rel = f"{summary.name}/path_{r:03d}.csv"
            outputs[rel] = _write(out_dir / rel, sio.path_csv(res.records))
        rel = f"median_{summary.name}.csv"
        outputs[rel] = _write(out_dir / rel, _median_csv(summary.median_path))
    outputs["reference_line.csv"] = _write(out_dir / "reference_line.csv",
                                           sio.table_csv(["D", "C"], cmp.reference_line))
    summary = {
        "target": target,
        "replications": args.replications,
        "median_total_cost": {s.name: s.median_total_cost for s in (cmp.a, cmp.b)},
        "median_cost_difference": cmp.median_cost_difference,
        "relative_saving": cmp.median_cost_difference / cmp.b.median_total_cost,
        "failures": {s.name: s.failures for s in (cmp.a, cmp.b)},
    }
    outputs["summary.json"] = _write(out_dir / "summary.json", sio.dumps(summary))
    params = _params(args, "out_dir")
    params["target_resolved"] = target
    _write(out_dir / "manifest.json", sio.dumps(
        sio.manifest("compare", params, args.seed, __version__, outputs=outputs)))
    print(json.dumps(_sig({k: summary[k] for k in ("median_total_cost", "median_cost_difference",
                                                    "relative_saving")})))
    return 0


# -- parser ---------------------------------------------------------------------------

def _add_model(p):
    p.add_argument("--model", choices=MODELS, default="cloglog")


def _add_stage_cost(p, default=None):
    p.add_argument("--stage-cost", type=float, default=default,
                   help="stage cost in units of one measurement")
    p.add_argument("--stage-seconds", type=float, help="stage cost in seconds")
    p.add_argument("--unit-seconds", type=float, help="cost of one measurement in seconds")


def _add_rule_source(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rule", help="rule.json written by fit-rule")
    g.add_argument("--paper-coefficients", action="store_true",
                   help="use the published coefficient set for --model")


def _add_scenario(p):
    _add_model(p)
    _add_rule_source(p)
    _add_stage_cost(p, default=switching.STAGE_COST)
    p.add_argument("--true-a", type=float, default=switching.TRUE_PARAMS.a)
    p.add_argument("--true-b", type=float, default=switching.TRUE_PARAMS.b)
    p.add_argument("--initial-a", type=float, default=switching.INITIAL_PARAMS.a)
    p.add_argument("--initial-b", type=float, default=switching.INITIAL_PARAMS.b)
    p.add_argument("--initial-d", type=float, default=switching.INITIAL_D)
    p.add_argument("--initial-cost", type=float, default=None,
                   help="cost already spent on the initial estimate (default 4.0 s / 0.00386 s)")
    p.add_argument("--target", type=float, default=None,
                   help="stop when D reaches this value (default: recorded experiment's final D)")
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("--max-stages", type=int, default=500)
    p.add_argument("--adhoc-start", type=float, default=switching.ADHOC_START)
    p.add_argument("--adhoc-factor", type=float, default=switching.ADHOC_FACTOR)
    p.add_argument("--replications", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", default="out")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqdesign", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("derive-canonical", help="canonical D-optimal two-point design")
    _add_model(p)
    p.set_defaults(func=cmd_derive_canonical)

    p = sub.add_parser("estimate-gain", help="simulate h(D0) and fit its interpolant")
    _add_model(p)
    p.add_argument("--grid-min", type=float, default=DEFAULT_GRID_MIN)
    p.add_argument("--grid-max", type=float, default=DEFAULT_GRID_MAX)
    p.add_argument("--grid-points", type=int, default=DEFAULT_GRID_POINTS)
    p.add_argument("--draws", type=int, default=DEFAULT_DRAWS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--variance-exponent", type=float, default=1.0,
                   help="estimate covariance scales as D0**-exponent (1: inverse information)")
    p.add_argument("--out", default="gain.json")
    p.set_defaults(func=cmd_estimate_gain)

    p = sub.add_parser("fit-rule", help="sweep (D, C_S) and fit the stage-size rule")
    _add_model(p)
    p.add_argument("--gain", required=True)
    p.add_argument("--out", default="rule.json")
    p.add_argument("--table", default=None, help="sweep CSV (default: <out>.sweep.csv)")
    p.add_argument("--d-points", type=int, default=DEFAULT_D_POINTS)
    p.add_argument("--cs-points", type=int, default=DEFAULT_CS_POINTS)
    p.set_defaults(func=cmd_fit_rule)

    p = sub.add_parser("suggest", help="stage size for the next stage")
    _add_model(p)
    _add_rule_source(p)
    p.add_argument("--a-hat", type=float, required=True)
    p.add_argument("--d", type=float, required=True)
    _add_stage_cost(p)
    p.set_defaults(func=cmd_suggest)

    p = sub.add_parser("simulate", help="simulate sequential experiments under one policy")
    _add_scenario(p)
    p.add_argument("--policy", choices=["cost-efficient", "adhoc", "fixed"], default="cost-efficient")
    p.add_argument("--fixed-n", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="cost-efficient vs ad-hoc stage sizes")
    _add_scenario(p)
    p.set_defaults(func=cmd_compare, replications=100)
    return parser


def _parse_config(path: Path) -> dict:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputFileError(f"{path}: cannot read config ({exc})") from None
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputFileError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_defaults(parser: argparse.ArgumentParser, argv) -> None:
    """Fold config-file and environment values into the subcommand defaults."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, rest = pre.parse_known_args(argv)
    values = _parse_config(Path(known.config)) if known.config else {}
    if ENV_SEED in os.environ:
        values["seed"] = os.environ[ENV_SEED]
    if ENV_OUT_DIR in os.environ:
        values["out_dir"] = os.environ[ENV_OUT_DIR]
    if not values:
        return
    subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for sp in subparsers.choices.values():
        dests = {a.dest: a for a in sp._actions}
        applicable = {}
        for key, value in values.items():
            action = dests.get(key)
            if action is None:
                continue
            if isinstance(action, argparse._StoreTrueAction):
                applicable[key] = value.lower() in ("1", "true", "yes", "on")
            else:
                applicable[key] = action.type(value) if action.type else value
        sp.set_defaults(**applicable)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_defaults(parser, argv)
    except (InputFileError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    argv = [a for i, a in enumerate(argv)
            if a != "--config" and not (i > 0 and argv[i - 1] == "--config")
            and not a.startswith("--config=")]
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputFileError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SeqDesignError, ValueError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
