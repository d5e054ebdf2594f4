"""``qutritctx`` command line: bound, witness, census, simulate, sweep, adversary, reanalyze.

Exit codes: 0 success, 2 internal invariant breach, 64 usage error,
65 data or ingestion error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import adversary, core, engine, harness, persist
from .errors import (
    CapacityError, ConfigurationError, ConsistencyError, ConstructionError, DomainError,
    IngestionError, InsufficientDataError, UsageError, ValidationError,
)
from .optics import DetectorBank

EXIT_OK, EXIT_INVARIANT, EXIT_USAGE, EXIT_DATA = 0, 2, 64, 65

# Options that never change results; kept out of embedded configs.
_NOT_CONFIG = {"config", "out", "format", "func", "command", "reanalyze"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- argument helpers ----------------------------------------------------------


def _floats(value, name: str) -> list[float]:
    if value is None:
        return []
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise UsageError(f"--{name}: expected numbers, got {value!r}") from exc


def _seed(args) -> int:
    if args.seed is None:
        raise UsageError("--seed is required for this command")
    seed = int(args.seed)
    if not 0 <= seed < 2**64:
        raise UsageError("--seed must be a 64-bit unsigned integer")
    return seed


def _positive(value, name: str) -> int:
    v = int(value)
    if v < 1:
        raise UsageError(f"--{name} must be positive")
    return v


def _unit(value, name: str) -> float:
    v = float(value)
    if not 0.0 <= v <= 1.0:
        raise UsageError(f"--{name} must lie in [0, 1]")
    return v


def _graph(args) -> tuple[engine.ExclusivityGraph, bool]:
    if args.graph:
        return engine.build_graph(persist.load_catalog(args.graph)), False
    return engine.catalog_graph(), True


def _functional(name: str, g: engine.ExclusivityGraph) -> engine.InequalityFunctional:
    if name == "auto":
        name = "main" if g.n == 9 else "edge-sum"
    if name == "main":
        if g.n < 9:
            raise UsageError("the main functional needs a nine-ray catalog")
        return engine.main_functional(g)
    if name == "edge-sum":
        return engine.edge_sum_functional(g)
    if name.startswith("vertex-only-"):
        try:
            v = int(name.rsplit("-", 1)[1])
        except ValueError:
            v = 0
        if not 1 <= v <= g.n:
            raise UsageError(f"no vertex in functional {name!r}")
        return engine.vertex_functional(v)
    raise UsageError(f"unknown functional {name!r}")


def _witness_and_lambda(g, f):
    m = engine.witness(g, f)
    return m, float(core.eigh3(m)[0][0])


def resolve_state(spec: str) -> np.ndarray:
    """``optimal`` | ``mixed`` | ``pure:K`` | path to a JSON 3x3 matrix of [re, im] pairs."""
    if spec == "optimal":
        m = engine.witness(engine.catalog_graph(), engine.main_functional())
        v = core.eigh3(m)[1][:, 0]
        return core.pure_state(v / np.linalg.norm(v))
    if spec == "mixed":
        return core.maximally_mixed()
    if spec.startswith("pure:"):
        try:
            k = int(spec[5:])
        except ValueError as exc:
            raise UsageError(f"bad state {spec!r}") from exc
        return core.pure_state(core.ray(k))
    path = Path(spec)
    if not path.exists():
        raise UsageError(f"state {spec!r} is neither a keyword nor a file")
    data = persist.read_json(path)
    try:
        rho = core.from_pairs(data["rho"] if isinstance(data, dict) else data)
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"malformed density matrix file {spec}: {exc}") from exc
    try:
        return core.as_density(rho, core.FILE_TOL)
    except ValidationError as exc:
        raise IngestionError(f"{spec}: {exc}") from exc


def _config(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_CONFIG}


def _emit(args, record: dict, rows: list[dict] | None = None) -> None:
    fmt = args.format or ("csv" if args.command == "sweep" else "json")
    if fmt == "json":
        text = persist.dumps(record)
    elif fmt == "csv":
        text = persist.csv_text(rows if rows is not None else [_flat(record)])
    else:
        text = persist.table_text(rows if rows is not None else [_flat(record)])
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _flat(record: dict) -> dict:
    return {k: v for k, v in record.items() if not isinstance(v, (dict, list))}


# --- commands ------------------------------------------------------------------


def cmd_bound(args) -> int:
    g, stock = _graph(args)
    f = _functional(args.functional, g)
    bound, arg = engine.classical_min(g, f, strict_bases=args.strict_bases)
    count = len(engine.enumerate_nchv(g, strict_bases=args.strict_bases))
    if stock and f.name == "nine-ray" and not args.strict_bases and bound != engine.CLASSICAL_BOUND:
        raise ConsistencyError(f"stock catalog bound {bound} != {engine.CLASSICAL_BOUND}")
    _emit(args, {
        "format_version": persist.FORMAT_VERSION, "config": _config(args), "functional": f.name,
        "vertices": g.n, "edges": len(g.edges), "bound": bound, "argmin": list(arg),
        "admissible": count,
    })
    return EXIT_OK


def cmd_witness(args) -> int:
    g, stock = _graph(args)
    f = _functional(args.functional, g)
    m, lam = _witness_and_lambda(g, f)
    bound = f.bound if f.bound is not None else engine.classical_min(g, f)[0]
    residual = engine.identity_residual(g, f)
    if stock and f.name == "nine-ray":
        direct = float(np.linalg.norm(m - (14 * np.eye(3) - 6 * engine.projector_sum(g))))
        residual = max(residual, direct)
    if residual >= 1e-12:
        raise ConsistencyError(f"witness identity residual {residual:g}")
    try:
        eta_star = engine.threshold_from_lambda(lam, bound)
    except DomainError:
        eta_star = float("nan")
    rec = {
        "format_version": persist.FORMAT_VERSION, "config": _config(args), "functional": f.name,
        "bound": bound, "lambda_min": lam, "eigenvalues": core.eigh3(m)[0].tolist(),
        "eta_star": eta_star, "eta_star_2dp": f"{eta_star:.2f}", "identity_residual": residual,
    }
    if args.rho:
        rec["lhs"] = engine.lhs(resolve_state(args.rho), m)
    _emit(args, rec)
    return EXIT_OK


def cmd_census(args) -> int:
    seed = _seed(args)
    g, _ = _graph(args)
    f = _functional(args.functional, g)
    n = _positive(args.trials, "trials")
    res = engine.census(n, seed, args.basis, workers=_positive(args.workers, "workers"), g=g, f=f,
                        min_gap=float(args.min_gap), refine=not args.no_refine)
    rec = {"format_version": persist.FORMAT_VERSION, "config": _config(args), **res.to_record()}
    _emit(args, rec)
    return EXIT_OK


def _plan(args) -> harness.ExperimentPlan:
    return harness.default_plan(_positive(args.trials, "trials"), args.a9_stage,
                                calibration=args.calibration, record_all=args.record_all)


def cmd_simulate(args) -> int:
    if args.reanalyze:
        return _reanalyze(Path(args.reanalyze), args)
    seed = _seed(args)
    plan = _plan(args)
    eta = _floats(args.eta, "eta")
    if len(eta) != 1:
        raise UsageError("simulate takes a single --eta")
    bank = DetectorBank.uniform(_unit(eta[0], "eta"), _unit(args.eta0, "eta0"))
    rho = resolve_state(args.rho)
    batches, circuits = harness.simulate_plan(rho, plan, bank, seed, float(args.sigma),
                                              legal=not args.allow_illegal)
    config = _config(args)
    report = harness.analyze(plan, batches, bank.eta_min, config=config)
    if args.out and args.format in (None, "json") and not args.out.endswith(".json"):
        # Run directory: report, per-stage logs, circuits and a manifest for reanalysis.
        out = Path(args.out)
        (out / "logs").mkdir(parents=True, exist_ok=True)
        for label, batch in batches.items():
            persist.write_log(out / "logs" / persist.log_name(label), batch)
        persist.write_json(out / "circuits.json",
                           {k: persist.circuit_to_json(c) for k, c in circuits.items()})
        persist.write_json(out / "manifest.json", {
            "format_version": persist.FORMAT_VERSION, "config": config, "plan": plan.to_json(),
            "eta": bank.eta_min, "logs": {k: f"logs/{persist.log_name(k)}" for k in batches},
        })
        persist.write_json(out / "report.json", report.to_json())
        (out / "report.csv").write_text(persist.csv_text(report.csv_rows()))
        return EXIT_OK
    _emit(args, report.to_json(), report.csv_rows())
    return EXIT_OK


def reanalyze_dir(path: Path) -> harness.ExperimentReport:
    """Rebuild the report of a simulate run directory from its logs and manifest."""
    path = Path(path)
    if not (path / "manifest.json").exists() and (path.parent / "manifest.json").exists():
        path = path.parent
    manifest = persist.read_json(path / "manifest.json")
    try:
        plan = harness.ExperimentPlan.from_json(manifest["plan"])
        logs = manifest["logs"]
        eta = float(manifest["eta"])
        config = manifest["config"]
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestionError(f"malformed manifest in {path}: {exc}") from exc
    batches = {}
    for stage in plan.stages:
        if stage.label not in logs:
            raise IngestionError(f"manifest lists no log for stage {stage.label}")
        batches[stage.label] = persist.read_log(path / logs[stage.label], stage.label)
    return harness.analyze(plan, batches, eta, config=config)


def _reanalyze(path: Path, args) -> int:
    report = reanalyze_dir(path)
    _emit(args, report.to_json(), report.csv_rows())
    return EXIT_OK


def cmd_reanalyze(args) -> int:
    return _reanalyze(Path(args.directory), args)


def cmd_sweep(args) -> int:
    seed = _seed(args)
    etas = _floats(args.eta, "eta")
    sigmas = _floats(args.sigma, "sigma")
    if not etas or not sigmas:
        raise UsageError("empty sweep grid")
    for e in etas:
        _unit(e, "eta")
    plan = harness.default_plan(_positive(args.trials, "trials"), args.a9_stage, calibration=True)
    rho = resolve_state(args.rho)
    rows = []
    for sigma in sigmas:
        for r in harness.eta_sweep(rho, etas, plan, seed, sigma, _unit(args.eta0, "eta0")):
            rows.append({"eta": r.eta, "sigma": r.sigma, "bound": r.lossy_bound, "lhs": r.lhs,
                         "lhs_stderr": r.lhs_stderr, "quantum_target": r.quantum_target,
                         "eps_a": r.eps_a, "verdict": r.verdict})
    _emit(args, {"format_version": persist.FORMAT_VERSION, "config": _config(args), "rows": rows}, rows)
    return EXIT_OK


def cmd_adversary(args) -> int:
    seed = _seed(args)
    eta = _floats(args.eta, "eta")
    if len(eta) != 1:
        raise UsageError("adversary takes a single --eta")
    eta = _unit(eta[0], "eta")
    plan = harness.default_plan(_positive(args.trials, "trials"))
    if args.strategy:
        strategy = adversary.AdversarialStrategy.from_json(persist.read_json(args.strategy))
        adversary.validate(strategy, eta, plan)
        expected = adversary.expected_report(strategy, eta, plan).lhs
        evaluations = 0
    else:
        res = adversary.search_adversarial(eta, _positive(args.budget, "budget"), seed, plan,
                                           restarts=int(args.restarts))
        strategy, expected, evaluations = res.strategy, res.expected_lhs, res.evaluations
    rec = {
        "format_version": persist.FORMAT_VERSION, "config": _config(args), "eta": eta,
        "expected_lhs": expected, "lossy_bound": engine.lossy_bound(eta) if eta > 0 else float("-inf"),
        "nchv_bound": engine.CLASSICAL_BOUND, "evaluations": evaluations,
        "click_rates": adversary.click_rates(strategy, plan).tolist(),
    }
    if not args.no_validate:
        mc = adversary.adversarial_run(strategy, eta, plan, plan.trials, seed)
        z = abs(mc.lhs - expected) / mc.lhs_stderr if mc.lhs_stderr > 0 else 0.0
        rec["monte_carlo"] = {"lhs": mc.lhs, "stderr": mc.lhs_stderr, "trials": plan.trials,
                              "z": z, "within_3sigma": bool(z <= 3.0)}
    if args.out:
        persist.write_json(args.out, strategy.to_json())
        rec["strategy_file"] = str(args.out)
    else:
        rec["strategy"] = strategy.to_json()
    sys.stdout.write(persist.dumps(rec))
    return EXIT_OK


# --- parser --------------------------------------------------------------------


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of option values; flags win")
    common.add_argument("--out", help="output file (simulate: run directory)")
    common.add_argument("--format", choices=("json", "csv", "table"),
                        help="default: csv for sweep, json otherwise")

    graph = argparse.ArgumentParser(add_help=False)
    graph.add_argument("--graph", help="JSON ray catalog (default: nine-ray catalog)")
    graph.add_argument("--functional", default="auto",
                       help="main | edge-sum | vertex-only-K (auto: main for nine rays)")

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--seed", type=int)
    run.add_argument("--trials", type=int, default=100_000, help="trials per stage")
    run.add_argument("--eta0", type=float, default=1.0, help="herald efficiency")
    run.add_argument("--rho", default="optimal", help="optimal | mixed | pure:K | file.json")
    run.add_argument("--a9-stage", default="S6", choices=("S6", "S7"))

    p = _Parser(prog="qutritctx", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    s = subs["bound"] = sub.add_parser("bound", parents=[common, graph], help="classical bound")
    s.add_argument("--strict-bases", action="store_true")
    s.set_defaults(func=cmd_bound)

    s = subs["witness"] = sub.add_parser("witness", parents=[common, graph], help="witness spectrum")
    s.add_argument("--rho", help="also report the LHS of this state")
    s.set_defaults(func=cmd_witness)

    s = subs["census"] = sub.add_parser("census", parents=[common, graph], help="random-state census")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", "--n", type=int, default=1_000_000, dest="trials")
    s.add_argument("--basis", choices=("fixed", "optimized"), default="fixed")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--min-gap", type=float, default=0.0)
    s.add_argument("--no-refine", action="store_true")
    s.set_defaults(func=cmd_census)

    s = subs["simulate"] = sub.add_parser("simulate", parents=[common, run], help="simulate the campaign")
    s.add_argument("--eta", default="1.0")
    s.add_argument("--sigma", type=float, default=0.0, help="wave-plate jitter (rad)")
    s.add_argument("--calibration", action="store_true")
    s.add_argument("--record-all", action="store_true", help="record the two triangle stages too")
    s.add_argument("--allow-illegal", action="store_true")
    s.add_argument("--reanalyze", help="rebuild the report from a run directory instead")
    s.set_defaults(func=cmd_simulate)

    s = subs["sweep"] = sub.add_parser("sweep", parents=[common, run], help="efficiency/jitter sweep")
    s.add_argument("--eta", default="0.7,0.82,0.9,1.0")
    s.add_argument("--sigma", default="0")
    s.set_defaults(func=cmd_sweep)

    s = subs["adversary"] = sub.add_parser("adversary", parents=[common], help="loss-exploiting models")
    s.add_argument("--seed", type=int)
    s.add_argument("--eta", default="0.5")
    s.add_argument("--budget", type=int, default=20_000)
    s.add_argument("--restarts", type=int, default=8)
    s.add_argument("--trials", type=int, default=100_000, help="Monte Carlo trials per stage")
    s.add_argument("--strategy", help="re-validate this strategy file instead of searching")
    s.add_argument("--no-validate", action="store_true")
    s.set_defaults(func=cmd_adversary)

    s = subs["reanalyze"] = sub.add_parser("reanalyze", parents=[common], help="report from logs")
    s.add_argument("directory")
    s.set_defaults(func=cmd_reanalyze)
    return p, subs


def parse_args(argv=None) -> argparse.Namespace:
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = yaml.safe_load(Path(args.config).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(values, dict):
            raise UsageError("config file must be a mapping")
        values = {str(k).replace("-", "_"): v for k, v in values.items()}
        known = set(vars(args)) - {"func", "command", "config"}
        unknown = sorted(set(values) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        subs[args.command].set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return args.func(args)
    except (UsageError, ValidationError, DomainError, ConfigurationError) as exc:
        print(f"qutritctx: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestionError, InsufficientDataError) as exc:
        print(f"qutritctx: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConsistencyError, ConstructionError, CapacityError) as exc:
        print(f"qutritctx: invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
