"""Command-line driver.  Every command prints one JSON object on stdout.

Exit codes: 0 success, 1 reproduction threshold missed, 2 input error,
3 numeric failure, 4 attack refused under the declared knowledge case.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import scenario_io
from .graph import (Digraph, GraphError, all_private, can_identify_external, identifiable_set, is_strongly_connected,
                    is_weight_balanced, islands, parse_graph, partition_island, topology)
from .indist import (ConstructionError, alpha_shift_alternative, beta_exchange_alternative,
                     external_scalar_alternative, island_alternative, verify_pair)
from .integrate import NumericalError, StepSizeError
from .observers import ExternalObserver, InternalObserver, IslandObserver, ObserverError, observe
from .reference import REFERENCE_AVERAGE, reference_scenario
from .signals import DEFAULT_HORIZON, DEFAULT_TOL, SignalError, coupled_admissibility_check, network_admissibility
from .sim import ScenarioError, conservation_residual, consensus_error, resolve_step, simulate, write_csv

EXIT_OK, EXIT_THRESHOLD, EXIT_INPUT, EXIT_NUMERIC, EXIT_REFUSED = 0, 1, 2, 3, 4

# knowledge case -> observer kinds it cannot support, with the reason
REFUSALS = {
    2: {
        "internal": "offsets beta are unknown; exchanging beta between agents leaves every output unchanged",
        "external": "offsets beta are unknown; exchanging beta between agents leaves every output unchanged",
        "island": "offsets beta are unknown; exchanging beta between agents leaves every output unchanged",
    },
    3: {
        "external": "alpha is unknown; shifting all states into a constant output offset leaves every output unchanged",
    },
}

STRICT_TOL = 1e-6
LOOSE_TOL = 1e-2


class Refused(Exception):
    pass


def emit(obj) -> None:
    print(json.dumps(obj, default=_jsonable))


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (set, frozenset)):
        return sorted(o)
    raise TypeError(f"not serialisable: {type(o).__name__}")


def _nodes(text: str) -> frozenset[int]:
    try:
        return frozenset(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated node labels, got {text!r}") from None


def _assignment(text: str) -> tuple[int, float]:
    try:
        node, value = text.split("=")
        return int(node), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NODE=VALUE, got {text!r}") from None


def load_scenario(args):
    sf = scenario_io.load(args.file)
    s = sf.scenario
    changes = {}
    if getattr(args, "horizon", None) is not None:
        changes["horizon"] = args.horizon
    if getattr(args, "step", None) is not None:
        changes["step"] = args.step
    if changes:
        s = s.with_(**changes)
    return s, sf.knowledge


def load_graph(args) -> Digraph:
    if args.family:
        return topology(args.family, *args.family_args)
    if not args.file:
        raise GraphError("give a scenario/graph file or --family")
    path = Path(args.file)
    if path.suffix == ".json":
        return scenario_io.load(path).scenario.graph
    try:
        return parse_graph(path.read_text())
    except OSError as exc:
        raise GraphError(f"cannot read {path}: {exc}") from None


# ----------------------------------------------------------------------------
# commands

def cmd_simulate(args) -> int:
    s, _ = load_scenario(args)
    tr = simulate(s)
    out = None
    if args.out:
        out = str(args.out)
        write_csv(tr, out)
    emit({
        "command": "simulate",
        "n": s.n,
        "horizon": float(tr.times[-1]),
        "step": tr.step,
        "samples": len(tr.times),
        "final_x": tr.x[-1],
        "average_x0": float(np.mean(s.x0)),
        "consensus_error": consensus_error(tr),
        "conservation_residual": conservation_residual(tr, s),
        "csv": out,
    })
    return EXIT_OK


def cmd_verify(args) -> int:
    s, _ = load_scenario(args)
    horizon = args.horizon if args.horizon is not None else DEFAULT_HORIZON
    pairs = list(zip(s.f, s.g))
    report = network_admissibility(pairs, s.graph, horizon, args.tol, args.step)
    coupled = coupled_admissibility_check(pairs, s.graph, horizon, args.tol, args.step)
    emit({
        "command": "verify",
        **report.to_dict(),
        "coupled": {"passed": coupled.passed, "sum_limit": coupled.sum_limit,
                    "p_limit": coupled.p_limit, "converged": coupled.converged},
    })
    return EXIT_OK


def _check_knowledge(kind, knowledge, force):
    reason = REFUSALS.get(knowledge.case, {}).get(kind)
    if reason and not force:
        raise Refused(f"knowledge case {knowledge.case} refuses the {kind} observer: {reason} (use --force to run anyway)")
    return reason


def cmd_attack(args) -> int:
    s, know = load_scenario(args)
    g = s.graph
    warning = _check_knowledge(args.kind, know, args.force)
    report = {"command": "attack", "kind": args.kind, "knowledge_case": know.case}
    if warning:
        report["forced"] = warning
    if args.kind == "internal":
        if args.observer is None:
            raise ObserverError("--observer is required for the internal observer")
        ident = identifiable_set(g, args.observer)
        targets = sorted(ident) if args.target is None else [args.target]
        if args.target is not None and args.target not in ident and not args.force:
            raise ObserverError(f"agent {args.observer} cannot identify agent {args.target}")
        obs = [InternalObserver(args.observer, t, know.beta_of(t), check=not args.force) for t in targets]
        report.update({"observer": args.observer, "identifiable": sorted(ident),
                       "protected": sorted(set(g.nodes) - ident - {args.observer})})
    elif args.kind == "external":
        if args.target is None or args.intercepted is None:
            raise ObserverError("--target and --intercepted are required for the external observer")
        ok = can_identify_external(g, args.target, args.intercepted)
        if not ok and not args.force:
            raise ObserverError(f"intercepted set {sorted(args.intercepted)} misses outputs agent {args.target} listens to")
        obs = [ExternalObserver(args.target, know.beta_of(args.target), know.alpha, args.eta0,
                                args.intercepted if ok else None)]
        report.update({"target": args.target, "intercepted": sorted(args.intercepted), "identifiable": ok})
    else:
        if args.observer is None or args.island is None:
            raise ObserverError("--observer and --island are required for the island observer")
        island = args.island | {args.observer}
        v2, v3, v4 = partition_island(g, args.observer, island)
        betas = {i: know.beta_of(i) for i in island}
        obs = [IslandObserver(args.observer, island, betas)]
        report.update({"observer": args.observer, "island": sorted(island),
                       "partition": {"V2": sorted(v2), "V3": sorted(v3), "V4": sorted(v4)}})
    tr, runs = observe(s, obs)
    report["estimates"] = {run.name: run.final for run in runs}
    if args.out:
        write_csv(tr, args.out, extra={run.name: run.estimate for run in runs})
        report["csv"] = str(args.out)
    emit(report)
    return EXIT_OK


def build_pair(s, args):
    c = args.construction
    if c == "island":
        if args.agent is None or not args.delta_x3:
            raise ConstructionError("island needs --agent and at least one --delta-x3 NODE=VALUE")
        return island_alternative(s, args.agent, dict(args.delta_x3))
    if c == "external_scalar":
        if None in (args.visible, args.hidden, args.delta):
            raise ConstructionError("external_scalar needs --visible, --hidden and --delta")
        return external_scalar_alternative(s, args.visible, args.hidden, args.delta)
    if c == "alpha_shift":
        if args.a is None:
            raise ConstructionError("alpha_shift needs --a")
        return alpha_shift_alternative(s, args.a)
    if None in (args.i, args.k, args.beta_ik, args.d):
        raise ConstructionError("beta_exchange needs --i, --k, --beta-ik and --d")
    return beta_exchange_alternative(s, args.i, args.k, args.beta_ik, args.d)


def cmd_indist(args) -> int:
    s, know = load_scenario(args)
    pair = build_pair(s, args)
    check = verify_pair(pair)
    outdir = Path(args.out or "indist_out")
    outdir.mkdir(parents=True, exist_ok=True)
    scenario_io.dump(pair.original, outdir / "original.json", know)
    scenario_io.dump(pair.alternative, outdir / "alternative.json", know)
    emit({
        "command": "indist",
        "construction": pair.construction,
        "params": pair.params,
        "observable": sorted(pair.observable),
        "x0_original": pair.original.x0,
        "x0_alternative": pair.alternative.x0,
        **check.to_dict(),
        "indistinguishable": check.observable_distance <= STRICT_TOL,
        "files": [str(outdir / "original.json"), str(outdir / "alternative.json")],
    })
    return EXIT_OK


def cmd_islands(args) -> int:
    g = load_graph(args)
    found = islands(g, args.agent)
    parts = []
    for isl in sorted(found, key=sorted):
        v2, v3, v4 = partition_island(g, args.agent, isl)
        parts.append({"nodes": sorted(isl), "V2": sorted(v2), "V3": sorted(v3), "V4": sorted(v4)})
    emit({"command": "islands", "agent": args.agent, "count": len(found), "islands": parts})
    return EXIT_OK


def cmd_classify(args) -> int:
    g = load_graph(args)
    report = {
        "command": "classify",
        "n": g.n,
        "strongly_connected": is_strongly_connected(g),
        "weight_balanced": is_weight_balanced(g),
        "all_private": all_private(g),
        "identifiable": {str(i): sorted(identifiable_set(g, i)) for i in g.nodes},
    }
    if args.target is not None and args.intercepted is not None:
        report["external"] = {"target": args.target, "intercepted": sorted(args.intercepted),
                              "identifiable": can_identify_external(g, args.target, args.intercepted)}
    emit(report)
    return EXIT_OK


# ----------------------------------------------------------------------------
# reproduction of the five-agent benchmark

def _run_observed(s):
    return observe(s, [InternalObserver(1, 4), InternalObserver(1, 5),
                       ExternalObserver(2, intercepted=frozenset({2, 3})), IslandObserver(1, frozenset({1, 2, 3}))])


def _run_alternative(s, step):
    return simulate(island_alternative(s, 1, {3: 1.0}).alternative.with_(step=step))


def _run_admissibility(s):
    return network_admissibility(list(zip(s.f, s.g)), s.graph, DEFAULT_HORIZON, DEFAULT_TOL)


def _check(value, limit, below=True):
    passed = bool(value <= limit) if below else bool(value >= limit)
    return {"passed": passed, "value": float(value), ("max" if below else "min"): limit}


def cmd_reproduce(args) -> int:
    horizon = args.horizon if args.horizon is not None else 30.0
    s = reference_scenario(horizon=horizon, step=args.step, corrected=not args.uncorrected_sign)
    alt = island_alternative(s, 1, {3: 1.0}).alternative
    h = min(resolve_step(s), resolve_step(alt))
    s = s.with_(step=h)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            fut_obs = pool.submit(_run_observed, s)
            fut_alt = pool.submit(_run_alternative, s, h)
            fut_adm = pool.submit(_run_admissibility, s)
            (tr, runs), tr2, adm = fut_obs.result(), fut_alt.result(), fut_adm.result()
    else:
        tr, runs = _run_observed(s)
        tr2 = _run_alternative(s, h)
        adm = _run_admissibility(s)
    est = {r.name: r for r in runs}
    dy = np.abs(tr.y - tr2.y).max(axis=0)

    checks = {
        "consensus": _check(max(np.abs(tr.x[-1] - REFERENCE_AVERAGE).max(),
                                np.abs(tr2.x[-1] - REFERENCE_AVERAGE).max()), LOOSE_TOL),
        "internal_observer": _check(max(abs(est["obs_internal_4"].final + 3.0),
                                        abs(est["obs_internal_5"].final + 1.0)), LOOSE_TOL),
        "external_observer": _check(abs(est["obs_external_2"].final - 2.0), LOOSE_TOL),
        "indistinguishable_outputs": _check(float(dy[[0, 1, 3, 4]].max()), STRICT_TOL),
        "hidden_output_differs": _check(float(dy[2]), 0.5, below=False),
        "island_mean": _check(abs(est["obs_island_1-2-3"].final - 3.5), LOOSE_TOL),
        "admissibility": _check(max(abs(adm.sum_beta), max(abs(a) for a in adm.alpha)), DEFAULT_TOL),
    }

    outdir = Path(args.out or "reproduction")
    outdir.mkdir(parents=True, exist_ok=True)
    files = {
        "states": outdir / "states.csv",
        "output_difference": outdir / "output_difference.csv",
        "internal_observers": outdir / "internal_observers.csv",
        "external_observer": outdir / "external_observer.csv",
    }
    write_csv(tr, files["states"], extra={f"x{i + 1}_alt": tr2.x[:, i] for i in range(5)})
    write_csv(tr2, files["output_difference"], extra={f"dy{i + 1}": tr2.y[:, i] - tr.y[:, i] for i in range(5)})
    write_csv(tr, files["internal_observers"],
              extra={name: est[name].estimate for name in ("obs_internal_4", "obs_internal_5", "obs_island_1-2-3")})
    write_csv(tr, files["external_observer"], extra={"obs_external_2": est["obs_external_2"].estimate})

    passed = all(c["passed"] for c in checks.values())
    emit({
        "command": "reproduce-paper",
        "corrected_sign": not args.uncorrected_sign,
        "horizon": horizon,
        "step": h,
        "passed": passed,
        "checks": checks,
        "beta": adm.beta,
        "sum_beta": adm.sum_beta,
        "alpha": adm.alpha,
        "estimates": {name: r.final for name, r in est.items()},
        "files": {k: str(v) for k, v in files.items()},
    })
    return EXIT_OK if passed else EXIT_THRESHOLD


# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output file or directory")
    common.add_argument("--horizon", type=float, help="override the integration horizon")
    common.add_argument("--step", type=float, help="override the integration step")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for independent runs")
    common.add_argument("--force", action="store_true", help="run observers the knowledge case would refuse")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="cpl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", parents=[common], help="simulate a scenario and write the trajectory CSV")
    sp.add_argument("file")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", parents=[common], help="check admissibility of the perturbation signals")
    sp.add_argument("file")
    sp.add_argument("--tol", type=float, default=DEFAULT_TOL)
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("attack", parents=[common], help="run an attacker observer")
    sp.add_argument("file")
    sp.add_argument("--kind", choices=["internal", "external", "island"], default="internal")
    sp.add_argument("--observer", type=int, help="observing agent (internal, island)")
    sp.add_argument("--target", type=int)
    sp.add_argument("--intercepted", type=_nodes, help="comma-separated agents whose outputs are intercepted")
    sp.add_argument("--island", type=_nodes, help="comma-separated island members")
    sp.add_argument("--eta0", type=float, default=0.0)
    sp.set_defaults(func=cmd_attack)

    sp = sub.add_parser("indist", parents=[common], help="build and verify an indistinguishable alternative")
    sp.add_argument("file")
    sp.add_argument("--construction", required=True,
                    choices=["island", "external_scalar", "alpha_shift", "beta_exchange"])
    sp.add_argument("--agent", type=int)
    sp.add_argument("--delta-x3", type=_assignment, action="append", default=[], metavar="NODE=VALUE")
    sp.add_argument("--visible", type=int)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--delta", type=float)
    sp.add_argument("--a", type=float)
    sp.add_argument("--i", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--beta-ik", type=float)
    sp.add_argument("--d", type=float)
    sp.set_defaults(func=cmd_indist)

    for name, func, text in (("islands", cmd_islands, "list the islands of an agent"),
                             ("classify", cmd_classify, "privacy classification of a graph")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.add_argument("file", nargs="?", help="scenario JSON or graph text file")
        sp.add_argument("--family", choices=["directed_ring", "cyclic_bipartite", "ring_lattice_4regular",
                                             "stacked_prism", "grid_lattice"])
        sp.add_argument("--family-args", type=int, nargs="*", default=[])
        if name == "islands":
            sp.add_argument("--agent", type=int, default=1)
        else:
            sp.add_argument("--target", type=int)
            sp.add_argument("--intercepted", type=_nodes)
        sp.set_defaults(func=func)

    sp = sub.add_parser("reproduce-paper", parents=[common], help="rerun the five-agent benchmark with checks")
    sp.add_argument("--uncorrected-sign", action="store_true", help="use the opposite sign on f")
    sp.set_defaults(func=cmd_reproduce)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except Refused as exc:
        emit({"command": args.command, "refused": True, "error": str(exc)})
        return EXIT_REFUSED
    except NumericalError as exc:
        emit({"command": args.command, "error": f"numeric failure: {exc}"})
        return EXIT_NUMERIC
    except (scenario_io.ScenarioFileError, GraphError, ScenarioError, SignalError, ObserverError,
            ConstructionError, StepSizeError) as exc:
        emit({"command": args.command, "error": str(exc)})
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
