"""Command-line front end.

Exit codes: 0 success, 2 unreadable or malformed input, 3 parameter
validation failure, 4 runtime failure (for example an exploded path).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from lockdown import __version__
from lockdown import control as ctl
from lockdown import io as lio
from lockdown import network as net
from lockdown import opinion as op
from lockdown.config import ConfigError, RunConfig, load_config
from lockdown.model import STATE_FIELDS, GroupState, ParamValidationError

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3, 4


class RuntimeFailure(RuntimeError):
    pass


def _common(parser: argparse.ArgumentParser, out_help: str = "output directory"):
    parser.add_argument("--config", help="TOML configuration file")
    parser.add_argument("--out", help=out_help)
    parser.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted config override, applied after the file (repeatable)")
    parser.add_argument("--threads", type=int, default=0, help="worker threads, 0 = auto; never changes results")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lockdown", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"lockdown {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an ensemble and write trajectories")
    _common(p)
    p.add_argument("--policy", choices=["constant", "piecewise", "closed_form_feedback"],
                   help="replace the configured policy kind")

    p = sub.add_parser("optimize", help="optimal lockdown intensity at one state")
    _common(p)
    p.add_argument("--state", required=True, help="JSON file (or inline JSON object) with GroupState fields")
    p.add_argument("--group", type=int, default=0)
    p.add_argument("--p-attach", type=float, help="attachment probability (default: the group's hub)")
    p.add_argument("--omega-partner", type=float, help="partner opinion (default: simulation.omega_partner)")
    p.add_argument("--compare", action="store_true", help="also run the numerical minimiser")

    p = sub.add_parser("network", help="generate a preferential-attachment graph")
    _common(p, out_help="edge-list CSV path")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--degree-hist", help="degree histogram CSV path")

    p = sub.add_parser("tv-check", help="total variation between two discrete measures")
    _common(p)
    p.add_argument("mu", help="CSV with atom,weight rows")
    p.add_argument("nu", help="CSV with atom,weight rows")

    p = sub.add_parser("cluster", help="random-cluster probabilities on a small graph")
    _common(p)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--graph", help="named corpus graph, e.g. triangle")
    src.add_argument("--edges", help="edge-list CSV (u,v per line)")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--fkg", action="store_true", help="also sweep the FKG inequality (<= 4 edges)")

    p = sub.add_parser("validate", help="run the acceptance criteria")
    _common(p)
    p.add_argument("--only", action="append", default=[], help="criterion key(s), comma separated")
    return parser


# --- helpers -------------------------------------------------------------------

def _attach_probs(rc: RunConfig) -> list[float]:
    if rc.p_attach is not None:
        return list(rc.p_attach)
    g = net.ba_generate(rc.network.n, rc.network.m, rc.network.seed)
    return net.hub_attach_probabilities(g, rc.sim.n_groups)


def _out_dir(args, default: str | None) -> Path | None:
    target = args.out or default
    if target is None:
        return None
    path = Path(target)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_edges(path) -> list[tuple[int, int]]:
    edges = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                edges.append((int(row[0]), int(row[1])))
            except (ValueError, IndexError):
                if edges:
                    raise ConfigError(f"bad edge row {row!r} in {path}")
    return edges


def _read_measure(path) -> op.DiscreteMeasure:
    atoms, weights = [], []
    try:
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row:
                    continue
                try:
                    w = float(row[1])
                except (ValueError, IndexError):
                    if atoms:
                        raise ConfigError(f"bad measure row {row!r} in {path}")
                    continue  # header line
                atoms.append(row[0].strip())
                weights.append(w)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        return op.DiscreteMeasure(tuple(atoms), tuple(weights))
    except ValueError as exc:
        raise ParamValidationError([(f"measure in {path}: {exc}", None)]) from exc


def _emit(obj, out_dir: Path | None, name: str, started: float, command: str, rc: RunConfig | None = None,
          extra_outputs=()) -> None:
    print(lio.dumps(obj))
    if out_dir is not None:
        lio.write_json(out_dir / name, obj)
        lio.write_manifest(out_dir, subcommand=command, config_hash=rc.config_hash if rc else None,
                           master_seed=rc.sim.master_seed if rc else None,
                           duration=time.perf_counter() - started, outputs=[name, *extra_outputs])


# --- subcommands ---------------------------------------------------------------

def cmd_simulate(args) -> int:
    from lockdown.sde import iter_ensemble, out_of_bounds

    started = time.perf_counter()
    overrides = list(args.override)
    if args.policy:
        overrides.append(f"policy.kind={json.dumps(args.policy)}")
    rc = load_config(args.config, overrides)
    out = _out_dir(args, "out")
    p_attach = _attach_probs(rc)
    costs, finals, exploded = [], [], []
    violations = 0

    def stream():
        nonlocal violations
        for tr in iter_ensemble(rc.sim, rc.groups, rc.policy, rc.initial, p_attach, threads=args.threads,
                                control_options=rc.control):
            costs.append(ctl.social_cost([tr], rc.groups).mean)
            finals.append(tr.states[-1])
            violations += int(out_of_bounds(tr.states).sum())
            if tr.exploded_at is not None:
                exploded.append({"path": tr.path, "step": tr.exploded_at})
            yield tr

    n_rows = lio.write_trajectory_csv(out / "trajectories.csv", stream())
    finals = np.array(finals)
    n = len(costs)
    se = lambda a: (a.std(axis=0, ddof=1) / math.sqrt(n)) if n > 1 else np.zeros_like(a[0])  # noqa: E731
    costs_arr = np.array(costs)
    summary = {
        "social_cost": {"mean": float(costs_arr.mean()), "stderr": float(se(costs_arr))},
        "final_means": {str(k): dict(zip(STATE_FIELDS, finals[:, k].mean(axis=0).tolist()))
                        for k in range(rc.sim.n_groups)},
        "final_stderr": {str(k): dict(zip(STATE_FIELDS, se(finals[:, k]).tolist()))
                         for k in range(rc.sim.n_groups)},
        "positivity_violations": violations,
        "exploded_paths": exploded,
        "rows": n_rows,
        "metadata": {"master_seed": rc.sim.master_seed, "dt": rc.sim.dt, "t_horizon": rc.sim.t_horizon,
                     "n_paths": rc.sim.n_paths, "n_groups": rc.sim.n_groups, "p_attach": p_attach,
                     "policy": getattr(rc.policy, "kind", None), "config_hash": rc.config_hash,
                     "version": f"lockdown {__version__}"},
    }
    lio.write_json(out / "summary.json", summary)
    lio.write_manifest(out, subcommand="simulate", config_hash=rc.config_hash, master_seed=rc.sim.master_seed,
                       duration=time.perf_counter() - started, outputs=["trajectories.csv", "summary.json"])
    if exploded:
        raise RuntimeFailure(f"{len(exploded)} path(s) exceeded the overflow guard; see summary.json")
    return EXIT_OK


def _load_state(text: str) -> GroupState:
    try:
        data = json.loads(text) if text.lstrip().startswith("{") else json.loads(Path(text).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read state: {exc}") from exc
    try:
        state = GroupState(**data)
    except TypeError as exc:
        raise ConfigError(f"bad state fields: {exc}") from exc
    try:
        return state.check()
    except ValueError as exc:
        raise ParamValidationError([(str(exc), data)]) from exc


def cmd_optimize(args) -> int:
    started = time.perf_counter()
    rc = load_config(args.config, args.override)
    if not 0 <= args.group < rc.sim.n_groups:
        raise ConfigError(f"group {args.group} not in config")
    state = _load_state(args.state)
    p_attach = args.p_attach if args.p_attach is not None else _attach_probs(rc)[args.group]
    partner = args.omega_partner if args.omega_partner is not None else rc.sim.omega_partner
    ctx = ctl.ControlContext(state, p_attach, partner, rc.groups[args.group])
    if not ctx.log_domain_ok():
        raise ParamValidationError([("z, S, I, R, W > 0 for the objective", state)])
    try:
        closed = ctl.e_star_closed_form(ctx, rc.control)
    except ctl.FixedPointError as exc:
        raise RuntimeFailure(str(exc)) from exc
    result = {"e_closed": closed.e, "b_tilde": closed.b_tilde, "c_tilde": closed.c_tilde,
              "iterations": closed.iterations, "residual": closed.residual, "clamped": closed.clamped,
              "flags": closed.flags, "p_attach": p_attach}
    if args.compare:
        numeric = ctl.e_star_numeric(ctx, rc.control)
        result["e_numeric"] = numeric.e
        result["local_minima"] = numeric.local_minima
    _emit(result, _out_dir(args, None), "optimize.json", started, "optimize", rc)
    return EXIT_OK


def cmd_network(args) -> int:
    started = time.perf_counter()
    try:
        graph = net.ba_generate(args.n, args.m, args.seed)
    except ValueError as exc:
        raise ParamValidationError([(str(exc), (args.n, args.m))]) from exc
    outputs = []
    if args.out:
        edge_path = Path(args.out)
        edge_path.parent.mkdir(parents=True, exist_ok=True)
        with lio.atomic_open(edge_path) as fh:
            fh.write("u,v\n")
            fh.writelines(f"{u},{v}\n" for u, v in graph.edges)
        outputs.append(edge_path)
    if args.degree_hist:
        hist_path = Path(args.degree_hist)
        hist_path.parent.mkdir(parents=True, exist_ok=True)
        with lio.atomic_open(hist_path) as fh:
            fh.write("degree,count\n")
            fh.writelines(f"{d},{c}\n" for d, c in net.degree_histogram(graph))
        outputs.append(hist_path)
    deg = graph.degrees()
    print(lio.dumps({"n_vertices": graph.n_vertices, "n_edges": graph.n_edges, "connected": graph.is_connected(),
                     "max_degree": int(deg.max()), "mean_degree": float(deg.mean())}))
    by_dir: dict[Path, list[str]] = {}
    for p in outputs:
        by_dir.setdefault(p.parent, []).append(p.name)
    for d, names in by_dir.items():
        lio.write_manifest(d, subcommand="network", config_hash=None, master_seed=args.seed,
                           duration=time.perf_counter() - started, outputs=names)
    return EXIT_OK


def cmd_tv_check(args) -> int:
    started = time.perf_counter()
    forms = op.tv_forms(_read_measure(args.mu), _read_measure(args.nu))
    result = {**forms._asdict(), "max_discrepancy": forms.max_discrepancy}
    _emit(result, _out_dir(args, None), "tv.json", started, "tv-check")
    return EXIT_OK


def cmd_cluster(args) -> int:
    from lockdown.acceptance import small_graph_corpus

    started = time.perf_counter()
    if args.graph:
        corpus = small_graph_corpus(net.ENUMERATION_GUARD)
        if args.graph not in corpus:
            raise ConfigError(f"unknown graph {args.graph!r}; choose from {', '.join(corpus)}")
        graph = corpus[args.graph]
    else:
        try:
            edges = _read_edges(args.edges)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.edges}: {exc}") from exc
        n = 1 + max((max(e) for e in edges), default=-1)
        graph = net.Graph(n, tuple(edges))
    try:
        params = net.ClusterParams(args.rho, args.q)
        probs = net.cluster_distribution(graph, params)
    except ValueError as exc:
        raise ParamValidationError([(str(exc), (args.rho, args.q))]) from exc
    configs = [net.EdgeConfig.from_index(i, graph.n_edges) for i in range(len(probs))]
    result = {
        "n_vertices": graph.n_vertices, "edges": [list(e) for e in graph.edges],
        "partition_function": net.partition_function(graph, params),
        "total_mass": math.fsum(probs),
        "configurations": [{"open": "".join(map(str, c.bits)), "open_components": net.count_open_components(graph, c),
                            "probability": float(p)} for c, p in zip(configs, probs)],
    }
    if args.fkg:
        if graph.n_edges > 4:
            raise ParamValidationError([("FKG sweep needs <= 4 edges", graph.n_edges)])
        sweep = net.fkg_sweep([graph], (args.q,), (args.rho,))
        result["fkg"] = {"pairs": sweep.n_checks, "failures": sweep.n_failures, "worst_margin": sweep.worst_margin}
    _emit(result, _out_dir(args, None), "cluster.json", started, "cluster")
    return EXIT_OK


def cmd_validate(args) -> int:
    from lockdown.acceptance import run_criteria

    started = time.perf_counter()
    rc = load_config(args.config, args.override)  # fails fast on parse or validation errors
    only = [k.strip() for item in args.only for k in item.split(",") if k.strip()]
    try:
        results = run_criteria(only or None, config_path=args.config, overrides=args.override)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    for r in results:
        print(r.line(), file=sys.stderr)
    report = {"all_passed": all(r.passed for r in results), "criteria": [r.to_dict() for r in results]}
    _emit(report, _out_dir(args, None), "validate.json", started, "validate", rc)
    return EXIT_OK if report["all_passed"] else 1


COMMANDS = {"simulate": cmd_simulate, "optimize": cmd_optimize, "network": cmd_network,
            "tv-check": cmd_tv_check, "cluster": cmd_cluster, "validate": cmd_validate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ParamValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (RuntimeFailure, FloatingPointError, ctl.FixedPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
