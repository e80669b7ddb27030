"""Command-line entry point: ``ignn <command> ...``.

Exit codes: 0 ok, 2 input/parse error, 3 invariant violation, 4 error-bound
violation, 5 oracle infeasible.  Every flag may also be set through an
``IGNN_<FLAG>`` environment variable (``--out-state`` -> ``IGNN_OUT_STATE``).
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import adaptive, formats, oracle, synth
from .graph import EventLog, FormatError, GraphError, load_edge_list, load_events, write_edge_list, write_events
from .instant_update import ReplayError, UpdateReport, apply_event, batch_update
from .propagation import (
    PropagationConfig,
    PropagationError,
    basic_propagate,
    new_state,
    push_backend,
)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVARIANT = 3
EXIT_BOUND = 4
EXIT_INFEASIBLE = 5

log = logging.getLogger("ignn")


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_PARSE):
        super().__init__(message)
        self.code = code


def _env(flag: str, default=None):
    return os.environ.get("IGNN_" + flag.upper().replace("-", "_"), default)


def _opt(p: argparse.ArgumentParser, flag: str, required: bool = False, **kw) -> None:
    default = _env(flag, kw.pop("default", None))
    p.add_argument("--" + flag, default=default, required=required and default is None, **kw)


def _emit(manifest: formats.Manifest, out_dir: str | Path | None) -> None:
    text = manifest.text()
    sys.stdout.write(text)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        manifest.write(Path(out_dir) / "manifest.txt")


def _config(args) -> PropagationConfig:
    try:
        return PropagationConfig(float(args.alpha), float(args.beta), float(args.epsilon))
    except ValueError as exc:
        raise CliError(f"invalid configuration: {exc}") from None


def _load_graph(path: str):
    with open(path, "rb") as fh:
        return load_edge_list(fh, path)


# ---- commands -------------------------------------------------------------


def cmd_init(args) -> int:
    cfg = _config(args)
    loaded = _load_graph(args.graph)
    g = loaded.graph
    X = formats.read_features(args.features)
    if X.shape[0] != g.node_count:
        raise CliError(f"{args.features}: {X.shape[0]} rows for {g.node_count} nodes")
    state = new_state(g, X)
    stats = basic_propagate(g, cfg, state, threads=int(args.threads))
    formats.save_state(args.out_state, g, cfg, state)

    m = formats.Manifest()
    m.add("command", "init")
    m.add("alpha", cfg.alpha)
    m.add("beta", cfg.beta)
    m.add("epsilon", cfg.epsilon)
    m.add("threads", int(args.threads))
    m.add("push_backend", push_backend())
    m.add("nodes", g.node_count)
    m.add("edges", g.edge_count)
    m.add("dims", state.dims)
    m.add("duplicate_edges", loaded.duplicates)
    m.add("graph.sha256", formats.file_digest(args.graph))
    m.add("features.sha256", formats.file_digest(args.features))
    m.add_stats("init", stats)
    m.add("estimate.sha256", formats.array_digest(state.estimate))
    _emit(m, args.out_state)
    return EXIT_OK


def cmd_apply(args) -> int:
    stored = formats.load_state(args.state)
    g, cfg, state = stored.graph, stored.cfg, stored.state
    with open(args.events, "rb") as fh:
        events = load_events(fh, args.events)
    if events.node_count != g.node_count:
        raise CliError(f"{args.events}: header n={events.node_count}, state has {g.node_count} nodes")
    threads = int(args.threads)
    batch = int(args.batch) if args.batch is not None else 0
    if args.batch is not None and batch < 1:
        raise CliError("--batch must be >= 1")

    drift: list[adaptive.DriftSample] = []
    z0 = state.estimate.copy()
    z_prev = z0.copy()
    report = UpdateReport()
    steps = 0
    pos = 0
    seq = events.events
    try:
        while pos < len(seq):
            chunk = seq[pos : pos + batch] if batch else seq[pos : pos + 1]
            try:
                if batch:
                    step = batch_update(g, state, cfg, chunk, threads=threads)
                else:
                    step = apply_event(g, state, cfg, chunk[0], threads=threads)
            except ReplayError as exc:
                raise CliError(f"{args.events}: event #{pos + exc.index} ({exc.event}) invalid: {exc}") from None
            except GraphError as exc:
                raise CliError(f"{args.events}: event #{pos} ({chunk[0]}) invalid: {exc}") from None
            report.merge(step)
            pos += len(chunk)
            steps += 1
            if args.drift_log:
                dz = adaptive.delta_z(z_prev, state.estimate)
                drift.append(adaptive.DriftSample(pos, dz, adaptive.delta_z(z0, state.estimate)))
                z_prev = state.estimate.copy()
    except PropagationError as exc:
        raise CliError(str(exc), EXIT_INVARIANT) from None

    formats.save_state(args.out_state, g, cfg, state)
    if args.drift_log:
        with open(args.drift_log, "w") as fh:
            formats.write_drift_log(drift, fh)

    m = formats.Manifest()
    m.add("command", "apply")
    m.add("alpha", cfg.alpha)
    m.add("beta", cfg.beta)
    m.add("epsilon", cfg.epsilon)
    m.add("threads", threads)
    m.add("push_backend", push_backend())
    m.add("batch", batch)
    m.add("events", report.events_applied)
    m.add("update_steps", steps)
    m.add("residual_increments", report.residual_increments)
    m.add("events.sha256", formats.file_digest(args.events))
    m.add_stats("update", report.push_stats)
    mean = report.push_stats.pushes / report.events_applied if report.events_applied else 0.0
    m.add("update.pushes_per_event", mean)
    m.add("estimate.sha256", formats.array_digest(state.estimate))
    _emit(m, args.out_state)
    return EXIT_OK


def cmd_verify(args) -> int:
    stored = formats.load_state(args.state)
    cfg, state = stored.cfg, stored.state
    g = _load_graph(args.graph).graph if args.graph else stored.graph
    if args.features:
        X = formats.read_features(args.features)
        if X.shape != state.signal.shape:
            raise CliError(f"{args.features}: shape {X.shape} != state {state.signal.shape}")
        state.signal = X
    if g.node_count != state.node_count:
        raise CliError(f"graph has {g.node_count} nodes, state has {state.node_count}")
    if g.node_count > oracle.MAX_ORACLE_NODES:
        raise CliError(
            f"oracle infeasible: {g.node_count} nodes > {oracle.MAX_ORACLE_NODES}", EXIT_INFEASIBLE
        )
    m = formats.Manifest()
    m.add("command", "verify")
    m.add("nodes", g.node_count)
    m.add("dims", state.dims)
    if not (np.isfinite(state.estimate).all() and np.isfinite(state.residual).all()):
        m.add("status", "non-finite state")
        _emit(m, None)
        return EXIT_INVARIANT
    gaps = oracle.invariant_residuals(g, cfg, state)
    tol = oracle.invariant_tolerance(state)
    node, col = np.unravel_index(int(np.argmax(np.abs(gaps))), gaps.shape)
    worst = float(abs(gaps[node, col]))
    m.add("invariant.max", worst)
    m.add("invariant.tolerance", tol)
    m.add("invariant.worst_node", int(node))
    m.add("invariant.worst_column", int(col))
    bound = oracle.check_error_bound(g, cfg, state)
    m.add("bound.max_violation", bound.max_violation)
    m.add("bound.worst_node", bound.worst_node)
    m.add("bound.worst_column", bound.worst_column)
    if worst > tol:
        m.add("status", "invariant violated")
        code = EXIT_INVARIANT
    elif bound.max_violation > 1e-12:
        m.add("status", "error bound violated")
        code = EXIT_BOUND
    else:
        m.add("status", "ok")
        code = EXIT_OK
    _emit(m, None)
    return code


def cmd_gen_sbm(args) -> int:
    try:
        cfg = synth.SbmConfig(
            nodes=int(args.nodes),
            blocks=int(args.blocks),
            intra_degree=float(args.intra),
            inter_degree=float(args.inter),
            migrants_per_step=int(args.migrants),
            seed=int(args.seed),
        )
        g, labels, rng = synth.sbm_init(cfg)
    except synth.SbmError as exc:
        raise CliError(str(exc)) from None
    initial_edges = g.edge_count
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "graph.txt", "w") as fh:
        write_edge_list(g, fh)
    with open(out / "labels_000.txt", "w") as fh:
        formats.write_labels(labels, fh)
    features = synth.sparse_features(cfg.nodes, int(args.dims), rng)
    formats.write_matrix(out / "features.bin", features)
    total = 0
    for step in range(1, int(args.snapshots) + 1):
        events = synth.sbm_migrate(g, labels, cfg, rng)
        for ev in events:
            g.apply(ev)
        total += len(events)
        with open(out / f"events_{step:03d}.txt", "w") as fh:
            write_events(EventLog(cfg.nodes, events), fh)
        with open(out / f"labels_{step:03d}.txt", "w") as fh:
            formats.write_labels(labels, fh)
    m = formats.Manifest()
    m.add("command", "gen-sbm")
    m.add("seed", cfg.seed)
    m.add("nodes", cfg.nodes)
    m.add("blocks", cfg.blocks)
    m.add("snapshots", int(args.snapshots))
    m.add("initial_edges", initial_edges)
    m.add("total_events", total)
    _emit(m, out)
    return EXIT_OK


def cmd_schedule(args) -> int:
    with open(args.drift_log) as fh:
        samples = formats.load_drift_log(fh, args.drift_log)
    total = int(args.total_events) if args.total_events is not None else (samples[-1].event_index if samples else 0)
    try:
        plan = adaptive.plan_adaptive(
            samples,
            theta=float(args.theta),
            budget=int(args.budget),
            total_events=total,
            mode=args.mode,
            observed_triggers=int(args.observed),
        )
    except adaptive.ScheduleError as exc:
        raise CliError(str(exc)) from None
    if plan.fit is None and len(plan.observed) < min(int(args.observed), int(args.budget)):
        raise CliError(
            f"insufficient samples: only {len(plan.observed)} trigger(s) observed in {args.drift_log}"
        )
    with open(args.out, "w") as fh:
        formats.write_schedule(plan.schedule, fh)
    m = formats.Manifest()
    m.add("command", "schedule")
    m.add("theta", float(args.theta))
    m.add("mode", args.mode)
    m.add("budget", int(args.budget))
    m.add("total_events", total)
    m.add("observed", " ".join(map(str, plan.observed)))
    m.add("predicted", " ".join(map(str, plan.predicted)))
    if plan.fit is not None:
        m.add("fit.a", plan.fit.a)
        m.add("fit.b", plan.fit.b)
        m.add("fit.rms", plan.fit.rms)
    m.add("clamped", int(plan.clamped))
    _emit(m, None)
    return EXIT_OK


def cmd_snapshot(args) -> int:
    stored = formats.load_state(args.state)
    formats.write_matrix(args.out_matrix, stored.state.estimate)
    m = formats.Manifest()
    m.add("command", "snapshot")
    m.add("rows", stored.state.node_count)
    m.add("cols", stored.state.dims)
    m.add("estimate.sha256", formats.file_digest(args.out_matrix))
    _emit(m, None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ignn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="propagate features over a static graph")
    _opt(p, "graph", required=True)
    _opt(p, "features", required=True)
    _opt(p, "alpha", default="0.2")
    _opt(p, "beta", default="0.5")
    _opt(p, "epsilon", default="1e-6")
    _opt(p, "threads", default="1")
    _opt(p, "out-state", required=True)
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("apply", help="apply an event file to a stored state")
    _opt(p, "state", required=True)
    _opt(p, "events", required=True)
    _opt(p, "batch")
    _opt(p, "threads", default="1")
    _opt(p, "drift-log", help="write per-step embedding drift to this file")
    _opt(p, "out-state", required=True)
    p.set_defaults(func=cmd_apply)

    p = sub.add_parser("verify", help="check a stored state against the dense oracle")
    _opt(p, "state", required=True)
    _opt(p, "graph")
    _opt(p, "features")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-sbm", help="generate a dynamic SBM workload")
    _opt(p, "nodes", default="2000")
    _opt(p, "blocks", default="5")
    _opt(p, "intra", default="20")
    _opt(p, "inter", default="1")
    _opt(p, "snapshots", default="10")
    _opt(p, "migrants", default="10")
    _opt(p, "dims", default="8")
    _opt(p, "seed", default="0")
    _opt(p, "out-dir", required=True)
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("schedule", help="plan retraining times from a drift log")
    _opt(p, "drift-log", required=True)
    _opt(p, "theta", required=True)
    _opt(p, "mode", default="abs", choices=["abs", "rel"])
    _opt(p, "budget", required=True)
    _opt(p, "observed", default=str(adaptive.DEFAULT_OBSERVED_TRIGGERS))
    _opt(p, "total-events")
    _opt(p, "out", required=True)
    p.set_defaults(func=cmd_schedule)

    p = sub.add_parser("snapshot", help="export the estimate matrix")
    _opt(p, "state", required=True)
    _opt(p, "out-matrix", required=True)
    p.set_defaults(func=cmd_snapshot)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"ignn: error: {exc}", file=sys.stderr)
        return exc.code
    except (FormatError, GraphError, ValueError) as exc:
        print(f"ignn: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except oracle.OracleInfeasible as exc:
        print(f"ignn: error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"ignn: error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
