"""Command-line entry point.

Global flags pick the trace source (offline directory or online socket)
and the engine parallelism; subcommands attach one analysis to the graph
pipeline. Exit codes: 0 clean, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from .adapter import resolve_address, write_offline, write_online
from .analytics import InvariantConfig
from .pipeline import AnalysisSpec, run_offline, run_online
from .simulator import load_config, simulate

DEFAULT_WS_PORT = 8455


@dataclass
class RunConfig:
    """Parsed invocation: transport, parallelism, and the chosen analysis."""

    command: str
    from_file: Optional[str] = None
    interface: str = "127.0.0.1"
    port: Optional[int] = None
    source_peers: int = 1
    snailtrail_workers: int = 1
    max_epochs_in_flight: int = 1
    out_path: Optional[str] = None
    invariants: InvariantConfig = InvariantConfig()
    k: int = 10
    ws_port: int = DEFAULT_WS_PORT
    sim_config: Optional[str] = None
    lbf: int = 1
    out_dir: Optional[str] = None
    connect: bool = False


def _add_invariant_flags(parser: argparse.ArgumentParser, with_progress: bool) -> None:
    parser.add_argument("--epoch-max", type=int, metavar="MS",
                        help="alert when an epoch spans more than MS milliseconds")
    parser.add_argument("--message-max", type=int, metavar="MS",
                        help="alert when a data/control message exceeds MS")
    parser.add_argument("--operator-max", type=int, metavar="MS",
                        help="alert when a single operator activity exceeds MS")
    if with_progress:
        parser.add_argument("--progress-max", type=int, metavar="MS",
                            help="alert when progress stalls for more than MS")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pagprof",
        description="Profile a distributed dataflow through its per-epoch "
                    "program activity graph.",
    )
    parser.add_argument("--from-file", metavar="PATH",
                        help="read offline trace streams from this directory")
    parser.add_argument("--interface", default="127.0.0.1", metavar="ADDR",
                        help="IP address to listen on for online traces")
    parser.add_argument("--port", type=int, metavar="N",
                        help="port to listen on for online traces")
    parser.add_argument("--source-peers", type=int, default=1, metavar="N",
                        help="number of event streams (workers x load balance factor)")
    parser.add_argument("--snailtrail-workers", type=int, default=1, metavar="N",
                        help="profiler worker count (default 1)")
    parser.add_argument("--epochs-in-flight", type=int, default=1, metavar="N",
                        help="epochs the replayer may keep open at once (default 1)")

    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p_metrics = sub.add_parser("metrics", help="export per-epoch aggregate metrics")
    p_metrics.add_argument("--out", required=True, metavar="PATH",
                           help="CSV file the aggregates are written to")

    p_inv = sub.add_parser("invariants", help="check temporal/progress invariants")
    _add_invariant_flags(p_inv, with_progress=True)

    p_algo = sub.add_parser("algo", help="run the backward k-hops graph pattern")
    p_algo.add_argument("--k", type=int, default=10, metavar="N",
                        help="traversal depth (default 10)")

    p_dash = sub.add_parser("dashboard", help="serve the live dashboard backend")
    _add_invariant_flags(p_dash, with_progress=False)
    p_dash.add_argument("--ws-port", type=int, default=DEFAULT_WS_PORT, metavar="N",
                        help=f"WebSocket port for the dashboard (default {DEFAULT_WS_PORT})")

    sub.add_parser("inspect", help="print per-epoch edge counts and timings")

    p_sim = sub.add_parser("simulate",
                           help="run the built-in source computation simulator")
    p_sim.add_argument("--config", required=True, metavar="PATH",
                       help="simulator config (JSON)")
    p_sim.add_argument("--lbf", type=int, default=1, metavar="N",
                       help="load balance factor: writers per source worker")
    sink = p_sim.add_mutually_exclusive_group(required=True)
    sink.add_argument("--out-dir", metavar="DIR",
                      help="write .st2 stream files into this directory")
    sink.add_argument("--connect", action="store_true",
                      help="push streams over TCP (SNAILTRAIL_ADDR or "
                           "--interface/--port)")
    return parser


def parse_args(argv: Optional[List[str]] = None) -> RunConfig:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.error("a command is required (metrics, invariants, algo, "
                     "dashboard, inspect, simulate)")
    if args.command != "simulate":
        online = args.port is not None
        if args.from_file and online:
            parser.error("--from-file and --interface/--port are mutually exclusive")
        if not args.from_file and not online:
            parser.error("pick a trace source: --from-file PATH or --port N")
    if args.source_peers < 1:
        parser.error("--source-peers must be >= 1")
    if args.snailtrail_workers < 1:
        parser.error("--snailtrail-workers must be >= 1")

    cfg = RunConfig(
        command=args.command,
        from_file=args.from_file,
        interface=args.interface,
        port=args.port,
        source_peers=args.source_peers,
        snailtrail_workers=args.snailtrail_workers,
        max_epochs_in_flight=args.epochs_in_flight,
    )
    if args.command == "metrics":
        cfg.out_path = args.out
    elif args.command == "invariants":
        cfg.invariants = InvariantConfig(
            epoch_max_ms=args.epoch_max,
            message_max_ms=args.message_max,
            operator_max_ms=args.operator_max,
            progress_max_ms=args.progress_max,
        )
    elif args.command == "algo":
        cfg.k = args.k
    elif args.command == "dashboard":
        cfg.invariants = InvariantConfig(
            epoch_max_ms=args.epoch_max,
            message_max_ms=args.message_max,
            operator_max_ms=args.operator_max,
        )
        cfg.ws_port = args.ws_port
    elif args.command == "simulate":
        cfg.sim_config = args.config
        cfg.lbf = args.lbf
        cfg.out_dir = args.out_dir
        cfg.connect = args.connect
        if cfg.lbf < 1:
            parser.error("--lbf must be >= 1")
    return cfg


def _results(cfg: RunConfig, spec: AnalysisSpec):
    if cfg.from_file is not None:
        return run_offline(
            cfg.from_file, cfg.source_peers, spec,
            profiler_workers=cfg.snailtrail_workers,
            max_epochs_in_flight=cfg.max_epochs_in_flight,
        )
    return run_online(
        cfg.interface, cfg.port, cfg.source_peers, spec,
        max_epochs_in_flight=cfg.max_epochs_in_flight,
    )


def _run_metrics(cfg: RunConfig) -> int:
    from .analytics import metrics_csv_lines

    spec = AnalysisSpec(with_metrics=True)
    with open(cfg.out_path, "w", newline="") as f:
        for result in _results(cfg, spec):
            f.write(metrics_csv_lines(result.metrics_rows))
            f.flush()
    return 0


def _run_invariants(cfg: RunConfig) -> int:
    spec = AnalysisSpec(invariants=cfg.invariants, with_metrics=False)
    for result in _results(cfg, spec):
        for violation in result.violations:
            print(violation.format_alert(), flush=True)
    return 0


def _run_algo(cfg: RunConfig) -> int:
    spec = AnalysisSpec(with_metrics=False, khop_k=cfg.k)
    for result in _results(cfg, spec):
        for w in result.khop_weights or []:
            print(
                f"epoch={result.epoch} hop={w.hop} "
                f"type={w.activity_type.wire_name} count={w.count} "
                f"weighted_duration_ns={w.total_duration_ns}",
                flush=True,
            )
    return 0


def _run_inspect(cfg: RunConfig) -> int:
    spec = AnalysisSpec(with_metrics=False)
    epochs = 0
    events = 0
    for r in _results(cfg, spec):
        epochs += 1
        events += r.event_count
        print(
            f"epoch={r.epoch} events={r.event_count} edges={r.edge_count} "
            f"local={r.local_edges} data={r.data_edges} "
            f"control={r.control_edges} elapsed_ms={r.elapsed_ns / 1e6:.2f}",
            flush=True,
        )
    print(f"epochs={epochs} total_events={events}")
    return 0


def _run_dashboard(cfg: RunConfig) -> int:
    from .dashboard import serve_dashboard

    spec = AnalysisSpec(
        invariants=cfg.invariants, with_metrics=True, khop_k=cfg.k,
        collect_edges=True,
    )
    serve_dashboard(_results(cfg, spec), cfg.interface, cfg.ws_port)
    return 0


def _run_simulate(cfg: RunConfig) -> int:
    sim = load_config(cfg.sim_config)
    streams = simulate(sim)
    if cfg.out_dir is not None:
        paths = write_offline(streams, cfg.lbf, cfg.out_dir)
        print(f"wrote {len(paths)} stream files to {Path(cfg.out_dir).resolve()}")
    else:
        host, port = resolve_address(
            cfg.interface if cfg.port is not None else None, cfg.port
        )
        write_online(streams, cfg.lbf, host, port)
        print(f"pushed {len(streams)} workers x lbf {cfg.lbf} to {host}:{port}")
    return 0


def run(cfg: RunConfig) -> int:
    handlers = {
        "metrics": _run_metrics,
        "invariants": _run_invariants,
        "algo": _run_algo,
        "inspect": _run_inspect,
        "dashboard": _run_dashboard,
        "simulate": _run_simulate,
    }
    try:
        return handlers[cfg.command](cfg)
    except KeyboardInterrupt:
        return 1
    except BrokenPipeError:
        # downstream consumer (head, less) closed the pipe: exit quietly
        devnull = os.open(os.devnull, os.O_WRONLY)
        os.dup2(devnull, sys.stdout.fileno())
        return 0
    except Exception as exc:
        print(f"pagprof: {exc}", file=sys.stderr)
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
