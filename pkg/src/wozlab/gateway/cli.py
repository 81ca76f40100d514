"""Operational command line: serve, agent, replay, export, scenarios."""
from __future__ import annotations

import argparse
import logging
import signal
import sys
import threading

from wozlab import __version__
from wozlab.eventlog import LogError, export_session, replay
from wozlab.gateway.config import ConfigError, add_server_flags, resolve_config
from wozlab.scene.scenario import MalformedScenario, ScenarioRepo


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wozlab",
        description="Two-seat Wizard-of-Oz dialogue platform with a shared, replicated scene.",
    )
    parser.add_argument("--version", action="version", version=f"wozlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the platform server")
    add_server_flags(serve)

    agent = sub.add_parser("agent", help="connect a programmatic agent to a server")
    agent.add_argument("--host", default="127.0.0.1")
    agent.add_argument("--port", type=int, required=True)
    agent.add_argument("--id", dest="agent_id", required=True)
    agent.add_argument("--brain", choices=("rule", "echo"), default="rule")
    agent.add_argument("--capacity", type=int, default=1)
    agent.add_argument(
        "--scenario", action="append", default=[],
        help="restrict to a scenario id (repeatable); default any",
    )

    replay_p = sub.add_parser("replay", help="re-run a sealed session log and verify its digest")
    replay_p.add_argument("--log-dir", required=True)
    replay_p.add_argument("--session", required=True)
    replay_p.add_argument("--scenario-dir")

    export_p = sub.add_parser("export", help="write the per-turn dataset file for a sealed session")
    export_p.add_argument("--log-dir", required=True)
    export_p.add_argument("--session", required=True)

    scenarios_p = sub.add_parser("scenarios", help="list available scenario ids")
    scenarios_p.add_argument("--scenario-dir")
    return parser


def _cmd_serve(args) -> int:
    from wozlab.gateway.server import WozServer

    try:
        config = resolve_config(args)
        server = WozServer(config)
    except (ConfigError, OSError, MalformedScenario) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    def _stop(signum, frame):
        server.shutdown()

    signal.signal(signal.SIGINT, _stop)
    signal.signal(signal.SIGTERM, _stop)
    print(f"listening on {config.host}:{server.port}", file=sys.stderr, flush=True)
    server.serve_forever()
    return 0


def _cmd_agent(args) -> int:
    from wozlab.gateway.client import run_agent

    stop = threading.Event()
    signal.signal(signal.SIGINT, lambda *_: stop.set())
    signal.signal(signal.SIGTERM, lambda *_: stop.set())
    try:
        run_agent(
            args.host,
            args.port,
            args.agent_id,
            brain_name=args.brain,
            capacity=args.capacity,
            scenario_ids=tuple(args.scenario),
            stop=stop,
        )
    except (ConnectionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def _cmd_replay(args) -> int:
    from wozlab.eventlog import read_manifest

    try:
        manifest = read_manifest(args.log_dir, args.session)
        repo = ScenarioRepo(args.scenario_dir)
        scenario = repo.get(manifest["scenario_id"])
        final = replay(scenario, args.log_dir, args.session)
    except (LogError, MalformedScenario, KeyError) as exc:
        print(f"replay failed: {exc}", file=sys.stderr)
        return 1
    print(f"{args.session}: replayed to version {manifest['final_version']}, digest {final}")
    return 0


def _cmd_export(args) -> int:
    try:
        path = export_session(args.log_dir, args.session)
    except LogError as exc:
        print(f"export failed: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


def _cmd_scenarios(args) -> int:
    from pathlib import Path

    if args.scenario_dir is not None and not Path(args.scenario_dir).is_dir():
        print(f"error: {args.scenario_dir!r} is not a directory", file=sys.stderr)
        return 1
    try:
        repo = ScenarioRepo(args.scenario_dir)
        for scenario_id in sorted(repo.ids()):
            print(scenario_id)
    except (OSError, MalformedScenario) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    args = _build_parser().parse_args(argv)
    handlers = {
        "serve": _cmd_serve,
        "agent": _cmd_agent,
        "replay": _cmd_replay,
        "export": _cmd_export,
        "scenarios": _cmd_scenarios,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
