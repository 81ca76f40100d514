"""Server configuration: JSON file plus command-line flags; flags win."""
from __future__ import annotations

import argparse
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

TOPOLOGY_FLAGS = {"local": "local_render", "remote": "remote_render"}


class ConfigError(Exception):
    pass


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8765
    log_dir: str = "logs"
    scenario_dir: str | None = None  # None: bundled scenarios
    web_root: str | None = None  # None: built-in placeholder page
    mode_default: str = "collection"
    render_topology: str = "local"  # flag vocabulary; expands to *_render
    turn_timeout_s: int = 30
    disconnect_timeout_s: int = 60
    retention: int = 1024
    full_state_gap: int = 64
    tick_interval_ms: int = 250

    @property
    def topology(self) -> str:
        return TOPOLOGY_FLAGS[self.render_topology]

    def validate(self) -> "ServerConfig":
        if self.mode_default not in ("collection", "evaluation"):
            raise ConfigError(f"mode_default must be collection or evaluation, got {self.mode_default!r}")
        if self.render_topology not in TOPOLOGY_FLAGS:
            raise ConfigError(f"render_topology must be one of {sorted(TOPOLOGY_FLAGS)}")
        for name in ("turn_timeout_s", "disconnect_timeout_s", "retention", "full_state_gap", "tick_interval_ms"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not (0 <= self.port <= 65535):
            raise ConfigError(f"port {self.port} out of range")
        if self.scenario_dir is not None and not Path(self.scenario_dir).is_dir():
            raise ConfigError(f"scenario_dir {self.scenario_dir!r} is not a directory")
        if self.web_root is not None and not Path(self.web_root).is_dir():
            raise ConfigError(f"web_root {self.web_root!r} is not a directory")
        return self


_FIELDS = {f.name for f in dataclasses.fields(ServerConfig)}


def load_config_file(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text("utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    unknown = set(doc) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return doc


def add_server_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="JSON config file; flags override it")
    parser.add_argument("--host")
    parser.add_argument("--port", type=int)
    parser.add_argument("--log-dir")
    parser.add_argument("--scenario-dir")
    parser.add_argument("--web-root")
    parser.add_argument("--mode-default", choices=("collection", "evaluation"))
    parser.add_argument("--render-topology", choices=tuple(TOPOLOGY_FLAGS))
    parser.add_argument("--turn-timeout-s", type=int)
    parser.add_argument("--disconnect-timeout-s", type=int)


def resolve_config(args: argparse.Namespace) -> ServerConfig:
    """Defaults, overlaid by the config file, overlaid by explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for name in _FIELDS:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            values[name] = flag_value
    try:
        config = ServerConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return config.validate()
