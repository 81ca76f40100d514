"""Server configuration: defaults, file overlay, flag precedence, validation."""
import argparse
import json

import pytest

from wozlab.gateway.config import (
    ConfigError,
    ServerConfig,
    add_server_flags,
    load_config_file,
    resolve_config,
)


def parse(argv, config_file=None):
    parser = argparse.ArgumentParser()
    add_server_flags(parser)
    if config_file is not None:
        argv = ["--config", str(config_file)] + argv
    return parser.parse_args(argv)


class TestDefaults:
    def test_defaults_validate(self):
        config = resolve_config(parse([]))
        assert config.host == "127.0.0.1"
        assert config.port == 8765
        assert config.mode_default == "collection"
        assert config.render_topology == "local"
        assert config.turn_timeout_s == 30
        assert config.disconnect_timeout_s == 60

    def test_topology_property_expands_flag_vocabulary(self):
        assert ServerConfig().topology == "local_render"
        assert ServerConfig(render_topology="remote").topology == "remote_render"


class TestConfigFile:
    def test_file_values_override_defaults(self, tmp_path):
        path = tmp_path / "server.json"
        path.write_text(json.dumps({"port": 9000, "mode_default": "evaluation"}))
        config = resolve_config(parse([], config_file=path))
        assert config.port == 9000
        assert config.mode_default == "evaluation"
        assert config.host == "127.0.0.1"  # untouched default

    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "server.json"
        path.write_text(json.dumps({"port": 9000, "turn_timeout_s": 5}))
        config = resolve_config(parse(["--port", "9100"], config_file=path))
        assert config.port == 9100
        assert config.turn_timeout_s == 5  # file value survives where no flag given

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "server.json"
        path.write_text(json.dumps({"prot": 9000}))
        with pytest.raises(ConfigError, match="unknown config keys"):
            load_config_file(path)

    def test_non_object_rejected(self, tmp_path):
        path = tmp_path / "server.json"
        path.write_text(json.dumps([1, 2, 3]))
        with pytest.raises(ConfigError, match="JSON object"):
            load_config_file(path)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "server.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError, match="valid JSON"):
            load_config_file(path)

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config_file(tmp_path / "absent.json")


class TestValidation:
    def test_bad_mode(self):
        with pytest.raises(ConfigError, match="mode_default"):
            ServerConfig(mode_default="practice").validate()

    def test_bad_topology(self):
        with pytest.raises(ConfigError, match="render_topology"):
            ServerConfig(render_topology="local_render").validate()

    def test_nonpositive_timeout(self):
        with pytest.raises(ConfigError, match="turn_timeout_s"):
            ServerConfig(turn_timeout_s=0).validate()

    def test_port_out_of_range(self):
        with pytest.raises(ConfigError, match="port"):
            ServerConfig(port=70000).validate()

    def test_missing_scenario_dir(self, tmp_path):
        with pytest.raises(ConfigError, match="scenario_dir"):
            ServerConfig(scenario_dir=str(tmp_path / "absent")).validate()

    def test_missing_web_root(self, tmp_path):
        with pytest.raises(ConfigError, match="web_root"):
            ServerConfig(web_root=str(tmp_path / "absent")).validate()

    def test_existing_dirs_accepted(self, tmp_path):
        config = ServerConfig(scenario_dir=str(tmp_path), web_root=str(tmp_path))
        assert config.validate() is config
