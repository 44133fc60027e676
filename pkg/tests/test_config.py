import json
from pathlib import Path

import pytest

from infogate.config import ConfigManager, RunConfig, canonical_json, config_hash, from_dict, parse_override
from infogate.errors import ValidationError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def manager():
    return ConfigManager()


class TestLoading:
    def test_defaults_are_valid(self, manager, clean_env):
        config = manager.load_config()
        assert config == RunConfig()
        assert manager.validate_config(config)

    @pytest.mark.parametrize("name", ["default.json", "tiny.json"])
    def test_shipped_configs_validate(self, name, clean_env):
        manager = ConfigManager(str(CONFIG_DIR / name))
        assert manager.validate_config(manager.load_config())

    def test_file_values_are_merged(self, tiny_config_file, clean_env):
        config = ConfigManager(str(tiny_config_file)).load_config()
        assert config.env.height == 16
        assert config.nets.obs_shape == (3, 16, 16)
        assert config.sweep.lambdas == (0.01, 1.0)
        assert config.gate.mode == "cooperative"

    def test_missing_file(self, clean_env):
        with pytest.raises(FileNotFoundError, match="not found"):
            ConfigManager("absent.json").load_config()

    def test_unreadable_file(self, clean_env):
        Path("broken.json").write_text("{not json", encoding="utf-8")
        with pytest.raises(ValidationError, match="unreadable"):
            ConfigManager("broken.json").load_config()

    def test_unknown_field(self):
        with pytest.raises(ValidationError, match="gate.temperature"):
            from_dict({"gate": {"temperature": 2.0}})

    @pytest.mark.parametrize("data", [{"seed": "seven"}, {"seed": 1.5}, {"train": {"progress": 1}},
                                      {"gate": {"warmup": True}}, {"env": {"level": 3}}, {"gate": 5}])
    def test_wrong_types(self, data):
        with pytest.raises(ValidationError):
            from_dict(data)

    def test_integers_accepted_for_floats(self):
        assert from_dict({"train": {"lr": 1}}).train.lr == 1.0


class TestEnvironment:
    def test_variables_override_file(self, tiny_config_file, clean_env, monkeypatch):
        monkeypatch.setenv("INFOGATE_SEED", "42")
        monkeypatch.setenv("INFOGATE_OUTDIR", "elsewhere")
        monkeypatch.setenv("INFOGATE_LOG_LEVEL", "debug")
        config = ConfigManager(str(tiny_config_file)).load_config()
        assert (config.seed, config.outdir, config.log_level) == (42, "elsewhere", "DEBUG")

    def test_bad_seed_variable(self, clean_env, monkeypatch):
        monkeypatch.setenv("INFOGATE_SEED", "many")
        with pytest.raises(ValidationError):
            ConfigManager().load_config()


class TestOverrides:
    def test_parse_values_as_json(self):
        assert parse_override("gate.warmup=10") == ("gate.warmup", 10)
        assert parse_override("env.level=hard") == ("env.level", "hard")
        assert parse_override("sweep.lambdas=[0.1, 1]") == ("sweep.lambdas", [0.1, 1])

    def test_parse_needs_equals(self):
        with pytest.raises(ValidationError):
            parse_override("gate.warmup")

    def test_dotted_overrides_nest(self, manager):
        config = manager.apply_overrides(RunConfig(), {"gate.warmup": 7, "gate.schedule.start": 0.5,
                                                       "train.objective": "bc"})
        assert config.gate.warmup == 7
        assert config.gate.schedule.start == 0.5
        assert config.train.objective == "bc"

    def test_conflicting_overrides(self, manager):
        with pytest.raises(ValidationError):
            manager.apply_overrides(RunConfig(), {"gate": 1, "gate.warmup": 2})


class TestValidation:
    @pytest.mark.parametrize("overrides,message", [
        ({"nets": {"obs_shape": [3, 16, 16]}}, "obs_shape"),
        ({"data": {"horizon_cap": 40}}, "horizon_cap"),
        ({"data": {"policy": "oracle"}}, "policy"),
        ({"data": {"workers": 0}}, "workers"),
        ({"log_level": "TRACE"}, "log_level"),
        ({"outdir": ""}, "outdir"),
        ({"train": {"steps": 100}}, "warm-up"),
        ({"gate": {"location": "latent"}}, "location"),
    ])
    def test_invalid_values(self, manager, overrides, message):
        with pytest.raises(ValidationError, match=message):
            manager.validate_config(from_dict(overrides))


class TestHash:
    def test_format_and_stability(self):
        digest = config_hash(RunConfig())
        assert len(digest) == 12 and int(digest, 16) >= 0
        assert config_hash(RunConfig()) == digest

    def test_ignores_output_only_fields(self):
        moved = from_dict({"outdir": "/tmp/x", "log_level": "DEBUG", "paths": {"dataset": "a.igds"}})
        assert config_hash(moved) == config_hash(RunConfig())

    def test_tracks_result_fields(self):
        assert config_hash(from_dict({"seed": 1})) != config_hash(RunConfig())
        assert config_hash(from_dict({"gate": {"warmup": 1}})) != config_hash(RunConfig())

    def test_canonical_json_is_sorted_and_compact(self):
        text = canonical_json(RunConfig(), exclude=("paths",))
        data = json.loads(text)
        assert list(data) == sorted(data)
        assert "paths" not in data and ", " not in text
