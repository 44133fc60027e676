import csv
import json
from pathlib import Path

import pytest

from infogate import cli
from infogate.cli import EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, build_parser, collect_overrides, execute
from infogate.errors import NumericalAbort


def only(pattern: str) -> Path:
    matches = sorted(Path("workspace/output").glob(pattern))
    assert len(matches) == 1, matches
    return matches[0]


@pytest.fixture
def generated(clean_env, tiny_config_file):
    assert execute(["gen-data", "--config", str(tiny_config_file)]) == EXIT_OK
    return only("gen-data/*/train.igds"), only("gen-data/*/eval.igds")


@pytest.fixture
def trained(generated, tiny_config_file):
    train_set, eval_set = generated
    code = execute(["train", "--config", str(tiny_config_file), "--dataset", str(train_set),
                    "--eval-dataset", str(eval_set), "--lambda", "0.5"])
    assert code == EXIT_OK
    return only("train/*/params.igps")


class TestParser:
    def test_flags_map_to_config_fields(self):
        args = build_parser().parse_args(["train", "--steps", "9", "--lambda", "0.2", "--seed", "3",
                                          "--set", "gate.warmup=4"])
        overrides = collect_overrides(args)
        assert overrides["train.steps"] == 9
        assert overrides["seed"] == 3
        assert overrides["gate.warmup"] == 4
        assert overrides["gate.schedule"] == {"kind": "constant", "start": 0.2, "end": 0.2}

    def test_set_wins_over_flags(self):
        args = build_parser().parse_args(["train", "--steps", "9", "--set", "train.steps=11"])
        assert collect_overrides(args)["train.steps"] == 11


class TestPipeline:
    def test_gen_data_writes_both_sets(self, generated):
        train_set, eval_set = generated
        assert train_set.parent == eval_set.parent
        assert train_set.read_bytes()[:4] == b"IGDS"
        assert only("logs/gen-data-*.log").stat().st_size > 0

    def test_train_writes_artifacts(self, trained):
        out = trained.parent
        records = [json.loads(line) for line in (out / "runlog.jsonl").read_text().splitlines()]
        assert records[0]["kind"] == "run" and records[0]["config_hash"] == out.name
        assert all(r["lambda"] == 0.5 for r in records if r["kind"] == "step")
        with open(out / "steps.csv", newline="") as f:
            assert len(list(csv.DictReader(f))) == 5
        assert (out / "evals.csv").exists()

    def test_probe_with_mask_report(self, generated, trained, tiny_config_file):
        train_set, eval_set = generated
        code = execute(["probe", "--config", str(tiny_config_file), "--params", str(trained),
                        "--dataset", str(train_set), "--eval-dataset", str(eval_set), "--rollout-episodes", "1",
                        "--with-mask-report"])
        assert code == EXIT_OK
        record = json.loads(only("probe/*/probe.json").read_text())
        assert 0.0 <= record["accuracy"] <= 1.0
        assert record["rollout"]["episodes"] == 1
        assert set(record["mask"]) >= {"mean_gate", "iou", "selectivity"}

    def test_render_masks(self, generated, trained, tiny_config_file):
        _, eval_set = generated
        code = execute(["render-masks", "--config", str(tiny_config_file), "--params", str(trained),
                        "--dataset", str(eval_set), "--count", "2"])
        assert code == EXIT_OK
        out = only("render-masks/*/mask_0000.pgm").parent
        assert (out / "mask_0001.pgm").read_bytes().startswith(b"P5\n16 16\n255\n")
        assert (out / "overlay_0001.ppm").read_bytes().startswith(b"P6\n16 16\n255\n")
        assert not (out / "mask_0002.pgm").exists()

    def test_sweep(self, generated, tiny_config_file):
        train_set, eval_set = generated
        code = execute(["sweep", "--config", str(tiny_config_file), "--dataset", str(train_set),
                        "--eval-dataset", str(eval_set)])
        assert code == EXIT_OK
        with open(only("sweep/*/sweep.csv"), newline="") as f:
            assert [float(r["lambda"]) for r in csv.DictReader(f)] == [0.01, 1.0]
        assert len(json.loads(only("sweep/*/summary.json").read_text())["lambdas"]) == 2

    def test_same_config_same_directory(self, generated, tiny_config_file):
        assert execute(["gen-data", "--config", str(tiny_config_file)]) == EXIT_OK
        assert len(list(Path("workspace/output/gen-data").iterdir())) == 1
        assert execute(["gen-data", "--config", str(tiny_config_file), "--seed", "5"]) == EXIT_OK
        assert len(list(Path("workspace/output/gen-data").iterdir())) == 2


def test_gradcheck_command(clean_env, tiny_config_file):
    code = execute(["gradcheck", "--config", str(tiny_config_file), "--seeds", "1", "--depth", "3"])
    assert code == EXIT_OK
    report = json.loads(only("gradcheck/*/gradcheck.json").read_text())
    assert report["passed"] is True and report["seeds"] == 1


class TestFailures:
    def test_unknown_command(self, clean_env, capsys):
        assert execute(["teleport"]) == EXIT_INVALID
        assert "Unknown command 'teleport'" in capsys.readouterr().out

    def test_invalid_arguments(self, clean_env, capsys):
        assert execute(["train", "--steps", "many"]) == EXIT_INVALID
        assert "Invalid arguments" in capsys.readouterr().out

    def test_missing_config_file(self, clean_env, capsys):
        assert execute(["gen-data", "--config", "nowhere.json"]) == EXIT_INVALID
        assert "Configuration error" in capsys.readouterr().out

    def test_unknown_override(self, clean_env, tiny_config_file, capsys):
        assert execute(["gen-data", "--config", str(tiny_config_file), "--set", "gate.colour=red"]) == EXIT_INVALID
        assert "Unknown configuration field 'gate.colour'" in capsys.readouterr().out

    def test_missing_dataset(self, clean_env, tiny_config_file, capsys):
        assert execute(["train", "--config", str(tiny_config_file)]) == EXIT_INVALID
        assert "Required input 'dataset'" in capsys.readouterr().out

    def test_corrupt_dataset(self, clean_env, tiny_config_file, capsys):
        Path("bad.igds").write_bytes(b"JUNKJUNKJUNKJUNK")
        assert execute(["train", "--config", str(tiny_config_file), "--dataset", "bad.igds"]) == EXIT_INVALID
        assert "Unreadable input file" in capsys.readouterr().out

    def test_numerical_abort_exit_code(self, generated, tiny_config_file, monkeypatch, capsys):
        def explode(*args, **kwargs):
            raise NumericalAbort("Non-finite loss at step 3", last_good_step=2)

        monkeypatch.setattr(cli, "train", explode)
        train_set, _ = generated
        assert execute(["train", "--config", str(tiny_config_file), "--dataset", str(train_set)]) == EXIT_NUMERICAL
        assert "last good step: 2" in capsys.readouterr().out
