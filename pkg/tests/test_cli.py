"""End-to-end command-line tests on tiny datasets."""

import json

import numpy as np
import pytest

from kgelab.cli import main
from kgelab.graph import load_graph


@pytest.fixture(scope="module")
def untyped_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("untyped")
    code = main([
        "generate", "--out", str(out), "--entity-count", "60",
        "--relation-count", "2", "--triple-count", "500",
        "--zipf-exponent", "1.5", "--seed", "0",
    ])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def typed_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("typed")
    code = main([
        "generate", "--out", str(out), "--entity-count", "60",
        "--relation-count", "3", "--triple-count", "400",
        "--zipf-exponent", "1.0", "--typed", "--type-count", "3",
        "--seed", "1",
    ])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained(untyped_data, tmp_path_factory):
    out = tmp_path_factory.mktemp("trained")
    code = main([
        "train", "--data", str(untyped_data), "--out", str(out),
        "--sf", "transe", "--steps", "40", "--dim", "4",
        "--valid-interval", "20", "--valid-negatives", "10", "--seed", "0",
    ])
    assert code == 0
    return out


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    assert out.startswith("kgelab ")
    assert "kgelab-checkpoint-v1" in out


def test_generate_outputs(untyped_data):
    names = {p.name for p in untyped_data.iterdir()}
    assert {"train.tsv", "valid.tsv", "test.tsv", "metadata.json",
            "config.json"} <= names
    g = load_graph(untyped_data)
    assert g.entity_count == 60
    assert g.num_triples == 500
    config = json.loads((untyped_data / "config.json").read_text())
    assert config["command"] == "generate"
    assert config["entity_count"] == 60
    assert config["seed"] == 0
    assert config["preset"] is None


def test_generate_preset_with_overrides(tmp_path):
    out = tmp_path / "mini-biokg"
    code = main([
        "generate", "--preset", "biokg-like", "--out", str(out),
        "--entity-count", "90", "--triple-count", "300", "--type-count", "3",
    ])
    assert code == 0
    g = load_graph(out)
    assert g.entity_count == 90           # flag beat the preset
    assert g.relation_count == 10         # preset value kept
    assert g.entity_types is not None     # preset turned types on
    assert set(g.entity_types.values()) == {0, 1, 2}
    config = json.loads((out / "config.json").read_text())
    assert config["preset"] == "biokg-like"
    assert config["zipf_exponent"] == 0.5


def test_generate_unknown_preset(tmp_path, capsys):
    code = main(["generate", "--preset", "nope", "--out", str(tmp_path / "x")])
    assert code == 2
    assert "unknown preset" in capsys.readouterr().err


def test_train_outputs(trained):
    names = {p.name for p in trained.iterdir()}
    assert {"model.ckpt", "train_report.csv", "train_curve.png",
            "config.json"} <= names
    assert (trained / "train_curve.png").stat().st_size > 1000
    config = json.loads((trained / "config.json").read_text())
    assert config["sf"] == "+e0h -e0t +r0"  # canonical echo
    assert config["steps"] == 40
    assert config["paper_scale"] is False
    report = (trained / "train_report.csv").read_text().splitlines()
    assert report[0] == "step,valid_mrr"
    assert [int(line.split(",")[0]) for line in report[1:]] == [20, 40]


def test_train_rejects_bad_sf(untyped_data, tmp_path, capsys):
    code = main([
        "train", "--data", str(untyped_data), "--out", str(tmp_path / "x"),
        "--sf", "e0h + nope", "--steps", "1",
    ])
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_paper_scale_defaults_with_explicit_override(untyped_data, tmp_path):
    out = tmp_path / "paper"
    code = main([
        "train", "--data", str(untyped_data), "--out", str(out),
        "--paper-scale", "--steps", "2", "--valid-interval", "2",
        "--valid-negatives", "5", "--no-figures",
    ])
    assert code == 0
    config = json.loads((out / "config.json").read_text())
    assert config["paper_scale"] is True
    assert config["dim"] == 200       # paper-scale default applied
    assert config["steps"] == 2       # explicit flag still wins
    assert not (out / "train_curve.png").exists()


def test_eval_checkpoint_and_rerun_identical(untyped_data, trained, tmp_path):
    args = [
        "eval", "--data", str(untyped_data),
        "--checkpoint", str(trained / "model.ckpt"),
        "--protocol", "sampled:20", "--split", "test", "--seed", "3",
    ]
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    bytes_a = (out_a / "metrics.json").read_bytes()
    assert bytes_a == (out_b / "metrics.json").read_bytes()
    doc = json.loads(bytes_a)
    assert doc["protocol"] == "SampledUniform(20)"
    assert doc["split"] == "test"
    assert 0 < doc["mrr"] <= 1
    assert doc["seed"] == 3


def test_eval_entoccur_full_ranking(untyped_data, tmp_path, capsys):
    out = tmp_path / "ent"
    code = main([
        "eval", "--data", str(untyped_data), "--out", str(out),
        "--scorer", "entoccur", "--protocol", "full",
    ])
    assert code == 0
    assert "MRR=" in capsys.readouterr().out
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["protocol"] == "FullRanking"


def test_eval_typed_protocol_needs_types(untyped_data, typed_data, tmp_path,
                                         capsys):
    code = main([
        "eval", "--data", str(untyped_data), "--out", str(tmp_path / "x"),
        "--scorer", "entoccur", "--protocol", "typed:10",
    ])
    assert code == 2
    assert "types" in capsys.readouterr().err
    code = main([
        "eval", "--data", str(typed_data), "--out", str(tmp_path / "y"),
        "--scorer", "entoccur", "--protocol", "typed:10",
    ])
    assert code == 0


def test_eval_bad_protocol_and_missing_data(untyped_data, tmp_path, capsys):
    assert main([
        "eval", "--data", str(untyped_data), "--out", str(tmp_path / "x"),
        "--scorer", "entoccur", "--protocol", "sampled:abc",
    ]) == 2
    assert main([
        "eval", "--data", str(tmp_path / "missing"),
        "--out", str(tmp_path / "y"), "--scorer", "entoccur",
    ]) == 2
    capsys.readouterr()


def test_config_file_layering(untyped_data, tmp_path):
    config_path = tmp_path / "train.json"
    config_path.write_text(json.dumps({
        "steps": 25, "dim": 4, "valid_interval": 25, "valid_negatives": 5,
    }))
    out = tmp_path / "out"
    code = main([
        "train", "--data", str(untyped_data), "--out", str(out),
        "--config", str(config_path), "--steps", "30", "--no-figures",
    ])
    assert code == 0
    config = json.loads((out / "config.json").read_text())
    assert config["steps"] == 30   # flag over config file
    assert config["dim"] == 4      # config file over default
    assert config["learning_rate"] == 5e-4  # untouched default echoed


def test_boolean_config_values_survive_resolution(untyped_data, tmp_path):
    # regression: store_true-style flags must not stomp config-file
    # booleans with their own defaults
    config_path = tmp_path / "eval.json"
    config_path.write_text(json.dumps({"unfiltered": True, "protocol":
                                       "sampled:5"}))
    out = tmp_path / "out"
    code = main([
        "eval", "--data", str(untyped_data), "--out", str(out),
        "--scorer", "entoccur", "--config", str(config_path),
    ])
    assert code == 0
    config = json.loads((out / "config.json").read_text())
    assert config["unfiltered"] is True
    doc = json.loads((out / "metrics.json").read_text())
    assert doc["protocol"] == "SampledUniform(5)/unfiltered"


def test_unknown_config_key_rejected(untyped_data, tmp_path, capsys):
    config_path = tmp_path / "bad.json"
    config_path.write_text(json.dumps({"step": 25}))
    code = main([
        "train", "--data", str(untyped_data), "--out", str(tmp_path / "x"),
        "--config", str(config_path),
    ])
    assert code == 2
    assert "unknown config keys: step" in capsys.readouterr().err


def test_analyze(typed_data, tmp_path, capsys):
    out = tmp_path / "analysis"
    code = main(["analyze", "--data", str(typed_data), "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["augmented"] is False
    assert summary["search_space_ordered_3_56"] == 3 ** 56
    assert summary["search_space_distinct_3_35"] == 3 ** 35
    assert 0 < summary["top_share"]["train"]["top_1_percent"] <= 1
    hist = (out / "occurrence_hist_train.csv").read_text().splitlines()
    assert hist[0] == "occurrence,num_entities"
    assert (out / "occurrence_hist_train.png").stat().st_size > 1000
    assert (out / "occurrence_hist_test.png").exists()
    assert "top-1%" in capsys.readouterr().out

    out2 = tmp_path / "analysis-aug"
    code = main(["analyze", "--data", str(typed_data), "--out", str(out2),
                 "--augmented", "--no-figures"])
    assert code == 0
    aug = json.loads((out2 / "summary.json").read_text())
    assert aug["augmented"] is True
    assert aug["relation_count"] == 6
    assert aug["split_sizes"]["train"] == 2 * summary["split_sizes"]["train"]
    assert not (out2 / "occurrence_hist_train.png").exists()


def test_compare_protocols(typed_data, tmp_path, capsys):
    out = tmp_path / "cmp"
    code = main([
        "compare-protocols", "--data", str(typed_data), "--out", str(out),
        "--scorer", "entoccur", "--scorer", "random",
        "--num-negatives", "10", "--seed", "0",
    ])
    assert code == 0
    records = json.loads((out / "comparison.json").read_text())
    # two scorers x (sampled, typed, full) since the dataset has types
    assert len(records) == 6
    protocols = {r["protocol"] for r in records}
    assert protocols == {"SampledUniform(10)", "TypedSampled(10)",
                         "FullRanking"}
    assert {r["scorer"] for r in records} == {"entoccur", "random"}
    table = (out / "comparison.txt").read_text()
    assert "entoccur" in table and "FullRanking" in table
    assert (out / "comparison.png").stat().st_size > 1000
    assert "entoccur" in capsys.readouterr().out


def test_compare_protocols_untyped_skips_typed(untyped_data, tmp_path):
    out = tmp_path / "cmp"
    code = main([
        "compare-protocols", "--data", str(untyped_data), "--out", str(out),
        "--scorer", "entoccur", "--num-negatives", "10", "--no-figures",
    ])
    assert code == 0
    records = json.loads((out / "comparison.json").read_text())
    assert {r["protocol"] for r in records} == {"SampledUniform(10)",
                                                "FullRanking"}


def test_search_cli(untyped_data, tmp_path, capsys):
    out = tmp_path / "search"
    args = [
        "search", "--data", str(untyped_data), "--out", str(out),
        "--budget", "2", "--num-terms", "3", "--steps", "20", "--dim", "4",
        "--valid-interval", "10", "--valid-negatives", "5",
        "--protocol", "sampled:10", "--seed", "5",
    ]
    assert main(args) == 0
    stdout = capsys.readouterr().out
    assert "valid MRR" in stdout and "uses_head" in stdout
    ledger = out / "ledger"
    assert (ledger / "trial_0000.json").exists()
    assert (ledger / "trial_0001.json").exists()
    summary = json.loads((ledger / "summary.json").read_text())
    assert summary["budget"] == 2
    assert (out / "leaderboard.png").stat().st_size > 1000
    # resuming with a complete ledger recomputes nothing and rewrites
    # the summary byte-identically
    before = (ledger / "summary.json").read_bytes()
    mtimes = {p.name: p.stat().st_mtime_ns for p in ledger.glob("trial_*")}
    assert main(args) == 0
    capsys.readouterr()
    assert (ledger / "summary.json").read_bytes() == before
    assert {p.name: p.stat().st_mtime_ns
            for p in ledger.glob("trial_*")} == mtimes


def test_checkpoint_dataset_mismatch(typed_data, trained, tmp_path, capsys):
    code = main([
        "eval", "--data", str(typed_data), "--out", str(tmp_path / "x"),
        "--checkpoint", str(trained / "model.ckpt"),
    ])
    assert code == 2
    assert "does not match" in capsys.readouterr().err
