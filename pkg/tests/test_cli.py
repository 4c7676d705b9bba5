"""End-to-end command line workflow on a small synthetic task.

A module-scoped fixture drives synth -> pretrain -> finetune -> predict once;
the tests then assert on the artifacts and on the failure-path exit codes.
"""

import json
import os
import shutil

import numpy as np
import pytest

from attnens.checkpoint import load_checkpoint
from attnens.cli import main
from attnens.ensemble import read_matrix

MODEL = {
    "input_size": [24, 24, 3],
    "backbone": [6, 8],
    "num_classes": 3,
    "head": [16],
    "attention": {"channels": 8, "reduction": 4},
    "dropout_rate": 0.1,
}
TRAIN = {
    "batch_size": 8,
    "epochs": 2,
    "learning_rate": 0.05,
    "momentum": 0.9,
    "shuffle_seed": 1,
}


def write_json(path, payload):
    with open(path, "w") as f:
        json.dump(payload, f)
    return str(path)


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    source_data = str(root / "source_data")
    target_data = str(root / "target_data")

    spec = write_json(root / "source_spec.json",
                      {"num_classes": 3, "per_class": 12, "image_size": 24, "seed": 5})
    assert main(["synth", "--spec", spec, "--out", source_data]) == 0
    spec = write_json(root / "target_spec.json",
                      {"num_classes": 3, "per_class": 12, "image_size": 24, "seed": 7,
                       "class_offset": 3})
    assert main(["synth", "--spec", spec, "--out", target_data]) == 0

    pre_dir = str(root / "pretrained")
    cfg = write_json(root / "pretrain.json",
                     {"seed": 1, "data_dir": source_data, "out_dir": pre_dir,
                      "model": MODEL, "train": TRAIN})
    assert main(["pretrain", "--config", cfg]) == 0
    source_ckpt = os.path.join(pre_dir, "checkpoint.aens")

    runs = {}
    for label, policy in (("frozen", "freeze"), ("full", "all")):
        out_dir = str(root / f"finetuned_{label}")
        cfg = write_json(root / f"finetune_{label}.json",
                         {"seed": 2, "data_dir": target_data, "out_dir": out_dir,
                          "model": MODEL, "train": TRAIN})
        assert main(["finetune", "--config", cfg, "--from", source_ckpt,
                     "--policy", policy]) == 0
        runs[label] = os.path.join(out_dir, "checkpoint.aens")

    preds = root / "preds"
    preds.mkdir()
    for label in runs:
        assert main(["predict", "--model", runs[label], "--data", target_data,
                     "--split", "test", "--out", str(preds / f"{label}.csv"),
                     "--name", label]) == 0

    return {
        "root": root,
        "source_data": source_data,
        "target_data": target_data,
        "source_ckpt": source_ckpt,
        "runs": runs,
        "preds": preds,
        "labels": os.path.join(target_data, "labels.csv"),
    }


class TestSynth:
    def test_dataset_files_on_disk(self, pipeline):
        files = os.listdir(pipeline["source_data"])
        assert "labels.csv" in files
        assert "resolved_config.json" in files
        assert sum(f.endswith(".ppm") for f in files) == 36

    def test_bad_spec_key_exits_2(self, pipeline, capsys):
        spec = write_json(pipeline["root"] / "bad_spec.json",
                          {"num_classes": 2, "per_class": 4, "shapes": "disk"})
        assert main(["synth", "--spec", spec, "--out", str(pipeline["root"] / "x")]) == 2
        assert "error:" in capsys.readouterr().err


class TestTrainingRuns:
    def test_artifacts_written(self, pipeline):
        pre_dir = os.path.dirname(pipeline["source_ckpt"])
        for name in ("checkpoint.aens", "history.csv", "resolved_config.json"):
            assert os.path.exists(os.path.join(pre_dir, name))
        history = open(os.path.join(pre_dir, "history.csv")).read().splitlines()
        assert len(history) == 1 + TRAIN["epochs"]

    def test_resolved_config_replays_inputs(self, pipeline):
        pre_dir = os.path.dirname(pipeline["source_ckpt"])
        resolved = json.load(open(os.path.join(pre_dir, "resolved_config.json")))
        assert resolved["command"] == "pretrain"
        assert resolved["model"]["num_classes"] == 3
        assert resolved["train"]["epochs"] == TRAIN["epochs"]

    def test_freeze_policy_preserves_backbone_bytes(self, pipeline):
        source = {p.name: p for p in load_checkpoint(pipeline["source_ckpt"]).params}
        frozen = load_checkpoint(pipeline["runs"]["frozen"])
        tuned = {p.name: p for p in frozen.params}
        for name in ("conv1", "conv2", "attn_reduce", "attn_expand"):
            np.testing.assert_array_equal(tuned[name].weights, source[name].weights)
            np.testing.assert_array_equal(tuned[name].bias, source[name].bias)
            assert name in frozen.frozen
        assert not np.array_equal(tuned["logits"].weights, source["logits"].weights)

    def test_full_policy_moves_backbone(self, pipeline):
        source = {p.name: p for p in load_checkpoint(pipeline["source_ckpt"]).params}
        full = load_checkpoint(pipeline["runs"]["full"])
        tuned = {p.name: p for p in full.params}
        assert full.frozen == frozenset()
        assert not np.array_equal(tuned["conv1"].weights, source["conv1"].weights)

    def test_finetune_backbone_mismatch_exits_2(self, pipeline, capsys):
        other = dict(MODEL, backbone=[6, 8, 8])
        cfg = write_json(pipeline["root"] / "mismatch.json",
                         {"seed": 2, "data_dir": pipeline["target_data"],
                          "out_dir": str(pipeline["root"] / "mm"),
                          "model": other, "train": TRAIN})
        code = main(["finetune", "--config", cfg, "--from", pipeline["source_ckpt"],
                     "--policy", "freeze"])
        assert code == 2
        assert "backbone" in capsys.readouterr().err

    def test_config_missing_key_exits_2(self, pipeline, capsys):
        cfg = write_json(pipeline["root"] / "incomplete.json",
                         {"seed": 1, "model": MODEL})
        assert main(["pretrain", "--config", cfg]) == 2
        assert "data_dir" in capsys.readouterr().err

    def test_config_unknown_key_exits_2(self, pipeline):
        cfg = write_json(pipeline["root"] / "extra.json",
                         {"seed": 1, "data_dir": pipeline["source_data"],
                          "out_dir": str(pipeline["root"] / "y"),
                          "model": MODEL, "train": TRAIN, "optimizer": "adam"})
        assert main(["pretrain", "--config", cfg]) == 2

    def test_malformed_json_exits_2(self, pipeline):
        path = pipeline["root"] / "broken.json"
        path.write_text("{not json")
        assert main(["pretrain", "--config", str(path)]) == 2

    def test_missing_checkpoint_file_exits_2(self, pipeline):
        cfg = write_json(pipeline["root"] / "ft_missing.json",
                         {"seed": 2, "data_dir": pipeline["target_data"],
                          "out_dir": str(pipeline["root"] / "z"),
                          "model": MODEL, "train": TRAIN})
        assert main(["finetune", "--config", cfg, "--from", "/no/such/file.aens",
                     "--policy", "all"]) == 2


class TestPredict:
    def test_row_count_matches_test_split(self, pipeline):
        matrix = read_matrix(str(pipeline["preds"] / "frozen.csv"))
        # 12 per class, 0.75 train fraction -> 3 test samples per class
        assert len(matrix) == 9
        assert matrix.model_name == "frozen"

    def test_repeat_prediction_is_byte_identical(self, pipeline):
        out1 = str(pipeline["root"] / "again1.csv")
        out2 = str(pipeline["root"] / "again2.csv")
        for out in (out1, out2):
            assert main(["predict", "--model", pipeline["runs"]["frozen"],
                         "--data", pipeline["target_data"], "--split", "test",
                         "--out", out, "--name", "again"]) == 0
        assert open(out1, "rb").read() == open(out2, "rb").read()

    def test_crop_flag_uses_bboxes(self, pipeline):
        out = str(pipeline["root"] / "cropped.csv")
        assert main(["predict", "--model", pipeline["runs"]["frozen"],
                     "--data", pipeline["target_data"], "--split", "test",
                     "--out", out, "--crop", "--name", "cropped"]) == 0
        assert len(read_matrix(out)) == 9

    def test_crop_without_bboxes_exits_2(self, pipeline, capsys):
        stripped = str(pipeline["root"] / "no_bbox_data")
        shutil.copytree(pipeline["target_data"], stripped)
        manifest = os.path.join(stripped, "labels.csv")
        rows = [line.split(",")[:3] for line in open(manifest).read().splitlines()]
        with open(manifest, "w") as f:
            f.write("\n".join(",".join(r) for r in rows) + "\n")
        code = main(["predict", "--model", pipeline["runs"]["frozen"],
                     "--data", stripped, "--split", "test",
                     "--out", str(pipeline["root"] / "nope.csv"), "--crop"])
        assert code == 2
        assert "bounding box" in capsys.readouterr().err


class TestEnsemble:
    def test_single_member_report_matches_member(self, pipeline):
        report_path = str(pipeline["root"] / "solo.json")
        assert main(["ensemble", "--members", str(pipeline["preds"] / "frozen.csv"),
                     "--labels", pipeline["labels"], "--out", report_path]) == 0
        report = json.load(open(report_path))
        assert report["rule"] == "average"
        assert report["num_samples"] == 9
        assert len(report["members"]) == 1
        assert report["accuracy"] == report["members"][0]["accuracy"]

    def test_weighted_pair_echoes_weights(self, pipeline):
        report_path = str(pipeline["root"] / "pair.json")
        members = [str(pipeline["preds"] / "frozen.csv"),
                   str(pipeline["preds"] / "full.csv")]
        assert main(["ensemble", "--members", *members, "--weights", "2,1",
                     "--labels", pipeline["labels"], "--out", report_path]) == 0
        report = json.load(open(report_path))
        assert report["rule"] == "weighted_average"
        assert [m["weight"] for m in report["members"]] == [2.0, 1.0]
        assert set(report["per_class_accuracy"]) == {"triangle1", "ring1", "diamond1"}
        assert 0.0 <= report["accuracy"] <= 1.0

    def test_comma_separated_members_accepted(self, pipeline):
        report_path = str(pipeline["root"] / "csv_members.json")
        joined = ",".join([str(pipeline["preds"] / "frozen.csv"),
                           str(pipeline["preds"] / "full.csv")])
        assert main(["ensemble", "--members", joined,
                     "--labels", pipeline["labels"], "--out", report_path]) == 0
        assert len(json.load(open(report_path))["members"]) == 2

    def test_misaligned_members_exit_2(self, pipeline, capsys):
        lines = open(pipeline["preds"] / "frozen.csv").read().splitlines()
        lines[1], lines[2] = lines[2], lines[1]
        shuffled = pipeline["root"] / "shuffled.csv"
        shuffled.write_text("\n".join(lines) + "\n")
        code = main(["ensemble", "--members", str(shuffled),
                     str(pipeline["preds"] / "full.csv"),
                     "--labels", pipeline["labels"],
                     "--out", str(pipeline["root"] / "bad.json")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_weight_count_mismatch_exits_2(self, pipeline):
        code = main(["ensemble", "--members", str(pipeline["preds"] / "frozen.csv"),
                     "--weights", "2,1",
                     "--labels", pipeline["labels"],
                     "--out", str(pipeline["root"] / "bad2.json")])
        assert code == 2


class TestGradcheck:
    def test_clean_audit_exits_0(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert "all 9 gradient checks passed" in out

    def test_corrupted_gradient_exits_3(self, capsys):
        assert main(["gradcheck", "--seed", "0", "--corrupt", "dense"]) == 3
        assert "gradient check FAILED for: dense" in capsys.readouterr().err


class TestThreadsEnv:
    def test_invalid_value_exits_2(self, monkeypatch, capsys):
        monkeypatch.setenv("ATTN_ENS_THREADS", "many")
        assert main(["gradcheck", "--seed", "0"]) == 2
        assert "ATTN_ENS_THREADS" in capsys.readouterr().err

    def test_auto_value_accepted(self, monkeypatch):
        monkeypatch.setenv("ATTN_ENS_THREADS", "0")
        assert main(["gradcheck", "--seed", "0"]) == 0
