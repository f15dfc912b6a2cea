import json
import os

import pytest

from vladapt.cli import main


@pytest.fixture(scope="module")
def world_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cliworld")
    code = main(["synth", "--out", str(out / "world"), "--dim", "12", "--diseases", "3",
                 "--train-rows", "120", "--test-rows", "120", "--seed", "4"])
    assert code == 0
    return out / "world"


def run_args(world_dir, out, **kw):
    args = ["run", "--manifest", str(world_dir / "manifest.json"), "--out", str(out),
            "--epochs", "2", "--seeds", "1", "--kind", "dense", "--init", "identity"]
    for key, value in kw.items():
        args += [f"--{key.replace('_', '-')}", str(value)]
    return args


def test_synth_file_census(world_dir):
    names = sorted(p.name for p in world_dir.iterdir())
    assert "manifest.json" in names
    blobs = [n for n in names if n.endswith(".f32")]
    # train/test x embeddings/labels + 3 styles x pos/neg
    assert len(blobs) == 4 + 6
    assert "resolved_config.json" in names


def test_synth_seed_changes_output(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "s1"), "--dim", "8", "--diseases", "2",
                 "--train-rows", "20", "--test-rows", "20", "--seed", "1"]) == 0
    assert main(["synth", "--out", str(tmp_path / "s2"), "--dim", "8", "--diseases", "2",
                 "--train-rows", "20", "--test-rows", "20", "--seed", "2"]) == 0
    a = (tmp_path / "s1" / "train_embeddings.f32").read_bytes()
    b = (tmp_path / "s2" / "train_embeddings.f32").read_bytes()
    assert a != b


def test_synth_bad_dim_is_config_error(tmp_path, capsys):
    code = main(["synth", "--out", str(tmp_path / "bad"), "--dim", "0"])
    assert code == 2
    err = capsys.readouterr().err
    assert err.startswith("error: ConfigError:")


def test_run_zero_shot_outputs(world_dir, tmp_path):
    out = tmp_path / "zs"
    assert main(run_args(world_dir, out, scenario="zero_shot")) == 0
    for name in ("report.json", "report.csv", "curves.svg", "curves.csv",
                 "resolved_config.json", "inputs.json"):
        assert (out / name).is_file(), name
    rows = (out / "report.csv").read_text().strip().splitlines()
    assert len(rows) == 2  # header + one task row for the single seed
    assert not (out / "checkpoint").exists()  # no adaptors in zero-shot


def test_run_writes_checkpoint_with_optimizer_state(world_dir, tmp_path):
    out = tmp_path / "ck"
    assert main(run_args(world_dir, out, scenario="joint")) == 0
    meta = json.loads((out / "checkpoint" / "seed_1" / "checkpoint.json").read_text())
    names = {t["name"] for t in meta["tensors"]}
    assert {"image.W", "image.b", "text.W", "text.b"} <= names
    assert any(n.startswith("adam.m.") for n in names)
    assert meta["extra"]["adam_t"] > 0


def test_joint_equals_single_partition_csv_columns(world_dir, tmp_path):
    assert main(run_args(world_dir, tmp_path / "joint", scenario="joint")) == 0
    assert main(run_args(world_dir, tmp_path / "di", scenario="data_incremental",
                         partitions=1)) == 0
    joint_rows = (tmp_path / "joint" / "report.csv").read_text().strip().splitlines()
    di_rows = (tmp_path / "di" / "report.csv").read_text().strip().splitlines()
    # identical except the scenario column
    for a, b in zip(joint_rows[1:], di_rows[1:]):
        ca, cb = a.split(","), b.split(",")
        assert ca[0] == cb[0] and ca[2:] == cb[2:]
        assert (ca[1], cb[1]) == ("joint", "data_incremental")


def test_unknown_config_key_rejected(world_dir, tmp_path, capsys):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({"run.scenrio": "joint"}))
    code = main(["run", "--config", str(cfg_file), "--manifest",
                 str(world_dir / "manifest.json")])
    assert code == 2
    assert "unknown config key" in capsys.readouterr().err


def test_config_file_and_flag_layering(world_dir, tmp_path):
    cfg_file = tmp_path / "cfg.json"
    cfg_file.write_text(json.dumps({
        "run.manifest": str(world_dir / "manifest.json"),
        "run.scenario": "zero_shot",
        "run.seeds": "7",
        "run.out": str(tmp_path / "ignored"),
    }))
    out = tmp_path / "layered"
    code = main(["run", "--config", str(cfg_file), "--set", "run.epochs=1",
                 "--out", str(out)])
    assert code == 0
    resolved = json.loads((out / "resolved_config.json").read_text())
    assert resolved["run.scenario"] == "zero_shot"
    assert resolved["run.seeds"] == [7]
    assert resolved["run.epochs"] == 1
    assert resolved["run.out"] == str(out)


def test_missing_manifest_is_data_error(tmp_path, capsys):
    code = main(["run", "--manifest", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
    assert code == 3
    assert "MissingFile" in capsys.readouterr().err


def test_out_root_env_var(world_dir, tmp_path, monkeypatch):
    monkeypatch.setenv("VLADAPT_OUT_ROOT", str(tmp_path))
    assert main(run_args(world_dir, "rel-out", scenario="zero_shot")) == 0
    assert (tmp_path / "rel-out" / "report.csv").is_file()


def test_sweep_small_grid_and_resume(world_dir, tmp_path):
    out = tmp_path / "sweep"
    args = ["sweep", "--manifest", str(world_dir / "manifest.json"), "--out", str(out),
            "--placements", "both", "--styles", "template,random",
            "--scenarios", "joint", "--seeds", "1", "--epochs", "1",
            "--kind", "dense", "--init", "identity"]
    assert main(args) == 0
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 3  # header + 2 cells
    assert all(",ok," in r for r in rows[1:])
    table = (out / "table.csv").read_text().strip().splitlines()
    assert table[0] == "scenario,both|template,both|random"

    # resume: drop one cell, keep the other; only the missing one is redone
    kept = out / "cells" / "joint__template__both" / "report.csv"
    removed_dir = out / "cells" / "joint__random__both"
    kept_mtime = kept.stat().st_mtime_ns
    for p in sorted(removed_dir.rglob("*"), reverse=True):
        p.unlink() if p.is_file() else p.rmdir()
    removed_dir.rmdir()
    assert main(args) == 0
    assert kept.stat().st_mtime_ns == kept_mtime
    rows = (out / "sweep.csv").read_text().strip().splitlines()
    statuses = {r.split(",")[1]: r.split(",")[3] for r in rows[1:]}
    assert statuses == {"template": "cached", "random": "ok"}


def test_sweep_one_cell_matches_cmd_run(world_dir, tmp_path):
    out_sweep = tmp_path / "sw"
    out_run = tmp_path / "rn"
    common = ["--manifest", str(world_dir / "manifest.json"), "--seeds", "2",
              "--epochs", "2", "--kind", "dense", "--init", "identity"]
    assert main(["sweep", "--out", str(out_sweep), "--placements", "image_only",
                 "--styles", "template", "--scenarios", "joint", *common]) == 0
    assert main(["run", "--out", str(out_run), "--scenario", "joint",
                 "--style", "template", "--placement", "image_only", *common]) == 0
    cell_csv = (out_sweep / "cells" / "joint__template__image_only" / "report.csv").read_text()
    assert cell_csv == (out_run / "report.csv").read_text()


def test_report_rerender(world_dir, tmp_path):
    out = tmp_path / "rr"
    assert main(run_args(world_dir, out, scenario="data_incremental", partitions=3)) == 0
    svg_out = tmp_path / "again.svg"
    assert main(["report", "--path", str(out / "report.json"), "--out", str(svg_out),
                 "--baseline", "0.8"]) == 0
    text = svg_out.read_text()
    assert 'class="baseline"' in text
    assert (tmp_path / "again.csv").is_file()
