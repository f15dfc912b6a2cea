"""Acceptance: extractor output round-trips through the engine.

The engine is driven only through its external surfaces: the manifest file
format and the ``vladapt`` CLI (run as a subprocess).
"""

import hashlib
import subprocess
import sys
from contextlib import contextmanager

import pytest

from embed_extractor.extract import ExtractionSpec, extract
from embed_extractor.prompts import make_prompt_file

from test_extract import write_toy_images


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {name}: FAIL")
        raise
    print(f"ACCEPTANCE {name}: PASS")


def blob_checksums(out_dir):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out_dir.iterdir()) if p.suffix == ".f32"}


def test_extractor_round_trip(tmp_path):
    with criterion("extractor-round-trip"):
        diseases = ["condition_a", "condition_b"]
        index, _ = write_toy_images(tmp_path / "imgs", 10, diseases, seed=7)
        prompts = make_prompt_file(diseases, tmp_path / "prompts.jsonl")

        spec = ExtractionSpec(model_id="toy:24", image_index=index,
                              prompt_file=prompts, out_dir=tmp_path / "out",
                              uncertain_policy="to_zero", seed=2)
        manifest_path = extract(spec)

        # a zero-shot engine run performs full manifest validation and scoring
        run_dir = tmp_path / "zs"
        proc = subprocess.run(
            [sys.executable, "-m", "vladapt.cli", "run",
             "--manifest", str(manifest_path), "--out", str(run_dir),
             "--scenario", "zero_shot", "--seeds", "1"],
            capture_output=True, text=True,
        )
        assert proc.returncode == 0, proc.stderr
        report = (run_dir / "report.csv").read_text()
        assert report.splitlines()[0].startswith("seed,scenario,task,mean_auc")
        assert len(report.strip().splitlines()) == 2

        # repeated extraction is checksum-identical
        extract(ExtractionSpec(model_id="toy:24", image_index=index,
                               prompt_file=prompts, out_dir=tmp_path / "again",
                               uncertain_policy="to_zero", seed=2))
        assert blob_checksums(tmp_path / "out") == blob_checksums(tmp_path / "again")
