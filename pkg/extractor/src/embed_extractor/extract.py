"""Batch extraction into the engine's manifest format.

Input: an image index CSV (header ``path,<disease>,...``; labels 0, 1 or
-1 for uncertain) and a prompt file (see :mod:`.prompts`).  Output: a
manifest directory the engine loads as-is — UTF-8 JSON manifest plus raw
little-endian float32 blobs, row-major, no header.

Uncertain labels are resolved by an explicit policy (``to_zero`` or
``to_one``); there is deliberately no default.  Unreadable images are
skipped, listed in the summary and on stderr, never dropped silently.
Rows are split deterministically into train/test from the ExtractionSpec
seed.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import load_encoder
from .errors import ImageDecodeError, SpecError
from .prompts import STYLES, check_covers, load_prompts

MANIFEST_VERSION = 1
UNCERTAIN_POLICIES = ("to_zero", "to_one")


@dataclass
class ExtractionSpec:
    model_id: str
    image_index: str | Path
    prompt_file: str | Path
    out_dir: str | Path
    uncertain_policy: str  # required, no default: silent choices corrupt comparisons
    batch_size: int = 16
    device: str = "cpu"
    test_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.uncertain_policy not in UNCERTAIN_POLICIES:
            raise SpecError(
                f"uncertain_policy must be one of {UNCERTAIN_POLICIES}, "
                f"got {self.uncertain_policy!r}"
            )
        if self.batch_size < 1:
            raise SpecError("batch_size must be >= 1")
        if not 0.0 < self.test_fraction < 1.0:
            raise SpecError("test_fraction must lie strictly inside (0, 1)")


def read_image_index(path) -> tuple[list[str], list[Path], np.ndarray]:
    """Returns (disease names, image paths, raw labels with -1 preserved)."""
    path = Path(path)
    if not path.is_file():
        raise SpecError(f"image index not found: {path}")
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SpecError(f"image index {path} is empty") from None
        if len(header) < 2 or header[0] != "path":
            raise SpecError("image index header must be 'path,<disease>,...'")
        diseases = header[1:]
        paths, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SpecError(f"{path}:{lineno}: expected {len(header)} columns")
            paths.append(path.parent / row[0])
            try:
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise SpecError(f"{path}:{lineno}: non-numeric label: {exc}") from exc
            for v in values:
                if v not in (0.0, 1.0, -1.0):
                    raise SpecError(f"{path}:{lineno}: label {v} not in {{0, 1, -1}}")
            rows.append(values)
    if not rows:
        raise SpecError(f"image index {path} lists no images")
    return diseases, paths, np.array(rows)


def resolve_uncertain(labels: np.ndarray, policy: str) -> np.ndarray:
    resolved = labels.copy()
    resolved[labels == -1.0] = 1.0 if policy == "to_one" else 0.0
    return resolved


def _write_blob(path: Path, mat: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def _split_indices(n: int, test_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise SpecError("need at least 2 usable images to form train and test splits")
    test_count = int(round(test_fraction * n))
    test_count = max(1, min(n - 1, test_count))
    order = np.random.default_rng(seed).permutation(n)
    return np.sort(order[test_count:]), np.sort(order[:test_count])


def extract(spec: ExtractionSpec) -> Path:
    """Run the encoders and write a manifest directory; returns the manifest path."""
    diseases, image_paths, raw_labels = read_image_index(spec.image_index)
    prompts = load_prompts(spec.prompt_file)
    check_covers(prompts, diseases)
    labels = resolve_uncertain(raw_labels, spec.uncertain_policy)

    encoder = load_encoder(spec.model_id, device=spec.device)
    dim = encoder.dim

    embeddings, kept, skipped = [], [], []
    for start in range(0, len(image_paths), spec.batch_size):
        batch = image_paths[start:start + spec.batch_size]
        for offset, img_path in enumerate(batch):
            try:
                embeddings.append(encoder.encode_images([img_path])[0])
                kept.append(start + offset)
            except ImageDecodeError as exc:
                skipped.append({"row": start + offset, "path": str(img_path),
                                "reason": str(exc)})
    if skipped:
        for entry in skipped:
            print(f"skipped image row {entry['row']}: {entry['reason']}", file=sys.stderr)
    if not kept:
        raise SpecError("every image failed to decode")
    emb = np.vstack(embeddings)
    lab = labels[kept]

    train_idx, test_idx = _split_indices(len(kept), spec.test_fraction, spec.seed)

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": MANIFEST_VERSION,
        "dim": dim,
        "num_diseases": len(diseases),
        "disease_names": diseases,
        "splits": {},
        "prompt_banks": [],
    }
    for split, idx in (("train", train_idx), ("test", test_idx)):
        emb_name, lab_name = f"{split}_embeddings.f32", f"{split}_labels.f32"
        _write_blob(out / emb_name, emb[idx])
        _write_blob(out / lab_name, lab[idx])
        manifest["splits"][split] = {
            "embeddings": emb_name, "labels": lab_name, "count": int(len(idx)),
        }

    for style in STYLES:
        pos = encoder.encode_texts([prompts[d][style]["positive"] for d in diseases])
        neg = encoder.encode_texts([prompts[d][style]["negative"] for d in diseases])
        pos_name, neg_name = f"prompts_{style}_pos.f32", f"prompts_{style}_neg.f32"
        _write_blob(out / pos_name, pos)
        _write_blob(out / neg_name, neg)
        manifest["prompt_banks"].append(
            {"style": style, "positive": pos_name, "negative": neg_name})

    # semantics-free control bank: seeded random unit vectors of the same width
    rng = np.random.default_rng(spec.seed)
    rand_pos = rng.standard_normal((len(diseases), dim))
    rand_neg = rng.standard_normal((len(diseases), dim))
    rand_pos /= np.linalg.norm(rand_pos, axis=1, keepdims=True)
    rand_neg /= np.linalg.norm(rand_neg, axis=1, keepdims=True)
    _write_blob(out / "prompts_random_pos.f32", rand_pos)
    _write_blob(out / "prompts_random_neg.f32", rand_neg)
    manifest["prompt_banks"].append({
        "style": "random",
        "positive": "prompts_random_pos.f32",
        "negative": "prompts_random_neg.f32",
    })

    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    summary = {
        "model_id": spec.model_id,
        "dim": dim,
        "images_total": len(image_paths),
        "images_kept": len(kept),
        "skipped": skipped,
        "uncertain_policy": spec.uncertain_policy,
        "uncertain_count": int((raw_labels == -1.0).sum()),
        "train_count": int(len(train_idx)),
        "test_count": int(len(test_idx)),
        "seed": spec.seed,
    }
    (out / "extraction_summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return manifest_path
