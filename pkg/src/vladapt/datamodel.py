"""Embedding datasets, prompt banks, task schedules and their on-disk format.

The on-disk layout is a UTF-8 JSON manifest plus raw binary blobs placed
relative to the manifest:

* manifest keys: ``version, dim, num_diseases, disease_names,
  splits{train{embeddings, labels, count}, test{...}}, prompt_banks[{style,
  positive, negative}]``
* blobs: little-endian IEEE-754 single-precision values, row-major, no
  header; labels are stored as 0.0/1.0 floats for format uniformity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DimensionMismatch,
    LabelDomainError,
    MissingFile,
    TooFewRows,
    ZeroNormEmbedding,
)
from .rng import Stream

MANIFEST_VERSION = 1
PROMPT_STYLES = ("template", "generative", "random")
SCENARIOS = ("joint", "class_incremental", "label_incremental", "data_incremental", "zero_shot")


@dataclass
class EmbeddingDataset:
    """Precomputed image embeddings with binary multi-label targets.

    ``embeddings`` is N x dim float32, ``labels`` is N x C float32 with
    entries in {0.0, 1.0}.  Both buffers are frozen (read-only) after
    construction; training code accesses rows only through :meth:`rows`.
    """

    split: str
    dim: int
    num_diseases: int
    embeddings: np.ndarray
    labels: np.ndarray
    disease_names: list[str]

    def __post_init__(self):
        validate_dataset(self)
        self.embeddings.flags.writeable = False
        self.labels.flags.writeable = False

    @property
    def num_rows(self) -> int:
        return self.embeddings.shape[0]

    def rows(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Fetch (embeddings, labels) for the given row indices.

        The single access point for per-row reads, so sequestered-data
        audits can interpose on it.
        """
        idx = np.asarray(indices, dtype=np.int64)
        return self.embeddings[idx], self.labels[idx]


@dataclass
class PromptBank:
    """Per-disease positive/negative prompt embeddings for one style."""

    style: str
    dim: int
    positive: np.ndarray
    negative: np.ndarray

    def __post_init__(self):
        validate_prompt_bank(self)
        self.positive.flags.writeable = False
        self.negative.flags.writeable = False

    @property
    def num_diseases(self) -> int:
        return self.positive.shape[0]


@dataclass
class Task:
    index: int
    image_indices: list[int]
    label_mask: np.ndarray


@dataclass
class TaskSchedule:
    scenario: str
    tasks: list[Task]
    seed: int
    num_rows: int = 0

    def __post_init__(self):
        if self.scenario == "zero_shot":
            if self.tasks:
                raise ConfigError("zero_shot schedule carries no tasks")
            return
        seen: set[int] = set()
        for task in self.tasks:
            overlap = seen.intersection(task.image_indices)
            if overlap:
                raise ConfigError(f"task {task.index} reuses rows {sorted(overlap)[:5]}")
            seen.update(task.image_indices)
        if self.num_rows and seen != set(range(self.num_rows)):
            raise ConfigError("tasks do not partition the full training index set")


def validate_dataset(ds: EmbeddingDataset) -> None:
    if ds.split not in ("train", "test"):
        raise ConfigError(f"unknown split {ds.split!r}")
    emb, lab = ds.embeddings, ds.labels
    if emb.ndim != 2 or lab.ndim != 2:
        raise DimensionMismatch("embeddings and labels must be 2-d matrices")
    n, dim = emb.shape
    if dim != ds.dim:
        raise DimensionMismatch(f"embedding width {dim} != declared dim {ds.dim}")
    if ds.dim < 2:
        raise DimensionMismatch(f"dim must be >= 2, got {ds.dim}")
    if n < 1:
        raise DimensionMismatch("dataset must contain at least one row")
    if lab.shape != (n, ds.num_diseases):
        raise DimensionMismatch(
            f"labels shape {lab.shape} != ({n}, {ds.num_diseases})"
        )
    if ds.num_diseases < 1:
        raise DimensionMismatch("need at least one disease")
    if len(ds.disease_names) != ds.num_diseases:
        raise DimensionMismatch("disease_names length != num_diseases")
    bad = ~((lab == 0.0) | (lab == 1.0))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise LabelDomainError(
            f"label[{i},{j}] = {lab[i, j]!r} is not in {{0, 1}}"
        )
    norms = np.linalg.norm(emb.astype(np.float64), axis=1)
    if (norms == 0.0).any():
        row = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroNormEmbedding(f"embedding row {row} has zero norm")


def validate_prompt_bank(bank: PromptBank, num_diseases: int | None = None) -> None:
    if bank.style not in PROMPT_STYLES:
        raise ConfigError(f"unknown prompt style {bank.style!r}")
    pos, neg = bank.positive, bank.negative
    if pos.shape != neg.shape or pos.ndim != 2:
        raise DimensionMismatch("positive/negative prompt matrices must share a 2-d shape")
    if pos.shape[1] != bank.dim:
        raise DimensionMismatch(f"prompt width {pos.shape[1]} != declared dim {bank.dim}")
    if num_diseases is not None and pos.shape[0] != num_diseases:
        raise DimensionMismatch(
            f"prompt bank has {pos.shape[0]} rows for {num_diseases} diseases"
        )
    for name, mat in (("positive", pos), ("negative", neg)):
        norms = np.linalg.norm(mat.astype(np.float64), axis=1)
        if (norms == 0.0).any():
            row = int(np.flatnonzero(norms == 0.0)[0])
            raise ZeroNormEmbedding(f"{bank.style} {name} prompt row {row} has zero norm")
    same = np.all(pos == neg, axis=1)
    if same.any():
        row = int(np.flatnonzero(same)[0])
        raise ConfigError(
            f"{bank.style} prompt bank: positive and negative rows identical for disease {row}"
        )


# ---------------------------------------------------------------------------
# manifest IO
# ---------------------------------------------------------------------------

def _read_blob(path: Path, rows: int, cols: int, what: str) -> np.ndarray:
    if not path.is_file():
        raise MissingFile(f"{what} blob not found: {path}")
    raw = path.read_bytes()
    expected = rows * cols * 4
    if len(raw) != expected:
        raise DimensionMismatch(
            f"{what} blob {path.name}: {len(raw)} bytes, expected {rows}x{cols}x4 = {expected}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(rows, cols).copy()


def _write_blob(path: Path, mat: np.ndarray) -> None:
    path.write_bytes(np.ascontiguousarray(mat, dtype="<f4").tobytes())


def load_manifest(manifest_path) -> dict:
    path = Path(manifest_path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"manifest is not valid JSON: {exc}") from exc
    for key in ("version", "dim", "num_diseases", "disease_names", "splits", "prompt_banks"):
        if key not in manifest:
            raise ConfigError(f"manifest missing key {key!r}")
    return manifest


def load_dataset(manifest_path, split: str = "train") -> tuple[EmbeddingDataset, list[PromptBank]]:
    """Load one split plus all prompt banks from a manifest, fully validated."""
    path = Path(manifest_path)
    manifest = load_manifest(path)
    base = path.parent
    dim = int(manifest["dim"])
    num_diseases = int(manifest["num_diseases"])
    names = list(manifest["disease_names"])

    if split not in manifest["splits"]:
        raise ConfigError(f"manifest has no split {split!r}")
    entry = manifest["splits"][split]
    count = int(entry["count"])
    emb = _read_blob(base / entry["embeddings"], count, dim, f"{split} embeddings")
    lab = _read_blob(base / entry["labels"], count, num_diseases, f"{split} labels")
    dataset = EmbeddingDataset(
        split=split,
        dim=dim,
        num_diseases=num_diseases,
        embeddings=emb,
        labels=lab,
        disease_names=names,
    )

    banks = []
    for bank_entry in manifest["prompt_banks"]:
        style = bank_entry["style"]
        pos = _read_blob(base / bank_entry["positive"], num_diseases, dim, f"{style} positive prompts")
        neg = _read_blob(base / bank_entry["negative"], num_diseases, dim, f"{style} negative prompts")
        bank = PromptBank(style=style, dim=dim, positive=pos, negative=neg)
        validate_prompt_bank(bank, num_diseases)
        banks.append(bank)
    return dataset, banks


def load_bundle(manifest_path) -> tuple[EmbeddingDataset, EmbeddingDataset, dict[str, PromptBank]]:
    """Load both splits and the prompt banks keyed by style."""
    train, banks = load_dataset(manifest_path, "train")
    test, _ = load_dataset(manifest_path, "test")
    return train, test, {bank.style: bank for bank in banks}


def write_bundle(out_dir, train: EmbeddingDataset, test: EmbeddingDataset,
                 banks: list[PromptBank]) -> Path:
    """Write a manifest directory; returns the manifest path.

    Writing then loading reproduces every field bit-exactly (the payload is
    float32 on both sides).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if train.dim != test.dim or train.num_diseases != test.num_diseases:
        raise DimensionMismatch("train/test splits disagree on dim or disease count")

    manifest = {
        "version": MANIFEST_VERSION,
        "dim": train.dim,
        "num_diseases": train.num_diseases,
        "disease_names": list(train.disease_names),
        "splits": {},
        "prompt_banks": [],
    }
    for ds in (train, test):
        emb_name = f"{ds.split}_embeddings.f32"
        lab_name = f"{ds.split}_labels.f32"
        _write_blob(out / emb_name, ds.embeddings)
        _write_blob(out / lab_name, ds.labels)
        manifest["splits"][ds.split] = {
            "embeddings": emb_name,
            "labels": lab_name,
            "count": ds.num_rows,
        }
    for bank in banks:
        validate_prompt_bank(bank, train.num_diseases)
        pos_name = f"prompts_{bank.style}_pos.f32"
        neg_name = f"prompts_{bank.style}_neg.f32"
        _write_blob(out / pos_name, bank.positive)
        _write_blob(out / neg_name, bank.negative)
        manifest["prompt_banks"].append(
            {"style": bank.style, "positive": pos_name, "negative": neg_name}
        )
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

def _partition(indices: list[int], parts: int) -> list[list[int]]:
    """Equal split; remainder rows go one each to the first tasks."""
    n = len(indices)
    base, extra = divmod(n, parts)
    out, start = [], 0
    for t in range(parts):
        size = base + (1 if t < extra else 0)
        out.append(indices[start:start + size])
        start += size
    return out


def build_schedule(dataset: EmbeddingDataset, scenario: str, num_partitions: int = 20,
                   seed: int = 0) -> TaskSchedule:
    """Deterministic task partition for a scenario.

    The row shuffle depends only on (num_rows, seed), never on the scenario,
    so a single-partition data-incremental schedule is identical to the
    joint one under the same seed.
    """
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}")
    n, c = dataset.num_rows, dataset.num_diseases

    if scenario == "zero_shot":
        return TaskSchedule(scenario=scenario, tasks=[], seed=seed, num_rows=0)

    if scenario == "joint":
        parts = 1
    elif scenario in ("class_incremental", "label_incremental"):
        parts = c
    else:
        if num_partitions < 1:
            raise ConfigError(f"num_partitions must be >= 1, got {num_partitions}")
        parts = num_partitions
    if n < parts:
        raise TooFewRows(f"{n} training rows cannot fill {parts} tasks")

    order = list(range(n))
    Stream(seed, "schedule.shuffle").shuffle(order)
    chunks = _partition(order, parts)

    tasks = []
    for t, chunk in enumerate(chunks, start=1):
        mask = np.zeros(c, dtype=np.int8)
        if scenario == "class_incremental":
            mask[t - 1] = 1
        elif scenario == "label_incremental":
            mask[:t] = 1
        else:
            mask[:] = 1
        tasks.append(Task(index=t, image_indices=chunk, label_mask=mask))
    return TaskSchedule(scenario=scenario, tasks=tasks, seed=seed, num_rows=n)
