"""Training protocols: zero-shot, joint, and the three incremental scenarios.

Each run is exemplar-free: once a task finishes, its rows are never read
again.  For every seed the adaptor initialization stream and the shuffle
streams are derived independently from the run seed, so the initial
parameters are identical across scenarios.  After each task the model is
evaluated on the entire test set over all diseases, trained or not.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .adaptors import Adaptor, AdaptorConfig, AdaptorSet, make_adaptor_set
from .datamodel import EmbeddingDataset, PromptBank, build_schedule
from .errors import ConfigError, ScheduleMismatch
from .metrics import AucResult, auc, mean_auc
from .optimizer import AdamHyper, AdamState, adam_step
from .rng import Stream
from .scoring import backprop_scores, bce_loss, score_batch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    adaptor: AdaptorConfig = field(default_factory=AdaptorConfig)
    scenario: str = "joint"
    prompt_style: str = "template"
    epochs_per_task: int = 10
    batch_size: int = 64
    seeds: tuple[int, ...] = (1, 2, 3)
    num_partitions: int = 20
    optimizer: AdamHyper = field(default_factory=AdamHyper)
    normalize_per_disease: bool = False
    reset_optimizer_per_task: bool = True

    def __post_init__(self):
        if self.epochs_per_task < 1:
            raise ConfigError("epochs_per_task must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.seeds:
            raise ConfigError("need at least one seed")


@dataclass
class TaskResult:
    task_index: int
    mean_auc: float
    per_disease_auc: list[float | None]
    excluded: int
    train_loss_trace: list[float]

    @property
    def final_train_loss(self) -> float | None:
        return self.train_loss_trace[-1] if self.train_loss_trace else None


@dataclass
class SeedResult:
    seed: int
    tasks: list[TaskResult]
    final_checksum: str


@dataclass
class RunReport:
    scenario: str
    prompt_style: str
    disease_names: list[str]
    seeds: list[SeedResult]
    aggregate: list[dict]  # per task: {task_index, mean_auc_mean, mean_auc_std}
    checksum: str
    config: dict = field(default_factory=dict)


def _checksum_params(aset: AdaptorSet | None) -> str:
    digest = hashlib.sha256()
    if aset is not None:
        for role, adaptor in aset.trainable():
            for pname in adaptor.param_names:
                digest.update(role.encode())
                digest.update(pname.encode())
                digest.update(np.ascontiguousarray(adaptor.params[pname], dtype="<f8").tobytes())
    return digest.hexdigest()


def evaluate(aset: AdaptorSet | None, dataset_test: EmbeddingDataset,
             bank: PromptBank) -> tuple[float, list[AucResult], int]:
    """Mean and per-disease AUC over the entire test set.

    The ranking statistic per disease is the score difference
    s_pos - s_neg.  ``aset=None`` scores the raw embeddings (zero-shot).
    Diseases with single-class test labels have no defined AUC; they are
    excluded from the mean with a warning.
    """
    if bank.num_diseases != dataset_test.num_diseases or bank.dim != dataset_test.dim:
        raise ScheduleMismatch("prompt bank does not match the test dataset")
    images = dataset_test.embeddings.astype(np.float64)
    pos = bank.positive.astype(np.float64)
    neg = bank.negative.astype(np.float64)
    if aset is not None:
        images = aset.apply_image(images)
        pos = aset.apply_text(pos)
        neg = aset.apply_text(neg)
    z = score_batch(images, pos, neg).logits
    labels = dataset_test.labels
    per_disease = [auc(z[:, j], labels[:, j].astype(np.int64))
                   for j in range(dataset_test.num_diseases)]
    mean, excluded = mean_auc(per_disease)
    if excluded:
        log.warning("evaluation excluded %d single-class disease(s) from the mean", excluded)
    return mean, per_disease, excluded


def _batches(order: list[int], batch_size: int):
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def _train_task(aset: AdaptorSet, adam: AdamState, dataset: EmbeddingDataset,
                bank: PromptBank, task, config: RunConfig, seed: int) -> list[float]:
    """Train one task; returns the per-epoch mean loss trace."""
    masked = np.flatnonzero(np.asarray(task.label_mask) == 1)
    if masked.size == 0:
        raise ScheduleMismatch(f"task {task.index} masks out every disease")
    # prompts of unmasked diseases are never forwarded during training
    pos = bank.positive[masked].astype(np.float64)
    neg = bank.negative[masked].astype(np.float64)
    submask = np.ones(masked.size)
    params, names = [], []
    for role, adaptor in aset.trainable():
        for pname in adaptor.param_names:
            params.append(adaptor.params[pname])
            names.append((role, adaptor, pname))

    trace = []
    for epoch in range(1, config.epochs_per_task + 1):
        order = list(task.image_indices)
        Stream(seed, f"epoch-shuffle:t{task.index}:e{epoch}").shuffle(order)
        loss_sum, sample_count = 0.0, 0
        for batch in _batches(order, config.batch_size):
            emb32, lab32 = dataset.rows(batch)
            X = emb32.astype(np.float64)
            y = lab32[:, masked].astype(np.float64)

            Xa, cache_img = aset.forward_image(X)
            Pa, cache_pos = aset.forward_text(pos)
            Na, cache_neg = aset.forward_text(neg)
            scores = score_batch(Xa, Pa, Na)
            loss, dz = bce_loss(scores, y, submask,
                                normalize_per_disease=config.normalize_per_disease)
            dXa, dPa, dNa = backprop_scores(Xa, Pa, Na, dz)

            grad_map: dict[int, np.ndarray] = {}

            def _accumulate(adaptor: Adaptor | None, cache, upstream):
                if adaptor is None:
                    return
                grads, _ = adaptor.backward(cache, upstream)
                for pname, g in grads.items():
                    key = id(adaptor.params[pname])
                    grad_map[key] = grad_map.get(key, 0.0) + g

            _accumulate(aset.image, cache_img, dXa)
            _accumulate(aset.text, cache_pos, dPa)
            _accumulate(aset.text, cache_neg, dNa)

            grads = [grad_map[id(p)] for p in params]
            adam_step(adam, params, grads)

            loss_sum += loss * len(batch)
            sample_count += len(batch)
        trace.append(loss_sum / sample_count)
    return trace


def _run_seed(config: RunConfig, seed: int, train_ds: EmbeddingDataset,
              test_ds: EmbeddingDataset, bank: PromptBank) -> tuple[SeedResult, AdaptorSet | None, AdamState | None]:
    if config.scenario == "zero_shot":
        mean, per_disease, excluded = evaluate(None, test_ds, bank)
        result = TaskResult(
            task_index=0,
            mean_auc=mean,
            per_disease_auc=[r.value for r in per_disease],
            excluded=excluded,
            train_loss_trace=[],
        )
        return SeedResult(seed=seed, tasks=[result],
                          final_checksum=_checksum_params(None)), None, None

    aset = make_adaptor_set(replace(config.adaptor, seed=seed))
    schedule = build_schedule(train_ds, config.scenario, config.num_partitions, seed)
    adam: AdamState | None = None
    results = []
    for task in schedule.tasks:
        if adam is None or config.reset_optimizer_per_task:
            flat = [p for _, a in aset.trainable() for p in a.param_list()]
            adam = AdamState.for_params(flat, config.optimizer)
        trace = _train_task(aset, adam, train_ds, bank, task, config, seed)
        mean, per_disease, excluded = evaluate(aset, test_ds, bank)
        results.append(TaskResult(
            task_index=task.index,
            mean_auc=mean,
            per_disease_auc=[r.value for r in per_disease],
            excluded=excluded,
            train_loss_trace=trace,
        ))
    return SeedResult(seed=seed, tasks=results,
                      final_checksum=_checksum_params(aset)), aset, adam


def run(config: RunConfig, train_ds: EmbeddingDataset, test_ds: EmbeddingDataset,
        banks: dict[str, PromptBank], config_dump: dict | None = None
        ) -> tuple[RunReport, dict[int, tuple[AdaptorSet | None, AdamState | None]]]:
    """Execute one full scenario over all seeds.

    Returns the report and, per seed, the final adaptor set and optimizer
    state (both None for zero-shot).  Deterministic: identical inputs
    produce an identical report, bit for bit.
    """
    if config.prompt_style not in banks:
        raise ConfigError(
            f"prompt style {config.prompt_style!r} not in manifest "
            f"(available: {sorted(banks)})"
        )
    bank = banks[config.prompt_style]
    seed_results = []
    final_sets: dict[int, tuple[AdaptorSet | None, AdamState | None]] = {}
    for seed in config.seeds:
        seed_result, aset, adam = _run_seed(config, seed, train_ds, test_ds, bank)
        seed_results.append(seed_result)
        final_sets[seed] = (aset, adam)

    task_count = len(seed_results[0].tasks)
    if any(len(sr.tasks) != task_count for sr in seed_results):
        raise ScheduleMismatch("seeds produced differing task counts")
    aggregate = []
    for k in range(task_count):
        values = np.array([sr.tasks[k].mean_auc for sr in seed_results])
        std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        aggregate.append({
            "task_index": seed_results[0].tasks[k].task_index,
            "mean_auc_mean": float(values.mean()),
            "mean_auc_std": std,
        })
    digest = hashlib.sha256()
    for sr in seed_results:
        digest.update(sr.final_checksum.encode())
    report = RunReport(
        scenario=config.scenario,
        prompt_style=config.prompt_style,
        disease_names=list(test_ds.disease_names),
        seeds=seed_results,
        aggregate=aggregate,
        checksum=digest.hexdigest(),
        config=config_dump or {},
    )
    return report, final_sets


# ---------------------------------------------------------------------------
# report serialization
# ---------------------------------------------------------------------------

def report_to_json(report: RunReport) -> str:
    payload = {
        "scenario": report.scenario,
        "prompt_style": report.prompt_style,
        "disease_names": report.disease_names,
        "seeds": [
            {
                "seed": sr.seed,
                "final_checksum": sr.final_checksum,
                "tasks": [
                    {
                        "task_index": t.task_index,
                        "mean_auc": t.mean_auc,
                        "per_disease_auc": t.per_disease_auc,
                        "excluded": t.excluded,
                        "train_loss_trace": t.train_loss_trace,
                    }
                    for t in sr.tasks
                ],
            }
            for sr in report.seeds
        ],
        "aggregate": report.aggregate,
        "checksum": report.checksum,
        "config": report.config,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> RunReport:
    payload = json.loads(text)
    seeds = [
        SeedResult(
            seed=entry["seed"],
            final_checksum=entry["final_checksum"],
            tasks=[
                TaskResult(
                    task_index=t["task_index"],
                    mean_auc=t["mean_auc"],
                    per_disease_auc=t["per_disease_auc"],
                    excluded=t["excluded"],
                    train_loss_trace=t["train_loss_trace"],
                )
                for t in entry["tasks"]
            ],
        )
        for entry in payload["seeds"]
    ]
    return RunReport(
        scenario=payload["scenario"],
        prompt_style=payload["prompt_style"],
        disease_names=payload["disease_names"],
        seeds=seeds,
        aggregate=payload["aggregate"],
        checksum=payload["checksum"],
        config=payload.get("config", {}),
    )


def report_to_csv(report: RunReport) -> str:
    """Fixed column order: seed, scenario, task, mean_auc, auc_d1..auc_dC, final_train_loss."""
    c = len(report.disease_names)
    header = ["seed", "scenario", "task", "mean_auc"]
    header += [f"auc_d{j + 1}" for j in range(c)]
    header.append("final_train_loss")
    lines = [",".join(header)]
    for sr in report.seeds:
        for t in sr.tasks:
            row = [str(sr.seed), report.scenario, str(t.task_index), repr(t.mean_auc)]
            row += ["" if v is None else repr(v) for v in t.per_disease_auc]
            row.append("" if t.final_train_loss is None else repr(t.final_train_loss))
            lines.append(",".join(row))
    return "\n".join(lines) + "\n"
