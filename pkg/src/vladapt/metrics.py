"""ROC-AUC with tie handling, aggregation, and curve rendering.

AUC uses the rank (Mann-Whitney) formulation with average ranks for tied
scores: AUC = (sum of positive ranks - P(P+1)/2) / (P*Q), which equals
(wins + 0.5 * ties) / (P*Q) over all positive/negative pairs.  A disease
whose labels are single-class has no defined AUC and is reported as
missing.  Curves are emitted as a standalone SVG plus the underlying CSV;
no plotting library is involved.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AllUndefined, EmptyReport, ShapeMismatch

log = logging.getLogger(__name__)


@dataclass
class AucResult:
    value: float | None
    num_pos: int
    num_neg: int
    tie_groups: int  # score groups containing more than one sample

    @property
    def defined(self) -> bool:
        return self.value is not None


def _average_ranks(scores: np.ndarray) -> tuple[np.ndarray, int]:
    """1-based ranks with ties averaged; also counts tied groups."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    tie_groups = 0
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        # positions i..j (0-based) share the average of ranks i+1..j+1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        if j > i:
            tie_groups += 1
        i = j + 1
    return ranks, tie_groups


def auc(scores, labels) -> AucResult:
    """Area under the ROC curve of ``scores`` against binary ``labels``."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise ShapeMismatch(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if len(s) < 2:
        raise ShapeMismatch("AUC needs at least two samples")
    pos = y == 1
    p = int(pos.sum())
    q = len(y) - p
    ranks, tie_groups = _average_ranks(s)
    if p == 0 or q == 0:
        return AucResult(value=None, num_pos=p, num_neg=q, tie_groups=tie_groups)
    value = (ranks[pos].sum() - p * (p + 1) / 2.0) / (p * q)
    return AucResult(value=float(value), num_pos=p, num_neg=q, tie_groups=tie_groups)


def mean_auc(per_disease: list[AucResult]) -> tuple[float, int]:
    """Arithmetic mean over defined AUCs; returns (mean, excluded count)."""
    defined = [r.value for r in per_disease if r.defined]
    excluded = len(per_disease) - len(defined)
    if not defined:
        raise AllUndefined("every per-disease AUC is undefined")
    if excluded:
        log.warning("mean AUC excludes %d undefined disease(s)", excluded)
    return float(np.mean(defined)), excluded


# ---------------------------------------------------------------------------
# curve rendering (standalone SVG + CSV)
# ---------------------------------------------------------------------------

_W, _H = 720, 440
_ML, _MR, _MT, _MB = 64, 24, 24, 48

_SEED_COLORS = ("#9ecae1", "#a1d99b", "#fdae6b", "#bcbddc", "#fc9272", "#c7e9c0")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _xy(task: float, aucv: float, tmin: int, tmax: int) -> tuple[float, float]:
    span = max(tmax - tmin, 1)
    x = _ML + (task - tmin) / span * (_W - _ML - _MR)
    y = _MT + (1.0 - aucv) * (_H - _MT - _MB)
    return x, y


def render_curves(report, out_path, baseline: float | None = None) -> Path:
    """Emit mean-AUC-by-task curves for a run report.

    Thin polylines: one per seed.  Thick polyline: cross-seed mean.
    Optional horizontal reference line at ``baseline``.  A companion CSV
    with the plotted points is written next to the SVG.
    """
    if not report.seeds or not report.seeds[0].tasks:
        raise EmptyReport("report contains no evaluation points")
    out = Path(out_path)

    task_index = [t.task_index for t in report.seeds[0].tasks]
    tmin, tmax = min(task_index), max(task_index)
    per_seed = {sr.seed: [t.mean_auc for t in sr.tasks] for sr in report.seeds}
    means = [float(np.mean([per_seed[s][k] for s in per_seed])) for k in range(len(task_index))]

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}" font-family="sans-serif" font-size="12">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    # axes and y ticks at 0, .25, .5, .75, 1
    x0, y0 = _ML, _H - _MB
    x1, y1 = _W - _MR, _MT
    parts.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>')
    parts.append(f'<line class="axis" x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>')
    for tick in (0.0, 0.25, 0.5, 0.75, 1.0):
        _, ty = _xy(tmin, tick, tmin, tmax)
        parts.append(f'<line x1="{x0 - 4}" y1="{_fmt(ty)}" x2="{x0}" y2="{_fmt(ty)}" stroke="black"/>')
        parts.append(f'<text x="{x0 - 8}" y="{_fmt(ty + 4)}" text-anchor="end">{tick:g}</text>')
    for k, task in enumerate(task_index):
        tx, _ = _xy(task, 0.0, tmin, tmax)
        parts.append(f'<line x1="{_fmt(tx)}" y1="{y0}" x2="{_fmt(tx)}" y2="{y0 + 4}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(tx)}" y="{y0 + 18}" text-anchor="middle">{task}</text>')
    parts.append(f'<text x="{(x0 + x1) // 2}" y="{_H - 10}" text-anchor="middle">task</text>')
    parts.append(
        f'<text x="16" y="{(y0 + y1) // 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) // 2})">mean AUC</text>'
    )

    if baseline is not None:
        _, by = _xy(tmin, baseline, tmin, tmax)
        parts.append(
            f'<line class="baseline" x1="{x0}" y1="{_fmt(by)}" x2="{x1}" y2="{_fmt(by)}" '
            f'stroke="#555" stroke-dasharray="6,4"/>'
        )

    for k, (seed, values) in enumerate(sorted(per_seed.items())):
        pts = " ".join(
            f"{_fmt(px)},{_fmt(py)}"
            for px, py in (_xy(t, v, tmin, tmax) for t, v in zip(task_index, values))
        )
        color = _SEED_COLORS[k % len(_SEED_COLORS)]
        parts.append(
            f'<polyline class="seed-line" data-seed="{seed}" fill="none" '
            f'stroke="{color}" stroke-width="1" points="{pts}"/>'
        )
    mean_pts = " ".join(
        f"{_fmt(px)},{_fmt(py)}"
        for px, py in (_xy(t, v, tmin, tmax) for t, v in zip(task_index, means))
    )
    parts.append(
        f'<polyline class="mean-line" fill="none" stroke="#08519c" '
        f'stroke-width="3" points="{mean_pts}"/>'
    )
    parts.append("</svg>")

    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(parts) + "\n", encoding="utf-8")

    seeds_sorted = sorted(per_seed)
    csv_lines = ["task," + ",".join(f"seed_{s}" for s in seeds_sorted) + ",mean"]
    for k, task in enumerate(task_index):
        row = [str(task)] + [repr(per_seed[s][k]) for s in seeds_sorted] + [repr(means[k])]
        csv_lines.append(",".join(row))
    out.with_suffix(".csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")
    return out
