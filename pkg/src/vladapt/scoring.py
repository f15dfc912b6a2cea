"""Cosine prompt-pair scoring, the masked BCE loss and its gradients.

For image embedding u and per-disease prompt embeddings p_j (positive) and
n_j (negative) the scores are

    s_pos[i,j] = cos(u_i, p_j),   s_neg[i,j] = cos(u_i, n_j)

and the classification logit is their difference z = s_pos - s_neg, pushed
through a sigmoid into binary cross entropy.  Scores live in [-1, 1], so z
is bounded to [-2, 2]; the loss still uses the overflow-safe softplus
formulation.  Diseases whose mask entry is 0 contribute neither loss nor
gradient.  A prediction is "present" when s_pos >= s_neg (ties count as
presence).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask, ShapeMismatch, ZeroNormVector


@dataclass
class BatchScores:
    """Positive/negative cosine scores for a batch, plus their difference."""

    s_pos: np.ndarray  # N x C
    s_neg: np.ndarray  # N x C

    @property
    def logits(self) -> np.ndarray:
        return self.s_pos - self.s_neg

    @property
    def shape(self) -> tuple[int, int]:
        return self.s_pos.shape


def _norms(mat: np.ndarray, what: str) -> np.ndarray:
    norms = np.linalg.norm(mat, axis=1)
    if (norms == 0.0).any():
        row = int(np.flatnonzero(norms == 0.0)[0])
        raise ZeroNormVector(f"{what} row {row} has zero norm")
    return norms


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """cos(u, v) = u.v / (|u| |v|), defined only for nonzero vectors."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1:
        raise ShapeMismatch(f"cosine needs two equal-length vectors, got {u.shape} and {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0:
        raise ZeroNormVector("first vector has zero norm")
    if nv == 0.0:
        raise ZeroNormVector("second vector has zero norm")
    return float(u @ v / (nu * nv))


def score_batch(adapted_images: np.ndarray, adapted_pos: np.ndarray,
                adapted_neg: np.ndarray) -> BatchScores:
    """All pairwise positive/negative cosines between images and prompts."""
    U = np.asarray(adapted_images, dtype=np.float64)
    P = np.asarray(adapted_pos, dtype=np.float64)
    N = np.asarray(adapted_neg, dtype=np.float64)
    if U.ndim != 2 or P.ndim != 2 or N.ndim != 2:
        raise ShapeMismatch("score_batch expects 2-d matrices")
    if not (U.shape[1] == P.shape[1] == N.shape[1]):
        raise ShapeMismatch(
            f"width mismatch: images {U.shape[1]}, positive {P.shape[1]}, negative {N.shape[1]}"
        )
    if P.shape[0] != N.shape[0]:
        raise ShapeMismatch("positive/negative prompt counts differ")
    Un = U / _norms(U, "image")[:, None]
    Pn = P / _norms(P, "positive prompt")[:, None]
    Nn = N / _norms(N, "negative prompt")[:, None]
    return BatchScores(s_pos=Un @ Pn.T, s_neg=Un @ Nn.T)


def _softplus(z: np.ndarray) -> np.ndarray:
    # log(1 + e^z) without overflow for large |z|
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def bce_loss(scores: BatchScores, labels: np.ndarray, mask: np.ndarray,
             normalize_per_disease: bool = False) -> tuple[float, np.ndarray]:
    """Masked binary cross entropy over score differences.

    loss = -(1/N) sum_i sum_{j: mask_j=1} [y log s(z) + (1-y) log(1-s(z))]

    Returns (loss, dloss/dlogits); the gradient is (s(z_ij) - y_ij)/N on
    masked entries and 0 elsewhere.  ``normalize_per_disease`` additionally
    divides by the masked-disease count (off by default: the batch-size-only
    normalization is the reference behavior).
    """
    y = np.asarray(labels, dtype=np.float64)
    m = np.asarray(mask, dtype=np.float64)
    z = scores.logits
    if y.shape != z.shape:
        raise ShapeMismatch(f"labels shape {y.shape} != scores shape {z.shape}")
    if m.shape != (z.shape[1],):
        raise ShapeMismatch(f"mask shape {m.shape} != ({z.shape[1]},)")
    if not m.any():
        raise EmptyMask("mask selects no diseases")
    n = z.shape[0]
    denom = float(n) * (float(m.sum()) if normalize_per_disease else 1.0)
    # y*softplus(-z) + (1-y)*softplus(z) == -[y log s(z) + (1-y) log(1-s(z))]
    per_entry = y * _softplus(-z) + (1.0 - y) * _softplus(z)
    loss = float((per_entry * m[None, :]).sum() / denom)
    sigma = 1.0 / (1.0 + np.exp(-z))
    grad = (sigma - y) * m[None, :] / denom
    return loss, grad


def predict(scores: BatchScores) -> np.ndarray:
    """Presence prediction per (image, disease): s_pos >= s_neg."""
    return scores.s_pos >= scores.s_neg


def backprop_scores(adapted_images: np.ndarray, adapted_pos: np.ndarray,
                    adapted_neg: np.ndarray, dloss_dlogits: np.ndarray
                    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact gradients of the loss through z = s_pos - s_neg and both cosines.

    Uses d cos(u,v)/du = (v_hat - cos * u_hat) / |u|.  Image gradients
    accumulate over all diseases with nonzero upstream gradient; prompt
    gradients accumulate over all batch images.
    """
    U = np.asarray(adapted_images, dtype=np.float64)
    P = np.asarray(adapted_pos, dtype=np.float64)
    N = np.asarray(adapted_neg, dtype=np.float64)
    G = np.asarray(dloss_dlogits, dtype=np.float64)
    if G.shape != (U.shape[0], P.shape[0]):
        raise ShapeMismatch(f"gradient shape {G.shape} != ({U.shape[0]}, {P.shape[0]})")
    if not (U.shape[1] == P.shape[1] == N.shape[1]) or P.shape != N.shape:
        raise ShapeMismatch("matrix widths inconsistent with a score_batch call")

    nu = _norms(U, "image")
    npos = _norms(P, "positive prompt")
    nneg = _norms(N, "negative prompt")
    Un = U / nu[:, None]
    Pn = P / npos[:, None]
    Nn = N / nneg[:, None]
    s_pos = Un @ Pn.T
    s_neg = Un @ Nn.T

    # d/dU: sum_j G_ij [(Pn_j - s_pos_ij Un_i) - (Nn_j - s_neg_ij Un_i)] / |u_i|
    coeff = (G * (s_pos - s_neg)).sum(axis=1)
    dU = (G @ Pn - G @ Nn - coeff[:, None] * Un) / nu[:, None]
    # d/dP_j: sum_i G_ij (Un_i - s_pos_ij Pn_j) / |p_j|
    dP = (G.T @ Un - (G * s_pos).sum(axis=0)[:, None] * Pn) / npos[:, None]
    # d/dN_j: -sum_i G_ij (Un_i - s_neg_ij Nn_j) / |n_j|
    dN = -(G.T @ Un - (G * s_neg).sum(axis=0)[:, None] * Nn) / nneg[:, None]
    return dU, dP, dN
