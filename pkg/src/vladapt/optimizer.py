"""Adam over lists of parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteGradient, ShapeMismatch


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    """Step count and per-tensor first/second moments."""

    hyper: AdamHyper
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: list[np.ndarray], hyper: AdamHyper | None = None) -> "AdamState":
        hyper = hyper or AdamHyper()
        return cls(
            hyper=hyper,
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
        )


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray]) -> tuple[AdamState, list[np.ndarray]]:
    """One bias-corrected Adam update, in place on ``params``.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
    theta <- theta - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeMismatch("params/grads/state length mismatch")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient(
                f"non-finite gradient (max |g| over finite entries: "
                f"{np.abs(g[np.isfinite(g)]).max() if np.isfinite(g).any() else 'n/a'})"
            )
    h = state.hyper
    state.t += 1
    bc1 = 1.0 - h.beta1 ** state.t
    bc2 = 1.0 - h.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= h.beta1
        m += (1.0 - h.beta1) * g
        v *= h.beta2
        v += (1.0 - h.beta2) * (g * g)
        p -= h.lr * (m / bc1) / (np.sqrt(v / bc2) + h.eps)
    return state, params
