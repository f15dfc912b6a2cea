"""Deterministic synthetic embedding world.

Generates a desk-scale dataset in the manifest format where each disease
owns one direction of an orthonormal frame.  An image embedding is

    x_i = base + kappa * sum_j (2 y_ij - 1) d_j + sigma * noise_i

so absence is as informative as presence (the sign flips).  Prompt banks
interpolate between the true directions and random unit vectors with a
per-style alignment knob alpha: positive_j = unit(alpha d_j + (1-alpha) g+),
negative_j = unit(-alpha d_j + (1-alpha) g-).  The random style ignores the
frame entirely (both rows are independent random unit vectors), which is
equivalent to alpha = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datamodel import EmbeddingDataset, PromptBank, write_bundle
from .errors import ConfigError
from .rng import Stream

DEFAULT_ALIGNMENT = {"template": 0.95, "generative": 0.7, "random": 0.0}


@dataclass
class SynthConfig:
    dim: int = 64
    num_diseases: int = 5
    n_train: int = 2000
    n_test: int = 1000
    disease_prevalence: list[float] | None = None  # default 0.3 each
    image_noise_sigma: float = 0.7
    kappa: float = 0.5
    alignment_template: float = DEFAULT_ALIGNMENT["template"]
    alignment_generative: float = DEFAULT_ALIGNMENT["generative"]
    label_correlation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.num_diseases < 1:
            raise ConfigError(f"num_diseases must be >= 1, got {self.num_diseases}")
        if self.num_diseases > self.dim:
            raise ConfigError("cannot fit more orthonormal disease directions than dim")
        if self.n_train < 1 or self.n_test < 1:
            raise ConfigError("n_train and n_test must be >= 1")
        if self.disease_prevalence is None:
            self.disease_prevalence = [0.3] * self.num_diseases
        if len(self.disease_prevalence) != self.num_diseases:
            raise ConfigError("disease_prevalence length != num_diseases")
        if not all(0.0 < p < 1.0 for p in self.disease_prevalence):
            raise ConfigError("prevalences must lie strictly inside (0, 1)")
        if self.image_noise_sigma < 0.0:
            raise ConfigError("image_noise_sigma must be >= 0")
        if not 0.0 <= self.label_correlation < 1.0:
            raise ConfigError("label_correlation must lie in [0, 1)")
        for name in ("alignment_template", "alignment_generative"):
            a = getattr(self, name)
            if not 0.0 <= a <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {a}")
        if self.kappa <= 0.0:
            raise ConfigError("kappa must be > 0")

    @property
    def disease_names(self) -> list[str]:
        return [f"disease_{k + 1}" for k in range(self.num_diseases)]

    def alignment_for(self, style: str) -> float:
        if style == "template":
            return self.alignment_template
        if style == "generative":
            return self.alignment_generative
        if style == "random":
            return 0.0
        raise ConfigError(f"unknown prompt style {style!r}")


def _unit(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ConfigError("degenerate zero vector drawn")
    return vec / norm


def orthonormal_directions(dim: int, count: int, stream: Stream) -> np.ndarray:
    """Random orthonormal rows via twice-applied Gram-Schmidt."""
    raw = stream.normal_array((count, dim))
    basis = np.empty_like(raw)
    for i in range(count):
        v = raw[i].copy()
        for _ in range(2):  # second pass keeps the Gram matrix within 1e-10 of I
            for j in range(i):
                v -= (v @ basis[j]) * basis[j]
        basis[i] = _unit(v)
    return basis


def _phi(z: np.ndarray) -> np.ndarray:
    """Standard normal CDF, elementwise."""
    flat = np.asarray(z, dtype=np.float64).ravel()
    out = np.array([0.5 * (1.0 + math.erf(val / math.sqrt(2.0))) for val in flat])
    return out.reshape(np.shape(z))


def _sample_labels(config: SynthConfig, split: str, n: int) -> np.ndarray:
    """Gaussian-copula Bernoulli draws with equicorrelation rho."""
    stream = Stream(config.seed, f"synth:labels:{split}")
    rho = config.label_correlation
    shared = stream.normal_array((n, 1))
    own = stream.normal_array((n, config.num_diseases))
    z = math.sqrt(rho) * shared + math.sqrt(1.0 - rho) * own
    u = _phi(z)
    prev = np.asarray(config.disease_prevalence)
    return (u < prev[None, :]).astype(np.float32)


def _make_split(config: SynthConfig, split: str, n: int, directions: np.ndarray,
                base: np.ndarray) -> EmbeddingDataset:
    labels = _sample_labels(config, split, n)
    signs = 2.0 * labels.astype(np.float64) - 1.0
    noise = Stream(config.seed, f"synth:noise:{split}").normal_array((n, config.dim))
    emb = base[None, :] + config.kappa * (signs @ directions) + config.image_noise_sigma * noise
    return EmbeddingDataset(
        split=split,
        dim=config.dim,
        num_diseases=config.num_diseases,
        embeddings=emb.astype(np.float32),
        labels=labels,
        disease_names=config.disease_names,
    )


def _make_bank(config: SynthConfig, style: str, directions: np.ndarray) -> PromptBank:
    stream = Stream(config.seed, f"synth:prompts:{style}")
    alpha = config.alignment_for(style)
    c, dim = directions.shape
    pos = np.empty((c, dim))
    neg = np.empty((c, dim))
    for j in range(c):
        g_pos = _unit(stream.normal_array(dim))
        g_neg = _unit(stream.normal_array(dim))
        if style == "random":
            pos[j] = g_pos
            neg[j] = g_neg
        else:
            pos[j] = _unit(alpha * directions[j] + (1.0 - alpha) * g_pos)
            neg[j] = _unit(-alpha * directions[j] + (1.0 - alpha) * g_neg)
    return PromptBank(style=style, dim=dim,
                      positive=pos.astype(np.float32), negative=neg.astype(np.float32))


def generate(config: SynthConfig, out_dir) -> Path:
    """Write a full synthetic world; returns the manifest path."""
    directions = orthonormal_directions(config.dim, config.num_diseases,
                                        Stream(config.seed, "synth:directions"))
    base = _unit(Stream(config.seed, "synth:base").normal_array(config.dim))

    train = _make_split(config, "train", config.n_train, directions, base)
    test = _make_split(config, "test", config.n_test, directions, base)
    banks = [_make_bank(config, style, directions)
             for style in ("template", "generative", "random")]
    return write_bundle(Path(out_dir), train, test, banks)
