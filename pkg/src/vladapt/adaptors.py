"""Trainable adaptor networks applied on top of frozen embeddings.

An adaptor maps a dim-vector to a dim-vector (output width always equals
input width).  Two kinds exist: a dense affine layer and a one-hidden-layer
relu MLP.  Placements: image_only, text_only, shared (one parameter store
serving both paths) and both (two independent stores).  All parameters and
activations are float64; the file format stays float32 only for datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, IdentityInitInfeasible, ShapeMismatch, StaleCache
from .rng import Stream

KINDS = ("dense", "mlp")
PLACEMENTS = ("image_only", "text_only", "shared", "both")
INITS = ("scaled_uniform", "identity")


@dataclass(frozen=True)
class AdaptorConfig:
    kind: str = "mlp"
    placement: str = "both"
    dim: int = 64
    hidden_dim: int | None = None  # mlp only; defaults to dim
    activation: str = "relu"
    init: str = "scaled_uniform"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown adaptor kind {self.kind!r}")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"unknown placement {self.placement!r}")
        if self.init not in INITS:
            raise ConfigError(f"unknown init {self.init!r}")
        if self.activation != "relu":
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.dim < 2:
            raise ConfigError(f"dim must be >= 2, got {self.dim}")
        if self.kind == "mlp" and self.resolved_hidden < 1:
            raise ConfigError(f"hidden_dim must be >= 1, got {self.hidden_dim}")

    @property
    def resolved_hidden(self) -> int:
        return self.dim if self.hidden_dim is None else self.hidden_dim


class Adaptor:
    """One adaptor with parameters and analytic forward/backward.

    dense:  y = W x + b                      W[dim,dim], b[dim]
    mlp:    y = W2 relu(W1 x + b1) + b2      W1[h,dim], b1[h], W2[dim,h], b2[dim]
    """

    def __init__(self, kind: str, dim: int, params: dict[str, np.ndarray],
                 hidden_dim: int | None = None):
        self.kind = kind
        self.dim = dim
        self.hidden_dim = hidden_dim
        self.params = params
        for name in self.param_names:
            if name not in params:
                raise ShapeMismatch(f"missing parameter {name!r}")
            if not np.isfinite(params[name]).all():
                raise ConfigError(f"parameter {name!r} contains non-finite values")
        self._check_shapes()

    @property
    def param_names(self) -> tuple[str, ...]:
        return ("W", "b") if self.kind == "dense" else ("W1", "b1", "W2", "b2")

    def param_list(self) -> list[np.ndarray]:
        return [self.params[name] for name in self.param_names]

    def _check_shapes(self):
        d = self.dim
        if self.kind == "dense":
            expect = {"W": (d, d), "b": (d,)}
        else:
            h = self.hidden_dim
            expect = {"W1": (h, d), "b1": (h,), "W2": (d, h), "b2": (d,)}
        for name, shape in expect.items():
            if self.params[name].shape != shape:
                raise ShapeMismatch(
                    f"{name} has shape {self.params[name].shape}, expected {shape}"
                )

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, dict]:
        """Apply the adaptor; returns (output, cache for backward).

        Accepts a single dim-vector or an (n, dim) batch.
        """
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        X = x[None, :] if single else x
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ShapeMismatch(f"input width {X.shape[-1]} != adaptor dim {self.dim}")
        if not np.isfinite(X).all():
            raise ShapeMismatch("input contains non-finite values")
        cache = {"X": X, "single": single}
        if self.kind == "dense":
            Y = X @ self.params["W"].T + self.params["b"]
        else:
            H1 = X @ self.params["W1"].T + self.params["b1"]
            cache["H1"] = H1
            Y = np.maximum(H1, 0.0) @ self.params["W2"].T + self.params["b2"]
        return (Y[0] if single else Y), cache

    def backward(self, cache: dict, grad_out: np.ndarray) -> tuple[dict[str, np.ndarray], np.ndarray]:
        """Exact gradients given d(objective)/d(output).

        Returns (per-parameter gradients, gradient w.r.t. the input).
        """
        g = np.asarray(grad_out, dtype=np.float64)
        single = cache.get("single", False)
        G = g[None, :] if single else g
        X = cache["X"]
        if X.shape[1] != self.dim:
            raise StaleCache(f"cache width {X.shape[1]} != adaptor dim {self.dim}")
        if G.shape != X.shape[:1] + (self.dim,):
            raise ShapeMismatch(f"grad_out shape {G.shape} does not match forward batch")
        if self.kind == "dense":
            grads = {"W": G.T @ X, "b": G.sum(axis=0)}
            grad_in = G @ self.params["W"]
        else:
            if "H1" not in cache or cache["H1"].shape != (X.shape[0], self.hidden_dim):
                raise StaleCache("cache pre-activations inconsistent with adaptor")
            H1 = cache["H1"]
            A1 = np.maximum(H1, 0.0)
            GH = (G @ self.params["W2"]) * (H1 > 0.0)
            grads = {
                "W1": GH.T @ X,
                "b1": GH.sum(axis=0),
                "W2": G.T @ A1,
                "b2": G.sum(axis=0),
            }
            grad_in = GH @ self.params["W1"]
        return grads, (grad_in[0] if single else grad_in)


@dataclass
class AdaptorSet:
    """Image/text adaptor pair under a placement policy.

    Absent adaptors are identity paths; ``shared`` aliases one Adaptor
    object on both paths so parameter mutations are visible from either.
    """

    placement: str
    image: Adaptor | None = None
    text: Adaptor | None = None

    def forward_image(self, x: np.ndarray) -> tuple[np.ndarray, dict | None]:
        if self.image is None:
            return np.asarray(x, dtype=np.float64), None
        return self.image.forward(x)

    def forward_text(self, x: np.ndarray) -> tuple[np.ndarray, dict | None]:
        if self.text is None:
            return np.asarray(x, dtype=np.float64), None
        return self.text.forward(x)

    def apply_image(self, x: np.ndarray) -> np.ndarray:
        return self.forward_image(x)[0]

    def apply_text(self, x: np.ndarray) -> np.ndarray:
        return self.forward_text(x)[0]

    def trainable(self) -> list[tuple[str, Adaptor]]:
        """Unique trainable adaptors; the shared store appears once."""
        if self.placement == "shared":
            return [("shared", self.image)]
        out = []
        if self.image is not None:
            out.append(("image", self.image))
        if self.text is not None:
            out.append(("text", self.text))
        return out


def _init_params(config: AdaptorConfig, role: str) -> dict[str, np.ndarray]:
    d = config.dim
    if config.kind == "dense":
        if config.init == "identity":
            return {"W": np.eye(d), "b": np.zeros(d)}
        stream = Stream(config.seed, f"adaptor-init:{role}")
        a = 1.0 / np.sqrt(d)
        return {"W": stream.uniform_range(-a, a, (d, d)), "b": np.zeros(d)}
    h = config.resolved_hidden
    if config.init == "identity":
        # relu(x) - relu(-x) == x, needs the [I; -I] lifting
        if h < 2 * d:
            raise IdentityInitInfeasible(
                f"identity mlp init needs hidden_dim >= {2 * d}, got {h}"
            )
        W1 = np.zeros((h, d))
        W1[:d] = np.eye(d)
        W1[d:2 * d] = -np.eye(d)
        W2 = np.zeros((d, h))
        W2[:, :d] = np.eye(d)
        W2[:, d:2 * d] = -np.eye(d)
        return {"W1": W1, "b1": np.zeros(h), "W2": W2, "b2": np.zeros(d)}
    stream = Stream(config.seed, f"adaptor-init:{role}")
    a1 = 1.0 / np.sqrt(d)
    a2 = 1.0 / np.sqrt(h)
    return {
        "W1": stream.uniform_range(-a1, a1, (h, d)),
        "b1": np.zeros(h),
        "W2": stream.uniform_range(-a2, a2, (d, h)),
        "b2": np.zeros(d),
    }


def _make_adaptor(config: AdaptorConfig, role: str) -> Adaptor:
    hidden = config.resolved_hidden if config.kind == "mlp" else None
    return Adaptor(config.kind, config.dim, _init_params(config, role), hidden_dim=hidden)


def make_adaptor_set(config: AdaptorConfig) -> AdaptorSet:
    """Build the adaptor set for a placement, deterministically per seed."""
    if config.placement == "image_only":
        return AdaptorSet(config.placement, image=_make_adaptor(config, "image"))
    if config.placement == "text_only":
        return AdaptorSet(config.placement, text=_make_adaptor(config, "text"))
    if config.placement == "shared":
        one = _make_adaptor(config, "shared")
        return AdaptorSet(config.placement, image=one, text=one)
    return AdaptorSet(
        config.placement,
        image=_make_adaptor(config, "image"),
        text=_make_adaptor(config, "text"),
    )


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + raw little-endian float64 blobs
# ---------------------------------------------------------------------------

def save_adaptor_set(aset: AdaptorSet, config: AdaptorConfig, out_dir,
                     extra_tensors: dict[str, np.ndarray] | None = None,
                     extra_meta: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tensors = []

    def _store(name: str, arr: np.ndarray):
        fname = name.replace(".", "_") + ".f8"
        (out / fname).write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        tensors.append({"name": name, "shape": list(arr.shape), "dtype": "f8", "path": fname})

    for role, adaptor in aset.trainable():
        for pname in adaptor.param_names:
            _store(f"{role}.{pname}", adaptor.params[pname])
    for name, arr in (extra_tensors or {}).items():
        _store(name, arr)

    meta = {
        "version": MANIFEST_VERSION_CKPT,
        "config": {
            "kind": config.kind,
            "placement": config.placement,
            "dim": config.dim,
            "hidden_dim": config.resolved_hidden if config.kind == "mlp" else None,
            "activation": config.activation,
            "init": config.init,
            "seed": config.seed,
        },
        "tensors": tensors,
    }
    if extra_meta:
        meta["extra"] = extra_meta
    path = out / "checkpoint.json"
    path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    return path


MANIFEST_VERSION_CKPT = 1


def load_adaptor_set(checkpoint_path) -> tuple[AdaptorSet, AdaptorConfig, dict[str, np.ndarray], dict]:
    path = Path(checkpoint_path)
    meta = json.loads(path.read_text(encoding="utf-8"))
    cfg = meta["config"]
    config = AdaptorConfig(
        kind=cfg["kind"],
        placement=cfg["placement"],
        dim=cfg["dim"],
        hidden_dim=cfg["hidden_dim"],
        activation=cfg["activation"],
        init=cfg["init"],
        seed=cfg["seed"],
    )
    loaded: dict[str, np.ndarray] = {}
    for entry in meta["tensors"]:
        raw = (path.parent / entry["path"]).read_bytes()
        arr = np.frombuffer(raw, dtype="<f8").reshape(entry["shape"]).copy()
        loaded[entry["name"]] = arr

    hidden = config.resolved_hidden if config.kind == "mlp" else None

    def _adaptor(role: str) -> Adaptor:
        params = {p: loaded.pop(f"{role}.{p}") for p in
                  (("W", "b") if config.kind == "dense" else ("W1", "b1", "W2", "b2"))}
        return Adaptor(config.kind, config.dim, params, hidden_dim=hidden)

    if config.placement == "image_only":
        aset = AdaptorSet(config.placement, image=_adaptor("image"))
    elif config.placement == "text_only":
        aset = AdaptorSet(config.placement, text=_adaptor("text"))
    elif config.placement == "shared":
        one = _adaptor("shared")
        aset = AdaptorSet(config.placement, image=one, text=one)
    else:
        aset = AdaptorSet(config.placement, image=_adaptor("image"), text=_adaptor("text"))
    return aset, config, loaded, meta.get("extra", {})
