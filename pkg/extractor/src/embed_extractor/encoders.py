"""Dual-encoder backends.

An encoder pair maps images and texts into one joint embedding space of a
fixed width.  Two families:

* ``toy:<dim>`` — a self-contained deterministic encoder for tests and
  plumbing checks.  Images are decoded, converted to grayscale, resized to
  16x16 and mean-centered; texts are hashed character trigrams.  Both are
  pushed through a fixed random projection (seeded from the model id
  alone) and a tanh, so the same inputs always yield the same embeddings.
* ``hf:<name>`` — any CLIP-style dual encoder loadable through
  ``transformers`` (optional dependency).

Backbones are frozen by construction: nothing here has trainable state.
"""

from __future__ import annotations

import zlib

import numpy as np
from PIL import Image

from .errors import ImageDecodeError, ModelLoadError

_TOY_IMAGE_SIDE = 16
_TOY_TEXT_BUCKETS = 512


class DualEncoder:
    """Interface: ``dim``, ``encode_images(paths)``, ``encode_texts(texts)``."""

    dim: int

    def encode_images(self, paths: list) -> np.ndarray:
        raise NotImplementedError

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        raise NotImplementedError


def _projection(tag: str, rows: int, cols: int) -> np.ndarray:
    seed = zlib.crc32(tag.encode("utf-8"))
    rng = np.random.default_rng(seed)
    return rng.standard_normal((rows, cols)) / np.sqrt(cols)


class ToyEncoder(DualEncoder):
    def __init__(self, dim: int):
        if dim < 2:
            raise ModelLoadError(f"toy encoder width must be >= 2, got {dim}")
        self.dim = dim
        # the trailing constant feature keeps embeddings off the origin
        self._img_proj = _projection(f"toy-image-{dim}", dim, _TOY_IMAGE_SIDE ** 2 + 1)
        self._txt_proj = _projection(f"toy-text-{dim}", dim, _TOY_TEXT_BUCKETS + 1)

    def encode_images(self, paths: list) -> np.ndarray:
        out = np.empty((len(paths), self.dim))
        for i, path in enumerate(paths):
            try:
                with Image.open(path) as img:
                    gray = img.convert("L").resize((_TOY_IMAGE_SIDE, _TOY_IMAGE_SIDE))
            except Exception as exc:
                raise ImageDecodeError(f"{path}: {exc}") from exc
            pixels = np.asarray(gray, dtype=np.float64).ravel() / 255.0
            features = np.concatenate([pixels - pixels.mean(), [1.0]])
            out[i] = np.tanh(self._img_proj @ features)
        return out

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim))
        for i, text in enumerate(texts):
            counts = np.zeros(_TOY_TEXT_BUCKETS)
            low = text.lower()
            for k in range(len(low) - 2):
                bucket = zlib.crc32(low[k:k + 3].encode("utf-8")) % _TOY_TEXT_BUCKETS
                counts[bucket] += 1.0
            norm = np.linalg.norm(counts)
            if norm > 0.0:
                counts /= norm
            features = np.concatenate([counts, [1.0]])
            out[i] = np.tanh(self._txt_proj @ features)
        return out


class HfClipEncoder(DualEncoder):
    """CLIP-style dual encoder via transformers (kept out of the default deps)."""

    def __init__(self, name: str, device: str = "cpu"):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ModelLoadError(
                "hf models need the optional [hf] extra (transformers + torch)"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(name).to(device).eval()
            self._processor = CLIPProcessor.from_pretrained(name)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {name!r}: {exc}") from exc
        self._torch = torch
        self._device = device
        self.dim = int(self._model.config.projection_dim)

    def encode_images(self, paths: list) -> np.ndarray:
        images = []
        for path in paths:
            try:
                with Image.open(path) as img:
                    images.append(img.convert("RGB").copy())
            except Exception as exc:
                raise ImageDecodeError(f"{path}: {exc}") from exc
        inputs = self._processor(images=images, return_tensors="pt").to(self._device)
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float64)

    def encode_texts(self, texts: list[str]) -> np.ndarray:
        inputs = self._processor(text=texts, return_tensors="pt", padding=True,
                                 truncation=True).to(self._device)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float64)


def load_encoder(model_id: str, device: str = "cpu") -> DualEncoder:
    if model_id.startswith("toy:"):
        try:
            dim = int(model_id.split(":", 1)[1])
        except ValueError as exc:
            raise ModelLoadError(f"bad toy model id {model_id!r}") from exc
        return ToyEncoder(dim)
    if model_id.startswith("hf:"):
        return HfClipEncoder(model_id.split(":", 1)[1], device=device)
    raise ModelLoadError(f"unknown model id scheme in {model_id!r} (use toy:<dim> or hf:<name>)")
