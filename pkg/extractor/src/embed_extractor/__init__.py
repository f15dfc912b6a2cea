"""Batch embedding extraction into the engine's manifest format."""

from .encoders import DualEncoder, ToyEncoder, load_encoder
from .extract import ExtractionSpec, extract, read_image_index, resolve_uncertain
from .prompts import load_prompts, make_prompt_file

__version__ = "0.1.0"

__all__ = [
    "DualEncoder",
    "ExtractionSpec",
    "ToyEncoder",
    "extract",
    "load_encoder",
    "load_prompts",
    "make_prompt_file",
    "read_image_index",
    "resolve_uncertain",
]
