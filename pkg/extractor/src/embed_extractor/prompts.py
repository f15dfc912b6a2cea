"""Prompt file handling.

The prompt file is UTF-8 JSON Lines, one object per disease:

    {"disease": "edema",
     "template":   {"positive": "...", "negative": "..."},
     "generative": {"positive": "...", "negative": "..."}}

Every disease needs exactly one positive and one negative string per
style.  ``make_prompt_file`` scaffolds a complete file from disease names
using built-in phrasings; they are one reasonable wording, not canon —
replace the generative entries with your own summarizer output.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import SpecError

STYLES = ("template", "generative")

TEMPLATE_POSITIVE = "There is evidence of {disease}"
TEMPLATE_NEGATIVE = "No findings of {disease}"
GENERATIVE_POSITIVE = "Findings consistent with {disease} are present"
GENERATIVE_NEGATIVE = "The image shows no sign of {disease}"


def load_prompts(path) -> dict[str, dict[str, dict[str, str]]]:
    """Parse and validate; returns {disease: {style: {positive, negative}}}."""
    path = Path(path)
    if not path.is_file():
        raise SpecError(f"prompt file not found: {path}")
    prompts: dict[str, dict[str, dict[str, str]]] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}:{lineno}: not valid JSON: {exc}") from exc
        disease = obj.get("disease")
        if not disease:
            raise SpecError(f"{path}:{lineno}: missing 'disease'")
        if disease in prompts:
            raise SpecError(f"{path}:{lineno}: duplicate entry for disease {disease!r}")
        entry = {}
        for style in STYLES:
            block = obj.get(style)
            if not isinstance(block, dict):
                raise SpecError(f"disease {disease!r}: missing {style} prompts")
            for polarity in ("positive", "negative"):
                text = block.get(polarity)
                if not isinstance(text, str) or not text.strip():
                    raise SpecError(
                        f"disease {disease!r}: missing {style} {polarity} prompt"
                    )
            entry[style] = {"positive": block["positive"], "negative": block["negative"]}
        prompts[disease] = entry
    if not prompts:
        raise SpecError(f"prompt file {path} holds no diseases")
    return prompts


def check_covers(prompts: dict, diseases: list[str]) -> None:
    missing = [d for d in diseases if d not in prompts]
    if missing:
        raise SpecError(f"prompt file lacks entries for diseases: {missing}")
    extra = [d for d in prompts if d not in diseases]
    if extra:
        raise SpecError(f"prompt file names unknown diseases: {extra}")


def make_prompt_file(diseases: list[str], out_path) -> Path:
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for disease in diseases:
        lines.append(json.dumps({
            "disease": disease,
            "template": {
                "positive": TEMPLATE_POSITIVE.format(disease=disease),
                "negative": TEMPLATE_NEGATIVE.format(disease=disease),
            },
            "generative": {
                "positive": GENERATIVE_POSITIVE.format(disease=disease),
                "negative": GENERATIVE_NEGATIVE.format(disease=disease),
            },
        }))
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
