"""embed-extract: run frozen dual encoders over an image list + prompt file."""

from __future__ import annotations

import argparse
import sys

from .errors import ExtractorError
from .extract import UNCERTAIN_POLICIES, ExtractionSpec, extract
from .prompts import make_prompt_file


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-extract")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="embed images and prompts into a manifest directory")
    ex.add_argument("--model", required=True, help="toy:<dim> or hf:<checkpoint name>")
    ex.add_argument("--images", required=True, help="CSV: path,<disease>,... with 0/1/-1 labels")
    ex.add_argument("--prompts", required=True, help="JSONL prompt file (one disease per line)")
    ex.add_argument("--out", required=True, help="output manifest directory")
    ex.add_argument("--uncertain-policy", required=True, choices=UNCERTAIN_POLICIES,
                    help="how to resolve -1 labels (no default on purpose)")
    ex.add_argument("--batch-size", type=int, default=16)
    ex.add_argument("--device", default="cpu")
    ex.add_argument("--test-fraction", type=float, default=0.2)
    ex.add_argument("--seed", type=int, default=0)

    mk = sub.add_parser("make-prompts", help="scaffold a complete prompt file from disease names")
    mk.add_argument("--diseases", required=True, help="comma-separated disease names")
    mk.add_argument("--out", required=True, help="output JSONL path")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "extract":
            spec = ExtractionSpec(
                model_id=args.model,
                image_index=args.images,
                prompt_file=args.prompts,
                out_dir=args.out,
                uncertain_policy=args.uncertain_policy,
                batch_size=args.batch_size,
                device=args.device,
                test_fraction=args.test_fraction,
                seed=args.seed,
            )
            print(extract(spec))
        else:
            diseases = [d.strip() for d in args.diseases.split(",") if d.strip()]
            if not diseases:
                raise ExtractorError("no disease names given")
            print(make_prompt_file(diseases, args.out))
        return 0
    except ExtractorError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
