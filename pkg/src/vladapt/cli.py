"""Command-line entry point: synth, run, sweep, report.

Configuration is a flat namespace of dotted keys.  A JSON config file may
set any subset; ``--set key=value`` overrides the file; dedicated flags
override both.  Unknown keys are hard errors, and every command writes the
fully resolved configuration alongside its outputs.  Relative output paths
resolve under ``$VLADAPT_OUT_ROOT`` (default: current directory).

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .adaptors import AdaptorConfig, save_adaptor_set
from .datamodel import load_bundle, load_manifest
from .errors import ConfigError, EngineError
from .metrics import render_curves
from .optimizer import AdamHyper
from .scenarios import RunConfig, report_from_json, report_to_csv, report_to_json, run
from .synth import SynthConfig, generate

OUT_ROOT_ENV = "VLADAPT_OUT_ROOT"

_RUN_KEYS = {
    "run.manifest": (str, None, "path to the dataset manifest"),
    "run.out": (str, "run-out", "output directory"),
    "run.scenario": (str, "joint", "joint|class_incremental|label_incremental|data_incremental|zero_shot"),
    "run.style": (str, "template", "prompt style: template|generative|random"),
    "run.epochs": (int, 10, "epochs per task"),
    "run.batch_size": (int, 64, "minibatch size"),
    "run.seeds": ("ints", [1, 2, 3], "comma-separated seeds"),
    "run.partitions": (int, 20, "data-incremental partition count"),
    "run.normalize_per_disease": (bool, False, "divide the loss by the masked-disease count too"),
    "run.reset_optimizer_per_task": (bool, True, "fresh Adam state at each task boundary"),
    "run.baseline": ("optfloat", None, "horizontal reference line for the curve plot"),
    "adaptor.kind": (str, "mlp", "dense|mlp"),
    "adaptor.placement": (str, "both", "image_only|text_only|shared|both"),
    "adaptor.hidden_dim": (int, 0, "mlp hidden width (0 = same as dim)"),
    "adaptor.init": (str, "scaled_uniform", "scaled_uniform|identity"),
    "optim.lr": (float, 1e-4, "Adam learning rate"),
    "optim.beta1": (float, 0.9, "Adam beta1"),
    "optim.beta2": (float, 0.999, "Adam beta2"),
    "optim.eps": (float, 1e-8, "Adam epsilon"),
}

_KEYS = {
    "synth": {
        "synth.out": (str, "synth-data", "output directory"),
        "synth.dim": (int, 64, "embedding width"),
        "synth.diseases": (int, 5, "number of diseases"),
        "synth.train_rows": (int, 2000, "training rows"),
        "synth.test_rows": (int, 1000, "test rows"),
        "synth.prevalence": ("floats", [0.3], "per-disease prevalence (single value broadcasts)"),
        "synth.noise_sigma": (float, 0.7, "image noise sigma"),
        "synth.kappa": (float, 0.5, "disease direction strength"),
        "synth.alignment_template": (float, 0.95, "template prompt alignment"),
        "synth.alignment_generative": (float, 0.7, "generative prompt alignment"),
        "synth.label_correlation": (float, 0.0, "pairwise label correlation in [0,1)"),
        "synth.seed": (int, 0, "generator seed"),
    },
    "run": _RUN_KEYS,
    "sweep": {
        **{k: v for k, v in _RUN_KEYS.items()
           if k not in ("run.scenario", "run.style", "run.out", "run.baseline")},
        "sweep.out": (str, "sweep-out", "sweep output directory"),
        "sweep.placements": ("strs", ["image_only", "text_only", "shared", "both"], "grid: placements"),
        "sweep.styles": ("strs", ["template", "generative", "random"], "grid: prompt styles"),
        "sweep.scenarios": ("strs", ["joint", "class_incremental", "label_incremental", "data_incremental"], "grid: scenarios"),
        "sweep.workers": (int, 1, "parallel worker processes"),
    },
    "report": {
        "report.path": (str, None, "existing report.json to re-render"),
        "report.out": (str, "curves.svg", "output SVG path"),
        "report.baseline": ("optfloat", None, "horizontal reference line"),
    },
}


def _parse_value(key: str, kind, raw: str):
    try:
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is bool:
            low = raw.strip().lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip() != ""]
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v.strip() != ""]
        if kind == "strs":
            return [v.strip() for v in raw.split(",") if v.strip() != ""]
        if kind == "optfloat":
            return None if raw.strip() == "" else float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"cannot parse {key}={raw!r}: {exc}") from exc


def resolve_config(command: str, config_file: str | None, sets: list[str],
                   flag_values: dict[str, object]) -> dict:
    """Layer defaults < config file < --set < flags; reject unknown keys."""
    keys = _KEYS[command]
    resolved = {key: default for key, (_, default, _) in keys.items()}

    if config_file:
        path = Path(config_file)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a flat JSON object")
        for key, value in loaded.items():
            if key not in keys:
                raise ConfigError(f"unknown config key {key!r}")
            kind = keys[key][0]
            if isinstance(value, str) and kind not in (str,):
                value = _parse_value(key, kind, value)
            resolved[key] = value

    for item in sets:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        if key not in keys:
            raise ConfigError(f"unknown config key {key!r}")
        resolved[key] = _parse_value(key, keys[key][0], raw)

    for key, value in flag_values.items():
        if value is not None:
            resolved[key] = value
    return resolved


def _flag_name(key: str) -> str:
    return "--" + key.split(".", 1)[1].replace("_", "-")


def _add_key_flags(parser: argparse.ArgumentParser, command: str) -> dict[str, str]:
    mapping = {}
    for key, (kind, default, help_text) in _KEYS[command].items():
        flag = _flag_name(key)
        dest = key.replace(".", "__")
        mapping[dest] = key
        if kind is bool:
            parser.add_argument(flag, dest=dest, default=None,
                                action=argparse.BooleanOptionalAction, help=help_text)
        elif kind in ("ints", "floats", "strs", "optfloat"):
            parser.add_argument(flag, dest=dest, default=None,
                                type=lambda raw, k=key, kd=kind: _parse_value(k, kd, raw),
                                help=help_text)
        else:
            parser.add_argument(flag, dest=dest, default=None, type=kind, help=help_text)
    return mapping


def _out_path(raw: str) -> Path:
    root = os.environ.get(OUT_ROOT_ENV, ".")
    path = Path(raw)
    return path if path.is_absolute() else Path(root) / path


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _input_checksums(manifest_path: Path) -> dict:
    manifest = load_manifest(manifest_path)
    blobs = {}
    for entry in manifest["splits"].values():
        for key in ("embeddings", "labels"):
            blobs[entry[key]] = _sha256(manifest_path.parent / entry[key])
    for bank in manifest["prompt_banks"]:
        for key in ("positive", "negative"):
            blobs[bank[key]] = _sha256(manifest_path.parent / bank[key])
    return {"manifest": _sha256(manifest_path), "blobs": blobs}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _synth_config(cfg: dict) -> SynthConfig:
    prevalence = cfg["synth.prevalence"]
    diseases = cfg["synth.diseases"]
    if len(prevalence) == 1:
        prevalence = prevalence * diseases
    return SynthConfig(
        dim=cfg["synth.dim"],
        num_diseases=diseases,
        n_train=cfg["synth.train_rows"],
        n_test=cfg["synth.test_rows"],
        disease_prevalence=prevalence,
        image_noise_sigma=cfg["synth.noise_sigma"],
        kappa=cfg["synth.kappa"],
        alignment_template=cfg["synth.alignment_template"],
        alignment_generative=cfg["synth.alignment_generative"],
        label_correlation=cfg["synth.label_correlation"],
        seed=cfg["synth.seed"],
    )


def cmd_synth(cfg: dict) -> int:
    out = _out_path(cfg["synth.out"])
    manifest_path = generate(_synth_config(cfg), out)
    _write_json(out / "resolved_config.json", cfg)
    print(manifest_path)
    return 0


def _run_config(cfg: dict) -> RunConfig:
    hidden = cfg["adaptor.hidden_dim"]
    adaptor = AdaptorConfig(
        kind=cfg["adaptor.kind"],
        placement=cfg["adaptor.placement"],
        dim=2,  # placeholder; replaced once the manifest dim is known
        hidden_dim=None if hidden == 0 else hidden,
        init=cfg["adaptor.init"],
    )
    return RunConfig(
        adaptor=adaptor,
        scenario=cfg["run.scenario"],
        prompt_style=cfg["run.style"],
        epochs_per_task=cfg["run.epochs"],
        batch_size=cfg["run.batch_size"],
        seeds=tuple(cfg["run.seeds"]),
        num_partitions=cfg["run.partitions"],
        optimizer=AdamHyper(lr=cfg["optim.lr"], beta1=cfg["optim.beta1"],
                            beta2=cfg["optim.beta2"], eps=cfg["optim.eps"]),
        normalize_per_disease=cfg["run.normalize_per_disease"],
        reset_optimizer_per_task=cfg["run.reset_optimizer_per_task"],
    )


def execute_run(cfg: dict, out: Path) -> dict:
    """Load data, run the scenario, write the artifact directory."""
    from dataclasses import replace

    if not cfg.get("run.manifest"):
        raise ConfigError("run.manifest is required")
    manifest_path = Path(cfg["run.manifest"])
    train_ds, test_ds, banks = load_bundle(manifest_path)

    config = _run_config(cfg)
    config = replace(config, adaptor=replace(config.adaptor, dim=train_ds.dim))
    # the embedded config describes the run itself; output paths stay out of
    # it so reports from identical runs are byte-identical
    config_dump = {k: v for k, v in cfg.items() if k != "run.out"}
    report, final_states = run(config, train_ds, test_ds, banks, config_dump=config_dump)

    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report_to_json(report), encoding="utf-8")
    (out / "report.csv").write_text(report_to_csv(report), encoding="utf-8")
    render_curves(report, out / "curves.svg", baseline=cfg.get("run.baseline"))
    _write_json(out / "resolved_config.json", cfg)
    _write_json(out / "inputs.json", _input_checksums(manifest_path))
    for seed, (aset, adam) in final_states.items():
        if aset is None:
            continue
        extra_tensors = {}
        extra_meta = {"seed": seed}
        if adam is not None:
            for i, (m, v) in enumerate(zip(adam.m, adam.v)):
                extra_tensors[f"adam.m.{i}"] = m
                extra_tensors[f"adam.v.{i}"] = v
            extra_meta["adam_t"] = adam.t
        save_adaptor_set(aset, replace(config.adaptor, seed=seed),
                         out / "checkpoint" / f"seed_{seed}",
                         extra_tensors=extra_tensors, extra_meta=extra_meta)
    final = report.aggregate[-1]
    return {
        "final_mean_auc_mean": final["mean_auc_mean"],
        "final_mean_auc_std": final["mean_auc_std"],
    }


def cmd_run(cfg: dict) -> int:
    out = _out_path(cfg["run.out"])
    summary = execute_run(cfg, out)
    print(f"{out} final_mean_auc={summary['final_mean_auc_mean']:.4f}")
    return 0


def _cell_name(scenario: str, style: str, placement: str) -> str:
    return f"{scenario}__{style}__{placement}"


def _run_cell(args: tuple) -> dict:
    cfg, out_dir = args
    cell = _cell_name(cfg["run.scenario"], cfg["run.style"], cfg["adaptor.placement"])
    try:
        summary = execute_run(cfg, Path(out_dir))
        return {"cell": cell, "status": "ok", **summary}
    except EngineError as exc:
        return {"cell": cell, "status": "failed", "error": type(exc).__name__,
                "message": str(exc), "exit_code": exc.exit_code}


def cmd_sweep(cfg: dict) -> int:
    out = _out_path(cfg["sweep.out"])
    out.mkdir(parents=True, exist_ok=True)
    grid = [(sc, st, pl)
            for sc in cfg["sweep.scenarios"]
            for st in cfg["sweep.styles"]
            for pl in cfg["sweep.placements"]]
    if not grid:
        raise ConfigError("sweep grid is empty")

    pending, results = [], []
    for scenario, style, placement in grid:
        cell = _cell_name(scenario, style, placement)
        cell_dir = out / "cells" / cell
        cell_cfg = dict(cfg)
        cell_cfg.pop("sweep.out", None)
        cell_cfg.pop("sweep.placements", None)
        cell_cfg.pop("sweep.styles", None)
        cell_cfg.pop("sweep.scenarios", None)
        cell_cfg.pop("sweep.workers", None)
        cell_cfg["run.scenario"] = scenario
        cell_cfg["run.style"] = style
        cell_cfg["adaptor.placement"] = placement
        cell_cfg["run.out"] = str(cell_dir)
        cell_cfg["run.baseline"] = None
        if (cell_dir / "report.csv").is_file():
            report = report_from_json((cell_dir / "report.json").read_text(encoding="utf-8"))
            final = report.aggregate[-1]
            results.append({"cell": cell, "status": "cached",
                            "final_mean_auc_mean": final["mean_auc_mean"],
                            "final_mean_auc_std": final["mean_auc_std"]})
        else:
            pending.append((cell_cfg, str(cell_dir)))

    workers = max(1, cfg["sweep.workers"])
    if workers == 1 or len(pending) <= 1:
        results.extend(_run_cell(item) for item in pending)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results.extend(pool.map(_run_cell, pending))

    by_cell = {r["cell"]: r for r in results}
    header = "scenario,style,placement,status,final_mean_auc_mean,final_mean_auc_std,error"
    lines = [header]
    for scenario, style, placement in grid:
        r = by_cell[_cell_name(scenario, style, placement)]
        if r["status"] == "failed":
            lines.append(f"{scenario},{style},{placement},failed,,,{r['error']}")
        else:
            lines.append(
                f"{scenario},{style},{placement},{r['status']},"
                f"{repr(r['final_mean_auc_mean'])},{repr(r['final_mean_auc_std'])},"
            )
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    # pivot: one row per scenario, one column per placement/style pair
    placements, styles, scenarios = cfg["sweep.placements"], cfg["sweep.styles"], cfg["sweep.scenarios"]
    cols = [f"{pl}|{st}" for pl in placements for st in styles]
    table = ["scenario," + ",".join(cols)]
    for scenario in scenarios:
        row = [scenario]
        for pl in placements:
            for st in styles:
                r = by_cell[_cell_name(scenario, st, pl)]
                if r["status"] == "failed":
                    row.append("failed")
                else:
                    row.append(f"{r['final_mean_auc_mean']:.4f}+-{r['final_mean_auc_std']:.1e}")
        table.append(",".join(row))
    (out / "table.csv").write_text("\n".join(table) + "\n", encoding="utf-8")
    _write_json(out / "resolved_config.json", cfg)

    failed = [r for r in results if r["status"] == "failed"]
    for r in failed:
        print(f"failed cell {r['cell']}: {r['error']}: {r['message']}", file=sys.stderr)
    print(f"{out} cells={len(grid)} cached={sum(r['status'] == 'cached' for r in results)} "
          f"failed={len(failed)}")
    return failed[0]["exit_code"] if failed else 0


def cmd_report(cfg: dict) -> int:
    if not cfg.get("report.path"):
        raise ConfigError("report.path is required")
    path = Path(cfg["report.path"])
    if not path.is_file():
        raise ConfigError(f"report not found: {path}")
    report = report_from_json(path.read_text(encoding="utf-8"))
    out = _out_path(cfg["report.out"])
    render_curves(report, out, baseline=cfg.get("report.baseline"))
    print(out)
    return 0


_COMMANDS = {"synth": cmd_synth, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, dict[str, str]]]:
    parser = argparse.ArgumentParser(
        prog="vladapt",
        description="Incremental adaptor fine-tuning over frozen vision-language embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    mappings = {}
    for command in _KEYS:
        p = sub.add_parser(command)
        p.add_argument("--config", default=None, help="JSON file of flat dotted config keys")
        p.add_argument("--set", dest="sets", action="append", default=[],
                       metavar="KEY=VALUE", help="override one config key")
        mappings[command] = _add_key_flags(p, command)
    return parser, mappings


def main(argv: list[str] | None = None) -> int:
    parser, mappings = build_parser()
    args = parser.parse_args(argv)
    try:
        flag_values = {key: getattr(args, dest) for dest, key in mappings[args.command].items()}
        cfg = resolve_config(args.command, args.config, args.sets, flag_values)
        return _COMMANDS[args.command](cfg)
    except EngineError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
