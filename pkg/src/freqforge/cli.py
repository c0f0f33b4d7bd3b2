"""Command-line interface: the only operator entry point.

Subcommands: generate, train, eval, ablate, robustness, analyze-freq, cam.
Exit codes: 0 success, 2 configuration/usage error, 3 runtime failure.
Machine-readable results go to stdout as JSON; human tables land in text
files next to the other outputs.  FREQFORGE_THREADS caps torch's worker
threads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import torch

from . import dfcs, freq
from .config import ConfigError, RunConfig, load_config, write_config
from .harness import cam as cam_mod
from .harness import experiments
from .harness.data import (
    DatasetManifest,
    generate_synthetic_dataset,
    load_image,
    save_image_png,
)
from .harness.train import NanLossError, evaluate, load_checkpoint, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqforge",
        description="Frequency-aware triple-branch forgery detector",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="images per class")
    p.add_argument("--config", default=None)

    p = sub.add_parser("train", help="train a detector")
    p.add_argument("--data", required=True, help="dataset directory or manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--out", default=None)

    p = sub.add_parser("ablate", help="train and compare the five build variants")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", default="0", help="comma-separated training seeds")

    p = sub.add_parser("robustness", help="evaluate a checkpoint under degradations")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])

    p = sub.add_parser("analyze-freq", help="per-band energy and masked reconstructions")
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k", type=int, default=8)

    p = sub.add_parser("cam", help="gradient-weighted heatmaps per branch")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", type=int, default=None, help="class index (default: predicted)")

    return parser


def _emit(obj: Dict) -> None:
    sys.stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _overrides(args, mapping: Dict[str, Tuple[str, str]]) -> Dict[Tuple[str, str], str]:
    out = {}
    for attr, dest in mapping.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[dest] = str(val)
    return out


def _load_run_config(args, mapping: Dict[str, Tuple[str, str]]) -> RunConfig:
    path = getattr(args, "config", None)
    return load_config(Path(path) if path else None, _overrides(args, mapping))


def cmd_generate(args) -> int:
    cfg = _load_run_config(args, {"seed": ("data", "seed"), "n": ("data", "n_per_class")})
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = generate_synthetic_dataset(
        seed=cfg.data.seed,
        n_per_class=cfg.data.n_per_class,
        spec=cfg.data.artifact,
        out_dir=out_dir,
        image_size=cfg.data.image_size,
    )
    write_config(cfg, out_dir / "resolved.ini")
    _emit({"manifest": str(out_dir / "manifest.tsv"), "records": len(manifest.records)})
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_run_config(args, {"seed": ("train", "seed")})
    manifest = DatasetManifest.load(Path(args.data))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out_dir / "resolved.ini")
    result = train(cfg.model, cfg.train, manifest, out_dir=out_dir)
    (out_dir / "history.json").write_text(
        json.dumps(result.history, indent=2), encoding="utf-8"
    )
    _emit({
        "checkpoint": str(out_dir / "checkpoint.pt"),
        "last": str(out_dir / "last.pt"),
        "best_val_auc": result.best_val_auc,
        "epochs": len(result.history),
    })
    return EXIT_OK


def cmd_eval(args) -> int:
    model, _, _, history = load_checkpoint(Path(args.ckpt))
    manifest = DatasetManifest.load(Path(args.data))
    report = evaluate(model, manifest, args.split, history=history)
    out_dir = Path(args.out) if args.out else Path(args.ckpt).parent
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"metrics_{args.split}.json").write_text(
        report.to_json(indent=2), encoding="utf-8"
    )
    sys.stdout.write(report.to_json() + "\n")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_run_config(args, {})
    try:
        seeds = tuple(int(s) for s in str(args.seeds).replace(" ", "").split(",") if s)
    except ValueError:
        raise ConfigError(f"bad --seeds value: {args.seeds!r}") from None
    if not seeds:
        raise ConfigError("--seeds must name at least one seed")
    manifest = DatasetManifest.load(Path(args.data))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out_dir / "resolved.ini")
    rows = experiments.run_ablation(cfg.model, cfg.train, manifest, seeds=seeds)
    (out_dir / "ablation.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    (out_dir / "ablation.txt").write_text(
        experiments.format_table(rows, "label") + "\n", encoding="utf-8"
    )
    _emit({"rows": rows})
    return EXIT_OK


def cmd_robustness(args) -> int:
    model, _, _, _ = load_checkpoint(Path(args.ckpt))
    manifest = DatasetManifest.load(Path(args.data))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = experiments.run_robustness(model, manifest, split=args.split, seed=args.seed)
    (out_dir / "robustness.json").write_text(json.dumps(rows, indent=2), encoding="utf-8")
    (out_dir / "robustness.txt").write_text(
        experiments.format_table(rows, "degradation") + "\n", encoding="utf-8"
    )
    _emit({"rows": rows})
    return EXIT_OK


def cmd_analyze_freq(args) -> int:
    image = load_image(Path(args.image))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tensor = torch.from_numpy(np.asarray(image, dtype=np.float64))
    padded, original = freq.pad_to_blocks(tensor)
    coeffs = freq.block_dct(padded)
    energy = freq.band_energy(coeffs)
    total = float(energy.sum())
    pooled = dfcs.pooled_spectrum(coeffs)
    primary, secondary = dfcs.select_channels(pooled, args.k)

    bands = []
    for b in range(freq.N_BANDS):
        u, v = freq.band_to_uv(b)
        bands.append({
            "band": b, "u": u, "v": v,
            "zigzag_rank": freq.ZIGZAG_RANK[b],
            "energy": float(energy[b]),
            "fraction": float(energy[b] / total) if total > 0 else 0.0,
        })
    payload = {
        "image": str(args.image),
        "k": args.k,
        "total_energy": total,
        "primary": list(primary),
        "secondary": list(secondary),
        "bands": bands,
    }
    (out_dir / "band_energy.json").write_text(json.dumps(payload, indent=2), encoding="utf-8")

    recon_full = freq.crop_to(freq.block_idct(coeffs), original)
    save_image_png(out_dir / "recon_full.png", recon_full.clamp(0, 1).numpy())
    for name, chans in (("primary", primary), ("secondary", secondary)):
        recon = freq.crop_to(freq.reconstruct_from_channels(coeffs, chans), original)
        save_image_png(out_dir / f"recon_{name}.png", recon.clamp(0, 1).numpy())
    _emit(payload)
    return EXIT_OK


def cmd_cam(args) -> int:
    model, _, _, _ = load_checkpoint(Path(args.ckpt))
    image = load_image(Path(args.image))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    available = [
        b for b, flag in (
            ("rgb", model.needs_rgb),
            ("primary", model.needs_freq),
            ("secondary", model.needs_secondary),
        ) if flag
    ]
    files = []
    for branch in available:
        heat = cam_mod.attention_heatmap(model, image, branch, target_class=args.target)
        path = out_dir / f"cam_{branch}.png"
        save_image_png(path, cam_mod.heatmap_to_rgb(heat))
        files.append(str(path))
    _emit({"heatmaps": files})
    return EXIT_OK


_HANDLERS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "robustness": cmd_robustness,
    "analyze-freq": cmd_analyze_freq,
    "cam": cmd_cam,
}


def main(argv: Optional[list] = None) -> int:
    threads = os.environ.get("FREQFORGE_THREADS")
    if threads:
        try:
            torch.set_num_threads(max(1, int(threads)))
        except ValueError:
            sys.stderr.write(f"freqforge: bad FREQFORGE_THREADS value {threads!r}\n")
            return EXIT_CONFIG
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        sys.stderr.write(f"freqforge: {exc}\n")
        return EXIT_CONFIG
    except NanLossError as exc:
        sys.stderr.write(f"freqforge: {exc}\n")
        return EXIT_RUNTIME
    except RuntimeError as exc:
        sys.stderr.write(f"freqforge: {exc}\n")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
