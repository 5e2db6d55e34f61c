"""Command-line entry point.

    maco gen-data|pretrain|ground|zeroshot|probe|dump-weights|grad-check
         --config <path> [--seed u64] [--out dir] [command-specific flags]

Exit codes: 0 success, 2 validation/config/input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import inference, metrics
from .boxes import Box
from .checkpoint import load_checkpoint
from .config import RunConfig
from .datagen import CLASSES, SceneSpec, build_vocabulary, generate_corpus, save_corpus
from .errors import MacoError, NumericalAbort, StateError
from .gradcheck import DEFAULT_TOLERANCE, full_objective_check, run_gradient_suite
from .pgm import read_pgm, write_pgm16
from .train import pretrain, restore_model

SPLITS = ("train", "val", "test")


def _scene_spec(cfg: RunConfig) -> SceneSpec:
    spec = SceneSpec(
        image_side=cfg.image_side,
        min_objects=cfg.objects_min,
        max_objects=cfg.objects_max,
        noise_sigma=cfg.noise_sigma,
        regions=tuple(cfg.allowed_regions) if cfg.allowed_regions else SceneSpec.regions,
    )
    spec.validate()
    return spec


def _load_model(cfg: RunConfig, checkpoint_path: str):
    if not checkpoint_path or not Path(checkpoint_path).exists():
        raise StateError(f"checkpoint not found: {checkpoint_path}")
    ckpt = load_checkpoint(checkpoint_path)
    return ckpt.config, restore_model(ckpt.config, ckpt.parameters)


def _load_split(cfg: RunConfig, split: str):
    from .datagen import load_corpus

    return load_corpus(Path(cfg.data_dir) / f"{split}.jsonl")


def cmd_gen_data(cfg: RunConfig, out_dir: Path) -> int:
    spec = _scene_spec(cfg)
    counts = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}
    # disjoint per-split streams: offset each split's sample indices
    offsets = {"train": 0, "val": cfg.n_train, "test": cfg.n_train + cfg.n_val}
    for split in SPLITS:
        samples = [
            s
            for s in generate_corpus(spec, counts[split], seed=cfg.seed + offsets[split])
        ]
        manifest = save_corpus(samples, out_dir, split)
        labels = np.stack([s.labels for s in samples])
        freq = ", ".join(f"{c}={labels[:, i].mean():.3f}" for i, c in enumerate(CLASSES))
        print(f"{split}: {len(samples)} samples -> {manifest} (class frequency {freq})")
    return 0


def cmd_pretrain(cfg: RunConfig, out_dir: Path) -> int:
    samples = _load_split(cfg, "train")
    result = pretrain(cfg, samples, out_dir)
    last = result.log_rows[-1]
    print(f"trained {cfg.epochs} epochs; final loss_total={last['loss_total']}")
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"log: {result.log_path}")
    return 0


def _grounding_metric_row(gmap, boxes: list[Box]) -> dict:
    return {
        "phrase": gmap.phrase,
        "cnr": repr(metrics.cnr(gmap.scores, boxes[0])),
        "miou": repr(metrics.miou(gmap.scores, boxes)),
        "pg": metrics.pointing_game(gmap.scores, boxes),
    }


def _write_metric_rows(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=("phrase", "cnr", "miou", "pg"))
        writer.writeheader()
        writer.writerows(rows)


def cmd_ground(cfg: RunConfig, out_dir: Path, args) -> int:
    ckpt_cfg, model = _load_model(cfg, args.checkpoint)
    vocab = build_vocabulary()
    tau_w = args.tau_w if args.tau_w is not None else ckpt_cfg.tau_w
    if args.split:
        samples = _load_split(cfg, args.split)
        rows = []
        for s in samples:
            for box in s.boxes:
                gmap = inference.grounding_map(s.image, box.phrase, model, vocab, ckpt_cfg, tau_w)
                rows.append(_grounding_metric_row(gmap, [box]))
        path = out_dir / "grounding_metrics.csv"
        _write_metric_rows(path, rows)
        mean_cnr = np.mean([float(r["cnr"]) for r in rows])
        mean_miou = np.mean([float(r["miou"]) for r in rows])
        mean_pg = np.mean([r["pg"] for r in rows])
        print(f"{len(rows)} phrases: CNR={mean_cnr:.4f} mIoU={mean_miou:.4f} PG={mean_pg:.4f}")
        print(f"rows: {path}")
        return 0
    image = read_pgm(args.image)
    gmap = inference.grounding_map(image, args.phrase, model, vocab, ckpt_cfg, tau_w)
    map_path = out_dir / "grounding_map.pgm"
    write_pgm16(map_path, gmap.scores)
    np.savetxt(out_dir / "grounding_map.csv", gmap.scores, delimiter=",")
    print(f"score map: {map_path} (tau_w={tau_w})")
    if args.annotations:
        boxes = [Box.from_dict(d) for d in json.loads(Path(args.annotations).read_text())]
        row = _grounding_metric_row(gmap, boxes)
        path = out_dir / "grounding_metrics.csv"
        _write_metric_rows(path, [row])
        print(f"cnr={row['cnr']} miou={row['miou']} pg={row['pg']} -> {path}")
    return 0


def cmd_zeroshot(cfg: RunConfig, out_dir: Path, args) -> int:
    ckpt_cfg, model = _load_model(cfg, args.checkpoint)
    vocab = build_vocabulary()
    samples = _load_split(cfg, args.split)
    aucs = inference.zero_shot_auc(samples, model, vocab, ckpt_cfg)
    path = out_dir / "zeroshot_auc.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "auc"])
        for cls, value in aucs.items():
            writer.writerow([cls, repr(value)])
    print(", ".join(f"{c}={v:.4f}" for c, v in aucs.items()))
    print(f"rows: {path}")
    return 0


def cmd_probe(cfg: RunConfig, out_dir: Path, args) -> int:
    ckpt_cfg, model = _load_model(cfg, args.checkpoint)
    train_samples = _load_split(cfg, "train")
    test_samples = _load_split(cfg, "test")
    aucs, _ = inference.linear_probe(
        train_samples, test_samples, model, ckpt_cfg, epochs=args.epochs, lr=args.lr
    )
    path = out_dir / "probe_auc.csv"
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "auc"])
        for cls, value in aucs.items():
            writer.writerow([cls, repr(value)])
    print(", ".join(f"{c}={v:.4f}" for c, v in aucs.items()))
    print(f"rows: {path}")
    return 0


def cmd_dump_weights(cfg: RunConfig, out_dir: Path, args) -> int:
    ckpt_cfg, model = _load_model(cfg, args.checkpoint)
    tau_w = args.tau_w if args.tau_w is not None else ckpt_cfg.tau_w
    wmap = inference.export_weight_map(model, ckpt_cfg, tau_w)
    pgm_path = out_dir / "weight_map.pgm"
    write_pgm16(pgm_path, wmap.weights)
    np.savetxt(out_dir / "weight_map.csv", wmap.weights, delimiter=",")
    print(f"weight map ({wmap.weights.shape[0]}x{wmap.weights.shape[1]}, tau_w={tau_w}): {pgm_path}")
    return 0


def cmd_grad_check(cfg: RunConfig) -> int:
    errors = run_gradient_suite()
    errors["full_objective"] = full_objective_check()
    failed = {k: v for k, v in errors.items() if v >= DEFAULT_TOLERANCE}
    width = max(len(k) for k in errors)
    for name, err in sorted(errors.items()):
        status = "FAIL" if err >= DEFAULT_TOLERANCE else "ok"
        print(f"{name:<{width}}  {err:.3e}  {status}")
    print(f"{len(errors) - len(failed)}/{len(errors)} gradient checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maco", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to a JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the config output directory")

    common(sub.add_parser("gen-data", help="generate the synthetic paired corpus"))
    common(sub.add_parser("pretrain", help="run masked-contrastive pretraining"))

    p = sub.add_parser("ground", help="phrase-grounding score maps and metrics")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", help="input PGM image (single-image mode)")
    p.add_argument("--phrase", help="grounding phrase (single-image mode)")
    p.add_argument("--annotations", help="JSON list of boxes for metrics (single-image mode)")
    p.add_argument("--split", help="evaluate a whole split (train/val/test) instead")
    p.add_argument("--tau-w", type=float, default=None, dest="tau_w")

    p = sub.add_parser("zeroshot", help="zero-shot classification AUC on a split")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")

    p = sub.add_parser("probe", help="linear probe on frozen features")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)

    p = sub.add_parser("dump-weights", help="export the importance weight map")
    common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--tau-w", type=float, default=None, dest="tau_w")

    common(sub.add_parser("grad-check", help="finite-difference gradient suite"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        cfg.validate()
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)

        if args.command == "gen-data":
            data_dir = Path(args.out) if args.out else Path(cfg.data_dir)
            data_dir.mkdir(parents=True, exist_ok=True)
            return cmd_gen_data(cfg, data_dir)
        if args.command == "pretrain":
            return cmd_pretrain(cfg, out_dir)
        if args.command == "ground":
            if not args.split and not (args.image and args.phrase):
                raise StateError("ground needs either --split or both --image and --phrase")
            return cmd_ground(cfg, out_dir, args)
        if args.command == "zeroshot":
            return cmd_zeroshot(cfg, out_dir, args)
        if args.command == "probe":
            return cmd_probe(cfg, out_dir, args)
        if args.command == "dump-weights":
            return cmd_dump_weights(cfg, out_dir, args)
        if args.command == "grad-check":
            return cmd_grad_check(cfg)
        raise AssertionError(f"unhandled command {args.command}")
    except NumericalAbort as e:
        print(f"numerical abort: {e}", file=sys.stderr)
        return 3
    except MacoError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
