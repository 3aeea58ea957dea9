"""Exporter command line: export | train-toy."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from imba_export import export as export_mod
from imba_export import toy


def cmd_export(args) -> int:
    if args.checkpoint:
        state = torch.load(args.checkpoint, weights_only=True)
        model = toy.ToyConvNet(channels=state.get("channels", 8))
        model.load_state_dict(state["model"])
    else:
        torch.manual_seed(args.seed)
        model = toy.ToyConvNet()
    spec = export_mod.ExportSpec(
        checkpoint=args.checkpoint,
        layer=args.layer,
        data_dir=args.data,
        out_dir=args.out,
        class_names=args.classes.split(","),
        resize=args.resize,
    )
    manifest_path = export_mod.export_dataset(spec, model)
    print(f"manifest: {manifest_path}")
    return 0


def cmd_train_toy(args) -> int:
    config = toy.ToyLossConfig(
        method=args.loss, alpha=args.alpha, gamma=args.gamma, beta=args.beta
    )
    try:
        result = toy.train_toy(
            config, imbalance_ratio=args.ratio, epochs=args.epochs, seed=args.seed
        )
    except FloatingPointError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    torch.save(
        {"model": result.model.state_dict(), "channels": 8}, out / "checkpoint.pt"
    )
    log = {
        "loss": args.loss,
        "ratio": args.ratio,
        "seed": args.seed,
        "epoch_losses": result.epoch_losses,
        "epoch_pos_probs": result.epoch_pos_probs,
        "logged_batches": result.logged_batches,
    }
    (out / "training_log.json").write_text(json.dumps(log, indent=2) + "\n")
    for epoch, (loss, prob) in enumerate(
        zip(result.epoch_losses, result.epoch_pos_probs), start=1
    ):
        print(f"epoch {epoch}: loss {loss:.4f}, mean p(positive) {prob:.4f}")
    # dump the training set so the checkpoint can be exported for analysis
    if args.dump_data:
        data_dir = out / "data"
        data_dir.mkdir(exist_ok=True)
        images, labels = toy.make_synthetic_dataset(
            30, int(round(30 * args.ratio)), args.seed
        )
        label_doc = {}
        for i in range(images.shape[0]):
            image_id = f"sample{i:04d}"
            np.save(data_dir / f"{image_id}.npy", images[i, 0])
            label_doc[image_id] = [int(labels[i])]
        (data_dir / "labels.json").write_text(json.dumps(label_doc) + "\n")
        print(f"training data dumped to {data_dir}")
    print(f"checkpoint: {out / 'checkpoint.pt'}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="imba-export",
        description="Export torch model internals; train toy imbalanced models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_export = sub.add_parser("export", help="dump features/logits/head + manifest")
    p_export.add_argument("--checkpoint", help="toy checkpoint (.pt); omit for a fresh model")
    p_export.add_argument("--layer", default="features", help="named module to hook")
    p_export.add_argument("--data", required=True, help="dataset directory")
    p_export.add_argument("--out", required=True, help="output directory")
    p_export.add_argument("--classes", default="positive", help="comma-separated class names")
    p_export.add_argument("--resize", type=int, help="square input resize")
    p_export.add_argument("--seed", type=int, default=0)
    p_train = sub.add_parser("train-toy", help="train the toy CNN on synthetic data")
    p_train.add_argument("--loss", choices=("bce", "wbce", "focal", "cbfocal"),
                         default="bce")
    p_train.add_argument("--ratio", type=float, default=10.0)
    p_train.add_argument("--epochs", type=int, default=5)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--alpha", type=float, default=0.25)
    p_train.add_argument("--gamma", type=float, default=2.0)
    p_train.add_argument("--beta", type=float, default=0.9999)
    p_train.add_argument("--out", default="toy_run")
    p_train.add_argument("--dump-data", action="store_true")
    args = parser.parse_args(argv)
    try:
        if args.command == "export":
            return cmd_export(args)
        return cmd_train_toy(args)
    except (export_mod.ExportError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
