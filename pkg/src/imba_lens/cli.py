"""Command-line front end.

Subcommands: cam | align | dissect | metrics | loss-report | selftest.
Settings come from an optional JSON config file; command-line flags win.
Exit codes: 0 success, 1 usage/config error, 2 data error, 3 selftest
failure. Reports are written deterministically (manifest order, fixed-order
reductions), so reruns are byte-identical regardless of --threads.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from imba_lens import alignment, cam, dissection, losses, metrics, selftest, tensor_io

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SELFTEST = 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    manifest: str | None = None
    annotations: str | None = None
    head: str | None = None
    out: str = "."
    q: float = 0.04
    connectivity: int = 8
    threads: int = 1
    seed: int = 0
    trials: int = 500
    fmt: str = "json"
    loss: str = "bce"
    alpha: float = 0.25
    gamma: float = 2.0
    beta: float = 0.9999
    pgm: bool = False
    upsample_first: bool = False

    @classmethod
    def load(cls, args: argparse.Namespace) -> "RunConfig":
        cfg = cls()
        if getattr(args, "config", None):
            try:
                doc = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise UsageError(f"cannot read config {args.config}: {exc}") from exc
            for key, value in doc.items():
                if not hasattr(cfg, key):
                    raise UsageError(f"unknown config key {key!r}")
                setattr(cfg, key, value)
        env_threads = os.environ.get("IMBA_LENS_THREADS")
        if env_threads:
            cfg.threads = int(env_threads)
        for key in (
            "manifest", "annotations", "head", "out", "q", "connectivity",
            "threads", "seed", "trials", "fmt", "loss", "alpha", "gamma",
            "beta", "pgm", "upsample_first",
        ):
            value = getattr(args, key, None)
            if value is not None:
                setattr(cfg, key, value)
        if not 0.0 < cfg.q < 1.0:
            raise UsageError(f"q must be in (0,1), got {cfg.q}")
        if cfg.threads < 1:
            raise UsageError(f"threads must be >= 1, got {cfg.threads}")
        return cfg

    def require(self, *names: str) -> None:
        for name in names:
            value = getattr(self, name)
            if not value:
                raise UsageError(f"--{name} is required for this command")
            if not Path(value).exists():
                raise UsageError(f"--{name}: no such file: {value}")


def _load_inputs(cfg: RunConfig, need_annotations: bool = True, need_head: bool = True):
    cfg.require("manifest")
    manifest = tensor_io.load_manifest(cfg.manifest)
    annotations = None
    head = None
    if need_annotations:
        cfg.require("annotations")
        annotations = tensor_io.load_annotations(cfg.annotations, manifest)
    if need_head:
        cfg.require("head")
        weights = tensor_io.read_tensor(cfg.head)
        if weights.ndim != 2:
            raise tensor_io.ManifestError(
                f"head weights must be 2-D (M, C), got shape {weights.shape}"
            )
        head = cam.HeadWeights(weights)
        if head.num_classes != manifest.num_classes:
            raise tensor_io.ManifestError(
                f"head has {head.num_classes} classes, manifest {manifest.num_classes}"
            )
        if head.num_channels != manifest.layer_shape[0]:
            raise tensor_io.ManifestError(
                f"head has {head.num_channels} channels, layer has "
                f"{manifest.layer_shape[0]}"
            )
    return manifest, annotations, head


def _dump_report(report: dict, cfg: RunConfig, name: str) -> Path:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.fmt == "csv" and name == "metrics":
        path = out_dir / f"{name}.csv"
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["class", "auroc", "ap", "mean_prob", "n_pos", "n_neg"])
        for row in report["rows"]:
            writer.writerow(
                [row["class"], row["auroc"], row["ap"], row["mean_prob"],
                 row["n_pos"], row["n_neg"]]
            )
        path.write_text(buf.getvalue())
    else:
        path = Path(cfg.out) / f"{name}.json"
        path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return path


def cmd_cam(cfg: RunConfig) -> int:
    manifest, annotations, head = _load_inputs(cfg)
    if not annotations:
        raise tensor_io.AnnotationError("annotation file contains no boxes")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = []
    for entry in manifest.entries:
        boxes = annotations.get(entry.image_id)
        if not boxes:
            continue
        features = tensor_io.read_tensor(manifest.resolve(entry.features_path))
        for label in sorted({b.label for b in boxes}):
            class_index = manifest.class_index(label)
            heatmap = cam.cam_heatmap(
                features, head, class_index,
                manifest.image_height, manifest.image_width,
                upsample_first=cfg.upsample_first,
            )
            stem = f"{Path(entry.image_id).stem}__{label}"
            tensor_path = out_dir / f"{stem}.fmap"
            tensor_io.write_tensor(heatmap.values, tensor_path)
            record = {"image_id": entry.image_id, "class": label,
                      "heatmap": tensor_path.name}
            if cfg.pgm:
                pgm_path = out_dir / f"{stem}.pgm"
                pgm_path.write_bytes(cam.to_pgm(heatmap))
                record["pgm"] = pgm_path.name
            index.append(record)
    (out_dir / "cam_index.json").write_text(
        json.dumps({"heatmaps": index}, indent=2, sort_keys=True) + "\n"
    )
    print(f"wrote {len(index)} heatmaps to {out_dir}")
    return EXIT_OK


def cmd_align(cfg: RunConfig) -> int:
    manifest, annotations, head = _load_inputs(cfg)
    report = alignment.aggregate_alignment(
        manifest, annotations, head, upsample_first=cfg.upsample_first
    )
    path = _dump_report(report, cfg, "alignment")
    print(f"alignment report: {path}")
    return EXIT_OK


def cmd_dissect(cfg: RunConfig) -> int:
    manifest, annotations, _ = _load_inputs(cfg, need_head=False)
    dcfg = dissection.DissectionConfig(q=cfg.q, connectivity=cfg.connectivity)
    thresholds = dissection.channel_thresholds(manifest, dcfg)
    report = dissection.concept_report(manifest, annotations, thresholds, dcfg)
    doc = {
        "q": dcfg.q,
        "connectivity": dcfg.connectivity,
        "n_images": report.n_images,
        "disjoint": report.disjoint,
        "unique": report.unique,
        "degenerate_channels": report.degenerate_channels,
        "per_channel": report.per_channel,
    }
    path = _dump_report(doc, cfg, "dissection")
    print(f"dissection report: {path}")
    return EXIT_OK


def cmd_metrics(cfg: RunConfig) -> int:
    manifest, _, _ = _load_inputs(cfg, need_annotations=False, need_head=False)
    report = metrics.metrics_report(manifest)
    path = _dump_report(report, cfg, "metrics")
    print(f"metrics report: {path}")
    return EXIT_OK


def cmd_loss_report(cfg: RunConfig) -> int:
    manifest, _, _ = _load_inputs(cfg, need_annotations=False, need_head=False)
    config = losses.LossConfig(
        method=cfg.loss, alpha=cfg.alpha, gamma=cfg.gamma, beta=cfg.beta
    )
    report = losses.loss_report(manifest, config)
    path = _dump_report(report, cfg, "loss_report")
    print(f"loss report: {path}")
    return EXIT_OK


def cmd_selftest(cfg: RunConfig) -> int:
    if cfg.trials < 1:
        raise UsageError(f"trials must be >= 1, got {cfg.trials}")
    results = selftest.run_all(trials=cfg.trials, seed=cfg.seed)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"[{status}] {r.name}: worst error {r.worst_error:.3e} "
              f"(tolerance {r.tolerance:.1e})")
        failed += not r.passed
    if failed:
        print(f"{failed} suite(s) failed")
        return EXIT_SELFTEST
    print("all oracle suites passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="imba-lens",
        description="Analyze how imbalance-handling losses shape learned features.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override it")
        p.add_argument("--manifest", help="dataset manifest JSON")
        p.add_argument("--annotations", help="bounding-box CSV")
        p.add_argument("--head", help="head-weights tensor file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--q", type=float, help="top-activation quantile")
        p.add_argument("--connectivity", type=int, choices=(4, 8))
        p.add_argument("--threads", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--format", dest="fmt", choices=("json", "csv"))

    p_cam = sub.add_parser("cam", help="dump per-(image, class) heatmaps")
    common(p_cam)
    p_cam.add_argument("--pgm", action="store_true", default=None,
                       help="also write 8-bit PGM renderings")
    p_cam.add_argument("--upsample-first", dest="upsample_first",
                       action="store_true", default=None)
    for name, help_text in (
        ("align", "soft IoBB / IoR alignment report"),
        ("dissect", "concept (Disjoint/Unique) report"),
        ("metrics", "AUROC / AP / mean-probability report"),
    ):
        p = sub.add_parser(name, help=help_text)
        common(p)
        if name == "align":
            p.add_argument("--upsample-first", dest="upsample_first",
                           action="store_true", default=None)
    p_loss = sub.add_parser("loss-report", help="per-class loss/weight report")
    common(p_loss)
    p_loss.add_argument("--loss", choices=("bce", "wbce", "focal", "cbfocal"))
    p_loss.add_argument("--alpha", type=float)
    p_loss.add_argument("--gamma", type=float)
    p_loss.add_argument("--beta", type=float)
    p_self = sub.add_parser("selftest", help="run the oracle suites")
    common(p_self)
    return parser


_COMMANDS = {
    "cam": cmd_cam,
    "align": cmd_align,
    "dissect": cmd_dissect,
    "metrics": cmd_metrics,
    "loss-report": cmd_loss_report,
    "selftest": cmd_selftest,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = RunConfig.load(args)
        return _COMMANDS[args.command](cfg)
    except (UsageError, losses.LossConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        # covers malformed tensors/manifests/annotations and empty datasets
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
