"""Command-line entry point.

Subcommands cover the full pipeline: annotate counterfactual pairs, build
simulated composites, preview augmentations, train the toy denoiser, run
inference, fuse with the attention mask, evaluate, and run the end-to-end
seeded demo.  Every run with an --out directory writes its fully resolved
configuration (resolved_config.json) and a JSON-lines event log next to its
outputs, so any run can be replayed.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import net
from .annotate import CounterfactualPair, annotate_pair, extract_alpha
from .augment import AugmentConfig, object_aware_morph, sample_augment, simulate_stroke
from .errors import (
    DirectionMismatchError,
    DivergenceError,
    NoEffectError,
    NumericError,
    PlacementError,
    UndefinedRegionError,
)
from .fusion import FusionConfig, attention_to_mask, fuse
from .imaging import (
    load_alpha,
    load_image,
    load_mask,
    resample,
    save_alpha,
    save_image,
    save_mask,
)
from .manifests import read_jsonl, resolve, write_jsonl
from .metrics import MetricReport, heat_colormap, mask_metrics, psnr, psnr_bg
from .net.model import AttentionMap
from .pipeline import DemoConfig, _pmap, run_demo
from .synth import BackgroundScene, synth_dataset
from .toycorpus import make_corpus, make_scene

from .annotate import ForegroundAsset


class _RunLog:
    """JSON-lines event log written next to a run's outputs."""

    def __init__(self, out_dir: Path | None):
        self.path = out_dir / "log.jsonl" if out_dir is not None else None

    def write(self, event: str, **fields) -> None:
        if self.path is None:
            return
        rec = {"ts": time.time(), "event": event, **fields}
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def _prepare_out(args, extra_skip=("func",)) -> tuple[Path | None, _RunLog]:
    out = getattr(args, "out", None)
    out_dir = None
    if out is not None:
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        config = {
            k: (str(v) if isinstance(v, Path) else v)
            for k, v in vars(args).items()
            if k not in extra_skip and not callable(v)
        }
        config["subcommand"] = args.subcommand
        (out_dir / "resolved_config.json").write_text(
            json.dumps(config, indent=2, sort_keys=True) + "\n"
        )
    return out_dir, _RunLog(out_dir)


def _to_net_size(img=None, mask=None):
    """Bring an image or mask to the toy net's 32x32 working size."""
    if img is not None:
        return resample(img, net.IMG_SIZE, net.IMG_SIZE, "bilinear")
    soft = resample(mask, net.IMG_SIZE, net.IMG_SIZE, "area")
    return (soft >= 0.5).astype(np.float64)


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------

def _annotate_record(task):
    index, record, manifest_path, out_dir, threshold, epsilon, fallback_bin = task
    for key in ("input", "ground_truth", "object_mask"):
        if key not in record:
            raise ValueError(f"annotate manifest record {index} lacks {key!r}")
    pair = CounterfactualPair(
        input=load_image(resolve(manifest_path, record["input"])),
        ground_truth=load_image(resolve(manifest_path, record["ground_truth"])),
        object_mask=load_mask(resolve(manifest_path, record["object_mask"]), binary=True),
    )
    asset_id = record.get("id", f"pair{index:05d}")
    try:
        annotations, asset = annotate_pair(pair, threshold, epsilon, asset_id=asset_id)
    except NoEffectError:
        from .annotate import AnnotationSet, derive_effect_mask, diff_mask

        m_fg = diff_mask(pair, threshold)
        annotations = AnnotationSet(
            object_mask=pair.object_mask,
            effect_mask=derive_effect_mask(m_fg, pair.object_mask),
            object_effect_mask=m_fg,
            threshold_used=threshold,
        )
        asset = extract_alpha(pair, annotations, epsilon, fallback_bin, asset_id)

    stem = f"{index:05d}"
    names = {
        "effect_mask": f"{stem}_effect_mask.png",
        "object_effect_mask": f"{stem}_object_effect_mask.png",
        "alpha": f"{stem}_alpha.png",
        "color_layer": f"{stem}_color_layer.png",
    }
    save_mask(annotations.effect_mask, out_dir / names["effect_mask"])
    save_mask(annotations.object_effect_mask, out_dir / names["object_effect_mask"])
    save_alpha(asset.alpha, out_dir / names["alpha"])
    save_image(asset.color, out_dir / names["color_layer"])

    out_record = dict(record)
    out_record.update(
        {
            "id": asset_id,
            "input": str(resolve(manifest_path, record["input"])),
            "ground_truth": str(resolve(manifest_path, record["ground_truth"])),
            "object_mask": str(resolve(manifest_path, record["object_mask"])),
            "direction_bin": asset.direction_bin,
            **names,
        }
    )
    return out_record


def cmd_annotate(args) -> int:
    out_dir, runlog = _prepare_out(args)
    records = read_jsonl(args.manifest)
    runlog.write("start", records=len(records))
    tasks = [
        (i, rec, args.manifest, out_dir, args.threshold, args.epsilon,
         args.fallback_direction_bin)
        for i, rec in enumerate(records)
    ]
    out_records = _pmap(_annotate_record, tasks, args.workers)
    write_jsonl(out_dir / "annotations.jsonl", out_records)
    runlog.write("done", written=len(out_records))
    print(f"annotated {len(out_records)} pairs -> {out_dir / 'annotations.jsonl'}")
    return 0


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

def _load_asset(manifest_path, record, index) -> ForegroundAsset:
    for key in ("color_layer", "alpha", "object_mask", "effect_mask", "direction_bin"):
        if key not in record:
            raise ValueError(f"asset manifest record {index} lacks {key!r}")
    return ForegroundAsset(
        color=load_image(resolve(manifest_path, record["color_layer"])),
        alpha=load_alpha(resolve(manifest_path, record["alpha"])),
        object_mask=load_mask(resolve(manifest_path, record["object_mask"]), binary=True),
        effect_mask=load_mask(resolve(manifest_path, record["effect_mask"]), binary=True),
        direction_bin=int(record["direction_bin"]),
        asset_id=str(record.get("id", f"asset{index:05d}")),
    )


def cmd_synth(args) -> int:
    out_dir, runlog = _prepare_out(args)
    bg_records = read_jsonl(args.backgrounds)
    asset_records = read_jsonl(args.assets)

    backgrounds = []
    for rec in bg_records:
        image = load_image(resolve(args.backgrounds, rec["image"]))
        if "flat_region" in rec:
            flat = load_mask(resolve(args.backgrounds, rec["flat_region"]), binary=True)
        else:
            flat = np.ones(image.shape[:2])
        backgrounds.append(BackgroundScene(image=image, flat_region=flat,
                                           scene_id=str(rec.get("id", rec["image"]))))
    assets = [_load_asset(args.assets, rec, i) for i, rec in enumerate(asset_records)]

    runlog.write("start", backgrounds=len(backgrounds), assets=len(assets), n=args.n)
    samples = synth_dataset(
        backgrounds, assets, args.n, args.multi_prob, args.seed,
        scale_range=(args.scale_min, args.scale_max),
    )

    manifest = []
    for i, sample in enumerate(samples):
        stem = f"{i:05d}"
        names = {
            "input": f"{stem}_composite.png",
            "ground_truth": f"{stem}_ground_truth.png",
            "object_mask": f"{stem}_object_mask.png",
            "object_effect_mask": f"{stem}_object_effect_mask.png",
        }
        save_image(sample.composite, out_dir / names["input"])
        save_image(sample.ground_truth, out_dir / names["ground_truth"])
        save_mask(sample.object_mask, out_dir / names["object_mask"])
        save_mask(sample.object_effect_mask, out_dir / names["object_effect_mask"])
        manifest.append(
            {
                **names,
                "provenance": [
                    {"asset_id": p.asset_id, "position": list(p.position), "scale": p.scale}
                    for p in sample.provenance
                ],
            }
        )
    write_jsonl(out_dir / "dataset.jsonl", manifest)
    runlog.write("done", generated=len(samples), requested=args.n)
    print(f"synthesized {len(samples)}/{args.n} composites -> {out_dir / 'dataset.jsonl'}")
    return 0


# ---------------------------------------------------------------------------
# augment-preview
# ---------------------------------------------------------------------------

def cmd_augment_preview(args) -> int:
    out_dir, runlog = _prepare_out(args)
    rng = np.random.default_rng(args.seed)
    cfg = AugmentConfig(
        morph_scale=args.morph_scale,
        flip_prob=args.flip_prob,
        color_jitter=args.color_jitter,
    )

    if args.manifest is not None:
        rec = read_jsonl(args.manifest)[args.index]
        pair = CounterfactualPair(
            input=load_image(resolve(args.manifest, rec["input"])),
            ground_truth=load_image(resolve(args.manifest, rec["ground_truth"])),
            object_mask=load_mask(resolve(args.manifest, rec["object_mask"]), binary=True),
        )
    else:
        scene = make_scene(np.random.default_rng(args.seed))
        pair = scene.pair

    save_image(pair.input, out_dir / "original_input.png")
    save_mask(pair.object_mask, out_dir / "original_object_mask.png")
    save_mask(object_aware_morph(pair.object_mask, cfg, rng), out_dir / "morphed_mask.png")
    save_mask(simulate_stroke(pair.object_mask, cfg, rng), out_dir / "stroke_mask.png")
    augmented = sample_augment(pair, cfg, rng)
    save_image(augmented.input, out_dir / "augmented_input.png")
    save_image(augmented.ground_truth, out_dir / "augmented_ground_truth.png")
    save_mask(augmented.object_mask, out_dir / "augmented_object_mask.png")
    runlog.write("done")
    print(f"augmentation previews -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# train-toy
# ---------------------------------------------------------------------------

def _manifest_train_items(manifest_path) -> list[net.TrainItem]:
    items = []
    for i, rec in enumerate(read_jsonl(manifest_path)):
        for key in ("input", "ground_truth", "object_mask", "object_effect_mask"):
            if key not in rec:
                raise ValueError(f"training manifest record {i} lacks {key!r}")
        img = load_image(resolve(manifest_path, rec["input"]))
        gt = load_image(resolve(manifest_path, rec["ground_truth"]))
        m_o = load_mask(resolve(manifest_path, rec["object_mask"]), binary=True)
        m_fg = load_mask(resolve(manifest_path, rec["object_effect_mask"]), binary=True)
        if img.shape[:2] != (net.IMG_SIZE, net.IMG_SIZE):
            img, gt = _to_net_size(img=img), _to_net_size(img=gt)
            m_o, m_fg = _to_net_size(mask=m_o), _to_net_size(mask=m_fg)
        items.append(net.make_train_item(img, gt, m_o, m_fg))
    return items


def cmd_train_toy(args) -> int:
    out_dir, runlog = _prepare_out(args)
    if args.manifest is not None:
        items = _manifest_train_items(args.manifest)
    else:
        from .pipeline import make_train_items

        scenes = make_corpus(args.procedural_scenes, args.seed)
        items = make_train_items(scenes, args.threshold, args.epsilon)

    cfg = net.TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        lambda_mask=args.lambda_mask,
        learning_rate=args.learning_rate,
        guidance_drop_prob=args.drop_prob,
        seed=args.seed,
    )
    runlog.write("start", items=len(items), config=asdict(cfg))
    result = net.train(items, cfg, log_path=out_dir / "train_log.jsonl")
    net.save_checkpoint(
        result.params, out_dir / "checkpoint.bin",
        meta={"config": asdict(cfg), "kind": "train-toy"},
    )
    runlog.write("done", steps=len(result.reports), final_mse=result.epoch_mse[-1])
    print(
        f"trained {len(result.reports)} steps; epoch MSE "
        f"{result.epoch_mse[0]:.5f} -> {result.epoch_mse[-1]:.5f}; "
        f"checkpoint -> {out_dir / 'checkpoint.bin'}"
    )
    return 0


# ---------------------------------------------------------------------------
# infer / fuse
# ---------------------------------------------------------------------------

def cmd_infer(args) -> int:
    out_dir, runlog = _prepare_out(args)
    params, _meta = net.load_checkpoint(args.checkpoint)
    img = load_image(args.input)
    m_o = load_mask(args.mask, binary=True)
    if img.shape[:2] != (net.IMG_SIZE, net.IMG_SIZE):
        img = _to_net_size(img=img)
        m_o = _to_net_size(mask=m_o)

    res = net.infer(
        img, m_o, params, steps=args.steps, cfg_scale=args.cfg_scale, seed=args.seed
    )
    save_image(res.output, out_dir / "generated.png")
    np.save(out_dir / "attention.npy", res.attention.weights)
    attn_vis = resample(res.attention.object_map(), *img.shape[:2], "bilinear")
    save_image(heat_colormap(attn_vis), out_dir / "attention_map.png")
    runlog.write("done", steps=args.steps, cfg_scale=args.cfg_scale)
    print(f"inference outputs -> {out_dir}")
    return 0


def cmd_fuse(args) -> int:
    out_dir, runlog = _prepare_out(args)
    original = load_image(args.original)
    generated = load_image(args.generated)
    attn = AttentionMap(np.load(args.attention))
    cfg = FusionConfig(blur_sigma=args.blur_sigma, clamp_floor=args.clamp_floor)
    soft = attention_to_mask(attn, original.shape[0], original.shape[1], cfg)
    fused = fuse(original, generated, soft)
    save_mask(soft, out_dir / "soft_mask.png")
    save_image(fused, out_dir / "fused.png")
    runlog.write("done")
    print(f"fused output -> {out_dir / 'fused.png'}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _eval_record(task):
    index, rec, manifest_path = task
    if "prediction" not in rec or "ground_truth" not in rec:
        raise ValueError(f"eval manifest record {index} lacks prediction/ground_truth")
    pred = load_image(resolve(manifest_path, rec["prediction"]))
    gt = load_image(resolve(manifest_path, rec["ground_truth"]))
    row = {"psnr": psnr(pred, gt)}
    if "fg_mask" in rec:
        fg = load_mask(resolve(manifest_path, rec["fg_mask"]), binary=True)
        row["psnr_bg"] = psnr_bg(pred, gt, fg)
    if "pred_mask" in rec and "gt_mask" in rec:
        soft = load_mask(resolve(manifest_path, rec["pred_mask"]))
        gt_mask = load_mask(resolve(manifest_path, rec["gt_mask"]), binary=True)
        scores = mask_metrics(soft, gt_mask)
        row.update(
            {
                "mask_recall": scores.recall,
                "mask_precision": scores.precision,
                "mask_iou": scores.iou,
            }
        )
    return row


def cmd_eval(args) -> int:
    out_dir, runlog = _prepare_out(args)
    records = read_jsonl(args.manifest)
    runlog.write("start", records=len(records))
    tasks = [(i, rec, args.manifest) for i, rec in enumerate(records)]
    rows = _pmap(_eval_record, tasks, args.workers)
    report = MetricReport()
    for row in rows:
        report.add(**row)
    text = json.dumps(report.to_dict(), indent=2, sort_keys=True)
    if out_dir is not None:
        (out_dir / "metrics.json").write_text(text + "\n")
    runlog.write("done", count=len(rows))
    print(text)
    return 0


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

def cmd_demo(args) -> int:
    out_dir, runlog = _prepare_out(args)
    cfg = DemoConfig(
        seed=args.seed,
        n_train=args.n_train,
        n_test=args.n_test,
        epochs=args.epochs,
        batch_size=args.batch_size,
        lambda_mask=args.lambda_mask,
        learning_rate=args.learning_rate,
        threshold=args.threshold,
        epsilon=args.epsilon,
        steps=args.steps,
        cfg_scale=args.cfg_scale,
        blur_sigma=args.blur_sigma,
        clamp_floor=args.clamp_floor,
        workers=args.workers,
    )
    runlog.write("start", config={**asdict(cfg)})
    summary = run_demo(cfg, out_dir)
    runlog.write("done", count=summary["count"])
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="efface",
        description="Object-and-effect removal toolkit: data construction, "
        "toy attention-supervised denoiser, fusion, and metrics.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add_workers(p):
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                       help="parallel workers (results are worker-count independent)")

    p = sub.add_parser("annotate", help="annotate counterfactual pairs from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--fallback-direction-bin", type=int, default=0,
                   help="direction bin used when the effect mask is empty")
    add_workers(p)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("synth", help="synthesize composites from assets and backgrounds")
    p.add_argument("--backgrounds", required=True, help="background manifest (JSONL)")
    p.add_argument("--assets", required=True, help="asset manifest from annotate")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--multi-prob", type=float, default=0.3)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--scale-min", type=float, default=0.5)
    p.add_argument("--scale-max", type=float, default=1.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment-preview", help="write augmented previews as PNGs")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--manifest", default=None)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--morph-scale", type=float, default=0.1)
    p.add_argument("--flip-prob", type=float, default=0.5)
    p.add_argument("--color-jitter", type=float, default=0.05)
    p.set_defaults(func=cmd_augment_preview)

    p = sub.add_parser("train-toy", help="train the toy denoiser")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None,
                   help="training manifest; default is the procedural corpus")
    p.add_argument("--procedural-scenes", type=int, default=256)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lambda-mask", type=float, default=0.1)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--drop-prob", type=float, default=0.1)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("infer", help="run the denoiser on one image + mask")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--cfg-scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("fuse", help="attention-guided fusion of generated and original")
    p.add_argument("--original", required=True)
    p.add_argument("--generated", required=True)
    p.add_argument("--attention", required=True, help="attention .npy from infer")
    p.add_argument("--out", required=True)
    p.add_argument("--blur-sigma", type=float, default=None)
    p.add_argument("--clamp-floor", type=float, default=0.02)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="metric report from a prediction manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    add_workers(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("demo", help="full procedural-pipeline demo")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--n-train", type=int, default=64)
    p.add_argument("--n-test", type=int, default=16)
    p.add_argument("--epochs", type=int, default=12)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lambda-mask", type=float, default=0.1)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--threshold", type=float, default=0.05)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--cfg-scale", type=float, default=1.0)
    p.add_argument("--blur-sigma", type=float, default=None)
    p.add_argument("--clamp-floor", type=float, default=0.02)
    add_workers(p)
    p.set_defaults(func=cmd_demo)

    return parser


_ERROR_LABELS = [
    (DirectionMismatchError, "direction mismatch"),
    (PlacementError, "placement error"),
    (NoEffectError, "no-effect error"),
    (UndefinedRegionError, "undefined region"),
    (DivergenceError, "training diverged"),
    (NumericError, "numeric error"),
    (ValueError, "invalid input"),
]


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        missing = exc.filename if exc.filename else str(exc)
        print(f"efface {args.subcommand}: missing file: {missing}", file=sys.stderr)
        return 1
    except tuple(t for t, _ in _ERROR_LABELS) as exc:
        label = next(lbl for t, lbl in _ERROR_LABELS if isinstance(exc, t))
        print(f"efface {args.subcommand}: {label}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"efface {args.subcommand}: i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
