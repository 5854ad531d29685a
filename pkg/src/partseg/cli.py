"""Command-line front end.

Every command writes its outputs plus a run manifest (``<out>.manifest.json``)
recording the resolved configuration; ``partseg replay`` reruns a manifest.
Settings resolve as command-line flags, then ``--config`` JSON, then
defaults.

Exit codes: 0 success, 1 domain error, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from PIL import Image

from . import __version__
from .aggregate import AggregateConfig, aggregate, hungarian_baseline, refine_mask
from .bench import ALGOS, run_bench, slopes, write_csv
from .decouple import DecoupleConfig, decouple_trace, make_part_labels
from .errors import PartSegError, SchemaError
from .mask import BinaryMask, largest_component
from .metrics import average_precision, match_instances, mean_iou
from .scenegen import (
    PerturbationConfig,
    Template,
    compose_scene,
    derive_seed,
    ground_truth_predictions,
    perturb,
)
from . import render, serialize
from .shapes import make_shape, shape_names


class UsageError(Exception):
    """Bad arguments or unreadable inputs (exit code 2)."""


# -- helpers -------------------------------------------------------------------

def _read_mask(path: str) -> BinaryMask:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    if p.suffix.lower() == ".json":
        doc = json.loads(p.read_text())
        if isinstance(doc, dict) and doc.get("kind") == "template":
            return serialize.template_from_json(doc).full_mask
        if isinstance(doc, dict) and {"size", "counts"} <= set(doc):
            return serialize.mask_from_json(doc)
        raise SchemaError(f"{path}: expected an RLE mask or a template document")
    img = np.asarray(Image.open(p).convert("L"))
    return BinaryMask(img > 127)


def _write(path: str, doc, kind: str, outputs: list):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    serialize.write_json(path, doc, kind)
    outputs.append(str(path))


def _manifest_path(out: str) -> Path:
    p = Path(out)
    if p.suffix:
        return p.with_name(p.name + ".manifest.json")
    return p / "manifest.json"


def _write_manifest(args, inputs, outputs, t0, seed=None, caught=()):
    config = {k: v for k, v in vars(args).items()
              if k not in ("func", "config") and not callable(v)}
    doc = {
        "schema": 1, "kind": "manifest", "command": args.command,
        "config": config, "seed": seed,
        "inputs": [str(i) for i in inputs], "outputs": [str(o) for o in outputs],
        "version": __version__,
        "timings": {"total_seconds": round(time.perf_counter() - t0, 6)},
        "warnings": [str(w.message) for w in caught],
    }
    serialize.write_json(_manifest_path(args.out), doc, "manifest")


def _decouple_cfg(args) -> DecoupleConfig:
    return DecoupleConfig(tau_ratio=args.tau_ratio, lambda_cut=args.lambda_cut,
                          min_part_pixels=args.min_part_pixels)


# -- commands ------------------------------------------------------------------

def cmd_decouple(args, outputs):
    mask = largest_component(_read_mask(args.input))
    parts, flags, cuts = decouple_trace(mask, _decouple_cfg(args))
    labels = make_part_labels(mask, mask, parts=parts, unsplit=flags)
    _write(args.out, serialize.partset_to_json(labels, cuts), "partset", outputs)
    if args.render:
        render.save(render.parts_drawing(labels, cuts), args.render)
        outputs.append(args.render)
    return [args.input], None


def cmd_template(args, outputs):
    if args.input:
        mask = largest_component(_read_mask(args.input))
        name = args.name or Path(args.input).stem
        inputs = [args.input]
    else:
        if args.shape not in shape_names():
            raise UsageError(f"unknown shape {args.shape!r}; choose from {shape_names()}")
        mask = make_shape(args.shape, args.unit)
        name = args.name or args.shape
        inputs = []
    t = Template.from_mask(name, mask, _decouple_cfg(args))
    _write(args.out, serialize.template_to_json(t), "template", outputs)
    return inputs, None


def _gen_one(template_doc, k, args):
    t = serialize.template_from_json(template_doc)
    scene = compose_scene(t, (args.min, args.max), (args.width, args.height),
                          derive_seed(args.seed, k), args.min_part_visibility)
    return serialize.dumps(serialize.scene_to_json(scene)), scene.skipped


def cmd_gen(args, outputs):
    if args.scenes < 1:
        raise UsageError("--scenes must be positive")
    doc = serialize.read_json(args.template, "template")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ks = list(range(args.scenes))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            results = list(ex.map(_gen_one, [doc] * len(ks), ks, [args] * len(ks)))
    else:
        results = [_gen_one(doc, k, args) for k in ks]
    for k, (text, skipped) in zip(ks, results):
        path = out_dir / f"scene_{k:04d}.json"
        path.write_text(text)
        outputs.append(str(path))
        if skipped:
            warnings.warn(f"scene {k}: placement failed for copies {skipped}")
    return [args.template], args.seed


def cmd_preds(args, outputs):
    scene = serialize.scene_from_json(serialize.read_json(args.scene, "scene"))
    cfg = PerturbationConfig(args.sigma_center, args.sigma_offset, args.p_drop,
                             args.p_spurious, args.mask_jitter, args.min_visible_frac,
                             args.seed)
    preds = ground_truth_predictions(scene, cfg.min_visible_frac)
    preds = perturb(preds, cfg, n_instances=len(scene.instances))
    _write(args.out, serialize.predictions_to_json(preds), "predictions", outputs)
    return [args.scene], args.seed


def cmd_aggregate(args, outputs):
    preds = serialize.predictions_from_json(serialize.read_json(args.preds, "predictions"))
    cfg = AggregateConfig(args.epsilon_ratio, args.refine_radius, args.reverse_check)
    if args.baseline == "hungarian":
        n_parts = args.n_parts or (max(len(p.v) for p in preds) + 1 if preds else 2)
        instances = hungarian_baseline(preds, args.lam, n_parts, literal=args.literal)
        discarded = []
    else:
        instances, discarded = aggregate(preds, cfg)
    masks = [refine_mask(i, cfg.refine_radius) for i in instances]
    doc = serialize.instances_to_json(instances, discarded, args.baseline, masks)
    _write(args.out, doc, "instances", outputs)
    return [args.preds], None


def _eval_pair(inst_path, scene_path, iou):
    insts, _ = serialize.instances_from_json(serialize.read_json(inst_path, "instances"))
    scene = serialize.scene_from_json(serialize.read_json(scene_path, "scene"))
    preds = [(i.merged_mask, i.score) for i in insts]
    gts = [i.visible_mask for i in scene.instances if not i.visible_mask.is_empty]
    return (match_instances(preds, gts, 0.5), match_instances(preds, gts, 0.75),
            match_instances(preds, gts, iou))


def cmd_eval(args, outputs):
    if len(args.pred_instances) != len(args.gt_scene):
        raise UsageError("give one --gt-scene per --pred-instances file")
    pairs = list(zip(args.pred_instances, args.gt_scene))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            res = list(ex.map(_eval_pair, *zip(*pairs), [args.iou] * len(pairs)))
    else:
        res = [_eval_pair(a, b, args.iou) for a, b in pairs]
    r50, r75, rsel = zip(*res)
    doc = {"schema": 1, "kind": "metrics",
           "ap50": average_precision(r50), "ap75": average_precision(r75),
           "miou": mean_iou(rsel),
           "n_tp": sum(len(r.tp) for r in rsel), "n_fp": sum(len(r.fp) for r in rsel),
           "n_fn": sum(len(r.fn) for r in rsel), "n_scenes": len(pairs)}
    _write(args.out, doc, "metrics", outputs)
    return args.pred_instances + args.gt_scene, None


def cmd_bench(args, outputs):
    try:
        counts = [int(c) for c in args.parts_counts.split(",") if c.strip()]
    except ValueError:
        raise UsageError(f"bad --parts-counts {args.parts_counts!r}") from None
    algos = ALGOS if args.algo == "both" else (args.algo,)
    rows = run_bench(counts, algos, args.seed, args.repeats)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_csv(rows, args.out)
    outputs.append(args.out)
    for algo, s in slopes(rows).items():
        print(f"{algo}: log-log slope {s:.3f}")
    return [], args.seed


def cmd_render(args, outputs):
    if args.scene:
        scene = serialize.scene_from_json(serialize.read_json(args.scene, "scene"))
        drawing, inputs = render.scene_drawing(scene), [args.scene]
    elif args.parts:
        doc = serialize.read_json(args.parts, "partset")
        drawing = render.parts_drawing(serialize.partset_from_json(doc),
                                       doc.get("cuts", []))
        inputs = [args.parts]
    else:
        insts, discarded = serialize.instances_from_json(
            serialize.read_json(args.instances, "instances"))
        preds = None
        inputs = [args.instances]
        if args.preds:
            preds = serialize.predictions_from_json(
                serialize.read_json(args.preds, "predictions"))
            inputs.append(args.preds)
        if not insts and not (preds and discarded):
            raise UsageError("nothing to render")
        drawing = render.instances_drawing(insts, preds, discarded)
    render.save(drawing, args.out)
    outputs.append(args.out)
    return inputs, None


def cmd_replay(args, outputs):
    doc = serialize.read_json(args.manifest, "manifest")
    argv = doc["config"].get("argv")
    if not argv:
        raise UsageError("manifest has no recorded argv")
    code = main(list(argv))
    if code:
        raise PartSegError(f"replayed command exited with {code}")
    outputs.extend(doc["outputs"])
    return [args.manifest], doc["seed"]


# -- parser --------------------------------------------------------------------

def _add_decouple_opts(p):
    p.add_argument("--tau-ratio", type=float, default=0.2)
    p.add_argument("--lambda-cut", type=float, default=1.0)
    p.add_argument("--min-part-pixels", type=int, default=16)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="partseg", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"partseg {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def command(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file of option defaults")
        p.set_defaults(func=func)
        return p

    p = command("decouple", cmd_decouple, "split a mask into near-convex parts")
    p.add_argument("--input", required=True, help="mask PNG, RLE JSON or template JSON")
    _add_decouple_opts(p)
    p.add_argument("--render", help="optional PNG/SVG with parts and cut lines")
    p.add_argument("--out", required=True)

    p = command("template", cmd_template, "build a template from a shape or mask")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--shape", help=f"one of {', '.join(shape_names())}")
    src.add_argument("--input", help="mask PNG or RLE JSON")
    p.add_argument("--unit", type=int, default=6, help="block size in pixels")
    p.add_argument("--name")
    _add_decouple_opts(p)
    p.add_argument("--out", required=True)

    p = command("gen", cmd_gen, "compose synthetic scenes")
    p.add_argument("--template", required=True)
    p.add_argument("--scenes", type=int, default=1)
    p.add_argument("--min", type=int, default=20)
    p.add_argument("--max", type=int, default=100)
    p.add_argument("--width", type=int, default=512)
    p.add_argument("--height", type=int, default=512)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-part-visibility", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", "--out-dir", dest="out", required=True)

    p = command("preds", cmd_preds, "oracle part predictions with optional noise")
    p.add_argument("--scene", required=True)
    p.add_argument("--sigma-center", type=float, default=0.0)
    p.add_argument("--sigma-offset", type=float, default=0.0)
    p.add_argument("--p-drop", type=float, default=0.0)
    p.add_argument("--p-spurious", type=float, default=0.0)
    p.add_argument("--mask-jitter", type=int, default=0)
    p.add_argument("--min-visible-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = command("aggregate", cmd_aggregate, "assemble parts into instances")
    p.add_argument("--preds", required=True)
    p.add_argument("--epsilon-ratio", type=float, default=0.5)
    p.add_argument("--refine-radius", type=int, default=2)
    p.add_argument("--reverse-check", action="store_true")
    p.add_argument("--baseline", choices=("bidir", "hungarian"), default="bidir")
    p.add_argument("--lam", type=float, default=1.0, help="IoU weight of the baseline")
    p.add_argument("--n-parts", type=int, default=0, help="baseline group size (0: infer)")
    p.add_argument("--literal", action="store_true",
                   help="baseline maximizes dist + lam * IoU instead")
    p.add_argument("--out", required=True)

    p = command("eval", cmd_eval, "AP50/AP75/mIoU against scene ground truth")
    p.add_argument("--pred-instances", nargs="+", required=True)
    p.add_argument("--gt-scene", nargs="+", required=True)
    p.add_argument("--iou", type=float, choices=(0.5, 0.75), default=0.5,
                   help="threshold for counts and mIoU")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)

    p = command("bench", cmd_bench, "aggregation runtime scaling")
    p.add_argument("--parts-counts", default="100,400,1600,6400")
    p.add_argument("--algo", choices=("both",) + ALGOS, default="both")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--out", required=True)

    p = command("render", cmd_render, "draw a scene, part set or instances")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scene")
    src.add_argument("--parts")
    src.add_argument("--instances")
    p.add_argument("--preds", help="predictions behind --instances (outlines, discarded)")
    p.add_argument("--out", required=True, help=".png or .svg")

    p = command("replay", cmd_replay, "rerun the command recorded in a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help=argparse.SUPPRESS)
    return ap


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            conf = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(conf, dict):
            raise UsageError("config file must hold a JSON object")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(conf) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        sub.set_defaults(**conf)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except UsageError as e:
        print(f"partseg: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:
        return int(e.code or 0)
    args.argv = argv
    outputs: list = []
    t0 = time.perf_counter()
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            inputs, seed = args.func(args, outputs)
        for w in caught:
            print(f"partseg: warning: {w.message}", file=sys.stderr)
        if args.command != "replay":
            _write_manifest(args, inputs, outputs, t0, seed, caught)
    except (UsageError, SchemaError, OSError) as e:
        print(f"partseg: error: {e}", file=sys.stderr)
        return 2
    except PartSegError as e:
        print(f"partseg: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
