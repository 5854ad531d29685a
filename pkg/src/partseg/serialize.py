"""JSON encoding of masks, part sets, templates, scenes, predictions, instances.

Every document carries ``"schema": 1`` and a ``"kind"``; it is checked
against the JSON Schema shipped in ``partseg/schemas`` on load. Floats are
written with ``repr`` precision, so documents round-trip bit-exactly.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .decouple import PartLabel, PartSet
from .errors import SchemaError
from .geom import Point2
from .mask import BinaryMask, rle_decode, rle_encode
from .scenegen import Instance, PartPrediction, Scene, Template

SCHEMA_VERSION = 1
KINDS = ("template", "partset", "scene", "predictions", "instances", "metrics", "manifest")


@lru_cache(maxsize=None)
def load_schema(kind: str) -> dict:
    if kind not in KINDS:
        raise ValueError(f"unknown document kind {kind!r}")
    text = resources.files("partseg").joinpath("schemas", f"{kind}.schema.json").read_text()
    return json.loads(text)


def validate(doc, kind: str):
    """Raise :class:`SchemaError` naming the offending JSON path."""
    validator = jsonschema.Draft202012Validator(load_schema(kind))
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"{kind} document invalid at {path}: {err.message}")


def dumps(doc) -> str:
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def parse(text: str, kind: str, source: str = "<string>"):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{source}: line {e.lineno} column {e.colno}: {e.msg}") from None
    validate(doc, kind)
    return doc


def read_json(path, kind: str):
    return parse(Path(path).read_text(), kind, str(path))


def write_json(path, doc, kind: str | None = None):
    if kind is not None:
        validate(doc, kind)
    Path(path).write_text(dumps(doc))


# -- masks and parts ----------------------------------------------------------

def mask_to_json(mask: BinaryMask) -> dict:
    return {"size": [mask.height, mask.width], "counts": rle_encode(mask)}


def mask_from_json(d: dict) -> BinaryMask:
    h, w = d["size"]
    return rle_decode(int(w), int(h), d["counts"])


def _vec(p):
    return None if p is None else [float(p[0]), float(p[1])]


def part_to_json(p: PartLabel) -> dict:
    return {
        "full": mask_to_json(p.full_mask),
        "visible": mask_to_json(p.visible_mask),
        "phi": _vec(p.center_full),
        "phi_hat": _vec(p.center_visible),
        "u": _vec(p.u),
        "v": [_vec(o) for o in p.v],
        "occluded": p.occluded,
        "unsplit": bool(p.unsplit),
    }


def part_from_json(d: dict) -> PartLabel:
    hat = d["phi_hat"]
    return PartLabel(
        visible_mask=mask_from_json(d["visible"]),
        full_mask=mask_from_json(d["full"]),
        center_full=Point2(*d["phi"]),
        center_visible=None if hat is None else Point2(*hat),
        u=None if d["u"] is None else tuple(d["u"]),
        v=[tuple(o) for o in d["v"]],
        unsplit=bool(d.get("unsplit", False)),
    )


def partset_to_json(parts: PartSet, cuts=None) -> dict:
    doc = {"schema": SCHEMA_VERSION, "kind": "partset",
           "parts": [part_to_json(p) for p in parts]}
    if cuts is not None:
        doc["cuts"] = [[_vec(a), _vec(b)] for a, b in cuts]
    return doc


def partset_from_json(doc: dict) -> PartSet:
    validate(doc, "partset")
    return PartSet([part_from_json(p) for p in doc["parts"]])


# -- templates and scenes -----------------------------------------------------

def template_to_json(t: Template) -> dict:
    return {"schema": SCHEMA_VERSION, "kind": "template", "name": t.name,
            "full": mask_to_json(t.full_mask),
            "parts": [part_to_json(p) for p in t.parts],
            "solidity": float(t.solidity)}


def template_from_json(doc: dict) -> Template:
    validate(doc, "template")
    return Template(doc["name"], mask_from_json(doc["full"]),
                    PartSet([part_from_json(p) for p in doc["parts"]]),
                    float(doc["solidity"]))


def scene_to_json(s: Scene) -> dict:
    return {
        "schema": SCHEMA_VERSION, "kind": "scene",
        "width": s.width, "height": s.height,
        "template": s.template, "n_parts": s.n_parts,
        "z_order": list(s.z_order), "skipped": list(s.skipped),
        "instances": [{
            "pose": [int(i.pose[0]), int(i.pose[1]), float(i.pose[2])],
            "full": mask_to_json(i.full_mask),
            "visible": mask_to_json(i.visible_mask),
            "parts": [part_to_json(p) for p in i.parts],
        } for i in s.instances],
    }


def scene_from_json(doc: dict) -> Scene:
    validate(doc, "scene")
    insts = [Instance(
        (int(d["pose"][0]), int(d["pose"][1]), float(d["pose"][2])),
        mask_from_json(d["full"]), mask_from_json(d["visible"]),
        PartSet([part_from_json(p) for p in d["parts"]]),
    ) for d in doc["instances"]]
    return Scene(doc["width"], doc["height"], insts, list(doc["z_order"]),
                 list(doc["skipped"]), doc["template"], doc["n_parts"])


# -- predictions and instances ------------------------------------------------

def predictions_to_json(preds) -> dict:
    return {"schema": SCHEMA_VERSION, "kind": "predictions", "predictions": [{
        "mask": mask_to_json(p.mask), "score": float(p.score),
        "u": _vec(p.u), "v": [_vec(o) for o in p.v],
    } for p in preds]}


def predictions_from_json(doc) -> list:
    """Accepts the wrapped document or a bare list of predictions."""
    validate(doc, "predictions")
    items = doc if isinstance(doc, list) else doc["predictions"]
    return [PartPrediction(mask_from_json(d["mask"]), float(d["score"]),
                           tuple(d["u"]), [tuple(o) for o in d["v"]]) for d in items]


def instances_to_json(instances, discarded, algorithm: str | None = None,
                      masks=None) -> dict:
    """``masks`` optionally overrides each instance's merged mask (e.g. refined)."""
    masks = masks if masks is not None else [i.merged_mask for i in instances]
    doc = {"schema": SCHEMA_VERSION, "kind": "instances"}
    if algorithm is not None:
        doc["algorithm"] = algorithm
    doc["instances"] = [{"parts": [int(k) for k in i.part_indices],
                         "mask": mask_to_json(m), "complete": bool(i.complete),
                         "score": float(i.score)}
                        for i, m in zip(instances, masks)]
    doc["discarded"] = [int(k) for k in discarded]
    return doc


def instances_from_json(doc: dict):
    """Returns ``(instances, discarded)``."""
    from .aggregate import AssembledInstance

    validate(doc, "instances")
    insts = [AssembledInstance(list(d["parts"]), mask_from_json(d["mask"]),
                               bool(d["complete"]), float(d.get("score", 1.0)))
             for d in doc["instances"]]
    return insts, list(doc["discarded"])
