"""JSON encoding of Pontryagin manifolds and CSV polyline export."""

from __future__ import annotations

import json
from importlib.resources import files
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch
from .geomkit import Frame, PolyLoop
from .preimage import FramedLoop, FramedLoops, FramedPoint, FramedPoints, PontryaginManifold

FORMAT = "pontryagin-manifold/1"


def _jsonable(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def manifold_to_json(P: PontryaginManifold) -> dict:
    """Frames are stored as lists of vectors (the columns of the frame matrix)."""
    out = {"format": FORMAT, "k": P.k, "n": P.n,
           "regular_value": None if P.regular_value is None else P.regular_value.tolist(),
           "meta": _jsonable(P.meta)}
    if P.k == 0:
        pts = () if P.payload is None else P.payload.points
        out["payload"] = {"type": "points", "ambient_dim": P.n,
                          "points": [{"x": p.x.tolist(), "frame": p.frame.vectors.T.tolist(),
                                      "sign": p.sign} for p in pts]}
    else:
        comps = () if P.payload is None else P.payload.components
        out["payload"] = {"type": "loops", "ambient_dim": P.n + 1,
                          "components": [{"samples": c.loop.samples.tolist(),
                                          "frames": np.swapaxes(c.frames, 1, 2).tolist()}
                                         for c in comps]}
    return out


def manifold_from_json(doc: dict) -> PontryaginManifold:
    """Inverse of :func:`manifold_to_json`; also accepts a full preimage report."""
    if "manifold" in doc and "payload" not in doc:
        doc = doc["manifold"]
    k, n = int(doc["k"]), int(doc["n"])
    y = doc.get("regular_value")
    y = None if y is None else np.asarray(y, dtype=float)
    p = doc.get("payload") or {}
    if k == 0:
        pts = tuple(FramedPoint(np.asarray(q["x"], dtype=float), Frame.from_rows(q["frame"]))
                    for q in p.get("points", []))
        payload = FramedPoints(n, pts)
    else:
        comps = []
        for c in p.get("components", []):
            S = np.asarray(c["samples"], dtype=float)
            W = np.swapaxes(np.asarray(c["frames"], dtype=float), 1, 2)
            comps.append(FramedLoop(PolyLoop(S), W))
        payload = FramedLoops(n + k, tuple(comps))
    if int(p.get("ambient_dim", n + k)) != n + k:
        raise DimensionMismatch("payload ambient_dim does not equal n + k")
    return PontryaginManifold(k, n, y, payload, dict(doc.get("meta") or {}))


def load_manifold(path) -> PontryaginManifold:
    return manifold_from_json(json.loads(Path(path).read_text()))


def dumps(doc) -> str:
    """Deterministic JSON text (stable key order, repr-exact floats)."""
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_polylines_csv(P: PontryaginManifold, path) -> None:
    """Rows ``x,y,z`` (one coordinate column per ambient dimension); blank line between components."""
    lines = []
    if P.k == 0:
        for x in ([] if P.payload is None else P.payload.positions):
            lines.append(",".join(repr(float(v)) for v in x))
    else:
        comps = () if P.payload is None else P.payload.components
        for i, c in enumerate(comps):
            if i:
                lines.append("")
            lines.extend(",".join(repr(float(v)) for v in s) for s in c.loop.samples)
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def schema(name: str) -> dict:
    """A shipped JSON Schema, e.g. ``schema("preimage")`` or ``schema("manifold")``."""
    return json.loads(files("pontryagin").joinpath("schemas", f"{name}.schema.json").read_text())
