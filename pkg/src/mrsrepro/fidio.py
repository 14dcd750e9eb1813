"""Text (JSON) FID files: one signal per file, lossless for finite samples."""

from __future__ import annotations

import json
import math
from pathlib import Path

from .signals import FidSignal, VOXELS


class FidParseError(ValueError):
    """A FID file is malformed; ``field`` names the offending key."""

    def __init__(self, field: str, message: str, path=None):
        self.field = field
        self.path = path
        where = f"{path}: " if path is not None else ""
        super().__init__(f"{where}field {field!r}: {message}")


def _num(x: float) -> str:
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def dumps_fid(signal: FidSignal) -> str:
    head = {
        "dwell_time_s": None,
        "signal_id": signal.signal_id,
        "voxel": signal.voxel,
        "animal_id": signal.animal_id,
    }
    lines = ["{"]
    for key, value in head.items():
        text = _num(signal.dwell_time) if key == "dwell_time_s" else json.dumps(value)
        lines.append(f'  "{key}": {text},')
    if signal.truth is not None:
        truth = ", ".join(f"{json.dumps(k)}: {_num(v)}" for k, v in signal.truth.items())
        lines.append(f'  "truth": {{{truth}}},')
    pairs = ",\n    ".join(f"[{_num(z.real)}, {_num(z.imag)}]" for z in signal.samples)
    lines.append(f'  "samples": [\n    {pairs}\n  ]')
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_fid(signal: FidSignal, path) -> Path:
    path = Path(path)
    path.write_text(dumps_fid(signal), encoding="utf-8", newline="\n")
    return path


def loads_fid(text: str, path=None) -> FidSignal:
    try:
        # parse_int=float keeps "-0" as negative zero
        doc = json.loads(text, parse_int=float)
    except json.JSONDecodeError as exc:
        raise FidParseError("<document>", f"not valid JSON ({exc})", path) from exc
    if not isinstance(doc, dict):
        raise FidParseError("<document>", "top level must be an object", path)

    def need(key):
        if key not in doc:
            raise FidParseError(key, "missing required field", path)
        return doc[key]

    dwell = need("dwell_time_s")
    if isinstance(dwell, bool) or not isinstance(dwell, (int, float)):
        raise FidParseError("dwell_time_s", "must be a number", path)
    if not (math.isfinite(dwell) and dwell > 0):
        raise FidParseError("dwell_time_s", f"must be finite and positive, got {dwell}", path)
    voxel = doc.get("voxel")
    if voxel not in (None, *VOXELS):
        raise FidParseError("voxel", f"must be one of {VOXELS} or null", path)
    raw = need("samples")
    if not isinstance(raw, list) or not raw:
        raise FidParseError("samples", "must be a non-empty array of [re, im] pairs", path)
    samples = []
    for i, pair in enumerate(raw):
        if (
            not isinstance(pair, list)
            or len(pair) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in pair)
        ):
            raise FidParseError("samples", f"entry {i} is not a [re, im] number pair", path)
        samples.append(complex(pair[0], pair[1]))
    truth = doc.get("truth")
    if truth is not None and (
        not isinstance(truth, dict)
        or not all(isinstance(v, (int, float)) for v in truth.values())
    ):
        raise FidParseError("truth", "must map metabolite names to numbers", path)
    return FidSignal(
        samples,
        dwell_time=float(dwell),
        signal_id=str(doc.get("signal_id", "")),
        voxel=voxel,
        animal_id=str(doc.get("animal_id", "")),
        truth=truth,
    )


def read_fid(path) -> FidSignal:
    path = Path(path)
    return loads_fid(path.read_text(encoding="utf-8"), path=path)
