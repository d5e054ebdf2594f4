"""File formats: ray catalogs, circuits, click logs, reports.

JSON floats are written at 12 significant digits. Non-finite floats are
written as the strings ``"inf"``, ``"-inf"`` and ``"nan"``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from . import core
from .errors import IngestionError
from .optics import ClickBatch, DelayTag, OpticalCircuit, Recombiner, WavePlate

FORMAT_VERSION = 1
JSON_DIGITS = 12
TABLE_DIGITS = 6


def _num(x: float, digits: int) -> float | str:
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return float(f"{x:.{digits}g}")


def rounded(obj, digits: int = JSON_DIGITS):
    """Copy of a JSON-like object with every float rounded to ``digits`` significant digits."""
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj), digits)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): rounded(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [rounded(v, digits) for v in obj]
    if isinstance(obj, np.ndarray):
        return rounded(obj.tolist(), digits)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    return json.dumps(rounded(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc


def csv_text(rows: list[dict], digits: int = JSON_DIGITS) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if v is None else rounded(v, digits)) for k, v in r.items()})
    return buf.getvalue()


def table_text(rows: list[dict]) -> str:
    """Aligned plain-text table at 6 significant digits."""
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[("" if r[c] is None else str(rounded(r[c], TABLE_DIGITS))) for c in cols] for r in rows]
    width = [max(len(c), *(len(row[k]) for row in cells)) for k, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, width))]
    lines += ["  ".join(x.rjust(w) for x, w in zip(row, width)) for row in cells]
    return "\n".join(lines) + "\n"


# --- ray catalogs --------------------------------------------------------------


def catalog_to_json(rays, tolerance: float = core.FILE_TOL) -> dict:
    return {"tolerance": tolerance, "rays": core.to_pairs(rays)}


def load_catalog(path) -> np.ndarray:
    """Rays from ``{"tolerance": t, "rays": [[[re, im] x 3], ...]}``.

    Each ray must have unit norm within the file tolerance; it is then
    renormalized exactly.
    """
    data = read_json(path)
    try:
        tol = float(data.get("tolerance", core.FILE_TOL))
        rays = core.from_pairs(data["rays"])
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise IngestionError(f"malformed ray catalog {path}: {exc}") from exc
    if rays.ndim != 2 or rays.shape[1] != core.DIM or len(rays) == 0:
        raise IngestionError(f"ray catalog {path} must hold a list of 3-component vectors")
    norms = np.linalg.norm(rays, axis=1)
    bad = np.flatnonzero(np.abs(norms**2 - 1.0) > tol)
    if bad.size:
        raise IngestionError(f"ray {int(bad[0]) + 1} not normalized within {tol:g}")
    return rays / norms[:, None]


# --- circuits ------------------------------------------------------------------


def circuit_to_json(c: OpticalCircuit) -> dict:
    elems = []
    for e in c.elements:
        if isinstance(e, WavePlate):
            elems.append({"type": "wave_plate", "pair": list(e.pair), "angle": e.angle})
        elif isinstance(e, Recombiner):
            elems.append({"type": "recombiner", "pair": list(e.pair)})
        else:
            elems.append({"type": "delay", "mode": e.mode, "delay": e.delay})
    return {"label": c.label, "enforce_legality": c.enforce_legality, "elements": elems}


def circuit_from_json(data: dict) -> OpticalCircuit:
    elems = []
    try:
        for d in data["elements"]:
            kind = d["type"]
            if kind == "wave_plate":
                elems.append(WavePlate(tuple(d["pair"]), float(d["angle"])))
            elif kind == "recombiner":
                elems.append(Recombiner(tuple(d["pair"])))
            elif kind == "delay":
                elems.append(DelayTag(int(d["mode"]), int(d.get("delay", 1))))
            else:
                raise IngestionError(f"unknown circuit element type {kind!r}")
        return OpticalCircuit(tuple(elems), data.get("label", ""), bool(data.get("enforce_legality", True)))
    except (KeyError, TypeError) as exc:
        raise IngestionError(f"malformed circuit: {exc}") from exc


# --- click logs ----------------------------------------------------------------


def write_log(path, batch: ClickBatch) -> None:
    stage = json.dumps(batch.stage)
    with open(path, "w") as fh:
        for t, h, d, dl in zip(batch.trial.tolist(), batch.heralded.tolist(),
                               batch.detector.tolist(), batch.delayed.tolist()):
            fh.write(
                f'{{"trial": {t}, "stage": {stage}, "heralded": {"true" if h else "false"}, '
                f'"detector": {d if d else "null"}, "delayed": {"true" if dl else "false"}}}\n'
            )


def read_log(path, stage: str | None = None) -> ClickBatch:
    trial, her, det, dly = [], [], [], []
    try:
        fh = open(path)
    except OSError as exc:
        raise IngestionError(f"cannot open log {path}: {exc}") from exc
    with fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                r = json.loads(line)
                d = r["detector"]
                if d is not None and d not in (1, 2, 3):
                    raise ValueError(f"detector {d!r}")
                if stage is not None and r["stage"] != stage:
                    raise ValueError(f"record of stage {r['stage']!r} in log for {stage!r}")
                if d is None and r["delayed"]:
                    raise ValueError("delayed record without a detector")
                trial.append(int(r["trial"]))
                her.append(bool(r["heralded"]))
                det.append(0 if d is None else int(d))
                dly.append(bool(r["delayed"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise IngestionError(f"{path}:{n}: bad record ({exc})") from exc
    return ClickBatch(
        stage or "", np.array(trial, dtype=np.int64), np.array(her, dtype=bool),
        np.array(det, dtype=np.int64), np.array(dly, dtype=bool),
    )


def log_name(stage: str) -> str:
    return f"stage_{stage}.jsonl"
