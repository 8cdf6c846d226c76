"""Frame-level F1 and box-level IoU against annotations.

Mean and median IoU are taken over frames where both a detection and a
ground-truth box exist; vacant and missed frames only enter through F1.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .extract import BBox

LABELS = ("vacant", "safe", "unsafe")


@dataclass(frozen=True)
class Annotation:
    frame_id: str
    label: str
    box: BBox | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        if (self.box is None) != (self.label == "vacant"):
            raise ValueError(f"frame {self.frame_id}: box must be present iff label is not vacant")


@dataclass(frozen=True)
class EvalReport:
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    mean_iou: float
    median_iou: float
    n_iou: int
    mean_seconds: float | None

    def summary(self) -> str:
        secs = "n/a" if self.mean_seconds is None else f"{self.mean_seconds:.4f}"
        return (f"F1={self.f1:.4f} (TP={self.tp} FP={self.fp} FN={self.fn} TN={self.tn}) "
                f"meanIoU={self.mean_iou:.4f} medianIoU={self.median_iou:.4f} "
                f"(over {self.n_iou} frames with both boxes) avg_time={secs}s")


def iou(a: BBox, b: BBox) -> float:
    ih = max(0, min(a.r1, b.r1) - max(a.r0, b.r0))
    iw = max(0, min(a.c1, b.c1) - max(a.c0, b.c0))
    inter = ih * iw
    return inter / (a.area + b.area - inter)


def _align(detections: Mapping[str, BBox | None], annotations) -> dict[str, Annotation]:
    ann = annotations if isinstance(annotations, Mapping) else {a.frame_id: a for a in annotations}
    if set(ann) != set(detections):
        missing = sorted(set(ann) ^ set(detections))
        raise ValueError(f"frame ids differ between detections and annotations: {missing[:5]}")
    return ann


def confusion(detections: Mapping[str, BBox | None], annotations) -> tuple[int, int, int, int]:
    ann = _align(detections, annotations)
    tp = fp = fn = tn = 0
    for fid, det in detections.items():
        has_gt = ann[fid].box is not None
        if det is not None and has_gt:
            tp += 1
        elif det is not None:
            fp += 1
        elif has_gt:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def f1(detections: Mapping[str, BBox | None], annotations) -> float:
    """2 TP / (2 TP + FP + FN); 0 when there are no positives at all."""
    tp, fp, fn, _ = confusion(detections, annotations)
    return _f1(tp, fp, fn)


def evaluate(detections: Mapping[str, BBox | None], annotations, seconds=None) -> EvalReport:
    if not detections:
        raise ValueError("empty evaluation set")
    ann = _align(detections, annotations)
    tp, fp, fn, tn = confusion(detections, ann)
    ious = [iou(detections[f], ann[f].box) for f in detections
            if detections[f] is not None and ann[f].box is not None]
    mean_iou = float(np.mean(ious)) if ious else float("nan")
    median_iou = float(np.median(ious)) if ious else float("nan")
    if seconds is not None:
        seconds = seconds.values() if isinstance(seconds, Mapping) else seconds
        seconds = [s for s in seconds if s is not None]
    mean_seconds = float(np.mean(seconds)) if seconds else None
    return EvalReport(_f1(tp, fp, fn), tp, fp, fn, tn, mean_iou, median_iou, len(ious), mean_seconds)


def _int_or_none(fields):
    if all(f.strip() == "" for f in fields):
        return None
    return [int(f) for f in fields]


def read_annotations(path, inclusive: bool = False) -> dict[str, Annotation]:
    """Parse ``frame_id,label,r0,r1,c0,c1`` lines; box fields are empty for vacant frames.

    With ``inclusive=True`` the stored upper bounds are inclusive and are
    shifted to half-open on load. A first line starting with ``frame_id`` is a header.
    """
    out = {}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or (lineno == 1 and row[0] == "frame_id"):
                continue
            if len(row) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(row)}")
            fid, label = row[0].strip(), row[1].strip()
            coords = _int_or_none(row[2:])
            box = None
            if coords is not None:
                r0, r1, c0, c1 = coords
                if inclusive:
                    r1, c1 = r1 + 1, c1 + 1
                box = BBox(r0, r1, c0, c1)
            out[fid] = Annotation(fid, label, box)
    return out


def write_annotations(annotations, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_id", "label", "r0", "r1", "c0", "c1"])
        for a in annotations:
            b = a.box
            w.writerow([a.frame_id, a.label] + (["", "", "", ""] if b is None else [b.r0, b.r1, b.c0, b.c1]))
