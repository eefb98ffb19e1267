"""Binary segmentation metrics: IoU, F1, MIoU and MPA over water/background."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from .imageio import IMAGE_SUFFIXES, read_mask

BACKGROUND, WATER = 0, 1
CLASSES = (BACKGROUND, WATER)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Per-class pixel counts, indexed by class id (0 background, 1 water)."""
    tp: tuple
    fp: tuple
    fn: tuple
    tn: tuple

    @property
    def total(self) -> int:
        return self.tp[0] + self.fp[0] + self.fn[0] + self.tn[0]

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(*(tuple(a + b for a, b in zip(x, y))
                                 for x, y in zip((self.tp, self.fp, self.fn, self.tn),
                                                 (other.tp, other.fp, other.fn, other.tn))))

    @classmethod
    def from_water_counts(cls, tp: int, fp: int, fn: int, tn: int) -> "ConfusionMatrix":
        # for two classes the background counts are the water counts mirrored
        return cls(tp=(tn, tp), fp=(fn, fp), fn=(fp, fn), tn=(tp, tn))


def _as_binary(mask, name):
    arr = np.asarray(mask)
    if arr.dtype == bool:
        return arr
    if not np.all((arr == 0) | (arr == 1)):
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr.astype(bool)


def confusion(pred, gt) -> ConfusionMatrix:
    p, g = _as_binary(pred, "pred"), _as_binary(gt, "gt")
    if p.shape != g.shape:
        raise ValueError(f"pred shape {p.shape} does not match gt shape {g.shape}")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(p.size) - tp - fp - fn
    return ConfusionMatrix.from_water_counts(tp, fp, fn, tn)


def iou(cm: ConfusionMatrix, cls: int = WATER) -> float:
    denom = cm.tp[cls] + cm.fp[cls] + cm.fn[cls]
    # class absent from both prediction and ground truth counts as perfect agreement
    return 1.0 if denom == 0 else cm.tp[cls] / denom


def f1(cm: ConfusionMatrix, cls: int = WATER) -> float:
    denom = 2 * cm.tp[cls] + cm.fp[cls] + cm.fn[cls]
    return 1.0 if denom == 0 else 2 * cm.tp[cls] / denom


def miou(cm: ConfusionMatrix) -> float:
    return sum(iou(cm, c) for c in CLASSES) / len(CLASSES)


def class_accuracy(cm: ConfusionMatrix, cls: int) -> float:
    # TN is included in the numerator on purpose; for two classes both values coincide
    t = cm.tp[cls] + cm.tn[cls]
    return t / (t + cm.fp[cls] + cm.fn[cls])


def mpa(cm: ConfusionMatrix) -> float:
    return sum(class_accuracy(cm, c) for c in CLASSES) / len(CLASSES)


def summarize(cm: ConfusionMatrix) -> Dict[str, float]:
    return {"IoU": iou(cm), "F1": f1(cm), "MIoU": miou(cm), "MPA": mpa(cm)}


@dataclass
class EvalReport:
    rows: List[dict]            # per image: name + metric values
    total: ConfusionMatrix

    @property
    def aggregate(self) -> Dict[str, float]:
        return summarize(self.total)


class PairingError(ValueError):
    pass


def _mask_files(directory) -> Dict[str, Path]:
    return {p.stem: p for p in sorted(Path(directory).iterdir()) if p.suffix.lower() in IMAGE_SUFFIXES}


def evaluate_dirs(pred_dir: Union[str, Path], gt_dir: Union[str, Path]) -> EvalReport:
    """Match masks by file stem and pool one confusion matrix over all pairs."""
    preds, gts = _mask_files(pred_dir), _mask_files(gt_dir)
    only_pred, only_gt = sorted(set(preds) - set(gts)), sorted(set(gts) - set(preds))
    if only_pred or only_gt:
        raise PairingError(f"unmatched masks: predictions only {only_pred}, ground truth only {only_gt}")
    if not preds:
        raise PairingError(f"no masks found in {pred_dir}")
    rows, total = [], None
    for stem in sorted(preds):
        cm = confusion(read_mask(preds[stem]), read_mask(gts[stem]))
        total = cm if total is None else total + cm
        rows.append({"image": stem, **summarize(cm)})
    return EvalReport(rows, total)
