"""Binary confusion matrix, accuracy/precision/recall/F1 and trial averaging."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import InvalidLabelError, InvalidShapeError

POSITIVE_CLASS_NAME = "fake"


@dataclass(frozen=True)
class ConfusionMatrix2:
    tp: int
    fp: int
    fn: int
    tn: int
    positive_class: int = 1

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def swapped(self) -> "ConfusionMatrix2":
        """Same predictions seen with the other class as positive."""
        return ConfusionMatrix2(self.tn, self.fn, self.fp, self.tp, 1 - self.positive_class)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float
    wall_time_s: float


@dataclass
class EvalReport:
    confusion: ConfusionMatrix2
    accuracy: float
    precision: float
    recall: float
    f1: float
    wall_time_s: float = 0.0
    history: List[EpochRecord] = field(default_factory=list)
    split: str = "val"
    arch_id: str = ""
    epochs: int = 0
    seeds: List[int] = field(default_factory=list)
    losses: List[float] = field(default_factory=list)
    best_val_accuracy: Optional[float] = None
    test: Optional["EvalReport"] = None
    trials: List["EvalReport"] = field(default_factory=list)


def positive_index(class_names: Sequence[str], positive: str = POSITIVE_CLASS_NAME) -> int:
    """Index of the positive class: ``positive`` if present, else class 1."""
    names = [c.lower() for c in class_names]
    return names.index(positive.lower()) if positive.lower() in names else 1


def confusion(preds: Sequence[int], labels: Sequence[int], positive_class: int = 1) -> ConfusionMatrix2:
    p = np.asarray(preds, dtype=np.int64)
    y = np.asarray(labels, dtype=np.int64)
    if p.shape != y.shape or p.ndim != 1 or p.size == 0:
        raise InvalidShapeError(f"preds/labels must be equal-length non-empty lists, got {p.shape} vs {y.shape}")
    if not (np.isin(p, (0, 1)).all() and np.isin(y, (0, 1)).all()) or positive_class not in (0, 1):
        raise InvalidLabelError("class indices must be 0 or 1")
    pp, yp = p == positive_class, y == positive_class
    return ConfusionMatrix2(
        tp=int(np.sum(pp & yp)),
        fp=int(np.sum(pp & ~yp)),
        fn=int(np.sum(~pp & yp)),
        tn=int(np.sum(~pp & ~yp)),
        positive_class=positive_class,
    )


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def scores(cm: ConfusionMatrix2):
    """(accuracy, precision, recall, f1); any 0/0 is reported as 0."""
    accuracy = _ratio(cm.tp + cm.tn, cm.total)
    precision = _ratio(cm.tp, cm.tp + cm.fp)
    recall = _ratio(cm.tp, cm.tp + cm.fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return accuracy, precision, recall, f1


def argmax_predict(probs: np.ndarray) -> List[int]:
    # np.argmax picks the first maximum, i.e. the lower index on ties
    return [int(i) for i in np.argmax(probs, axis=1)]


def make_report(preds, labels, positive_class: int = 1, **kw) -> EvalReport:
    cm = confusion(preds, labels, positive_class)
    acc, prec, rec, f1 = scores(cm)
    return EvalReport(confusion=cm, accuracy=acc, precision=prec, recall=rec, f1=f1, **kw)


def aggregate_trials(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean of the scalar metrics; the confusion matrix of the best-accuracy trial."""
    if not reports:
        raise ValueError("aggregate_trials needs at least one report")
    if len(reports) == 1:
        return replace(reports[0], trials=list(reports))
    best = max(range(len(reports)), key=lambda i: (reports[i].accuracy, -i))

    def mean(attr):
        return float(np.mean([getattr(r, attr) for r in reports]))

    test = None
    if all(r.test is not None for r in reports):
        test = aggregate_trials([r.test for r in reports])
        test.trials = []
    best_vals = [r.best_val_accuracy for r in reports if r.best_val_accuracy is not None]
    return EvalReport(
        confusion=reports[best].confusion,
        accuracy=mean("accuracy"),
        precision=mean("precision"),
        recall=mean("recall"),
        f1=mean("f1"),
        wall_time_s=mean("wall_time_s"),
        history=reports[best].history,
        split=reports[0].split,
        arch_id=reports[0].arch_id,
        epochs=reports[0].epochs,
        seeds=[s for r in reports for s in r.seeds],
        losses=reports[best].losses,
        best_val_accuracy=float(np.mean(best_vals)) if best_vals else None,
        test=test,
        trials=list(reports),
    )


def report_items(report: EvalReport, include_timing: bool = False) -> Dict[str, str]:
    """Key/value view of a report.

    Wall-clock time is left out unless asked for, so report files of
    deterministic runs are byte-identical.
    """
    cm = report.confusion
    items = {
        "arch": report.arch_id,
        "split": report.split,
        "epochs": str(report.epochs),
        "seeds": ",".join(str(s) for s in report.seeds),
        "samples": str(cm.total),
        "positive_class": str(cm.positive_class),
        "tp": str(cm.tp),
        "fp": str(cm.fp),
        "fn": str(cm.fn),
        "tn": str(cm.tn),
        "accuracy": repr(report.accuracy),
        "precision": repr(report.precision),
        "recall": repr(report.recall),
        "f1": repr(report.f1),
    }
    if report.best_val_accuracy is not None:
        items["best_val_accuracy"] = repr(report.best_val_accuracy)
    if report.losses:
        items["final_train_loss"] = repr(report.losses[-1])
    if report.test is not None:
        for k in ("accuracy", "precision", "recall", "f1"):
            items[f"test_{k}"] = repr(getattr(report.test, k))
        tcm = report.test.confusion
        items["test_samples"] = str(tcm.total)
    if include_timing:
        items["wall_time_s"] = repr(report.wall_time_s)
    return items


def write_report(report: EvalReport, path, include_timing: bool = False) -> None:
    text = "".join(f"{k}={v}\n" for k, v in report_items(report, include_timing).items())
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def read_report(path) -> Dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line:
                k, _, v = line.partition("=")
                out[k] = v
    return out


def format_report(report: EvalReport, class_names: Sequence[str] = ("fake", "real")) -> str:
    cm = report.confusion
    pos = class_names[cm.positive_class] if cm.positive_class < len(class_names) else cm.positive_class
    lines = [
        f"{report.arch_id or 'model'}  split={report.split}  samples={cm.total}  positive={pos}",
        f"  confusion  tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}",
        f"  accuracy   {report.accuracy:.4f}",
        f"  precision  {report.precision:.4f}",
        f"  recall     {report.recall:.4f}",
        f"  f1         {report.f1:.4f}",
    ]
    return "\n".join(lines)


TABLE_COLUMNS = ("model", "epochs", "val-acc", "test-acc", "time-s")


def format_table(rows: Sequence[Sequence], columns: Sequence[str] = TABLE_COLUMNS) -> str:
    """Fixed-width plain-text table; floats get four decimals (time two)."""
    cells = [list(columns)]
    for row in rows:
        out = []
        for col, v in zip(columns, row):
            if isinstance(v, float):
                out.append(f"{v:.2f}" if col == "time-s" else f"{v:.4f}")
            else:
                out.append(str(v))
        cells.append(out)
    widths = [max(len(r[i]) for r in cells) for i in range(len(columns))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)
