"""Detection metrics derived from the confusion matrix (UAV = positive).

Degenerate denominators yield the defined value 0 and set a flag instead
of raising; only an entirely empty matrix is an error.
"""

from dataclasses import dataclass, field
from typing import List, Optional

from .errors import EmptyMatrix


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def add(self, label: int, pred: int) -> "ConfusionMatrix":
        return ConfusionMatrix(
            tp=self.tp + (label == 1 and pred == 1),
            fp=self.fp + (label == 0 and pred == 1),
            fn=self.fn + (label == 1 and pred == 0),
            tn=self.tn + (label == 0 and pred == 0))


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    far: float  # false-alarm rate fp / (fp + tn)
    mdr: float  # missed-detection rate fn / (fn + tp)
    matrix: ConfusionMatrix
    degenerate: List[str] = field(default_factory=list)
    snr_db: Optional[float] = None


def _rate(num: int, den: int, name: str, flags: List[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def metrics(cm: ConfusionMatrix) -> EvalReport:
    """Standard accuracy/precision/recall/F1 plus FAR and MDR."""
    if cm.total == 0:
        raise EmptyMatrix("confusion matrix is empty")
    flags: List[str] = []
    accuracy = (cm.tp + cm.tn) / cm.total
    precision = _rate(cm.tp, cm.tp + cm.fp, "precision", flags)
    recall = _rate(cm.tp, cm.tp + cm.fn, "recall", flags)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1")
    far = _rate(cm.fp, cm.fp + cm.tn, "far", flags)
    mdr = _rate(cm.fn, cm.fn + cm.tp, "mdr", flags)
    return EvalReport(accuracy, precision, recall, f1, far, mdr, cm, flags)


METRIC_FIELDS = ("accuracy", "precision", "recall", "f1", "far", "mdr")


def metrics_csv_lines(report: EvalReport) -> List[str]:
    lines = ["metric,value"]
    for name in METRIC_FIELDS:
        lines.append(f"{name},{getattr(report, name):.6f}")
    lines.append(f"tp,{report.matrix.tp}")
    lines.append(f"fp,{report.matrix.fp}")
    lines.append(f"fn,{report.matrix.fn}")
    lines.append(f"tn,{report.matrix.tn}")
    if report.degenerate:
        lines.append(f"degenerate,{'|'.join(report.degenerate)}")
    return lines
