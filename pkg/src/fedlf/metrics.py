"""Head/middle/tail accuracy and per-round report files (CSV or JSONL)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from fedlf.errors import InputError

CSV_COLUMNS = ["round", "acc_head", "acc_middle", "acc_tail", "acc_all",
               "loss_a", "loss_c", "loss_d", "loss_total", "clients"]
_FLOATS = CSV_COLUMNS[1:9]


@dataclass(frozen=True)
class GroupSpec:
    head_threshold: int
    tail_threshold: int
    head: tuple[int, ...]
    middle: tuple[int, ...]
    tail: tuple[int, ...]

    def group_of(self, num_classes: int) -> np.ndarray:
        """Array mapping class id -> 0 (head), 1 (middle), 2 (tail)."""
        g = np.ones(num_classes, dtype=np.int64)
        g[list(self.head)] = 0
        g[list(self.tail)] = 2
        return g


def classify_groups(train_counts, head_threshold: int, tail_threshold: int) -> GroupSpec:
    """head: count > head_threshold; tail: count < tail_threshold; equality goes to middle."""
    if head_threshold < tail_threshold:
        raise InputError("head_threshold must be >= tail_threshold")
    counts = np.asarray(train_counts).reshape(-1)
    head = tuple(int(c) for c in np.flatnonzero(counts > head_threshold))
    tail = tuple(int(c) for c in np.flatnonzero(counts < tail_threshold))
    middle = tuple(c for c in range(counts.shape[0]) if c not in head and c not in tail)
    return GroupSpec(head_threshold, tail_threshold, head, middle, tail)


@dataclass(frozen=True)
class GroupAccuracy:
    acc_head: float
    acc_middle: float
    acc_tail: float
    acc_all: float
    correct: tuple[int, int, int]
    total: tuple[int, int, int]


def group_accuracies(predictions, labels, groups: GroupSpec, num_classes: int | None = None):
    """Per-group and overall accuracy. An empty group's accuracy is NaN."""
    pred = np.asarray(predictions).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if pred.shape != y.shape:
        raise InputError(f"{pred.size} predictions for {y.size} labels")
    if num_classes is None:
        num_classes = max(len(groups.head) + len(groups.middle) + len(groups.tail),
                          int(y.max()) + 1 if y.size else 0)
    gid = groups.group_of(num_classes)[y]
    hit = pred == y
    correct = tuple(int(hit[gid == g].sum()) for g in range(3))
    total = tuple(int((gid == g).sum()) for g in range(3))
    accs = [c / t if t else math.nan for c, t in zip(correct, total)]
    acc_all = sum(correct) / sum(total) if sum(total) else math.nan
    return GroupAccuracy(accs[0], accs[1], accs[2], acc_all, correct, total)


@dataclass
class RoundReport:
    round: int
    acc_head: float
    acc_middle: float
    acc_tail: float
    acc_all: float
    loss_a: float = math.nan
    loss_c: float = math.nan
    loss_d: float = math.nan
    loss_total: float = math.nan
    clients: list[int] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"round": self.round, "acc_head": self.acc_head, "acc_middle": self.acc_middle,
                "acc_tail": self.acc_tail, "acc_all": self.acc_all, "loss_a": self.loss_a,
                "loss_c": self.loss_c, "loss_d": self.loss_d, "loss_total": self.loss_total,
                "clients": list(self.clients)}


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def _json_float(v: float):
    return None if math.isnan(v) else round(float(v), 6)


def emit_reports(reports, path, format: str = "csv") -> None:
    if format not in ("csv", "jsonl"):
        raise InputError(f"unknown report format {format!r}")
    try:
        with open(path, "w", newline="") as fh:
            if format == "csv":
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for r in reports:
                    d = r.as_dict()
                    w.writerow([d["round"], *(_fmt(d[k]) for k in _FLOATS),
                                ";".join(str(c) for c in d["clients"])])
            else:
                for r in reports:
                    d = r.as_dict()
                    for k in _FLOATS:
                        d[k] = _json_float(d[k])
                    fh.write(json.dumps(d) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write report {path}: {exc}") from exc


def read_reports(path, format: str = "csv") -> list[RoundReport]:
    out = []
    with open(path, newline="") as fh:
        if format == "csv":
            for row in csv.DictReader(fh):
                clients = [int(c) for c in row["clients"].split(";") if c]
                out.append(RoundReport(int(row["round"]), *(float(row[k]) for k in _FLOATS),
                                       clients=clients))
        elif format == "jsonl":
            for line in fh:
                if not line.strip():
                    continue
                d = json.loads(line)
                vals = [math.nan if d[k] is None else float(d[k]) for k in _FLOATS]
                out.append(RoundReport(int(d["round"]), *vals, clients=list(d["clients"])))
        else:
            raise InputError(f"unknown report format {format!r}")
    return out
