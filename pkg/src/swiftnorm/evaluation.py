"""External clustering metrics against gold labels: AMI and the harmonic-mean
Jaccard precision/recall."""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import gammaln

REPORT_COLUMNS = ("model", "explained_variance", "n_dimensions", "n_clusters",
                  "recall", "precision", "ami")


class LengthMismatch(ValueError):
    """Gold and machine label vectors differ in length."""


@dataclass(frozen=True)
class Contingency:
    counts: dict[tuple[int, int], int]
    gold_sizes: dict[int, int]
    machine_sizes: dict[int, int]
    n_total: int

    def table(self) -> np.ndarray:
        """Dense gold x machine count matrix (labels in sorted order)."""
        g = {k: i for i, k in enumerate(sorted(self.gold_sizes))}
        c = {k: i for i, k in enumerate(sorted(self.machine_sizes))}
        out = np.zeros((len(g), len(c)), dtype=np.int64)
        for (gi, ci), n in self.counts.items():
            out[g[gi], c[ci]] = n
        return out


def _labels(x) -> list:
    return x.tolist() if isinstance(x, np.ndarray) else list(x)


def contingency(gold, machine) -> Contingency:
    gold, machine = _labels(gold), _labels(machine)
    if len(gold) != len(machine):
        raise LengthMismatch(f"{len(gold)} gold labels vs {len(machine)} machine labels")
    if not gold:
        raise ValueError("need at least one labelled item")
    return Contingency(
        counts=dict(Counter(zip(gold, machine))),
        gold_sizes=dict(Counter(gold)),
        machine_sizes=dict(Counter(machine)),
        n_total=len(gold),
    )


def _entropy(sizes, n: int) -> float:
    p = np.fromiter(sizes, dtype=np.float64) / n
    return float(-np.sum(p * np.log(p)))


def mutual_information(c: Contingency) -> float:
    n = c.n_total
    terms = [nij / n * math.log(n * nij / (c.gold_sizes[g] * c.machine_sizes[m]))
             for (g, m), nij in c.counts.items()]
    return math.fsum(terms)


def expected_mutual_information(gold_sizes: Sequence[int], machine_sizes: Sequence[int],
                                n: int) -> float:
    """E[MI] under the hypergeometric model with fixed margins.

    Cluster sizes are grouped so each distinct (a, b) size pair is summed once.
    """
    a_counts = Counter(gold_sizes)
    b_counts = Counter(machine_sizes)
    lg_n = gammaln(n + 1)
    total = []
    for a, ka in a_counts.items():
        for b, kb in b_counts.items():
            lo = max(1, a + b - n)
            hi = min(a, b)
            if lo > hi:
                continue
            nij = np.arange(lo, hi + 1, dtype=np.float64)
            log_p = (gammaln(a + 1) + gammaln(b + 1) + gammaln(n - a + 1) + gammaln(n - b + 1)
                     - lg_n - gammaln(nij + 1) - gammaln(a - nij + 1)
                     - gammaln(b - nij + 1) - gammaln(n - a - b + nij + 1))
            term = nij / n * np.log(n * nij / (a * b)) * np.exp(log_p)
            total.append(ka * kb * math.fsum(term.tolist()))
    return math.fsum(total)


def ami(c: Contingency) -> float:
    """Adjusted mutual information, arithmetic-mean normalisation, natural log."""
    n = c.n_total
    ng, nm = len(c.gold_sizes), len(c.machine_sizes)
    if len(c.counts) == ng == nm:
        # identical partitions up to relabelling; also covers the 0/0 cases
        return 1.0
    mi = mutual_information(c)
    if ng in (1, n) or nm in (1, n):
        # one side fully determined by the margins: MI equals its expectation
        emi = mi
    else:
        emi = expected_mutual_information(c.gold_sizes.values(), c.machine_sizes.values(), n)
    mean_h = 0.5 * (_entropy(c.gold_sizes.values(), n) + _entropy(c.machine_sizes.values(), n))
    denom = mean_h - emi
    if denom == 0.0:
        return 1.0 if mi == emi else 0.0
    return (mi - emi) / denom


def jaccard_pr(gold, machine) -> tuple[float, float]:
    """(precision_hm, recall_hm): harmonic means of |S|/|c| and |S|/|g| over
    every gold/machine pair with a nonempty overlap S."""
    c = contingency(gold, machine)
    k = len(c.counts)
    inv_recall = math.fsum(c.gold_sizes[g] / s for (g, _), s in c.counts.items())
    inv_precision = math.fsum(c.machine_sizes[m] / s for (_, m), s in c.counts.items())
    return k / inv_precision, k / inv_recall


@dataclass
class EvalReport:
    ami: float
    recall_hm: float
    precision_hm: float
    n_clusters_machine: int
    n_clusters_gold: int
    settings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def table_row(self, model: str) -> dict:
        s = self.settings
        return {
            "model": model,
            "explained_variance": s.get("explained_variance", ""),
            "n_dimensions": s.get("n_dimensions", ""),
            "n_clusters": self.n_clusters_machine,
            "recall": self.recall_hm,
            "precision": self.precision_hm,
            "ami": self.ami,
        }


def evaluate(gold, machine, settings: dict | None = None) -> EvalReport:
    c = contingency(gold, machine)
    precision, recall = jaccard_pr(gold, machine)
    return EvalReport(
        ami=ami(c),
        recall_hm=recall,
        precision_hm=precision,
        n_clusters_machine=len(c.machine_sizes),
        n_clusters_gold=len(c.gold_sizes),
        settings=dict(settings or {}),
    )


def write_report_json(path: str | Path, report: EvalReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path: str | Path, rows: Sequence[tuple[str, EvalReport]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for model, report in rows:
            writer.writerow(report.table_row(model))


def read_labels(path: str | Path, label_column: str | None = None) -> dict[str, str]:
    """unique_line_text -> label from a CSV with a header row.

    The label column defaults to ``gold_id`` or ``cluster_id`` when present,
    otherwise the second column.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        if "unique_line_text" not in cols:
            raise ValueError(f"{path}: no unique_line_text column")
        if label_column is None:
            label_column = next((c for c in ("gold_id", "cluster_id") if c in cols), None)
            if label_column is None:
                others = [c for c in cols if c != "unique_line_text"]
                if not others:
                    raise ValueError(f"{path}: no label column")
                label_column = others[0]
        out: dict[str, str] = {}
        for row in reader:
            text = row["unique_line_text"]
            label = row[label_column]
            if out.setdefault(text, label) != label:
                raise ValueError(f"{path}: line {text!r} has two labels")
        return out
