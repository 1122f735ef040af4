"""Gated agglomerative clustering, plus the baseline and bound clusterings."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .features import FeatureMatrix, symmetric_ratio
from .preprocess import Corpus, UniqueLine, tokenize

ON_BLOCK = ("skip", "stop")


@dataclass(frozen=True)
class ClusterAssignment:
    """Dense cluster labels with each cluster's founder and representative tokens.

    ``merge_log`` entries are ``(founder_a, founder_b, distance)`` with
    ``founder_a < founder_b``; the merged cluster keeps ``founder_a``.
    """

    labels: np.ndarray
    reps: tuple[tuple[str, str], ...]
    founders: tuple[int, ...]
    merge_log: tuple[tuple[int, int, float], ...] = ()

    @property
    def n_clusters(self) -> int:
        return len(self.founders)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)


def _token_score(x: str, y: str) -> float:
    if not x or not y:
        return 0.0
    return symmetric_ratio(x, y)


def gate(rep_a: tuple[str, str], rep_b: tuple[str, str], threshold: float = 0.75) -> bool:
    """First/second tokens similar enough, directly or crosswise."""
    a1, a2 = rep_a
    b1, b2 = rep_b
    return any(_token_score(x, y) >= threshold
               for x, y in ((a1, b1), (a2, b2), (a1, b2), (a2, b1)))


def gate_matrix(reps: Sequence[tuple[str, str]], threshold: float = 0.75,
                threads: int | None = None) -> np.ndarray:
    """m x m uint8 matrix of ``gate`` over all representative pairs.

    Token similarities are computed once per distinct token pair.
    """
    tokens = sorted({t for rep in reps for t in rep if t})
    pos = {t: i for i, t in enumerate(tokens)}
    table = np.zeros((len(tokens) + 1, len(tokens) + 1), dtype=bool)
    if tokens:
        table[:-1, :-1] = kernels.backend.threshold_table(tokens, threshold, threads).astype(bool)
    empty = len(tokens)
    t1 = np.array([pos.get(r[0], empty) for r in reps], dtype=np.int64)
    t2 = np.array([pos.get(r[1], empty) for r in reps], dtype=np.int64)
    g = table[t1[:, None], t1[None, :]]
    g |= table[t2[:, None], t2[None, :]]
    g |= table[t1[:, None], t2[None, :]]
    g |= table[t2[:, None], t1[None, :]]
    return g.astype(np.uint8)


def from_parents(parent: np.ndarray, reps: Sequence[tuple[str, str]],
                 merges: Sequence = ()) -> ClusterAssignment:
    """Dense relabelling of a founder array; cluster ids follow founder order."""
    parent = np.asarray(parent, dtype=np.int64)
    founders, labels = np.unique(parent, return_inverse=True)
    return ClusterAssignment(
        labels=labels.astype(np.int64),
        reps=tuple(tuple(reps[f]) for f in founders),
        founders=tuple(int(f) for f in founders),
        merge_log=tuple((int(a), int(b), float(d)) for a, b, d in merges),
    )


def agglomerate(features: FeatureMatrix | np.ndarray, corpus: Corpus,
                threshold: float = 0.75, linkage: str = "average",
                strict: bool = False, on_block: str = "skip",
                max_distance: float = np.inf, threads: int | None = None,
                distances: np.ndarray | None = None) -> ClusterAssignment:
    """Agglomerate canonical forms under the representative-token gate.

    The closest admissible pair (lowest linkage distance, ties to the
    lexicographically smallest founder pair) merges until none remains.
    ``on_block="stop"`` instead takes the closest pair outright and, when the
    gate refuses it, retires both clusters. ``strict`` requires every member
    pair of two clusters to pass the gate rather than just their founders.
    Precomputed Euclidean ``distances`` may be supplied.
    """
    if linkage not in kernels.LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    if on_block not in ON_BLOCK:
        raise ValueError(f"on_block must be one of {ON_BLOCK}")
    m = len(corpus)
    if distances is None:
        values = features.values if isinstance(features, FeatureMatrix) else np.asarray(features)
        if values.shape[0] != m:
            raise ValueError(f"feature rows ({values.shape[0]}) != canonical forms ({m})")
        distances = kernels.backend.euclidean_distances(values, threads)
    reps = [f.rep for f in corpus.forms]
    g = gate_matrix(reps, threshold, threads)
    parent, merges = kernels.backend.agglomerate(
        distances, g, linkage=linkage, strict=strict,
        stop_on_block=(on_block == "stop"), max_distance=max_distance,
    )
    return from_parents(parent, reps, merges)


def _line_key(line: UniqueLine | str) -> tuple[str, str]:
    toks = tokenize(line.text if isinstance(line, UniqueLine) else line)
    return (toks[0], toks[1] if len(toks) > 1 else "")


def baseline_first_two(unique_lines: Sequence[UniqueLine | str]) -> ClusterAssignment:
    """Lines sharing their first two tokens form one cluster."""
    if not unique_lines:
        raise ValueError("baseline needs at least one line")
    keys: dict[tuple[str, str], int] = {}
    founders, labels = [], []
    for i, line in enumerate(unique_lines):
        key = _line_key(line)
        if key not in keys:
            keys[key] = len(founders)
            founders.append(i)
        labels.append(keys[key])
    return ClusterAssignment(np.array(labels, dtype=np.int64), tuple(keys), tuple(founders))


def bound_one_cluster(n: int) -> ClusterAssignment:
    if n < 1:
        raise ValueError("n must be positive")
    return ClusterAssignment(np.zeros(n, dtype=np.int64), (("", ""),), (0,))


def bound_singletons(n: int) -> ClusterAssignment:
    if n < 1:
        raise ValueError("n must be positive")
    return ClusterAssignment(np.arange(n, dtype=np.int64), (("", ""),) * n, tuple(range(n)))


def propagate(assignment: ClusterAssignment, corpus: Corpus) -> np.ndarray:
    """Cluster label of every unique line (inherited from its canonical form)."""
    return assignment.labels[np.asarray(corpus.line_to_form, dtype=np.int64)]


def replay_merges(assignment: ClusterAssignment, reps: Sequence[tuple[str, str]],
                  threshold: float) -> list[tuple[int, int]]:
    """Merges in ``merge_log`` whose founders fail the gate (empty when sound)."""
    alive = set(range(len(reps)))
    bad = []
    for a, b, _ in assignment.merge_log:
        if a not in alive or b not in alive or a >= b:
            bad.append((a, b))
            continue
        if not gate(reps[a], reps[b], threshold):
            bad.append((a, b))
        alive.discard(b)
    return bad


def write_cluster_report(path: str | Path, corpus: Corpus,
                         assignment: ClusterAssignment) -> None:
    """One row per unique line; ``cluster_size`` counts unique lines."""
    line_labels = propagate(assignment, corpus)
    sizes = Counter(line_labels.tolist())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["canonical_id", "unique_line_text", "cluster_id",
                         "cluster_rep_tokens", "cluster_size"])
        for line, label in zip(corpus.lines, line_labels.tolist()):
            rep = " ".join(t for t in assignment.reps[label] if t)
            writer.writerow([line.canonical_index, line.text, label, rep, sizes[label]])
