"""End-to-end runs: ingest, preprocess, features, clustering, evaluation.

Also hosts the parameter sweep and the first-letter chunked run.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, kernels
from .cluster import (ClusterAssignment, agglomerate, baseline_first_two, bound_one_cluster,
                      bound_singletons, from_parents, propagate, write_cluster_report)
from .evaluation import REPORT_COLUMNS, EvalReport, evaluate, read_labels
from .features import (FeatureMatrix, InvalidSelector, assemble, build_vocabulary,
                       load_matrix_cache, lsa_project, one_hot_matrix, save_matrix_cache,
                       similarity_matrix, svd, tfidf_matrix)
from .ingest import DEFAULT_TAGS, read_records
from .preprocess import Corpus, build_corpus

log = logging.getLogger(__name__)

FAMILIES = ("onehot", "tfidf", "lsa", "similarity")
DIST_MAGIC = b"SWNDST01"
SWEEP_EXTRA = ("families", "ngram_max", "lsa_k", "lsa_variance", "threshold", "error")


@dataclass
class RunConfig:
    inputs: list[str] = field(default_factory=list)
    format: str = "plain"
    tags: list[str] = field(default_factory=lambda: sorted(DEFAULT_TAGS))
    families: list[str] = field(default_factory=lambda: ["similarity"])
    ngram_max: int = 1
    lsa_k: int | None = None
    lsa_variance: float | None = 0.9
    lsa_base: str = "tfidf"
    weights: dict[str, float] = field(default_factory=dict)
    normalize_rows: bool = False
    threshold: float = 0.75
    linkage: str = "average"
    strict_gate: bool = False
    on_block: str = "skip"
    max_distance: float | None = None
    chunk: str = "off"
    gold: str | None = None
    out: str | None = None
    seed: int = 0
    threads: int | None = None
    cache_dir: str | None = None

    def validate(self) -> None:
        if not self.families:
            raise ValueError("at least one feature family is required")
        unknown = set(self.families) - set(FAMILIES)
        if unknown:
            raise ValueError(f"unknown feature families: {sorted(unknown)}")
        if len(set(self.families)) != len(self.families):
            raise ValueError("feature families listed twice")
        if set(self.weights) - set(self.families):
            raise ValueError("weights given for families that are not selected")
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError(f"threshold must lie in (0, 1], got {self.threshold}")
        if self.ngram_max not in (1, 2):
            raise ValueError("ngram_max must be 1 or 2")
        if self.format not in ("plain", "mt"):
            raise ValueError("format must be plain or mt")
        if self.lsa_base not in ("tfidf", "onehot"):
            raise ValueError("lsa_base must be tfidf or onehot")
        if "lsa" in self.families and self.lsa_k is None and self.lsa_variance is None:
            raise ValueError("lsa needs lsa_k or lsa_variance")
        if self.lsa_k is not None and self.lsa_k <= 0:
            raise InvalidSelector(f"lsa_k must be positive, got {self.lsa_k}")
        if self.lsa_variance is not None and not 0.0 < self.lsa_variance <= 1.0:
            raise InvalidSelector(f"lsa_variance must lie in (0, 1], got {self.lsa_variance}")
        if self.chunk not in ("off", "first-letter"):
            raise ValueError("chunk must be off or first-letter")
        if self.on_block not in ("skip", "stop"):
            raise ValueError("on_block must be skip or stop")
        if self.linkage not in kernels.LINKAGES:
            raise ValueError(f"unknown linkage {self.linkage!r}")

    @property
    def model_name(self) -> str:
        names = []
        for fam in self.families:
            if fam == "lsa":
                names.append(f"{self.lsa_base}-lsa")
            else:
                names.append(fam)
        name = "+".join(names)
        if self.ngram_max == 2 and any(f != "similarity" for f in self.families):
            name += " bigrams"
        return name

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def recipe(self) -> dict:
        """The settings that determine the feature matrix."""
        keys = ["families", "ngram_max", "weights", "normalize_rows", "lsa_base"]
        out = {k: getattr(self, k) for k in keys}
        if "lsa" in self.families:
            out["lsa_k"] = self.lsa_k
            out["lsa_variance"] = None if self.lsa_k is not None else self.lsa_variance
        return out


class FeatureCache:
    """In-memory reuse of the expensive pieces across runs on one corpus;
    with ``cache_dir`` the similarity and distance matrices also persist on disk."""

    def __init__(self, cache_dir: str | Path | None = None):
        self.cache_dir = Path(cache_dir) if cache_dir is not None else None
        self._mem: dict[Any, Any] = {}

    def get(self, key, build):
        if key not in self._mem:
            self._mem[key] = build()
        return self._mem[key]

    def similarity(self, corpus: Corpus, threads: int | None) -> FeatureMatrix:
        return self.get(("sim", corpus.content_hash()),
                        lambda: similarity_matrix(corpus, threads, self.cache_dir))

    def distances(self, corpus: Corpus, recipe: dict, build) -> np.ndarray:
        blob = json.dumps(recipe, sort_keys=True).encode()
        key = hashlib.sha256(corpus.content_hash().encode() + b"\0" + blob).hexdigest()[:24]

        def load_or_build():
            path = self.cache_dir / f"dist-{key}.bin" if self.cache_dir else None
            if path is not None and path.is_file():
                values = load_matrix_cache(path, DIST_MAGIC)
                if values.shape[0] == len(corpus):
                    log.info("distance cache hit: %s", path)
                    return values
            values = build()
            if path is not None:
                save_matrix_cache(path, values, DIST_MAGIC)
            return values

        return self.get(("dist", key), load_or_build)


def _bow(corpus: Corpus, cfg: RunConfig, kind: str, cache: FeatureCache) -> FeatureMatrix:
    key = ("bow", corpus.content_hash(), kind, cfg.ngram_max, cfg.normalize_rows)

    def build():
        vocab = build_vocabulary(corpus, cfg.ngram_max)
        if kind == "onehot":
            return one_hot_matrix(corpus, vocab)
        return tfidf_matrix(corpus, vocab, normalize=cfg.normalize_rows)

    return cache.get(key, build)


def _lsa(corpus: Corpus, cfg: RunConfig, cache: FeatureCache) -> FeatureMatrix:
    base = _bow(corpus, cfg, cfg.lsa_base, cache)
    dec = cache.get(("svd", corpus.content_hash(), cfg.lsa_base, cfg.ngram_max, cfg.normalize_rows),
                    lambda: svd(base.values))
    if cfg.lsa_k is not None:
        k = cfg.lsa_k
        if k > dec.s.size:
            log.warning("lsa_k=%d exceeds the %d available components; clipped", k, dec.s.size)
            k = dec.s.size
        return lsa_project(base, k=k, decomposition=dec)
    return lsa_project(base, variance_target=cfg.lsa_variance, decomposition=dec)


def build_features(corpus: Corpus, cfg: RunConfig, cache: FeatureCache | None = None) -> FeatureMatrix:
    cache = cache or FeatureCache(cfg.cache_dir)
    parts = []
    for fam in cfg.families:
        if fam == "similarity":
            parts.append(cache.similarity(corpus, cfg.threads))
        elif fam == "lsa":
            parts.append(_lsa(corpus, cfg, cache))
        else:
            parts.append(_bow(corpus, cfg, fam, cache))
    weights = [float(cfg.weights.get(f, 1.0)) for f in cfg.families]
    return assemble(parts, weights)


def feature_settings(fm: FeatureMatrix, cfg: RunConfig) -> dict:
    ev = fm.explained_variance
    return {
        "model": cfg.model_name,
        "explained_variance": float(ev[-1]) if ev is not None else None,
        "n_dimensions": int(fm.shape[1]),
        "families": list(cfg.families),
        "threshold": cfg.threshold,
    }


def cluster_corpus(corpus: Corpus, cfg: RunConfig,
                   cache: FeatureCache | None = None) -> tuple[ClusterAssignment, dict]:
    """Features plus gated agglomeration for one corpus."""
    cache = cache or FeatureCache(cfg.cache_dir)
    fm = build_features(corpus, cfg, cache)
    dist = cache.distances(corpus, cfg.recipe(),
                           lambda: kernels.backend.euclidean_distances(fm.values, cfg.threads))
    assignment = agglomerate(
        fm, corpus, threshold=cfg.threshold, linkage=cfg.linkage, strict=cfg.strict_gate,
        on_block=cfg.on_block,
        max_distance=math.inf if cfg.max_distance is None else cfg.max_distance,
        threads=cfg.threads, distances=dist,
    )
    return assignment, feature_settings(fm, cfg)


def chunk_partition(corpus: Corpus) -> list[list[int]]:
    """Canonical-form indices grouped by the first character of their sorted text."""
    groups: dict[str, list[int]] = {}
    for i, form in enumerate(corpus.forms):
        groups.setdefault(form.sorted_text[0], []).append(i)
    return [groups[k] for k in sorted(groups)]


def cluster_chunked(corpus: Corpus, cfg: RunConfig,
                    cache: FeatureCache | None = None) -> tuple[ClusterAssignment, dict]:
    """Cluster each first-letter chunk, then cluster the chunk founders together."""
    cache = cache or FeatureCache(cfg.cache_dir)
    parent = np.arange(len(corpus), dtype=np.int64)
    merges = []
    for members in chunk_partition(corpus):
        sub, _ = cluster_corpus(corpus.subset(members), cfg, cache)
        glob = np.asarray(members, dtype=np.int64)
        founders = glob[np.asarray(sub.founders, dtype=np.int64)]
        parent[glob] = founders[sub.labels]
        merges.extend((int(glob[a]), int(glob[b]), d) for a, b, d in sub.merge_log)
    reps = np.unique(parent)
    top, settings = cluster_corpus(corpus.subset(reps.tolist()), cfg, cache)
    top_founders = reps[np.asarray(top.founders, dtype=np.int64)]
    final_of_rep = top_founders[top.labels]
    lookup = dict(zip(reps.tolist(), final_of_rep.tolist()))
    parent = np.array([lookup[p] for p in parent.tolist()], dtype=np.int64)
    merges.extend((int(reps[a]), int(reps[b]), d) for a, b, d in top.merge_log)
    settings = dict(settings, chunks=len(chunk_partition(corpus)))
    return from_parents(parent, [f.rep for f in corpus.forms], merges), settings


@dataclass
class RunResult:
    corpus: Corpus
    assignment: ClusterAssignment
    line_labels: np.ndarray
    settings: dict
    report: EvalReport | None = None
    n_records: int = 0


def load_corpus(cfg: RunConfig) -> tuple[Corpus, int]:
    records = read_records(cfg.inputs, cfg.format, cfg.tags)
    return build_corpus(records), len(records)


def gold_vectors(corpus: Corpus, line_labels: np.ndarray,
                 gold: dict[str, str]) -> tuple[list[str], list[int]]:
    keep = [i for i, line in enumerate(corpus.lines) if line.text in gold]
    missing = len(corpus.lines) - len(keep)
    if missing:
        log.warning("%d unique line(s) have no gold label and are left out of evaluation", missing)
    if not keep:
        raise ValueError("no unique line has a gold label")
    return [gold[corpus.lines[i].text] for i in keep], line_labels[keep].tolist()


def evaluate_lines(corpus: Corpus, line_labels: np.ndarray, gold: dict[str, str],
                   settings: dict) -> EvalReport:
    g, m = gold_vectors(corpus, line_labels, gold)
    return evaluate(g, m, dict(settings, n_lines_evaluated=len(g)))


def run(cfg: RunConfig, corpus: Corpus | None = None, cache: FeatureCache | None = None,
        write: bool = True) -> RunResult:
    cfg.validate()
    n_records = 0
    if corpus is None:
        corpus, n_records = load_corpus(cfg)
    cache = cache or FeatureCache(cfg.cache_dir)
    if cfg.chunk == "first-letter":
        assignment, settings = cluster_chunked(corpus, cfg, cache)
    else:
        assignment, settings = cluster_corpus(corpus, cfg, cache)
    labels = propagate(assignment, corpus)
    report = None
    if cfg.gold:
        report = evaluate_lines(corpus, labels, read_labels(cfg.gold), settings)
    result = RunResult(corpus, assignment, labels, settings, report, n_records)
    if write and cfg.out:
        write_run(cfg, result)
    return result


def metrics_payload(result: RunResult) -> dict:
    s = result.settings
    out = {
        "model": s["model"],
        "explained_variance": s["explained_variance"],
        "n_dimensions": s["n_dimensions"],
        "n_records": result.n_records,
        "n_unique_lines": len(result.corpus.lines),
        "n_canonical_forms": len(result.corpus),
        "n_clusters": result.assignment.n_clusters,
        "n_merges": len(result.assignment.merge_log),
    }
    if "chunks" in s:
        out["chunks"] = s["chunks"]
    if result.report is not None:
        r = result.report
        out.update(ami=r.ami, recall=r.recall_hm, precision=r.precision_hm,
                   n_clusters_gold=r.n_clusters_gold,
                   n_lines_evaluated=r.settings["n_lines_evaluated"])
    return out


def write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def manifest(cfg: RunConfig, command: str, corpus: Corpus | None = None) -> dict:
    out = {
        "command": command,
        "config": cfg.to_dict(),
        "swiftnorm_version": __version__,
        "kernels_backend": kernels.backend.name,
    }
    if corpus is not None:
        out["corpus_sha256"] = corpus.content_hash()
    return out


def write_run(cfg: RunConfig, result: RunResult) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    write_cluster_report(out / "clusters.csv", result.corpus, result.assignment)
    write_json(out / "metrics.json", metrics_payload(result))
    command = "chunked-run" if cfg.chunk == "first-letter" else "run"
    write_json(out / "manifest.json", manifest(cfg, command, result.corpus))


def expand_grid(base: RunConfig, grid: dict) -> list[RunConfig]:
    """Cross product of grid axes applied to ``base``; equivalent points appear once.

    Axes: families (list of lists), ngram_max, lsa_k, lsa_variance, threshold.
    ``lsa_k`` and ``lsa_variance`` values together form one selector axis.
    """
    allowed = {"families", "ngram_max", "lsa_k", "lsa_variance", "threshold"}
    unknown = set(grid) - allowed
    if unknown:
        raise ValueError(f"unknown grid axes: {sorted(unknown)}")
    if not grid or any(len(v) == 0 for v in grid.values()):
        return []
    selectors = [("k", k) for k in grid.get("lsa_k", [])]
    selectors += [("variance", v) for v in grid.get("lsa_variance", [])]
    if not selectors:
        selectors = [("k", base.lsa_k)] if base.lsa_k is not None else [("variance", base.lsa_variance)]
    axes = [
        [list(f) for f in grid.get("families", [base.families])],
        list(grid.get("ngram_max", [base.ngram_max])),
        selectors,
        list(grid.get("threshold", [base.threshold])),
    ]
    seen, points = set(), []
    for fams, ngram, (kind, sel), thr in itertools.product(*axes):
        cfg = dataclasses.replace(base, families=fams, ngram_max=int(ngram), threshold=float(thr),
                                  weights={k: v for k, v in base.weights.items() if k in fams})
        if "lsa" in fams:
            cfg.lsa_k = int(sel) if kind == "k" else None
            cfg.lsa_variance = float(sel) if kind == "variance" else None
        else:
            cfg.lsa_k, cfg.lsa_variance = None, None
        if fams == ["similarity"]:
            cfg.ngram_max = 1
        key = json.dumps({**cfg.recipe(), "threshold": cfg.threshold}, sort_keys=True)
        if key not in seen:
            seen.add(key)
            points.append(cfg)
    return points


def _sweep_row(cfg: RunConfig, settings: dict | None, report: EvalReport | None,
               n_clusters: int | None, error: str = "") -> dict:
    s = settings or {}
    row = {
        "model": s.get("model", cfg.model_name),
        "explained_variance": "" if s.get("explained_variance") is None else s["explained_variance"],
        "n_dimensions": s.get("n_dimensions", ""),
        "n_clusters": "" if n_clusters is None else n_clusters,
        "recall": report.recall_hm if report else "",
        "precision": report.precision_hm if report else "",
        "ami": report.ami if report else "",
        "families": "+".join(cfg.families),
        "ngram_max": cfg.ngram_max,
        "lsa_k": "" if cfg.lsa_k is None else cfg.lsa_k,
        "lsa_variance": "" if cfg.lsa_variance is None else cfg.lsa_variance,
        "threshold": cfg.threshold,
        "error": error,
    }
    return row


def sweep(base: RunConfig, grid: dict, corpus: Corpus | None = None,
          reference_rows: bool = False, out_csv: str | Path | None = None) -> list[dict]:
    """One row per grid point; failures become rows with an error message.

    The similarity matrix and decompositions are shared across points.
    """
    points = expand_grid(base, grid)
    rows: list[dict] = []
    cache = FeatureCache(base.cache_dir)
    gold = read_labels(base.gold) if base.gold else None
    if points or reference_rows:
        if corpus is None:
            corpus, _ = load_corpus(base)
    for cfg in points:
        try:
            cfg.validate()
            res = run(dataclasses.replace(cfg, out=None, gold=None), corpus=corpus,
                      cache=cache, write=False)
            report = evaluate_lines(corpus, res.line_labels, gold, res.settings) if gold else None
            rows.append(_sweep_row(cfg, res.settings, report, res.assignment.n_clusters))
        except Exception as exc:  # noqa: BLE001 - a failed point must not end the sweep
            log.warning("sweep point %s failed: %s", cfg.recipe(), exc)
            rows.append(_sweep_row(cfg, None, None, None, f"{type(exc).__name__}: {exc}"))
    if reference_rows:
        n_lines = len(corpus.lines)
        refs = [
            ("one cluster", bound_one_cluster(n_lines).labels),
            ("m clusters", bound_singletons(n_lines).labels),
            ("baseline", baseline_first_two(corpus.lines).labels),
        ]
        for name, labels in refs:
            report = evaluate_lines(corpus, labels, gold, {}) if gold else None
            row = _sweep_row(base, {"model": name, "n_dimensions": ""}, report,
                             int(np.unique(labels).size))
            row.update(families="", ngram_max="", lsa_k="", lsa_variance="", threshold="")
            rows.append(row)
    rows.sort(key=lambda r: (r["model"], -1 if r["n_dimensions"] == "" else r["n_dimensions"]))
    if out_csv is not None:
        write_sweep_csv(out_csv, rows)
    return rows


def write_sweep_csv(path: str | Path, rows: Sequence[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(REPORT_COLUMNS) + list(SWEEP_EXTRA),
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
