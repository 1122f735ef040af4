"""Feature families: bag-of-words (one-hot / TF-IDF, optional LSA) and the
pairwise string-similarity matrix, plus their column-wise assembly."""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .preprocess import Corpus

log = logging.getLogger(__name__)

CACHE_MAGIC = b"SWNSIM01"
_HEADER = struct.Struct("<8sQ")


class InvalidSelector(ValueError):
    """LSA component count or variance target out of range."""


class RowMismatch(ValueError):
    """Feature families with different row counts."""


@dataclass(frozen=True)
class Vocabulary:
    terms: tuple[str, ...]
    df: dict[str, int]

    @property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.terms)}

    def __len__(self) -> int:
        return len(self.terms)


@dataclass
class FeatureMatrix:
    values: np.ndarray
    family_spans: list[tuple[str, int, int]]
    explained_variance: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def single(cls, name: str, values: np.ndarray, **kw) -> "FeatureMatrix":
        values = np.ascontiguousarray(values, dtype=np.float64)
        return cls(values, [(name, 0, values.shape[1])], **kw)


def _form_terms(form, ngram_max: int) -> set[str]:
    terms = set(form.sorted_text.split())
    if ngram_max >= 2:
        toks = form.ordered_tokens
        terms.update(f"{x} {y}" for x, y in zip(toks, toks[1:]))
    return terms


def build_vocabulary(corpus: Corpus, ngram_max: int = 1) -> Vocabulary:
    """Unigrams from the token sets; bigrams from each form's original token order."""
    if ngram_max not in (1, 2):
        raise ValueError("ngram_max must be 1 or 2")
    df: dict[str, int] = {}
    for form in corpus.forms:
        for term in _form_terms(form, ngram_max):
            df[term] = df.get(term, 0) + 1
    return Vocabulary(tuple(sorted(df)), df)


def _presence(corpus: Corpus, vocab: Vocabulary) -> np.ndarray:
    index = vocab.index
    ngram_max = 2 if any(" " in t for t in vocab.terms) else 1
    out = np.zeros((len(corpus.forms), len(vocab)), dtype=np.float64)
    for i, form in enumerate(corpus.forms):
        cols = [index[t] for t in _form_terms(form, ngram_max) if t in index]
        out[i, cols] = 1.0
    return out


def one_hot_matrix(corpus: Corpus, vocab: Vocabulary) -> FeatureMatrix:
    return FeatureMatrix.single("onehot", _presence(corpus, vocab))


def idf_weights(vocab: Vocabulary, n_docs: int) -> np.ndarray:
    """Smoothed IDF: ln((1 + N) / (1 + df)) + 1."""
    df = np.array([vocab.df[t] for t in vocab.terms], dtype=np.float64)
    return np.log((1.0 + n_docs) / (1.0 + df)) + 1.0


def tfidf_matrix(corpus: Corpus, vocab: Vocabulary, normalize: bool = False) -> FeatureMatrix:
    """Binary term frequency times smoothed IDF; rows optionally L2-normalised."""
    values = _presence(corpus, vocab) * idf_weights(vocab, len(corpus.forms))
    if normalize:
        norms = np.linalg.norm(values, axis=1, keepdims=True)
        values = values / np.where(norms > 0, norms, 1.0)
    return FeatureMatrix.single("tfidf", values)


@dataclass(frozen=True)
class SVD:
    """Thin SVD with a fixed sign convention and the cumulative energy curve."""

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    cumulative: np.ndarray
    rank: int


def svd(values: np.ndarray) -> SVD:
    """Deterministic thin SVD.

    Each right singular vector is flipped so that its largest-magnitude
    entry is nonnegative. ``cumulative[j]`` is the share of the total squared
    singular values captured by the first j+1 components; it is exactly 1.0
    from the numerical rank onwards.
    """
    values = np.asarray(values, dtype=np.float64)
    u, s, vt = np.linalg.svd(values, full_matrices=False)
    if s.size:
        pivots = np.argmax(np.abs(vt), axis=1)
        signs = np.where(vt[np.arange(vt.shape[0]), pivots] < 0, -1.0, 1.0)
        u = u * signs
        vt = vt * signs[:, None]
    tol = s[0] * max(values.shape) * np.finfo(np.float64).eps if s.size else 0.0
    rank = int(np.count_nonzero(s > tol))
    energy = np.where(np.arange(s.size) < rank, s * s, 0.0)
    if rank == 0:
        cumulative = np.ones(s.size)
    else:
        cumulative = np.cumsum(energy)
        cumulative /= cumulative[-1]
        cumulative[rank - 1:] = 1.0
        np.minimum(cumulative, 1.0, out=cumulative)
    return SVD(u, s, vt, cumulative, rank)


def components_for_variance(cumulative: np.ndarray, target: float) -> int:
    """Smallest k whose cumulative explained variance reaches ``target``."""
    if not 0.0 < target <= 1.0:
        raise InvalidSelector(f"variance target must lie in (0, 1], got {target}")
    return int(np.searchsorted(cumulative, target, side="left")) + 1


def lsa_project(matrix: FeatureMatrix, k: int | None = None,
                variance_target: float | None = None,
                decomposition: SVD | None = None) -> FeatureMatrix:
    """Truncated SVD projection (left singular vectors scaled by singular values).

    Pass exactly one of ``k`` or ``variance_target``. ``decomposition`` lets
    sweeps reuse one SVD across many selectors.
    """
    if (k is None) == (variance_target is None):
        raise InvalidSelector("give exactly one of k or variance_target")
    dec = decomposition if decomposition is not None else svd(matrix.values)
    limit = dec.s.size
    if k is not None:
        if k <= 0 or k > limit:
            raise InvalidSelector(f"k must lie in [1, {limit}], got {k}")
    else:
        k = components_for_variance(dec.cumulative, variance_target)
    values = dec.u[:, :k] * dec.s[:k]
    base = matrix.family_spans[0][0] if len(matrix.family_spans) == 1 else "features"
    return FeatureMatrix.single(
        "lsa", values,
        explained_variance=dec.cumulative[:k].copy(),
        meta={"lsa_base": base, "k": k},
    )


def ratcliff_obershelp(a: str, b: str) -> float:
    """Gestalt similarity 2K / (|a| + |b|); two empty strings score 1.0."""
    return kernels.backend.ratio(a, b)


def symmetric_ratio(a: str, b: str) -> float:
    """Ratio evaluated on the lexicographically ordered pair."""
    return ratcliff_obershelp(a, b) if a <= b else ratcliff_obershelp(b, a)


def similarity_matrix(corpus: Corpus, threads: int | None = None,
                      cache_dir: str | Path | None = None) -> FeatureMatrix:
    """m x m Gestalt similarity between the alphabetised forms.

    Each unordered pair is scored once, lexicographically smaller string
    first, and mirrored.

    With ``cache_dir`` the matrix is read from / written to a binary cache
    keyed by the corpus content hash.
    """
    path = None
    if cache_dir is not None:
        path = Path(cache_dir) / f"sim-{corpus.content_hash()[:24]}.bin"
        if path.is_file():
            values = load_matrix_cache(path, CACHE_MAGIC)
            if values.shape[0] == len(corpus):
                log.info("similarity matrix cache hit: %s", path)
                return FeatureMatrix.single("similarity", values)
            log.warning("ignoring cache %s: size mismatch", path)
    values = _ordered_similarity(corpus.sorted_texts, threads)
    if path is not None:
        save_matrix_cache(path, values, CACHE_MAGIC)
    return FeatureMatrix.single("similarity", values)


def _ordered_similarity(texts: list[str], threads: int | None) -> np.ndarray:
    # each pair is scored with the lexicographically smaller string first, so
    # an entry depends only on its two strings and never on input order
    order = sorted(range(len(texts)), key=texts.__getitem__)
    if order == list(range(len(texts))):
        return kernels.backend.similarity_matrix(texts, threads)
    inv = np.empty(len(order), dtype=np.int64)
    inv[order] = np.arange(len(order))
    values = kernels.backend.similarity_matrix([texts[i] for i in order], threads)
    return np.ascontiguousarray(values[np.ix_(inv, inv)])


def save_matrix_cache(path: str | Path, values: np.ndarray, magic: bytes = CACHE_MAGIC) -> None:
    """Square float64 matrix: 8-byte magic, uint64 m, then little-endian row-major data."""
    values = np.ascontiguousarray(values, dtype="<f8")
    m = values.shape[0]
    if values.shape != (m, m):
        raise ValueError("cache stores square matrices only")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_HEADER.pack(magic, m))
        fh.write(values.tobytes(order="C"))
    tmp.replace(path)


def load_matrix_cache(path: str | Path, magic: bytes = CACHE_MAGIC) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated cache header")
        got, m = _HEADER.unpack(head)
        if got != magic:
            raise ValueError(f"{path}: bad magic {got!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != m * m:
        raise ValueError(f"{path}: expected {m * m} values, found {data.size}")
    return data.reshape(m, m).astype(np.float64)


def assemble(families: Sequence[FeatureMatrix],
             weights: Sequence[float] | None = None) -> FeatureMatrix:
    """Concatenate families column-wise, each optionally scaled by a weight."""
    if not families:
        raise ValueError("need at least one feature family")
    rows = {f.values.shape[0] for f in families}
    if len(rows) != 1:
        raise RowMismatch(f"families disagree on row count: {sorted(rows)}")
    if weights is None:
        weights = [1.0] * len(families)
    if len(weights) != len(families):
        raise ValueError("one weight per family")
    if len(families) == 1 and weights[0] == 1.0:
        return families[0]
    blocks, spans, col = [], [], 0
    explained = None
    for fam, w in zip(families, weights):
        block = fam.values if w == 1.0 else fam.values * w
        blocks.append(block)
        for name, lo, hi in fam.family_spans:
            spans.append((name, col + lo, col + hi))
        col += fam.values.shape[1]
        if fam.explained_variance is not None:
            explained = fam.explained_variance
    return FeatureMatrix(np.ascontiguousarray(np.hstack(blocks)), spans, explained)

