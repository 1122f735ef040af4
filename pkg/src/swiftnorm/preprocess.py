"""Cleaning, tokenisation and the two-level deduplication.

Raw records collapse to unique cleaned lines, and unique lines collapse to
canonical forms: the alphabetised set of their tokens.
"""
from __future__ import annotations

import csv
import hashlib
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .ingest import EntityRecord

log = logging.getLogger(__name__)

_DIGITS = re.compile(r"\d")
_NON_ALPHA = re.compile(r"[^A-Z ]")
_SPACES = re.compile(r" {2,}")


class EmptyEntity(ValueError):
    """A record with no tokens left after cleaning."""


class EmptyCorpus(ValueError):
    """No record survived cleaning."""


def clean(raw: str) -> str:
    """Uppercase, drop digits, blank out anything but A-Z, collapse spaces."""
    text = _DIGITS.sub("", raw.upper())
    text = _NON_ALPHA.sub(" ", text)
    return _SPACES.sub(" ", text).strip()


def tokenize(cleaned: str) -> list[str]:
    return cleaned.split()


def canonicalize(tokens: Sequence[str]) -> str:
    if not tokens:
        raise EmptyEntity("cannot canonicalise an empty token sequence")
    return " ".join(sorted(set(tokens)))


@dataclass(frozen=True)
class UniqueLine:
    text: str
    member_record_ids: frozenset[int]
    canonical_index: int


@dataclass(frozen=True)
class CanonicalForm:
    sorted_text: str
    ordered_tokens: tuple[str, ...]
    member_line_indices: frozenset[int]

    @property
    def rep(self) -> tuple[str, str]:
        """First two tokens in original order; missing second token is ''."""
        toks = self.ordered_tokens
        return (toks[0], toks[1] if len(toks) > 1 else "")


@dataclass(frozen=True)
class Corpus:
    lines: tuple[UniqueLine, ...]
    forms: tuple[CanonicalForm, ...]

    @property
    def sorted_texts(self) -> list[str]:
        return [f.sorted_text for f in self.forms]

    @property
    def line_to_form(self) -> list[int]:
        return [line.canonical_index for line in self.lines]

    def __len__(self) -> int:
        return len(self.forms)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for text in self.sorted_texts:
            h.update(text.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def subset(self, form_indices: Sequence[int]) -> "Corpus":
        """Corpus restricted to the given forms (kept in the given order)."""
        lines: list[UniqueLine] = []
        forms: list[CanonicalForm] = []
        for new_ci, ci in enumerate(form_indices):
            form = self.forms[ci]
            members = []
            for li in sorted(form.member_line_indices):
                members.append(len(lines))
                old = self.lines[li]
                lines.append(UniqueLine(old.text, old.member_record_ids, new_ci))
            forms.append(CanonicalForm(form.sorted_text, form.ordered_tokens, frozenset(members)))
        return Corpus(tuple(lines), tuple(forms))


def build_corpus(records: Sequence[EntityRecord | str]) -> Corpus:
    """Deduplicate records into unique lines and canonical forms.

    Both tables keep first-appearance order. Records that clean to nothing
    are dropped with a warning.
    """
    line_ids: dict[str, int] = {}
    line_members: list[list[int]] = []
    line_texts: list[str] = []
    dropped = 0
    for rid, rec in enumerate(records):
        raw = rec.raw_text if isinstance(rec, EntityRecord) else rec
        text = clean(raw)
        if not text:
            dropped += 1
            log.debug("record %d dropped: empty after cleaning (%r)", rid, raw)
            continue
        li = line_ids.get(text)
        if li is None:
            li = line_ids[text] = len(line_texts)
            line_texts.append(text)
            line_members.append([])
        line_members[li].append(rid)
    if dropped:
        log.warning("%d record(s) empty after cleaning were dropped", dropped)
    if not line_texts:
        raise EmptyCorpus("no record survived cleaning")

    form_ids: dict[str, int] = {}
    form_lines: list[list[int]] = []
    form_texts: list[str] = []
    line_form: list[int] = []
    for li, text in enumerate(line_texts):
        key = canonicalize(tokenize(text))
        ci = form_ids.get(key)
        if ci is None:
            ci = form_ids[key] = len(form_texts)
            form_texts.append(key)
            form_lines.append([])
        form_lines[ci].append(li)
        line_form.append(ci)

    lines = tuple(
        UniqueLine(text, frozenset(line_members[li]), line_form[li])
        for li, text in enumerate(line_texts)
    )
    forms = []
    for key, members in zip(form_texts, form_lines):
        first = min(members, key=lambda li: line_texts[li])
        forms.append(CanonicalForm(key, tuple(tokenize(line_texts[first])), frozenset(members)))
    return Corpus(lines, tuple(forms))


def write_provenance_csv(path: str | Path, corpus: Corpus) -> None:
    rows = []
    for li, line in enumerate(corpus.lines):
        for rid in line.member_record_ids:
            rows.append((rid, li, line.canonical_index))
    rows.sort()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "unique_line_id", "canonical_id"])
        writer.writerows(rows)
