"""Reading tag values from plain lists or SWIFT MT block-4 text."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

log = logging.getLogger(__name__)

TAG_RE = re.compile(r"^:([0-9]{2}[A-Z]?):(.*)$")
DEFAULT_TAGS = frozenset({"50A", "50F", "50K", "59", "59A", "59F"})
_BLOCK4_RE = re.compile(r"\{4:(.*?)(?:\r?\n)?-\}", re.S)


class MalformedField(ValueError):
    """A ``:``-prefixed line that is not a valid ``:NNx:`` field tag."""

    def __init__(self, line_number: int, line: str):
        super().__init__(f"line {line_number}: malformed field tag {line!r}")
        self.line_number = line_number
        self.line = line


@dataclass(frozen=True)
class EntityRecord:
    raw_text: str
    source_id: str
    tag: str | None
    line_index: int


def parse_plain(lines: Iterable[str], source_id: str = "") -> list[EntityRecord]:
    """One record per non-blank line; ``line_index`` is the 0-based line number."""
    return [
        EntityRecord(line.strip(), source_id, None, i)
        for i, line in enumerate(lines)
        if line.strip()
    ]


def _block4_lines(text: str) -> list[tuple[int, str]]:
    """(line number, line) pairs inside block 4, or the whole text if it has none."""
    lines = text.splitlines()
    if "{4:" not in text:
        return list(enumerate(lines))
    out = []
    for match in _BLOCK4_RE.finditer(text):
        first = text.count("\n", 0, match.start(1))
        body = match.group(1).splitlines()
        for k, line in enumerate(body):
            out.append((first + k, line))
    return out


def parse_mt_block4(
    text: str,
    wanted_tags: Iterable[str] = DEFAULT_TAGS,
    source_id: str = "",
    errors: list[MalformedField] | None = None,
) -> list[EntityRecord]:
    """Extract the values of ``wanted_tags`` from MT block-4 text.

    Continuation lines are joined to the field value with single spaces;
    account lines (``/...``) are kept. A ``:``-prefixed line that is not a
    valid tag ends the current field and is skipped together with its
    continuation lines; it is logged and appended to ``errors`` if given.
    """
    wanted = set(wanted_tags)
    records: list[EntityRecord] = []
    current: tuple[str, int, list[str]] | None = None

    def flush():
        if current is None:
            return
        tag, start, parts = current
        value = " ".join(p.strip() for p in parts if p.strip())
        if value:
            records.append(EntityRecord(value, source_id, tag, start))

    for number, line in _block4_lines(text):
        line = line.rstrip("\r")
        if line.strip() == "-}":
            flush()
            current = None
            continue
        if line.startswith(":"):
            match = TAG_RE.match(line)
            flush()
            current = None
            if match is None:
                err = MalformedField(number, line)
                log.warning("%s: %s", source_id or "<input>", err)
                if errors is not None:
                    errors.append(err)
                continue
            tag, rest = match.groups()
            if tag in wanted:
                current = (tag, number, [rest])
            continue
        if current is not None:
            current[2].append(line)
    flush()
    return records


def read_records(paths: Sequence[str | Path], fmt: str = "plain",
                 tags: Iterable[str] = DEFAULT_TAGS) -> list[EntityRecord]:
    """Read every input file; raises FileNotFoundError naming the missing path."""
    records: list[EntityRecord] = []
    for path in paths:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"input file not found: {path}")
        text = path.read_text(encoding="utf-8")
        if fmt == "plain":
            records.extend(parse_plain(text.splitlines(), str(path)))
        elif fmt == "mt":
            records.extend(parse_mt_block4(text, tags, str(path)))
        else:
            raise ValueError(f"unknown input format {fmt!r}")
    return records
