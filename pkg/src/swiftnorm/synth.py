"""Seeded generator of SWIFT-style counterparty strings with gold clusters.

Each gold cluster is one entity name at one location. Entity name tokens
are chosen so that no two entities' leading tokens pass the merge gate,
which keeps the clean corpus perfectly recoverable; all ambiguity comes
from the variation operators.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator

import numpy as np

from . import kernels
from .preprocess import clean

OPERATORS = ("typo", "salutation", "middle_name", "suffix_abbrev", "address_drop",
             "account_prefix", "token_shuffle", "relocate")
DEFAULT_RATES = {
    "salutation": 0.08,
    "middle_name": 0.15,
    "suffix_abbrev": 0.5,
    "address_drop": 0.2,
    "account_prefix": 0.6,
    "token_shuffle": 0.1,
    "relocate": 0.05,
}
DEFAULT_VARIATIONS = {1: 0.30, 2: 0.25, 3: 0.20, 4: 0.12, 5: 0.08, 6: 0.05}

SALUTATIONS = ("MR", "MRS", "MS", "DR")
SUFFIXES = {"LIMITED": "LTD", "CORPORATION": "CORP", "INCORPORATED": "INC", "COMPANY": "CO"}
ACTIVITIES = ("TRADING", "HOLDINGS", "SERVICES", "LOGISTICS", "CONSULTING",
              "INDUSTRIES", "GROUP", "PARTNERS", "SHIPPING", "FINANCE")
STREET_TYPES = {"STREET": "ST", "ROAD": "RD", "AVENUE": "AVE", "LANE": "LN"}

_CONSONANTS = "BCDFGHKLMNPRSTVZ"
_VOWELS = "AEIOU"
_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


class ConfigInvalid(ValueError):
    """Generator configuration out of range."""


@dataclass
class SynthConfig:
    seed: int = 42
    n_entities: int = 1000
    variation_count_distribution: dict[int, float] = field(
        default_factory=lambda: dict(DEFAULT_VARIATIONS))
    typo_rate: float = 0.05
    operators: tuple[str, ...] = OPERATORS
    operator_rates: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RATES))
    company_share: float = 0.4
    name_pool: int | None = None
    address_pool: int | None = None
    name_separation: float = 0.7
    shuffle: bool = True
    pool_dir: str | None = None

    def validate(self) -> None:
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")
        if self.n_entities < 1:
            raise ConfigInvalid("n_entities must be at least 1")
        hist = self.variation_count_distribution
        if not hist or any(k < 1 or k > 6 for k in hist):
            raise ConfigInvalid("variation counts must lie in 1..6")
        if any(p < 0 for p in hist.values()) or sum(hist.values()) <= 0:
            raise ConfigInvalid("variation histogram needs nonnegative weights with positive sum")
        unknown = set(self.operators) - set(OPERATORS)
        if unknown:
            raise ConfigInvalid(f"unknown operators: {sorted(unknown)}")
        probs = {"typo_rate": self.typo_rate, "company_share": self.company_share,
                 **self.operator_rates}
        for name, p in probs.items():
            if not 0.0 <= p <= 1.0:
                raise ConfigInvalid(f"{name} must lie in [0, 1], got {p}")
        if set(self.operator_rates) - set(OPERATORS):
            raise ConfigInvalid("operator_rates has unknown keys")
        if not 0.0 < self.name_separation <= 1.0:
            raise ConfigInvalid("name_separation must lie in (0, 1]")
        for name in ("name_pool", "address_pool"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigInvalid(f"{name} must be positive")

    def rate(self, op: str) -> float:
        if op not in self.operators:
            return 0.0
        if op == "typo":
            return self.typo_rate
        return self.operator_rates.get(op, DEFAULT_RATES.get(op, 0.0))


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def load_pool(name: str, pool_dir: str | None = None) -> list[str]:
    if pool_dir is not None:
        text = (Path(pool_dir) / f"{name}.txt").read_text(encoding="utf-8")
    else:
        text = resources.files("swiftnorm").joinpath("data", f"{name}.txt").read_text(encoding="utf-8")
    return [w.strip().upper() for w in text.splitlines() if w.strip()]


def pseudo_word(rng: np.random.Generator) -> str:
    parts = []
    for _ in range(int(rng.integers(2, 4))):
        parts.append(_CONSONANTS[rng.integers(len(_CONSONANTS))])
        parts.append(_VOWELS[rng.integers(len(_VOWELS))])
        if rng.random() < 0.35:
            parts.append(_CONSONANTS[rng.integers(len(_CONSONANTS))])
    return "".join(parts)


def _letter_counts(word: str) -> np.ndarray:
    return np.bincount(np.frombuffer(word.encode("ascii"), dtype=np.uint8) - 65,
                       minlength=26).astype(np.int32)


class TokenSeparator:
    """Accepts tokens whose similarity to every accepted token stays below a limit.

    Shared letter counts bound the number of matched characters, so most
    comparisons never reach the exact ratio.
    """

    def __init__(self, limit: float, reserved=()):
        self.limit = limit
        self.tokens: list[str] = []
        self._counts = np.zeros((64, 26), dtype=np.int32)
        self._lengths = np.zeros(64, dtype=np.int64)
        for word in reserved:
            self._add(word)
        self.reserved = len(self.tokens)

    def _add(self, word: str) -> None:
        n = len(self.tokens)
        if n == self._lengths.size:
            self._counts = np.vstack([self._counts, np.zeros_like(self._counts)])
            self._lengths = np.concatenate([self._lengths, np.zeros_like(self._lengths)])
        self._counts[n] = _letter_counts(word)
        self._lengths[n] = len(word)
        self.tokens.append(word)

    def accept(self, word: str) -> bool:
        if not word.isalpha() or not word.isascii() or word in self.tokens:
            return False
        n = len(self.tokens)
        if n:
            shared = np.minimum(self._counts[:n], _letter_counts(word)).sum(axis=1)
            bound = 2.0 * shared / (self._lengths[:n] + len(word))
            close = [self.tokens[i] for i in np.flatnonzero(bound >= self.limit)]
            if close:
                left = [min(word, t) for t in close]
                right = [max(word, t) for t in close]
                if np.any(kernels.backend.pair_ratios(left, right) >= self.limit):
                    return False
        self._add(word)
        return True


def _token_stream(real: list[str], rng: np.random.Generator, limit: int | None) -> Iterator[str]:
    order = rng.permutation(len(real))
    if limit is not None:
        order = order[:limit]
    for i in order:
        yield real[i]
    while True:
        yield pseudo_word(rng)


@dataclass(frozen=True)
class Entity:
    kind: str
    name: tuple[str, ...]
    middle: str
    suffix: str
    locations: tuple[tuple[int, str, str, str], ...]


@dataclass
class SynthResult:
    raw_values: list[str]
    record_gold: list[int]
    gold: dict[str, int]
    entities: list[Entity]
    config: SynthConfig

    @property
    def n_gold(self) -> int:
        return len(set(self.record_gold))

    def manifest(self) -> dict:
        return {
            "config": asdict(self.config),
            "n_records": len(self.raw_values),
            "n_unique_lines": len(self.gold),
            "n_gold_clusters": self.n_gold,
            "n_entities": len(self.entities),
        }


def _allocate_entities(config: SynthConfig) -> list[Entity]:
    seed = config.seed
    pool_rng = _rng(seed, 0)
    reserved = list(SALUTATIONS) + list(ACTIVITIES) + list(SUFFIXES) + list(SUFFIXES.values())
    sep = TokenSeparator(config.name_separation, reserved)
    streams = {
        "given": _token_stream(load_pool("given_names", config.pool_dir), _rng(seed, 0, 1), config.name_pool),
        "surname": _token_stream(load_pool("surnames", config.pool_dir), _rng(seed, 0, 2), config.name_pool),
        "stem": _token_stream(load_pool("company_stems", config.pool_dir), _rng(seed, 0, 3), config.name_pool),
    }
    streets = load_pool("streets", config.pool_dir)
    cities = load_pool("cities", config.pool_dir)
    if config.address_pool is not None:
        cities = cities[:config.address_pool]
        streets = streets[:config.address_pool]

    def take(kind: str) -> str:
        for word in streams[kind]:
            if sep.accept(word):
                return word
        raise AssertionError("unreachable")

    entities = []
    kinds = pool_rng.random(config.n_entities) < config.company_share
    for i, is_company in enumerate(kinds):
        rng = _rng(seed, 1, i)
        if is_company:
            name = (take("stem"), take("stem"), ACTIVITIES[rng.integers(len(ACTIVITIES))])
            suffix = list(SUFFIXES)[rng.integers(len(SUFFIXES))]
            middle = ""
        else:
            name = (take("given"), take("surname"))
            middle = take("given")
            suffix = ""
        n_loc = 2 if rng.random() < config.rate("relocate") else 1
        city_idx = rng.permutation(len(cities))[:n_loc]
        street_idx = rng.permutation(len(streets))[:n_loc]
        locations = tuple(
            (int(rng.integers(1, 200)), streets[s], list(STREET_TYPES)[rng.integers(len(STREET_TYPES))], cities[c])
            for s, c in zip(street_idx, city_idx)
        )
        entities.append(Entity("company" if is_company else "person", name, middle, suffix, locations))
    return entities


def _typo(word: str, draws: np.ndarray) -> str:
    kind = int(draws[0] * 4)
    pos = int(draws[1] * len(word))
    letter = _ALPHABET[int(draws[2] * 26)]
    if kind == 0:
        if letter == word[pos]:
            letter = _ALPHABET[(ord(letter) - 64) % 26]
        return word[:pos] + letter + word[pos + 1:]
    if kind == 1 and len(word) > 3:
        return word[:pos] + word[pos + 1:]
    if kind == 2 and len(word) > 1:
        pos = min(pos, len(word) - 2)
        return word[:pos] + word[pos + 1] + word[pos] + word[pos + 2:]
    return word[:pos] + letter + word[pos:]


def _compose(config: SynthConfig, entity: Entity, location, rng: np.random.Generator,
             typo_rng: np.random.Generator, clean_base: bool) -> str:
    # every draw is made unconditionally so one operator's rate never shifts another's stream
    u = rng.random(7)
    account = "/" + "".join(str(d) for d in rng.integers(0, 10, 8))
    salutation = SALUTATIONS[rng.integers(len(SALUTATIONS))]
    comma = rng.random() < 0.3

    def on(op: str, k: int) -> bool:
        return not clean_base and u[k] < config.rate(op)

    name = list(entity.name)
    suffix = entity.suffix
    if entity.kind == "person":
        if on("middle_name", 1):
            name.insert(1, entity.middle)
        if on("token_shuffle", 2):
            name = [name[-1]] + name[:-1]
        if on("salutation", 0):
            name.insert(0, salutation)
    else:
        if on("token_shuffle", 2):
            name[0], name[1] = name[1], name[0]
        if on("suffix_abbrev", 3):
            suffix = SUFFIXES[suffix] + "."
        name.append(suffix)

    number, street, street_type, city = location
    if on("suffix_abbrev", 4):
        street_type = STREET_TYPES[street_type]
    address = [] if on("address_drop", 5) else [str(number), street, street_type]
    words = name + address + city.split()

    rate = config.rate("typo") if not clean_base else 0.0
    draws = typo_rng.random((len(words), 4))
    for k, word in enumerate(words):
        if not word.isalpha():
            continue
        limit = rate / 2 if k == 0 else rate
        if draws[k, 3] < limit:
            words[k] = _typo(word, draws[k, :3])

    n_name = len(name)
    head = " ".join(words[:n_name]) + ("," if comma and address else "")
    text = " ".join([head] + words[n_name:])
    # an account prefix cleans away entirely, so the base line may carry one too
    if u[6] < config.rate("account_prefix"):
        text = account + " " + text
    return text


def generate(config: SynthConfig) -> SynthResult:
    """Raw tag values and their gold cluster ids, deterministic in ``config.seed``."""
    config.validate()
    entities = _allocate_entities(config)
    sizes = np.array(sorted(config.variation_count_distribution), dtype=np.int64)
    weights = np.array([config.variation_count_distribution[k] for k in sizes], dtype=np.float64)
    weights /= weights.sum()

    raw, golds = [], []
    owner: dict[str, int] = {}
    gold_id = 0
    for i, entity in enumerate(entities):
        for loc_no, location in enumerate(entity.locations):
            rng = _rng(config.seed, 2, i, loc_no)
            n_var = int(rng.choice(sizes, p=weights))
            for v in range(n_var):
                text = _compose(config, entity, location, rng, _rng(config.seed, 3, i, loc_no, v), v == 0)
                line = clean(text)
                if owner.setdefault(line, gold_id) != gold_id:
                    continue
                raw.append(text)
                golds.append(gold_id)
            gold_id += 1

    if config.shuffle:
        order = _rng(config.seed, 4).permutation(len(raw))
        raw = [raw[k] for k in order]
        golds = [golds[k] for k in order]
    gold = {}
    for text, g in zip(raw, golds):
        gold.setdefault(clean(text), g)
    return SynthResult(raw, golds, gold, entities, config)


def to_mt(result: SynthResult) -> str:
    """Wrap every raw value in a minimal MT103 block 4 (alternating 50K / 59)."""
    rng = _rng(result.config.seed, 5)
    out = []
    for k, text in enumerate(result.raw_values):
        tag = "50K" if k % 2 == 0 else "59"
        words = text.split()
        lines = []
        if words and words[0].startswith("/"):
            lines.append(words.pop(0))
        cut = max(1, min(len(words), int(rng.integers(2, 5))))
        lines.append(" ".join(words[:cut]))
        if words[cut:]:
            lines.append(" ".join(words[cut:]))
        out.append(
            "{1:F01SYNTHXXXAXXX0000000000}{2:I103SYNTHXXXBXXXN}{4:\n"
            f":20:REF{k:08d}\n:23B:CRED\n:{tag}:" + "\n".join(lines) + "\n-}"
        )
    return "\n".join(out) + "\n"


def write_outputs(result: SynthResult, out_dir: str | Path, mt: bool = False) -> dict[str, Path]:
    """entities.txt, gold.csv, manifest.json (and entities.mt when asked)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"input": out / "entities.txt", "gold": out / "gold.csv", "manifest": out / "synth_manifest.json"}
    paths["input"].write_text("\n".join(result.raw_values) + "\n", encoding="utf-8")
    with open(paths["gold"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unique_line_text", "gold_id"])
        writer.writerows(sorted(result.gold.items(), key=lambda kv: (kv[1], kv[0])))
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(result.manifest(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if mt:
        paths["mt"] = out / "entities.mt"
        paths["mt"].write_text(to_mt(result), encoding="utf-8")
    return paths
