"""Character-level span corpora: column-format IO, vocabulary, synthesis.

The on-disk format is one character per line as `char<TAB>tag`, sentences
separated by blank lines.  Tags follow the boundary scheme B-/M-/E- for
multi-character entities, S- for single-character entities, and O outside
entities.  Gold annotations in this format are flat: parsing yields
non-overlapping spans with inclusive ends.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class CorpusError(ValueError):
    """Malformed corpus content or an unsatisfiable annotation request."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class GoldEntity:
    start: int
    end: int  # inclusive
    label: str


@dataclass
class Sentence:
    chars: list[str]
    entities: list[GoldEntity] = field(default_factory=list)

    def __len__(self):
        return len(self.chars)

    def text(self) -> str:
        return "".join(self.chars)


# ---------------------------------------------------------------------------
# column format

_PREFIXES = ("B", "M", "E", "S")


def _split_tag(tag: str, line: int) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    if len(tag) > 2 and tag[0] in _PREFIXES and tag[1] == "-":
        return tag[0], tag[2:]
    raise CorpusError(f"unrecognized tag {tag!r}", line)


def parse_column_corpus(lines: Iterable[str] | str) -> list[Sentence]:
    """Parse column-format text into sentences, validating tag transitions.

    Raises CorpusError with a 1-based line number on the first violation.
    """
    if isinstance(lines, str):
        lines = lines.splitlines()

    sentences: list[Sentence] = []
    chars: list[str] = []
    entities: list[GoldEntity] = []
    open_start: int | None = None
    open_label: str | None = None
    open_line = 0

    def flush(line: int) -> None:
        nonlocal chars, entities, open_start, open_label
        if open_label is not None:
            raise CorpusError(f"entity opened at line {open_line} never closed with E-{open_label}", line)
        if chars:
            sentences.append(Sentence(chars, entities))
        chars, entities = [], []

    n = 0
    for n, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(n)
            continue
        if "\t" not in line:
            raise CorpusError(f"expected 'char<TAB>tag', got {line!r}", n)
        ch, _, tag = line.partition("\t")
        if len(ch) != 1:
            raise CorpusError(f"character field must be a single character, got {ch!r}", n)
        prefix, label = _split_tag(tag.strip(), n)
        i = len(chars)
        chars.append(ch)

        if prefix == "O":
            if open_label is not None:
                raise CorpusError(f"O inside an open {open_label} entity", n)
        elif prefix == "S":
            if open_label is not None:
                raise CorpusError(f"S-{label} inside an open {open_label} entity", n)
            entities.append(GoldEntity(i, i, label))
        elif prefix == "B":
            if open_label is not None:
                raise CorpusError(f"B-{label} inside an open {open_label} entity", n)
            open_start, open_label, open_line = i, label, n
        elif prefix == "M":
            if open_label is None:
                raise CorpusError(f"M-{label} without a preceding B-{label}", n)
            if label != open_label:
                raise CorpusError(f"M-{label} inside a {open_label} entity", n)
        else:  # E
            if open_label is None:
                raise CorpusError(f"E-{label} without a preceding B-{label}", n)
            if label != open_label:
                raise CorpusError(f"E-{label} closes a {open_label} entity", n)
            entities.append(GoldEntity(open_start, i, label))
            open_start = open_label = None
    flush(n + 1)
    return sentences


def spans_to_bmes(n_chars: int, entities: Iterable[GoldEntity]) -> list[str]:
    """Render entities as one tag per character.

    Only flat annotations can be rendered: overlapping or nested entities are
    rejected, as are spans outside [0, n_chars).
    """
    tags = ["O"] * n_chars
    claimed = [False] * n_chars
    for e in sorted(entities, key=lambda e: (e.start, e.end)):
        if not (0 <= e.start <= e.end < n_chars):
            raise CorpusError(f"span ({e.start}, {e.end}) outside sentence of length {n_chars}")
        if any(claimed[e.start : e.end + 1]):
            raise CorpusError(f"span ({e.start}, {e.end}, {e.label}) overlaps another entity")
        for i in range(e.start, e.end + 1):
            claimed[i] = True
        if e.start == e.end:
            tags[e.start] = f"S-{e.label}"
        else:
            tags[e.start] = f"B-{e.label}"
            for i in range(e.start + 1, e.end):
                tags[i] = f"M-{e.label}"
            tags[e.end] = f"E-{e.label}"
    return tags


def format_column_corpus(sentences: Iterable[Sentence]) -> str:
    blocks = []
    for s in sentences:
        tags = spans_to_bmes(len(s.chars), s.entities)
        blocks.append("\n".join(f"{c}\t{t}" for c, t in zip(s.chars, tags)))
    return "\n\n".join(blocks) + "\n"


def write_column_corpus(sentences: Iterable[Sentence], path: str | Path) -> None:
    Path(path).write_text(format_column_corpus(sentences), encoding="utf-8")


def read_column_corpus(path: str | Path) -> list[Sentence]:
    return parse_column_corpus(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# vocabulary

UNK_ID = 0
PAD_ID = 1
NONE_ID = 0


class Vocab:
    """Stable char and label ids: 0/1 reserved for unknown/padding characters,
    label id 0 reserved for the no-entity class."""

    def __init__(self, chars: list[str], labels: list[str]):
        self.chars = list(chars)
        self.labels = list(labels)
        self._char_to_id = {c: i + 2 for i, c in enumerate(self.chars)}
        self._label_to_id = {t: i + 1 for i, t in enumerate(self.labels)}

    @classmethod
    def build(cls, sentences: Iterable[Sentence]) -> "Vocab":
        chars: set[str] = set()
        labels: set[str] = set()
        for s in sentences:
            chars.update(s.chars)
            labels.update(e.label for e in s.entities)
        return cls(sorted(chars), sorted(labels))

    @property
    def n_chars(self) -> int:
        return len(self.chars) + 2

    @property
    def n_classes(self) -> int:
        """Entity labels plus the no-entity class."""
        return len(self.labels) + 1

    def char_id(self, c: str) -> int:
        return self._char_to_id.get(c, UNK_ID)

    def char_ids(self, chars: Iterable[str]) -> np.ndarray:
        return np.array([self.char_id(c) for c in chars], dtype=np.intp)

    def label_id(self, label: str) -> int:
        try:
            return self._label_to_id[label]
        except KeyError:
            raise CorpusError(f"unknown entity label {label!r}") from None

    def label_name(self, idx: int) -> str:
        if idx == NONE_ID:
            raise CorpusError("class 0 is the no-entity class, not a label")
        return self.labels[idx - 1]


# ---------------------------------------------------------------------------
# synthetic regularity corpus

_SYNTH_KEYS = {
    "types", "indicator_chars", "filler_alphabet", "entity_len",
    "sentence_len", "ambiguity_rate", "counts",
}
_SPLITS = ("train", "dev", "test")


@dataclass
class SynthConfig:
    """Recipe for a corpus whose entity types are marked by suffix characters.

    Every generated entity ends with one of its type's indicator characters;
    all other positions draw from the filler alphabet.  With probability
    `ambiguity_rate` a sentence additionally gets one indicator character
    planted at a non-entity position, so that ending-character evidence alone
    cannot decide entityhood.
    """

    types: list[str]
    indicator_chars: dict[str, list[str]]
    filler_alphabet: list[str]
    entity_len: dict[str, tuple[int, int]]  # per type
    sentence_len: tuple[int, int]
    ambiguity_rate: float
    counts: dict[str, int]

    @classmethod
    def from_dict(cls, raw: dict) -> "SynthConfig":
        if not isinstance(raw, dict):
            raise CorpusError("synthesis config must be a JSON object")
        unknown = set(raw) - _SYNTH_KEYS
        if unknown:
            raise CorpusError(f"unknown synthesis config keys: {sorted(unknown)}")
        missing = _SYNTH_KEYS - set(raw)
        if missing:
            raise CorpusError(f"missing synthesis config keys: {sorted(missing)}")

        types = list(raw["types"])
        if not types or len(set(types)) != len(types):
            raise CorpusError("types must be a nonempty list of distinct names")

        indicators = {t: list(v) for t, v in dict(raw["indicator_chars"]).items()}
        if set(indicators) != set(types):
            raise CorpusError("indicator_chars must define exactly one entry per type")
        for t, cs in indicators.items():
            if not cs or any(len(c) != 1 for c in cs):
                raise CorpusError(f"indicator_chars[{t!r}] must be a nonempty list of single characters")

        filler = list(raw["filler_alphabet"])
        if not filler or any(len(c) != 1 for c in filler):
            raise CorpusError("filler_alphabet must be a nonempty sequence of single characters")
        all_indicators = {c for cs in indicators.values() for c in cs}
        clash = all_indicators & set(filler)
        if clash:
            raise CorpusError(f"filler_alphabet overlaps indicator characters: {sorted(clash)}")

        def _range(value, what, minimum=1) -> tuple[int, int]:
            try:
                lo, hi = int(value[0]), int(value[1])
            except (TypeError, ValueError, IndexError):
                raise CorpusError(f"{what} must be a [min, max] pair") from None
            if not (minimum <= lo <= hi):
                raise CorpusError(f"{what} must satisfy {minimum} <= min <= max, got [{lo}, {hi}]")
            return lo, hi

        raw_elen = raw["entity_len"]
        if isinstance(raw_elen, dict):
            if set(raw_elen) != set(types):
                raise CorpusError("per-type entity_len must define exactly one entry per type")
            entity_len = {t: _range(v, f"entity_len[{t!r}]") for t, v in raw_elen.items()}
        else:
            shared = _range(raw_elen, "entity_len")
            entity_len = {t: shared for t in types}

        sentence_len = _range(raw["sentence_len"], "sentence_len")
        longest = max(hi for _, hi in entity_len.values())
        if longest > sentence_len[0]:
            raise CorpusError(
                f"longest entity ({longest}) cannot exceed the shortest sentence ({sentence_len[0]})"
            )

        rate = float(raw["ambiguity_rate"])
        if not 0.0 <= rate <= 1.0:
            raise CorpusError(f"ambiguity_rate must be in [0, 1], got {rate}")

        counts = {k: int(v) for k, v in dict(raw["counts"]).items()}
        if set(counts) != set(_SPLITS):
            raise CorpusError(f"counts must define exactly the splits {list(_SPLITS)}")
        if any(v < 0 for v in counts.values()):
            raise CorpusError("split counts must be non-negative")

        return cls(types, indicators, filler, entity_len, sentence_len, rate, counts)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "types": self.types,
            "indicator_chars": self.indicator_chars,
            "filler_alphabet": self.filler_alphabet,
            "entity_len": {t: list(v) for t, v in self.entity_len.items()},
            "sentence_len": list(self.sentence_len),
            "ambiguity_rate": self.ambiguity_rate,
            "counts": self.counts,
        }


def _pick(rng: np.random.Generator, items: list):
    return items[int(rng.integers(len(items)))]


def _synth_sentence(cfg: SynthConfig, rng: np.random.Generator) -> Sentence:
    length = int(rng.integers(cfg.sentence_len[0], cfg.sentence_len[1] + 1))
    chars = [_pick(rng, cfg.filler_alphabet) for _ in range(length)]
    occupied = np.zeros(length, dtype=bool)
    entities: list[GoldEntity] = []

    for _ in range(int(rng.integers(1, 4))):
        label = _pick(rng, cfg.types)
        lo, hi = cfg.entity_len[label]
        elen = int(rng.integers(lo, hi + 1))
        starts = [s for s in range(length - elen + 1) if not occupied[s : s + elen].any()]
        if not starts:
            continue
        start = _pick(rng, starts)
        chars[start + elen - 1] = _pick(rng, cfg.indicator_chars[label])
        occupied[start : start + elen] = True
        entities.append(GoldEntity(start, start + elen - 1, label))

    if rng.random() < cfg.ambiguity_rate:
        free = [i for i in range(length) if not occupied[i]]
        if free:
            label = _pick(rng, cfg.types)
            chars[_pick(rng, free)] = _pick(rng, cfg.indicator_chars[label])

    entities.sort(key=lambda e: e.start)
    return Sentence(chars, entities)


def generate_synthetic(cfg: SynthConfig, seed: int) -> dict[str, list[Sentence]]:
    """Deterministically draw disjoint train/dev/test splits.

    No character sequence appears in more than one split (or twice in one);
    colliding draws are discarded and redrawn.
    """
    rng = np.random.default_rng(seed)
    seen: set[str] = set()
    splits: dict[str, list[Sentence]] = {}
    for split in _SPLITS:
        wanted = cfg.counts[split]
        sents: list[Sentence] = []
        guard = 0
        while len(sents) < wanted:
            s = _synth_sentence(cfg, rng)
            key = s.text()
            if key in seen:
                guard += 1
                if guard > 100 * max(wanted, 1):
                    raise CorpusError(
                        "cannot draw enough distinct sentences; enlarge alphabets or lengths"
                    )
                continue
            seen.add(key)
            sents.append(s)
        splits[split] = sents
    return splits


def indicator_label_of(cfg: SynthConfig) -> dict[str, str]:
    """Map each indicator character to its entity type."""
    out: dict[str, str] = {}
    for t, cs in cfg.indicator_chars.items():
        for c in cs:
            out[c] = t
    return out


def stray_indicator_positions(sentence: Sentence, indicator_to_label: dict[str, str]) -> list[int]:
    """Positions holding an indicator character that do not end a gold entity."""
    ends = {e.end for e in sentence.entities}
    return [
        i for i, c in enumerate(sentence.chars)
        if c in indicator_to_label and i not in ends
    ]
