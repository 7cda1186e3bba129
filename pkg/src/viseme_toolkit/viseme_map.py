"""Phoneme inventory, phoneme-to-viseme maps, pronunciation dictionaries and
viseme transcripts.

Map files are line oriented: ``vID ph1 ph2 ...`` with ``#`` comments. The
silence class is the class holding ``sil``; the short-pause class holds ``sp``.
Neither is ever merged into the garbage class.
"""

import logging
import re
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import (
    DictionaryParseError,
    GarbageMergeError,
    InventoryError,
    MapFormatError,
    OutOfVocabularyError,
    PartitionError,
    TranscriptError,
)

logger = logging.getLogger(__name__)

SILENCE = "sil"
SHORT_PAUSE = "sp"
GARBAGE = "garb"

STANDARD_MAP_TEXT = """\
# Phone to viseme mapping
v01 p b m
v02 f v
v03 th dh
v04 t d n k g h j ng y
v05 s z
v06 l
v07 r
v08 sh zh ch jh
v09 w
v10 i ih
v11 eh ae ey ay
v12 aa ao ah
v13 uh er ax
v14 u uw
v15 oy
v16 iy hh
v17 aw ow
v18 sil
sp sp
"""

GARBAGE_MERGED_MAP_TEXT = """\
# Phone to viseme mapping with untrainable classes merged into garb
v01 p b m
v02 f v
v03 th dh
v04 t d n k g h j ng y
v05 s z
v06 l
v07 r
v10 i ih
v11 eh ae ey ay
v12 aa ao ah
v13 uh er ax
v16 iy hh
v17 aw ow
v18 sil
sp sp
garb sh zh ch jh w u uw oy
"""

_STRESS_RE = re.compile(r"\d+$")
_VARIANT_RE = re.compile(r"\(\d+\)$")


def normalize_phone(symbol: str) -> str:
    """Lowercase a phone and strip a trailing stress marker (``AH0`` -> ``ah``)"""
    return _STRESS_RE.sub("", symbol.strip().lower())


def _strip_comment(line: str) -> str:
    return line.split("#", 1)[0].strip()


class PhonemeInventory:
    def __init__(self, symbols: Iterable[str]):
        ordered: "OrderedDict[str, None]" = OrderedDict()
        for symbol in symbols:
            phone = normalize_phone(symbol)
            if not phone:
                raise InventoryError(symbol, "empty symbol")
            ordered[phone] = None
        self._symbols = tuple(ordered)
        self._lookup = frozenset(self._symbols)

    @property
    def symbols(self) -> Tuple[str, ...]:
        return self._symbols

    def __contains__(self, symbol: object) -> bool:
        return symbol in self._lookup

    def __iter__(self):
        return iter(self._symbols)

    def __len__(self) -> int:
        return len(self._symbols)

    def check(self, symbol: str, context: str = "") -> str:
        phone = normalize_phone(symbol)
        if phone not in self._lookup:
            raise InventoryError(phone, context)
        return phone


def load_inventory(text: str) -> PhonemeInventory:
    """Parse an inventory file: whitespace-separated phones, ``#`` comments"""
    symbols: List[str] = []
    for line in text.splitlines():
        symbols.extend(_strip_comment(line).split())
    return PhonemeInventory(symbols)


class VisemeMap:
    """An ordered partition of a phoneme inventory into viseme classes."""

    def __init__(
        self,
        classes: Sequence[Tuple[str, Sequence[str]]],
        inventory: Optional[PhonemeInventory] = None,
    ):
        seen_ids = set()
        owner: Dict[str, str] = {}
        normalized: List[Tuple[str, Tuple[str, ...]]] = []
        for viseme_id, phones in classes:
            if not viseme_id:
                raise PartitionError("Empty viseme id")
            if viseme_id in seen_ids:
                raise PartitionError(f"Duplicate viseme id '{viseme_id}'")
            seen_ids.add(viseme_id)
            members = tuple(normalize_phone(p) for p in phones)
            if not members:
                raise PartitionError(f"Viseme class '{viseme_id}' is empty")
            for phone in members:
                if phone in owner:
                    raise PartitionError(
                        f"Phoneme '{phone}' is in both '{owner[phone]}' and '{viseme_id}'"
                    )
                owner[phone] = viseme_id
            normalized.append((viseme_id, members))

        if inventory is None:
            inventory = PhonemeInventory(owner)
        else:
            for phone in owner:
                inventory.check(phone, "viseme map")
            missing = [p for p in inventory if p not in owner]
            if missing:
                raise PartitionError(f"Phonemes not in any viseme class: {' '.join(missing)}")

        self._classes = tuple(normalized)
        self._owner = owner
        self.inventory = inventory

    @property
    def classes(self) -> Tuple[Tuple[str, Tuple[str, ...]], ...]:
        return self._classes

    @property
    def ids(self) -> List[str]:
        return [viseme_id for viseme_id, _ in self._classes]

    def phones(self, viseme_id: str) -> Tuple[str, ...]:
        for vid, members in self._classes:
            if vid == viseme_id:
                return members
        raise KeyError(viseme_id)

    @property
    def silence_id(self) -> Optional[str]:
        return self._owner.get(SILENCE)

    @property
    def short_pause_id(self) -> Optional[str]:
        return self._owner.get(SHORT_PAUSE)

    @property
    def special_ids(self) -> List[str]:
        return [v for v in (self.silence_id, self.short_pause_id) if v is not None]

    @property
    def trainable_ids(self) -> List[str]:
        """Classes other than silence and short pause"""
        special = set(self.special_ids)
        return [v for v in self.ids if v not in special]

    def map_phoneme(self, phone: str) -> str:
        symbol = normalize_phone(phone)
        if symbol not in self.inventory:
            raise InventoryError(symbol)
        try:
            return self._owner[symbol]
        except KeyError:
            raise PartitionError(f"Phoneme '{symbol}' is not in any viseme class")

    def __contains__(self, viseme_id: object) -> bool:
        return any(vid == viseme_id for vid, _ in self._classes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VisemeMap):
            return NotImplemented
        return self._classes == other._classes

    def as_sets(self) -> Dict[str, frozenset]:
        return {vid: frozenset(members) for vid, members in self._classes}

    def __repr__(self) -> str:
        return f"VisemeMap({len(self._classes)} classes, {len(self._owner)} phonemes)"


def map_phoneme(vmap: VisemeMap, phone: str) -> str:
    return vmap.map_phoneme(phone)


def load_viseme_map(text: str, inventory: Optional[PhonemeInventory] = None) -> VisemeMap:
    classes: List[Tuple[str, List[str]]] = []
    for line_number, raw in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw)
        if not line:
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise MapFormatError(f"Line {line_number}: viseme '{tokens[0]}' has no phonemes")
        classes.append((tokens[0], tokens[1:]))
    return VisemeMap(classes, inventory)


def save_viseme_map(vmap: VisemeMap) -> str:
    """Canonical text form: one ``vID ph1 ph2 ...`` line per class, in order"""
    return "".join(f"{vid} {' '.join(members)}\n" for vid, members in vmap.classes)


def standard_map() -> VisemeMap:
    return load_viseme_map(STANDARD_MAP_TEXT)


def garbage_merged_map() -> VisemeMap:
    return load_viseme_map(GARBAGE_MERGED_MAP_TEXT)


def default_inventory() -> PhonemeInventory:
    return standard_map().inventory


class PronunciationDict:
    def __init__(self, entries: Mapping[str, Sequence[Sequence[str]]]):
        self._entries: Dict[str, Tuple[Tuple[str, ...], ...]] = {
            word.upper(): tuple(tuple(p) for p in variants) for word, variants in entries.items()
        }

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and word.upper() in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    @property
    def words(self) -> List[str]:
        return list(self._entries)

    def lookup(self, word: str) -> Tuple[Tuple[str, ...], ...]:
        try:
            return self._entries[word.upper()]
        except KeyError:
            raise OutOfVocabularyError([word.upper()])

    def first(self, word: str) -> Tuple[str, ...]:
        return self.lookup(word)[0]

    def to_text(self) -> str:
        lines = []
        for word in sorted(self._entries):
            for index, phones in enumerate(self._entries[word], 1):
                head = word if index == 1 else f"{word}({index})"
                lines.append(f"{head}  {' '.join(phones)}")
        return "\n".join(lines) + ("\n" if lines else "")


def load_dictionary(text: str, inventory: Optional[PhonemeInventory] = None) -> PronunciationDict:
    """Parse a CMU-style dictionary: ``WORD  ph1 ph2 ...`` with ``WORD(2)`` variants"""
    if inventory is None:
        inventory = default_inventory()
    entries: "OrderedDict[str, List[Tuple[str, ...]]]" = OrderedDict()
    for line_number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith(";;;") or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) < 2:
            raise DictionaryParseError(line_number, raw)
        word = _VARIANT_RE.sub("", tokens[0]).upper()
        phones = tuple(inventory.check(p, f"dictionary line {line_number}") for p in tokens[1:])
        entries.setdefault(word, []).append(phones)
    return PronunciationDict(entries)


@dataclass(frozen=True)
class TranscriptUnit:
    label: str
    start: Optional[int] = None
    end: Optional[int] = None
    # Set on the first unit of each word
    word: Optional[str] = None

    @property
    def timed(self) -> bool:
        return self.start is not None and self.end is not None


@dataclass(frozen=True)
class Transcript:
    units: Tuple[TranscriptUnit, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        previous_end = 0
        for unit in self.units:
            if unit.start is None and unit.end is None:
                continue
            if unit.start is None or unit.end is None:
                raise TranscriptError(f"Unit '{unit.label}' has partial timing")
            if not 0 <= unit.start <= unit.end:
                raise TranscriptError(f"Unit '{unit.label}' has invalid timing {unit.start}-{unit.end}")
            if unit.start < previous_end:
                raise TranscriptError(f"Unit '{unit.label}' overlaps the previous unit")
            previous_end = unit.end

    def __len__(self) -> int:
        return len(self.units)

    @property
    def labels(self) -> List[str]:
        return [unit.label for unit in self.units]

    @property
    def words(self) -> List[str]:
        return [unit.word for unit in self.units if unit.word is not None]

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "Transcript":
        return cls(tuple(TranscriptUnit(label) for label in labels))


def words_to_visemes(pdict: PronunciationDict, vmap: VisemeMap, words: Sequence[str]) -> Transcript:
    """Viseme transcript from the first pronunciation of each word, untimed"""
    missing = [w.upper() for w in words if w not in pdict]
    if missing:
        raise OutOfVocabularyError(missing)
    units: List[TranscriptUnit] = []
    for word in words:
        for index, phone in enumerate(pdict.first(word)):
            units.append(
                TranscriptUnit(vmap.map_phoneme(phone), word=word.upper() if index == 0 else None)
            )
    return Transcript(tuple(units))


def viseme_dictionary(pdict: PronunciationDict, vmap: VisemeMap) -> Dict[str, List[Tuple[str, ...]]]:
    """Word -> distinct viseme strings over all pronunciation variants"""
    result: Dict[str, List[Tuple[str, ...]]] = {}
    for word in pdict:
        strings: List[Tuple[str, ...]] = []
        for phones in pdict.lookup(word):
            visemes = tuple(vmap.map_phoneme(p) for p in phones)
            if visemes not in strings:
                strings.append(visemes)
        result[word] = strings
    return result


def count_visemes(transcripts: Iterable[Transcript], vmap: VisemeMap) -> Dict[str, int]:
    counts: Dict[str, int] = {vid: 0 for vid in vmap.ids}
    for transcript in transcripts:
        for unit in transcript.units:
            if unit.label not in counts:
                raise PartitionError(f"Label '{unit.label}' is not a class of the viseme map")
            counts[unit.label] += 1
    return counts


def apply_garbage_threshold(vmap: VisemeMap, counts: Mapping[str, int], threshold: int) -> VisemeMap:
    """Merge every non-silence class seen fewer than `threshold` times into ``garb``"""
    if threshold < 0:
        raise GarbageMergeError("threshold must be non-negative")
    special = set(vmap.special_ids)
    candidates = [vid for vid in vmap.ids if vid not in special and vid != GARBAGE]
    missing = [vid for vid in candidates if vid not in counts]
    if missing:
        raise GarbageMergeError(f"No counts for classes: {' '.join(missing)}")

    merged = [vid for vid in candidates if counts[vid] < threshold]
    if not merged:
        return vmap

    survivors = [vid for vid in candidates if vid not in merged]
    garbage_total = sum(counts[vid] for vid in merged) + counts.get(GARBAGE, 0)
    if not survivors and garbage_total == 0:
        raise GarbageMergeError("Merging leaves no trainable viseme class")

    garbage_phones: List[str] = list(vmap.phones(GARBAGE)) if GARBAGE in vmap else []
    classes: List[Tuple[str, Sequence[str]]] = []
    for vid, members in vmap.classes:
        if vid in merged:
            garbage_phones.extend(members)
        elif vid != GARBAGE:
            classes.append((vid, members))
    classes.append((GARBAGE, garbage_phones))
    logger.info("Merged %s into '%s' (threshold %d)", " ".join(merged), GARBAGE, threshold)
    return VisemeMap(classes, vmap.inventory)


def load_word_transcripts(text: str) -> List[Tuple[str, List[str]]]:
    """Parse ``ID WORD WORD ...`` lines into (utterance id, words) pairs"""
    result: List[Tuple[str, List[str]]] = []
    for raw in text.splitlines():
        line = _strip_comment(raw)
        if not line:
            continue
        tokens = line.split()
        result.append((tokens[0], [w.upper() for w in tokens[1:]]))
    return result


def save_word_transcripts(lines: Sequence[Tuple[str, Sequence[str]]]) -> str:
    return "".join(" ".join([uid, *words]) + "\n" for uid, words in lines)
