"""Keyword corpus, utterance manifests, dataset splits and label maps.

Interchange formats (UTF-8 CSV with a header row):

    keyword,language,translation,category,stem,variants      (variants ``|``-separated)
    path,keyword,speaker_id,language,split

Manifest paths are stored relative to the directory holding the manifest file.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from kws.audio import AudioClip, write_wav
from kws.errors import (
    ArgumentError,
    DuplicateKeywordError,
    EmptyManifestError,
    InfeasibleSplitError,
    StorageError,
    ValidationError,
)
from kws.utils import atomic_write, get_logger, read_csv_rows

logger = get_logger(__name__)

LANGUAGES = ("luganda", "english")
CATEGORIES = ("crop", "disease", "fertilizer", "herbicide", "general")
SPLITS = ("train", "val", "test")
SPLIT_MODES = ("by_utterance", "by_speaker")
BACKGROUND_LABEL = "_background_"

CORPUS_FIELDS = ["keyword", "language", "translation", "category", "stem", "variants"]
MANIFEST_FIELDS = ["path", "keyword", "speaker_id", "language", "split"]
PLANTED_FIELDS = ["keyword", "time"]
AUDIO_SUFFIXES = (".wav", ".ogg", ".oga", ".opus", ".flac")


@dataclass
class KeywordEntry:
    keyword: str
    language: str
    translation: Optional[str] = None
    category: str = "general"
    stem: Optional[str] = None
    variants: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.keyword = (self.keyword or "").strip().lower()
        if not self.keyword:
            raise ValidationError("keyword is empty")
        self.language = (self.language or "").strip().lower()
        if self.language not in LANGUAGES:
            raise ValidationError(f"language {self.language!r} not in {LANGUAGES}")
        self.category = (self.category or "general").strip().lower()
        if self.category not in CATEGORIES:
            raise ValidationError(f"category {self.category!r} not in {CATEGORIES}")
        self.translation = (self.translation or "").strip() or None
        # empty cells in the CSV mean "no stem"
        self.stem = (self.stem or "").strip().lower() or None
        self.variants = _unique(
            v.strip().lower() for v in self.variants if v.strip() and v.strip().lower() != self.keyword
        )

    @property
    def key(self) -> Tuple[str, str]:
        return self.keyword.casefold(), self.language

    @classmethod
    def from_row(cls, row: Mapping) -> "KeywordEntry":
        variants = row.get("variants") or []
        if isinstance(variants, str):
            variants = variants.split("|")
        return cls(
            keyword=row.get("keyword"),
            language=row.get("language"),
            translation=row.get("translation"),
            category=row.get("category") or "general",
            stem=row.get("stem"),
            variants=list(variants),
        )

    def to_row(self) -> Dict[str, str]:
        return {
            "keyword": self.keyword,
            "language": self.language,
            "translation": self.translation or "",
            "category": self.category,
            "stem": self.stem or "",
            "variants": "|".join(self.variants),
        }


@dataclass
class Conflict:
    keyword: str
    language: str
    kept: str
    dropped: str
    source: int

    def __str__(self) -> str:
        return (
            f"{self.keyword} ({self.language}): category {self.dropped!r} from source "
            f"{self.source} ignored, keeping {self.kept!r}"
        )


@dataclass
class KeywordCorpus:
    entries: List[KeywordEntry]
    conflicts: List[Conflict] = field(default_factory=list)
    issues: List[ValidationError] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __contains__(self, keyword: str) -> bool:
        return self.get(keyword) is not None

    @property
    def keywords(self) -> List[str]:
        return [e.keyword for e in self.entries]

    def get(self, keyword: str, language: Optional[str] = None) -> Optional[KeywordEntry]:
        folded = keyword.strip().casefold()
        for entry in self.entries:
            if entry.keyword.casefold() == folded and language in (None, entry.language):
                return entry
        return None

    def resolve(self, surface: str) -> Optional[KeywordEntry]:
        """Map a surface form, spelling variant or stem to its canonical entry."""
        entry = self.get(surface)
        if entry is not None:
            return entry
        folded = surface.strip().casefold()
        for entry in self.entries:
            if folded in entry.variants or (entry.stem is not None and folded == entry.stem):
                return entry
        return None


def _unique(items: Iterable[str]) -> List[str]:
    seen = []
    for item in items:
        if item not in seen:
            seen.append(item)
    return seen


def _merge_variants(target: KeywordEntry, extra: Iterable[str]) -> None:
    target.variants = _unique(
        v for v in list(target.variants) + list(extra) if v != target.keyword
    )


def aggregate_keywords(
    sources: Sequence[Iterable[Union[Mapping, KeywordEntry]]],
) -> KeywordCorpus:
    """Union keyword lists with case-folded dedup on (keyword, language).

    Earlier sources win category conflicts; each conflict is recorded. An entry
    whose stem matches an existing entry's stem (same language) is folded into
    that entry's variants. Invalid rows are recorded in ``issues`` and skipped.
    """
    if not sources:
        raise ArgumentError("aggregate_keywords needs at least one source")

    entries: List[KeywordEntry] = []
    by_key: Dict[Tuple[str, str], KeywordEntry] = {}
    by_stem: Dict[Tuple[str, str], KeywordEntry] = {}
    conflicts: List[Conflict] = []
    issues: List[ValidationError] = []

    for src_idx, rows in enumerate(sources):
        for row_idx, row in enumerate(rows, 1):
            try:
                if isinstance(row, KeywordEntry):
                    entry = replace(row, variants=list(row.variants))
                else:
                    entry = KeywordEntry.from_row(row)
            except ValidationError as e:
                issue = ValidationError(f"source {src_idx}: {e}", row_idx)
                logger.warning("skipping keyword row: %s", issue)
                issues.append(issue)
                continue

            existing = by_key.get(entry.key)
            if existing is None:
                folded = entry.keyword.casefold()
                existing = next(
                    (
                        e
                        for e in by_key.values()
                        if e.language == entry.language and folded in e.variants
                    ),
                    None,
                )
            if existing is None and entry.stem is not None:
                existing = by_stem.get((entry.stem, entry.language))
                if existing is not None:
                    _merge_variants(existing, [entry.keyword] + entry.variants)
                    continue

            if existing is None:
                entries.append(entry)
                by_key[entry.key] = entry
                if entry.stem is not None:
                    by_stem.setdefault((entry.stem, entry.language), entry)
                continue

            if entry.category != existing.category:
                conflict = Conflict(
                    existing.keyword, existing.language, existing.category, entry.category, src_idx
                )
                logger.warning("keyword conflict: %s", conflict)
                conflicts.append(conflict)
            existing.translation = existing.translation or entry.translation
            if existing.stem is None and entry.stem is not None:
                existing.stem = entry.stem
                by_stem.setdefault((entry.stem, entry.language), existing)
            _merge_variants(existing, entry.variants)

    return KeywordCorpus(entries, conflicts, issues)


def read_keyword_rows(path: Union[str, Path]) -> List[Dict[str, str]]:
    return read_csv_rows(path, "keyword list")


def load_corpus(paths: Sequence[Union[str, Path]]) -> KeywordCorpus:
    return aggregate_keywords([read_keyword_rows(p) for p in paths])


def save_corpus(corpus: KeywordCorpus, path: Union[str, Path]) -> None:
    with atomic_write(path) as f:
        writer = csv.DictWriter(f, fieldnames=CORPUS_FIELDS)
        writer.writeheader()
        for entry in corpus.entries:
            writer.writerow(entry.to_row())


# Radio-monitoring keywords with their English counterparts, padded with placeholders
# so a 10-way label map can be built without a user corpus.
_DEFAULT_ROWS = [
    ("kasooli", "luganda", "maize", "crop"),
    ("obutunda", "luganda", "passion fruits", "crop"),
    ("akasanyi", "luganda", "worms", "general"),
    ("maize", "english", "kasooli", "crop"),
    ("passion fruits", "english", "obutunda", "crop"),
    ("worms", "english", "akasanyi", "general"),
] + [(f"placeholder{i:02d}", "luganda", None, "general") for i in range(1, 8)]


def default_corpus() -> KeywordCorpus:
    return aggregate_keywords(
        [
            [
                {"keyword": k, "language": lang, "translation": t, "category": c}
                for k, lang, t, c in _DEFAULT_ROWS
            ]
        ]
    )


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UtteranceRecord:
    path: str
    keyword: str
    speaker_id: str
    language: str
    split: Optional[str] = None

    def __post_init__(self):
        if self.split is not None and self.split not in SPLITS:
            raise ValidationError(f"split {self.split!r} not in {SPLITS}")

    def resolve(self, root: Union[str, Path]) -> Path:
        path = Path(self.path)
        return path if path.is_absolute() else Path(root) / path


@dataclass
class Exclusion:
    path: str
    reason: str

    def __str__(self) -> str:
        return f"{self.path}: {self.reason}"


def _record_for(
    rel_path: str, surface: str, speaker_id: str, corpus: KeywordCorpus
) -> Union[UtteranceRecord, Exclusion]:
    if surface == BACKGROUND_LABEL:
        return UtteranceRecord(rel_path, BACKGROUND_LABEL, speaker_id, LANGUAGES[0])
    entry = corpus.resolve(surface)
    if entry is None:
        return Exclusion(rel_path, f"keyword {surface!r} not in corpus")
    return UtteranceRecord(rel_path, entry.keyword, speaker_id, entry.language)


def _scan_keyword_dir(kw_dir: Path) -> List[Path]:
    return sorted(
        p for p in kw_dir.iterdir() if p.is_file() and p.suffix.lower() in AUDIO_SUFFIXES
    )


def build_manifest(
    audio_dir: Union[str, Path],
    corpus: KeywordCorpus,
    excluded: Optional[List[Exclusion]] = None,
    jobs: int = 4,
) -> List[UtteranceRecord]:
    """Index ``<keyword>/<speaker_id>_<n>.<ext>`` files (or a sidecar manifest.csv).

    Records are ordered by path. Files whose keyword is not in the corpus are
    logged and appended to ``excluded`` when given.
    """
    audio_dir = Path(audio_dir)
    if not audio_dir.is_dir():
        raise StorageError(f"audio directory not readable: {audio_dir}")
    excluded = excluded if excluded is not None else []

    sidecar = audio_dir / "manifest.csv"
    results: List[Union[UtteranceRecord, Exclusion]] = []
    if sidecar.is_file():
        for row in load_manifest(sidecar):
            results.append(_record_for(row.path, row.keyword, row.speaker_id, corpus))
    else:
        try:
            kw_dirs = sorted(p for p in audio_dir.iterdir() if p.is_dir())
        except OSError as e:
            raise StorageError(f"cannot list {audio_dir}: {e}") from e
        with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
            listings = list(pool.map(_scan_keyword_dir, kw_dirs))
        for kw_dir, files in zip(kw_dirs, listings):
            for path in files:
                stem = path.stem
                speaker_id = stem.rsplit("_", 1)[0] if "_" in stem else stem
                rel = path.relative_to(audio_dir).as_posix()
                results.append(_record_for(rel, kw_dir.name, speaker_id, corpus))

    records = []
    for item in results:
        if isinstance(item, Exclusion):
            logger.warning("excluded %s", item)
            excluded.append(item)
        else:
            records.append(item)
    if not records:
        raise EmptyManifestError(f"no usable audio files under {audio_dir}")

    records.sort(key=lambda r: r.path)
    logger.info("manifest: %d records, %d excluded", len(records), len(excluded))
    return records


def load_manifest(path: Union[str, Path]) -> List[UtteranceRecord]:
    path = Path(path)
    rows = read_csv_rows(path, "manifest")

    records = []
    for idx, row in enumerate(rows, 1):
        try:
            if not row.get("path") or not row.get("keyword"):
                raise ValidationError("path and keyword are required")
            records.append(
                UtteranceRecord(
                    path=row["path"],
                    keyword=row["keyword"].strip().lower(),
                    speaker_id=row.get("speaker_id") or "",
                    language=(row.get("language") or LANGUAGES[0]).strip().lower(),
                    split=row.get("split") or None,
                )
            )
        except ValidationError as e:
            raise ValidationError(f"{path}: {e}", idx) from e
    return records


def save_manifest(
    records: Sequence[UtteranceRecord],
    path: Union[str, Path],
    root: Optional[Union[str, Path]] = None,
) -> None:
    """Write records; relative paths are rebased from ``root`` to the manifest's directory."""
    path = Path(path)
    with atomic_write(path) as f:
        writer = csv.DictWriter(f, fieldnames=MANIFEST_FIELDS)
        writer.writeheader()
        for r in records:
            rec_path = r.path
            if root is not None and not Path(rec_path).is_absolute():
                rec_path = Path(
                    os.path.relpath(Path(root) / rec_path, path.parent)
                ).as_posix()
            writer.writerow(
                {
                    "path": rec_path,
                    "keyword": r.keyword,
                    "speaker_id": r.speaker_id,
                    "language": r.language,
                    "split": r.split or "",
                }
            )


def validate_records(records: Iterable[UtteranceRecord], corpus: KeywordCorpus) -> None:
    for idx, r in enumerate(records, 1):
        if r.keyword != BACKGROUND_LABEL and r.keyword not in corpus:
            raise ValidationError(f"keyword {r.keyword!r} of {r.path} not in corpus", idx)


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


def largest_remainder(n: int, ratios: Sequence[float]) -> List[int]:
    """Integer counts summing to ``n``; leftover units go to the largest
    fractional quotas (earlier split first on ties)."""
    quotas = [n * r for r in ratios]
    counts = [int(np.floor(q)) for q in quotas]
    order = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _check_ratios(ratios: Sequence[float]) -> None:
    if len(ratios) != 3:
        raise ArgumentError(f"expected 3 split ratios (train, val, test), got {len(ratios)}")
    if any(r <= 0 for r in ratios):
        raise ArgumentError(f"split ratios must be positive, got {list(ratios)}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ArgumentError(f"split ratios must sum to 1, got {sum(ratios)}")


def default_split_mode(records: Sequence[UtteranceRecord]) -> str:
    speakers = {r.speaker_id for r in records}
    if all(r.speaker_id for r in records) and len(speakers) >= len(SPLITS):
        return "by_speaker"
    return "by_utterance"


def _split_by_utterance(records, ratios, rng) -> List[str]:
    # Each record gets a position u in (0, 1) evenly spread within its keyword;
    # sorting on u and cutting at the global counts keeps every keyword
    # proportionally represented in every split.
    by_keyword: Dict[str, List[int]] = {}
    for idx, r in enumerate(records):
        by_keyword.setdefault(r.keyword, []).append(idx)

    positions = np.empty(len(records))
    for keyword in sorted(by_keyword):
        members = np.array(by_keyword[keyword])
        members = members[rng.permutation(len(members))]
        positions[members] = (np.arange(len(members)) + 0.5) / len(members)

    tie_break = rng.permutation(len(records))
    order = np.lexsort((tie_break, positions))
    counts = largest_remainder(len(records), ratios)

    labels = [""] * len(records)
    bounds = np.cumsum([0] + counts)
    for split, lo, hi in zip(SPLITS, bounds[:-1], bounds[1:]):
        for idx in order[lo:hi]:
            labels[idx] = split
    return labels


def _split_by_speaker(records, ratios, rng) -> List[str]:
    by_speaker: Dict[str, List[int]] = {}
    for idx, r in enumerate(records):
        by_speaker.setdefault(r.speaker_id, []).append(idx)
    if len(by_speaker) < len(SPLITS):
        raise InfeasibleSplitError(
            f"speaker-disjoint split needs at least {len(SPLITS)} speakers, got {len(by_speaker)}"
        )

    speakers = sorted(by_speaker)
    speakers = [speakers[i] for i in rng.permutation(len(speakers))]
    # largest speakers first; stable sort keeps the shuffled order among equals
    speakers.sort(key=lambda s: -len(by_speaker[s]))

    targets = largest_remainder(len(records), ratios)
    assigned = [0] * len(SPLITS)
    owner: Dict[str, int] = {}

    seed_order = sorted(range(len(SPLITS)), key=lambda j: (-targets[j], j))
    for speaker, j in zip(speakers, seed_order):
        owner[speaker] = j
        assigned[j] += len(by_speaker[speaker])
    for speaker in speakers[len(SPLITS) :]:
        j = max(range(len(SPLITS)), key=lambda j: (targets[j] - assigned[j], -j))
        owner[speaker] = j
        assigned[j] += len(by_speaker[speaker])

    labels = [""] * len(records)
    for speaker, members in by_speaker.items():
        for idx in members:
            labels[idx] = SPLITS[owner[speaker]]
    return labels


def split_manifest(
    records: Sequence[UtteranceRecord],
    ratios: Sequence[float] = (0.64, 0.16, 0.20),
    mode: Optional[str] = None,
    seed: int = 0,
) -> List[UtteranceRecord]:
    """Assign train/val/test. Deterministic in ``seed``; input order is kept.

    ``by_utterance`` stratifies per keyword with largest-remainder totals;
    ``by_speaker`` keeps each speaker inside a single split.
    """
    _check_ratios(ratios)
    if not records:
        raise EmptyManifestError("cannot split an empty manifest")
    mode = mode or default_split_mode(records)
    if mode not in SPLIT_MODES:
        raise ArgumentError(f"split mode {mode!r} not in {SPLIT_MODES}")

    rng = np.random.default_rng(seed)
    if mode == "by_speaker":
        labels = _split_by_speaker(records, ratios, rng)
    else:
        labels = _split_by_utterance(records, ratios, rng)

    out = [replace(r, split=s) for r, s in zip(records, labels)]
    counts = {s: labels.count(s) for s in SPLITS}
    logger.info("split (%s): %s", mode, ", ".join(f"{k}={v}" for k, v in counts.items()))
    return out


def select_split(records: Iterable[UtteranceRecord], split: str) -> List[UtteranceRecord]:
    return [r for r in records if r.split == split]


# ---------------------------------------------------------------------------
# Label map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LabelMap:
    labels: Tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) < 2:
            raise ArgumentError(f"a label map needs at least 2 keywords, got {len(labels)}")
        dupes = sorted({k for k in labels if labels.count(k) > 1})
        if dupes:
            raise DuplicateKeywordError(f"duplicate keywords in label map: {', '.join(dupes)}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, keyword: str) -> bool:
        return keyword in self._index

    def index(self, keyword: str) -> int:
        try:
            return self._index[keyword]
        except KeyError:
            raise ArgumentError(f"keyword {keyword!r} not in label map") from None

    def keyword(self, index: int) -> str:
        if not 0 <= index < len(self.labels):
            raise ArgumentError(f"class index {index} outside 0..{len(self.labels) - 1}")
        return self.labels[index]

    @property
    def background_index(self) -> Optional[int]:
        return self._index.get(BACKGROUND_LABEL)


def make_label_map(
    corpus: KeywordCorpus, selected: Sequence[str], background: bool = False
) -> LabelMap:
    """Class index follows ``selected`` order; ``background`` appends a reject class."""
    keywords = [k.strip().lower() for k in selected]
    for k in keywords:
        if corpus.get(k) is None:
            raise ArgumentError(f"keyword {k!r} not in corpus")
    if background:
        keywords.append(BACKGROUND_LABEL)
    return LabelMap(tuple(keywords))


def label_map_from_records(
    corpus: KeywordCorpus, records: Iterable[UtteranceRecord]
) -> LabelMap:
    """Label map over the keywords present in ``records``, in corpus order."""
    present = {r.keyword for r in records}
    selected = [k for k in corpus.keywords if k in present]
    return make_label_map(corpus, selected, background=BACKGROUND_LABEL in present)


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

SYNTH_BASE_HZ = 300.0
SYNTH_STEP_HZ = 150.0
SYNTH_AMPLITUDE = 0.5
RAMP_S = 0.01


def synth_frequency(k: int) -> float:
    return SYNTH_BASE_HZ + SYNTH_STEP_HZ * k


def synth_keyword(k: int) -> str:
    return f"tone{int(synth_frequency(k))}hz"


def synth_corpus(num_classes: int) -> KeywordCorpus:
    return aggregate_keywords(
        [[{"keyword": synth_keyword(k), "language": "english"} for k in range(num_classes)]]
    )


def _check_synth(num_classes: int, rate: int) -> None:
    if num_classes < 2:
        raise ArgumentError(f"need at least 2 classes, got {num_classes}")
    top = synth_frequency(num_classes - 1)
    if top >= rate / 2:
        raise ArgumentError(
            f"{num_classes} classes put the top tone at {top:.0f} Hz, "
            f"at or above Nyquist ({rate / 2:.0f} Hz)"
        )


def _noise_std(snr_db: Optional[float]) -> float:
    if snr_db is None:
        return 0.0
    # referenced to a sine at the nominal amplitude
    return SYNTH_AMPLITUDE / np.sqrt(2.0) / 10.0 ** (snr_db / 20.0)


def _burst_envelope(rng: np.random.Generator, burst_len: int, rate: int, vary: bool) -> np.ndarray:
    """Raised-cosine attack, exponential decay, short release ramp."""
    n = np.arange(burst_len)
    if vary:
        attack = max(1, int(burst_len * rng.uniform(0.05, 0.3)))
        tau = burst_len * rng.uniform(0.4, 2.0)
    else:
        attack = max(1, int(RAMP_S * rate))
        tau = np.inf
    attack = min(attack, burst_len)
    envelope = np.exp(-np.maximum(n - attack, 0) / tau)
    envelope[:attack] *= 0.5 - 0.5 * np.cos(np.pi * np.arange(attack) / attack)
    ramp = min(int(RAMP_S * rate), burst_len // 2)
    if ramp > 0:
        envelope[-ramp:] *= 0.5 + 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
    return envelope


def render_burst(
    rng: np.random.Generator,
    freq: Optional[float],
    frame_len: int = 8000,
    rate: int = 8000,
    burst_s: float = 0.3,
    onset_jitter_s: float = 0.35,
    amplitude_jitter: float = 0.2,
    snr_db: Optional[float] = 20.0,
    pitch_jitter: float = 0.03,
    envelope_jitter: bool = True,
) -> np.ndarray:
    """One frame holding a tone burst plus white noise.

    The burst onset moves up to ``onset_jitter_s`` either side of centre
    (clipped to the frame). ``pitch_jitter`` is the relative spread of an
    utterance's base pitch and of its glide across the burst; the total
    excursion never exceeds a third of the class spacing, so classes stay
    separable. ``envelope_jitter`` draws a random attack and decay per
    utterance, otherwise the burst is flat with 10 ms ramps.
    ``freq=None`` renders noise only (background class).
    """
    if pitch_jitter < 0 or onset_jitter_s < 0:
        raise ArgumentError("jitter must be non-negative")
    x = np.zeros(frame_len)
    if freq is not None:
        burst_len = min(int(round(burst_s * rate)), frame_len)
        nominal = (frame_len - burst_len) // 2
        jitter = int(round(rng.uniform(-onset_jitter_s, onset_jitter_s) * rate))
        onset = int(np.clip(nominal + jitter, 0, frame_len - burst_len))
        amplitude = SYNTH_AMPLITUDE * (1.0 + rng.uniform(-amplitude_jitter, amplitude_jitter))
        phase = rng.uniform(0.0, 2.0 * np.pi)

        # base offset plus a linear glide centred on the burst midpoint
        limit = min(pitch_jitter * freq, SYNTH_STEP_HZ / 3.0)
        offset = rng.uniform(-1.0, 1.0) * limit / 2.0
        glide = rng.uniform(-1.0, 1.0) * limit
        t = np.arange(burst_len) / rate
        inst = freq + offset + glide * (t / max(t[-1], 1.0 / rate) - 0.5)
        angle = phase + 2.0 * np.pi * np.cumsum(inst) / rate

        envelope = _burst_envelope(rng, burst_len, rate, envelope_jitter)
        x[onset : onset + burst_len] = amplitude * envelope * np.sin(angle)

    std = _noise_std(snr_db)
    if freq is None and std == 0.0:
        std = _noise_std(40.0)
    if std > 0.0:
        x = x + rng.normal(0.0, std, frame_len)
    return np.clip(x, -1.0, 1.0)


def synth_dataset(
    out_dir: Union[str, Path],
    num_classes: int = 10,
    per_class: int = 100,
    frame_len: int = 8000,
    snr_db: Optional[float] = 20.0,
    seed: int = 0,
    burst_s: float = 0.3,
    onset_jitter_s: float = 0.35,
    amplitude_jitter: float = 0.2,
    pitch_jitter: float = 0.03,
    envelope_jitter: bool = True,
    background_class: bool = False,
    bits: int = 16,
) -> Tuple[List[UtteranceRecord], List[Path]]:
    """Write a tone-burst stand-in corpus: class k is a ``300 + 150·k`` Hz burst.

    Every utterance varies in onset, pitch, loudness and envelope (see
    :func:`render_burst`); the defaults spread onsets over the whole frame.
    Utterance ``i`` of every class is attributed to speaker ``s<i>``. Writes
    ``wav/<keyword>/s<i>_0.wav``, ``manifest.csv`` and ``corpus.csv`` under
    ``out_dir``; output is byte-identical for equal arguments.
    """
    rate = 8000
    _check_synth(num_classes, rate)
    if per_class < 1:
        raise ArgumentError(f"per_class must be >= 1, got {per_class}")

    out_dir = Path(out_dir)
    classes: List[Tuple[str, Optional[float]]] = [
        (synth_keyword(k), synth_frequency(k)) for k in range(num_classes)
    ]
    if background_class:
        classes.append((BACKGROUND_LABEL, None))

    records: List[UtteranceRecord] = []
    paths: List[Path] = []
    jobs = [(k, i) for k in range(len(classes)) for i in range(per_class)]
    for k, i in tqdm(jobs, desc="synth", disable=None):
        keyword, freq = classes[k]
        rng = np.random.default_rng([seed, k, i])
        samples = render_burst(
            rng, freq, frame_len, rate, burst_s, onset_jitter_s, amplitude_jitter, snr_db,
            pitch_jitter, envelope_jitter,
        )
        speaker = f"s{i:03d}"
        rel = f"wav/{keyword}/{speaker}_0.wav"
        write_wav(out_dir / rel, AudioClip(samples, rate, rel), bits)
        records.append(UtteranceRecord(rel, keyword, speaker, "english"))
        paths.append(out_dir / rel)

    records.sort(key=lambda r: r.path)
    save_manifest(records, out_dir / "manifest.csv")
    save_corpus(synth_corpus(num_classes), out_dir / "corpus.csv")
    logger.info("synthesized %d clips in %d classes under %s", len(records), len(classes), out_dir)
    return records, paths


@dataclass(frozen=True)
class PlantedKeyword:
    keyword: str
    time: float


def synth_stream(
    plants: Sequence[Tuple[int, float]],
    duration_s: float,
    snr_db: Optional[float] = 20.0,
    seed: int = 0,
    frame_len: int = 8000,
    burst_s: float = 0.3,
    pitch_jitter: float = 0.03,
) -> Tuple[AudioClip, List[PlantedKeyword]]:
    """Long recording with class bursts planted at known offsets.

    Each plant ``(k, t)`` places one synth frame starting at ``t`` seconds
    over a continuous noise floor. The burst sits at the frame centre so a
    window starting at ``t`` holds it whole. Returns the clip and the ground truth.
    """
    rate = 8000
    n_total = int(round(duration_s * rate))
    rng = np.random.default_rng(seed)
    std = _noise_std(snr_db)
    x = rng.normal(0.0, std, n_total) if std > 0 else np.zeros(n_total)

    truth = []
    for k, t in sorted(plants, key=lambda p: p[1]):
        _check_synth(max(k + 1, 2), rate)
        start = int(round(t * rate))
        if start < 0 or start + frame_len > n_total:
            raise ArgumentError(f"planted burst at {t}s does not fit in {duration_s}s")
        burst = render_burst(
            rng, synth_frequency(k), frame_len, rate, burst_s, onset_jitter_s=0.0,
            snr_db=None, pitch_jitter=pitch_jitter,
        )
        x[start : start + frame_len] += burst
        truth.append(PlantedKeyword(synth_keyword(k), float(t)))

    return AudioClip(np.clip(x, -1.0, 1.0), rate, "synthetic-stream"), truth


def save_planted(truth: Sequence[PlantedKeyword], path: Union[str, Path]) -> None:
    with atomic_write(path) as f:
        writer = csv.writer(f)
        writer.writerow(PLANTED_FIELDS)
        for p in truth:
            writer.writerow([p.keyword, repr(p.time)])


def load_planted(path: Union[str, Path]) -> List[PlantedKeyword]:
    path = Path(path)
    rows = read_csv_rows(path, "ground truth")
    truth = []
    for idx, row in enumerate(rows, 1):
        try:
            truth.append(PlantedKeyword(row["keyword"].strip().lower(), float(row["time"])))
        except (KeyError, AttributeError, TypeError, ValueError) as e:
            raise ValidationError(f"{path}: bad ground-truth row ({e})", idx) from e
    return truth
