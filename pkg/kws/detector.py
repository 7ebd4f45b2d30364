"""Sliding-window keyword spotting over long recordings.

A recording is cut into model-frame-sized windows every ``hop_s`` seconds, each
window is peak-normalized the way training frames are, and the classifier's
top class is emitted when its probability clears ``threshold``. Repeated hits
of one keyword are then merged by ``debounce`` and counted per recording.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from tqdm import tqdm

from kws.audio import AudioClip, read_clip, resample
from kws.config import PIPELINE_RATE, DetectorConfig
from kws.corpus import KeywordCorpus, PlantedKeyword
from kws.errors import ArgumentError, ShapeError, ValidationError
from kws.model import ModelGraph
from kws.utils import atomic_write, get_logger, read_csv_rows

logger = get_logger(__name__)

EVENT_FIELDS = ["keyword", "start_s", "confidence"]
COUNT_FIELDS = ["keyword", "count"]


@dataclass(frozen=True)
class DetectionEvent:
    keyword: str
    start_time: float
    confidence: float
    window_index: int = 0

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ArgumentError(f"confidence {self.confidence} outside [0, 1]")
        if self.start_time < 0:
            raise ArgumentError(f"negative start time {self.start_time}")


def _check_params(window_s: float, hop_s: float, threshold: float) -> None:
    if not 0.0 < threshold < 1.0:
        raise ArgumentError(f"threshold must lie in (0, 1), got {threshold}")
    if not 0.0 < hop_s <= window_s:
        raise ArgumentError(f"hop must satisfy 0 < hop <= window ({window_s}s), got {hop_s}")


def _windows(x: np.ndarray, window: int, hop: int) -> np.ndarray:
    """Frames starting every ``hop`` samples; the last one is zero-padded."""
    n = len(x)
    count = 1 if n <= window else math.ceil((n - window) / hop) + 1
    padded = np.zeros((count - 1) * hop + window)
    padded[:n] = x
    return sliding_window_view(padded, window)[::hop][:count]


def spot(
    model: ModelGraph,
    clip: AudioClip,
    window_s: float = 1.0,
    hop_s: float = 0.25,
    threshold: float = 0.7,
    silence_floor: float = 1e-3,
    jobs: int = 1,
    batch_size: int = 64,
) -> List[DetectionEvent]:
    """Raw (undebounced) detections in nondecreasing start-time order."""
    _check_params(window_s, hop_s, threshold)
    clip = resample(clip, PIPELINE_RATE)
    window = int(round(window_s * PIPELINE_RATE))
    hop = int(round(hop_s * PIPELINE_RATE))
    if window != model.frame_len:
        raise ShapeError(
            f"window of {window} samples does not match the model frame of {model.frame_len}"
        )
    if len(clip) < hop:
        return []

    frames = _windows(clip.samples, window, hop)
    peaks = np.abs(frames).max(axis=1)
    scored = np.flatnonzero((peaks >= silence_floor) & (peaks > 0))
    if len(scored) == 0:
        return []

    def run(start: int) -> np.ndarray:
        idx = scored[start : start + batch_size]
        return model.predict_batch(frames[idx] / peaks[idx, None])

    starts = range(0, len(scored), batch_size)
    if jobs <= 1:
        parts = [run(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(run, starts))
    probs = np.concatenate(parts)

    background = model.label_map.background_index
    best = probs.argmax(axis=1)
    events = []
    for i, k, p in zip(scored, best, probs[np.arange(len(best)), best]):
        if p >= threshold and k != background:
            events.append(
                DetectionEvent(model.label_map.keyword(int(k)), i * hop / PIPELINE_RATE, float(p), int(i))
            )
    return events


def debounce(events: Sequence[DetectionEvent], min_gap: float = 0.5) -> List[DetectionEvent]:
    """Merge runs of one keyword whose consecutive hits are closer than ``min_gap``.

    A merged event keeps the earliest start time and the highest confidence.
    Different keywords never merge.
    """
    if min_gap < 0:
        raise ArgumentError(f"min_gap must be >= 0, got {min_gap}")
    for a, b in zip(events, events[1:]):
        if b.start_time < a.start_time:
            raise ArgumentError("events must be sorted by start time")

    merged: List[DetectionEvent] = []
    open_run: Dict[str, int] = {}  # keyword -> index into merged
    last_seen: Dict[str, float] = {}
    for event in events:
        k = event.keyword
        if k in open_run and event.start_time - last_seen[k] < min_gap:
            i = open_run[k]
            if event.confidence > merged[i].confidence:
                head = merged[i]
                merged[i] = DetectionEvent(k, head.start_time, event.confidence, head.window_index)
        else:
            open_run[k] = len(merged)
            merged.append(event)
        last_seen[k] = event.start_time
    return merged


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass
class FrequencyReport:
    recording_id: str
    counts: Dict[str, int] = field(default_factory=dict)
    events: Dict[str, List[DetectionEvent]] = field(default_factory=dict)
    config: Dict[str, float] = field(default_factory=dict)
    translations: Dict[str, str] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def all_events(self) -> List[DetectionEvent]:
        flat = [e for events in self.events.values() for e in events]
        return sorted(flat, key=lambda e: (e.start_time, e.keyword))

    def to_dict(self) -> Dict:
        out = {
            "recording": self.recording_id,
            "counts": dict(self.counts),
            "events": [
                {"keyword": e.keyword, "t": e.start_time, "conf": e.confidence}
                for e in self.all_events()
            ],
            "config": dict(self.config),
        }
        if self.translations:
            out["translations"] = dict(self.translations)
        return out

    def to_json(self, path: Union[str, Path]) -> None:
        with atomic_write(path) as f:
            json.dump(self.to_dict(), f, indent=2, ensure_ascii=False)
            f.write("\n")

    def to_counts_csv(self, path: Union[str, Path]) -> None:
        with atomic_write(path) as f:
            writer = csv.writer(f)
            writer.writerow(COUNT_FIELDS)
            for keyword, count in self.counts.items():
                writer.writerow([keyword, count])

    def table(self) -> str:
        """Keyword / description / frequency table, most frequent first."""
        header = f"{'Keyword':<20}{'Description':<24}{'Frequency':>10}"
        lines = [header, "-" * len(header)]
        for keyword, count in self.counts.items():
            lines.append(f"{keyword:<20}{self.translations.get(keyword, ''):<24}{count:>10d}")
        return "\n".join(lines)


def frequency_report(
    recording_id: str,
    events: Iterable[DetectionEvent],
    corpus: Optional[KeywordCorpus] = None,
    config: Optional[DetectorConfig] = None,
) -> FrequencyReport:
    """Per-keyword counts of debounced events, most frequent first."""
    grouped: Dict[str, List[DetectionEvent]] = {}
    for event in events:
        grouped.setdefault(event.keyword, []).append(event)
    order = sorted(grouped, key=lambda k: (-len(grouped[k]), k))

    translations = {}
    if corpus is not None:
        for keyword in order:
            entry = corpus.resolve(keyword)
            if entry is not None and entry.translation:
                translations[keyword] = entry.translation

    return FrequencyReport(
        recording_id=recording_id,
        counts={k: len(grouped[k]) for k in order},
        events={k: grouped[k] for k in order},
        config=asdict(config) if config is not None else {},
        translations=translations,
    )


def merge_reports(recording_id: str, reports: Sequence[FrequencyReport]) -> FrequencyReport:
    """Aggregate several recordings into one report (counts add up)."""
    events = [e for r in reports for e in r.all_events()]
    merged = frequency_report(recording_id, events)
    for r in reports:
        merged.translations.update(r.translations)
        if not merged.config:
            merged.config = dict(r.config)
    return merged


def write_events_csv(events: Sequence[DetectionEvent], path: Union[str, Path]) -> None:
    with atomic_write(path) as f:
        writer = csv.writer(f)
        writer.writerow(EVENT_FIELDS)
        for e in events:
            writer.writerow([e.keyword, repr(float(e.start_time)), repr(float(e.confidence))])


def read_events_csv(path: Union[str, Path]) -> List[DetectionEvent]:
    path = Path(path)
    rows = read_csv_rows(path, "events file")

    events = []
    for i, row in enumerate(rows, start=2):
        try:
            events.append(
                DetectionEvent(row["keyword"], float(row["start_s"]), float(row["confidence"]))
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"{path}: {e}", row=i) from e
    return events


# ---------------------------------------------------------------------------
# Batch and scoring helpers
# ---------------------------------------------------------------------------


def spot_file(
    model: ModelGraph,
    path: Union[str, Path],
    config: Optional[DetectorConfig] = None,
    decoder_cmd: Optional[str] = None,
) -> List[DetectionEvent]:
    config = config or DetectorConfig()
    clip = read_clip(path, decoder_cmd)
    raw = spot(
        model,
        clip,
        window_s=config.window_s,
        hop_s=config.hop_s,
        threshold=config.threshold,
        silence_floor=config.silence_floor,
    )
    events = debounce(raw, config.min_gap_s)
    logger.info("%s: %d raw / %d debounced events", path, len(raw), len(events))
    return events


def spot_many(
    model: ModelGraph,
    paths: Sequence[Union[str, Path]],
    config: Optional[DetectorConfig] = None,
    decoder_cmd: Optional[str] = None,
    jobs: Optional[int] = None,
) -> Dict[str, List[DetectionEvent]]:
    """Debounced events per recording; recordings fan out over ``jobs`` threads."""
    config = config or DetectorConfig()
    jobs = config.jobs if jobs is None else jobs

    def run(path):
        return spot_file(model, path, config, decoder_cmd)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(tqdm(pool.map(run, paths), total=len(paths), desc="spot", disable=None))
    return {str(p): events for p, events in zip(paths, results)}


@dataclass
class MatchResult:
    hits: List[PlantedKeyword]
    misses: List[PlantedKeyword]
    false_events: List[DetectionEvent]


def match_planted(
    events: Sequence[DetectionEvent],
    truth: Sequence[PlantedKeyword],
    tolerance: float = 0.5,
) -> MatchResult:
    """Pair each planted keyword with the nearest unused same-keyword event
    within ``tolerance`` seconds; leftovers on either side are misses and
    false events."""
    used = set()
    hits, misses = [], []
    for plant in sorted(truth, key=lambda p: p.time):
        candidates = [
            (abs(e.start_time - plant.time), i)
            for i, e in enumerate(events)
            if i not in used and e.keyword == plant.keyword
            and abs(e.start_time - plant.time) <= tolerance
        ]
        if candidates:
            used.add(min(candidates)[1])
            hits.append(plant)
        else:
            misses.append(plant)
    false_events = [e for i, e in enumerate(events) if i not in used]
    return MatchResult(hits, misses, false_events)

