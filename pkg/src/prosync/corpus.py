"""Conversation and rating ingestion.

A conversation is a table of speaker turns (``turns.csv``) with an optional
mono 16-bit WAV recording. Ratings live in a separate CSV keyed by
conversation id.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import wave
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

TURN_HEADER = ("index", "speaker", "start_s", "end_s", "char_count")
RATINGS_HEADER = ("conversation_id", "tes", "blri", "ses")

# Total-score ranges of the three rating instruments.
RATING_RANGES: dict[str, tuple[int, int]] = {
    "tes": (9, 63),
    "blri": (-48, 48),
    "ses": (5, 25),
}

MIN_SAMPLE_RATE = 8000
# Slack for comparing annotation end times with sample-quantized audio length.
_DURATION_TOLERANCE_S = 1e-3


class CorpusError(Exception):
    """Base class for ingestion failures."""


class ParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None, path: str | Path | None = None):
        self.line = line
        self.path = str(path) if path is not None else None
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ValidationError(CorpusError):
    pass


class RangeError(ValidationError):
    def __init__(self, scale: str, value: int, conversation_id: str):
        self.scale = scale
        self.value = value
        self.conversation_id = conversation_id
        lo, hi = RATING_RANGES[scale]
        super().__init__(
            f"{scale.upper()} score {value} for {conversation_id!r} outside [{lo}, {hi}]"
        )


class Speaker(str, enum.Enum):
    CLIENT = "C"
    THERAPIST = "T"

    def other(self) -> "Speaker":
        return Speaker.THERAPIST if self is Speaker.CLIENT else Speaker.CLIENT


@dataclass(frozen=True)
class Turn:
    index: int
    speaker: Speaker
    start_s: float
    end_s: float
    char_count: int

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    @property
    def midpoint_s(self) -> float:
        return 0.5 * (self.start_s + self.end_s)


@dataclass(frozen=True, eq=False)
class Audio:
    """Mono waveform scaled to [-1, 1) with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValidationError("audio must be mono (one-dimensional)")
        # Copy unless we were handed a read-only array that owns its data.
        if arr is self.samples and (arr.flags.writeable or arr.base is not None):
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class Conversation:
    id: str
    turns: tuple[Turn, ...]
    audio: Audio | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "turns", tuple(self.turns))
        validate_turns(self.turns, context=self.id)
        if self.audio is not None:
            last_end = self.turns[-1].end_s
            if last_end > self.audio.duration_s + _DURATION_TOLERANCE_S:
                raise ValidationError(
                    f"{self.id}: last turn ends at {last_end:.3f}s but audio lasts "
                    f"{self.audio.duration_s:.3f}s"
                )

    @property
    def speakers(self) -> tuple[Speaker, ...]:
        return tuple(t.speaker for t in self.turns)


def validate_turns(turns: Sequence[Turn], *, context: str = "") -> None:
    prefix = f"{context}: " if context else ""
    if len(turns) < 2:
        raise ValidationError(f"{prefix}a conversation needs at least 2 turns, got {len(turns)}")
    for pos, turn in enumerate(turns):
        if turn.index != pos:
            raise ValidationError(f"{prefix}turn at position {pos} carries index {turn.index}")
        if not isinstance(turn.speaker, Speaker):
            raise ValidationError(f"{prefix}turn {pos}: speaker must be C or T")
        if not (math.isfinite(turn.start_s) and math.isfinite(turn.end_s)):
            raise ValidationError(f"{prefix}turn {pos}: non-finite time")
        if turn.start_s < 0:
            raise ValidationError(f"{prefix}turn {pos}: negative start time {turn.start_s}")
        if turn.end_s <= turn.start_s:
            raise ValidationError(
                f"{prefix}turn {pos}: end {turn.end_s} is not after start {turn.start_s}"
            )
        if turn.char_count < 0:
            raise ValidationError(f"{prefix}turn {pos}: negative char_count")
        if pos:
            prev = turns[pos - 1]
            if prev.end_s > turn.start_s:
                raise ValidationError(
                    f"{prefix}turns {pos - 1} and {pos} overlap "
                    f"({prev.end_s} > {turn.start_s})"
                )
            if prev.speaker is turn.speaker:
                raise ValidationError(f"{prefix}turns {pos - 1} and {pos} share a speaker")
    if len({t.speaker for t in turns}) != 2:
        raise ValidationError(f"{prefix}both speakers must be present")


def merge_same_speaker(turns: Iterable[Turn]) -> list[Turn]:
    """Collapse runs of same-speaker turns and renumber from 0.

    A merged turn spans the earliest start to the latest end of its run and
    sums the character counts.
    """
    merged: list[Turn] = []
    for turn in turns:
        if merged and merged[-1].speaker is turn.speaker:
            prev = merged[-1]
            merged[-1] = Turn(
                index=prev.index,
                speaker=prev.speaker,
                start_s=min(prev.start_s, turn.start_s),
                end_s=max(prev.end_s, turn.end_s),
                char_count=prev.char_count + turn.char_count,
            )
        else:
            merged.append(
                Turn(len(merged), turn.speaker, turn.start_s, turn.end_s, turn.char_count)
            )
    return merged


def _parse_turn_rows(text: str, path: str | Path) -> list[Turn]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty turn table", line=1, path=path) from None
    if tuple(h.strip() for h in header) != TURN_HEADER:
        raise ParseError(f"expected header {','.join(TURN_HEADER)}", line=1, path=path)
    rows: list[Turn] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(TURN_HEADER):
            raise ParseError(f"expected {len(TURN_HEADER)} fields, got {len(row)}", line, path)
        idx_s, spk_s, start_s, end_s, count_s = (c.strip() for c in row)
        try:
            index = int(idx_s)
            start = float(start_s)
            end = float(end_s)
            count = int(count_s)
        except ValueError as exc:
            raise ParseError(f"malformed row: {exc}", line, path) from None
        try:
            speaker = Speaker(spk_s)
        except ValueError:
            raise ValidationError(
                f"{path}:{line}: speaker tag {spk_s!r} is not one of C, T"
            ) from None
        if not (math.isfinite(start) and math.isfinite(end)):
            raise ValidationError(f"{path}:{line}: non-finite time")
        if end <= start:
            raise ValidationError(f"{path}:{line}: end_s {end} is not after start_s {start}")
        if start < 0:
            raise ValidationError(f"{path}:{line}: negative start_s {start}")
        if count < 0:
            raise ValidationError(f"{path}:{line}: negative char_count {count}")
        rows.append(Turn(index, speaker, start, end, count))
    rows.sort(key=lambda t: t.index)
    for a, b in zip(rows, rows[1:]):
        if a.index == b.index:
            raise ValidationError(f"{path}: duplicate turn index {a.index}")
        if a.end_s > b.start_s:
            raise ValidationError(
                f"{path}: turns {a.index} and {b.index} overlap ({a.end_s} > {b.start_s})"
            )
    return rows


def read_wav(path: str | Path) -> Audio:
    """Read a mono 16-bit PCM WAV file."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise ParseError(f"unreadable WAV: {exc}", path=path) from None
    if channels != 1:
        raise ValidationError(f"{path}: expected mono audio, got {channels} channels")
    if width != 2:
        raise ValidationError(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    if rate < MIN_SAMPLE_RATE:
        raise ValidationError(f"{path}: sample rate {rate} Hz below {MIN_SAMPLE_RATE} Hz")
    samples = np.frombuffer(frames, dtype="<i2") / 32768.0
    samples.setflags(write=False)
    return Audio(samples, rate)


def write_wav(path: str | Path, audio: Audio) -> None:
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(audio.sample_rate))
        wf.writeframes(pcm.tobytes())


def load_conversation(
    turn_table_path: str | Path,
    audio_path: str | Path | None = None,
    *,
    conversation_id: str | None = None,
) -> Conversation:
    """Load and validate a turn table (plus optional audio).

    Consecutive same-speaker rows are merged. The conversation id defaults to
    the name of the directory holding the turn table.
    """
    path = Path(turn_table_path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8: {exc}", path=path) from None
    rows = _parse_turn_rows(text, path)
    turns = merge_same_speaker(rows)
    audio = read_wav(audio_path) if audio_path is not None else None
    cid = conversation_id if conversation_id is not None else path.parent.name
    return Conversation(cid, tuple(turns), audio)


def format_turn_table(turns: Sequence[Turn]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TURN_HEADER)
    for t in turns:
        writer.writerow([t.index, t.speaker.value, repr(float(t.start_s)), repr(float(t.end_s)), t.char_count])
    return buf.getvalue()


def write_turn_table(path: str | Path, turns: Sequence[Turn]) -> None:
    Path(path).write_text(format_turn_table(turns), encoding="utf-8")


@dataclass(frozen=True)
class Rating:
    tes: int | None
    blri: int | None
    ses: int | None

    @property
    def complete(self) -> bool:
        return self.tes is not None and self.blri is not None and self.ses is not None

    @property
    def missing(self) -> tuple[str, ...]:
        return tuple(k for k in RATING_RANGES if getattr(self, k) is None)

    def get(self, scale: str) -> int | None:
        return getattr(self, scale.lower())


@dataclass(frozen=True)
class RatingsTable:
    rows: Mapping[str, Rating]

    def __getitem__(self, conversation_id: str) -> Rating:
        return self.rows[conversation_id]

    def __contains__(self, conversation_id: object) -> bool:
        return conversation_id in self.rows

    def __len__(self) -> int:
        return len(self.rows)

    def ids(self) -> list[str]:
        return sorted(self.rows)

    @property
    def incomplete(self) -> list[str]:
        """Ids retained in the table but missing at least one rating."""
        return sorted(cid for cid, r in self.rows.items() if not r.complete)


def _check_range(scale: str, value: int | None, cid: str) -> None:
    if value is None:
        return
    lo, hi = RATING_RANGES[scale]
    if not lo <= value <= hi:
        raise RangeError(scale, value, cid)


def make_rating(cid: str, tes: int | None, blri: int | None, ses: int | None) -> Rating:
    for scale, value in (("tes", tes), ("blri", blri), ("ses", ses)):
        _check_range(scale, value, cid)
    return Rating(tes, blri, ses)


def load_ratings(path: str | Path) -> RatingsTable:
    """Load ``conversation_id,tes,blri,ses``; empty cells mean missing."""
    path = Path(path)
    reader = csv.reader(io.StringIO(path.read_text(encoding="utf-8")))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty ratings file", line=1, path=path) from None
    if tuple(h.strip() for h in header) != RATINGS_HEADER:
        raise ParseError(f"expected header {','.join(RATINGS_HEADER)}", line=1, path=path)
    rows: dict[str, Rating] = {}
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(RATINGS_HEADER):
            raise ParseError(f"expected {len(RATINGS_HEADER)} fields, got {len(row)}", line, path)
        cid = row[0].strip()
        if not cid:
            raise ParseError("empty conversation_id", line, path)
        if cid in rows:
            raise ParseError(f"duplicate conversation_id {cid!r}", line, path)
        values: list[int | None] = []
        for cell in row[1:]:
            cell = cell.strip()
            if not cell:
                values.append(None)
                continue
            try:
                values.append(int(cell))
            except ValueError:
                raise ParseError(f"rating {cell!r} is not an integer", line, path) from None
        rating = make_rating(cid, *values)
        if not rating.complete:
            log.info("ratings for %s incomplete (missing %s)", cid, ", ".join(rating.missing))
        rows[cid] = rating
    return RatingsTable(rows)


def format_ratings(table: RatingsTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RATINGS_HEADER)
    for cid in table.ids():
        r = table[cid]
        writer.writerow([cid] + ["" if v is None else v for v in (r.tes, r.blri, r.ses)])
    return buf.getvalue()


@dataclass(frozen=True)
class CorpusFailure:
    conversation_id: str
    reason: str


def conversation_dirs(corpus_dir: str | Path) -> list[Path]:
    """Conversation subdirectories of a corpus, ordered by name.

    Directories whose names start with ``_`` or ``.`` are skipped (output
    locations).
    """
    root = Path(corpus_dir)
    if not root.is_dir():
        raise CorpusError(f"{root} is not a directory")
    return sorted(p for p in root.iterdir() if p.is_dir() and p.name[0] not in "_.")


def load_conversation_dir(conv_dir: str | Path) -> Conversation:
    """Load ``<conv_dir>/turns.csv`` plus ``audio.wav`` when present."""
    conv_dir = Path(conv_dir)
    turns = conv_dir / "turns.csv"
    audio = conv_dir / "audio.wav"
    if not turns.exists():
        raise CorpusError("missing turns.csv")
    return load_conversation(turns, audio if audio.exists() else None, conversation_id=conv_dir.name)


def load_corpus(corpus_dir: str | Path) -> tuple[list[Conversation], list[CorpusFailure]]:
    """Load every conversation under a corpus directory.

    Conversations that fail to load are returned as failures rather than
    aborting the whole corpus. All audio is held in memory; for long
    recordings iterate over :func:`conversation_dirs` instead.
    """
    conversations: list[Conversation] = []
    failures: list[CorpusFailure] = []
    for sub in conversation_dirs(corpus_dir):
        try:
            conversations.append(load_conversation_dir(sub))
        except CorpusError as exc:
            failures.append(CorpusFailure(sub.name, str(exc)))
    return conversations, failures
