"""Frame-level pitch/intensity tracks and the seven turn-level prosodic parameters.

Pitch uses a YIN-style cumulative-mean-normalized difference function with
parabolic refinement of the chosen lag. Intensity is frame energy in dBFS.
Each turn is summarised by median/mean/std of the valid frames whose centres
fall inside it, plus a transcript-based speech rate; the seven parameters are
then centred per speaker.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corpus import Audio, Conversation, Speaker, Turn, format_turn_table

FEATURES: tuple[str, ...] = (
    "pitch_median",
    "pitch_mean",
    "pitch_std",
    "intensity_median",
    "intensity_mean",
    "intensity_std",
    "speech_rate",
)

CACHE_SCHEMA_VERSION = 1
_CHUNK_FRAMES = 2048


class EmptyTrackError(ValueError):
    """Audio is too short to hold a single analysis frame."""


@dataclass(frozen=True)
class PitchConfig:
    frame_s: float = 0.040
    hop_s: float = 0.010
    f0_min: float = 60.0
    f0_max: float = 400.0
    # Frames with 1 - cmnd(lag) below this are unvoiced.
    voicing_threshold: float = 0.45
    # Absolute dip threshold used to pick the first candidate lag.
    dip_threshold: float = 0.10

    def __post_init__(self) -> None:
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError("need 0 < f0_min < f0_max")
        if self.frame_s <= 1.0 / self.f0_min:
            raise ValueError("frame_s must exceed one period of f0_min")
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")
        if not 0 < self.voicing_threshold < 1:
            raise ValueError("voicing_threshold must lie in (0, 1)")


@dataclass(frozen=True)
class IntensityConfig:
    frame_s: float = 0.025
    hop_s: float = 0.010
    eps: float = 1e-10

    def __post_init__(self) -> None:
        if self.frame_s <= 0 or self.hop_s <= 0 or self.eps <= 0:
            raise ValueError("frame_s, hop_s and eps must be positive")


@dataclass(frozen=True, eq=False)
class FrameTrack:
    """Per-frame measurements; frame k is centred at ``offset_s + k * hop_s``.

    ``voiced`` is only set for pitch tracks; unvoiced frames hold NaN.
    """

    hop_s: float
    offset_s: float
    values: np.ndarray
    voiced: np.ndarray | None = None

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def times(self) -> np.ndarray:
        return self.offset_s + self.hop_s * np.arange(self.values.size)

    @property
    def valid(self) -> np.ndarray:
        if self.voiced is not None:
            return self.voiced
        return np.isfinite(self.values)


def _frames(x: np.ndarray, frame_len: int, hop: int) -> np.ndarray:
    if x.size < frame_len:
        raise EmptyTrackError(
            f"audio has {x.size} samples, fewer than one {frame_len}-sample frame"
        )
    return sliding_window_view(x, frame_len)[::hop]


def _cmnd(frames: np.ndarray, integration: int, max_lag: int) -> np.ndarray:
    """Cumulative-mean-normalized difference for lags 0..max_lag, row per frame."""
    width = frames.shape[1]
    nfft = 1 << int(math.ceil(math.log2(width + integration)))
    head = frames[:, :integration]
    spec = np.fft.rfft(frames, nfft, axis=1) * np.conj(np.fft.rfft(head, nfft, axis=1))
    xcorr = np.fft.irfft(spec, nfft, axis=1)[:, : max_lag + 1]
    sq = np.concatenate([np.zeros((frames.shape[0], 1)), np.cumsum(frames**2, axis=1)], axis=1)
    lags = np.arange(max_lag + 1)
    energy = sq[:, lags + integration] - sq[:, lags]
    diff = energy[:, :1] + energy - 2.0 * xcorr
    np.maximum(diff, 0.0, out=diff)
    diff[:, 0] = 0.0
    running = np.cumsum(diff[:, 1:], axis=1)
    out = np.ones_like(diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = diff[:, 1:] * lags[1:] / running
    out[:, 1:] = np.where(running > 0, ratio, 1.0)
    return out


def frame_pitch(audio: Audio, config: PitchConfig = PitchConfig()) -> FrameTrack:
    """F0 track in Hz; NaN where a frame is judged unvoiced."""
    sr = audio.sample_rate
    width = int(round(config.frame_s * sr))
    hop = max(1, int(round(config.hop_s * sr)))
    min_lag = max(2, int(math.floor(sr / config.f0_max)))
    max_lag = int(math.ceil(sr / config.f0_min))
    integration = width - max_lag
    if integration < 2 or max_lag + 1 >= width:
        raise ValueError("pitch frame too short for the configured F0 range")

    frames = _frames(audio.samples, width, hop)
    n = frames.shape[0]
    f0 = np.full(n, np.nan)
    voiced = np.zeros(n, dtype=bool)
    idx = np.arange(min_lag, max_lag)  # last lag kept free for the parabola's right neighbour

    for lo in range(0, n, _CHUNK_FRAMES):
        chunk = np.ascontiguousarray(frames[lo : lo + _CHUNK_FRAMES])
        d = _cmnd(chunk, integration, max_lag)
        region = d[:, min_lag:max_lag]
        below = region < config.dip_threshold
        has_dip = below.any(axis=1)
        first = np.where(has_dip, below.argmax(axis=1), region.argmin(axis=1))
        # Walk from the first dip down to the bottom of its valley.
        rising = d[:, min_lag + 1 : max_lag + 1] >= region
        after = rising & (np.arange(idx.size)[None, :] >= first[:, None])
        bottom = np.where(after.any(axis=1), after.argmax(axis=1), first)
        lag = idx[bottom]
        rows = np.arange(chunk.shape[0])
        a = d[rows, lag - 1]
        b = d[rows, lag]
        c = d[rows, lag + 1]
        curv = a - 2.0 * b + c
        with np.errstate(divide="ignore", invalid="ignore"):
            shift = np.where(curv > 0, 0.5 * (a - c) / curv, 0.0)
        shift = np.clip(shift, -1.0, 1.0)
        is_voiced = (1.0 - b) >= config.voicing_threshold
        est = sr / (lag + shift)
        sl = slice(lo, lo + chunk.shape[0])
        voiced[sl] = is_voiced
        f0[sl] = np.where(is_voiced, est, np.nan)

    return FrameTrack(hop / sr, 0.5 * width / sr, f0, voiced)


def frame_intensity(audio: Audio, config: IntensityConfig = IntensityConfig()) -> FrameTrack:
    """Frame intensity ``10*log10(mean square + eps)`` in dBFS."""
    sr = audio.sample_rate
    width = max(1, int(round(config.frame_s * sr)))
    hop = max(1, int(round(config.hop_s * sr)))
    if audio.samples.size == 0:
        raise EmptyTrackError("empty audio")
    frames = _frames(audio.samples, width, hop)
    power = np.einsum("ij,ij->i", frames, frames) / width
    return FrameTrack(hop / sr, 0.5 * width / sr, 10.0 * np.log10(power + config.eps))


@dataclass(frozen=True)
class TurnStats:
    median: float
    mean: float
    std: float


def turn_statistics(track: FrameTrack, turn: Turn) -> TurnStats | None:
    """Median, mean and population std of valid frames centred in [start, end).

    Returns ``None`` when the turn holds no valid frame.
    """
    times = track.times
    lo = int(np.searchsorted(times, turn.start_s, side="left"))
    hi = int(np.searchsorted(times, turn.end_s, side="left"))
    vals = track.values[lo:hi][track.valid[lo:hi]]
    if vals.size == 0:
        return None
    return TurnStats(float(np.median(vals)), float(np.mean(vals)), float(np.std(vals)))


def speech_rate(turn: Turn) -> float:
    """Characters (syllables) per second of turn duration."""
    duration = turn.end_s - turn.start_s
    if duration <= 0:
        raise ValueError(f"turn {turn.index} has non-positive duration")
    return turn.char_count / duration


@dataclass(frozen=True)
class TurnProsody:
    pitch_median: float | None = None
    pitch_mean: float | None = None
    pitch_std: float | None = None
    intensity_median: float | None = None
    intensity_mean: float | None = None
    intensity_std: float | None = None
    speech_rate: float | None = None

    def get(self, feature: str) -> float | None:
        return getattr(self, feature)

    def to_dict(self) -> dict[str, float | None]:
        return {f: getattr(self, f) for f in FEATURES}


def normalize_speaker(
    features: Sequence[TurnProsody], turns: Sequence[Turn]
) -> list[TurnProsody]:
    """Subtract each speaker's conversation mean from that speaker's turn values.

    Missing values are skipped when forming the mean and stay missing.
    """
    if len(features) != len(turns):
        raise ValueError("one TurnProsody per turn required")
    out: list[dict[str, float | None]] = [f.to_dict() for f in features]
    for speaker in Speaker:
        rows = [i for i, t in enumerate(turns) if t.speaker is speaker]
        for name in FEATURES:
            present = [i for i in rows if out[i][name] is not None]
            if not present:
                continue
            mean = math.fsum(out[i][name] for i in present) / len(present)  # type: ignore[misc]
            for i in present:
                out[i][name] = out[i][name] - mean  # type: ignore[operator]
    return [TurnProsody(**row) for row in out]


@dataclass(frozen=True)
class ConversationFeatures:
    conversation_id: str
    turns: tuple[Turn, ...]
    raw: tuple[TurnProsody, ...]
    normalized: tuple[TurnProsody, ...]

    def values(self, feature: str, *, normalized: bool = True) -> np.ndarray:
        """Feature column over all turns, NaN where missing."""
        if feature not in FEATURES:
            raise KeyError(feature)
        source = self.normalized if normalized else self.raw
        return np.array(
            [np.nan if (v := tp.get(feature)) is None else v for tp in source], dtype=float
        )


def from_raw(conversation_id: str, turns: Sequence[Turn], raw: Sequence[TurnProsody]) -> ConversationFeatures:
    raw = tuple(raw)
    turns = tuple(turns)
    return ConversationFeatures(conversation_id, turns, raw, tuple(normalize_speaker(raw, turns)))


def extract_features(
    conversation: Conversation,
    pitch_config: PitchConfig = PitchConfig(),
    intensity_config: IntensityConfig = IntensityConfig(),
) -> ConversationFeatures:
    """Turn-level raw and speaker-normalized prosody for one conversation.

    Without audio only the speech rate is available; pitch and intensity
    parameters are left missing.
    """
    pitch = intensity = None
    if conversation.audio is not None:
        pitch = frame_pitch(conversation.audio, pitch_config)
        intensity = frame_intensity(conversation.audio, intensity_config)
    raw = []
    for turn in conversation.turns:
        values: dict[str, float | None] = {"speech_rate": speech_rate(turn)}
        for prefix, track in (("pitch", pitch), ("intensity", intensity)):
            st = turn_statistics(track, turn) if track is not None else None
            if st is not None:
                values.update(
                    {f"{prefix}_median": st.median, f"{prefix}_mean": st.mean, f"{prefix}_std": st.std}
                )
        raw.append(TurnProsody(**values))
    return from_raw(conversation.id, conversation.turns, raw)


def config_hash(pitch_config: PitchConfig, intensity_config: IntensityConfig) -> str:
    payload = json.dumps(
        {"pitch": asdict(pitch_config), "intensity": asdict(intensity_config)}, sort_keys=True
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def input_hash(conversation: Conversation) -> str:
    """Digest of the turn table and audio samples a cache was computed from."""
    h = hashlib.sha256(format_turn_table(conversation.turns).encode())
    if conversation.audio is not None:
        h.update(str(conversation.audio.sample_rate).encode())
        h.update(np.ascontiguousarray(conversation.audio.samples))
    return h.hexdigest()


def features_to_json(
    features: ConversationFeatures,
    pitch_config: PitchConfig,
    intensity_config: IntensityConfig,
    source_hash: str,
) -> str:
    doc = {
        "schema_version": CACHE_SCHEMA_VERSION,
        "conversation_id": features.conversation_id,
        "config": {"pitch": asdict(pitch_config), "intensity": asdict(intensity_config)},
        "config_hash": config_hash(pitch_config, intensity_config),
        "input_hash": source_hash,
        "turns": [
            {
                "index": t.index,
                "speaker": t.speaker.value,
                "raw": r.to_dict(),
                "normalized": nrm.to_dict(),
            }
            for t, r, nrm in zip(features.turns, features.raw, features.normalized)
        ],
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _prosody(row: Mapping[str, Any]) -> TurnProsody:
    return TurnProsody(**{f: (None if row.get(f) is None else float(row[f])) for f in FEATURES})


def load_feature_cache(
    path: str | Path,
    conversation: Conversation,
    pitch_config: PitchConfig,
    intensity_config: IntensityConfig,
) -> ConversationFeatures | None:
    """Return cached features, or ``None`` if the cache is absent or stale."""
    path = Path(path)
    if not path.exists():
        return None
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError:
        return None
    if (
        doc.get("schema_version") != CACHE_SCHEMA_VERSION
        or doc.get("config_hash") != config_hash(pitch_config, intensity_config)
        or doc.get("input_hash") != input_hash(conversation)
        or len(doc.get("turns", ())) != len(conversation.turns)
    ):
        return None
    raw = [_prosody(row["raw"]) for row in doc["turns"]]
    norm = [_prosody(row["normalized"]) for row in doc["turns"]]
    return ConversationFeatures(conversation.id, conversation.turns, tuple(raw), tuple(norm))


__all__ = [
    "FEATURES",
    "PitchConfig",
    "IntensityConfig",
    "FrameTrack",
    "EmptyTrackError",
    "frame_pitch",
    "frame_intensity",
    "TurnStats",
    "turn_statistics",
    "speech_rate",
    "TurnProsody",
    "normalize_speaker",
    "ConversationFeatures",
    "from_raw",
    "extract_features",
    "config_hash",
    "input_hash",
    "features_to_json",
    "load_feature_cache",
]
