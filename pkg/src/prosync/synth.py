"""Synthetic client/therapist conversations with planted prosodic coupling.

Client turn features follow a seeded mean-reverting random walk (unit
marginal variance in "signal units"); each therapist turn answers the client
turn just before it with ``kappa * client + noise`` plus an optional gap term
of random sign whose size the regime varies over time. Signal units are
mapped to physical units per feature through a base level and a scale.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .corpus import (
    Audio,
    Conversation,
    Rating,
    RatingsTable,
    Speaker,
    Turn,
    format_ratings,
    write_turn_table,
    write_wav,
)
from .prosody import FEATURES, ConversationFeatures, TurnProsody, from_raw, speech_rate

SYNTH_SCHEMA_VERSION = 1

# feature: (client base, therapist base, scale per signal unit, floor, ceiling)
FEATURE_PROFILE: dict[str, tuple[float, float, float, float, float]] = {
    "pitch_median": (210.0, 125.0, 12.0, 70.0, 380.0),
    "pitch_mean": (213.0, 128.0, 12.0, 70.0, 380.0),
    "pitch_std": (35.0, 22.0, 2.5, 1.0, 150.0),
    "intensity_median": (-24.0, -27.0, 2.0, -60.0, -6.0),
    "intensity_mean": (-25.0, -28.0, 2.0, -60.0, -6.0),
    "intensity_std": (7.0, 6.0, 0.6, 0.1, 30.0),
    "speech_rate": (3.9, 4.1, 0.35, 1.0, 9.0),
}

HARMONICS: tuple[tuple[int, float], ...] = ((1, 1.0), (2, 0.5), (3, 0.25))


class Regime(str, enum.Enum):
    STATIC = "static"
    CONVERGING = "converging"
    DIVERGING = "diverging"
    ALTERNATING = "alternating"


class SpecError(ValueError):
    """Invalid synthesis spec; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _kappa_tuple(kappa: float | Mapping[str, float] | tuple) -> tuple[float, ...]:
    if isinstance(kappa, Mapping):
        unknown = set(kappa) - set(FEATURES)
        if unknown:
            raise SpecError("kappa", f"unknown features {sorted(unknown)}")
        return tuple(float(kappa.get(f, 0.0)) for f in FEATURES)
    if isinstance(kappa, (tuple, list)):
        if len(kappa) != len(FEATURES):
            raise SpecError("kappa", f"expected {len(FEATURES)} values")
        return tuple(float(k) for k in kappa)
    return (float(kappa),) * len(FEATURES)


@dataclass(frozen=True)
class CouplingSpec:
    kappa: tuple[float, ...] | float | Mapping[str, float] = 0.8
    noise_sd: float = 0.5
    regime: Regime = Regime.STATIC
    turns: int = 316
    seed: int = 0
    # Gap magnitude in signal units; None picks 0 for static/alternating, 3 otherwise.
    gap: float | None = None
    # Turn pairs between kappa sign flips in the alternating regime.
    alternate_every: int = 20
    persistence: float = 0.9
    # Leading fraction of turn pairs that carry the coupling; later pairs are uncoupled.
    coupled_fraction: float = 1.0
    client_chars: tuple[int, int] = (20, 110)
    therapist_chars: tuple[int, int] = (8, 45)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kappa", _kappa_tuple(self.kappa))
        try:
            object.__setattr__(self, "regime", Regime(self.regime))
        except ValueError:
            raise SpecError("regime", f"must be one of {[r.value for r in Regime]}") from None
        for k in self.kappa:
            if not -1.0 <= k <= 1.0:
                raise SpecError("kappa", f"coupling {k} outside [-1, 1]")
        if not isinstance(self.turns, int) or self.turns < 4 or self.turns % 2:
            raise SpecError("turns", f"must be an even integer >= 4, got {self.turns!r}")
        if self.noise_sd < 0:
            raise SpecError("noise_sd", "must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise SpecError("seed", "must be a 64-bit unsigned integer")
        if self.gap is not None and self.gap < 0:
            raise SpecError("gap", "must be nonnegative")
        if self.alternate_every < 1:
            raise SpecError("alternate_every", "must be positive")
        if not 0 <= self.persistence < 1:
            raise SpecError("persistence", "must lie in [0, 1)")
        if not 0 <= self.coupled_fraction <= 1:
            raise SpecError("coupled_fraction", "must lie in [0, 1]")
        for name in ("client_chars", "therapist_chars"):
            lo, hi = getattr(self, name)
            if not 1 <= lo <= hi:
                raise SpecError(name, "need 1 <= low <= high")
            object.__setattr__(self, name, (int(lo), int(hi)))

    @property
    def effective_gap(self) -> float:
        if self.gap is not None:
            return self.gap
        return 0.0 if self.regime in (Regime.STATIC, Regime.ALTERNATING) else 3.0

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["kappa"] = dict(zip(FEATURES, self.kappa))
        d["regime"] = self.regime.value
        d["client_chars"] = list(self.client_chars)
        d["therapist_chars"] = list(self.therapist_chars)
        return d

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "CouplingSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise SpecError(sorted(unknown)[0], "unknown field")
        kwargs = dict(doc)
        for name in ("client_chars", "therapist_chars"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        if "turns" in kwargs and isinstance(kwargs["turns"], float) and kwargs["turns"].is_integer():
            kwargs["turns"] = int(kwargs["turns"])
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class SynthDyad:
    conversation: Conversation
    features: ConversationFeatures
    # Planted deviations in signal units, shape (pairs, features).
    client_signal: np.ndarray
    therapist_signal: np.ndarray


def _client_walk(rng: np.random.Generator, pairs: int, n_features: int, phi: float) -> np.ndarray:
    innov = rng.standard_normal((pairs, n_features))
    out = np.empty_like(innov)
    out[0] = innov[0]
    scale = math.sqrt(1.0 - phi * phi)
    for i in range(1, pairs):
        out[i] = phi * out[i - 1] + scale * innov[i]
    return out


def _gap_profile(spec: CouplingSpec, pairs: int) -> np.ndarray:
    g = spec.effective_gap
    frac = np.arange(pairs) / max(pairs - 1, 1)
    if spec.regime is Regime.CONVERGING:
        return g * (1.0 - frac)
    if spec.regime is Regime.DIVERGING:
        return g * frac
    return np.full(pairs, g)


def render_audio(turns: tuple[Turn, ...], raw: list[TurnProsody], sample_rate: int, tail_s: float = 0.5) -> Audio:
    """Constant-F0 harmonic tone per turn; F0 from the planted pitch median and
    power from the planted intensity mean; silence between turns."""
    total = int(math.ceil((turns[-1].end_s + tail_s) * sample_rate))
    out = np.zeros(total)
    norm = sum(a * a for _, a in HARMONICS) / 2.0
    for turn, tp in zip(turns, raw):
        lo = int(math.ceil(turn.start_s * sample_rate))
        hi = int(math.floor(turn.end_s * sample_rate))
        t = np.arange(hi - lo) / sample_rate
        amp = math.sqrt(10.0 ** (tp.intensity_mean / 10.0) / norm)
        f0 = tp.pitch_median
        out[lo:hi] = amp * sum(a * np.sin(2.0 * np.pi * k * f0 * t) for k, a in HARMONICS)
    # Quantize exactly as a 16-bit file would, so in-memory and on-disk audio agree.
    samples = np.clip(np.round(out * 32768.0), -32768, 32767) / 32768.0
    samples.setflags(write=False)
    return Audio(samples, sample_rate)


def generate_dyad(
    spec: CouplingSpec,
    *,
    conversation_id: str = "synth",
    audio: bool = False,
    sample_rate: int = 16000,
) -> SynthDyad:
    """One synthetic conversation (client first) fully determined by ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    pairs = spec.turns // 2
    nf = len(FEATURES)
    client = _client_walk(rng, pairs, nf, spec.persistence)
    noise = rng.standard_normal((pairs, nf)) * spec.noise_sd
    signs = rng.choice([-1.0, 1.0], size=(pairs, nf))
    kappa = np.tile(np.asarray(spec.kappa), (pairs, 1))
    if spec.regime is Regime.ALTERNATING:
        flip = np.where((np.arange(pairs) // spec.alternate_every) % 2 == 0, 1.0, -1.0)
        kappa = kappa * flip[:, None]
    kappa[int(round(spec.coupled_fraction * pairs)) :] = 0.0
    therapist = kappa * client + noise + _gap_profile(spec, pairs)[:, None] * signs

    c_lo, c_hi = spec.client_chars
    t_lo, t_hi = spec.therapist_chars
    client_chars = rng.integers(c_lo, c_hi + 1, size=pairs)
    therapist_chars = rng.integers(t_lo, t_hi + 1, size=pairs)
    pauses = rng.uniform(0.15, 0.6, size=spec.turns)

    planted: list[dict[str, float]] = []
    speakers: list[Speaker] = []
    chars: list[int] = []
    for i in range(pairs):
        for who, sig, nchar in (
            (Speaker.CLIENT, client[i], client_chars[i]),
            (Speaker.THERAPIST, therapist[i], therapist_chars[i]),
        ):
            row = {}
            for j, f in enumerate(FEATURES):
                c_base, t_base, scale, lo, hi = FEATURE_PROFILE[f]
                base = c_base if who is Speaker.CLIENT else t_base
                row[f] = float(min(max(base + scale * sig[j], lo), hi))
            planted.append(row)
            speakers.append(who)
            chars.append(int(nchar))

    turns: list[Turn] = []
    t = 0.5
    for k, (who, row, nchar) in enumerate(zip(speakers, planted, chars)):
        start = t
        end = start + nchar / row["speech_rate"]
        turns.append(Turn(k, who, start, end, nchar))
        t = end + float(pauses[k])

    raw = []
    for turn, row in zip(turns, planted):
        row = dict(row)
        row["speech_rate"] = speech_rate(turn)
        raw.append(TurnProsody(**row))

    audio_obj = render_audio(tuple(turns), raw, sample_rate) if audio else None
    conv = Conversation(conversation_id, tuple(turns), audio_obj)
    return SynthDyad(conv, from_raw(conversation_id, conv.turns, raw), client, therapist)


@dataclass(frozen=True)
class CorpusSpec:
    """A corpus of dyads plus synthetic ratings.

    Each conversation gets a latent score ``z`` in [-1, 1]. Its coupling is
    ``kappa + kappa_spread * z`` and its coupled fraction
    ``coupled_fraction + fraction_spread * z`` (both clipped to their ranges);
    the planted rating correlates with ``z`` at ``rating_coupling``. The two
    remaining ratings share a separate latent factor.
    """

    coupling: CouplingSpec = field(default_factory=CouplingSpec)
    conversations: int = 20
    kappa_spread: float = 0.0
    fraction_spread: float = 0.0
    rating_coupling: float = 0.0
    planted_rating: str = "tes"
    audio: bool = False
    sample_rate: int = 16000

    def __post_init__(self) -> None:
        if not isinstance(self.conversations, int) or self.conversations < 1:
            raise SpecError("conversations", "must be a positive integer")
        if self.kappa_spread < 0:
            raise SpecError("kappa_spread", "must be nonnegative")
        if self.fraction_spread < 0:
            raise SpecError("fraction_spread", "must be nonnegative")
        if not -1 <= self.rating_coupling <= 1:
            raise SpecError("rating_coupling", "must lie in [-1, 1]")
        if self.planted_rating not in ("tes", "blri", "ses"):
            raise SpecError("planted_rating", "must be tes, blri or ses")
        if self.sample_rate < 8000:
            raise SpecError("sample_rate", "must be at least 8000 Hz")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["coupling"] = self.coupling.to_dict()
        return d

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "CorpusSpec":
        doc = dict(doc)
        coupling_doc = doc.pop("coupling", {})
        if not isinstance(coupling_doc, Mapping):
            raise SpecError("coupling", "must be an object")
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise SpecError(sorted(unknown)[0], "unknown field")
        return cls(coupling=CouplingSpec.from_dict(coupling_doc), **doc)


# rating: (centre, spread) in score units; total-score ranges come from the corpus module.
_RATING_SHAPE = {"tes": (38.0, 9.0), "blri": (18.0, 12.0), "ses": (18.0, 3.0)}
_RATING_BOUNDS = {"tes": (9, 63), "blri": (-48, 48), "ses": (5, 25)}


@dataclass(frozen=True, eq=False)
class SynthCorpus:
    dyads: list[SynthDyad]
    ratings: RatingsTable
    latent: np.ndarray
    kappas: np.ndarray
    coupled_fractions: np.ndarray
    seeds: list[int]


def conversation_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class _CorpusPlan:
    ratings: RatingsTable
    latent: np.ndarray
    kappas: np.ndarray
    coupled_fractions: np.ndarray
    seeds: list[int]
    specs: list[tuple[str, CouplingSpec]]


def _plan_corpus(spec: CorpusSpec) -> _CorpusPlan:
    base = spec.coupling
    rng = np.random.default_rng(np.random.SeedSequence([base.seed, 2**32]))
    n = spec.conversations
    z = rng.uniform(-1.0, 1.0, size=n)
    shared = rng.standard_normal(n)
    noise = rng.standard_normal((n, 3))
    z_std = z * math.sqrt(3.0)  # unit variance for U(-1, 1)
    rho = spec.rating_coupling

    scores: dict[str, np.ndarray] = {}
    other = [r for r in ("tes", "blri", "ses") if r != spec.planted_rating]
    scores[spec.planted_rating] = rho * z_std + math.sqrt(1 - rho * rho) * noise[:, 0]
    for j, name in enumerate(other, start=1):
        scores[name] = 0.85 * shared + math.sqrt(1 - 0.85**2) * noise[:, j]

    ratings: dict[str, Rating] = {}
    kappas = np.empty((n, len(FEATURES)))
    seeds = []
    fractions: list[float] = []
    specs = []
    for i in range(n):
        cid = f"synth{i:03d}"
        k = np.clip(np.asarray(base.kappa) + spec.kappa_spread * z[i], -1.0, 1.0)
        kappas[i] = k
        seed = conversation_seed(base.seed, i)
        seeds.append(seed)
        frac = float(np.clip(base.coupled_fraction + spec.fraction_spread * z[i], 0.0, 1.0))
        fractions.append(frac)
        specs.append((cid, CouplingSpec(
            **{**asdict(base), "kappa": tuple(float(v) for v in k), "seed": seed, "coupled_fraction": frac}
        )))
        values = {}
        for name, (centre, spread) in _RATING_SHAPE.items():
            lo, hi = _RATING_BOUNDS[name]
            values[name] = int(min(max(round(centre + spread * scores[name][i]), lo), hi))
        ratings[cid] = Rating(values["tes"], values["blri"], values["ses"])
    return _CorpusPlan(RatingsTable(ratings), z, kappas, np.array(fractions), seeds, specs)


def generate_corpus(spec: CorpusSpec) -> SynthCorpus:
    plan = _plan_corpus(spec)
    dyads = [
        generate_dyad(cs, conversation_id=cid, audio=spec.audio, sample_rate=spec.sample_rate)
        for cid, cs in plan.specs
    ]
    return SynthCorpus(dyads, plan.ratings, plan.latent, plan.kappas, plan.coupled_fractions, plan.seeds)


def write_corpus(out_dir: str | Path, spec: CorpusSpec) -> SynthCorpus:
    """Lay a synthetic corpus out in the ingestion format, with a manifest.

    Conversations are written as they are generated; the returned dyads carry
    no audio.
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    plan = _plan_corpus(spec)
    dyads = []
    for cid, cs in plan.specs:
        dyad = generate_dyad(cs, conversation_id=cid, audio=spec.audio, sample_rate=spec.sample_rate)
        sub = root / cid
        sub.mkdir(exist_ok=True)
        write_turn_table(sub / "turns.csv", dyad.conversation.turns)
        if dyad.conversation.audio is not None:
            write_wav(sub / "audio.wav", dyad.conversation.audio)
            # Keep only the annotation in memory; the recording lives on disk.
            dyad = replace(dyad, conversation=Conversation(cid, dyad.conversation.turns))
        dyads.append(dyad)
    corpus = SynthCorpus(dyads, plan.ratings, plan.latent, plan.kappas, plan.coupled_fractions, plan.seeds)
    (root / "ratings.csv").write_text(format_ratings(corpus.ratings), encoding="utf-8")
    manifest = {
        "schema_version": SYNTH_SCHEMA_VERSION,
        "seed": spec.coupling.seed,
        "spec": spec.to_dict(),
        "conversations": [
            {
                "id": d.conversation.id,
                "seed": s,
                "kappa": dict(zip(FEATURES, map(float, k))),
                "coupled_fraction": float(q),
            }
            for d, s, k, q in zip(corpus.dyads, corpus.seeds, corpus.kappas, corpus.coupled_fractions)
        ],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return corpus
