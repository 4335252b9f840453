"""Command-line front end: ``prosync synth | extract | analyze``.

Exit codes: 0 success, 1 usage or fatal error, 2 some conversations failed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .analysis import (
    REPORT_SCHEMA_VERSION,
    AnalysisConfig,
    AnalysisReport,
    cells_csv,
    conversation_doc,
    format_summary,
    rows_to_csv,
    run_full_analysis,
)
from .corpus import Conversation, CorpusError, CorpusFailure, conversation_dirs, load_conversation_dir, load_ratings
from .prosody import (
    ConversationFeatures,
    IntensityConfig,
    PitchConfig,
    extract_features,
    features_to_json,
    input_hash,
    load_feature_cache,
)
from .sectioning import Direction
from .synth import CorpusSpec, CouplingSpec, SpecError, write_corpus
from .synchrony import SyncThresholds

log = logging.getLogger("prosync")

EXIT_OK, EXIT_FATAL, EXIT_PARTIAL = 0, 1, 2
FEATURES_FILE = "features.json"


@dataclass(frozen=True)
class RunConfig:
    analysis: AnalysisConfig = AnalysisConfig()
    pitch: PitchConfig = PitchConfig()
    intensity: IntensityConfig = IntensityConfig()
    out: Path | None = None
    formats: frozenset[str] = field(default_factory=lambda: frozenset({"json", "csv"}))
    jobs: int = 1


def _parse_grid(text: str) -> tuple[int, ...]:
    try:
        values = tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated integers: {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def _directions(choice: str) -> tuple[Direction, ...]:
    if choice == "both":
        return (Direction.CLIENT_FIRST, Direction.THERAPIST_FIRST)
    return (Direction(choice),)


def _run_config(args: argparse.Namespace) -> RunConfig:
    analysis = AnalysisConfig(
        grid=getattr(args, "grid", (20, 30, 40, 50)),
        step=getattr(args, "step", 10),
        thresholds=SyncThresholds(getattr(args, "rho_threshold", 0.5), getattr(args, "alpha", 0.05)),
        directions=_directions(getattr(args, "direction", "c-first")),
        time_axis=getattr(args, "time_axis", "seconds"),
    )
    pitch = PitchConfig(
        frame_s=args.pitch_frame,
        hop_s=args.hop,
        f0_min=args.f0_min,
        f0_max=args.f0_max,
        voicing_threshold=args.voicing_threshold,
    )
    intensity = IntensityConfig(frame_s=args.intensity_frame, hop_s=args.hop)
    fmt = getattr(args, "format", "all")
    formats = frozenset({"json", "csv"}) if fmt == "all" else frozenset({fmt})
    out = Path(args.out) if getattr(args, "out", None) else None
    return RunConfig(analysis, pitch, intensity, out, formats, max(1, args.jobs))


def _features_for(
    conversation: Conversation, cache_dir: Path, pitch: PitchConfig, intensity: IntensityConfig
) -> tuple[ConversationFeatures, bool]:
    cached = load_feature_cache(cache_dir / FEATURES_FILE, conversation, pitch, intensity)
    if cached is not None:
        return cached, True
    return extract_features(conversation, pitch, intensity), False


def _extract_one(job: tuple[Path, PitchConfig, IntensityConfig, bool]):
    # Each job loads its own conversation so only one recording is in memory per worker.
    conv_dir, pitch, intensity, write = job
    try:
        conversation = load_conversation_dir(conv_dir)
        feats, hit = _features_for(conversation, conv_dir, pitch, intensity)
        if write and not hit:
            text = features_to_json(feats, pitch, intensity, input_hash(conversation))
            (conv_dir / FEATURES_FILE).write_text(text, encoding="utf-8")
        return feats, None
    except CorpusError as exc:
        return None, str(exc)
    except Exception as exc:  # noqa: BLE001 - reported per conversation
        return None, f"{type(exc).__name__}: {exc}"


def _extract_all(root: Path, cfg: RunConfig, *, write: bool) -> tuple[list[ConversationFeatures], list[CorpusFailure]]:
    dirs = conversation_dirs(root)
    jobs = [(d, cfg.pitch, cfg.intensity, write) for d in dirs]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_extract_one, jobs))
    else:
        results = [_extract_one(j) for j in jobs]
    feats, failures = [], []
    for d, (f, err) in zip(dirs, results):
        if err is None:
            feats.append(f)
        else:
            failures.append(CorpusFailure(d.name, err))
    return feats, failures


def _report_failures(failures: Iterable[CorpusFailure]) -> int:
    failures = sorted(failures, key=lambda f: f.conversation_id)
    for f in failures:
        print(f"FAILED {f.conversation_id}: {f.reason}", file=sys.stderr)
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_extract(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    feats, failures = _extract_all(Path(args.corpus), cfg, write=True)
    print(f"extracted features for {len(feats)} conversation(s)")
    return _report_failures(failures)


def write_report(report: AnalysisReport, out: Path, formats: frozenset[str]) -> list[Path]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        path = out / "report.json"
        path.write_text(report.to_json(), encoding="utf-8")
        written.append(path)
        conv_dir = out / "conversations"
        conv_dir.mkdir(exist_ok=True)
        for cid in sorted(report.metrics):
            doc = conversation_doc(report.metrics[cid], report.config)
            doc["schema_version"] = REPORT_SCHEMA_VERSION
            p = conv_dir / f"{cid}.json"
            p.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
            written.append(p)
    if "csv" in formats:
        outputs = {
            "cells.csv": cells_csv(report.cells),
            "selected.csv": cells_csv(report.selected),
            "histograms.csv": rows_to_csv(
                report.histogram_rows(), ("feature", "metric", "N", "direction", "bin_lo", "bin_hi", "count")
            ),
            "trends.csv": rows_to_csv(
                report.trend_rows(),
                ("feature", "N", "direction", "conversations", "convergent", "divergent",
                 "convergent_frac", "divergent_frac"),
            ),
        }
        for name, text in outputs.items():
            (out / name).write_text(text, encoding="utf-8")
            written.append(out / name)
    return written


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _run_config(args)
    root = Path(args.corpus)
    ratings_path = Path(args.ratings) if args.ratings else root / "ratings.csv"
    if not ratings_path.exists():
        print(f"error: ratings file {ratings_path} not found", file=sys.stderr)
        return EXIT_FATAL
    ratings = load_ratings(ratings_path)
    feats, failures = _extract_all(root, cfg, write=False)
    if not feats:
        _report_failures(failures)
        print("error: no conversation could be analyzed", file=sys.stderr)
        return EXIT_FATAL
    report = run_full_analysis(feats, ratings, cfg.analysis, failures=failures)
    out = cfg.out or root / "_analysis"
    write_report(report, out, cfg.formats)
    for direction in cfg.analysis.directions:
        print(format_summary(report, direction))
        print()
    print(f"report written to {out}")
    return _report_failures(report.failures)


def _load_synth_spec(path: Path, seed: int | None) -> CorpusSpec:
    doc = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise SpecError("<root>", "spec must be a JSON object")
    if "coupling" not in doc:
        coupling_keys = set(CouplingSpec.__dataclass_fields__)
        doc = {
            **{k: v for k, v in doc.items() if k not in coupling_keys},
            "coupling": {k: v for k, v in doc.items() if k in coupling_keys},
        }
    if seed is not None:
        doc["coupling"] = {**doc["coupling"], "seed": seed}
    return CorpusSpec.from_dict(doc)


def cmd_synth(args: argparse.Namespace) -> int:
    try:
        spec = _load_synth_spec(Path(args.spec), args.seed)
    except SpecError as exc:
        print(f"error: invalid spec field {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (TypeError, ValueError) as exc:
        print(f"error: invalid spec: {exc}", file=sys.stderr)
        return EXIT_FATAL
    corpus = write_corpus(args.out_dir, spec)
    print(f"wrote {len(corpus.dyads)} conversation(s) to {args.out_dir}")
    return EXIT_OK


def _add_dsp_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("signal processing")
    g.add_argument("--pitch-frame", type=float, default=PitchConfig.frame_s, help="pitch frame length (s)")
    g.add_argument("--intensity-frame", type=float, default=IntensityConfig.frame_s, help="intensity frame length (s)")
    g.add_argument("--hop", type=float, default=PitchConfig.hop_s, help="frame hop (s)")
    g.add_argument("--f0-min", type=float, default=PitchConfig.f0_min)
    g.add_argument("--f0-max", type=float, default=PitchConfig.f0_max)
    g.add_argument("--voicing-threshold", type=float, default=PitchConfig.voicing_threshold)
    p.add_argument("--jobs", type=int, default=1, help="worker processes for feature extraction")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prosync", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus from a JSON spec")
    p.add_argument("spec", help="corpus/coupling spec JSON")
    p.add_argument("out_dir")
    p.add_argument("--seed", type=int, default=None, help="override the seed in the spec file")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", help="write features.json for every conversation")
    p.add_argument("corpus")
    _add_dsp_args(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("analyze", help="entrainment metrics and rating correlations")
    p.add_argument("corpus")
    p.add_argument("ratings", nargs="?", default=None, help="ratings CSV (default: <corpus>/ratings.csv)")
    p.add_argument("--grid", type=_parse_grid, default=(20, 30, 40, 50), help="section sizes, e.g. 20,30,40,50")
    p.add_argument("--step", type=int, default=10)
    p.add_argument("--rho-threshold", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--direction", choices=("c-first", "t-first", "both"), default="c-first")
    p.add_argument("--time-axis", choices=("seconds", "index"), default="seconds")
    p.add_argument("--out", default=None, help="output directory (default: <corpus>/_analysis)")
    p.add_argument("--format", choices=("json", "csv", "all"), default="all")
    _add_dsp_args(p)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except (CorpusError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
