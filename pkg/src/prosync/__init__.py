"""Prosodic entrainment analysis for two-speaker (client/therapist) conversations."""

from .analysis import AnalysisConfig, MetricKey, correlate_metric, grid_select, run_full_analysis
from .corpus import Conversation, RatingsTable, Speaker, Turn, load_conversation, load_ratings
from .prosody import FEATURES, ConversationFeatures, TurnProsody, extract_features
from .sectioning import Direction, SectionSpec, build_sections, chop
from .stats import CorrResult, pearson, spearman, stars
from .synchrony import SyncState, SyncThresholds, classify, state_ratios
from .synth import CorpusSpec, CouplingSpec, Regime, generate_corpus, generate_dyad

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig",
    "MetricKey",
    "correlate_metric",
    "grid_select",
    "run_full_analysis",
    "Conversation",
    "RatingsTable",
    "Speaker",
    "Turn",
    "load_conversation",
    "load_ratings",
    "FEATURES",
    "ConversationFeatures",
    "TurnProsody",
    "extract_features",
    "Direction",
    "SectionSpec",
    "build_sections",
    "chop",
    "CorrResult",
    "pearson",
    "spearman",
    "stars",
    "SyncState",
    "SyncThresholds",
    "classify",
    "state_ratios",
    "CorpusSpec",
    "CouplingSpec",
    "Regime",
    "generate_corpus",
    "generate_dyad",
]
