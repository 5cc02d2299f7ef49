"""Media attention diversity of national news topics and its relation to press freedom."""

__version__ = "0.1.0"

from .corpus import Corpus, DailySnapshot, TopicMention, load_corpus, parse_snapshot_record
from .diversity import DiversityRecord, Window, diversity_table, subtopic_diversity, topic_diversity
from .errors import ComputationError, MadpfiError, ValidationError
from .filtering import FilteredDataset, build_topk_dataset, eligible_countries, survival_curve
from .lmm import DesignMatrix, LmmFit, fit_lmm, information_criteria, profiled_deviance
from .stats import CountryIndicators, correlation_sweep, fisher_ci, pearson_r, vif

__all__ = [
    "Corpus", "DailySnapshot", "TopicMention", "load_corpus", "parse_snapshot_record",
    "DiversityRecord", "Window", "diversity_table", "subtopic_diversity", "topic_diversity",
    "ComputationError", "MadpfiError", "ValidationError",
    "FilteredDataset", "build_topk_dataset", "eligible_countries", "survival_curve",
    "DesignMatrix", "LmmFit", "fit_lmm", "information_criteria", "profiled_deviance",
    "CountryIndicators", "correlation_sweep", "fisher_ci", "pearson_r", "vif",
]
