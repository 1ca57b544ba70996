"""platescreen: high-throughput well-plate image analysis.

Segmentation and tracking of embryo eggs in microtiter-plate imagery,
motion/appearance feature extraction, Bayes classification with an endpoint
cascade, dose-response regression, assay-quality statistics and
movement-event analysis, backed by a merge-able project store.
"""

__version__ = "0.1.0"

from .assay import (
    DoseResponseFit,
    estimate_acquisition_time,
    fit_dose_response,
    validation_metrics,
)
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    aggregate_series,
    instantaneous_features,
    motion_features,
    movement_index,
)
from .imagemodel import (
    FactorAssignment,
    ImageStream,
    Project,
    WellRecord,
    load_project,
    load_stream,
    merge_projects,
    save_project,
)
from .mlselect import (
    BayesClassifier,
    CascadeModel,
    CascadeStage,
    RelevanceTable,
    WrapperNormalizer,
    anova_relevance,
    cascade_classify,
    cross_validate,
    manova_pair_search,
)
from .pmr import (
    PmrEvent,
    PmrPhases,
    classify_events,
    coiling_rate,
    event_probability_curves,
    phase_durations,
)
from .segment import (
    CircleHit,
    TrackedEgg,
    detect_eggs_hough,
    difference_image,
    fine_align,
    roi_mask_circle,
    segment_single_egg,
    track_eggs,
)
from .synthgen import EventSpec, SynthScript, render_sequence

__all__ = [name for name in dir() if not name.startswith("_")]
