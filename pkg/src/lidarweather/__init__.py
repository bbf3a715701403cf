"""Weather classification from multi-echo lidar point clouds.

Pipeline: synthetic scenes through a fog/rain channel -> per-frame 16-feature
vectors over a near-range ROI -> kNN / one-vs-one SVM -> per-class TPR/FPR/IoU
plus object point-density degradation analysis.
"""

from .frames import (
    DEFAULT_ROI,
    DEFAULT_SENSOR,
    Frame,
    GroundTruth,
    Point,
    RoiBounds,
    SensorDescriptor,
    WeatherLabel,
    cartesian_from_spherical,
    partition_by_echo,
    roi_filter,
    spherical_from_cartesian,
)
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    FrameFeatureExtractor,
    attribute_mean_var,
    covariance_eigenvalues,
    echo_counts,
    extract_features,
    mean_range_per_echo,
)
from .classify import (
    KNearestWeatherClassifier,
    LabeledSample,
    PairwiseSvmWeatherClassifier,
    SmoConvergenceError,
    Standardizer,
    load_model,
    save_model,
    scenario_split_mask,
    split_by_scenario,
)
from .metrics import (
    EvalReport,
    ObjectDensitySeries,
    class_metrics,
    confusion_matrix,
    density_series,
    format_report,
    object_point_density,
)
from .frameio import FrameFormatError, read_frames, write_frames

__version__ = "0.1.0"
