"""Channel-wise influence toolkit for multivariate time series.

Per-channel gradient dot products decompose a window-to-window influence
value into channel pair contributions. The diagonal of that decomposition
drives two applications: anomaly detection (a window is scored by its most
self-influential channel) and channel pruning (channels are ranked by
accumulated self-influence and sampled at equal rank spacing).
"""

from .core import (
    DatasetSplit,
    MtsSeries,
    MtsWindow,
    chronological_split,
    make_windows,
    window_label,
)
from .autodiff import (
    GradientVector,
    ParamSelector,
    Tape,
    backward,
    finite_difference_gradient,
)
from .models import (
    ModelSpec,
    ModelState,
    TrainConfig,
    all_params_selector,
    channel_gradient,
    channel_gradients,
    channel_loss,
    init_params,
    last_layer_selector,
    load_checkpoint,
    mean_window_mse,
    param_shapes,
    reconstruct,
    save_checkpoint,
    train,
    whole_gradient,
    window_loss,
)
from .influence import (
    InfluenceMatrix,
    cif,
    influence_matrix,
    save_influence_csv,
    self_influence_per_channel,
    tracin,
)
from .anomaly import (
    AnomalyReport,
    DetectConfig,
    ScoreSeries,
    auroc,
    detect,
    normalize_scores,
    prf1,
    save_report_csv,
    score_windows,
    select_threshold,
)
from .pruning import (
    ChannelScoreTable,
    PruningResult,
    accumulate_channel_scores,
    baseline_select,
    equidistant_select,
    prune_and_eval,
    save_pruning_csv,
)
from .data import (
    AnomalySpec,
    SyntheticConfig,
    gen_synthetic,
    inject_anomalies,
    load_csv,
    save_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AnomalyReport",
    "AnomalySpec",
    "ChannelScoreTable",
    "DatasetSplit",
    "DetectConfig",
    "GradientVector",
    "InfluenceMatrix",
    "ModelSpec",
    "ModelState",
    "MtsSeries",
    "MtsWindow",
    "ParamSelector",
    "PruningResult",
    "ScoreSeries",
    "SyntheticConfig",
    "Tape",
    "TrainConfig",
    "accumulate_channel_scores",
    "all_params_selector",
    "auroc",
    "backward",
    "baseline_select",
    "channel_gradient",
    "channel_gradients",
    "channel_loss",
    "chronological_split",
    "cif",
    "detect",
    "equidistant_select",
    "finite_difference_gradient",
    "gen_synthetic",
    "influence_matrix",
    "init_params",
    "inject_anomalies",
    "last_layer_selector",
    "load_checkpoint",
    "mean_window_mse",
    "load_csv",
    "make_windows",
    "normalize_scores",
    "prf1",
    "prune_and_eval",
    "param_shapes",
    "reconstruct",
    "save_checkpoint",
    "save_csv",
    "save_influence_csv",
    "save_pruning_csv",
    "save_report_csv",
    "score_windows",
    "select_threshold",
    "self_influence_per_channel",
    "tracin",
    "train",
    "whole_gradient",
    "window_label",
    "window_loss",
]
