"""Calibration toolkit: focal-family losses, AdaFocal gamma scheduling,
binned ECE estimators, temperature scaling and a small MLP trainer."""

from .binning import (
    BinPartition,
    BinStats,
    EvalBatch,
    EvalRecord,
    bin_index,
    compute_bin_stats,
    equal_mass_partition,
    equal_width_partition,
)
from .losses import (
    LossEval,
    adafocal_loss,
    brier_loss,
    calfocal_gamma_case1,
    calfocal_gamma_case2,
    cross_entropy,
    focal_loss,
    inverse_focal_loss,
    label_smoothing_ce,
)
from .metrics import (
    EceReport,
    RocCurve,
    auroc,
    ece_debias,
    ece_em,
    ece_ew,
    ece_report,
    ece_sweep,
    entropy,
    reliability_data,
    roc_curve,
)
from .posthoc import TemperatureResult, fit_temperature, temperature_scale
from .scheduler import GammaTable, SchedulerConfig, gamma_for_sample, init_gammas, update_gammas

__version__ = "0.1.0"
