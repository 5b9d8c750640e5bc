"""Calibration-driven model selection and value-bet backtesting for game outcomes."""

from .backtest import FixedStake, FractionalKelly, kelly_fraction, roi, simulate, stake_for
from .calibration import (
    ACCURACY,
    CLASSWISE_ECE,
    MetricSpec,
    accuracy,
    aggregate_bins,
    bin_index,
    classwise_ece,
    constrained_classwise_ece,
    occupancy_fraction,
    reliability_table,
)
from .features import ShiftScreen, Standardizer, build_feature_matrix, ks_two_sample, shift_screen
from .learners import LogisticRegressionGD, evaluate
from .market import bookmaker_margin, implied_probability, is_value_bet
from .selection import (
    CorrelationFilter,
    HyperGrid,
    SequentialForwardSelector,
    correlation_filter,
    grid_hpo,
    select_model,
    sfs,
    spearman_rank_corr,
)

__version__ = "0.1.0"
