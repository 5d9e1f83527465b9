"""Prediction algorithms."""

from .epochs import (
    AdaptiveEpochEWA,
    EpochState,
    FixedEpochEWA,
    adaptive_epoch_ewa_autok,
    loss_table,
)
from .ewa import (
    AggregatingForecaster,
    ExpertForecaster,
    WeightVector,
    aggregating_predict,
    ewa_predict,
    ewa_regret_bound,
    ewa_update,
    learning_rate,
    truncated_bayes_predict,
)
from .mixtures import TableMixture, ThresholdCoverMixture, make_mixture
from .realizable import (
    ERMFollower,
    NotRealizable,
    OneInclusion,
    erm_follower_mistakes,
    one_inclusion_errors,
    one_inclusion_predict,
)

__all__ = [
    "AdaptiveEpochEWA",
    "AggregatingForecaster",
    "ERMFollower",
    "EpochState",
    "ExpertForecaster",
    "FixedEpochEWA",
    "NotRealizable",
    "OneInclusion",
    "TableMixture",
    "ThresholdCoverMixture",
    "WeightVector",
    "adaptive_epoch_ewa_autok",
    "aggregating_predict",
    "erm_follower_mistakes",
    "ewa_predict",
    "ewa_regret_bound",
    "ewa_update",
    "learning_rate",
    "loss_table",
    "make_mixture",
    "one_inclusion_errors",
    "one_inclusion_predict",
    "truncated_bayes_predict",
]
