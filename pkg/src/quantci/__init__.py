"""Confidence and prediction intervals for class-prevalence estimators under prior probability shift."""

from .binormal import (
    BinormalParams,
    LabeledSample,
    TrainingContext,
    UnlabeledSample,
    sample_test,
    sample_training,
)
from .classifiers import PosteriorModel, fit_logistic
from .estimators import METHODS, PrevalenceEstimate
from .intervals import IntervalRecord
from .quantifiers import (
    ACC,
    APCC,
    ACCv,
    APCCv,
    Energy,
    Hellinger,
    MaximumLikelihood,
    MedianSweep,
)
from .simulation import ScenarioConfig, SummaryRow, run_scenario

__version__ = "0.1.0"

__all__ = [
    "BinormalParams",
    "LabeledSample",
    "UnlabeledSample",
    "TrainingContext",
    "sample_training",
    "sample_test",
    "PosteriorModel",
    "fit_logistic",
    "METHODS",
    "PrevalenceEstimate",
    "IntervalRecord",
    "ACC",
    "ACCv",
    "MedianSweep",
    "APCC",
    "APCCv",
    "Hellinger",
    "Energy",
    "MaximumLikelihood",
    "ScenarioConfig",
    "SummaryRow",
    "run_scenario",
]
