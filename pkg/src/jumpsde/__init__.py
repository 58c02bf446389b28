"""Simulation and empirical checks for SDEs driven by Brownian motion and
compensated Poisson random measures with one-sided Lipschitz drifts."""

__version__ = "0.1.0"

from .coefficients import (BoundViolation, CoefficientSet, TruncatedCoefficients, build, mollify,
                           truncate)
from .conditions import ConditionReport, SamplingPlan
from .estimate import EmpiricalMeasure, MomentSeries
from .jumps import JumpActivity, JumpTrain
from .simulate import ExplosionError, PathBatch, SimConfig, simulate

__all__ = [
    "BoundViolation", "CoefficientSet", "ConditionReport", "EmpiricalMeasure", "ExplosionError",
    "JumpActivity", "JumpTrain", "MomentSeries", "PathBatch", "SamplingPlan", "SimConfig",
    "TruncatedCoefficients", "build", "mollify", "simulate", "truncate",
]
