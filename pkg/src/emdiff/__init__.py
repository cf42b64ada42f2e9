"""Empirical-optimum diffusion models without training.

Closed-form minimisers of the noise-prediction and previous-status diffusion
objectives over a finite training set, reverse samplers driven by them,
analytic oracles for Gaussian targets, and memorisation metrics.
"""
from .datasets import Dataset, TargetSpec, load_dataset, sample_dataset
from .errors import ArgumentError, ConfigurationError, ContractViolation, FormatError
from .predictors import (SGrid, eps_empirical, oracle_eps, oracle_xi,
                         posterior_mean_estimate, sample_s, tweedie_check, xi_empirical)
from .samplers import PartialStart, Trajectory, ddim_step, ddpm_step, generate, prev_status_step
from .schedule import Schedule, linear_schedule, ratio, subsequence

__version__ = "0.1.0"
