"""scikit-learn style front ends for the solvers.

``fit`` takes a :class:`~mlfmm.problems.ProblemSpec` and solves it;
``predict`` returns the travel time to the destination set at query points.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .eikonal import INF
from .mlfm import (DEFAULT_BETA, DEFAULT_ETA_CONST, DEFAULT_RETRIES, LevelSchedule, MlfmResult,
                   classic_schedule, extract_path, run_multilevel, schedule_params, snap_step)
from .problems import ProblemSpec

MODES = ("classic", "two_level", "n_level", "auto")


def check_problem(problem) -> ProblemSpec:
    if not isinstance(problem, ProblemSpec):
        raise TypeError(f"expected a ProblemSpec, got {type(problem).__name__}")
    return problem


def check_points(X, dim: int) -> np.ndarray:
    X = check_array(X, dtype=float, ensure_2d=True)
    if X.shape[1] != dim:
        raise ValueError(f"X has {X.shape[1]} features, the fitted problem has {dim}")
    return X


class _TravelTimeMixin:
    """Shared ``predict``/``path`` over a fitted :class:`MlfmResult`."""

    def _solve(self, problem: ProblemSpec, schedule: LevelSchedule, deadline=None):
        self.problem_ = problem
        self.schedule_ = schedule
        self.result_: MlfmResult = run_multilevel(problem, schedule, self.max_retries, deadline)
        self.tau_star_ = self.result_.tau_star
        self.v_star_ = self.result_.v_star
        self.n_features_in_ = problem.dim
        return self

    def predict(self, X) -> np.ndarray:
        """Travel time to the destination from the nearest final-grid node; inf where unsolved."""
        check_is_fitted(self, "result_")
        X = check_points(X, self.n_features_in_)
        vf = self.result_.final_values
        base = vf.grid.base
        out = np.empty(len(X))
        for i, p in enumerate(X):
            x = base.flat(base.nearest_node(p))
            out[i] = vf.T[x] if x in vf.accepted else INF
        return out

    def path(self) -> np.ndarray:
        check_is_fitted(self, "result_")
        return extract_path(self.result_, self.problem_)


class FastMarching(_TravelTimeMixin, BaseEstimator):
    """Single-grid partial fast marching from the destination to the source set."""

    def __init__(self, h: float = 0.02, max_retries: int = DEFAULT_RETRIES):
        self.h = h
        self.max_retries = max_retries

    def fit(self, problem, y=None, deadline=None):
        problem = check_problem(problem)
        length = float(min(problem.domain.extent))
        return self._solve(problem, classic_schedule(snap_step(self.h, length)), deadline)


class MultiLevelFastMarching(_TravelTimeMixin, BaseEstimator):
    """Multi-level fast marching on grids refined around near-optimal paths.

    Parameters
    ----------
    epsilon, finest_h : float
        Target accuracy, or directly the finest mesh step (give one).
    gamma, beta : float
        Convergence-rate and neighbourhood-growth exponents used by the schedule.
    eta_const : float
        Thresholds are ``eta_const * H_l**gamma``.
    mode : {"auto", "two_level", "n_level", "classic"}
    n_levels : int, optional
        Level count for ``mode="n_level"``.
    """

    def __init__(self, epsilon=None, finest_h=None, gamma=1.0, beta=DEFAULT_BETA,
                 eta_const=DEFAULT_ETA_CONST, mode="auto", n_levels=None,
                 max_retries=DEFAULT_RETRIES):
        self.epsilon = epsilon
        self.finest_h = finest_h
        self.gamma = gamma
        self.beta = beta
        self.eta_const = eta_const
        self.mode = mode
        self.n_levels = n_levels
        self.max_retries = max_retries

    def build_schedule(self, problem: ProblemSpec) -> LevelSchedule:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        length = float(min(problem.domain.extent))
        if self.mode == "classic":
            h = self.finest_h if self.finest_h is not None else self.epsilon ** (1.0 / self.gamma)
            return classic_schedule(snap_step(h, length))
        return schedule_params(self.epsilon, self.gamma, self.eta_const, self.mode,
                               n_levels=self.n_levels, dim=problem.dim, beta=self.beta,
                               finest_h=self.finest_h, length=length)

    def fit(self, problem, y=None, deadline=None):
        problem = check_problem(problem)
        return self._solve(problem, self.build_schedule(problem), deadline)
