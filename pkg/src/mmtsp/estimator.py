"""Estimator-style wrapper: fit on an (n, 2) array of city coordinates, read tours off the fitted object."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .instance import Instance
from .solve import Derandomized, RandomShift, ptas_solve


class MinMaxTourPlanner(ClusterMixin, BaseEstimator):
    """Splits cities among ``k`` salesmen sharing a depot so that the longest tour is short.

    ``labels_[i]`` is the salesman serving city ``i``; the depot is labelled -1.
    ``forced`` maps city indices to the salesman that must visit them.
    """

    def __init__(
        self,
        k: int = 2,
        eps: float = 0.5,
        depot: int = 0,
        m: int = 4,
        r: int = 2,
        alpha: float | None = None,
        seed: int = 0,
        derandomize: bool = False,
        stride: int | None = None,
        forced: dict[int, int] | None = None,
    ):
        self.k = k
        self.eps = eps
        self.depot = depot
        self.m = m
        self.r = r
        self.alpha = alpha
        self.seed = seed
        self.derandomize = derandomize
        self.stride = stride
        self.forced = forced

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        if X.shape[1] != 2:
            raise ValueError(f"expected two coordinate columns, got {X.shape[1]}")
        inst = Instance(
            cities=[(float(a), float(b)) for a, b in X],
            k=self.k,
            depot=self.depot,
            forced_assignments=dict(self.forced or {}),
        )
        mode = Derandomized(self.stride) if self.derandomize else RandomShift(self.seed)
        overrides = (self.m, self.r) if self.alpha is None else (self.m, self.r, self.alpha)
        report = ptas_solve(inst, self.eps, mode, overrides)
        sol = report.solution
        labels = np.full(X.shape[0], -1, dtype=int)
        for h, tour in enumerate(sol.tours):
            for c in tour:
                if c != inst.depot:
                    labels[c] = h
        self.report_ = report
        self.tours_ = [list(t) for t in sol.tours]
        self.lengths_ = np.asarray(sol.lengths, dtype=float)
        self.makespan_ = float(sol.makespan)
        self.labels_ = labels
        self.n_features_in_ = 2
        return self

    def score(self, X=None, y=None) -> float:
        """Negative makespan, so that larger is better."""
        check_is_fitted(self, "makespan_")
        return -self.makespan_
