"""Error regions, empirical delta-FWER and true positive rates."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .pipeline import empirical_quantile

Z80 = 1.2815515655446004  # standard normal 0.9 quantile, two-sided 80% interval


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RunOutcome:
    selected: np.ndarray
    support: np.ndarray
    delta_null: np.ndarray
    alpha: float
    delta: float

    def __post_init__(self):
        for name in ("selected", "support", "delta_null"):
            arr = np.unique(np.asarray(getattr(self, name), dtype=np.int64))
            object.__setattr__(self, name, arr)


def error_region(outcome: RunOutcome) -> np.ndarray:
    """Selected covariates lying in the delta-null region."""
    return np.intersect1d(outcome.delta_null, outcome.selected, assume_unique=True)


def binomial_ci(rate: float, m: int, z: float = Z80) -> tuple[float, float]:
    half = z * math.sqrt(rate * (1 - rate) / m)
    return max(0.0, rate - half), min(1.0, rate + half)


def delta_fwer_estimate(outcomes: Sequence[RunOutcome]):
    """Fraction of runs with a nonempty error region, with an 80% normal-approximation CI."""
    if len(outcomes) == 0:
        raise ValueError("need at least one outcome")
    alphas = {o.alpha for o in outcomes}
    deltas = {o.delta for o in outcomes}
    if len(alphas) > 1 or len(deltas) > 1:
        raise ValueError("outcomes must share alpha and delta")
    errs = sum(error_region(o).size > 0 for o in outcomes)
    rate = errs / len(outcomes)
    return rate, binomial_ci(rate, len(outcomes))


def tpr(outcome: RunOutcome) -> float:
    if outcome.support.size == 0:
        raise UndefinedMetricError("true positive rate undefined for an empty support")
    hits = np.intersect1d(outcome.selected, outcome.support, assume_unique=True).size
    return hits / outcome.support.size


def summarize(outcomes: Sequence[RunOutcome], fwer_outcomes: Sequence[RunOutcome] | None = None) -> dict:
    """Aggregate delta-FWER, classical FWER and TPR quantiles across seeds.

    ``fwer_outcomes`` are the same selections scored at delta = 0; the
    classical FWER is NaN when they are omitted.
    """
    rate, (lo, hi) = delta_fwer_estimate(outcomes)
    tprs = np.array([tpr(o) for o in outcomes])
    fwer = float("nan")
    if fwer_outcomes is not None:
        fwer = delta_fwer_estimate(fwer_outcomes)[0]
    return {
        "delta_fwer": rate,
        "ci_lo": lo,
        "ci_hi": hi,
        "fwer": fwer,
        "tpr_median": float(empirical_quantile(tprs, 0.5)),
        "tpr_d10": float(empirical_quantile(tprs, 0.1)),
        "tpr_d90": float(empirical_quantile(tprs, 0.9)),
    }
