"""Computable pieces of the multi-source generalization bound for the student.

Only the weighted empirical risk of the cohort models and the Hoeffding
confidence term can be evaluated from data the simulator has. The divergence
between client and target distributions and the joint-optimal risk terms
need the target distribution and are left out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import LabeledDataset
from .errors import InvalidInputError
from .nn import MlpModel, evaluate
from .sim import CohortModelBundle

PARTIAL_NOTE = (
    "partial bound: divergence and joint-optimal-risk terms omitted (they need the "
    "unobservable target distribution); this is not an upper bound on target risk"
)


def hoeffding_term(n: int, k: int, delta: float, m: int) -> float:
    """sqrt(log(2 n K / delta) / (2 m)) with the natural log."""
    if n < 1 or k < 1 or m < 1:
        raise InvalidInputError("n, K and m must be >= 1")
    if not 0 < delta < 1:
        raise InvalidInputError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(math.log(2 * n * k / delta) / (2 * m))


def scalar_weights(weights: np.ndarray, class_totals: Sequence[float]) -> np.ndarray:
    """Collapse a (cohort x class) weight matrix to one weight per cohort.

    Each class column is weighted by that class's share of all samples.
    """
    weights = np.asarray(weights, dtype=np.float64)
    totals = np.asarray(class_totals, dtype=np.float64)
    if weights.ndim == 1:
        return weights
    if weights.shape[1] != totals.shape[0] or totals.sum() <= 0:
        raise InvalidInputError("class totals do not match the weight matrix")
    return weights @ (totals / totals.sum())


def weighted_risk(client_losses: Sequence[Sequence[float]], weights: Sequence[float]) -> float:
    """sum_i sum_k (p_i / K_i) * loss[i][k], where K_i is cohort i's client count."""
    if len(client_losses) != len(weights):
        raise InvalidInputError("one weight per cohort required")
    total = 0.0
    for losses, p in zip(client_losses, weights):
        if len(losses) == 0:
            raise InvalidInputError("every cohort needs at least one client")
        total += p / len(losses) * math.fsum(losses)
    return total


@dataclass
class BoundReport:
    risk_term: float
    hoeffding_term: float
    note: str
    scalar_weights: list[float]
    samples_per_source: int


def bound_report(
    bundles: Sequence[CohortModelBundle],
    client_datasets: Sequence[Sequence[LabeledDataset]],
    weights,
    delta: float,
    loss_fn: Callable[[MlpModel, LabeledDataset], float] | None = None,
) -> BoundReport:
    """Weighted empirical risk of each cohort model on its own clients, plus the
    Hoeffding term. ``client_datasets[i]`` lists the local datasets of the
    clients in ``bundles[i]``; ``weights`` is either one weight per cohort or
    a (cohort x class) matrix.

    Sources differ in size here, so ``m`` is the smallest client dataset,
    which gives the largest (most conservative) confidence term. ``loss_fn``
    defaults to mean cross-entropy.
    """
    if loss_fn is None:
        loss_fn = lambda model, ds: evaluate(model, ds)[1]  # noqa: E731
    if len(bundles) != len(client_datasets):
        raise InvalidInputError("need the client datasets of every cohort")
    losses = []
    for bundle, datasets in zip(bundles, client_datasets):
        if not datasets:
            raise InvalidInputError(f"cohort {bundle.cohort} has no client datasets")
        losses.append([loss_fn(bundle.model, ds) for ds in datasets])
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim == 2:
        totals = np.sum([b.labels.counts for b in bundles], axis=0)
        w = scalar_weights(w, totals)
    if w.shape != (len(bundles),):
        raise InvalidInputError("weights do not line up with the cohorts")
    k = max(len(d) for d in client_datasets)
    m = min(len(ds) for d in client_datasets for ds in d)
    return BoundReport(
        risk_term=weighted_risk(losses, w),
        hoeffding_term=hoeffding_term(len(bundles), k, delta, m),
        note=PARTIAL_NOTE,
        scalar_weights=w.tolist(),
        samples_per_source=m,
    )
