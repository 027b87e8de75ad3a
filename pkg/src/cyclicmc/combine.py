"""Weighted combination of per-cycle sample sets into posterior estimates.

Each cycle m contributes a sub-posterior average f_hat_m; the combined
estimate is sum_m w_m * f_hat_m where w_m is the cycle's normalizing
constant estimated by the harmonic mean of its sample likelihoods:

    w_hat_m ~ [ (1/K_m) sum_j 1 / p(D | theta_j^(m)) ] ^ -1

All weight arithmetic happens in the log domain (the harmonic-mean
estimator is notoriously unstable otherwise), and a uniform-weight
shortcut is provided for the common case where samples share similarly
high likelihood. A disjoint-region variant reassigns pooled samples to
regions via a classifier and averages within regions instead of cycles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .samplers import SampleSet
from .targets import TargetModel


class DegenerateWeightsError(ValueError):
    """Every sample has zero likelihood; weights are undefined."""


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(a - m))))


@dataclass(frozen=True)
class CycleWeights:
    """Normalized per-cycle weights plus the raw log evidence estimates."""

    cycle_ids: np.ndarray
    weights: np.ndarray
    log_weights: np.ndarray
    log_evidence_terms: np.ndarray

    def __post_init__(self):
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be normalized to 1 within 1e-12")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")


def harmonic_weights(samples: SampleSet, target: TargetModel | None = None,
                     uniform: bool = False) -> CycleWeights:
    """Per-cycle harmonic-mean weights from full-data log-likelihoods.

    With ``uniform=True`` the likelihood evaluation is skipped entirely and
    every cycle gets weight 1/M. Otherwise ``samples.log_liks`` is filled
    via ``target`` when absent.
    """
    if len(samples) == 0:
        raise ValueError("cannot weight an empty sample set")
    cycle_ids = samples.cycle_ids()
    m = cycle_ids.size
    if uniform:
        w = np.full(m, 1.0 / m)
        return CycleWeights(cycle_ids=cycle_ids, weights=w,
                            log_weights=np.log(w),
                            log_evidence_terms=np.zeros(m))
    if samples.log_liks is None:
        if target is None:
            raise ValueError("need a target to compute log-likelihoods")
        samples.ensure_log_liks(target)
    raw = np.empty(m)
    for i, cyc in enumerate(cycle_ids):
        ll = samples.log_liks[samples.cycles == cyc]
        # log w_m = -( logsumexp(-ll) - log K_m )
        raw[i] = -(_logsumexp(-ll) - np.log(ll.size))
    if np.all(np.isneginf(raw)):
        raise DegenerateWeightsError(
            "all samples have log-likelihood -inf; weights are undefined")
    log_w = raw - _logsumexp(raw)
    return CycleWeights(cycle_ids=cycle_ids, weights=np.exp(log_w),
                        log_weights=log_w, log_evidence_terms=raw)


def _per_group_means(values: np.ndarray, groups: np.ndarray,
                     group_ids: np.ndarray) -> np.ndarray:
    out = np.empty((group_ids.size,) + values.shape[1:])
    for i, g in enumerate(group_ids):
        out[i] = values[groups == g].mean(axis=0)
    return out


def weighted_expectation(samples: SampleSet, weights: CycleWeights,
                         f: Callable[[np.ndarray], np.ndarray]):
    """Doubly averaged estimate sum_m w_m * mean_j f(theta_j^(m)).

    ``f`` maps the (n, d) sample array to per-sample values (scalars or
    vectors); returns a float for scalar test functions.
    """
    if len(samples) == 0:
        raise ValueError("cannot average an empty sample set")
    present = samples.cycle_ids()
    if not np.array_equal(present, weights.cycle_ids):
        raise ValueError(
            f"cycle mismatch: samples have {present.tolist()}, "
            f"weights cover {weights.cycle_ids.tolist()}")
    values = np.asarray(f(samples.thetas), dtype=float)
    per_cycle = _per_group_means(values, samples.cycles, present)
    combined = np.tensordot(weights.weights, per_cycle, axes=1)
    return float(combined) if np.ndim(combined) == 0 else combined


def nearest_centroid_classifier(samples: SampleSet) -> Callable[[np.ndarray], np.ndarray]:
    """Voronoi assignment to per-cycle sample centroids.

    The returned callable maps a (n, d) array to the cycle id of the
    nearest centroid, giving a disjoint partition of the sample space.
    """
    ids = samples.cycle_ids()
    if ids.size == 0:
        raise ValueError("cannot build a classifier from an empty sample set")
    centroids = _per_group_means(samples.thetas, samples.cycles, ids)

    def assign(points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, float))
        d2 = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        return ids[np.argmin(d2, axis=1)]

    return assign


def region_expectation(samples: SampleSet,
                       classifier: Callable[[np.ndarray], np.ndarray],
                       f: Callable[[np.ndarray], np.ndarray],
                       weights: CycleWeights | None = None):
    """Pooled-and-reassigned estimate over disjoint regions.

    Every sample is assigned to a region by the classifier; region means
    are taken over pooled counts, then combined with the cycle weights
    matched by region id (uniform when ``weights`` is None). Regions with
    no samples are dropped and the remaining weights renormalized.
    """
    if len(samples) == 0:
        raise ValueError("no samples, so no occupied regions")
    regions = np.asarray(classifier(samples.thetas))
    occupied = np.unique(regions)
    values = np.asarray(f(samples.thetas), dtype=float)
    region_means = _per_group_means(values, regions, occupied)
    if weights is None:
        w = np.full(occupied.size, 1.0 / occupied.size)
    else:
        lookup = {int(c): float(wt)
                  for c, wt in zip(weights.cycle_ids, weights.weights)}
        try:
            w = np.array([lookup[int(r)] for r in occupied])
        except KeyError as exc:
            raise ValueError(
                f"classifier produced region {exc} with no matching weight")
        total = w.sum()
        if total <= 0:
            raise DegenerateWeightsError(
                "all occupied regions carry zero weight")
        w = w / total
    combined = np.tensordot(w, region_means, axes=1)
    return float(combined) if np.ndim(combined) == 0 else combined
