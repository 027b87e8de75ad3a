"""Sampler-quality diagnostics: ESS, mode coverage, empirical 2-Wasserstein,
and bias/MSE probes against targets with known moments.

ESS follows the reference-moment convention: autocorrelations are estimated
with an externally supplied mean and variance (from an independent sampler
such as :func:`cyclicmc.samplers.hmc_reference`), the lag sum is truncated
at the first negative estimate, and the result is clamped to (0, B].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import schedule as sched
from .samplers import SampleSet, SamplerConfig, run_parallel
from .targets import TargetModel


class DegenerateChainError(ValueError):
    """The chain is constant; autocorrelations are undefined."""


def ess(chain, ref_mean: float, ref_var: float,
        max_lag: int | None = None) -> float:
    """Effective sample size B / (1 + 2 sum_s (1 - s/B) rho_s).

    rho_s = sum_{b>s} (x_b - ref_mean)(x_{b-s} - ref_mean) / (ref_var (B-s)),
    summed from s=1 up to the first negative estimate (exclusive) or
    ``max_lag``. The result is clamped to at most B.
    """
    chain = np.asarray(chain, dtype=float).ravel()
    b = chain.size
    if b < 10:
        raise ValueError(f"need a chain of length >= 10, got {b}")
    if not ref_var > 0:
        raise ValueError(f"ref_var must be > 0, got {ref_var}")
    if np.all(chain == chain[0]):
        raise DegenerateChainError("chain is constant")
    if max_lag is None:
        max_lag = b - 1
    if not 1 <= max_lag < b:
        raise ValueError(f"max_lag must be in [1, {b - 1}], got {max_lag}")
    centered = chain - ref_mean
    acc = 0.0
    for lag in range(1, max_lag + 1):
        rho = (centered[lag:] @ centered[:-lag]) / (ref_var * (b - lag))
        if rho < 0.0:
            break
        acc += (1.0 - lag / b) * rho
    return min(b / (1.0 + 2.0 * acc), float(b))


def ess_per_coordinate(thetas: np.ndarray, ref_means, ref_vars,
                       max_lag: int | None = None) -> np.ndarray:
    """ESS of each coordinate chain of a (B, d) sample array."""
    thetas = np.atleast_2d(np.asarray(thetas, float))
    ref_means = np.asarray(ref_means, float)
    ref_vars = np.asarray(ref_vars, float)
    return np.array([ess(thetas[:, j], ref_means[j], ref_vars[j], max_lag)
                     for j in range(thetas.shape[1])])


def median_ess(thetas: np.ndarray, ref_means, ref_vars,
               max_lag: int | None = None) -> float:
    return float(np.median(ess_per_coordinate(thetas, ref_means, ref_vars,
                                              max_lag)))


@dataclass(frozen=True)
class ModeCoverageSpec:
    """A mode counts as covered once >= min_count samples land within radius."""

    centers: np.ndarray
    radius: float = 0.25
    min_count: int = 100

    def __post_init__(self):
        object.__setattr__(self, "centers",
                           np.atleast_2d(np.asarray(self.centers, float)))
        if not self.radius > 0:
            raise ValueError(f"radius must be > 0, got {self.radius}")
        if self.min_count < 1:
            raise ValueError(f"min_count must be >= 1, got {self.min_count}")
        m = self.centers.shape[0]
        for i in range(m):
            for j in range(i + 1, m):
                if np.array_equal(self.centers[i], self.centers[j]):
                    raise ValueError(f"centers {i} and {j} coincide")


def mode_coverage(samples, spec: ModeCoverageSpec) -> int:
    """Number of centers with at least ``min_count`` samples within ``radius``."""
    pts = samples.thetas if isinstance(samples, SampleSet) \
        else np.atleast_2d(np.asarray(samples, float))
    if pts.shape[0] == 0:
        return 0
    if pts.shape[1] != spec.centers.shape[1]:
        raise ValueError("sample dimension does not match center dimension")
    r2 = spec.radius ** 2
    covered = 0
    for center in spec.centers:
        d2 = np.sum((pts - center) ** 2, axis=1)
        if int(np.count_nonzero(d2 <= r2)) >= spec.min_count:
            covered += 1
    return covered


def wasserstein2(a, b, *, cap: int = 512, subsample_seed: int = 0) -> float:
    """Empirical 2-Wasserstein distance between equal-size point clouds.

    Computed by exact optimal assignment on squared Euclidean costs. Inputs
    larger than ``cap`` are first uniformly subsampled to ``cap`` points
    with a fixed derived seed, after which the sizes must match.
    """
    a = np.atleast_2d(np.asarray(a, float))
    b = np.atleast_2d(np.asarray(b, float))
    if a.shape[1] != b.shape[1]:
        raise ValueError("point clouds must share a dimension")
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(int(subsample_seed), a.shape[0],
                                        b.shape[0])))
    if a.shape[0] > cap:
        a = a[rng.choice(a.shape[0], cap, replace=False)]
    if b.shape[0] > cap:
        b = b[rng.choice(b.shape[0], cap, replace=False)]
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"point clouds must have equal size, got {a.shape[0]} and {b.shape[0]}")
    diff = a[:, None, :] - b[None, :, :]
    cost = np.einsum("ijk,ijk->ij", diff, diff)
    rows, cols = linear_sum_assignment(cost)
    # Summing matched costs in sorted order makes the result exactly
    # symmetric in (a, b).
    return float(np.sqrt(np.sort(cost[rows, cols]).mean()))


@dataclass(frozen=True)
class ConvergenceProbe:
    """Scalar test function with analytically known posterior mean.

    ``test_fn`` maps a (n, d) sample array to (n,) values.
    """

    test_fn: Callable[[np.ndarray], np.ndarray]
    true_mean: float
    seeds: int = 20

    def __post_init__(self):
        if not np.isfinite(self.true_mean):
            raise ValueError("true_mean must be finite")
        if self.seeds < 1:
            raise ValueError("seeds must be >= 1")


def bias_mse_probe(target: TargetModel, cfg: SamplerConfig,
                   probe: ConvergenceProbe, k_values, theta0=None,
                   workers: int | None = None) -> list[dict]:
    """Empirical bias and MSE of the sample average, per iteration budget.

    For each K the cyclical schedule is rebuilt with the template's cycle
    length and exploration proportion, ``probe.seeds`` independent chains
    are run, and the sample average of the test function over all
    sampling-stage records is compared against ``probe.true_mean``.
    """
    template = cfg.schedule
    if template.kind != sched.CYCLICAL:
        raise ValueError("bias_mse_probe expects a cyclical schedule template")
    cyc_len = template.cycle_length
    if theta0 is None:
        theta0 = np.zeros(target.dim)
    rows = []
    for k_total in k_values:
        k_total = int(k_total)
        spec = sched.cyclical(template.alpha0, max(1, k_total // cyc_len),
                              k_total, template.beta)
        run_cfg = SamplerConfig(
            base=cfg.base, schedule=spec, temperature=cfg.temperature,
            friction_eta=cfg.friction_eta, noise_estimate=cfg.noise_estimate,
            minibatch_size=cfg.minibatch_size, seed=cfg.seed)
        per_cycle = sched.sampling_iterations_per_cycle(spec)
        chains = run_parallel(
            target, run_cfg, [theta0] * probe.seeds, k_total,
            samples_per_cycle=max(1, per_cycle), workers=workers)
        estimates = np.array([float(np.mean(probe.test_fn(ss.thetas)))
                              for ss in chains])
        errors = estimates - probe.true_mean
        rows.append({
            "K": k_total,
            "alpha0": template.alpha0,
            "bias": float(abs(np.mean(errors))),
            "mse": float(np.mean(errors ** 2)),
            "seeds": probe.seeds,
        })
    return rows
