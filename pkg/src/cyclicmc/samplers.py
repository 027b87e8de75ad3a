"""SGLD, SGHMC, the cyclical two-stage driver, and a full-gradient HMC reference.

Update rules (1-based iteration k, stepsize alpha_k, temperature T):

* SGLD:  theta <- theta - alpha * grad_Utilde(theta) + sqrt(2 * alpha * T) * eps
* SGHMC: theta <- theta + v, then
         v <- v - alpha * grad_Utilde(theta) - eta * v
              + sqrt(2 * (eta - gammahat) * alpha * T) * eps

T = 0 draws no Gaussian noise at all, turning either update into its
stochastic-optimization counterpart; the cyclical driver uses that for the
exploration stage of each cycle and the configured temperature for the
sampling stage, collecting records only while sampling.

Determinism contract: every run is a pure function of (config, seed, init).
Parallel chains derive per-chain seeds via :func:`derive_chain_seed`, so
results do not depend on execution order or physical parallelism.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .schedule import (CYCLICAL, ScheduleSpec, Stage, cycle_index, stage,
                       stepsize)
from .targets import Minibatch, TargetModel, draw_minibatch

SGLD = "sgld"
SGHMC = "sghmc"
HMC = "hmc"
BASES = (SGLD, SGHMC, HMC)


class DivergedChainError(RuntimeError):
    """A chain produced a non-finite coordinate; carries context and partials."""

    def __init__(self, message: str, iteration: int | None = None,
                 theta: np.ndarray | None = None, partial=None):
        super().__init__(message)
        self.iteration = iteration
        self.theta = theta
        self.partial = partial


class ConfigurationWarning(UserWarning):
    """A run configuration is degenerate but not fatal (e.g. nothing sampled)."""


@dataclass
class SamplerConfig:
    base: str
    schedule: ScheduleSpec
    temperature: float = 1.0
    friction_eta: float = 0.5
    noise_estimate: float = 0.0
    minibatch_size: int | None = None
    hmc_leapfrog_steps: int = 10
    hmc_stepsize: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.base not in BASES:
            raise ValueError(f"base: must be one of {BASES}, got {self.base!r}")
        if self.temperature < 0:
            raise ValueError(
                f"temperature: must be >= 0, got {self.temperature}")
        if not 0.0 < self.friction_eta <= 1.0:
            raise ValueError(
                f"friction_eta: must be in (0, 1], got {self.friction_eta}")
        if self.friction_eta - self.noise_estimate < 0:
            raise ValueError(
                "noise_estimate: friction_eta - noise_estimate must be >= 0 "
                f"({self.friction_eta} - {self.noise_estimate})")
        if self.minibatch_size is not None and self.minibatch_size < 1:
            raise ValueError(
                f"minibatch_size: must be >= 1, got {self.minibatch_size}")
        if self.seed < 0:
            raise ValueError(f"seed: must be >= 0, got {self.seed}")


@dataclass
class SamplerState:
    theta: np.ndarray
    momentum: np.ndarray | None
    iteration: int
    rng: np.random.Generator


@dataclass
class SampleSet:
    """Collected sampling-stage states, tagged by iteration and cycle.

    ``log_liks`` holds per-sample full-data log-likelihoods and is filled
    lazily by :meth:`ensure_log_liks` when the weighting scheme needs it.
    """

    thetas: np.ndarray
    iterations: np.ndarray
    cycles: np.ndarray
    log_liks: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, float))
        self.iterations = np.asarray(self.iterations, dtype=int)
        self.cycles = np.asarray(self.cycles, dtype=int)
        if self.thetas.shape[0] != self.iterations.size or \
                self.iterations.size != self.cycles.size:
            raise ValueError("thetas, iterations and cycles must align")

    @classmethod
    def empty(cls, dim: int) -> "SampleSet":
        return cls(thetas=np.empty((0, dim)), iterations=np.empty(0, int),
                   cycles=np.empty(0, int))

    @classmethod
    def concat(cls, parts: list["SampleSet"]) -> "SampleSet":
        if not parts:
            raise ValueError("cannot concatenate zero sample sets")
        lls = [p.log_liks for p in parts]
        return cls(
            thetas=np.concatenate([p.thetas for p in parts]),
            iterations=np.concatenate([p.iterations for p in parts]),
            cycles=np.concatenate([p.cycles for p in parts]),
            log_liks=(np.concatenate(lls)
                      if all(l is not None for l in lls) else None),
        )

    def __len__(self) -> int:
        return self.thetas.shape[0]

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def select(self, mask) -> "SampleSet":
        return SampleSet(
            thetas=self.thetas[mask], iterations=self.iterations[mask],
            cycles=self.cycles[mask],
            log_liks=None if self.log_liks is None else self.log_liks[mask])

    def cycle_ids(self) -> np.ndarray:
        return np.unique(self.cycles)

    def ensure_log_liks(self, target: TargetModel) -> np.ndarray:
        if self.log_liks is None:
            self.log_liks = np.array(
                [target.full_log_likelihood(t) for t in self.thetas])
        return self.log_liks

    def to_csv(self, path) -> None:
        """Write columns iter,cycle,stage,theta_0..theta_{d-1} (shortest repr)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["iter", "cycle", "stage"]
                            + [f"theta_{j}" for j in range(self.dim)])
            for i in range(len(self)):
                writer.writerow(
                    [int(self.iterations[i]), int(self.cycles[i]), "sampling"]
                    + [repr(float(v)) for v in self.thetas[i]])

    @classmethod
    def from_csv(cls, path) -> "SampleSet":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            dim = len(header) - 3
            iters, cycles, thetas = [], [], []
            for row in reader:
                if row[2] != "sampling":
                    raise ValueError(
                        f"{path}: unexpected stage {row[2]!r} in sample file")
                iters.append(int(row[0]))
                cycles.append(int(row[1]))
                thetas.append([float(v) for v in row[3:]])
        return cls(thetas=np.array(thetas).reshape(len(iters), dim),
                   iterations=np.array(iters, int),
                   cycles=np.array(cycles, int))


def derive_chain_seed(seed: int, chain_index: int) -> np.random.SeedSequence:
    """Stable per-chain seed: SeedSequence keyed on (master seed, chain index)."""
    return np.random.SeedSequence(entropy=(int(seed), int(chain_index)))


def _sgld_update(theta, grad, alpha, temperature, rng):
    new = theta - alpha * grad
    if temperature > 0.0:
        new = new + math.sqrt(2.0 * alpha * temperature) \
            * rng.standard_normal(theta.shape[0])
    return new


def _sghmc_update(theta, momentum, grad_fn, alpha, eta, gammahat,
                  temperature, rng):
    theta_new = theta + momentum
    grad = grad_fn(theta_new)
    v_new = momentum - alpha * grad - eta * momentum
    if temperature > 0.0:
        v_new = v_new + math.sqrt(2.0 * (eta - gammahat) * alpha * temperature) \
            * rng.standard_normal(theta.shape[0])
    return theta_new, v_new


def _require_finite(arr, iteration, theta, what="state"):
    if not np.all(np.isfinite(arr)):
        raise DivergedChainError(
            f"non-finite {what} at iteration {iteration}",
            iteration=iteration, theta=np.array(theta))


def sgld_step(state: SamplerState, target: TargetModel, alpha: float,
              temperature: float = 1.0,
              minibatch: Minibatch | None = None) -> SamplerState:
    """One SGLD update; temperature 0 is exactly the gradient-descent map."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    k = state.iteration + 1
    grad = target.grad_potential_minibatch(state.theta, minibatch)
    _require_finite(grad, k, state.theta, "gradient")
    theta = _sgld_update(state.theta, grad, alpha, temperature, state.rng)
    _require_finite(theta, k, theta)
    return SamplerState(theta=theta, momentum=None, iteration=k, rng=state.rng)


def sghmc_step(state: SamplerState, target: TargetModel, alpha: float,
               cfg: SamplerConfig,
               minibatch: Minibatch | None = None) -> SamplerState:
    """One SGHMC update: position first, gradient at the updated position."""
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha}")
    k = state.iteration + 1
    v = state.momentum
    if v is None:
        v = np.zeros_like(state.theta)
    theta, v = _sghmc_update(
        state.theta, v,
        lambda th: target.grad_potential_minibatch(th, minibatch),
        alpha, cfg.friction_eta, cfg.noise_estimate, cfg.temperature, state.rng)
    _require_finite(theta, k, theta)
    _require_finite(v, k, theta, "momentum")
    return SamplerState(theta=theta, momentum=v, iteration=k, rng=state.rng)


def _thinning_plan(spec: ScheduleSpec, samples_per_cycle: int) -> set[int]:
    """Iterations to record: per cycle, evenly spaced sampling-stage indices
    ending at the cycle's last sampling iteration."""
    by_cycle: dict[int, list[int]] = {}
    for k in range(1, spec.total_iters + 1):
        if stage(spec, k) is Stage.SAMPLING:
            by_cycle.setdefault(cycle_index(spec, k), []).append(k)
    keep: set[int] = set()
    for ks in by_cycle.values():
        n = min(samples_per_cycle, len(ks))
        if n == 0:
            continue
        stride = len(ks) // n
        keep.update(ks[len(ks) - 1 - i * stride] for i in range(n))
    return keep


def _draw_batch(target, cfg, rng):
    if target.n_data and cfg.minibatch_size is not None:
        return draw_minibatch(target.n_data, cfg.minibatch_size, rng)
    return None


def _partial_set(recs, iters, cycs, dim, meta=None) -> SampleSet:
    ss = SampleSet.empty(dim) if not recs else SampleSet(
        thetas=np.array(recs), iterations=np.array(iters, int),
        cycles=np.array(cycs, int))
    if meta:
        ss.meta.update(meta)
    return ss


def run_cyclical(target: TargetModel, cfg: SamplerConfig, theta0,
                 samples_per_cycle: int,
                 rng: np.random.Generator | None = None) -> SampleSet:
    """Two-stage cyclical run: exploration at T=0, sampling at cfg.temperature.

    Records are thinned to at most ``samples_per_cycle`` per cycle (evenly
    spaced, ending on the cycle's smallest stepsize) and tagged with their
    cycle index. For SGHMC the momentum is reset to zero at each cycle start.
    """
    spec = cfg.schedule
    if spec.kind != CYCLICAL:
        raise ValueError(f"run_cyclical needs a cyclical schedule, got {spec.kind!r}")
    if cfg.base not in (SGLD, SGHMC):
        raise ValueError(f"run_cyclical supports sgld/sghmc, got {cfg.base!r}")
    if samples_per_cycle < 1:
        raise ValueError("samples_per_cycle must be >= 1")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    theta = np.array(theta0, dtype=float)
    if theta.shape != (target.dim,):
        raise ValueError(f"theta0 must have shape ({target.dim},)")
    keep = _thinning_plan(spec, samples_per_cycle)
    if not keep:
        warnings.warn(
            "no sampling-stage iterations under this schedule "
            f"(beta={spec.beta}, cycle length {spec.cycle_length}); "
            "returning an empty sample set", ConfigurationWarning)
    momentum = np.zeros_like(theta)
    cyc_len = spec.cycle_length
    recs, iters, cycs = [], [], []
    for k in range(1, spec.total_iters + 1):
        alpha = stepsize(spec, k)
        exploring = stage(spec, k) is Stage.EXPLORATION
        temp = 0.0 if exploring else cfg.temperature
        batch = _draw_batch(target, cfg, rng)
        if cfg.base == SGLD:
            grad = target.grad_potential_minibatch(theta, batch)
            theta = _sgld_update(theta, grad, alpha, temp, rng)
        else:
            if (k - 1) % cyc_len == 0:
                momentum = np.zeros_like(theta)  # warm restart
            theta, momentum = _sghmc_update(
                theta, momentum,
                lambda th: target.grad_potential_minibatch(th, batch),
                alpha, cfg.friction_eta, cfg.noise_estimate, temp, rng)
        if not np.all(np.isfinite(theta)):
            raise DivergedChainError(
                f"chain diverged at iteration {k}", iteration=k, theta=theta,
                partial=_partial_set(recs, iters, cycs, target.dim))
        if k in keep:
            recs.append(theta.copy())
            iters.append(k)
            cycs.append(cycle_index(spec, k))
    return _partial_set(recs, iters, cycs, target.dim,
                        meta={"final_theta": theta.copy(),
                              "final_iteration": spec.total_iters})


def run_plain(target: TargetModel, cfg: SamplerConfig, theta0,
              burn_in: int, keep: int, thin: int = 1,
              rng: np.random.Generator | None = None) -> SampleSet:
    """Baseline run: constant stepsize for ``burn_in`` iterations, then the
    configured decay schedule; keeps every ``thin``-th post-burn-in state."""
    spec = cfg.schedule
    if spec.kind == CYCLICAL:
        raise ValueError("run_plain needs a constant or polynomial schedule; "
                         "use run_cyclical for cyclical ones")
    if cfg.base not in (SGLD, SGHMC):
        raise ValueError(f"run_plain supports sgld/sghmc, got {cfg.base!r}")
    if burn_in < 0 or keep < 0 or thin < 1:
        raise ValueError("burn_in/keep must be >= 0 and thin >= 1")
    total = burn_in + keep * thin
    if total > spec.total_iters:
        raise ValueError(
            f"burn_in + keep*thin = {total} exceeds the schedule budget "
            f"of {spec.total_iters} iterations")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    theta = np.array(theta0, dtype=float)
    if theta.shape != (target.dim,):
        raise ValueError(f"theta0 must have shape ({target.dim},)")
    momentum = np.zeros_like(theta)
    recs, iters = [], []
    for k in range(1, total + 1):
        alpha = stepsize(spec, 1 if k <= burn_in else k - burn_in)
        batch = _draw_batch(target, cfg, rng)
        if cfg.base == SGLD:
            grad = target.grad_potential_minibatch(theta, batch)
            theta = _sgld_update(theta, grad, alpha, cfg.temperature, rng)
        else:
            theta, momentum = _sghmc_update(
                theta, momentum,
                lambda th: target.grad_potential_minibatch(th, batch),
                alpha, cfg.friction_eta, cfg.noise_estimate,
                cfg.temperature, rng)
        if not np.all(np.isfinite(theta)):
            raise DivergedChainError(
                f"chain diverged at iteration {k}", iteration=k, theta=theta,
                partial=_partial_set(recs, iters, [1] * len(recs), target.dim))
        if k > burn_in and (k - burn_in) % thin == 0:
            recs.append(theta.copy())
            iters.append(k)
    return _partial_set(recs, iters, [1] * len(recs), target.dim,
                        meta={"final_theta": theta.copy(),
                              "final_iteration": total})


def run_parallel(target: TargetModel, cfg: SamplerConfig, inits,
                 per_chain_budget: int, *, samples_per_cycle: int | None = None,
                 burn_in: int = 0, keep: int | None = None, thin: int = 1,
                 workers: int | None = None) -> list[SampleSet]:
    """Independent chains with per-chain seeds derived from (cfg.seed, index).

    A diverged chain contributes its partial sample set (flagged in meta)
    without aborting the others. Results are bit-identical whether chains
    run sequentially or on a thread pool.
    """
    inits = [np.asarray(t, float) for t in inits]
    if not inits:
        raise ValueError("need at least one initial point")
    spec = cfg.schedule
    if spec.kind == CYCLICAL:
        if spec.total_iters != per_chain_budget:
            raise ValueError(
                f"per_chain_budget {per_chain_budget} must equal the cyclical "
                f"schedule's total_iters {spec.total_iters}")
        if samples_per_cycle is None:
            raise ValueError("samples_per_cycle is required for cyclical runs")
    else:
        if keep is None:
            keep = (per_chain_budget - burn_in) // thin

    def one_chain(index: int) -> SampleSet:
        rng = np.random.default_rng(derive_chain_seed(cfg.seed, index))
        try:
            if spec.kind == CYCLICAL:
                ss = run_cyclical(target, cfg, inits[index],
                                  samples_per_cycle, rng=rng)
            else:
                ss = run_plain(target, cfg, inits[index], burn_in, keep,
                               thin, rng=rng)
        except DivergedChainError as exc:
            warnings.warn(f"chain {index}: {exc}", ConfigurationWarning)
            ss = exc.partial if exc.partial is not None \
                else SampleSet.empty(target.dim)
            ss.meta["diverged"] = str(exc)
        ss.meta["chain_index"] = index
        return ss

    if workers is None or workers <= 1:
        return [one_chain(i) for i in range(len(inits))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one_chain, range(len(inits))))


def hmc_reference(target: TargetModel, leapfrog_steps: int, step: float,
                  iters: int, seed: int, theta0=None) -> SampleSet:
    """Full-gradient HMC with Metropolis correction, for diagnostics oracles.

    Records the current state every iteration. ``meta`` carries the
    acceptance rate and the mean absolute Hamiltonian error per trajectory;
    an acceptance rate below 0.1 is flagged as a stepsize warning.
    """
    if leapfrog_steps < 1 or not step > 0 or iters < 1:
        raise ValueError("need leapfrog_steps >= 1, step > 0, iters >= 1")
    rng = np.random.default_rng(seed)
    theta = np.zeros(target.dim) if theta0 is None \
        else np.array(theta0, dtype=float)
    u_cur = target.potential(theta)
    recs = np.empty((iters, target.dim))
    accepted = 0
    energy_err = 0.0
    for it in range(iters):
        p = rng.standard_normal(target.dim)
        h0 = u_cur + 0.5 * p @ p
        q = theta.copy()
        p_leap = p - 0.5 * step * target.grad_potential_full(q)
        for leap in range(leapfrog_steps):
            q = q + step * p_leap
            grad = target.grad_potential_full(q)
            p_leap = p_leap - (step if leap < leapfrog_steps - 1
                               else 0.5 * step) * grad
        u_prop = target.potential(q)
        h1 = u_prop + 0.5 * p_leap @ p_leap
        delta_h = h1 - h0
        if np.isfinite(delta_h):
            energy_err += abs(delta_h)
            if rng.random() < math.exp(min(0.0, -delta_h)):
                theta, u_cur = q, u_prop
                accepted += 1
        else:
            rng.random()  # keep the draw count fixed; treat as reject
        recs[it] = theta
    rate = accepted / iters
    meta = {"acceptance_rate": rate,
            "mean_abs_energy_error": energy_err / iters,
            "final_theta": theta.copy()}
    if rate < 0.1:
        meta["stepsize_warning"] = (
            f"acceptance rate {rate:.3f} < 0.1; stepsize likely too large")
        warnings.warn(meta["stepsize_warning"], ConfigurationWarning)
    return SampleSet(thetas=recs, iterations=np.arange(1, iters + 1),
                     cycles=np.ones(iters, int), meta=meta)
