"""Stepsize schedules and the exploration/sampling stage split.

Three schedule families are supported:

* ``cyclical``: the cosine schedule that restarts at ``alpha0`` every cycle,
  ``alpha_k = alpha0/2 * (cos(pi * mod(k-1, ceil(K/M)) / ceil(K/M)) + 1)``,
  together with an exploration threshold ``beta`` that splits each cycle
  into an exploration stage (stepsize large, run as pure optimization) and
  a sampling stage (samples collected).
* ``polynomial``: the classical decay ``alpha_k = a * (b + k) ** -gamma``
  with ``gamma`` in (0.5, 1].
* ``constant``: ``alpha_k = alpha0`` for every iteration.

All functions are pure in ``(spec, k)`` and safe to call concurrently.
Iterations are 1-based throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, asdict

CYCLICAL = "cyclical"
POLYNOMIAL = "polynomial"
CONSTANT = "constant"
KINDS = (CYCLICAL, POLYNOMIAL, CONSTANT)


class InvalidScheduleError(ValueError):
    """Raised when a schedule spec is malformed or used outside its kind."""


class Stage(enum.Enum):
    EXPLORATION = "exploration"
    SAMPLING = "sampling"


@dataclass(frozen=True)
class ScheduleSpec:
    """Immutable description of a stepsize schedule.

    ``alpha0`` is the initial stepsize. For the cyclical kind, ``num_cycles``
    and ``beta`` control the cycle structure; for the polynomial kind the
    decay is parameterized by ``decay_a``, ``decay_b`` and ``decay_gamma``
    (``alpha0`` then equals the first stepsize ``a * (b + 1) ** -gamma``).
    """

    kind: str
    alpha0: float
    total_iters: int
    num_cycles: int = 1
    beta: float = 0.25
    decay_a: float = 0.0
    decay_b: float = 0.0
    decay_gamma: float = 0.55

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidScheduleError(
                f"kind: must be one of {KINDS}, got {self.kind!r}")
        if not self.alpha0 > 0:
            raise InvalidScheduleError(f"alpha0: must be > 0, got {self.alpha0}")
        if int(self.total_iters) < 1:
            raise InvalidScheduleError(
                f"total_iters: must be >= 1, got {self.total_iters}")
        if self.kind == CYCLICAL:
            if int(self.num_cycles) < 1:
                raise InvalidScheduleError(
                    f"num_cycles: must be >= 1, got {self.num_cycles}")
            if self.total_iters < self.num_cycles:
                raise InvalidScheduleError(
                    "total_iters: must be >= num_cycles "
                    f"({self.total_iters} < {self.num_cycles})")
            # beta = 0 is the degenerate no-exploration schedule used by
            # convergence probes; beta = 1 would never sample.
            if not 0.0 <= self.beta < 1.0:
                raise InvalidScheduleError(
                    f"beta: must be in [0, 1), got {self.beta}")
        if self.kind == POLYNOMIAL:
            if not self.decay_a > 0:
                raise InvalidScheduleError(
                    f"decay_a: must be > 0, got {self.decay_a}")
            if self.decay_b < 0:
                raise InvalidScheduleError(
                    f"decay_b: must be >= 0, got {self.decay_b}")
            if not 0.5 < self.decay_gamma <= 1.0:
                raise InvalidScheduleError(
                    f"decay_gamma: must be in (0.5, 1], got {self.decay_gamma}")

    @property
    def cycle_length(self) -> int:
        """ceil(K / M), the number of iterations per cycle."""
        return -(-self.total_iters // self.num_cycles)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ScheduleSpec":
        return cls(**d)


def cyclical(alpha0: float, num_cycles: int, total_iters: int,
             beta: float = 0.25) -> ScheduleSpec:
    """Cosine schedule with ``num_cycles`` warm restarts over ``total_iters``."""
    return ScheduleSpec(kind=CYCLICAL, alpha0=float(alpha0),
                        total_iters=int(total_iters),
                        num_cycles=int(num_cycles), beta=float(beta))


def polynomial(a: float, gamma: float, total_iters: int,
               b: float = 0.0) -> ScheduleSpec:
    """Decay schedule ``a * (b + k) ** -gamma``."""
    alpha0 = float(a) * (float(b) + 1.0) ** (-float(gamma))
    return ScheduleSpec(kind=POLYNOMIAL, alpha0=alpha0,
                        total_iters=int(total_iters),
                        decay_a=float(a), decay_b=float(b),
                        decay_gamma=float(gamma))


def constant(alpha0: float, total_iters: int) -> ScheduleSpec:
    return ScheduleSpec(kind=CONSTANT, alpha0=float(alpha0),
                        total_iters=int(total_iters))


def _check_iteration(spec: ScheduleSpec, k: int) -> None:
    if not 1 <= k <= spec.total_iters:
        raise ValueError(
            f"iteration k={k} out of range [1, {spec.total_iters}]")


def stepsize(spec: ScheduleSpec, k: int) -> float:
    """Stepsize alpha_k at 1-based iteration ``k``."""
    _check_iteration(spec, k)
    if spec.kind == CYCLICAL:
        c = spec.cycle_length
        return spec.alpha0 / 2.0 * (math.cos(math.pi * ((k - 1) % c) / c) + 1.0)
    if spec.kind == POLYNOMIAL:
        return spec.decay_a * (spec.decay_b + k) ** (-spec.decay_gamma)
    return spec.alpha0


def cycle_position(spec: ScheduleSpec, k: int) -> float:
    """Completed proportion r(k) = mod(k-1, ceil(K/M)) / ceil(K/M) of the cycle."""
    if spec.kind != CYCLICAL:
        raise InvalidScheduleError(
            f"cycle_position requires a cyclical schedule, got kind={spec.kind!r}")
    _check_iteration(spec, k)
    c = spec.cycle_length
    return ((k - 1) % c) / c


def stage(spec: ScheduleSpec, k: int) -> Stage:
    """Exploration iff r(k) < beta, else Sampling.

    Only defined for cyclical schedules; the run drivers treat every
    iteration of a non-cyclical schedule as Sampling without calling this.
    """
    if spec.kind != CYCLICAL:
        raise InvalidScheduleError(
            f"stage requires a cyclical schedule, got kind={spec.kind!r}")
    if cycle_position(spec, k) < spec.beta:
        return Stage.EXPLORATION
    return Stage.SAMPLING


def cycle_index(spec: ScheduleSpec, k: int) -> int:
    """1-based cycle index m = 1 + floor((k-1) / ceil(K/M)), in [1, M]."""
    if spec.kind != CYCLICAL:
        raise InvalidScheduleError(
            f"cycle_index requires a cyclical schedule, got kind={spec.kind!r}")
    _check_iteration(spec, k)
    return 1 + (k - 1) // spec.cycle_length


def sampling_iterations_per_cycle(spec: ScheduleSpec) -> int:
    """Number of sampling-stage iterations in one full cycle."""
    if spec.kind != CYCLICAL:
        raise InvalidScheduleError(
            f"sampling_iterations_per_cycle requires a cyclical schedule, "
            f"got kind={spec.kind!r}")
    c = spec.cycle_length
    # Count with the same predicate stage() uses so the two never disagree.
    return sum(1 for j in range(c) if not j / c < spec.beta)
