"""Target distributions: the differentiable interface and concrete targets.

A :class:`TargetModel` exposes the potential ``U(theta)`` (negative log
posterior), its full-data gradient, a minibatch gradient estimate, and the
full-data log-likelihood needed by the per-cycle weighting scheme.

Concrete targets:

* :func:`mixture_target`: a 2D Gaussian mixture on a 5x5 grid (or any
  shared-covariance mixture), evaluated in the log domain.
* :func:`blr_target`: Bayesian logistic regression with a Gaussian prior.
* :func:`gaussian_target`: an isotropic Gaussian with known moments, used
  as an analytic oracle in convergence probes.

Targets are immutable after construction and hold no RNG state; minibatch
index drawing uses the caller's generator via :func:`draw_minibatch`.
"""

from __future__ import annotations

import abc
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CsvParseError(ValueError):
    """Raised on malformed CSV input, naming the offending row/column."""


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _logsumexp(a: np.ndarray) -> float:
    m = np.max(a)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(a - m))))


@dataclass
class Dataset:
    """Numeric feature matrix with optional binary labels."""

    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = ""
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        if self.features.ndim != 2 or self.features.shape[0] < 1:
            raise ValueError("features must be a non-empty 2D array")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (self.features.shape[0],):
                raise ValueError("labels must have one entry per row")
            if not np.all(np.isin(self.labels, (0, 1))):
                raise ValueError("labels must be binary (0/1)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Minibatch:
    """Row indices plus the likelihood rescaling factor N / N'."""

    row_indices: np.ndarray
    scale: float


def draw_minibatch(n_rows: int, batch_size: int,
                   rng: np.random.Generator) -> Minibatch:
    """Draw a fresh uniform minibatch without replacement."""
    if not 1 <= batch_size <= n_rows:
        raise ValueError(
            f"batch_size must be in [1, {n_rows}], got {batch_size}")
    idx = rng.choice(n_rows, size=batch_size, replace=False)
    return Minibatch(row_indices=idx, scale=n_rows / batch_size)


class TargetModel(abc.ABC):
    """Differentiable unnormalized log-posterior.

    ``potential`` is U(theta) = -log p(D|theta) - log p(theta); targets
    without data interpret ``full_log_likelihood`` as the unnormalized log
    density -U so that per-cycle weighting remains well defined.
    """

    dim: int
    n_data: int = 0

    @abc.abstractmethod
    def potential(self, theta: np.ndarray) -> float:
        ...

    @abc.abstractmethod
    def grad_potential_full(self, theta: np.ndarray) -> np.ndarray:
        ...

    def grad_potential_minibatch(self, theta: np.ndarray,
                                 minibatch: Minibatch | None = None) -> np.ndarray:
        # Dataless targets have no gradient noise.
        return self.grad_potential_full(theta)

    @abc.abstractmethod
    def full_log_likelihood(self, theta: np.ndarray) -> float:
        ...


@dataclass(frozen=True)
class GaussianMixtureSpec:
    """Mixture with shared covariance: sum_i weights[i] * N(x | centers[i], cov)."""

    weights: np.ndarray
    centers: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, float))
        object.__setattr__(self, "centers", np.asarray(self.centers, float))
        object.__setattr__(self, "covariance", np.asarray(self.covariance, float))
        if self.weights.ndim != 1 or np.any(self.weights <= 0):
            raise ValueError("weights must be strictly positive")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1 within 1e-12")
        if self.centers.ndim != 2 or self.centers.shape[0] != self.weights.size:
            raise ValueError("centers must be (n_components, dim)")
        d = self.centers.shape[1]
        cov = self.covariance
        if cov.shape != (d, d) or not np.allclose(cov, cov.T):
            raise ValueError("covariance must be a symmetric (dim, dim) matrix")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc


def grid25_mixture() -> GaussianMixtureSpec:
    """Equal-weight 25-component mixture on the {-4,-2,0,2,4}^2 grid, cov 0.03*I."""
    centers = np.array([(x, y) for x in (-4.0, -2.0, 0.0, 2.0, 4.0)
                        for y in (-4.0, -2.0, 0.0, 2.0, 4.0)])
    return GaussianMixtureSpec(weights=np.full(25, 1.0 / 25),
                               centers=centers,
                               covariance=0.03 * np.eye(2))


class MixtureTarget(TargetModel):
    """U(x) = -log sum_i w_i N(x | mu_i, cov), gradients via responsibilities."""

    def __init__(self, spec: GaussianMixtureSpec):
        self.spec = spec
        self.dim = spec.centers.shape[1]
        self._centers = spec.centers
        self._log_weights = np.log(spec.weights)
        chol = np.linalg.cholesky(spec.covariance)
        self._chol = chol
        self._precision = np.linalg.inv(spec.covariance)
        log_det = 2.0 * np.sum(np.log(np.diag(chol)))
        self._log_norm = 0.5 * self.dim * math.log(2.0 * math.pi) + 0.5 * log_det

    def _log_terms(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        diffs = theta - self._centers
        mahal = np.einsum("ij,jk,ik->i", diffs, self._precision, diffs)
        return self._log_weights - 0.5 * mahal - self._log_norm, diffs

    def potential(self, theta: np.ndarray) -> float:
        terms, _ = self._log_terms(np.asarray(theta, float))
        return -_logsumexp(terms)

    def grad_potential_full(self, theta: np.ndarray) -> np.ndarray:
        terms, diffs = self._log_terms(np.asarray(theta, float))
        terms = terms - terms.max()
        resp = np.exp(terms)
        resp /= resp.sum()
        return self._precision @ (resp @ diffs)

    def full_log_likelihood(self, theta: np.ndarray) -> float:
        return -self.potential(theta)

    def log_density(self, points: np.ndarray, chunk: int = 65536) -> np.ndarray:
        """Vectorized log F over rows of ``points``, evaluated in chunks."""
        points = np.atleast_2d(np.asarray(points, float))
        out = np.empty(points.shape[0])
        for lo in range(0, points.shape[0], chunk):
            block = points[lo:lo + chunk]
            diffs = block[:, None, :] - self._centers[None, :, :]
            mahal = np.einsum("nij,jk,nik->ni", diffs, self._precision, diffs)
            terms = self._log_weights - 0.5 * mahal - self._log_norm
            m = terms.max(axis=1)
            out[lo:lo + chunk] = m + np.log(
                np.exp(terms - m[:, None]).sum(axis=1))
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Exact draws: component index ~ weights, then the component Gaussian."""
        comp = rng.choice(self._centers.shape[0], size=n, p=self.spec.weights)
        z = rng.standard_normal((n, self.dim))
        return self._centers[comp] + z @ self._chol.T


def mixture_target(spec: GaussianMixtureSpec) -> MixtureTarget:
    return MixtureTarget(spec)


class LogisticRegressionTarget(TargetModel):
    """Bayesian logistic regression posterior with N(0, prior_variance*I) prior.

    A bias column of ones is appended to the raw features, so ``dim`` is one
    more than the dataset's feature count. Minibatch gradients rescale the
    likelihood term by N / N' so they are unbiased for the full gradient.
    """

    def __init__(self, data: Dataset, prior_variance: float = 100.0):
        if data.labels is None:
            raise ValueError("logistic regression requires labeled data")
        if not prior_variance > 0:
            raise ValueError(f"prior_variance must be > 0, got {prior_variance}")
        self.data = data
        self.prior_variance = float(prior_variance)
        self._x = np.hstack([data.features, np.ones((data.n, 1))])
        self._y = data.labels.astype(float)
        self.n_data = data.n
        self.dim = self._x.shape[1]

    def full_log_likelihood(self, theta: np.ndarray) -> float:
        z = self._x @ np.asarray(theta, float)
        # log sigma(z) = -log(1 + e^-z); log(1 - sigma(z)) = -log(1 + e^z)
        return float(-np.sum(self._y * np.logaddexp(0.0, -z)
                             + (1.0 - self._y) * np.logaddexp(0.0, z)))

    def _log_prior(self, theta: np.ndarray) -> float:
        v = self.prior_variance
        return float(-0.5 * theta @ theta / v
                     - 0.5 * self.dim * math.log(2.0 * math.pi * v))

    def potential(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, float)
        return -self.full_log_likelihood(theta) - self._log_prior(theta)

    def grad_potential_full(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, float)
        resid = sigmoid(self._x @ theta) - self._y
        return self._x.T @ resid + theta / self.prior_variance

    def grad_potential_minibatch(self, theta: np.ndarray,
                                 minibatch: Minibatch | None = None) -> np.ndarray:
        if minibatch is None:
            return self.grad_potential_full(theta)
        theta = np.asarray(theta, float)
        xb = self._x[minibatch.row_indices]
        yb = self._y[minibatch.row_indices]
        resid = sigmoid(xb @ theta) - yb
        return minibatch.scale * (xb.T @ resid) + theta / self.prior_variance


def blr_target(data: Dataset,
               prior_variance: float = 100.0) -> LogisticRegressionTarget:
    return LogisticRegressionTarget(data, prior_variance)


class GaussianTarget(TargetModel):
    """Isotropic Gaussian potential U = ||theta - mean||^2 / (2 variance)."""

    def __init__(self, mean: np.ndarray, variance: float):
        if not variance > 0:
            raise ValueError(f"variance must be > 0, got {variance}")
        self.mean = np.atleast_1d(np.asarray(mean, float))
        self.variance = float(variance)
        self.dim = self.mean.size

    def potential(self, theta: np.ndarray) -> float:
        d = np.asarray(theta, float) - self.mean
        return float(d @ d / (2.0 * self.variance))

    def grad_potential_full(self, theta: np.ndarray) -> np.ndarray:
        return (np.asarray(theta, float) - self.mean) / self.variance

    def full_log_likelihood(self, theta: np.ndarray) -> float:
        return -self.potential(theta)


def gaussian_target(mean, variance: float) -> GaussianTarget:
    return GaussianTarget(mean, variance)


def load_csv(path, has_header: bool = False,
             standardize: bool = False) -> Dataset:
    """Load a numeric CSV whose last column is a binary class label.

    Any two distinct raw label values are accepted; the lexicographically
    smaller one maps to 0. With ``standardize`` each feature column is
    z-scored; constant columns are left unscaled with a warning recorded on
    the returned dataset.
    """
    path = Path(path)
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for i, row in enumerate(reader, start=1):
            if i == 1 and has_header:
                continue
            if row:
                rows.append((i, row))
    if not rows:
        raise CsvParseError(f"{path}: no data rows")
    width = len(rows[0][1])
    if width < 2:
        raise CsvParseError(
            f"{path}: need at least 2 columns (features + label), found {width}")
    feats = np.empty((len(rows), width - 1))
    raw_labels = []
    for out_i, (line_no, row) in enumerate(rows):
        if len(row) != width:
            raise CsvParseError(
                f"{path}: row {line_no}: expected {width} columns, found {len(row)}")
        for j, cell in enumerate(row[:-1]):
            try:
                feats[out_i, j] = float(cell)
            except ValueError as exc:
                raise CsvParseError(
                    f"{path}: row {line_no}, column {j + 1}: "
                    f"could not parse {cell!r} as a number") from exc
        raw_labels.append(row[-1].strip())
    distinct = sorted(set(raw_labels))
    if len(distinct) != 2:
        raise CsvParseError(
            f"{path}: label column must take exactly two distinct values, "
            f"found {distinct}")
    labels = np.array([0 if lab == distinct[0] else 1 for lab in raw_labels])
    warnings_list: list[str] = []
    if standardize:
        means = feats.mean(axis=0)
        sds = feats.std(axis=0)
        for j in range(feats.shape[1]):
            if sds[j] == 0.0:
                warnings_list.append(
                    f"feature column {j + 1} is constant; left unscaled")
            else:
                feats[:, j] = (feats[:, j] - means[j]) / sds[j]
    return Dataset(features=feats, labels=labels, name=path.stem,
                   warnings=warnings_list)


def synth_logistic(n: int, d: int, seed: int) -> Dataset:
    """Synthetic logistic-regression data: x ~ N(0,I), y ~ Bern(sigma(x.theta*))."""
    if n < 10:
        raise ValueError(f"n must be >= 10, got {n}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    rng = np.random.default_rng(seed)
    theta_star = rng.standard_normal(d)
    x = rng.standard_normal((n, d))
    probs = sigmoid(x @ theta_star)
    labels = (rng.random(n) < probs).astype(int)
    return Dataset(features=x, labels=labels,
                   name=f"synth-logistic-n{n}-d{d}-seed{seed}")
