"""Seeded synthetic instance generators.

All randomness flows through ``numpy.random.Generator`` seeded with PCG64,
so instances are reproducible across runs and platforms for a fixed numpy
major version.  Draw order is documented per generator and never changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import EotError, EotProblem, validate_problem


@dataclass(frozen=True)
class DatasetSpec:
    """Parameters of a synthetic instance.

    ``noise`` is a variance by default; set ``noise_is_std`` to read it as a
    standard deviation instead.  ``None`` picks the per-kind default
    (variance 1 for hypercube support noise, variance 10 for Gaussian cost
    noise).
    """

    kind: str = "fragmented_hypercube"
    n: int = 100
    n_agents: int = 5
    d: int = 10
    m_star: int = 2
    noise: float | None = None
    seed: int = 0
    noise_is_std: bool = False

    def __post_init__(self):
        if self.kind not in ("fragmented_hypercube", "gaussian"):
            raise EotError(f"unknown dataset kind {self.kind!r}")
        if self.n < 1 or self.n_agents < 1:
            raise EotError("n and n_agents must be at least 1")
        if not 1 <= self.m_star <= self.d:
            raise EotError("m_star must lie in [1, d]")

    def noise_std(self, default_variance: float) -> float:
        raw = default_variance if self.noise is None else self.noise
        return float(raw) if self.noise_is_std else math.sqrt(float(raw))


def hypercube_shift(x: np.ndarray, m_star: int) -> np.ndarray:
    """Shift the first m_star coordinates by 2 in the direction of their sign."""
    out = x.copy()
    out[..., :m_star] += 2.0 * np.sign(x[..., :m_star])
    return out


def _sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - y[None, :, :]
    return (diff ** 2).sum(axis=2)


def gen_fragmented_hypercube(spec: DatasetSpec) -> EotProblem:
    """Uniform-hypercube source pushed to a shifted target, one noisy copy per agent.

    Draw order: x support (n, d) uniform on [-1, 1]; y support (n, d) uniform
    then shifted; then for each agent the x noise (n, d) followed by the
    y noise (n, d), all standard normal scaled by the noise level.  Costs are
    squared Euclidean distances between the noisy supports; both marginals
    are uniform.
    """
    if spec.kind != "fragmented_hypercube":
        raise EotError(f"spec kind is {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    x = rng.uniform(-1.0, 1.0, size=(spec.n, spec.d))
    y = hypercube_shift(rng.uniform(-1.0, 1.0, size=(spec.n, spec.d)), spec.m_star)
    std = spec.noise_std(1.0)
    costs = np.empty((spec.n_agents, spec.n, spec.n))
    for k in range(spec.n_agents):
        x_k = x + std * rng.standard_normal((spec.n, spec.d))
        y_k = y + std * rng.standard_normal((spec.n, spec.d))
        costs[k] = _sq_dists(x_k, y_k)
    marginal = np.full(spec.n, 1.0 / spec.n)
    return validate_problem(marginal, marginal, costs)


GAUSSIAN_MEAN_X = np.array([1.0, 1.0])
GAUSSIAN_COV_X = np.array([[10.0, 1.0], [1.0, 10.0]])
GAUSSIAN_MEAN_Y = np.array([2.0, 2.0])
GAUSSIAN_COV_Y = np.array([[1.0, -0.2], [-0.2, 1.0]])


def _gaussian_supports(rng: np.random.Generator, n: int):
    x = rng.multivariate_normal(GAUSSIAN_MEAN_X, GAUSSIAN_COV_X, size=n,
                                method="cholesky")
    y = rng.multivariate_normal(GAUSSIAN_MEAN_Y, GAUSSIAN_COV_Y, size=n,
                                method="cholesky")
    return x, y


def gen_gaussian(spec: DatasetSpec) -> EotProblem:
    """Two planar Gaussian supports with per-agent noisy absolute costs.

    Draw order: x support (n, 2), y support (n, 2) (Cholesky-factor normal
    draws), then one (n, n) cost-noise block per agent.  Each agent's cost is
    |squared Euclidean base cost + noise|; both marginals are uniform.
    """
    if spec.kind != "gaussian":
        raise EotError(f"spec kind is {spec.kind!r}")
    rng = np.random.default_rng(spec.seed)
    x, y = _gaussian_supports(rng, spec.n)
    base = _sq_dists(x, y)
    std = spec.noise_std(10.0)
    costs = np.empty((spec.n_agents, spec.n, spec.n))
    for k in range(spec.n_agents):
        costs[k] = np.abs(base + std * rng.standard_normal((spec.n, spec.n)))
    marginal = np.full(spec.n, 1.0 / spec.n)
    return validate_problem(marginal, marginal, costs)


METRIC_SUITE_ETA = 0.05  # companion regularization for the three-metric instance


def gen_metric_suite(n: int = 4, seed: int = 0) -> EotProblem:
    """Three agents on shared Gaussian supports with three ground metrics.

    Agent costs on the same support pair: Euclidean distance, squared
    Euclidean distance, and the L1 norm raised to the power 1.5.
    """
    rng = np.random.default_rng(seed)
    x, y = _gaussian_supports(rng, n)
    sq = _sq_dists(x, y)
    l1 = np.abs(x[:, None, :] - y[None, :, :]).sum(axis=2)
    costs = np.stack([np.sqrt(sq), sq, l1 ** 1.5])
    marginal = np.full(n, 1.0 / n)
    return validate_problem(marginal, marginal, costs)


def generate(spec: DatasetSpec) -> EotProblem:
    """Dispatch on ``spec.kind``."""
    if spec.kind == "fragmented_hypercube":
        return gen_fragmented_hypercube(spec)
    return gen_gaussian(spec)
