"""Distribution fitting, CDF tables and Markov transition-matrix estimation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

N_STATES = 4


@dataclass
class FitResult:
    """Fitted distribution: ``family`` is normal, lognormal or linear-regression."""

    family: str
    params: dict
    goodness: float = float("nan")
    residuals: np.ndarray | None = field(default=None, repr=False)
    n_samples: int = 0

    def __post_init__(self) -> None:
        if self.params.get("sigma", 0.0) < 0:
            raise ValueError("sigma must be non-negative")

    @property
    def mu(self) -> float:
        return self.params["mu"]

    @property
    def sigma(self) -> float:
        return self.params["sigma"]

    @property
    def linear_mean(self) -> float:
        """Mean on the linear scale (``exp(mu + sigma^2/2)`` for lognormal fits)."""
        if self.family == "lognormal":
            return float(np.exp(self.mu + self.sigma**2 / 2))
        return self.mu


def fit_distribution(samples, family: str = "normal") -> FitResult:
    """Method-of-moments fit on the (log-)samples; goodness is the KS statistic."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < 2:
        raise ValueError("need at least two samples")
    if family == "lognormal":
        if np.any(x <= 0):
            raise ValueError("lognormal fit requires strictly positive samples")
        x = np.log(x)
    elif family != "normal":
        raise ValueError(f"unsupported family {family!r}")
    mu, sigma = float(np.mean(x)), float(np.std(x))
    if sigma > 0:
        ks = float(stats.kstest(x, "norm", args=(mu, sigma)).statistic)
    else:
        ks = 0.0
    return FitResult(family, {"mu": mu, "sigma": sigma}, goodness=ks, n_samples=int(x.size))


def cdf_table(samples, n_rows: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """``(probability, value)`` pairs at ``n_rows`` mid-point quantiles."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    prob = (np.arange(n_rows) + 0.5) / n_rows
    return prob, np.quantile(x, prob)


MEASURED_TRANSITION_MATRIX = np.array(
    [
        [0.66, 0.16, 0.12, 0.06],
        [0.28, 0.02, 0.53, 0.17],
        [0.36, 0.47, 0.05, 0.12],
        [0.16, 0.13, 0.19, 0.52],
    ]
)


def check_transition_matrix(matrix, tol: float = 1e-9) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (N_STATES, N_STATES):
        raise ValueError("transition matrix must be 4x4")
    if np.any(m < 0) or np.any(m > 1):
        raise ValueError("transition probabilities must lie in [0, 1]")
    if not np.allclose(m.sum(axis=1), 1.0, atol=tol, rtol=0.0):
        raise ValueError("transition matrix rows must sum to 1")
    return m


def classify_state(n_births, n_deaths):
    """Birth/death state index: 0 none, 1 births only, 2 deaths only, 3 both."""
    return (np.asarray(n_births) > 0).astype(int) + 2 * (np.asarray(n_deaths) > 0).astype(int)


def sample_markov_states(matrix, n_steps: int, rng: np.random.Generator, initial: int = 0) -> np.ndarray:
    """Sample a state sequence of length ``n_steps`` (the initial state first)."""
    m = check_transition_matrix(matrix)
    cdf = np.cumsum(m, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n_steps - 1) if n_steps > 1 else np.empty(0)
    states = np.empty(n_steps, dtype=int)
    states[0] = initial
    for k in range(1, n_steps):
        states[k] = int(np.searchsorted(cdf[states[k - 1]], u[k - 1], side="right"))
    return states


@dataclass
class MarkovFit:
    matrix: np.ndarray
    counts: np.ndarray
    unobserved_rows: tuple[int, ...]


def fit_markov(states=None, *, births=None, deaths=None) -> MarkovFit:
    """Estimate the 4-state transition matrix from a state sequence.

    Pass either ``states`` directly or per-step ``births`` / ``deaths`` counts
    to be classified. Rows never departed from are returned uniform and
    listed in ``unobserved_rows``.
    """
    if states is None:
        if births is None or deaths is None:
            raise ValueError("need states or births and deaths")
        states = classify_state(births, deaths)
    s = np.asarray(states, dtype=int)
    if s.size < 2:
        raise ValueError("need at least two steps")
    counts = np.zeros((N_STATES, N_STATES), dtype=np.int64)
    np.add.at(counts, (s[:-1], s[1:]), 1)
    rows = counts.sum(axis=1, keepdims=True)
    empty = tuple(int(i) for i in np.flatnonzero(rows[:, 0] == 0))
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(rows > 0, counts / np.maximum(rows, 1), 1.0 / N_STATES)
    return MarkovFit(matrix, counts, empty)


def stationary_distribution(matrix) -> np.ndarray:
    """Left eigenvector of the transition matrix for eigenvalue 1."""
    m = check_transition_matrix(matrix)
    w, v = np.linalg.eig(m.T)
    vec = np.real(v[:, np.argmin(np.abs(w - 1.0))])
    return vec / vec.sum()
