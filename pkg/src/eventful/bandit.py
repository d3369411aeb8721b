"""Bandit subroutines: the testable UCB and the UCB1 / UCBO / EXP3 baselines.

Every policy exposes ``select() -> arm`` and ``update(arm, reward)``. Arms
are 0-based integers and ties are always broken towards the lowest arm id so
trajectories are reproducible.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


class ImmatureStateError(RuntimeError):
    """Gap estimates requested before every arm has been pulled."""


@dataclass
class ArmStats:
    n: int = 0
    x: float = 0.0

    @property
    def mu(self) -> float:
        return self.x / self.n if self.n else 0.0


@dataclass(frozen=True)
class Guess:
    g_plus: frozenset
    g_minus: frozenset


@dataclass(frozen=True)
class GapEstimate:
    delta_hat: np.ndarray
    v_star: int


def ucb_index(stats: ArmStats, t: int, horizon: int, alpha: float = 6.0,
              t0: Optional[int] = None) -> float:
    """Index ``mu + alpha*sqrt(8 ln(t0 + t) / (1 + n))`` with ``t0`` defaulting to the horizon.

    With the defaults this is ``mu + 12*sqrt(2 ln(t + T) / (1 + n))``.
    """
    t0 = horizon if t0 is None else t0
    return stats.mu + alpha * math.sqrt(8.0 * math.log(t0 + t) / (1 + stats.n))


def ucb1_index(mu: float, n: int, t: int) -> float:
    return mu + math.sqrt(8.0 * math.log(t) / n)


def default_L(n_arms: int, eps: float, horizon: int, const: float = 1.0) -> int:
    """Testing-phase length ``ceil(const * n / eps^2 * ln T)``."""
    return math.ceil(const * n_arms / eps**2 * math.log(horizon))


def default_exp3_gamma(n_arms: int, horizon: int) -> float:
    if n_arms < 2:
        return 1.0
    return min(1.0, math.sqrt(n_arms * math.log(n_arms) / ((math.e - 1) * horizon)))


def exp3_distribution(weights: Sequence[float], gamma: float) -> np.ndarray:
    w = np.asarray(weights, dtype=float)
    return (1 - gamma) * w / w.sum() + gamma / len(w)


def _argmax(values: Sequence[float]) -> int:
    best, arm = values[0], 0
    for i in range(1, len(values)):
        if values[i] > best:
            best, arm = values[i], i
    return arm


# ---------------------------------------------------------------------------
# Testable UCB
# ---------------------------------------------------------------------------


class TestableUCB:
    """UCB(alpha, t0) with a round-by-round guess of optimal / eps-suboptimal arms.

    The defaults ``alpha=6``, ``t0=horizon`` give the index
    ``mu + 12*sqrt(2 ln(t + T) / (1 + n))``. The guess compares every arm's
    mean with that of the arm played most often in the last ``ceil(t/2)``
    rounds.
    """

    __test__ = False  # not a pytest class

    def __init__(self, n_arms: int, horizon: int, eps: float = 0.2,
                 alpha: float = 6.0, t0: Optional[int] = None):
        if n_arms < 1:
            raise ValueError("need at least one arm")
        self.n_arms = n_arms
        self.horizon = horizon
        self.eps = eps
        self.alpha = alpha
        self.t0 = horizon if t0 is None else t0
        self._coef = alpha * math.sqrt(8.0)
        self.counts = [0] * n_arms
        self.sums = [0.0] * n_arms
        self.means = [0.0] * n_arms
        self._inv = [1.0] * n_arms  # 1/sqrt(1+n)
        self.t = 0
        self._window: deque = deque()
        self._wcounts = [0] * n_arms

    @property
    def arms(self) -> list[ArmStats]:
        return [ArmStats(n, x) for n, x in zip(self.counts, self.sums)]

    @property
    def play_log(self) -> list[int]:
        """Choices inside the current ``ceil(t/2)`` window, oldest first."""
        return list(self._window)

    def indices(self) -> list[float]:
        bonus = self._coef * math.sqrt(math.log(self.t0 + self.t + 1))
        return [m + bonus * v for m, v in zip(self.means, self._inv)]

    def select(self) -> int:
        # never-pulled arms first; at t0 = 0 the first bonus is zero and would not force this
        if self.t < self.n_arms:
            for i, n in enumerate(self.counts):
                if n == 0:
                    return i
        bonus = self._coef * math.sqrt(math.log(self.t0 + self.t + 1))
        means, inv = self.means, self._inv
        best, arm = means[0] + bonus * inv[0], 0
        for i in range(1, self.n_arms):
            v = means[i] + bonus * inv[i]
            if v > best:
                best, arm = v, i
        return arm

    def update(self, arm: int, reward: float) -> None:
        n = self.counts[arm] + 1
        self.counts[arm] = n
        s = self.sums[arm] + reward
        self.sums[arm] = s
        self.means[arm] = s / n
        self._inv[arm] = 1.0 / math.sqrt(1 + n)
        self.t += 1
        self._window.append(arm)
        self._wcounts[arm] += 1
        if len(self._window) > (self.t + 1) // 2:
            self._wcounts[self._window.popleft()] -= 1

    def most_played_recent(self) -> int:
        if self.t < 1:
            raise ImmatureStateError("no rounds played yet")
        return _argmax(self._wcounts)

    def gap_estimates(self) -> GapEstimate:
        if min(self.counts) == 0:
            raise ImmatureStateError("every arm must be pulled before gaps are estimated")
        v = self.most_played_recent()
        mu = np.array(self.means)
        return GapEstimate(mu[v] - mu, v)

    def guess(self, eps: Optional[float] = None) -> Guess:
        eps = self.eps if eps is None else eps
        d = self.gap_estimates().delta_hat
        return Guess(
            frozenset(int(i) for i in np.flatnonzero(d <= eps / 4)),
            frozenset(int(i) for i in np.flatnonzero(d > eps / 2)),
        )


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


class UCB1:
    """UCB1 with confidence radius ``sqrt(8 ln t / n)``; every arm is tried once first.

    Calling :meth:`reset` at the true event rounds gives the UCBO baseline.
    """

    def __init__(self, n_arms: int):
        self.n_arms = n_arms
        self.reset()

    def reset(self) -> None:
        n = self.n_arms
        self.counts = [0] * n
        self.sums = [0.0] * n
        self.means = [0.0] * n
        self._rad = [0.0] * n  # sqrt(8 / n)
        self.t = 0

    @property
    def arms(self) -> list[ArmStats]:
        return [ArmStats(n, x) for n, x in zip(self.counts, self.sums)]

    def select(self) -> int:
        if self.t < self.n_arms:
            for i, c in enumerate(self.counts):
                if c == 0:
                    return i
        root = math.sqrt(math.log(self.t))
        means, rad = self.means, self._rad
        best, arm = means[0] + root * rad[0], 0
        for i in range(1, self.n_arms):
            v = means[i] + root * rad[i]
            if v > best:
                best, arm = v, i
        return arm

    def update(self, arm: int, reward: float) -> None:
        n = self.counts[arm] + 1
        self.counts[arm] = n
        self.sums[arm] += reward
        self.means[arm] = self.sums[arm] / n
        self._rad[arm] = math.sqrt(8.0 / n)
        self.t += 1


def ucbo_reset(state: UCB1) -> None:
    state.reset()


class EXP3:
    """Exponential weights with uniform mixing ``gamma``.

    Weights are renormalised by their maximum once it exceeds ``1e100``;
    the sampling distribution is unchanged by that rescaling.
    """

    _RENORM = 1e100
    _BLOCK = 4096

    def __init__(self, n_arms: int, horizon: int, rng: np.random.Generator,
                 gamma: Optional[float] = None):
        gamma = default_exp3_gamma(n_arms, horizon) if gamma is None else gamma
        if not 0.0 < gamma <= 1.0 and not (gamma == 0.0 and n_arms == 1):
            raise ValueError("gamma must lie in (0, 1]")
        self.n_arms = n_arms
        self.gamma = gamma
        self.weights = [1.0] * n_arms
        self._rng = rng
        self._draws = rng.random(self._BLOCK)
        self._pos = 0
        self._last_p = 1.0 / n_arms

    def distribution(self) -> np.ndarray:
        return exp3_distribution(self.weights, self.gamma)

    def select(self) -> int:
        if self._pos == self._BLOCK:
            self._draws = self._rng.random(self._BLOCK)
            self._pos = 0
        u = self._draws[self._pos]
        self._pos += 1
        w = self.weights
        g, n = self.gamma, self.n_arms
        scale = (1 - g) / sum(w)
        mix = g / n
        acc = 0.0
        for i in range(n):
            p = w[i] * scale + mix
            acc += p
            if u < acc:
                self._last_p = p
                return i
        self._last_p = w[n - 1] * scale + mix
        return n - 1

    def update(self, arm: int, reward: float) -> None:
        if reward:
            w = self.weights
            w[arm] *= math.exp(self.gamma * (reward / self._last_p) / self.n_arms)
            if w[arm] > self._RENORM:
                top = max(w)
                self.weights = [x / top for x in w]
