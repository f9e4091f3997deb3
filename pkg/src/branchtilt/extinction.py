"""Extinction probabilities, analytically and by simulation.

The extinction probability vector q (one entry per starting type) is the
minimal fixed point of the offspring generating system in [0, 1]^m.
Iterating the system from the zero vector climbs monotonically to exactly
that minimal point, which is why :func:`solve_q` starts there and never
anywhere else.

:func:`estimate_q_mc` is the independent route: count dying runs.  A run
that exceeds the individual cap is deliberately counted as non-extinct
(populations that big die out with probability at most q^size, far below
Monte Carlo noise at the default cap); runs stopped by a finite horizon
while still alive and under the cap are genuinely ambiguous and reported
via the ``censored`` fraction instead of being classified.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .kernels import Model, TypeId
from .simulate import DEFAULT_CAP, run_replicates

DEFAULT_TOL = 1e-12
DEFAULT_MAX_ITER = 1_000_000


@dataclass(frozen=True)
class QSolveResult:
    q: tuple[float, ...]
    iterations: int
    residual: float
    converged: bool
    last_step: float

    @property
    def zero_types(self) -> tuple[int, ...]:
        """Types whose progeny cannot die out; tilting cannot start there."""
        return tuple(s for s, v in enumerate(self.q) if v == 0.0)


def solve_q(model: Model, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> QSolveResult:
    """Minimal fixed point of the offspring pgf system, from the zero start.

    Iterates q <- f(q) until the sup-norm step drops below tol; the
    iterates are nondecreasing (checked defensively, float dust aside) and
    bounded by 1, so the limit is the minimal fixed point, the extinction
    probability vector.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = model.m
    q = np.zeros(m)
    step = math.inf
    converged = False
    iterations = 0
    while iterations < max_iter:
        q_next = np.minimum(
            np.array([model.offspring_pgf(s, q) for s in range(m)]), 1.0
        )
        if np.any(q_next < q - 1e-12):
            raise RuntimeError("fixed-point iteration lost monotonicity")
        step = float(np.max(np.abs(q_next - q)))
        q = q_next
        iterations += 1
        if step < tol:
            converged = True
            break
    residual = float(
        max(
            abs(model.offspring_pgf(s, q) - q[s])
            for s in range(m)
        )
    )
    return QSolveResult(
        q=tuple(float(v) for v in q),
        iterations=iterations,
        residual=residual,
        converged=converged,
        last_step=step,
    )


@dataclass(frozen=True)
class QEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    censored: float  # fraction of runs left ambiguous by the horizon
    runs: int
    extinct_runs: int
    cap_hits: int
    confidence: float


def wilson_interval(successes: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need at least one trial")
    if not (0 < confidence < 1):
        raise ValueError("confidence must be in (0, 1)")
    z = float(stats.norm.ppf(0.5 + confidence / 2.0))
    p_hat = successes / n
    denom = 1.0 + z * z / n
    center = (p_hat + z * z / (2 * n)) / denom
    half = z * math.sqrt(p_hat * (1 - p_hat) / n + z * z / (4 * n * n)) / denom
    # at the boundaries center and half cancel exactly; keep the float
    # dust from pushing the interval off the observed proportion
    low = 0.0 if successes == 0 else max(0.0, center - half)
    high = 1.0 if successes == n else min(1.0, center + half)
    return (low, high)


def estimate_q_mc(
    model: Model,
    root_type: TypeId = 0,
    *,
    runs: int,
    cap: int = DEFAULT_CAP,
    horizon: float | None = None,
    seed: int = 0,
    workers: int = 1,
    confidence: float = 0.95,
) -> QEstimate:
    """Monte Carlo extinction probability for one starting type.

    Replicate r uses a stream derived from (seed, r); see
    :func:`branchtilt.simulate.stream_for`.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    extinct = 0
    cap_hits = 0
    horizon_hits = 0
    for outcome in run_replicates(
        model, root_type, runs, cap=cap, horizon=horizon, seed=seed,
        snapshot_depth=0, workers=workers,
    ):
        if outcome.extinct:
            extinct += 1
        elif outcome.stop_reason == "cap":
            cap_hits += 1
        else:
            horizon_hits += 1
    low, high = wilson_interval(extinct, runs, confidence)
    return QEstimate(
        estimate=extinct / runs,
        ci_low=low,
        ci_high=high,
        censored=horizon_hits / runs,
        runs=runs,
        extinct_runs=extinct,
        cap_hits=cap_hits,
        confidence=confidence,
    )
