"""Conditioning a branching population on extinction.

Conditioning on extinction reweights every career by q to the number of
children (per type) and divides by q of the mother's type.  All three
model variants stay inside their own family under this change of
measure, so the conditioned process is again an ordinary model:

* tabular laws keep their outcomes with probabilities p(k) q**k / q_s;
* a geometric child count with parameter p becomes geometric with
  parameter p / q_s (equivalently 1 - (1 - p) q_c, the same number);
* age-dependent splitting tilts the life-length law to G(u) w(u) with
  w(u) the per-age reweighting factor, and the split pmfs to
  p_k(u) q**(k-1) / w(u); when the split does not depend on age, w is
  identically 1 and the life-length law is untouched;
* composed careers keep their age law, tilt the count law through
  w = sum_c pi_c q_c, and bias the child-type marks to pi_c q_c / w.

The same conditioning is available without any algebra as rejection
sampling (accept a career with probability q**children), which is kept
as an independent route so the closed forms can be checked against it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .extinction import solve_q
from .kernels import (
    BGWModel,
    GeneralLife,
    GeneralModel,
    GeometricOffspring,
    LifeCareer,
    Model,
    SevastyanovModel,
    TabularOffspring,
    TypeId,
)

PMF_DUST_TOL = 1e-9
DEFAULT_MAX_ATTEMPTS = 10_000_000


class ConditioningUndefinedError(ValueError):
    """Conditioning on extinction needs every type to be able to die out."""


def _renormalized(probs: Sequence[float], what: str) -> tuple[float, ...]:
    """Scrub float dust off a pmf that must sum to 1 by construction.

    A real discrepancy means the supplied q was not the extinction
    probability of the model being tilted, and deserves a loud failure.
    """
    total = math.fsum(probs)
    if abs(total - 1.0) > PMF_DUST_TOL:
        raise ValueError(
            f"{what} sums to {total!r}; is q the minimal fixed point of this model?"
        )
    return tuple(p / total for p in probs)


def _check_q(model: Model, q: Sequence[float] | None) -> tuple[float, ...]:
    if q is None:
        q = solve_q(model).q
    q = tuple(float(v) for v in q)
    if len(q) != model.m:
        raise ValueError(f"q has {len(q)} entries for {model.m} types")
    if any(not (0.0 <= v <= 1.0) for v in q):
        raise ValueError("q entries must lie in [0, 1]")
    zero = tuple(s for s, v in enumerate(q) if v == 0.0)
    if zero:
        raise ConditioningUndefinedError(
            f"types {zero} never die out; conditioning on extinction is undefined"
        )
    return q


# == per-law tilts ======================================================


def tilt_tabular(law: TabularOffspring, q: Sequence[float], s: TypeId) -> TabularOffspring:
    """p(k) -> p(k) q**k / q_s over the same outcomes."""
    raw = [
        p * math.prod(qi ** ki for qi, ki in zip(q, k)) / q[s]
        for k, p in zip(law.outcomes, law.probs)
    ]
    return TabularOffspring(law.m, law.outcomes, _renormalized(raw, "tilted offspring pmf"))


def tilt_geometric(law: GeometricOffspring, q: Sequence[float], s: TypeId) -> GeometricOffspring:
    """geometric(p) -> geometric(p / q_s); same child type."""
    p_new = law.p / q[s]
    if not (0.0 < p_new <= 1.0):
        raise ValueError(
            f"tilted geometric parameter {p_new!r} is outside (0, 1]; "
            "is q the minimal fixed point of this model?"
        )
    return GeometricOffspring(law.m, p_new, law.child_type)


def _tilt_split_pmf(
    pmf: Sequence[tuple[int, float]], q_root: float
) -> tuple[tuple[tuple[int, float], ...], float]:
    """Tilt one splitting pmf; returns (p_k q**(k-1) / w, w)."""
    w = math.fsum(p * q_root ** (k - 1) for k, p in pmf)
    tilted = tuple((k, p * q_root ** (k - 1) / w) for k, p in pmf)
    return tilted, w


def _tilt_sevastyanov(model: SevastyanovModel, q_root: float) -> SevastyanovModel:
    if model.exp_rate is not None:
        tilted, _w = _tilt_split_pmf(model.split_const, q_root)
        probs = _renormalized([p for _k, p in tilted], "tilted splitting pmf")
        return replace(
            model, split_const=tuple((k, p) for (k, _), p in zip(tilted, probs))
        )
    new_atoms = []
    new_splits = []
    for (age, g_mass), pmf in zip(model.life_atoms, model.split_by_age):
        tilted, w = _tilt_split_pmf(pmf, q_root)
        probs = _renormalized([p for _k, p in tilted], f"tilted splitting pmf at age {age}")
        new_atoms.append((age, g_mass * w))
        new_splits.append(tuple((k, p) for (k, _), p in zip(tilted, probs)))
    masses = _renormalized([mass for _a, mass in new_atoms], "tilted life-length pmf")
    return replace(
        model,
        life_atoms=tuple((a, mass) for (a, _), mass in zip(new_atoms, masses)),
        split_by_age=tuple(new_splits),
    )


def _tilt_general_life(life: GeneralLife, q: Sequence[float], q_s: float) -> GeneralLife:
    w = math.fsum(p * qc for p, qc in zip(life.type_probs, q))
    type_probs = _renormalized(
        [p * qc / w for p, qc in zip(life.type_probs, q)], "tilted child-type pmf"
    )
    if life.count_pmf is not None:
        raw = [p * w ** k / q_s for k, p in life.count_pmf]
        probs = _renormalized(raw, "tilted count pmf")
        counts = tuple((k, p) for (k, _), p in zip(life.count_pmf, probs))
        return replace(life, count_pmf=counts, type_probs=type_probs)
    p_new = 1.0 - (1.0 - life.count_geometric_p) * w
    return replace(life, count_geometric_p=p_new, type_probs=type_probs)


# == whole-model tilt ===================================================


@dataclass(frozen=True)
class TiltedModel:
    """A model together with its extinction-conditioned twin.

    The tilted twin is a plain model of the same variant, so it runs in
    the same engine, serializes through the same config format, and can
    be compared head on with the rejection route.  Sampler calls are
    delegated to the twin, so a TiltedModel can be passed anywhere a
    model is expected and behaves as the conditioned process.
    """

    base: Model
    q: tuple[float, ...]
    model: Model

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def variant(self) -> str:
        return self.model.variant

    def sample_career(self, s: TypeId, rng: np.random.Generator) -> LifeCareer:
        return self.model.sample_career(s, rng)

    def sample_careers(self, s: TypeId, n: int, rng: np.random.Generator) -> list[LifeCareer]:
        return self.model.sample_careers(s, n, rng)

    def offspring_pgf(self, s: TypeId, z: Sequence[float]) -> float:
        return self.model.offspring_pgf(s, z)

    def offspring_pgf_gradient(self, s: TypeId, z: Sequence[float]) -> np.ndarray:
        return self.model.offspring_pgf_gradient(s, z)


def tilt_model(model: Model, q: Sequence[float] | None = None) -> TiltedModel:
    """Build the extinction-conditioned twin of a model.

    q defaults to the solved extinction probabilities; passing exact
    values (when known in closed form) avoids the solver's last-step
    dust.  Models with a type that cannot die out are rejected.
    """
    q = _check_q(model, q)
    if isinstance(model, BGWModel):
        laws = tuple(
            tilt_tabular(law, q, s) if isinstance(law, TabularOffspring)
            else tilt_geometric(law, q, s)
            for s, law in enumerate(model.laws)
        )
        twin: Model = replace(model, laws=laws)
    elif isinstance(model, SevastyanovModel):
        twin = _tilt_sevastyanov(model, q[0])
    elif isinstance(model, GeneralModel):
        twin = replace(
            model,
            lives=tuple(_tilt_general_life(life, q, q[s]) for s, life in enumerate(model.lives)),
        )
    else:
        raise TypeError(f"cannot tilt {type(model).__name__}")
    return TiltedModel(base=model, q=q, model=twin)


# == change-of-measure weights ==========================================


def log_rn_weight(q: Sequence[float], root_type: TypeId, member_types: Sequence[TypeId]) -> float:
    """log of the reweighting factor attached to a stopping line.

    The factor is prod_{x in line} q_{type(x)} / q_root; its mean over
    runs of the unconditioned process equals 1, which is what makes
    importance sampling against the conditioned process consistent.
    """
    q_root = q[root_type]
    if q_root == 0.0:
        raise ConditioningUndefinedError(
            f"root type {root_type} never dies out; the weight is undefined"
        )
    total = -math.log(q_root)
    for s in member_types:
        if q[s] == 0.0:
            return -math.inf
        total += math.log(q[s])
    return total


def rn_weight(q: Sequence[float], root_type: TypeId, member_types: Sequence[TypeId]) -> float:
    return math.exp(log_rn_weight(q, root_type, member_types))


# == rejection route ====================================================


class RejectionSampler:
    """Exact conditioned careers without any algebra.

    Careers are drawn from the base model and accepted with probability
    q**children; the accepted law is the conditioned one, and the
    long-run acceptance rate from type s estimates q_s.  Kept separate
    from the closed-form tilt so the two can cross-check each other.
    """

    def __init__(self, model: Model, q: Sequence[float] | None = None,
                 max_attempts: int = DEFAULT_MAX_ATTEMPTS):
        self.model = model
        self.q = _check_q(model, q)
        self.max_attempts = max_attempts
        self.attempts = 0
        self.accepts = 0

    @property
    def m(self) -> int:
        return self.model.m

    @property
    def acceptance_rate(self) -> float:
        return self.accepts / self.attempts if self.attempts else math.nan

    def sample_career(self, s: TypeId, rng: np.random.Generator) -> LifeCareer:
        for _ in range(self.max_attempts):
            career = self.model.sample_career(s, rng)
            self.attempts += 1
            accept = math.prod(self.q[ev.child_type] for ev in career.births)
            if rng.random() < accept:
                self.accepts += 1
                return career
        raise RuntimeError(
            f"no career accepted from type {s} in {self.max_attempts} attempts "
            f"(acceptance rate so far {self.acceptance_rate:.3g})"
        )

    def sample_careers(self, s: TypeId, n: int, rng: np.random.Generator) -> list[LifeCareer]:
        return [self.sample_career(s, rng) for _ in range(n)]
