"""Life careers and reproduction models.

A *life career* is what one individual does: a finite list of births, each
at a nondecreasing maternal age and with a child type, plus an optional
life span.  A *model* assigns to every type a career distribution; the
population process grows by handing each newborn a fresh, independent
career drawn from her type's distribution.

Three model variants are supported, all configured from a single JSON
document (see :data:`CONFIG_SCHEMA_DOC` and the README):

``bgw``
    Pure generation counting embedded at unit age: every individual lives
    exactly one time unit and bears all children at age 1.  Offspring laws
    are per-type joint pmfs over child-type count vectors, or the
    parametric single-type ``{"geometric": p}`` family with
    p_k = p (1-p)^k.

``sevastyanov``
    Single type, random life span, reproduction by splitting at death:
    draw a life span u from G, then a child count from a splitting pmf
    that may depend on u.  Life spans are finite discrete in configs; an
    exponential life span is allowed together with an age-independent
    split (the Markov splitting case) and is what the closed-form
    Malthusian checks use.

``general``
    Per-type careers composed from a child-count law, iid child-type
    marks, and an iid birth-age law (fixed, uniform, or exponential ages,
    sorted), with an optional fixed life span.

Careers are always finite: a per-career child cap (default 10^4) turns a
runaway draw into an error rather than a hang.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence, Union

import numpy as np

TypeId = int

DEFAULT_CAREER_CAP = 10_000

# bgw careers are embedded at unit age: life span 1, all births at age 1
UNIT_AGE = 1.0

PMF_SUM_TOL = 1e-12

CONFIG_SCHEMA_DOC = """\
Model config schema (one JSON document):
  {"types": m, "variant": "bgw" | "sevastyanov" | "general", ...}

bgw:         "offspring": list of m laws, each {"pmf": {key: prob}} with
             key = comma-separated child counts per type ("0,2"; a bare
             "2" is accepted when m == 1), or {"geometric": p} (m == 1).
sevastyanov: (types must be 1)
             "life_span": {"kind": "discrete", "pmf": {age: prob}}
                        | {"kind": "exponential", "rate": r}
             "split": {"kind": "by_age", "pmfs": {age: {count: prob}}}
                    | {"kind": "constant", "pmf": {count: prob}}
             (exponential life spans require a constant split)
general:     "lives": list of m entries
             {"count": {"pmf": {count: prob}} | {"geometric": p},
              "child_types": {type_index: prob},
              "ages": {"kind": "fixed", "at": a}
                    | {"kind": "uniform", "low": lo, "high": hi}
                    | {"kind": "exponential", "rate": r},
              "life_span": optional number >= the largest possible age}
optional everywhere: "career_cap": int >= 1 (default 10000).
Probabilities are decimal reals and every pmf must sum to 1 within 1e-12.
"""


class ModelConfigError(ValueError):
    """Raised for structurally invalid model configurations."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class UnsupportedModelError(RuntimeError):
    """Raised when an analytic operation is asked of a model that only
    supports it by simulation."""


class CareerCapError(RuntimeError):
    """Raised when a sampled career would exceed the per-career child cap."""


class BirthEvent(NamedTuple):
    age: float
    child_type: TypeId


class LifeCareer(NamedTuple):
    births: tuple[BirthEvent, ...]
    life_span: float | None


def validate_career(career: LifeCareer) -> None:
    """Raise ValueError unless ages are nondecreasing, nonnegative, and
    within the life span when one is present."""
    last = 0.0
    for ev in career.births:
        if ev.age < last:
            raise ValueError("birth ages must be nondecreasing")
        last = ev.age
    if career.births and career.births[0].age < 0.0:
        raise ValueError("birth ages must be nonnegative")
    if career.life_span is not None:
        if career.life_span < 0.0:
            raise ValueError("life span must be nonnegative")
        if career.births and career.births[-1].age > career.life_span:
            raise ValueError("births after death")


# == offspring laws =====================================================


@dataclass(frozen=True)
class TabularOffspring:
    """Finite joint pmf over child-count vectors (one count per type).

    Outcomes are kept in sorted order so cumulative sampling is
    deterministic for a given stream.
    """

    m: int
    outcomes: tuple[tuple[int, ...], ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.outcomes) != len(self.probs) or not self.outcomes:
            raise ValueError("outcomes and probs must align and be nonempty")
        for k in self.outcomes:
            if len(k) != self.m or any(c < 0 for c in k):
                raise ValueError(f"bad outcome {k!r} for m={self.m}")
        if any(p < 0 for p in self.probs):
            raise ValueError("negative probability")
        if abs(sum(self.probs) - 1.0) > PMF_SUM_TOL:
            raise ValueError(f"pmf sums to {sum(self.probs)!r}, not 1")

    @cached_property
    def _cum(self) -> np.ndarray:
        c = np.cumsum(np.asarray(self.probs, dtype=float))
        c[-1] = 1.0  # guard searchsorted against float dust at the top
        return c

    def sample_indices(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.searchsorted(self._cum, rng.random(n), side="right")

    def sample_index(self, rng: np.random.Generator) -> int:
        return int(np.searchsorted(self._cum, rng.random(), side="right"))

    def support(self) -> Iterator[tuple[tuple[int, ...], float]]:
        return iter(zip(self.outcomes, self.probs))

    def pgf(self, z: Sequence[float]) -> float:
        total = 0.0
        for k, p in zip(self.outcomes, self.probs):
            term = p
            for zi, ki in zip(z, k):
                term *= zi ** ki
            total += term
        return total

    def pgf_gradient(self, z: Sequence[float]) -> np.ndarray:
        grad = np.zeros(self.m)
        for k, p in zip(self.outcomes, self.probs):
            for j in range(self.m):
                if k[j] == 0:
                    continue
                term = p * k[j]
                for i in range(self.m):
                    e = k[i] - 1 if i == j else k[i]
                    if e:
                        term *= z[i] ** e
                grad[j] += term
        return grad

    def mean_vector(self) -> np.ndarray:
        mean = np.zeros(self.m)
        for k, p in zip(self.outcomes, self.probs):
            mean += p * np.asarray(k, dtype=float)
        return mean

    def max_children(self) -> int:
        return max(sum(k) for k in self.outcomes)


@dataclass(frozen=True)
class GeometricOffspring:
    """Geometric child count p_k = p (1-p)^k, k >= 0, all of one type.

    Infinite support: enumeration is unsupported, but the generating
    function, mean, and extinction tilt are closed form.
    """

    m: int
    p: float
    child_type: TypeId = 0

    def __post_init__(self):
        if not (0.0 < self.p <= 1.0):
            raise ValueError("geometric parameter must be in (0, 1]")
        if not (0 <= self.child_type < self.m):
            raise ValueError("child_type out of range")

    def sample_counts(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.geometric(self.p, size=n) - 1

    def support(self) -> Iterator[tuple[tuple[int, ...], float]]:
        raise UnsupportedModelError("geometric offspring has infinite support")

    def pgf(self, z: Sequence[float]) -> float:
        return self.p / (1.0 - (1.0 - self.p) * z[self.child_type])

    def pgf_gradient(self, z: Sequence[float]) -> np.ndarray:
        grad = np.zeros(self.m)
        denom = 1.0 - (1.0 - self.p) * z[self.child_type]
        grad[self.child_type] = self.p * (1.0 - self.p) / (denom * denom)
        return grad

    def mean_vector(self) -> np.ndarray:
        mean = np.zeros(self.m)
        mean[self.child_type] = (1.0 - self.p) / self.p
        return mean


OffspringLaw = Union[TabularOffspring, GeometricOffspring]


# == model variants =====================================================


@dataclass(frozen=True)
class BGWModel:
    """Generation-counting model embedded at unit age."""

    laws: tuple[OffspringLaw, ...]
    career_cap: int = DEFAULT_CAREER_CAP

    variant = "bgw"

    def __post_init__(self):
        if not self.laws:
            raise ValueError("need at least one type")
        for s, law in enumerate(self.laws):
            if law.m != self.m:
                raise ValueError(f"law {s} has m={law.m}, expected {self.m}")
            if isinstance(law, TabularOffspring) and law.max_children() > self.career_cap:
                raise ValueError("tabular outcome exceeds the career cap")

    @property
    def m(self) -> int:
        return len(self.laws)

    @cached_property
    def _career_protos(self) -> tuple[dict, ...]:
        # per type: outcome index (tabular) or child count (geometric)
        # mapped to an immutable career, shared across individuals
        protos: list[dict] = []
        for law in self.laws:
            table: dict = {}
            if isinstance(law, TabularOffspring):
                for i, k in enumerate(law.outcomes):
                    births = tuple(
                        BirthEvent(UNIT_AGE, t) for t in range(self.m) for _ in range(k[t])
                    )
                    table[i] = LifeCareer(births, UNIT_AGE)
            protos.append(table)
        return tuple(protos)

    def _geom_career(self, s: TypeId, count: int) -> LifeCareer:
        table = self._career_protos[s]
        career = table.get(count)
        if career is None:
            law = self.laws[s]
            births = tuple(BirthEvent(UNIT_AGE, law.child_type) for _ in range(count))
            career = LifeCareer(births, UNIT_AGE)
            table[count] = career
        return career

    def sample_career(self, s: TypeId, rng: np.random.Generator) -> LifeCareer:
        law = self.laws[s]
        if isinstance(law, TabularOffspring):
            return self._career_protos[s][law.sample_index(rng)]
        count = int(rng.geometric(law.p)) - 1
        if count > self.career_cap:
            raise CareerCapError(f"career with {count} children exceeds cap {self.career_cap}")
        return self._geom_career(s, count)

    def sample_careers(self, s: TypeId, n: int, rng: np.random.Generator) -> list[LifeCareer]:
        if n == 1:
            return [self.sample_career(s, rng)]
        law = self.laws[s]
        if isinstance(law, TabularOffspring):
            protos = self._career_protos[s]
            return [protos[i] for i in law.sample_indices(n, rng)]
        counts = law.sample_counts(n, rng)
        if counts.max(initial=0) > self.career_cap:
            raise CareerCapError(f"career exceeds cap {self.career_cap}")
        return [self._geom_career(s, int(c)) for c in counts]

    def offspring_pgf(self, s: TypeId, z: Sequence[float]) -> float:
        return self.laws[s].pgf(z)

    def offspring_pgf_gradient(self, s: TypeId, z: Sequence[float]) -> np.ndarray:
        return self.laws[s].pgf_gradient(z)

    def offspring_support(self, s: TypeId) -> Iterator[tuple[tuple[int, ...], float]]:
        return self.laws[s].support()

    def has_offspring_support(self, s: TypeId) -> bool:
        return isinstance(self.laws[s], TabularOffspring)


@dataclass(frozen=True)
class SevastyanovModel:
    """Single type, splitting at a random life span, split law may depend
    on the attained age."""

    life_atoms: tuple[tuple[float, float], ...] = ()  # ((age, prob), ...) sorted
    exp_rate: float | None = None
    # per life atom: ((count, prob), ...); ignored when split_const is set
    split_by_age: tuple[tuple[tuple[int, float], ...], ...] = ()
    split_const: tuple[tuple[int, float], ...] | None = None
    career_cap: int = DEFAULT_CAREER_CAP

    variant = "sevastyanov"
    m = 1

    def __post_init__(self):
        if (self.exp_rate is None) == (not self.life_atoms):
            raise ValueError("exactly one of life_atoms / exp_rate required")
        if self.exp_rate is not None:
            if self.exp_rate <= 0:
                raise ValueError("exponential rate must be positive")
            if self.split_const is None:
                raise ValueError("exponential life spans require a constant split")
        else:
            ages = [u for u, _ in self.life_atoms]
            if sorted(ages) != ages or len(set(ages)) != len(ages):
                raise ValueError("life atoms must be strictly increasing")
            if any(u < 0 for u in ages):
                raise ValueError("life spans must be nonnegative")
            if abs(sum(p for _, p in self.life_atoms) - 1.0) > PMF_SUM_TOL:
                raise ValueError("life-span pmf does not sum to 1")
            if self.split_const is None and len(self.split_by_age) != len(self.life_atoms):
                raise ValueError("split_by_age must cover every life atom")
        for pmf in self._all_split_pmfs():
            if abs(sum(p for _, p in pmf) - 1.0) > PMF_SUM_TOL:
                raise ValueError("split pmf does not sum to 1")
            if any(k < 0 or p < 0 for k, p in pmf):
                raise ValueError("split pmf entries must be nonnegative")
            if max(k for k, _ in pmf) > self.career_cap:
                raise ValueError("split outcome exceeds the career cap")

    def _all_split_pmfs(self) -> Iterator[tuple[tuple[int, float], ...]]:
        if self.split_const is not None:
            yield self.split_const
        else:
            yield from self.split_by_age

    def split_pmf_for_atom(self, atom_index: int) -> tuple[tuple[int, float], ...]:
        if self.split_const is not None:
            return self.split_const
        return self.split_by_age[atom_index]

    @cached_property
    def _life_cum(self) -> np.ndarray:
        c = np.cumsum([p for _, p in self.life_atoms])
        c[-1] = 1.0
        return c

    @cached_property
    def _split_cum(self) -> tuple[np.ndarray, ...]:
        out = []
        n_atoms = len(self.life_atoms) if self.life_atoms else 1
        for a in range(n_atoms):
            pmf = self.split_pmf_for_atom(a)
            c = np.cumsum([p for _, p in pmf])
            c[-1] = 1.0
            out.append(c)
        return tuple(out)

    @cached_property
    def _career_protos(self) -> tuple[tuple[LifeCareer, ...], ...]:
        protos = []
        for a, (u, _) in enumerate(self.life_atoms):
            row = []
            for k, _p in self.split_pmf_for_atom(a):
                row.append(LifeCareer(tuple(BirthEvent(u, 0) for _ in range(k)), u))
            protos.append(tuple(row))
        return tuple(protos)

    @cached_property
    def embedded_offspring(self) -> TabularOffspring:
        """Marginal child-count pmf with the age integrated out."""
        acc: dict[int, float] = {}
        if self.exp_rate is not None:
            for k, p in self.split_const:  # type: ignore[union-attr]
                acc[k] = acc.get(k, 0.0) + p
        else:
            for a, (_u, g) in enumerate(self.life_atoms):
                for k, p in self.split_pmf_for_atom(a):
                    acc[k] = acc.get(k, 0.0) + g * p
        outcomes = tuple((k,) for k in sorted(acc))
        probs = tuple(acc[k] for k in sorted(acc))
        return TabularOffspring(1, outcomes, probs)

    def sample_career(self, s: TypeId, rng: np.random.Generator) -> LifeCareer:
        if self.exp_rate is not None:
            u = rng.exponential(1.0 / self.exp_rate)
            ci = int(np.searchsorted(self._split_cum[0], rng.random(), side="right"))
            k = self.split_const[ci][0]  # type: ignore[index]
            return LifeCareer(tuple(BirthEvent(u, 0) for _ in range(k)), u)
        a = int(np.searchsorted(self._life_cum, rng.random(), side="right"))
        ci = int(np.searchsorted(self._split_cum[a], rng.random(), side="right"))
        return self._career_protos[a][ci]

    def sample_careers(self, s: TypeId, n: int, rng: np.random.Generator) -> list[LifeCareer]:
        if n == 1:
            return [self.sample_career(s, rng)]
        if self.exp_rate is not None:
            us = rng.exponential(1.0 / self.exp_rate, size=n)
            cis = np.searchsorted(self._split_cum[0], rng.random(n), side="right")
            split = self.split_const
            return [
                LifeCareer(tuple(BirthEvent(float(u), 0) for _ in range(split[ci][0])), float(u))  # type: ignore[index]
                for u, ci in zip(us, cis)
            ]
        atom_idx = np.searchsorted(self._life_cum, rng.random(n), side="right")
        draws = rng.random(n)
        protos = self._career_protos
        cums = self._split_cum
        return [
            protos[a][int(np.searchsorted(cums[a], d, side="right"))]
            for a, d in zip(atom_idx, draws)
        ]

    def offspring_pgf(self, s: TypeId, z: Sequence[float]) -> float:
        return self.embedded_offspring.pgf(z)

    def offspring_pgf_gradient(self, s: TypeId, z: Sequence[float]) -> np.ndarray:
        return self.embedded_offspring.pgf_gradient(z)

    def offspring_support(self, s: TypeId) -> Iterator[tuple[tuple[int, ...], float]]:
        return self.embedded_offspring.support()

    def has_offspring_support(self, s: TypeId) -> bool:
        return True


@dataclass(frozen=True)
class GeneralLife:
    """Career composition for one type of the general variant."""

    count_pmf: tuple[tuple[int, float], ...] | None
    count_geometric_p: float | None
    type_probs: tuple[float, ...]
    age_kind: str  # "fixed" | "uniform" | "exponential"
    age_params: tuple[float, ...]
    life_span: float | None = None

    def __post_init__(self):
        if (self.count_pmf is None) == (self.count_geometric_p is None):
            raise ValueError("exactly one of count_pmf / count_geometric_p required")
        if self.count_pmf is not None:
            if abs(sum(p for _, p in self.count_pmf) - 1.0) > PMF_SUM_TOL:
                raise ValueError("count pmf does not sum to 1")
            if any(k < 0 or p < 0 for k, p in self.count_pmf):
                raise ValueError("count pmf entries must be nonnegative")
        elif not (0.0 < self.count_geometric_p <= 1.0):
            raise ValueError("geometric parameter must be in (0, 1]")
        if abs(sum(self.type_probs) - 1.0) > PMF_SUM_TOL:
            raise ValueError("child_types pmf does not sum to 1")
        if any(p < 0 for p in self.type_probs):
            raise ValueError("child_types entries must be nonnegative")
        if self.age_kind == "fixed":
            (at,) = self.age_params
            if at < 0:
                raise ValueError("fixed age must be nonnegative")
            top = at
        elif self.age_kind == "uniform":
            lo, hi = self.age_params
            if not (0 <= lo <= hi):
                raise ValueError("need 0 <= low <= high")
            top = hi
        elif self.age_kind == "exponential":
            (rate,) = self.age_params
            if rate <= 0:
                raise ValueError("age rate must be positive")
            top = math.inf
        else:
            raise ValueError(f"unknown age kind {self.age_kind!r}")
        if self.life_span is not None and self.life_span < top:
            raise ValueError("life span must bound every possible birth age")

    def count_mean(self) -> float:
        if self.count_pmf is not None:
            return sum(k * p for k, p in self.count_pmf)
        p = self.count_geometric_p
        return (1.0 - p) / p

    def count_pgf(self, w: float) -> float:
        if self.count_pmf is not None:
            return sum(p * w ** k for k, p in self.count_pmf)
        p = self.count_geometric_p
        return p / (1.0 - (1.0 - p) * w)

    def count_pgf_prime(self, w: float) -> float:
        if self.count_pmf is not None:
            return sum(p * k * w ** (k - 1) for k, p in self.count_pmf if k)
        p = self.count_geometric_p
        denom = 1.0 - (1.0 - p) * w
        return p * (1.0 - p) / (denom * denom)


@dataclass(frozen=True)
class GeneralModel:
    """Composed careers: count law x iid type marks x iid sorted ages."""

    lives: tuple[GeneralLife, ...]
    career_cap: int = DEFAULT_CAREER_CAP

    variant = "general"

    def __post_init__(self):
        if not self.lives:
            raise ValueError("need at least one type")
        for life in self.lives:
            if len(life.type_probs) != self.m:
                raise ValueError("child_types pmf must cover every type")
            if life.count_pmf is not None and max(k for k, _ in life.count_pmf) > self.career_cap:
                raise ValueError("count outcome exceeds the career cap")

    @property
    def m(self) -> int:
        return len(self.lives)

    @cached_property
    def _count_cums(self) -> tuple[np.ndarray | None, ...]:
        out = []
        for life in self.lives:
            if life.count_pmf is None:
                out.append(None)
            else:
                c = np.cumsum([p for _, p in life.count_pmf])
                c[-1] = 1.0
                out.append(c)
        return tuple(out)

    @cached_property
    def _type_cums(self) -> tuple[np.ndarray, ...]:
        out = []
        for life in self.lives:
            c = np.cumsum(life.type_probs)
            c[-1] = 1.0
            out.append(c)
        return tuple(out)

    def _sample_count(self, s: TypeId, rng: np.random.Generator) -> int:
        life = self.lives[s]
        if life.count_pmf is not None:
            ci = int(np.searchsorted(self._count_cums[s], rng.random(), side="right"))
            return life.count_pmf[ci][0]
        count = int(rng.geometric(life.count_geometric_p)) - 1
        if count > self.career_cap:
            raise CareerCapError(f"career with {count} children exceeds cap {self.career_cap}")
        return count

    def sample_career(self, s: TypeId, rng: np.random.Generator) -> LifeCareer:
        life = self.lives[s]
        x = self._sample_count(s, rng)
        if x == 0:
            return LifeCareer((), life.life_span)
        if life.age_kind == "fixed":
            ages = np.full(x, life.age_params[0])
        elif life.age_kind == "uniform":
            lo, hi = life.age_params
            ages = np.sort(rng.uniform(lo, hi, size=x))
        else:
            ages = np.sort(rng.exponential(1.0 / life.age_params[0], size=x))
        marks = np.searchsorted(self._type_cums[s], rng.random(x), side="right")
        births = tuple(BirthEvent(float(a), int(t)) for a, t in zip(ages, marks))
        return LifeCareer(births, life.life_span)

    def sample_careers(self, s: TypeId, n: int, rng: np.random.Generator) -> list[LifeCareer]:
        return [self.sample_career(s, rng) for _ in range(n)]

    def offspring_pgf(self, s: TypeId, z: Sequence[float]) -> float:
        life = self.lives[s]
        w = sum(p * zi for p, zi in zip(life.type_probs, z))
        return life.count_pgf(w)

    def offspring_pgf_gradient(self, s: TypeId, z: Sequence[float]) -> np.ndarray:
        life = self.lives[s]
        w = sum(p * zi for p, zi in zip(life.type_probs, z))
        return life.count_pgf_prime(w) * np.asarray(life.type_probs)

    def offspring_support(self, s: TypeId) -> Iterator[tuple[tuple[int, ...], float]]:
        life = self.lives[s]
        if self.m == 1 and life.count_pmf is not None:
            return iter(((k,), p) for k, p in life.count_pmf)
        raise UnsupportedModelError(
            "general offspring laws are not enumerable (use the rejection route)"
        )

    def has_offspring_support(self, s: TypeId) -> bool:
        return self.m == 1 and self.lives[s].count_pmf is not None


Model = Union[BGWModel, SevastyanovModel, GeneralModel]


# == module-level operations ============================================


def sample_career(model: Model, s: TypeId, rng: np.random.Generator) -> LifeCareer:
    """Draw one career for an individual of type s."""
    if not (0 <= s < model.m):
        raise ValueError(f"type {s} out of range for m={model.m}")
    return model.sample_career(s, rng)


def offspring_pgf(model: Model, s: TypeId, z: Sequence[float]) -> float:
    """Joint generating function of the child-count vector of type s,
    evaluated at z in [0, 1]^m."""
    if len(z) != model.m:
        raise ValueError("argument dimension mismatch")
    return model.offspring_pgf(s, z)


def offspring_pgf_gradient(model: Model, s: TypeId, z: Sequence[float]) -> np.ndarray:
    if len(z) != model.m:
        raise ValueError("argument dimension mismatch")
    return model.offspring_pgf_gradient(s, z)


def mean_matrix(model: Model) -> np.ndarray:
    """M[s, s'] = expected number of type-s' children of a type-s mother."""
    rows = [model.offspring_pgf_gradient(s, np.ones(model.m)) for s in range(model.m)]
    return np.vstack(rows)


@dataclass(frozen=True)
class ReproAtom:
    time: float
    child_type: TypeId
    mass: float


@dataclass(frozen=True)
class ExpDensityTerm:
    """mass * rate * exp(-rate t) dt worth of type child_type children."""

    rate: float
    child_type: TypeId
    mass: float


@dataclass(frozen=True)
class MeanReproMeasure:
    """Expected reproduction counts by maternal age and child type."""

    m: int
    atoms: tuple[ReproAtom, ...] = ()
    exp_terms: tuple[ExpDensityTerm, ...] = ()

    def total_mass(self) -> np.ndarray:
        total = np.zeros(self.m)
        for a in self.atoms:
            total[a.child_type] += a.mass
        for e in self.exp_terms:
            total[e.child_type] += e.mass
        return total

    def laplace(self, alpha: float) -> float:
        """Total transform sum_i mass_i e^(-alpha t_i) plus the exponential
        terms' mass * rate / (rate + alpha); defined for alpha > -min rate."""
        total = 0.0
        for a in self.atoms:
            total += a.mass * math.exp(-alpha * a.time)
        for e in self.exp_terms:
            if alpha <= -e.rate:
                raise ValueError("transform diverges at this alpha")
            total += e.mass * e.rate / (e.rate + alpha)
        return total

    def min_exp_rate(self) -> float | None:
        return min((e.rate for e in self.exp_terms), default=None)


def mean_reproduction_measure(model: Model, s: TypeId) -> MeanReproMeasure:
    """Mean reproduction measure of a type-s mother: where in her life, and
    in what type, her expected children arrive.

    Only models with analytically placed births support this: bgw (unit
    age), sevastyanov with discrete life spans (births at the life atoms)
    or exponential life (exponential density term), and general lives with
    fixed birth ages.
    """
    if not (0 <= s < model.m):
        raise ValueError(f"type {s} out of range for m={model.m}")
    if isinstance(model, BGWModel):
        mean = model.offspring_pgf_gradient(s, np.ones(model.m))
        atoms = tuple(
            ReproAtom(UNIT_AGE, t, float(mean[t])) for t in range(model.m) if mean[t] > 0
        )
        return MeanReproMeasure(model.m, atoms)
    if isinstance(model, SevastyanovModel):
        if model.exp_rate is not None:
            mean = sum(k * p for k, p in model.split_const)  # type: ignore[union-attr]
            terms = (
                (ExpDensityTerm(model.exp_rate, 0, mean),) if mean > 0 else ()
            )
            return MeanReproMeasure(1, (), terms)
        atoms = []
        for a, (u, g) in enumerate(model.life_atoms):
            mean_at = sum(k * p for k, p in model.split_pmf_for_atom(a))
            if g * mean_at > 0:
                atoms.append(ReproAtom(u, 0, g * mean_at))
        return MeanReproMeasure(1, tuple(atoms))
    life = model.lives[s]
    if life.age_kind != "fixed":
        raise UnsupportedModelError(
            "mean reproduction measure needs analytically placed births"
        )
    total = life.count_mean()
    atoms = tuple(
        ReproAtom(life.age_params[0], t, total * p)
        for t, p in enumerate(life.type_probs)
        if total * p > 0
    )
    return MeanReproMeasure(model.m, atoms)


# == configuration ======================================================


def _parse_prob(value, path: str, violations: list[str]) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        violations.append(f"{path}: probability must be a number")
        return 0.0
    v = float(value)
    if v < 0.0 or v > 1.0 or math.isnan(v):
        violations.append(f"{path}: probability must be in [0, 1]")
        return 0.0
    return v


def _check_pmf_sum(total: float, path: str, violations: list[str]) -> None:
    if abs(total - 1.0) > PMF_SUM_TOL:
        violations.append(f"{path}: probabilities sum to {total!r} (expected 1 within 1e-12)")


def _parse_count_key(key: str, path: str, violations: list[str]) -> int | None:
    try:
        k = int(key)
    except (TypeError, ValueError):
        violations.append(f"{path}: count key {key!r} is not an integer")
        return None
    if k < 0:
        violations.append(f"{path}: count key {key!r} is negative")
        return None
    return k


def _parse_vector_key(key: str, m: int, path: str, violations: list[str]) -> tuple[int, ...] | None:
    parts = key.split(",") if isinstance(key, str) else None
    if parts is None:
        violations.append(f"{path}: outcome key {key!r} must be a string")
        return None
    if m == 1 and len(parts) == 1:
        k = _parse_count_key(parts[0].strip(), path, violations)
        return None if k is None else (k,)
    if len(parts) != m:
        violations.append(f"{path}: outcome key {key!r} must list {m} counts")
        return None
    out = []
    for part in parts:
        k = _parse_count_key(part.strip(), path, violations)
        if k is None:
            return None
        out.append(k)
    return tuple(out)


def _parse_age_key(key: str, path: str, violations: list[str]) -> float | None:
    try:
        u = float(key)
    except (TypeError, ValueError):
        violations.append(f"{path}: age key {key!r} is not a number")
        return None
    if u < 0 or math.isnan(u) or math.isinf(u):
        violations.append(f"{path}: age key {key!r} must be finite and nonnegative")
        return None
    return u


def validate_model(config: dict) -> list[str]:
    """Structural validation of a parsed model configuration.

    Returns a list of violations, each prefixed with a path into the
    config; the empty list means the config is valid.
    """
    v: list[str] = []
    if not isinstance(config, dict):
        return ["config: must be a JSON object"]
    m = config.get("types")
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        v.append("types: must be an integer >= 1")
        return v
    variant = config.get("variant")
    if variant not in ("bgw", "sevastyanov", "general"):
        v.append("variant: must be one of bgw, sevastyanov, general")
        return v
    cap = config.get("career_cap", DEFAULT_CAREER_CAP)
    if not isinstance(cap, int) or isinstance(cap, bool) or cap < 1:
        v.append("career_cap: must be an integer >= 1")

    known = {"types", "variant", "career_cap"}
    if variant == "bgw":
        known.add("offspring")
        _validate_bgw(config, m, v)
    elif variant == "sevastyanov":
        known.update(("life_span", "split"))
        if m != 1:
            v.append("types: sevastyanov models are single-type")
        _validate_sevastyanov(config, v)
    else:
        known.add("lives")
        _validate_general(config, m, v)
    for key in config:
        if key not in known:
            v.append(f"{key}: unknown field")
    return v


def _validate_bgw(config: dict, m: int, v: list[str]) -> None:
    laws = config.get("offspring")
    if not isinstance(laws, list) or len(laws) != m:
        v.append(f"offspring: must be a list of {m} laws")
        return
    for s, law in enumerate(laws):
        path = f"offspring[{s}]"
        if not isinstance(law, dict) or len(law) != 1:
            v.append(f"{path}: must be {{'pmf': ...}} or {{'geometric': p}}")
            continue
        if "geometric" in law:
            if m != 1:
                v.append(f"{path}: geometric laws are single-type")
                continue
            p = _parse_prob(law["geometric"], f"{path}.geometric", v)
            if p == 0.0:
                v.append(f"{path}.geometric: parameter must be in (0, 1]")
        elif "pmf" in law:
            pmf = law["pmf"]
            if not isinstance(pmf, dict) or not pmf:
                v.append(f"{path}.pmf: must be a nonempty object")
                continue
            total = 0.0
            for key, prob in pmf.items():
                if _parse_vector_key(key, m, f"{path}.pmf", v) is None:
                    continue
                total += _parse_prob(prob, f"{path}.pmf[{key!r}]", v)
            _check_pmf_sum(total, f"{path}.pmf", v)
        else:
            v.append(f"{path}: must be {{'pmf': ...}} or {{'geometric': p}}")


def _validate_split_pmf(pmf, path: str, v: list[str]) -> None:
    if not isinstance(pmf, dict) or not pmf:
        v.append(f"{path}: must be a nonempty object")
        return
    total = 0.0
    for key, prob in pmf.items():
        if _parse_count_key(key, path, v) is None:
            continue
        total += _parse_prob(prob, f"{path}[{key!r}]", v)
    _check_pmf_sum(total, path, v)


def _validate_sevastyanov(config: dict, v: list[str]) -> None:
    life = config.get("life_span")
    split = config.get("split")
    exponential = False
    atom_keys: list[str] = []
    if not isinstance(life, dict) or life.get("kind") not in ("discrete", "exponential"):
        v.append("life_span.kind: must be 'discrete' or 'exponential'")
    elif life["kind"] == "exponential":
        exponential = True
        rate = life.get("rate")
        if not isinstance(rate, (int, float)) or isinstance(rate, bool) or rate <= 0:
            v.append("life_span.rate: must be a positive number")
        for key in life:
            if key not in ("kind", "rate"):
                v.append(f"life_span.{key}: unknown field")
    else:
        pmf = life.get("pmf")
        if not isinstance(pmf, dict) or not pmf:
            v.append("life_span.pmf: must be a nonempty object")
        else:
            total = 0.0
            for key, prob in pmf.items():
                if _parse_age_key(key, "life_span.pmf", v) is not None:
                    atom_keys.append(key)
                total += _parse_prob(prob, f"life_span.pmf[{key!r}]", v)
            _check_pmf_sum(total, "life_span.pmf", v)
        for key in life:
            if key not in ("kind", "pmf"):
                v.append(f"life_span.{key}: unknown field")

    if not isinstance(split, dict) or split.get("kind") not in ("by_age", "constant"):
        v.append("split.kind: must be 'by_age' or 'constant'")
        return
    if split["kind"] == "constant":
        _validate_split_pmf(split.get("pmf"), "split.pmf", v)
    else:
        if exponential:
            v.append("split.kind: exponential life spans require a constant split")
            return
        pmfs = split.get("pmfs")
        if not isinstance(pmfs, dict):
            v.append("split.pmfs: must be an object keyed by age")
            return
        want = {float(k) for k in atom_keys}
        got = set()
        for key, pmf in pmfs.items():
            u = _parse_age_key(key, "split.pmfs", v)
            if u is not None:
                got.add(u)
            _validate_split_pmf(pmf, f"split.pmfs[{key!r}]", v)
        if atom_keys and want != got:
            v.append("split.pmfs: age keys must match life_span.pmf exactly")


def _validate_general(config: dict, m: int, v: list[str]) -> None:
    lives = config.get("lives")
    if not isinstance(lives, list) or len(lives) != m:
        v.append(f"lives: must be a list of {m} entries")
        return
    for s, life in enumerate(lives):
        path = f"lives[{s}]"
        if not isinstance(life, dict):
            v.append(f"{path}: must be an object")
            continue
        count = life.get("count")
        if not isinstance(count, dict) or len(count) != 1:
            v.append(f"{path}.count: must be {{'pmf': ...}} or {{'geometric': p}}")
        elif "pmf" in count:
            _validate_split_pmf(count["pmf"], f"{path}.count.pmf", v)
        elif "geometric" in count:
            p = _parse_prob(count["geometric"], f"{path}.count.geometric", v)
            if p == 0.0:
                v.append(f"{path}.count.geometric: parameter must be in (0, 1]")
        else:
            v.append(f"{path}.count: must be {{'pmf': ...}} or {{'geometric': p}}")

        marks = life.get("child_types")
        if not isinstance(marks, dict) or not marks:
            v.append(f"{path}.child_types: must be a nonempty object")
        else:
            total = 0.0
            for key, prob in marks.items():
                try:
                    t = int(key)
                except (TypeError, ValueError):
                    v.append(f"{path}.child_types: key {key!r} is not a type index")
                    continue
                if not (0 <= t < m):
                    v.append(f"{path}.child_types: type {t} out of range")
                total += _parse_prob(prob, f"{path}.child_types[{key!r}]", v)
            _check_pmf_sum(total, f"{path}.child_types", v)

        ages = life.get("ages")
        top = None
        if not isinstance(ages, dict) or ages.get("kind") not in ("fixed", "uniform", "exponential"):
            v.append(f"{path}.ages.kind: must be fixed, uniform, or exponential")
        elif ages["kind"] == "fixed":
            at = ages.get("at")
            if not isinstance(at, (int, float)) or isinstance(at, bool) or at < 0:
                v.append(f"{path}.ages.at: must be a nonnegative number")
            else:
                top = float(at)
        elif ages["kind"] == "uniform":
            lo, hi = ages.get("low"), ages.get("high")
            ok = all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in (lo, hi))
            if not ok or not (0 <= lo <= hi):
                v.append(f"{path}.ages: need numbers 0 <= low <= high")
            else:
                top = float(hi)
        else:
            rate = ages.get("rate")
            if not isinstance(rate, (int, float)) or isinstance(rate, bool) or rate <= 0:
                v.append(f"{path}.ages.rate: must be a positive number")
            else:
                top = math.inf

        span = life.get("life_span")
        if span is not None:
            if not isinstance(span, (int, float)) or isinstance(span, bool) or span < 0:
                v.append(f"{path}.life_span: must be a nonnegative number")
            elif top is not None and span < top:
                v.append(f"{path}.life_span: must bound every possible birth age")

        for key in life:
            if key not in ("count", "child_types", "ages", "life_span"):
                v.append(f"{path}.{key}: unknown field")


def model_from_config(config: dict) -> Model:
    """Build a model from a validated config; raises ModelConfigError on
    any violation."""
    violations = validate_model(config)
    if violations:
        raise ModelConfigError(violations)
    try:
        return _build_model(config)
    except ValueError as exc:
        raise ModelConfigError([f"config: {exc}"]) from exc


def _build_model(config: dict) -> Model:
    m = config["types"]
    cap = config.get("career_cap", DEFAULT_CAREER_CAP)
    if config["variant"] == "bgw":
        laws: list[OffspringLaw] = []
        for law in config["offspring"]:
            if "geometric" in law:
                laws.append(GeometricOffspring(m, float(law["geometric"])))
            else:
                entries = sorted(
                    (_parse_vector_key(k, m, "", []), float(p))
                    for k, p in law["pmf"].items()
                )
                laws.append(TabularOffspring(
                    m,
                    tuple(k for k, _ in entries),
                    tuple(p for _, p in entries),
                ))
        return BGWModel(tuple(laws), cap)
    if config["variant"] == "sevastyanov":
        life = config["life_span"]
        split = config["split"]
        split_const = None
        if split["kind"] == "constant":
            split_const = tuple(sorted((int(k), float(p)) for k, p in split["pmf"].items()))
        if life["kind"] == "exponential":
            return SevastyanovModel(
                exp_rate=float(life["rate"]), split_const=split_const, career_cap=cap
            )
        atoms = tuple(sorted((float(k), float(p)) for k, p in life["pmf"].items()))
        by_age: tuple = ()
        if split_const is None:
            table = {float(k): pmf for k, pmf in split["pmfs"].items()}
            by_age = tuple(
                tuple(sorted((int(k), float(p)) for k, p in table[u].items()))
                for u, _ in atoms
            )
        return SevastyanovModel(
            life_atoms=atoms, split_by_age=by_age, split_const=split_const, career_cap=cap
        )
    lives = []
    for entry in config["lives"]:
        count = entry["count"]
        count_pmf = None
        geom = None
        if "pmf" in count:
            count_pmf = tuple(sorted((int(k), float(p)) for k, p in count["pmf"].items()))
        else:
            geom = float(count["geometric"])
        type_probs = [0.0] * m
        for k, p in entry["child_types"].items():
            type_probs[int(k)] = float(p)
        ages = entry["ages"]
        if ages["kind"] == "fixed":
            params = (float(ages["at"]),)
        elif ages["kind"] == "uniform":
            params = (float(ages["low"]), float(ages["high"]))
        else:
            params = (float(ages["rate"]),)
        span = entry.get("life_span")
        lives.append(GeneralLife(
            count_pmf=count_pmf,
            count_geometric_p=geom,
            type_probs=tuple(type_probs),
            age_kind=ages["kind"],
            age_params=params,
            life_span=None if span is None else float(span),
        ))
    return GeneralModel(tuple(lives), cap)


def model_to_config(model: Model) -> dict:
    """Canonical config dict for a model (inverse of model_from_config)."""
    if isinstance(model, BGWModel):
        laws = []
        for law in model.laws:
            if isinstance(law, GeometricOffspring):
                laws.append({"geometric": law.p})
            else:
                key = (lambda k: ",".join(str(c) for c in k)) if model.m > 1 else (
                    lambda k: str(k[0])
                )
                laws.append({"pmf": {key(k): p for k, p in zip(law.outcomes, law.probs)}})
        return {
            "types": model.m, "variant": "bgw",
            "offspring": laws, "career_cap": model.career_cap,
        }
    if isinstance(model, SevastyanovModel):
        if model.exp_rate is not None:
            life: dict = {"kind": "exponential", "rate": model.exp_rate}
        else:
            life = {"kind": "discrete", "pmf": {repr(u): p for u, p in model.life_atoms}}
        if model.split_const is not None:
            split: dict = {"kind": "constant",
                           "pmf": {str(k): p for k, p in model.split_const}}
        else:
            split = {"kind": "by_age", "pmfs": {
                repr(u): {str(k): p for k, p in model.split_pmf_for_atom(a)}
                for a, (u, _) in enumerate(model.life_atoms)
            }}
        return {
            "types": 1, "variant": "sevastyanov",
            "life_span": life, "split": split, "career_cap": model.career_cap,
        }
    lives = []
    for life in model.lives:
        if life.count_pmf is not None:
            count: dict = {"pmf": {str(k): p for k, p in life.count_pmf}}
        else:
            count = {"geometric": life.count_geometric_p}
        if life.age_kind == "fixed":
            ages: dict = {"kind": "fixed", "at": life.age_params[0]}
        elif life.age_kind == "uniform":
            ages = {"kind": "uniform", "low": life.age_params[0], "high": life.age_params[1]}
        else:
            ages = {"kind": "exponential", "rate": life.age_params[0]}
        entry = {
            "count": count,
            "child_types": {str(t): p for t, p in enumerate(life.type_probs) if p},
            "ages": ages,
        }
        if life.life_span is not None:
            entry["life_span"] = life.life_span
        lives.append(entry)
    return {
        "types": model.m, "variant": "general",
        "lives": lives, "career_cap": model.career_cap,
    }


def load_model(source: str | Path | dict) -> Model:
    """Load a model from a JSON file path or an already-parsed dict."""
    if isinstance(source, dict):
        return model_from_config(source)
    path = Path(source)
    try:
        config = json.loads(path.read_text())
    except OSError as exc:
        raise ModelConfigError([f"config: cannot read {path}: {exc}"]) from exc
    except json.JSONDecodeError as exc:
        raise ModelConfigError([f"config: invalid JSON in {path}: {exc}"]) from exc
    return model_from_config(config)
