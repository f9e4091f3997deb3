"""Event-driven population runs.

A run starts from one root individual and hands every newborn a career
drawn from the sampler for her type.  Births are processed in (birth
time, lexicographic label) order; ties share a batch so career draws can
be vectorized per type, and the order makes runs deterministic for a
given stream.

A *sampler* is anything with an ``m`` attribute and
``sample_career(s, rng)`` / ``sample_careers(s, n, rng)`` methods: a
model from :mod:`branchtilt.kernels`, or a tilted model or rejection
sampler from :mod:`branchtilt.tilt`.

Censoring: a run stops when no births are pending (extinct), or when the
cap on realised individuals would be exceeded, the horizon is reached
(births at or after the horizon are not realised), or an optional
generation limit drops scheduled births.  Censored runs carry
``extinct=False`` and a ``stop_reason`` and are never silently mixed
into extinction statistics.

Memory: full pedigrees are not retained by default.  The snapshot keeps
(label, type, birth time) for individuals up to ``snapshot_depth``
generations (default 8; ``None`` retains everything); per-generation
type counts are always kept in full.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass
from heapq import heappop, heappush
from math import ceil
from typing import Iterator

import numpy as np

from .pedigree import Label, ROOT, sort_key
from .kernels import TypeId

DEFAULT_CAP = 10_000
DEFAULT_SNAPSHOT_DEPTH = 8


class SnapshotDepthError(ValueError):
    """Raised when a line is requested beyond the retained snapshot."""


@dataclass(frozen=True)
class PopulationOutcome:
    """What one run produced.

    extinction_time is the last activity of the realised population, the
    max over individuals of birth time plus life span (or last birth age
    when no life span is tracked); it is None unless the run is extinct.
    line_snapshots holds (label, type, birth time) for every realised
    individual of generation <= snapshot_depth, in processing order.
    """

    root_type: TypeId
    extinct: bool
    censored: bool
    stop_reason: str  # "extinct" | "cap" | "horizon" | "generation"
    total_progeny: int
    extinction_time: float | None
    generation_counts: tuple[tuple[int, ...], ...]
    line_snapshots: tuple[tuple[Label, TypeId, float], ...]
    snapshot_depth: int | None


def stream_for(seed: int, replicate: int) -> np.random.Generator:
    """The replicate's own stream, derived deterministically from
    (seed, replicate); distinct replicates never share state."""
    return np.random.default_rng(np.random.SeedSequence([seed, replicate]))


def run_population(
    sampler,
    root_type: TypeId,
    *,
    cap: int = DEFAULT_CAP,
    horizon: float | None = None,
    seed: int | None = None,
    rng: np.random.Generator | None = None,
    snapshot_depth: int | None = DEFAULT_SNAPSHOT_DEPTH,
    max_generation: int | None = None,
) -> PopulationOutcome:
    """Run one population to extinction or censoring.

    Exactly one of seed / rng should be given; seed=None with rng=None
    draws fresh OS entropy (fine interactively, never in tests).
    """
    if rng is None:
        rng = np.random.default_rng(
            np.random.SeedSequence([seed]) if seed is not None else None
        )
    if cap < 1:
        raise ValueError("cap must be at least 1")
    if not (0 <= root_type < sampler.m):
        raise ValueError(f"root type {root_type} out of range")

    m = sampler.m
    heap: list[tuple[float, Label, TypeId]] = [(0.0, ROOT, root_type)]
    gen_counts: list[list[int]] = []
    snapshot: list[tuple[Label, TypeId, float]] = []
    realised = 0
    max_death = 0.0
    stop: str | None = None
    dropped_births = False

    while heap:
        t0 = heap[0][0]
        if horizon is not None and t0 >= horizon:
            stop = "horizon"
            break
        batch: list[tuple[float, Label, TypeId]] = []
        while heap and heap[0][0] == t0:
            batch.append(heappop(heap))
        # careers drawn per type in first-appearance (label) order
        careers: list = [None] * len(batch)
        by_type: dict[TypeId, list[int]] = {}
        for i, (_t, _lab, s) in enumerate(batch):
            by_type.setdefault(s, []).append(i)
        for s, idxs in by_type.items():
            for i, career in zip(idxs, sampler.sample_careers(s, len(idxs), rng)):
                careers[i] = career
        for (t, label, s), career in zip(batch, careers):
            if realised >= cap:
                stop = "cap"
                break
            realised += 1
            g = len(label)
            while len(gen_counts) <= g:
                gen_counts.append([0] * m)
            gen_counts[g][s] += 1
            if snapshot_depth is None or g <= snapshot_depth:
                snapshot.append((label, s, t))
            births = career.births
            if births:
                span = career.life_span
                death = t + (span if span is not None else births[-1].age)
                if max_generation is None or g < max_generation:
                    for k, ev in enumerate(births, 1):
                        heappush(heap, (t + ev.age, label + (k,), ev.child_type))
                else:
                    dropped_births = True
            else:
                death = t + (career.life_span or 0.0)
            if death > max_death:
                max_death = death
        if stop is not None:
            break

    if stop is None and dropped_births:
        stop = "generation"
    extinct = stop is None
    return PopulationOutcome(
        root_type=root_type,
        extinct=extinct,
        censored=not extinct,
        stop_reason="extinct" if extinct else stop,
        total_progeny=realised,
        extinction_time=max_death if extinct else None,
        generation_counts=tuple(tuple(row) for row in gen_counts),
        line_snapshots=tuple(snapshot),
        snapshot_depth=snapshot_depth,
    )


def _run_chunk(payload) -> list[PopulationOutcome]:
    sampler, root_type, start, count, cap, horizon, seed, depth, max_gen = payload
    return [
        run_population(
            sampler, root_type, cap=cap, horizon=horizon,
            rng=stream_for(seed, r), snapshot_depth=depth, max_generation=max_gen,
        )
        for r in range(start, start + count)
    ]


def run_replicates(
    sampler,
    root_type: TypeId,
    n: int,
    *,
    cap: int = DEFAULT_CAP,
    horizon: float | None = None,
    seed: int = 0,
    snapshot_depth: int | None = DEFAULT_SNAPSHOT_DEPTH,
    max_generation: int | None = None,
    workers: int = 1,
) -> Iterator[PopulationOutcome]:
    """Stream n outcomes; replicate r always uses stream_for(seed, r), so
    the outcome sequence is reproducible bit for bit regardless of
    workers, and aggregation over it is order-independent anyway."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if workers <= 1:
        for r in range(n):
            yield run_population(
                sampler, root_type, cap=cap, horizon=horizon,
                rng=stream_for(seed, r), snapshot_depth=snapshot_depth,
                max_generation=max_generation,
            )
        return
    chunk = min(4096, max(16, ceil(n / (workers * 4))))
    payloads = [
        (sampler, root_type, start, min(chunk, n - start), cap, horizon,
         seed, snapshot_depth, max_generation)
        for start in range(0, n, chunk)
    ]
    with multiprocessing.Pool(workers) as pool:
        for outcomes in pool.imap(_run_chunk, payloads):
            yield from outcomes


# == lines cut from a run ===============================================


def generation_line(outcome: PopulationOutcome, n: int) -> tuple[tuple[Label, TypeId], ...]:
    """The realised generation-n individuals as (label, type), ordered."""
    if n < 0:
        raise ValueError("generation must be nonnegative")
    depth = outcome.snapshot_depth
    if depth is not None and n > depth:
        raise SnapshotDepthError(
            f"generation {n} exceeds the snapshot depth {depth}"
        )
    members = [
        (lab, s) for lab, s, _t in outcome.line_snapshots if len(lab) == n
    ]
    members.sort(key=lambda p: sort_key(p[0]))
    return tuple(members)


def coming_generation_line(
    outcome: PopulationOutcome, t: float
) -> tuple[tuple[Label, TypeId], ...]:
    """The coming generation at time t: realised individuals born after t
    whose mothers were born at or before t (the root counts when t < 0).

    Raises SnapshotDepthError when the line could extend beyond the
    retained snapshot (a retained individual at the boundary depth was
    born at or before t while deeper realised individuals exist).
    """
    depth = outcome.snapshot_depth
    deepest = len(outcome.generation_counts) - 1
    if depth is not None and deepest > depth:
        for lab, _s, bt in outcome.line_snapshots:
            if len(lab) == depth and bt <= t:
                raise SnapshotDepthError(
                    f"coming generation at t={t} may extend beyond depth {depth}"
                )
    birth_time = {lab: bt for lab, _s, bt in outcome.line_snapshots}
    members = []
    for lab, s, bt in outcome.line_snapshots:
        if lab == ROOT:
            if bt > t:
                members.append((lab, s))
        elif bt > t >= birth_time[lab[:-1]]:
            members.append((lab, s))
    members.sort(key=lambda p: sort_key(p[0]))
    return tuple(members)


# == serialization ======================================================


def outcome_record(outcome: PopulationOutcome, replicate: int | None = None) -> dict:
    """JSON-ready dict with fields named as in PopulationOutcome."""
    record: dict = {}
    if replicate is not None:
        record["replicate"] = replicate
    record.update(
        root_type=outcome.root_type,
        extinct=outcome.extinct,
        censored=outcome.censored,
        stop_reason=outcome.stop_reason,
        total_progeny=outcome.total_progeny,
        extinction_time=outcome.extinction_time,
        generation_counts=[list(row) for row in outcome.generation_counts],
        line_snapshots=[
            [list(lab), s, bt] for lab, s, bt in outcome.line_snapshots
        ],
        snapshot_depth=outcome.snapshot_depth,
    )
    return record
