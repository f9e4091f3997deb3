"""Statistical checks that the conditioned process is what it claims to be.

Every check here compares two routes to the same quantity and never
trusts a single computation:

* analytic extinction probabilities against Monte Carlo counts;
* the closed-form tilted models against rejection sampling and against
  plain filtering of extinct runs;
* importance-sampling identities (base-measure means of reweighted line
  functionals against conditioned-measure means);
* the conditioned process's own branching property (a child's subtree
  against a fresh population of the child's type);
* subcriticality of the conditioned process, both through the spectral
  radius of its mean matrix and through the decay of generation sizes;
* the Malthusian parameter as the root of the Lotka transform.

Each check returns a TestReport; nothing is asserted in-library so a
failed check can be reported alongside the rest of a suite.
"""

from __future__ import annotations

import math
import time
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .extinction import estimate_q_mc, solve_q
from .kernels import (
    MeanReproMeasure,
    Model,
    TypeId,
    UnsupportedModelError,
    mean_matrix,
    mean_reproduction_measure,
)
from .simulate import DEFAULT_CAP, generation_line, run_replicates
from .tilt import RejectionSampler, rn_weight, tilt_model

P_THRESHOLD = 1e-3
Z_THRESHOLD = 4.0
MIN_EXPECTED = 5.0


@dataclass(frozen=True)
class TestReport:
    """Outcome of one verification check.

    statistic is the check's own scale (chi-square value, z-score, or a
    plain estimate); p_value is None for checks without a null
    distribution.  runtime_seconds is wall-clock bookkeeping and is not
    part of the check's identity.
    """

    __test__ = False  # not a pytest class, despite the name

    name: str
    passed: bool
    statistic: float
    p_value: float | None
    distance: float | None
    threshold: float
    sample_sizes: tuple[int, ...]
    runtime_seconds: float
    note: str = ""


def report_record(report: TestReport, include_runtime: bool = False) -> dict:
    """JSON-ready dict; runtime stays out unless explicitly wanted so
    that identical checks serialize to identical bytes."""
    record = {
        "name": report.name,
        "passed": report.passed,
        "statistic": report.statistic,
        "p_value": report.p_value,
        "distance": report.distance,
        "threshold": report.threshold,
        "sample_sizes": list(report.sample_sizes),
        "note": report.note,
    }
    if include_runtime:
        record["runtime_seconds"] = report.runtime_seconds
    return record


# == histogram comparisons ==============================================


class ChiSquareResult(NamedTuple):
    statistic: float
    p_value: float
    df: int
    bins: int


def chi_square_two_sample(
    counts_a: Mapping, counts_b: Mapping, min_expected: float = MIN_EXPECTED
) -> ChiSquareResult:
    """Two-sample chi-square over a shared discrete support.

    Bins are taken in sorted key order and adjacent bins are merged left
    to right until every merged bin has expected count >= min_expected
    in both samples (expectations under the pooled law); the leftover
    tail joins the last closed bin.  Fewer than two bins after merging
    means the data cannot distinguish anything: statistic 0, p 1.
    """
    keys = sorted(set(counts_a) | set(counts_b))
    a = np.array([counts_a.get(k, 0) for k in keys], dtype=float)
    b = np.array([counts_b.get(k, 0) for k in keys], dtype=float)
    n_a, n_b = a.sum(), b.sum()
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be nonempty")
    pooled = (a + b) / (n_a + n_b)
    groups: list[tuple[float, float]] = []
    acc_a = acc_b = acc_p = 0.0
    for ai, bi, pi in zip(a, b, pooled):
        acc_a += ai
        acc_b += bi
        acc_p += pi
        if n_a * acc_p >= min_expected and n_b * acc_p >= min_expected:
            groups.append((acc_a, acc_b))
            acc_a = acc_b = acc_p = 0.0
    if acc_p > 0.0:
        if groups:
            ga, gb = groups[-1]
            groups[-1] = (ga + acc_a, gb + acc_b)
        else:
            groups.append((acc_a, acc_b))
    if len(groups) < 2:
        return ChiSquareResult(0.0, 1.0, 0, len(groups))
    stat = 0.0
    for ga, gb in groups:
        pooled_g = (ga + gb) / (n_a + n_b)
        ea, eb = n_a * pooled_g, n_b * pooled_g
        stat += (ga - ea) ** 2 / ea + (gb - eb) ** 2 / eb
    df = len(groups) - 1
    return ChiSquareResult(float(stat), float(stats.chi2.sf(stat, df)), df, len(groups))


def tv_distance(counts_a: Mapping, counts_b: Mapping) -> float:
    """Total variation distance between two empirical laws."""
    keys = set(counts_a) | set(counts_b)
    n_a = sum(counts_a.values())
    n_b = sum(counts_b.values())
    if n_a == 0 or n_b == 0:
        raise ValueError("both samples must be nonempty")
    return 0.5 * sum(
        abs(counts_a.get(k, 0) / n_a - counts_b.get(k, 0) / n_b) for k in keys
    )


# == linear-algebra and transform utilities =============================


def spectral_radius(matrix: Sequence[Sequence[float]], tol: float = 1e-10,
                    max_iter: int = 100_000) -> float:
    """Largest-magnitude growth rate of a nonnegative matrix.

    Power iteration from the all-ones vector, run on M + I and shifted
    back; the +I keeps periodic matrices (where plain iteration cycles
    forever) honest without moving the dominant nonnegative eigenvalue
    by anything but exactly one.  Nilpotent matrices (acyclic type
    graphs) are caught upfront, since shifting turns them into Jordan
    blocks that converge too slowly; any other defective dominant
    eigenvalue fails loudly rather than returning a stalled estimate.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    if np.any(m < 0):
        raise ValueError("matrix must be nonnegative")
    if np.count_nonzero(np.linalg.matrix_power(m, m.shape[0])) == 0:
        return 0.0
    shifted = m + np.eye(m.shape[0])
    v = np.ones(m.shape[0])
    est = 1.0
    for _ in range(max_iter):
        w = shifted @ v
        norm = float(np.max(np.abs(w)))
        if norm < 1e-12:
            return 0.0
        w /= norm
        if abs(norm - est) < tol:
            return norm - 1.0
        est = norm
        v = w
    raise RuntimeError(f"power iteration did not settle within {max_iter} steps")


def malthusian_alpha(measure: MeanReproMeasure, tol: float = 1e-10) -> float:
    """Root of the Lotka equation: the alpha with transform value 1.

    The transform is strictly decreasing in alpha on its domain (all
    alpha for purely atomic measures, alpha > -rate with exponential
    terms), so bisection on a bracket found by doubling is exact up to
    tol.  A measure of zero mass has no root.
    """
    if measure.m != 1:
        raise UnsupportedModelError("the Lotka root is defined for one type only")
    if float(measure.total_mass().sum()) == 0.0:
        raise ValueError("zero reproduction measure has no growth rate")

    floor = measure.min_exp_rate()

    def value(alpha: float) -> float:
        return measure.laplace(alpha)

    if value(0.0) >= 1.0:
        lo = 0.0
        hi = 1.0
        for _ in range(200):
            if value(hi) < 1.0:
                break
            hi *= 2.0
        else:
            raise ValueError("transform never drops below 1; no finite root")
    else:
        hi = 0.0
        if floor is None:
            lo = -1.0
            for _ in range(200):
                if value(lo) > 1.0:
                    break
                lo *= 2.0
            else:
                raise ValueError("transform never exceeds 1; no finite root")
        else:
            gap = 0.5 * floor
            lo = -floor + gap
            for _ in range(200):
                if value(lo) > 1.0:
                    break
                gap *= 0.5
                lo = -floor + gap
            else:
                raise ValueError("transform never exceeds 1; no finite root")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if value(mid) >= 1.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# == cross-route checks =================================================


def q_agreement_check(
    model: Model, *, runs: int = 2000, cap: int = 500, seed: int = 0
) -> list[TestReport]:
    """Analytic extinction probabilities against Monte Carlo intervals."""
    solved = solve_q(model)
    reports = []
    for s in range(model.m):
        t0 = time.perf_counter()
        est = estimate_q_mc(model, s, runs=runs, cap=cap, seed=seed + s)
        inside = est.ci_low <= solved.q[s] <= est.ci_high
        clean = est.censored < 0.01
        reports.append(TestReport(
            name=f"q-agreement-type-{s}",
            passed=inside and clean,
            statistic=est.estimate,
            p_value=None,
            distance=abs(est.estimate - solved.q[s]),
            threshold=est.ci_high - est.ci_low,
            sample_sizes=(runs,),
            runtime_seconds=time.perf_counter() - t0,
            note=f"analytic {solved.q[s]:.6f} in [{est.ci_low:.6f}, {est.ci_high:.6f}]"
                 + ("" if clean else f"; censored fraction {est.censored:.3f}"),
        ))
    return reports


def _summary_value(outcome, summary: str) -> int:
    if summary == "total_progeny":
        return outcome.total_progeny
    if summary == "first_generation":
        return sum(outcome.generation_counts[1]) if len(outcome.generation_counts) > 1 else 0
    if summary == "deepest_generation":
        return len(outcome.generation_counts) - 1
    raise ValueError(f"unknown summary {summary!r}")


def conditioned_equivalence_check(
    model: Model,
    *,
    route: str,
    summary: str = "total_progeny",
    n_tilted: int = 4000,
    n_base: int = 4000,
    root_type: TypeId = 0,
    q: Sequence[float] | None = None,
    cap: int = DEFAULT_CAP,
    seed: int = 0,
) -> TestReport:
    """Tilted-model populations against an algebra-free conditioned route.

    route="rejection" drives the engine with rejection-sampled careers;
    route="filter" runs the base model and keeps the extinct runs.  Both
    are the conditioned law, so the chosen summary statistic must be
    indistinguishable from the tilted twin's by a two-sample chi-square.
    """
    t0 = time.perf_counter()
    tilted = tilt_model(model, q)
    hist_t = Counter(
        _summary_value(out, summary)
        for out in run_replicates(tilted, root_type, n_tilted, cap=cap, seed=seed,
                                  snapshot_depth=0)
    )
    hist_o: Counter = Counter()
    kept = 0
    if route == "rejection":
        sampler = RejectionSampler(model, tilted.q)
        for out in run_replicates(sampler, root_type, n_base, cap=cap, seed=seed + 1,
                                  snapshot_depth=0):
            hist_o[_summary_value(out, summary)] += 1
            kept += 1
    elif route == "filter":
        for out in run_replicates(model, root_type, n_base, cap=cap, seed=seed + 1,
                                  snapshot_depth=0):
            if out.extinct:
                hist_o[_summary_value(out, summary)] += 1
                kept += 1
        if kept < 100:
            raise ValueError(
                f"only {kept} extinct runs out of {n_base}; raise n_base"
            )
    else:
        raise ValueError(f"unknown route {route!r}")
    result = chi_square_two_sample(hist_t, hist_o)
    distance = tv_distance(hist_t, hist_o)
    return TestReport(
        name=f"tilt-equivalence-{route}-{summary}",
        passed=result.p_value > P_THRESHOLD,
        statistic=result.statistic,
        p_value=result.p_value,
        distance=distance,
        threshold=P_THRESHOLD,
        sample_sizes=(n_tilted, kept),
        runtime_seconds=time.perf_counter() - t0,
        note=f"{result.bins} merged bins, df {result.df}",
    )


def importance_identity_check(
    model: Model,
    *,
    generation: int = 1,
    runs_base: int = 4000,
    runs_tilted: int = 4000,
    root_type: TypeId = 0,
    q: Sequence[float] | None = None,
    seed: int = 0,
) -> TestReport:
    """Reweighted base-measure line functionals against conditioned means.

    The functional is the generation-n line size; under the base measure
    it is weighted by the line's change-of-measure factor.  Both sides
    estimate the same number, so their difference must sit within four
    combined standard errors.
    """
    t0 = time.perf_counter()
    tilted = tilt_model(model, q)
    weighted = []
    for out in run_replicates(model, root_type, runs_base, max_generation=generation,
                              snapshot_depth=generation, seed=seed):
        line = generation_line(out, generation)
        w = rn_weight(tilted.q, root_type, tuple(s for _lab, s in line))
        weighted.append(len(line) * w)
    plain = []
    for out in run_replicates(tilted, root_type, runs_tilted, max_generation=generation,
                              snapshot_depth=0, seed=seed + 1):
        plain.append(
            sum(out.generation_counts[generation])
            if len(out.generation_counts) > generation else 0
        )
    mean_w = float(np.mean(weighted))
    mean_p = float(np.mean(plain))
    se = math.hypot(
        float(np.std(weighted, ddof=1)) / math.sqrt(runs_base),
        float(np.std(plain, ddof=1)) / math.sqrt(runs_tilted),
    )
    z = abs(mean_w - mean_p) / se if se > 0 else 0.0
    return TestReport(
        name=f"importance-identity-generation-{generation}",
        passed=z < Z_THRESHOLD,
        statistic=z,
        p_value=float(2.0 * stats.norm.sf(z)),
        distance=abs(mean_w - mean_p),
        threshold=Z_THRESHOLD,
        sample_sizes=(runs_base, runs_tilted),
        runtime_seconds=time.perf_counter() - t0,
        note=f"weighted mean {mean_w:.4f}, conditioned mean {mean_p:.4f}",
    )


def branching_property_check(
    model: Model,
    *,
    generations: int = 3,
    runs: int = 4000,
    root_type: TypeId = 0,
    q: Sequence[float] | None = None,
    seed: int = 0,
) -> TestReport:
    """The conditioned process must itself branch.

    Restricted to a fixed number of generations, the subtree of the
    root's first child must be distributed as a fresh population of the
    child's type run one generation shorter.  Distinguishable histograms
    mean conditioning broke the recursive structure.
    """
    if generations < 2:
        raise ValueError("need at least two generations to see a subtree")
    t0 = time.perf_counter()
    tilted = tilt_model(model, q)
    by_child: dict[TypeId, Counter] = {}
    for out in run_replicates(tilted, root_type, runs, max_generation=generations,
                              snapshot_depth=generations, seed=seed):
        child_type = None
        count = 0
        for lab, s, _t in out.line_snapshots:
            if lab and lab[0] == 1:
                count += 1
                if len(lab) == 1:
                    child_type = s
        if child_type is not None:
            by_child.setdefault(child_type, Counter())[count] += 1
    if not by_child:
        raise ValueError("no run produced a first child; raise runs")
    child = max(by_child, key=lambda s: sum(by_child[s].values()))
    hist_sub = by_child[child]
    n_sub = sum(hist_sub.values())
    hist_fresh = Counter(
        out.total_progeny
        for out in run_replicates(tilted, child, runs, max_generation=generations - 1,
                                  snapshot_depth=0, seed=seed + 1)
    )
    result = chi_square_two_sample(hist_sub, hist_fresh)
    return TestReport(
        name=f"branching-property-depth-{generations}",
        passed=result.p_value > P_THRESHOLD,
        statistic=result.statistic,
        p_value=result.p_value,
        distance=tv_distance(hist_sub, hist_fresh),
        threshold=P_THRESHOLD,
        sample_sizes=(n_sub, runs),
        runtime_seconds=time.perf_counter() - t0,
        note=f"first-child type {child}, {result.bins} merged bins",
    )


def subcriticality_checks(
    model: Model,
    *,
    runs: int = 3000,
    depth: int = 4,
    root_type: TypeId = 0,
    q: Sequence[float] | None = None,
    seed: int = 0,
) -> list[TestReport]:
    """The conditioned process must shrink.

    Three angles: the tilted mean matrix's growth rate sits below 1; the
    matrix itself matches the reweighted-gradient formula entry by
    entry; and simulated generation sizes track the matrix powers.
    """
    tilted = tilt_model(model, q)
    qv = np.asarray(tilted.q)
    reports = []

    t0 = time.perf_counter()
    m_tilted = mean_matrix(tilted)
    rho = spectral_radius(m_tilted)
    reports.append(TestReport(
        name="tilted-growth-rate",
        passed=rho < 1.0,
        statistic=rho,
        p_value=None,
        distance=None,
        threshold=1.0,
        sample_sizes=(),
        runtime_seconds=time.perf_counter() - t0,
        note=f"spectral radius {rho:.6f}",
    ))

    t0 = time.perf_counter()
    expected = np.vstack([
        qv * model.offspring_pgf_gradient(s, qv) / qv[s] for s in range(model.m)
    ])
    gap = float(np.max(np.abs(m_tilted - expected)))
    reports.append(TestReport(
        name="tilted-mean-identity",
        passed=gap < 1e-9,
        statistic=gap,
        p_value=None,
        distance=gap,
        threshold=1e-9,
        sample_sizes=(),
        runtime_seconds=time.perf_counter() - t0,
        note="mean matrix against reweighted gradients",
    ))

    t0 = time.perf_counter()
    sizes = np.zeros((runs, depth + 1))
    for r, out in enumerate(run_replicates(tilted, root_type, runs, max_generation=depth,
                                           snapshot_depth=0, seed=seed)):
        for g in range(min(len(out.generation_counts), depth + 1)):
            sizes[r, g] = sum(out.generation_counts[g])
    unit = np.zeros(model.m)
    unit[root_type] = 1.0
    worst = 0.0
    details = []
    for g in range(1, depth + 1):
        analytic = float((unit @ np.linalg.matrix_power(m_tilted, g)).sum())
        mean = float(sizes[:, g].mean())
        se = float(sizes[:, g].std(ddof=1)) / math.sqrt(runs)
        z = abs(mean - analytic) / se if se > 0 else 0.0
        worst = max(worst, z)
        details.append(f"g{g}: {mean:.4f} vs {analytic:.4f}")
    reports.append(TestReport(
        name="tilted-generation-decay",
        passed=worst < Z_THRESHOLD,
        statistic=worst,
        p_value=float(2.0 * stats.norm.sf(worst)),
        distance=None,
        threshold=Z_THRESHOLD,
        sample_sizes=(runs,),
        runtime_seconds=time.perf_counter() - t0,
        note="; ".join(details),
    ))
    return reports


def malthus_check(model: Model, *, tol: float = 1e-12) -> TestReport:
    """Self-consistency of the growth-rate root.

    The root must bring the Lotka transform to 1 and have the same sign
    as the criticality gap of the mean matrix.
    """
    t0 = time.perf_counter()
    measure = mean_reproduction_measure(model, 0)
    alpha = malthusian_alpha(measure, tol=tol)
    residual = abs(measure.laplace(alpha) - 1.0)
    rho = spectral_radius(mean_matrix(model))
    if abs(rho - 1.0) < 1e-9:
        sign_ok = abs(alpha) < 1e-6
    else:
        sign_ok = (alpha > 0) == (rho > 1.0)
    return TestReport(
        name="malthusian-root",
        passed=residual < 1e-9 and sign_ok,
        statistic=alpha,
        p_value=None,
        distance=residual,
        threshold=1e-9,
        sample_sizes=(),
        runtime_seconds=time.perf_counter() - t0,
        note=f"alpha {alpha:.8f}, growth rate {rho:.6f}",
    )


# == suites =============================================================

SUITES = ("q", "tilt", "rn", "subcritical", "malthus", "all")


def verify_suite(
    model: Model,
    which: str = "all",
    *,
    runs: int = 2000,
    root_type: TypeId = 0,
    seed: int = 0,
) -> tuple[list[TestReport], list[str]]:
    """Run one named suite (or all of them) against a model.

    Returns the reports plus notes for checks that do not apply to the
    model (growth-rate checks need a closed-form reproduction measure).
    """
    if which not in SUITES:
        raise ValueError(f"unknown suite {which!r}; pick one of {SUITES}")
    reports: list[TestReport] = []
    skipped: list[str] = []
    if which in ("q", "all"):
        reports.extend(q_agreement_check(model, runs=runs, seed=seed))
    if which in ("tilt", "all"):
        # a cap of 500 misclassifies extinct runs with probability below
        # q**500, far outside anything these sample sizes can see
        for route in ("rejection", "filter"):
            reports.append(conditioned_equivalence_check(
                model, route=route, summary="total_progeny",
                n_tilted=runs, n_base=3 * runs, root_type=root_type,
                cap=500, seed=seed,
            ))
        reports.append(conditioned_equivalence_check(
            model, route="rejection", summary="first_generation",
            n_tilted=runs, n_base=runs, root_type=root_type,
            cap=500, seed=seed + 7,
        ))
    if which in ("rn", "all"):
        for generation in (1, 2):
            reports.append(importance_identity_check(
                model, generation=generation, runs_base=runs, runs_tilted=runs,
                root_type=root_type, seed=seed,
            ))
        reports.append(branching_property_check(
            model, generations=3, runs=runs, root_type=root_type, seed=seed,
        ))
    if which in ("subcritical", "all"):
        reports.extend(subcriticality_checks(
            model, runs=runs, root_type=root_type, seed=seed,
        ))
    if which in ("malthus", "all"):
        if model.m != 1:
            skipped.append("malthusian-root: needs a single-type model")
        else:
            try:
                reports.append(malthus_check(model))
            except UnsupportedModelError as exc:
                skipped.append(f"malthusian-root: {exc}")
    return reports, skipped
