"""Command-line interface.

Subcommands:

* ``solve-q``     minimal extinction probabilities of a model config;
* ``estimate-q``  Monte Carlo extinction probability with a Wilson interval;
* ``tilt``        the extinction-conditioned twin, as a model config;
* ``simulate``    replicate populations: outcomes as NDJSON, a tidy
                  delimited summary as CSV;
* ``verify``      statistical cross-checks, one printed line per check,
                  nonzero exit when any check fails.

Every primary output embeds the resolved model configuration (with all
defaults filled in) plus the seed that produced it, and is byte
identical across reruns with the same arguments.  Wall-clock metadata
never enters primary outputs; each written file gets a ``.meta.json``
sidecar carrying runtime and write time instead.

Exit codes: 0 success, 1 at least one verification check failed, 2 bad
configuration or bad usage.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .extinction import estimate_q_mc, solve_q
from .kernels import ModelConfigError, load_model, model_to_config
from .simulate import (
    DEFAULT_CAP,
    DEFAULT_SNAPSHOT_DEPTH,
    outcome_record,
    run_replicates,
    stream_for,
)
from .tilt import ConditioningUndefinedError, RejectionSampler, tilt_model
from .verify import SUITES, report_record, verify_suite


def _config_digest(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _write_output(path: str | None, text: str, runtime: float) -> None:
    """Primary text to path (or stdout); timing to a sidecar, never inline."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    Path(path).write_text(text, encoding="utf-8")
    meta = {
        "runtime_seconds": runtime,
        "written_at": datetime.now(timezone.utc).isoformat(),
    }
    Path(path + ".meta.json").write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )


def _json_text(payload: dict) -> str:
    return json.dumps(payload, indent=2) + "\n"


# == subcommands ========================================================


def _cmd_solve_q(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    model = load_model(args.config)
    result = solve_q(model, tol=args.tol)
    payload = {
        "version": __version__,
        "config": model_to_config(model),
        "tol": args.tol,
        "q": list(result.q),
        "iterations": result.iterations,
        "residual": result.residual,
        "converged": result.converged,
        "zero_types": list(result.zero_types),
    }
    _write_output(args.output, _json_text(payload), time.perf_counter() - t0)
    return 0


def _cmd_estimate_q(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    model = load_model(args.config)
    est = estimate_q_mc(
        model, args.root_type, runs=args.runs, cap=args.cap,
        horizon=args.horizon, seed=args.seed, workers=args.threads,
        confidence=args.confidence,
    )
    payload = {
        "version": __version__,
        "config": model_to_config(model),
        "seed": args.seed,
        "root_type": args.root_type,
        "runs": est.runs,
        "cap": args.cap,
        "horizon": args.horizon,
        "confidence": est.confidence,
        "estimate": est.estimate,
        "ci_low": est.ci_low,
        "ci_high": est.ci_high,
        "extinct_runs": est.extinct_runs,
        "cap_hits": est.cap_hits,
        "censored": est.censored,
    }
    _write_output(args.output, _json_text(payload), time.perf_counter() - t0)
    return 0


TILT_PROBE_CAREERS = 2000


def _cmd_tilt(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    model = load_model(args.config)
    tilted = tilt_model(model, args.q)
    payload = {
        "version": __version__,
        "config": model_to_config(model),
        "q": list(tilted.q),
        "tilted": model_to_config(tilted.model),
    }
    if model.variant == "general":
        # composed careers are where rejection sampling is the practical
        # fallback, so report its measured cost; the long-run acceptance
        # rate from type s estimates q_s
        rates = []
        for s in range(model.m):
            sampler = RejectionSampler(model, tilted.q)
            sampler.sample_careers(s, TILT_PROBE_CAREERS, stream_for(args.seed, s))
            rates.append(sampler.acceptance_rate)
        payload["seed"] = args.seed
        payload["probe_careers"] = TILT_PROBE_CAREERS
        payload["acceptance_rate"] = rates
    _write_output(args.output, _json_text(payload), time.perf_counter() - t0)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    model = load_model(args.config)
    config = model_to_config(model)
    header = {
        "version": __version__,
        "config": config,
        "seed": args.seed,
        "root_type": args.root_type,
        "runs": args.runs,
        "cap": args.cap,
        "horizon": args.horizon,
        "snapshot_depth": args.snapshot_depth,
    }
    ndjson = io.StringIO()
    ndjson.write(json.dumps(header) + "\n")
    extinct = censored = cap_hits = 0
    total_progeny = 0
    extinction_times: list[float] = []
    gen_sums: dict[tuple[int, int], int] = {}
    for r, out in enumerate(run_replicates(
        model, args.root_type, args.runs, cap=args.cap, horizon=args.horizon,
        seed=args.seed, snapshot_depth=args.snapshot_depth, workers=args.threads,
    )):
        if args.outcomes:
            ndjson.write(json.dumps(outcome_record(out, replicate=r)) + "\n")
        extinct += out.extinct
        censored += out.censored
        cap_hits += out.stop_reason == "cap"
        total_progeny += out.total_progeny
        if out.extinction_time is not None:
            extinction_times.append(out.extinction_time)
        for g, row in enumerate(out.generation_counts):
            for s, c in enumerate(row):
                if c:
                    gen_sums[(g, s)] = gen_sums.get((g, s), 0) + c
    runtime = time.perf_counter() - t0
    if args.outcomes:
        _write_output(args.outcomes, ndjson.getvalue(), runtime)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["metric", "generation", "type", "value"])
    writer.writerow(["version", "", "", __version__])
    writer.writerow(["config_sha256", "", "", _config_digest(config)])
    writer.writerow(["seed", "", "", args.seed])
    writer.writerow(["runs", "", "", args.runs])
    writer.writerow(["extinct_fraction", "", "", repr(extinct / args.runs)])
    writer.writerow(["censored_fraction", "", "", repr(censored / args.runs)])
    writer.writerow(["cap_fraction", "", "", repr(cap_hits / args.runs)])
    writer.writerow(["mean_total_progeny", "", "", repr(total_progeny / args.runs)])
    if extinction_times:
        writer.writerow([
            "mean_extinction_time", "", "",
            repr(sum(extinction_times) / len(extinction_times)),
        ])
    for (g, s) in sorted(gen_sums):
        writer.writerow([
            "mean_generation_size", g, s, repr(gen_sums[(g, s)] / args.runs)
        ])
    _write_output(args.summary, buf.getvalue(), runtime)
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    t0 = time.perf_counter()
    model = load_model(args.config)
    reports, skipped = verify_suite(
        model, args.suite, runs=args.runs, root_type=args.root_type, seed=args.seed
    )
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        detail = (
            f"p={rep.p_value:.4g}" if rep.p_value is not None
            else f"stat={rep.statistic:.6g}"
        )
        print(f"{status} {rep.name} ({detail}) {rep.note}")
    for note in skipped:
        print(f"SKIP {note}")
    if args.output:
        payload = {
            "version": __version__,
            "config": model_to_config(model),
            "seed": args.seed,
            "suite": args.suite,
            "runs": args.runs,
            "root_type": args.root_type,
            "reports": [report_record(rep) for rep in reports],
            "skipped": skipped,
            "all_passed": all(rep.passed for rep in reports),
        }
        _write_output(args.output, _json_text(payload), time.perf_counter() - t0)
    return 0 if all(rep.passed for rep in reports) else 1


# == parser =============================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchtilt",
        description="Multi-type branching populations conditioned on extinction.",
    )
    parser.add_argument("--version", action="version", version=f"branchtilt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-q", help="minimal extinction probabilities")
    p.add_argument("--config", required=True, help="model config JSON path")
    p.add_argument("--tol", type=float, default=1e-12)
    p.add_argument("--output", help="write JSON here instead of stdout")
    p.set_defaults(func=_cmd_solve_q)

    p = sub.add_parser("estimate-q", help="Monte Carlo extinction probability")
    p.add_argument("--config", required=True)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--root-type", type=int, default=0)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--confidence", type=float, default=0.95)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_estimate_q)

    p = sub.add_parser("tilt", help="extinction-conditioned twin of a model")
    p.add_argument("--config", required=True)
    p.add_argument("--q", type=float, nargs="+", default=None,
                   help="override the solved extinction probabilities")
    p.add_argument("--seed", type=int, default=0,
                   help="seed for the rejection acceptance-rate probe")
    p.add_argument("--output")
    p.set_defaults(func=_cmd_tilt)

    p = sub.add_parser("simulate", help="run replicate populations")
    p.add_argument("--config", required=True)
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--root-type", type=int, default=0)
    p.add_argument("--cap", type=int, default=DEFAULT_CAP)
    p.add_argument("--horizon", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshot-depth", type=int, default=DEFAULT_SNAPSHOT_DEPTH)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--outcomes", help="write one outcome per line (NDJSON) here")
    p.add_argument("--summary", help="write the tidy CSV here instead of stdout")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("verify", help="statistical cross-checks")
    p.add_argument("--config", required=True)
    p.add_argument("--suite", choices=SUITES, default="all")
    p.add_argument("--runs", type=int, default=2000)
    p.add_argument("--root-type", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="also write a JSON report here")
    p.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ModelConfigError as exc:
        for violation in exc.violations:
            print(f"config error: {violation}", file=sys.stderr)
        return 2
    except (ConditioningUndefinedError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
