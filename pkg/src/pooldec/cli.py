"""Command line front-end.

Exit codes: 0 success (exact recovery for ``simulate``), 1 usage or parameter
error, 2 decoding mismatch (``simulate``) or failed diagnostics under
``--strict``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import diagnostics
from .decoder import decode, thresholds
from .design import (
    DesignParams,
    Overrides,
    build_design,
    c_min,
    derive_params,
    feasibility_report,
    split_seed,
    stream,
)
from .oracle import ENUMERATION_CAP, bounds, exhaustive_decode, n_candidates
from .signal import measure, sample_signal

log = logging.getLogger("pooldec")

AXES = ("c", "n", "theta")


@dataclass
class RunConfig:
    command: str = "simulate"
    n: int = 100_000
    counts: tuple[int, ...] = (316,)
    eps_design: float = 0.05
    c: Optional[float] = None
    delta: Optional[float] = None
    trials: int = 1
    seed: int = 0
    out: Optional[str] = None
    strict: bool = False
    overrides: Overrides = field(default_factory=Overrides)
    axis: Optional[str] = None
    values: tuple[float, ...] = ()
    relative: bool = False
    jobs: int = 1
    trace: Optional[str] = None

    def params(self, seed: Optional[int] = None, **changes) -> DesignParams:
        p = DesignParams(
            n=self.n,
            counts=self.counts,
            eps_design=self.eps_design,
            c=self.c,
            delta=self.delta,
            rng_seed=self.seed if seed is None else seed,
            overrides=self.overrides,
        )
        return replace(p, **changes) if changes else p


_OVERRIDE_KEYS = ("ell", "s", "m", "gamma")


def _counts(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    if isinstance(text, int):
        return (text,)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


def _floats(text) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with the same keys as the flags")
    common.add_argument("--n", type=int)
    common.add_argument("--counts", help="comma separated k_1,...,k_d")
    common.add_argument("--eps-design", type=float)
    common.add_argument("--c", type=float)
    common.add_argument("--delta", type=float)
    common.add_argument("--trials", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--out")
    common.add_argument("--strict", action="store_true", default=None)
    for key in _OVERRIDE_KEYS:
        common.add_argument(f"--override-{key}", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="pooldec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sim = sub.add_parser("simulate", parents=[common], help="one design, signal and decode")
    sim.add_argument("--trace", help="write the per-item score trace CSV here")
    sw = sub.add_parser("sweep", parents=[common], help="success rate along one parameter axis")
    sw.add_argument("--axis")
    sw.add_argument("--values")
    sw.add_argument("--relative", action="store_true", default=None,
                    help="interpret c values as multiples of c_min")
    sw.add_argument("--jobs", type=int)
    sub.add_parser("oracle", parents=[common], help="exhaustive search vs threshold decoder on a tiny instance")
    sub.add_parser("diagnose", parents=[common], help="concentration and density checks")
    sub.add_parser("bounds", parents=[common], help="information-theoretic and algorithmic pool counts")
    return parser


def load_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    raw: dict = {}
    if args.config:
        raw = {k.replace("-", "_"): v for k, v in json.loads(Path(args.config).read_text()).items()}
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "verbose")}
    raw.update(flags)

    cfg = RunConfig(command=args.command)
    ov = {}
    for key in _OVERRIDE_KEYS:
        if f"override_{key}" in raw:
            ov[key] = int(raw.pop(f"override_{key}"))
    if isinstance(raw.get("overrides"), dict):
        ov = {**raw.pop("overrides"), **ov}
    cfg.overrides = Overrides(**ov)
    for key, value in raw.items():
        if key == "command":
            continue
        if not hasattr(cfg, key):
            raise ValueError(f"unknown configuration key {key!r}")
        if key == "counts":
            value = _counts(value)
        elif key == "values":
            value = _floats(value)
        setattr(cfg, key, value)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return cfg


def _write(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


# -- trials -------------------------------------------------------------------


def run_trial(params: DesignParams, trace: bool = False):
    """Build, sample, measure, decode. Returns (report, design, signal, measurements, seconds)."""
    start = time.perf_counter()
    derived = derive_params(params)
    design = build_design(params, derived)
    signal = sample_signal(params, design, stream(params.rng_seed, 1))
    y = measure(design, signal)
    th = thresholds(derived, params.d)
    report = decode(design, y, params, th, signal.seed_labels, truth=signal.labels, trace=trace)
    return report, design, signal, y, time.perf_counter() - start


def _trial_summary(params: DesignParams) -> tuple[bool, int, float]:
    report, *_, seconds = run_trial(params)
    return bool(report.success), int(report.total_errors), seconds * 1e3


def cmd_simulate(cfg: RunConfig) -> int:
    params = cfg.params()
    report, design, signal, y, _ = run_trial(params, trace=cfg.trace is not None)
    out = report.to_dict()
    out["params"] = {"n": params.n, "counts": list(params.counts), "eps_design": params.eps_design,
                     "seed": params.rng_seed}
    out["derived"] = {k: getattr(design.derived, k) for k in ("theta", "ell", "s", "m", "gamma", "alpha", "c")}
    _write(json.dumps(out, indent=2), cfg.out)
    if cfg.trace:
        Path(cfg.trace).write_text(report.trace_csv())
    log.info("errors=%s runtime_ms=%.1f", report.total_errors, report.runtime_ms)
    return 0 if report.success else 2


def _axis_params(cfg: RunConfig, axis: str, value: float, seed: int) -> DesignParams:
    base = cfg.params(seed)
    if axis == "c":
        if cfg.relative:
            theta = math.log(base.k) / math.log(base.n)
            value = value * c_min(theta, base.second_moment, base.eps_design)
        return replace(base, c=value, delta=None)
    if axis == "n":
        theta = math.log(base.k) / math.log(base.n)
        n = int(round(value))
        return replace(base, n=n, counts=_scale_counts(base.counts, round(n**theta)))
    if axis == "theta":
        return replace(base, counts=_scale_counts(base.counts, round(base.n**value)))
    raise ValueError(f"invalid axis {axis!r}; choose from {AXES}")


def _scale_counts(counts: tuple[int, ...], k: int) -> tuple[int, ...]:
    """Split ``k`` in the proportions of ``counts`` (largest remainder)."""
    total = sum(counts)
    exact = [k * c / total for c in counts]
    out = [math.floor(v) for v in exact]
    order = sorted(range(len(counts)), key=lambda w: exact[w] - out[w], reverse=True)
    for w in order[:k - sum(out)]:
        out[w] += 1
    return tuple(out)


def sweep_rows(cfg: RunConfig) -> list[dict]:
    if cfg.axis not in AXES:
        raise ValueError(f"invalid axis {cfg.axis!r}; choose from {AXES}")
    if cfg.trials < 1:
        raise ValueError("trials must be at least 1")
    # trial t uses the same seed at every axis value
    seeds = [split_seed(cfg.seed, t) for t in range(cfg.trials)]
    jobs = [(v, _axis_params(cfg, cfg.axis, v, s)) for v in cfg.values for s in seeds]
    if cfg.jobs > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            results = list(ex.map(_trial_summary, [p for _, p in jobs]))
    else:
        results = [_trial_summary(p) for _, p in jobs]
    rows = []
    for a, v in enumerate(cfg.values):
        chunk = results[a * cfg.trials:(a + 1) * cfg.trials]
        rows.append({
            "axis_value": v,
            "trials": cfg.trials,
            "successes": sum(ok for ok, _, _ in chunk),
            "mean_errors": float(np.mean([e for _, e, _ in chunk])),
            "mean_runtime_ms": float(np.mean([t for _, _, t in chunk])),
        })
        log.info("%s=%s successes=%d/%d", cfg.axis, v, rows[-1]["successes"], cfg.trials)
    return rows


def sweep_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["axis_value", "trials", "successes", "mean_errors", "mean_runtime_ms"],
                       lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def cmd_sweep(cfg: RunConfig) -> int:
    _write(sweep_csv(sweep_rows(cfg)), cfg.out)
    return 0


def cmd_oracle(cfg: RunConfig) -> int:
    params = cfg.params()
    derived = derive_params(params)
    total = n_candidates(params.n, params.counts)
    if total > ENUMERATION_CAP:
        raise ValueError(f"{total} candidates exceed the enumeration cap {ENUMERATION_CAP}")
    design = build_design(params, derived)
    signal = sample_signal(params, design, stream(params.rng_seed, 1))
    y = measure(design, signal)
    feasible = exhaustive_decode(design, y, params.counts, seed_labels=signal.seed_labels)
    truth = tuple(int(v) for v in signal.bulk_labels)
    report = decode(design, y, params, thresholds(derived, params.d), signal.seed_labels, truth=signal.labels)
    estimate = tuple(int(v) for v in report.bulk_estimate)
    unique = len(feasible) == 1
    if unique and truth in feasible:
        verdict = "unique feasible; truth recovered by enumeration"
    else:
        verdict = f"{len(feasible)} feasible signals"
    out = {
        "verdict": verdict,
        "feasible_count": len(feasible),
        "truth_feasible": truth in feasible,
        "threshold_decoder_correct": estimate == truth,
        "decoders_agree": unique and estimate in feasible,
        "bounds": bounds(params, derived).to_dict() if params.k >= 1 else None,
    }
    _write(json.dumps(out, indent=2), cfg.out)
    return 0


def cmd_diagnose(cfg: RunConfig) -> int:
    params = cfg.params()
    _, design, signal, y, _ = run_trial(params)
    report = diagnostics.run_all(design, y, signal, params)
    print(report.table())
    if cfg.out:
        Path(cfg.out).write_text(report.to_json())
    if not report.passed:
        log.warning("some diagnostics failed")
        if cfg.strict:
            return 2
    return 0


def cmd_bounds(cfg: RunConfig) -> int:
    params = cfg.params()
    derived = derive_params(params)
    out = {"bounds": bounds(params, derived).to_dict(),
           "feasibility": feasibility_report(derived, params).to_dict()}
    _write(json.dumps(out, indent=2), cfg.out)
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "diagnose": cmd_diagnose,
    "bounds": cmd_bounds,
}


def main(argv=None) -> int:
    try:
        cfg = load_config(argv)
        return COMMANDS[cfg.command](cfg)
    except (ValueError, TypeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
