"""Finite-n band checks for the concentration and density properties of a run.

Every "with high probability" statement becomes a band of half-width
``2 ln(n) sqrt(mean)`` around the relevant mean. Bands are skipped when that
mean is below :data:`SMALL_MEAN`, where they carry no information.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .decoder import DecoderState, compartment_scores
from .design import DerivedParams, DesignParams, PoolingDesign
from .oracle import idealized_scores
from .signal import Signal

SMALL_MEAN = 4.0
RESIDUAL_PASS_FRACTION = 0.99


@dataclass
class Check:
    name: str
    anchor: str
    statistic: float
    band: tuple[float, float]
    passed: bool
    n_samples: int
    skipped: bool = False
    detail: dict = field(default_factory=dict)


@dataclass
class DiagnosticsReport:
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __add__(self, other: "DiagnosticsReport") -> "DiagnosticsReport":
        return DiagnosticsReport(self.checks + other.checks)

    def to_json(self) -> str:
        return json.dumps({"passed": self.passed, "checks": [asdict(c) for c in self.checks]}, indent=2)

    def table(self) -> str:
        lines = [f"{'check':<28}{'statistic':>14}  {'band':<30}{'n':>9}  result"]
        for c in self.checks:
            band = f"[{c.band[0]:.4g}, {c.band[1]:.4g}]"
            result = "skip" if c.skipped else ("PASS" if c.passed else "FAIL")
            lines.append(f"{c.name:<28}{c.statistic:>14.6g}  {band:<30}{c.n_samples:>9}  {result}")
        return "\n".join(lines)


def band_halfwidth(n: int, mean: float) -> float:
    return 2 * math.log(n) * math.sqrt(mean)


def expected_offset_degree(design: PoolingDesign) -> float:
    """Mean of Delta_x[j] over bulk items, P * (Gamma/s) * ell / n."""
    return design.P * design.g * design.ell / design.n


def check_degrees(design: PoolingDesign) -> DiagnosticsReport:
    mean = expected_offset_degree(design)
    half = band_halfwidth(design.n, mean)
    band = (mean - half, mean + half)
    bulk = slice(design.n_seed, design.n_items)
    checks = []
    for name, arr in (("degree_band", design.degree[bulk]), ("distinct_degree_band", design.distinct_degree[bulk])):
        dev = np.abs(arr - mean)
        worst = np.unravel_index(np.argmax(dev), arr.shape)
        detail = {
            "min": int(arr.min()),
            "max": int(arr.max()),
            "worst_item": int(worst[0] + design.n_seed),
            "worst_offset": int(worst[1]),
        }
        skipped = mean < SMALL_MEAN
        ok = skipped or bool(arr.min() >= band[0] and arr.max() <= band[1])
        checks.append(Check(name, "degree concentration per window offset", float(dev.max()), band, ok,
                            arr.size, skipped, detail))

    total = design.degree[bulk].sum(axis=1)
    distinct = design.distinct_degree[bulk].sum(axis=1)
    has = total > 0
    ratio = float(np.mean(distinct[has] / total[has])) if has.any() else 1.0
    floor = 1 - 3 / math.sqrt(design.m)
    checks.append(Check("distinct_to_total_degree", "multi-edges are rare", ratio, (floor, 1.0),
                        ratio >= floor, int(has.sum())))
    return DiagnosticsReport(checks)


def check_counts(signal: Signal, params: DesignParams, design: PoolingDesign) -> DiagnosticsReport:
    bulk = signal.compartment_counts[design.s - 1:]
    checks = []
    for w, kw in enumerate(params.counts, start=1):
        mean = kw / design.ell
        half = band_halfwidth(params.n, mean) if mean > 0 else 0.0
        col = bulk[:, w]
        dev = float(np.max(np.abs(col - mean))) if kw else 0.0
        skipped = mean < SMALL_MEAN
        ok = skipped or dev <= half
        checks.append(Check(f"weight_{w}_count_band", "per-compartment weight counts concentrate",
                            dev, (0.0, half), ok, len(col), skipped,
                            {"min": int(col.min()), "max": int(col.max()), "mean": mean}))
    return DiagnosticsReport(checks)


DENSITY_RESIDUAL_TOL = 0.1


def check_density(derived: DerivedParams, params: DesignParams) -> DiagnosticsReport:
    """Density conditions on the realised (rounded) ell, s, m.

    Gating: Delta/s = sqrt(m)/ell must grow (positive exponent in base n) and
    s^2/ell must shrink (negative exponent). The residual-to-signal scale
    comparison is reported but does not gate.
    """
    log_n = math.log(params.n)
    degree_ratio = math.sqrt(derived.m) / derived.ell
    density_ratio = derived.s**2 / derived.ell
    e_deg = math.log(degree_ratio) / log_n
    e_den = math.log(density_ratio) / log_n
    residual = math.sqrt(density_ratio) * log_n
    signal = math.log(derived.s)
    return DiagnosticsReport([
        Check("degree_ratio_exponent", "Delta/s = n^{Omega(1)}", e_deg, (0.0, math.inf), e_deg > 0, 1),
        Check("density_ratio_exponent", "s^2/ell = n^{-Omega(1)}", e_den, (-math.inf, 0.0), e_den < 0, 1),
        Check("residual_vs_signal_scale", "approximation error small against ln s",
              residual / signal if signal > 0 else math.inf, (0.0, DENSITY_RESIDUAL_TOL),
              True, 1, skipped=True,
              detail={"within_tolerance": residual <= DENSITY_RESIDUAL_TOL * signal}),
    ])


def residual_bound(params: DesignParams) -> float:
    """20 sum_w w sqrt(eps_w) k^{-eps/2} ln n."""
    w = np.arange(1, params.d + 1)
    k = max(params.k, 1)
    return float(20 * np.sum(w * np.sqrt(params.fractions)) * k ** (-params.eps_design / 2) * math.log(params.n))


def first_compartment_residuals(design: PoolingDesign, measurements: np.ndarray, signal: Signal,
                                params: DesignParams) -> np.ndarray:
    """Decoder score minus idealized score on the first bulk compartment."""
    i = design.s - 1
    state = DecoderState(design, measurements, signal.seed_labels)
    return compartment_scores(design, params, state, i) - idealized_scores(design, measurements, signal, params, i)


def check_residuals(design: PoolingDesign, measurements: np.ndarray, signal: Signal,
                    params: DesignParams) -> DiagnosticsReport:
    R = first_compartment_residuals(design, measurements, signal, params)
    bound = residual_bound(params)
    frac = float(np.mean(np.abs(R) <= bound))
    detail = {"bound": bound, "median_abs": float(np.median(np.abs(R))), "max_abs": float(np.max(np.abs(R)))}
    return DiagnosticsReport([
        Check("residual_fraction_within_bound", "decoder score close to idealized score", frac,
              (RESIDUAL_PASS_FRACTION, 1.0), frac >= RESIDUAL_PASS_FRACTION, len(R), detail=detail),
    ])


def concentration_event(design: PoolingDesign, signal: Signal, params: DesignParams) -> dict:
    """The three band events on degrees, distinct degrees and weight counts (all weights incl. 0)."""
    mean = expected_offset_degree(design)
    half = band_halfwidth(design.n, mean)
    bulk = slice(design.n_seed, design.n_items)
    k1 = bool(np.all(np.abs(design.degree[bulk] - mean) <= half))
    k2 = bool(np.all(np.abs(design.distinct_degree[bulk] - mean) <= half))
    counts = signal.compartment_counts[design.s - 1:]
    k3 = True
    for w, kw in enumerate((params.n - params.k,) + params.counts):
        target = kw / design.ell
        k3 &= bool(np.all(np.abs(counts[:, w] - target) <= band_halfwidth(params.n, target)))
    return {"K1": k1, "K2": k2, "K3": k3, "K": k1 and k2 and k3}


def run_all(design: PoolingDesign, measurements: np.ndarray, signal: Signal,
            params: DesignParams, derived: Optional[DerivedParams] = None) -> DiagnosticsReport:
    derived = derived or design.derived
    return (check_degrees(design) + check_counts(signal, params, design)
            + check_density(derived, params) + check_residuals(design, measurements, signal, params))
