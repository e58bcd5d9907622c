"""Threshold decoder sweeping the ring compartment by compartment.

For every bulk item ``x`` of the current compartment ``i`` and every window
offset ``j`` the decoder sums the residuals (measurement minus the part
explained by the current estimate) of the distinct pools ``x`` joins in pool
compartment ``i + j``, centres that sum with a plug-in estimate of its mean,
normalises, and adds the offsets with weights ``(j+1)^{-1/2}``. The resulting
score is compared against fixed thresholds.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .design import DerivedParams, DesignParams, PoolingDesign


@dataclass(frozen=True)
class Thresholds:
    t01: float
    steps: tuple[float, ...]
    base: float

    @property
    def values(self) -> np.ndarray:
        return np.array((self.t01,) + self.steps)


def threshold_values(theta: float, c: float, log_s: float, d: int, alpha: Optional[float] = None) -> Thresholds:
    if alpha is None:
        alpha = math.sqrt(theta) / (1 + math.sqrt(theta))
    base = math.sqrt(2 * c * (1 - theta) / theta) * log_s
    steps = tuple((i + 0.5) * base for i in range(1, d))
    return Thresholds(t01=(1 - alpha) * base, steps=steps, base=base)


def thresholds(derived: DerivedParams, d: int, alpha: Optional[float] = None) -> Thresholds:
    if derived.s < 2:
        raise ValueError("thresholds need a sliding window s >= 2")
    if alpha is None:
        alpha = derived.alpha
    return threshold_values(derived.theta, derived.c, math.log(derived.s), d, alpha)


def classify(score, th: Thresholds):
    """Label(s) for score(s): the number of thresholds at or below the score."""
    labels = np.searchsorted(th.values, score, side="right")
    return int(labels) if np.ndim(labels) == 0 else labels.astype(np.int8)


class DecoderState:
    """Current estimate and per-pool residuals ``measurement - sum of estimates``."""

    def __init__(self, design: PoolingDesign, measurements: np.ndarray, seed_labels: np.ndarray):
        if len(measurements) != design.m:
            raise ValueError("measurement vector does not match the design")
        if len(seed_labels) != design.n_seed:
            raise ValueError("seed labels do not match the design")
        self.design = design
        self.measurements = np.asarray(measurements, dtype=np.int64)
        self.estimate = np.zeros(design.n_items, dtype=np.int8)
        self.residual = self.measurements.copy()
        self.committed = np.zeros(design.L, dtype=bool)
        seed_labels = np.asarray(seed_labels)
        for i in range(design.s - 1):
            self.commit(i, seed_labels[design.items(i)])
        self.frontier = design.s - 1

    def commit(self, i: int, labels: np.ndarray) -> None:
        design = self.design
        rows = design.items(i)
        change = labels.astype(np.int64) - self.estimate[rows]
        self.estimate[rows] = labels
        lo = design.bounds[i]
        for j in range(design.s):
            blk = design.block(i, j)
            self.residual[design.pools(i + j)] -= change[blk - lo].sum(axis=1)
        self.committed[i] = True
        self.frontier = i + 1

    def unexplained_count(self, i: int, j: int) -> int:
        """Window compartments of pool compartment ``i+j`` that are bulk and not yet decoded."""
        design = self.design
        return sum(1 for r in design.window(i + j) if r >= design.s - 1 and not self.committed[r])

    def recomputed_residual(self) -> np.ndarray:
        from .signal import pool_sums
        return self.measurements - pool_sums(self.design, self.estimate)


def _norm_scale(params: DesignParams) -> float:
    """k^{2 eps}; k = 0 is treated as k = 1 to keep the scale finite."""
    return max(params.k, 1) ** (2 * params.eps_design)


def unexplained_sums(design: PoolingDesign, residual: np.ndarray, i: int, j: int) -> np.ndarray:
    """Sum of residuals over the distinct pools of each item of compartment ``i`` in pool compartment ``i+j``."""
    blk = design.block(i, j)
    first = design.first_occurrence(blk)
    res = np.broadcast_to(residual[design.pools(i + j)][:, None], blk.shape)
    local = blk[first].astype(np.int64) - design.bounds[i]
    return np.bincount(local, weights=res[first].astype(np.float64), minlength=int(design.sizes[i]))


def unexplained_sum(x: int, j: int, design: PoolingDesign, state: DecoderState) -> float:
    pools, _ = design.neighbours(x, j)
    return float(state.residual[pools].sum())


def expectation_estimates(design: PoolingDesign, params: DesignParams, i: int, j: int, u: int) -> np.ndarray:
    rows = design.items(i)
    return expectation_formula(params.counts, params.n, design.distinct_degree[rows, j], design.degree[rows, j], design.g, u)


def expectation_formula(counts, n: int, distinct_degree, degree, per_block: int, u: int):
    """sum_w w (k_w/n) (u Delta*_x[j] Gamma/s - Delta_x[j])."""
    weight = sum(w * kw for w, kw in enumerate(counts, start=1))
    return weight / n * (u * np.asarray(distinct_degree) * per_block - np.asarray(degree))


def expectation_estimate(x: int, j: int, design: PoolingDesign, params: DesignParams, u: int) -> float:
    return float(expectation_formula(params.counts, params.n, design.distinct_degree[x, j], design.degree[x, j], design.g, u))


def compartment_scores(design: PoolingDesign, params: DesignParams, state: DecoderState, i: int) -> np.ndarray:
    """Weighted normalised unexplained sums for every item of compartment ``i`` against the current state."""
    scale = _norm_scale(params)
    total = np.zeros(int(design.sizes[i]))
    for j in range(design.s):
        u = state.unexplained_count(i, j)
        U = unexplained_sums(design, state.residual, i, j)
        M = expectation_estimates(design, params, i, j, u)
        total += (U - M) / math.sqrt((j + 1) * u * scale)
    return total


def score(x: int, design: PoolingDesign, params: DesignParams, state: DecoderState) -> float:
    i = int(design.item_compartment[x])
    scale = _norm_scale(params)
    out = 0.0
    for j in range(design.s):
        u = state.unexplained_count(i, j)
        dev = unexplained_sum(x, j, design, state) - expectation_estimate(x, j, design, params, u)
        out += dev / math.sqrt((j + 1) * u * scale)
    return out


@dataclass
class DecodeReport:
    estimate: np.ndarray
    n_seed: int
    d: int
    runtime_ms: float
    mismatches_per_compartment: Optional[list[int]] = None
    scores: Optional[np.ndarray] = None
    truth: Optional[np.ndarray] = field(default=None, repr=False)
    compartment: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def bulk_estimate(self) -> np.ndarray:
        return self.estimate[self.n_seed:]

    @property
    def histogram(self) -> list[int]:
        return np.bincount(self.bulk_estimate, minlength=self.d + 1).tolist()

    @property
    def total_errors(self) -> Optional[int]:
        if self.mismatches_per_compartment is None:
            return None
        return sum(self.mismatches_per_compartment)

    @property
    def success(self) -> Optional[bool]:
        errors = self.total_errors
        return None if errors is None else errors == 0

    def to_dict(self) -> dict:
        return {
            "histogram": self.histogram,
            "mismatches_per_compartment": self.mismatches_per_compartment,
            "total_errors": self.total_errors,
            "runtime_ms": self.runtime_ms,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def trace_csv(self) -> str:
        if self.scores is None:
            raise ValueError("decode was run without score tracing")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["item", "compartment", "score", "label_true", "label_est"])
        for x in range(self.n_seed, len(self.estimate)):
            true = "" if self.truth is None else int(self.truth[x])
            w.writerow([x, int(self.compartment[x]), repr(float(self.scores[x - self.n_seed])), true, int(self.estimate[x])])
        return buf.getvalue()


def decode(
    design: PoolingDesign,
    measurements: np.ndarray,
    params: DesignParams,
    th: Thresholds,
    seed_labels: np.ndarray,
    truth: Optional[np.ndarray] = None,
    trace: bool = False,
    on_commit: Optional[Callable[[int, DecoderState], None]] = None,
) -> DecodeReport:
    """Run the sweep over bulk compartments ``s-1 .. L-1``.

    Scores of a compartment are all computed before any of its labels is set.
    ``on_commit(i, state)`` is called after each compartment is committed.
    """
    start = time.perf_counter()
    state = DecoderState(design, measurements, seed_labels)
    scores = np.empty(design.n) if trace else None
    for i in design.bulk_compartments:
        sc = compartment_scores(design, params, state, i)
        if trace:
            rows = design.items(i)
            scores[rows.start - design.n_seed:rows.stop - design.n_seed] = sc
        state.commit(i, classify(sc, th))
        if on_commit is not None:
            on_commit(i, state)
    runtime_ms = (time.perf_counter() - start) * 1e3

    mismatches = None
    if truth is not None:
        wrong = state.estimate != np.asarray(truth)
        mismatches = [int(wrong[design.items(i)].sum()) for i in design.bulk_compartments]
    return DecodeReport(
        estimate=state.estimate,
        n_seed=design.n_seed,
        d=params.d,
        runtime_ms=runtime_ms,
        mismatches_per_compartment=mismatches,
        scores=scores,
        truth=None if truth is None else np.asarray(truth),
        compartment=design.item_compartment,
    )
