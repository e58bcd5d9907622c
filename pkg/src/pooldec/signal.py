"""Ground-truth labels and additive pool measurements."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .design import DesignParams, PoolingDesign


@dataclass(frozen=True)
class Signal:
    """Labels over all ``n' + n`` items, seed items first (global item order).

    ``compartment_counts[c, w]`` is the number of items of weight ``w`` in
    item compartment ``c``; column 0 counts the zero-weight items.
    """

    labels: np.ndarray
    n_seed: int
    compartment_counts: np.ndarray

    @property
    def seed_labels(self) -> np.ndarray:
        return self.labels[:self.n_seed]

    @property
    def bulk_labels(self) -> np.ndarray:
        return self.labels[self.n_seed:]

    @property
    def d(self) -> int:
        return self.compartment_counts.shape[1] - 1


def seed_counts(params: DesignParams, ell: int, s: int) -> list[int]:
    """k'_w = ceil((s-1) k_w / ell) weight-w auxiliary items."""
    return [-(-(s - 1) * kw // ell) for kw in params.counts]


def _arrangement(rng: np.random.Generator, size: int, counts) -> np.ndarray:
    """Uniformly random vector of length ``size`` with ``counts[w-1]`` entries equal to w."""
    labels = np.zeros(size, dtype=np.int8)
    pos = 0
    for w, kw in enumerate(counts, start=1):
        labels[pos:pos + kw] = w
        pos += kw
    rng.shuffle(labels)
    return labels


def compartment_counts(design: PoolingDesign, labels: np.ndarray, d: int) -> np.ndarray:
    comp = design.item_compartment
    flat = np.bincount(comp * (d + 1) + labels.astype(np.int64), minlength=design.L * (d + 1))
    return flat.reshape(design.L, d + 1)


def make_signal(design: PoolingDesign, labels: np.ndarray, d: int | None = None) -> Signal:
    labels = np.ascontiguousarray(labels, dtype=np.int8)
    if labels.shape != (design.n_items,):
        raise ValueError(f"expected {design.n_items} labels, got {labels.shape}")
    if d is None:
        d = design.params.d
    labels.setflags(write=False)
    return Signal(labels, design.n_seed, compartment_counts(design, labels, d))


def sample_signal(params: DesignParams, design: PoolingDesign, rng: np.random.Generator) -> Signal:
    seed = seed_counts(params, design.ell, design.s)
    if sum(seed) > design.n_seed:
        raise ValueError(f"seed needs {sum(seed)} non-zero items but has only {design.n_seed} slots")
    bulk = _arrangement(rng, params.n, params.counts)
    tau = _arrangement(rng, design.n_seed, seed)
    return make_signal(design, np.concatenate([tau, bulk]), params.d)


def measure(design: PoolingDesign, signal: Signal) -> np.ndarray:
    return pool_sums(design, signal.labels)


def pool_sums(design: PoolingDesign, labels: np.ndarray) -> np.ndarray:
    """Pool sums with multiplicity, one pool compartment at a time."""
    out = np.empty(design.m, dtype=np.int64)
    for c in range(design.L):
        rows = design.pools(c)
        out[rows] = labels[design.members[rows]].sum(axis=1, dtype=np.int64)
    return out


def measurements_csv(design: PoolingDesign, values: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["pool_index", "compartment", "value"])
    for a, (c, v) in enumerate(zip(design.pool_compartment, values)):
        w.writerow([a, int(c), int(v)])
    return buf.getvalue()


def signal_csv(signal: Signal) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["item_index", "is_seed", "label"])
    for x, label in enumerate(signal.labels):
        w.writerow([x, int(x < signal.n_seed), int(label)])
    return buf.getvalue()


def read_measurements_csv(text: str) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    return np.array([int(r["value"]) for r in rows], dtype=np.int64)
