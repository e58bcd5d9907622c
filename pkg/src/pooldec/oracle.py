"""Reference computations that do not go through the decoder.

Bound formulas, brute-force decoding of tiny instances, two independent
samplers for the unexplained sum of an item under a perfect prefix, the exact
conditional moments of that sum, idealized scores, and tail-bound exponents.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .decoder import unexplained_sums
from .design import DerivedParams, DesignParams, PoolingDesign
from .signal import Signal, pool_sums

ENUMERATION_CAP = 10**6


# -- bounds -----------------------------------------------------------------


@dataclass
class BoundsReport:
    n: int
    k: int
    theta: float
    delta: float
    total_weight: int
    m_count: int
    m_qgt: float
    m_gk: Optional[float]
    m_pd: float
    m_sc: float

    def to_dict(self) -> dict:
        return asdict(self)


def log_multinomial(n: int, counts: Sequence[int]) -> float:
    k0 = n - sum(counts)
    return float(gammaln(n + 1) - gammaln(k0 + 1) - sum(gammaln(kw + 1) for kw in counts))


def m_count(n: int, counts: Sequence[int]) -> int:
    W = sum(w * kw for w, kw in enumerate(counts, start=1))
    return math.ceil(log_multinomial(n, counts) / math.log(W + 1) - 1e-12)


def m_qgt(theta: float, k: float, literal: bool = False) -> float:
    """Quantitative group testing reference count.

    ``literal=True`` gives ``2^{(1-theta)/theta} k`` instead of the default
    ``2 (1-theta) k / theta``.
    """
    if literal:
        return 2 ** ((1 - theta) / theta) * k
    return 2 * (1 - theta) * k / theta


def m_gk(n: int, W: int) -> Optional[float]:
    if W < 2:
        return None
    return 4 * W * math.log(n / W + 1) / math.log(W)


def m_pd(theta: float, k: float, second_moment: float, delta: float = 0.0) -> float:
    r = math.sqrt(theta)
    return (8 + delta) * (1 + r) / (1 - r) * second_moment * (1 - theta) / theta * k


def m_sc(theta: float, k: float, delta: float = 0.0) -> float:
    return m_pd(theta, k, 1.0, delta)


def bounds(params: DesignParams, derived: DerivedParams, delta: Optional[float] = None,
           literal_qgt: bool = False) -> BoundsReport:
    if params.k < 1:
        raise ValueError("bounds need k >= 1")
    if delta is None:
        delta = params.delta or 0.0
    theta, k = derived.theta, params.k
    W = params.total_weight
    return BoundsReport(
        n=params.n,
        k=k,
        theta=theta,
        delta=delta,
        total_weight=W,
        m_count=m_count(params.n, params.counts),
        m_qgt=m_qgt(theta, k, literal_qgt),
        m_gk=m_gk(params.n, W),
        m_pd=m_pd(theta, k, params.second_moment, delta),
        m_sc=m_sc(theta, k, delta),
    )


# -- exhaustive decoding ----------------------------------------------------


def incidence_matrix(pools: Sequence[Sequence[int]], n: int) -> np.ndarray:
    """Dense ``(m, n)`` matrix of item multiplicities per pool."""
    A = np.zeros((len(pools), n), dtype=np.int64)
    for a, pool in enumerate(pools):
        np.add.at(A[a], np.asarray(pool, dtype=np.int64), 1)
    return A


def n_candidates(n: int, counts: Sequence[int]) -> int:
    out, left = 1, n
    for kw in counts:
        out *= math.comb(left, kw)
        left -= kw
    return out


def arrangements(n: int, counts: Sequence[int]) -> Iterator[np.ndarray]:
    """Every label vector of length ``n`` with ``counts[w-1]`` entries of weight ``w``."""

    def rec(avail: tuple[int, ...], w: int, labels: np.ndarray):
        if w > len(counts):
            yield labels.copy()
            return
        for chosen in combinations(avail, counts[w - 1]):
            labels[list(chosen)] = w
            rest = tuple(a for a in avail if a not in set(chosen))
            yield from rec(rest, w + 1, labels)
            labels[list(chosen)] = 0

    yield from rec(tuple(range(n)), 1, np.zeros(n, dtype=np.int64))


def _chunks(it: Iterable[np.ndarray], size: int) -> Iterator[np.ndarray]:
    buf = []
    for v in it:
        buf.append(v)
        if len(buf) == size:
            yield np.stack(buf)
            buf = []
    if buf:
        yield np.stack(buf)


def exhaustive_decode(
    pools: Union[PoolingDesign, Sequence[Sequence[int]]],
    measurements: Sequence[int],
    counts: Sequence[int],
    n: Optional[int] = None,
    seed_labels: Optional[np.ndarray] = None,
    cap: int = ENUMERATION_CAP,
) -> set[tuple[int, ...]]:
    """All label vectors with the given histogram that reproduce the measurements.

    ``pools`` is either a list of item multisets over ``n`` items or a
    :class:`PoolingDesign`; for a design the seed labels are taken as known and
    the returned tuples cover the ``n`` bulk items only.
    """
    y = np.asarray(measurements, dtype=np.int64)
    if isinstance(pools, PoolingDesign):
        design = pools
        if seed_labels is None:
            raise ValueError("a pooling design needs the known seed labels")
        full = incidence_matrix(design.members.tolist(), design.n_items)
        y = y - full[:, :design.n_seed] @ np.asarray(seed_labels, dtype=np.int64)
        A = full[:, design.n_seed:]
        n = design.n
    else:
        if n is None:
            raise ValueError("n is required for a plain pool list")
        A = incidence_matrix(pools, n)
    total = n_candidates(n, counts)
    if total > cap:
        raise ValueError(f"{total} candidate signals exceed the enumeration cap {cap}")
    feasible = set()
    for batch in _chunks(arrangements(n, counts), 4096):
        ok = np.all(batch @ A.T == y, axis=1)
        feasible.update(tuple(int(v) for v in row) for row in batch[ok])
    return feasible


# -- the unexplained sum under a perfect prefix ------------------------------


def unknown_sources(design: PoolingDesign, i: int, j: int) -> list[int]:
    """Compartments still unlabelled in pool compartment ``i+j`` when the decoder reaches ``i``."""
    return [r for r in design.window(i + j) if r >= i]


def prefix_labels(design: PoolingDesign, signal: Signal, i: int) -> np.ndarray:
    """Truth on the seed and on bulk compartments before ``i``; zero elsewhere."""
    labels = np.array(signal.labels)
    labels[design.bounds[i]:] = 0
    return labels


@dataclass
class ConditionalMoments:
    mean: float
    variance: float
    trials: dict  # compartment r -> number of draws n^{(r;j)}
    probs: dict  # compartment r -> array p^{(r;j)}(w), w = 0..d


def _source_params(design: PoolingDesign, signal: Signal, x: int, j: int):
    i = int(design.item_compartment[x])
    K = signal.compartment_counts
    label = int(signal.labels[x])
    distinct = int(design.distinct_degree[x, j])
    degree = int(design.degree[x, j])
    trials, probs = {}, {}
    for r in unknown_sources(design, i, j):
        if r == i:
            counts = K[r].astype(float)
            counts[label] -= 1
            trials[r] = distinct * design.g - degree
            probs[r] = counts / (design.sizes[r] - 1)
        else:
            trials[r] = distinct * design.g
            probs[r] = K[r] / design.sizes[r]
    return i, label, degree, trials, probs


def conditional_moments(x: int, j: int, design: PoolingDesign, signal: Signal) -> ConditionalMoments:
    _, label, degree, trials, probs = _source_params(design, signal, x, j)
    w = np.arange(signal.d + 1)
    mean = degree * label
    var = 0.0
    for r, nr in trials.items():
        p = probs[r]
        mean += nr * float(w @ p)
        var += nr * (float(w**2 @ p) - float(w @ p) ** 2)
    return ConditionalMoments(mean=float(mean), variance=var, trials=trials, probs=probs)


def compartment_moments(design: PoolingDesign, signal: Signal, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean and variance of the unexplained sum for every item of compartment ``i``."""
    rows = design.items(i)
    K = signal.compartment_counts
    d = signal.d
    w = np.arange(d + 1)
    labels = signal.labels[rows].astype(np.int64)
    degree = design.degree[rows, j].astype(float)
    distinct = design.distinct_degree[rows, j].astype(float)
    mean = degree * labels
    var = np.zeros(len(labels))
    for r in unknown_sources(design, i, j):
        if r == i:
            nr = distinct * design.g - degree
            # remove x itself from its own compartment's counts
            p = (K[r][None, :] - (labels[:, None] == w[None, :])) / (design.sizes[r] - 1)
        else:
            nr = distinct * design.g
            p = np.broadcast_to(K[r] / design.sizes[r], (len(labels), d + 1))
        m1 = p @ w
        m2 = p @ w**2
        mean = mean + nr * m1
        var = var + nr * (m2 - m1**2)
    return mean, var


def sample_unexplained(
    x: int,
    j: int,
    design: PoolingDesign,
    signal: Signal,
    rng: np.random.Generator,
    mode: str = "direct",
    size: int = 1,
    chunk: int = 10_000,
) -> np.ndarray:
    """Draws of the unexplained sum of ``x`` into pool compartment ``i+j`` given its neighbourhood.

    ``direct`` redraws every non-``x`` slot of x's pools from the unlabelled
    compartments and sums the true labels; ``multinomial`` draws per-compartment
    weight counts in one go.
    """
    i, label, degree, trials, probs = _source_params(design, signal, x, j)
    base = degree * label
    w = np.arange(signal.d + 1)
    out = np.full(size, base, dtype=np.int64)
    if mode == "multinomial":
        for r, nr in trials.items():
            p = np.clip(probs[r], 0, None)
            out += rng.multinomial(nr, p / p.sum(), size=size) @ w
        return out
    if mode != "direct":
        raise ValueError(f"unknown mode {mode!r}")
    labels = signal.labels.astype(np.int64)
    for r, nr in trials.items():
        if nr == 0:
            continue
        lo, sz = int(design.bounds[r]), int(design.sizes[r])
        for start in range(0, size, chunk):
            stop = min(size, start + chunk)
            if r == i:
                idx = rng.integers(0, sz - 1, size=(stop - start, nr)) + lo
                idx += idx >= x  # skip x itself
            else:
                idx = rng.integers(lo, lo + sz, size=(stop - start, nr))
            out[start:stop] += labels[idx].sum(axis=1)
    return out


# -- idealized scores ---------------------------------------------------------


def _norm_scale(params: DesignParams) -> float:
    return max(params.k, 1) ** (2 * params.eps_design)


def idealized_scores(design: PoolingDesign, measurements: np.ndarray, signal: Signal,
                     params: DesignParams, i: int) -> np.ndarray:
    """Scores of compartment ``i`` centred with the exact conditional mean (truth prefix)."""
    residual = np.asarray(measurements, dtype=np.int64) - pool_sums(design, prefix_labels(design, signal, i))
    rows = design.items(i)
    labels = signal.labels[rows].astype(float)
    scale = _norm_scale(params)
    total = np.zeros(int(design.sizes[i]))
    for j in range(design.s):
        u = len(unknown_sources(design, i, j))
        U = unexplained_sums(design, residual, i, j)
        mean, _ = compartment_moments(design, signal, i, j)
        total += (U - mean + design.degree[rows, j] * labels) / math.sqrt((j + 1) * u * scale)
    return total


def idealized_score(x: int, design: PoolingDesign, measurements: np.ndarray, signal: Signal,
                    params: DesignParams) -> float:
    i = int(design.item_compartment[x])
    return float(idealized_scores(design, measurements, signal, params, i)[x - design.bounds[i]])


def idealized_centre(design: PoolingDesign, params: DesignParams, x: int, label: int) -> float:
    """Conditional mean of the idealized score: sum_j Delta_x[j] label / ((j+1) k^eps)."""
    ke = max(params.k, 1) ** params.eps_design
    j = np.arange(design.s)
    return float(np.sum(design.degree[x] * label / ((j + 1) * ke)))


# -- tail exponents -----------------------------------------------------------


def exponents(theta: float, c: float, second_moment: float, alpha: float) -> dict:
    """Exponents of s in the misclassification tail bounds (probabilities ~ s^{-e})."""
    rate = c * (1 - theta) / (theta * second_moment)
    return {
        "e_mid": rate / 4,
        "e_zero": (1 - alpha) ** 2 * rate,
        "e_one": alpha**2 * rate,
    }


def error_exponents(params: DesignParams, derived: DerivedParams, alpha: Optional[float] = None) -> dict:
    if alpha is None:
        alpha = derived.alpha
    out = exponents(derived.theta, derived.c, params.second_moment, alpha)
    s, ell = derived.s, derived.ell
    out["margin_zero"] = params.n * s ** -out["e_zero"] / ell
    out["margin_one"] = params.k * s ** -out["e_one"] / ell
    return out


# -- tail bounds used by the statistical tests --------------------------------


def chernoff_binomial(mean: float, eps: float, upper: bool = True) -> float:
    """Bound on P(X >= (1+eps) E X) (upper) or P(X <= (1-eps) E X) for a binomial X."""
    if upper:
        return math.exp(-eps**2 / (2 + eps) * mean)
    return math.exp(-eps**2 / 2 * mean)


def chernoff_hypergeometric(N: int, M: int, K: int, t: float, upper: bool = True) -> float:
    """Bound on P(X - E X >= t) (upper) or P(X - E X <= -t) for X ~ Hyp(N, M, K)."""
    mu = K * M / N
    if upper:
        return math.exp(-t**2 / (2 * (mu + t / 3)))
    return math.exp(-t**2 / (2 * mu))


def bernstein(n: int, variance: float, bound: float, eps: float) -> float:
    """Bound on P(sum of n centred terms >= eps n) with mean variance ``variance`` and |X_i| <= bound."""
    return math.exp(-n * eps**2 / (2 * variance + 2 * bound * eps / 3))


# -- Monte Carlo summaries ------------------------------------------------------


@dataclass
class MCSummary:
    quantity: str
    n_samples: int
    mean: float
    stderr: float
    reference: float

    @classmethod
    def of(cls, quantity: str, samples: np.ndarray, reference: float) -> "MCSummary":
        samples = np.asarray(samples, dtype=float)
        return cls(quantity, len(samples), float(samples.mean()),
                   float(samples.std(ddof=1) / math.sqrt(len(samples))), float(reference))


def mc_summary_csv(rows: Sequence[MCSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "n_samples", "mean", "stderr", "reference"])
    for r in rows:
        w.writerow([r.quantity, r.n_samples, repr(r.mean), repr(r.stderr), repr(r.reference)])
    return buf.getvalue()
