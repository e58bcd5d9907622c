"""Parameters and construction of the spatially coupled pooling design.

Items and pools are split into ``L = ell + s - 1`` compartments arranged on a
ring. Compartments ``0 .. s-2`` hold the seed (auxiliary items with known
labels), compartments ``s-1 .. L-1`` the ``n`` real items. A pool in pool
compartment ``c`` draws ``Gamma/s`` items uniformly with replacement from each
of the item compartments ``c-s+1, ..., c`` (indices mod ``L``).

Everything here is 0-based: compartment ``c`` in this module is ``c + 1`` in
the usual 1-based notation.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

# Slack for ceil() on floating point values that are integers in exact arithmetic.
_CEIL_TOL = 1e-9


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_TOL)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator keyed by ``(seed, *key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def split_seed(seed: int, *key: int) -> int:
    """Derive a 64-bit child seed from a master seed and an integer key."""
    state = np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class Overrides:
    """Explicit design sizes, used for tiny or oracle instances."""

    ell: Optional[int] = None
    s: Optional[int] = None
    m: Optional[int] = None
    gamma: Optional[int] = None

    def any(self) -> bool:
        return any(v is not None for v in (self.ell, self.s, self.m, self.gamma))


@dataclass(frozen=True)
class DesignParams:
    n: int
    counts: tuple[int, ...]
    eps_design: float = 0.05
    c: Optional[float] = None
    delta: Optional[float] = None
    rng_seed: int = 0
    overrides: Overrides = field(default_factory=Overrides)

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(v) for v in self.counts))
        if self.n < 1:
            raise ValueError("n must be positive")
        if len(self.counts) < 1:
            raise ValueError("counts must hold at least one weight class")
        if any(v < 0 for v in self.counts):
            raise ValueError("counts must be non-negative")
        if self.k > self.n:
            raise ValueError("more non-zero items than items")
        if not 0 < self.eps_design < 0.25:
            raise ValueError("eps_design must lie in (0, 1/4)")
        if self.c is not None and self.delta is not None:
            raise ValueError("give either c or delta, not both")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive")
        if self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must be a 64-bit unsigned integer")

    @property
    def d(self) -> int:
        return len(self.counts)

    @property
    def k(self) -> int:
        return sum(self.counts)

    @property
    def total_weight(self) -> int:
        return sum(w * kw for w, kw in enumerate(self.counts, start=1))

    @property
    def fractions(self) -> np.ndarray:
        """eps_w = k_w / k (zeros when k = 0)."""
        counts = np.asarray(self.counts, dtype=float)
        return counts / self.k if self.k else np.zeros_like(counts)

    @property
    def second_moment(self) -> float:
        """sum_w w^2 eps_w."""
        w = np.arange(1, self.d + 1)
        return float(np.sum(w**2 * self.fractions))


@dataclass(frozen=True)
class DerivedParams:
    theta: float
    ell: int
    s: int
    m: int
    gamma: int
    alpha: float
    c: float
    total_weight: int

    @property
    def n_compartments(self) -> int:
        return self.ell + self.s - 1

    @property
    def pools_per_compartment(self) -> int:
        return self.m // self.n_compartments

    @property
    def per_block(self) -> int:
        """Gamma / s, the draws a pool takes from each compartment of its window."""
        return self.gamma // self.s


def c_from_delta(delta: float, theta: float, second_moment: float) -> float:
    """Smallest rate constant covered by the recovery guarantee for slack ``delta``."""
    r = math.sqrt(theta)
    return (4 + delta) * (1 + r) / (1 - r) * second_moment


def qgt_baseline(theta: float, k: float) -> float:
    """2 (1 - theta) k / theta, the m = c * baseline reference count."""
    return 2 * (1 - theta) * k / theta


def derive_params(params: DesignParams) -> DerivedParams:
    ov = params.overrides
    n, k = params.n, params.k
    if k < 2 and not ov.any():
        raise ValueError(f"k too small: k={k} (need k >= 2 without overrides)")
    if k >= n and not ov.any():
        raise ValueError(f"k must be below n, got k={k}, n={n}")
    if 2 <= k < n:
        theta = math.log(k) / math.log(n)
    elif k < 2:
        # sparsity undefined for k < 2; fall back to the smallest meaningful value
        theta = math.log(2) / math.log(max(n, 3))
    else:
        # k = n (only reachable with overrides): largest value below 1
        theta = math.log(max(n - 1, 2)) / math.log(max(n, 3))
    if not 0 < theta < 1:
        raise ValueError(f"theta={theta} outside (0, 1)")

    eps = params.eps_design
    ell = ov.ell if ov.ell is not None else max(1, _ceil(k ** (0.5 - eps)))
    s = ov.s if ov.s is not None else max(2, _ceil(k ** (0.25 - eps)))
    if ell < 1 or s < 1:
        raise ValueError("ell and s must be positive")
    L = ell + s - 1

    if params.c is not None:
        c_in = params.c
    elif params.delta is not None:
        c_in = c_from_delta(params.delta, theta, params.second_moment)
    else:
        c_in = None

    baseline = qgt_baseline(theta, max(k, 1))
    if ov.m is not None:
        m = ov.m
    elif c_in is None:
        raise ValueError("a rate (c or delta) is required unless m is overridden")
    else:
        m_raw = _ceil(c_in * baseline)
        m = -(-m_raw // L) * L
    if m < L or m % L:
        raise ValueError(f"m={m} must be a positive multiple of ell+s-1={L}")

    if ov.gamma is not None:
        gamma = ov.gamma
    else:
        gamma = s * max(1, round(n / (math.sqrt(m) * L)))
    if gamma < s or gamma % s:
        raise ValueError(f"gamma={gamma} must be a positive multiple of s={s}")

    r = math.sqrt(theta)
    return DerivedParams(
        theta=theta,
        ell=ell,
        s=s,
        m=m,
        gamma=gamma,
        alpha=r / (1 + r),
        c=m / baseline,
        total_weight=params.total_weight,
    )


@dataclass
class FeasibilityReport:
    c: float
    c_min: float
    c_feasible: bool
    f: float
    f_feasible: bool
    degree_ratio: float  # Delta/s = sqrt(m)/ell
    degree_ratio_exponent: float
    density_ratio: float  # Delta^2 ell / m = s^2/ell
    density_ratio_exponent: float
    density_feasible: bool

    @property
    def feasible(self) -> bool:
        return self.c_feasible and self.f_feasible and self.density_feasible

    def to_dict(self) -> dict:
        out = asdict(self)
        out["feasible"] = self.feasible
        return out


def c_min(theta: float, second_moment: float, eps: float) -> float:
    r = math.sqrt(theta)
    return (1 + r) / (1 - r) * second_moment / (0.25 - eps)


def exponent_f(c: float, theta: float, second_moment: float, eps: float) -> float:
    """Exponent that must exceed 1 for the union bound over compartments to vanish."""
    r = math.sqrt(theta)
    return c * (0.25 - eps) * (1 - r) / ((1 + r) * second_moment)


def feasibility_report(derived: DerivedParams, params: DesignParams) -> FeasibilityReport:
    eps = params.eps_design
    mu2 = params.second_moment
    cm = c_min(derived.theta, mu2, eps)
    f = exponent_f(derived.c, derived.theta, mu2, eps)
    log_n = math.log(params.n)
    degree_ratio = math.sqrt(derived.m) / derived.ell
    density_ratio = derived.s**2 / derived.ell
    # margins n^{0.01} / n^{-0.01} stand in for n^{Omega(1)}
    density_ok = degree_ratio > params.n**0.01 and density_ratio < params.n**-0.01
    return FeasibilityReport(
        c=derived.c,
        c_min=cm,
        c_feasible=derived.c >= cm,
        f=f,
        f_feasible=f > 1,
        degree_ratio=degree_ratio,
        degree_ratio_exponent=math.log(degree_ratio) / log_n,
        density_ratio=density_ratio,
        density_ratio_exponent=math.log(density_ratio) / log_n,
        density_feasible=density_ok,
    )


def item_bounds(n: int, ell: int, s: int) -> np.ndarray:
    """Compartment boundaries over the ``n' + n`` items (length ``ell+s``)."""
    hi = -(-n // ell)
    lo = n // ell
    rem = n % ell
    sizes = [hi] * (s - 1) + [hi] * rem + [lo] * (ell - rem)
    return np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)


class PoolingDesign:
    """The bipartite multigraph between items and pools.

    ``members`` has shape ``(m, Gamma)``; columns ``b*g .. (b+1)*g - 1`` with
    ``g = Gamma/s`` hold the draws a pool in compartment ``c`` takes from item
    compartment ``(c - s + 1 + b) mod L``. Each such block is stored sorted,
    which keeps repeated draws adjacent. Item ``x`` of compartment ``i`` meets
    pool compartment ``(i + j) mod L`` through block ``s - 1 - j``.
    """

    def __init__(self, params: DesignParams, derived: DerivedParams, members: np.ndarray):
        self.params = params
        self.derived = derived
        self.n = params.n
        self.ell = derived.ell
        self.s = derived.s
        self.m = derived.m
        self.gamma = derived.gamma
        self.L = derived.n_compartments
        self.P = derived.pools_per_compartment
        self.g = derived.per_block
        self.bounds = item_bounds(self.n, self.ell, self.s)
        self.n_seed = int(self.bounds[self.s - 1])
        self.n_items = int(self.bounds[-1])
        self.sizes = np.diff(self.bounds)
        members = np.ascontiguousarray(members, dtype=np.int32)
        if members.shape != (self.m, self.gamma):
            raise ValueError(f"members has shape {members.shape}, expected {(self.m, self.gamma)}")
        members.setflags(write=False)
        self.members = members
        self.item_compartment = np.repeat(np.arange(self.L), self.sizes)
        self.pool_compartment = np.repeat(np.arange(self.L), self.P)
        self.degree, self.distinct_degree = self._incidence()
        self.degree.setflags(write=False)
        self.distinct_degree.setflags(write=False)

    @property
    def bulk_compartments(self) -> range:
        return range(self.s - 1, self.L)

    def items(self, i: int) -> slice:
        return slice(int(self.bounds[i]), int(self.bounds[i + 1]))

    def pools(self, c: int) -> slice:
        c %= self.L
        return slice(c * self.P, (c + 1) * self.P)

    def window(self, c: int) -> list[int]:
        """Item compartments a pool of compartment ``c`` draws from."""
        return [(c - self.s + 1 + b) % self.L for b in range(self.s)]

    def block(self, i: int, j: int) -> np.ndarray:
        """Slots of pool compartment ``i+j`` that draw from item compartment ``i``.

        Shape ``(P, g)``; row ``t`` belongs to pool ``pools(i+j).start + t``.
        """
        b = self.s - 1 - j
        return self.members[self.pools(i + j), b * self.g:(b + 1) * self.g]

    def first_occurrence(self, block: np.ndarray) -> np.ndarray:
        """Mask of the first slot of each distinct item within each pool row."""
        mask = np.ones(block.shape, dtype=bool)
        mask[:, 1:] = block[:, 1:] != block[:, :-1]
        return mask

    def _incidence(self):
        degree = np.zeros((self.n_items, self.s), dtype=np.int32)
        distinct = np.zeros((self.n_items, self.s), dtype=np.int32)
        for i in range(self.L):
            lo = self.bounds[i]
            size = int(self.sizes[i])
            for j in range(self.s):
                blk = self.block(i, j)
                local = blk.ravel().astype(np.int64) - lo
                degree[lo:lo + size, j] = np.bincount(local, minlength=size)
                first = self.first_occurrence(blk).ravel()
                distinct[lo:lo + size, j] = np.bincount(local[first], minlength=size)
        return degree, distinct

    def neighbours(self, x: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        """Distinct pools of ``x`` in compartment ``(i+j) mod L`` and x's multiplicity in each."""
        i = int(self.item_compartment[x])
        blk = self.block(i, j)
        mult = (blk == x).sum(axis=1)
        rows = np.flatnonzero(mult)
        return self.pools(i + j).start + rows, mult[rows]

    def distinct_pools(self, x: int) -> np.ndarray:
        """The set of pools containing ``x``."""
        return np.concatenate([self.neighbours(x, j)[0] for j in range(self.s)])

    def to_json(self) -> str:
        return json.dumps({
            "params": _params_to_dict(self.params),
            "derived": asdict(self.derived),
            "compartment_bounds": self.bounds.tolist(),
            "pools": self.members.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "PoolingDesign":
        raw = json.loads(text)
        params = _params_from_dict(raw["params"])
        derived = DerivedParams(**raw["derived"])
        design = cls(params, derived, np.asarray(raw["pools"], dtype=np.int32))
        if design.bounds.tolist() != raw["compartment_bounds"]:
            raise ValueError("compartment bounds do not match the parameters")
        return design


def _params_to_dict(params: DesignParams) -> dict:
    out = asdict(params)
    out["counts"] = list(params.counts)
    return out


def _params_from_dict(raw: dict) -> DesignParams:
    raw = dict(raw)
    raw["overrides"] = Overrides(**(raw.get("overrides") or {}))
    raw["counts"] = tuple(raw["counts"])
    return DesignParams(**raw)


def build_design(params: DesignParams, derived: Optional[DerivedParams] = None) -> PoolingDesign:
    """Draw the pooling multigraph; pool ``a`` uses the stream keyed ``(seed, 0, a)``."""
    if derived is None:
        derived = derive_params(params)
    L, s, g, P = derived.n_compartments, derived.s, derived.per_block, derived.pools_per_compartment
    bounds = item_bounds(params.n, derived.ell, s)
    members = np.empty((derived.m, derived.gamma), dtype=np.int32)
    for c in range(L):
        window = [(c - s + 1 + b) % L for b in range(s)]
        lo = bounds[window][:, None]
        hi = bounds[np.add(window, 1)][:, None]
        for t in range(P):
            a = c * P + t
            draws = stream(params.rng_seed, 0, a).integers(lo, hi, size=(s, g))
            draws.sort(axis=1)
            members[a] = draws.ravel()
    return PoolingDesign(params, derived, members)

