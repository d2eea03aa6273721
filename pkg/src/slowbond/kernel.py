"""Symmetric jump laws, their moments, and the slow-bond sums at the origin.

A jump law is stored by its positive half: ``half_weights[k]`` is the mass of
a jump of size ``+(k + 1)``; the mass of ``-(k + 1)`` is identical.  Every
derived constant is computed from the stored (truncated, renormalized)
weights so that the particle simulator and the limiting PDE share them.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

DEFAULT_Z_MAX = 256
_SUM_TOL = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    """Description of a jump law before it is materialized.

    Use :meth:`finite_range` or :meth:`long_range` rather than the raw
    constructor.
    """

    kind: str
    probs: tuple = ()
    gamma: float | None = None
    z_max: int | None = None

    @classmethod
    def finite_range(cls, probs):
        return cls(kind="finite_range", probs=tuple(float(p) for p in probs))

    @classmethod
    def long_range(cls, gamma, z_max=DEFAULT_Z_MAX):
        return cls(kind="long_range", gamma=float(gamma), z_max=int(z_max))

    @classmethod
    def nearest_neighbor(cls):
        return cls.finite_range([0.5])

    def validate(self):
        if self.kind == "finite_range":
            p = np.asarray(self.probs, dtype=float)
            if p.size == 0:
                raise ConfigurationError("finite-range kernel needs at least p_1")
            if np.any(p < 0):
                raise ConfigurationError("finite-range probabilities must be >= 0")
            if p[0] <= 0:
                raise ConfigurationError("p_1 must be positive (jumps of size 1 are required)")
            if abs(p.sum() - 0.5) > _SUM_TOL:
                raise ConfigurationError(f"finite-range probabilities must sum to 1/2, got {p.sum()!r}")
        elif self.kind == "long_range":
            if self.gamma is None or not self.gamma > 2:
                raise ConfigurationError(f"long-range kernel needs gamma > 2 (finite variance), got {self.gamma}")
            if self.z_max is None or self.z_max < 1:
                raise ConfigurationError("long-range kernel needs a cutoff z_max >= 1")
        else:
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")

    def to_dict(self):
        if self.kind == "finite_range":
            return {"kind": self.kind, "probs": list(self.probs)}
        return {"kind": self.kind, "gamma": self.gamma, "z_max": self.z_max}

    @classmethod
    def from_dict(cls, d):
        kind = d.get("kind")
        if kind == "finite_range":
            return cls.finite_range(d["probs"])
        if kind == "long_range":
            return cls.long_range(d["gamma"], d.get("z_max", DEFAULT_Z_MAX))
        if kind == "nearest_neighbor":
            return cls.nearest_neighbor()
        raise ConfigurationError(f"unknown kernel kind {kind!r}")


def alias_table(weights):
    """Vose alias table for a discrete law with the given non-negative weights.

    Returns ``(prob, alias)``: draw a column ``k`` uniformly, keep it with
    probability ``prob[k]``, otherwise take ``alias[k]``.
    """
    w = np.asarray(weights, dtype=float)
    k = w.size
    scaled = w * k / w.sum()
    prob = np.ones(k)
    alias = np.arange(k, dtype=np.int64)
    small = [i for i in range(k) if scaled[i] < 1.0]
    large = [i for i in range(k) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        prob[s] = scaled[s]
        alias[s] = g
        scaled[g] -= 1.0 - scaled[s]
        if scaled[g] < 1.0:
            small.append(g)
        else:
            large.append(g)
    # leftovers are 1 up to rounding
    for i in small + large:
        prob[i] = 1.0
        alias[i] = i
    return prob, alias


@dataclass(frozen=True, eq=False)
class JumpKernel:
    """Materialized symmetric jump law with its moments.

    ``sigma2`` is the variance sum_z z^2 p(z) and ``m`` the positive-side first
    moment sum_{z>=1} z p(z), both over the stored support.  ``c_gamma`` is the
    normalizing constant of a long-range law (``None`` for finite range).
    The alias arrays index the signed displacements ``displacements``.
    """

    spec: KernelSpec
    half_weights: np.ndarray
    sigma2: float
    m: float
    total: float
    c_gamma: float | None
    displacements: np.ndarray = field(repr=False)
    alias_prob: np.ndarray = field(repr=False)
    alias_index: np.ndarray = field(repr=False)

    @property
    def z_max(self):
        return int(self.half_weights.size)

    def p(self, z):
        """Jump probability p(z), vectorized over integer ``z``."""
        z = np.abs(np.asarray(z, dtype=np.int64))
        inside = (z >= 1) & (z <= self.z_max)
        out = np.zeros(z.shape, dtype=float)
        out[inside] = self.half_weights[z[inside] - 1]
        return out if out.ndim else float(out)


def build_kernel(spec: KernelSpec) -> JumpKernel:
    spec.validate()
    if spec.kind == "finite_range":
        half = np.array(spec.probs, dtype=float)
        c_gamma = None
    else:
        z = np.arange(1, spec.z_max + 1, dtype=float)
        raw = z ** (-spec.gamma - 1.0)
        c_gamma = 1.0 / (2.0 * raw.sum())
        half = c_gamma * raw
    # renormalize so that the two-sided mass is exactly one
    half = half / (2.0 * half.sum())
    z = np.arange(1, half.size + 1, dtype=float)
    sigma2 = float(2.0 * np.sum(z * z * half))
    m = float(np.sum(z * half))
    total = float(2.0 * half.sum())

    signed = np.concatenate([-np.arange(half.size, 0, -1), np.arange(1, half.size + 1)]).astype(np.int64)
    weights = np.concatenate([half[::-1], half])
    prob, alias = alias_table(weights)
    for arr in (half, signed, prob, alias):
        arr.setflags(write=False)
    return JumpKernel(spec=spec, half_weights=half, sigma2=sigma2, m=m, total=total,
                      c_gamma=c_gamma, displacements=signed, alias_prob=prob, alias_index=alias)


def untruncated_constants(gamma, cutoff=10**5):
    """Constants ``(c_gamma, sigma2, m)`` of the infinite-support power law.

    Partial sums up to ``cutoff`` plus an Euler-Maclaurin tail
    int_Z^inf x^-s dx - Z^-s/2 + s Z^(-s-1)/12.
    """
    if not gamma > 2:
        raise ConfigurationError("gamma must exceed 2")
    z = np.arange(1, cutoff + 1, dtype=float)

    def zeta_sum(s):
        head = np.sum(z ** -s)
        tail = cutoff ** (1.0 - s) / (s - 1.0) - 0.5 * cutoff ** -s + s * cutoff ** (-s - 1.0) / 12.0
        return head + tail

    c = 1.0 / (2.0 * zeta_sum(gamma + 1.0))
    return c, 2.0 * c * zeta_sum(gamma - 1.0), c * zeta_sum(gamma)


@dataclass(frozen=True)
class BarrierSpec:
    """Slow bonds across the origin.

    ``mode="full"`` makes every bond {x, y} with x < 0 <= y slow.  With
    ``mode="bridges"`` the listed bonds are removed from the slow set and stay
    fast.  Slow bonds carry the rate factor ``alpha * n**-beta``.
    """

    mode: str = "full"
    alpha: float = 1.0
    beta: float = 0.0
    bridges: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "bridges", tuple(tuple(int(v) for v in b) for b in self.bridges))

    def validate(self, kernel: JumpKernel | None = None):
        if not self.alpha > 0:
            raise ConfigurationError("alpha must be positive")
        if not self.beta >= 0:
            raise ConfigurationError("beta must be non-negative")
        if self.mode == "full":
            if self.bridges:
                raise ConfigurationError("full barrier cannot list bridges")
        elif self.mode == "bridges":
            if not self.bridges:
                raise ConfigurationError("bridges mode needs at least one bridge bond")
            for x1, x2 in self.bridges:
                if not x1 < 0 <= x2:
                    raise ConfigurationError(f"bridge {{{x1},{x2}}} must satisfy x1 < 0 <= x2")
                if kernel is not None and kernel.p(x2 - x1) <= 0:
                    raise ConfigurationError(f"bridge {{{x1},{x2}}} has zero jump probability")
            if len(set(self.bridges)) != len(self.bridges):
                raise ConfigurationError("duplicate bridge bonds")
        else:
            raise ConfigurationError(f"unknown barrier mode {self.mode!r}")

    def is_bridge(self, x, y):
        lo, hi = min(x, y), max(x, y)
        return (lo, hi) in self.bridges

    def thinning_probability(self, n):
        """Acceptance probability alpha / n**beta of a proposed slow jump."""
        q = self.alpha * float(n) ** (-self.beta)
        if q > 1.0:
            raise ConfigurationError(f"alpha={self.alpha} exceeds n**beta={float(n) ** self.beta} at n={n}")
        return q

    def bridge_array(self):
        if not self.bridges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.array(self.bridges, dtype=np.int64)

    def to_dict(self):
        return {"mode": self.mode, "alpha": self.alpha, "beta": self.beta,
                "bridges": [list(b) for b in self.bridges]}

    @classmethod
    def from_dict(cls, d):
        return cls(mode=d.get("mode", "full"), alpha=float(d.get("alpha", 1.0)),
                   beta=float(d.get("beta", 0.0)), bridges=tuple(tuple(b) for b in d.get("bridges", ())))


def slow_bond_sum(kernel: JumpKernel, barrier: BarrierSpec, ordered=True, weight="distance"):
    """Sum of ``w(|y-x|) p(y-x)`` over the slow bonds.

    ``weight="distance"`` uses w(d) = d, ``weight="unit"`` uses w(d) = 1.
    With ``ordered=True`` every bond is counted twice (once per ordered
    pair), which is the convention under which the distance-weighted sum
    over all crossing bonds equals ``sigma2``; ``ordered=False`` counts each
    unordered bond once.  The unit-weighted unordered sum over all crossing
    bonds equals ``m``.
    """
    d = np.arange(1, kernel.z_max + 1, dtype=float)
    w = d if weight == "distance" else np.ones_like(d)
    # d unordered bonds of length d cross the origin
    total = float(np.sum(d * w * kernel.half_weights))
    for x1, x2 in barrier.bridges if barrier.mode == "bridges" else ():
        length = x2 - x1
        total -= (length if weight == "distance" else 1.0) * kernel.p(length)
    return 2.0 * total if ordered else total


def sigma_S2(kernel: JumpKernel, barrier: BarrierSpec) -> float:
    """Slow-bond variance sum_{(x,y) in S} |y-x| p(y-x), ordered-pair counting.

    Equals ``kernel.sigma2`` exactly when the barrier is complete.
    """
    barrier.validate(kernel)
    if barrier.mode == "full":
        return kernel.sigma2
    return slow_bond_sum(kernel, barrier, ordered=True, weight="distance")


def has_complete_barrier(kernel, barrier, rtol=1e-12):
    return abs(sigma_S2(kernel, barrier) - kernel.sigma2) <= rtol * kernel.sigma2


def sample_jump(kernel: JumpKernel, rng: np.random.Generator, size=None):
    """Draw signed displacements from the kernel with its alias table."""
    cols = rng.integers(0, kernel.displacements.size, size=size)
    coin = rng.random(size=size)
    idx = np.where(coin < kernel.alias_prob[cols], cols, kernel.alias_index[cols])
    out = kernel.displacements[idx]
    return int(out) if size is None else out


def describe(kernel: JumpKernel, barrier: BarrierSpec | None = None):
    """Constants shown by ``kernel-info`` as an ordered list of (name, value)."""
    rows = [("kind", kernel.spec.kind), ("z_max", kernel.z_max)]
    if kernel.c_gamma is not None:
        rows.append(("c_gamma", kernel.c_gamma))
        rows.append(("gamma", kernel.spec.gamma))
    rows += [("sigma2", kernel.sigma2), ("m", kernel.m), ("total", kernel.total)]
    if barrier is not None:
        rows.append(("sigma_S2", sigma_S2(kernel, barrier)))
        rows.append(("alpha", barrier.alpha))
        rows.append(("beta", barrier.beta))
    return rows
