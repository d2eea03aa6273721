"""Kinetic Monte Carlo for the exclusion process with slow bonds at the origin.

The chain runs on the window of sites -W..W-1 (array index ``x + W``).
Every particle attempts jumps at total rate 1 in microscopic time, so the
system proposes events at the constant rate ``N * n**2`` in macroscopic
time; a proposal moves a uniformly chosen particle by a displacement drawn
from the kernel.  Proposals that leave the window or land on an occupied
site are rejected, and proposals across a slow bond are additionally
accepted with probability ``alpha / n**beta`` (thinning).  The result is
the exact law of the chain with generator n^2 L_n restricted to the window.

Crossing counters are kept for every trajectory: index 0/1 count accepted
slow jumps left-to-right / right-to-left, index 2/3 the same for bridges.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConfigurationError
from .kernel import BarrierSpec, JumpKernel

log = logging.getLogger(__name__)

SLOW_LR, SLOW_RL, BRIDGE_LR, BRIDGE_RL = range(4)
_LOG_CHUNK = 1 << 16
_EMPTY_T = np.empty(0)
_EMPTY_K = np.empty(0, dtype=np.int64)


@dataclass
class ModelConfig:
    kernel: JumpKernel
    barrier: BarrierSpec
    n: int
    window_factor: float = 2.0
    horizon: float = 0.1

    @property
    def half_width(self):
        """W, the number of sites on each side of the origin."""
        return int(round(self.window_factor * self.n))

    def validate(self):
        if self.n < 1:
            raise ConfigurationError("n must be a positive integer")
        if not self.horizon > 0:
            raise ConfigurationError("horizon T must be positive")
        if self.half_width < 1:
            raise ConfigurationError("window must contain at least one site per side")
        self.barrier.validate(self.kernel)
        self.barrier.thinning_probability(self.n)


@dataclass
class TrajectoryPlan:
    model: ModelConfig
    initial_profile: object
    snapshot_times: tuple
    seed: int = 0
    replicas: int = 1
    log_events: bool = False

    def validate(self):
        self.model.validate()
        times = np.asarray(self.snapshot_times, dtype=float)
        if times.size == 0:
            raise ConfigurationError("at least one snapshot time is required")
        if np.any(np.diff(times) < 0):
            raise ConfigurationError("snapshot times must be sorted")
        if times[0] < 0 or times[-1] > self.model.horizon + 1e-12:
            raise ConfigurationError("snapshot times must lie in [0, T]")
        if self.replicas < 1:
            raise ConfigurationError("replicas must be >= 1")


@dataclass
class LatticeState:
    """Occupancy of the window plus bookkeeping.

    ``positions`` lists the array index of every particle (uniform particle
    choice in O(1)); ``occupancy`` answers membership.  ``clock`` is
    macroscopic time.
    """

    half_width: int
    occupancy: np.ndarray
    positions: np.ndarray
    rng: np.random.Generator
    clock: float = 0.0
    crossings: np.ndarray = field(default_factory=lambda: np.zeros(4, dtype=np.int64))
    events: list = field(default_factory=list)

    @property
    def sites(self):
        return np.arange(-self.half_width, self.half_width)

    @property
    def particle_count(self):
        return int(self.positions.size)

    def check(self):
        if self.occupancy.sum() != self.positions.size:
            raise AssertionError("particle count disagrees with occupancy")
        if np.any(self.occupancy[self.positions] != 1):
            raise AssertionError("position index points at an empty site")


def replica_rng(seed, replica):
    """Independent stream for replica ``replica`` of an ensemble seeded by ``seed``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replica),)))


def init_state(plan: TrajectoryPlan, rng: np.random.Generator) -> LatticeState:
    """Product Bernoulli configuration with marginals g(x/n)."""
    W = plan.model.half_width
    x = np.arange(-W, W)
    dens = np.clip(np.asarray(plan.initial_profile(x / plan.model.n), dtype=float), 0.0, 1.0)
    occ = (rng.random(x.size) < dens).astype(np.uint8)
    return LatticeState(half_width=W, occupancy=occ, positions=np.flatnonzero(occ).astype(np.int64), rng=rng)


@numba.njit(cache=True)
def _is_bridge(xs, ys, bridges):
    lo = min(xs, ys)
    hi = max(xs, ys)
    for i in range(bridges.shape[0]):
        if bridges[i, 0] == lo and bridges[i, 1] == hi:
            return True
    return False


@numba.njit(cache=True)
def _evolve(occ, pos, W, count, t, until, rate, logged, disp, aprob, aidx, q_slow, bridges, rng, crossings,
            log_t, log_kind):
    """Run proposals until ``count`` are done (``logged=False``) or the
    exponential clock passes ``until`` / the log buffer fills (``logged=True``).

    Returns (time reached, log entries filled).
    """
    # the Generator must stay in this frame: nested jitted calls taking it are ~10x slower
    npart = pos.size
    ndisp = disp.size
    filled = 0
    done = 0
    while True:
        if logged:
            if filled == log_t.size:
                break
            t += -np.log(1.0 - rng.random()) / rate
            if t > until:
                t = until
                break
        else:
            if done == count:
                break
            done += 1
        k = int(rng.random() * npart)
        if k >= npart:
            k = npart - 1
        v = rng.random() * ndisp
        c = int(v)
        if c >= ndisp:
            c = ndisp - 1
        if v - c >= aprob[c]:
            c = aidx[c]
        x = pos[k]
        y = x + disp[c]
        if y < 0 or y >= 2 * W or occ[y] != 0:
            continue
        xs = x - W
        ys = y - W
        if (xs < 0) != (ys < 0):
            if _is_bridge(xs, ys, bridges):
                kind = BRIDGE_LR if xs < 0 else BRIDGE_RL
            else:
                if rng.random() >= q_slow:
                    continue
                kind = SLOW_LR if xs < 0 else SLOW_RL
            crossings[kind] += 1
            if logged:
                log_t[filled] = t
                log_kind[filled] = kind
                filled += 1
        occ[x] = 0
        occ[y] = 1
        pos[k] = y
    return t, filled


def advance(state: LatticeState, kernel: JumpKernel, barrier: BarrierSpec, n: int, until: float,
            log_events: bool = False) -> LatticeState:
    """Evolve ``state`` in place to macroscopic time ``until`` and return it."""
    if until < state.clock - 1e-15:
        raise ValueError(f"cannot advance backwards from {state.clock} to {until}")
    npart = state.positions.size
    if npart == 0 or until <= state.clock:
        state.clock = max(state.clock, until)
        return state
    q = barrier.thinning_probability(n)
    rate = npart * float(n) ** 2
    args = (kernel.displacements, kernel.alias_prob, kernel.alias_index, q, barrier.bridge_array())
    if not log_events:
        # constant total rate: the proposal count over the interval is Poisson
        count = int(state.rng.poisson(rate * (until - state.clock)))
        _evolve(state.occupancy, state.positions, state.half_width, count, state.clock, until, rate, False,
                *args, state.rng, state.crossings, _EMPTY_T, _EMPTY_K)
        state.clock = until
        return state
    t = state.clock
    buf_t = np.empty(_LOG_CHUNK)
    buf_kind = np.empty(_LOG_CHUNK, dtype=np.int64)
    while t < until:
        t, filled = _evolve(state.occupancy, state.positions, state.half_width, 0, t, until, rate, True,
                            *args, state.rng, state.crossings, buf_t, buf_kind)
        state.events.extend(zip(buf_t[:filled].tolist(), buf_kind[:filled].tolist()))
    state.clock = until
    return state


@dataclass
class EnsembleResult:
    """Snapshots of every replica at the plan's snapshot times.

    ``snapshots`` has shape (replicas, times, 2W) with dtype uint8;
    ``crossings`` holds the cumulative counters (replicas, times, 4);
    ``events`` is a per-replica list of (time, counter index) when logging.
    """

    plan: TrajectoryPlan
    times: np.ndarray
    snapshots: np.ndarray
    crossings: np.ndarray
    events: list | None = None

    @property
    def n(self):
        return self.plan.model.n

    @property
    def half_width(self):
        return self.plan.model.half_width


def run_replica(plan: TrajectoryPlan, replica: int):
    rng = replica_rng(plan.seed, replica)
    state = init_state(plan, rng)
    model = plan.model
    snaps = np.empty((len(plan.snapshot_times), 2 * model.half_width), dtype=np.uint8)
    cross = np.empty((len(plan.snapshot_times), 4), dtype=np.int64)
    for i, t in enumerate(plan.snapshot_times):
        advance(state, model.kernel, model.barrier, model.n, float(t), log_events=plan.log_events)
        snaps[i] = state.occupancy
        cross[i] = state.crossings
    return snaps, cross, (state.events if plan.log_events else None)


def _run_replica_star(args):
    return run_replica(*args)


def run_ensemble(plan: TrajectoryPlan, workers: int = 1) -> EnsembleResult:
    """Run ``plan.replicas`` independent trajectories.

    Replica ``i`` draws from ``SeedSequence(seed, spawn_key=(i,))``, so the
    output depends on the seed only, not on ``workers``.
    """
    plan.validate()
    jobs = [(plan, i) for i in range(plan.replicas)]
    if workers > 1 and plan.replicas > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_replica_star, jobs))
    else:
        results = [run_replica(*job) for job in jobs]
    snaps = np.stack([r[0] for r in results])
    cross = np.stack([r[1] for r in results])
    events = [r[2] for r in results] if plan.log_events else None
    return EnsembleResult(plan=plan, times=np.asarray(plan.snapshot_times, dtype=float), snapshots=snaps,
                          crossings=cross, events=events)
