"""Finite-difference solvers for the heat equation d_t rho = (sigma2/2) rho''.

Three regimes on [-L, L] with zero flux at the outer ends:

* ``free``: a single vertex-centered grid, no condition at the origin.
* ``robin``: two half-line grids [-L, 0-] and [0+, L] coupled by
  rho'(0-) = rho'(0+) = kappa * (rho(0+) - rho(0-)).
* ``neumann``: the same with kappa = 0, so the half-lines decouple.

The interface condition enters through one ghost value per side, eliminated
with the centered difference, which keeps the combined system tridiagonal
when the unknowns are ordered left grid then right grid.  Time stepping is
Crank-Nicolson; the very first step is replaced by backward Euler substeps
(Rannacher startup) so that step initial data do not excite the undamped
high-frequency modes of the trapezoidal rule.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import ndtr

from .errors import ConfigurationError, NumericalError

REGIMES = ("free", "robin", "neumann")


def robin_kappa(kernel, alpha):
    """kappa = 2 m alpha / sigma^2."""
    if not alpha > 0:
        raise ConfigurationError("alpha must be positive")
    return 2.0 * kernel.m * alpha / kernel.sigma2


def reference_free_step(a, b, sigma2, t, u):
    """a + (b - a) Phi(u / sqrt(sigma2 t)); the step itself for t <= 0."""
    u = np.asarray(u, dtype=float)
    if t <= 0:
        return np.where(u < 0, float(a), float(b))
    return a + (b - a) * ndtr(u / math.sqrt(sigma2 * t))


@dataclass
class PdeProblem:
    regime: str
    sigma2: float
    initial: object
    horizon: float = 0.1
    half_length: float = 2.0
    du: float = 1 / 256
    dt: float | None = None
    kappa: float = 0.0
    output_times: tuple = ()
    startup_substeps: int = 4

    def validate(self):
        if self.regime not in REGIMES:
            raise ConfigurationError(f"unknown regime {self.regime!r}")
        if self.kappa < 0:
            raise ConfigurationError("kappa must be >= 0")
        if self.regime != "robin" and self.kappa != 0:
            raise ConfigurationError("kappa is only meaningful in the robin regime")
        if not self.sigma2 > 0 or not self.horizon > 0:
            raise ConfigurationError("sigma2 and horizon must be positive")
        cells = self.half_length / self.du
        if abs(cells - round(cells)) > 1e-9 or round(cells) < 2:
            raise ConfigurationError("du must divide the half length L into at least 2 cells")
        if self.step > self.du * (1 + 1e-12):
            raise ConfigurationError("dt must not exceed du")
        if any(t < 0 or t > self.horizon + 1e-12 for t in self.output_times):
            raise ConfigurationError("output times must lie in [0, T]")

    @property
    def step(self):
        return self.du if self.dt is None else self.dt

    @property
    def cells(self):
        return int(round(self.half_length / self.du))

    def refined(self, factor=2):
        """Same problem with du and dt divided by ``factor``."""
        dt = None if self.dt is None else self.dt / factor
        return PdeProblem(self.regime, self.sigma2, self.initial, self.horizon, self.half_length,
                          self.du / factor, dt, self.kappa, self.output_times, self.startup_substeps)


@dataclass
class PdeSolution:
    """Full time history of a solve.

    ``u`` lists the nodes; for the split regimes the origin appears twice,
    first as 0- (end of the left grid, index ``split - 1``) then as 0+
    (index ``split``).  For the free regime ``split`` is None.
    ``values[i]`` is the solution at ``times[i]``; the history includes the
    startup substeps.
    """

    problem: PdeProblem
    times: np.ndarray
    u: np.ndarray
    values: np.ndarray
    split: int | None
    rho_left: np.ndarray = field(init=False)
    rho_right: np.ndarray = field(init=False)
    grad_left: np.ndarray = field(init=False)
    grad_right: np.ndarray = field(init=False)

    def __post_init__(self):
        v, h = self.values, self.problem.du
        if self.split is None:
            i0 = self.u.size // 2
            lo, hi = i0, i0
        else:
            lo, hi = self.split - 1, self.split
        self.rho_left = v[:, lo].copy()
        self.rho_right = v[:, hi].copy()
        # second-order one-sided differences toward the interior of each side
        self.grad_left = (3 * v[:, lo] - 4 * v[:, lo - 1] + v[:, lo - 2]) / (2 * h)
        self.grad_right = (-3 * v[:, hi] + 4 * v[:, hi + 1] - v[:, hi + 2]) / (2 * h)

    @property
    def jump(self):
        return self.rho_right - self.rho_left

    def time_index(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-12:
            raise KeyError(f"time {t} is not on the solution's time grid; add it to output_times")
        return i

    def left_grid(self):
        return (self.u, self.values) if self.split is None else (self.u[: self.split], self.values[:, : self.split])

    def right_grid(self):
        return (self.u, self.values) if self.split is None else (self.u[self.split:], self.values[:, self.split:])

    def evaluate(self, t, x):
        """Linear interpolation at points x; x < 0 reads the left grid, x >= 0 the right."""
        i = self.time_index(t)
        x = np.asarray(x, dtype=float)
        if self.split is None:
            return np.interp(x, self.u, self.values[i])
        ul, vl = self.left_grid()
        ur, vr = self.right_grid()
        return np.where(x < 0, np.interp(x, ul, vl[i]), np.interp(x, ur, vr[i]))

    def weights(self):
        """Trapezoid weights of the node set (half weight at ends and at 0-/0+)."""
        h = self.problem.du
        w = np.full(self.u.size, h)
        w[0] = w[-1] = h / 2
        if self.split is not None:
            w[self.split - 1] = w[self.split] = h / 2
        return w

    def mass(self):
        return self.values @ self.weights()

    def output(self):
        """Rows at the requested output times only, as (times, values)."""
        idx = [self.time_index(t) for t in self.problem.output_times]
        return self.times[idx], self.values[idx]


def _operator(problem):
    """Banded (3, N) form of the discrete (sigma2/2) * Laplacian, and split index."""
    K, h = problem.cells, problem.du
    D = problem.sigma2 / 2
    if problem.regime == "free":
        N = 2 * K + 1
        sizes = [N]
    else:
        N = 2 * (K + 1)
        sizes = [K + 1, K + 1]
    sub = np.zeros(N)
    diag = np.zeros(N)
    sup = np.zeros(N)
    start = 0
    for size in sizes:
        i = np.arange(start, start + size)
        diag[i] = -2.0
        sup[i[:-1]] = 1.0
        sub[i[1:]] = 1.0
        # zero-flux ghost at each end of a grid
        sup[i[0]] = 2.0
        sub[i[-1]] = 2.0
        start += size
    split = None
    if problem.regime != "free":
        split = K + 1
        lm, rp = split - 1, split
        ck = 2.0 * h * problem.kappa
        # ghost at 0-: rho(+h) = rho(-h) + 2h kappa J, J = rho(0+) - rho(0-)
        diag[lm] = -2.0 - ck
        sup[lm] = ck
        sub[rp] = ck
        diag[rp] = -2.0 - ck
    ab = np.zeros((3, N))
    ab[0, 1:] = sup[:-1]
    ab[1] = diag
    ab[2, :-1] = sub[1:]
    return ab * (D / h**2), split


def _apply(ab, x):
    y = ab[1] * x
    y[:-1] += ab[0, 1:] * x[1:]
    y[1:] += ab[2, :-1] * x[:-1]
    return y


def _step_schedule(problem):
    """Step sizes covering [0, T], hitting every output time exactly."""
    marks = sorted({0.0, float(problem.horizon), *map(float, problem.output_times)})
    steps = []
    for a, b in zip(marks[:-1], marks[1:]):
        if b - a <= 1e-15:
            continue
        k = max(1, math.ceil((b - a) / problem.step - 1e-9))
        steps.extend([(b - a) / k] * k)
    return steps


def solve(problem: PdeProblem) -> PdeSolution:
    problem.validate()
    K = problem.cells
    ab, split = _operator(problem)
    if split is None:
        u = np.linspace(-problem.half_length, problem.half_length, 2 * K + 1)
        rho = np.asarray(problem.initial.node_values(u), dtype=float)
    else:
        half = np.linspace(0.0, problem.half_length, K + 1)
        u = np.concatenate([-half[::-1], half])
        rho = np.concatenate([problem.initial.left_limit(u[:split]), problem.initial(u[split:])]).astype(float)
    eye = np.zeros_like(ab)
    eye[1] = 1.0
    times, history = [0.0], [rho.copy()]
    t = 0.0
    cached = {}

    def solve_with(lhs_key, rhs):
        if lhs_key not in cached:
            theta_dt = lhs_key[1]
            cached[lhs_key] = eye - theta_dt * ab
        return solve_banded((1, 1), cached[lhs_key], rhs, check_finite=False)

    for j, dt in enumerate(_step_schedule(problem)):
        if j == 0 and problem.startup_substeps > 0:
            sub = dt / problem.startup_substeps
            for _ in range(problem.startup_substeps):
                rho = solve_with(("be", sub), rho)
                t += sub
                times.append(t)
                history.append(rho.copy())
            continue
        rho = solve_with(("cn", dt / 2), rho + (dt / 2) * _apply(ab, rho))
        t += dt
        times.append(t)
        history.append(rho.copy())
    values = np.array(history)
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite solution for regime={problem.regime} du={problem.du} dt={problem.step}")
    times = np.array(times)
    times[-1] = problem.horizon
    return PdeSolution(problem=problem, times=times, u=u, values=values, split=split)


def self_convergence(problem: PdeProblem, t=None, levels=3):
    """Max-norm errors against a Richardson reference built from the two finest grids.

    Solves at du, du/2, ..., du/2^(levels-1); the reference is
    fine + (fine - previous) / 3 on the coarsest nodes.  Returns the list of
    errors of all but the finest level and the successive error ratios.
    """
    t = problem.horizon if t is None else t
    sols = []
    for k in range(levels):
        p = problem.refined(2**k)
        p.output_times = tuple(sorted(set(p.output_times) | {t}))
        sols.append(solve(p))
    stride = [2**k for k in range(levels)]

    def on_coarse(sol, s):
        v = sol.values[sol.time_index(t)]
        if sol.split is None:
            return v[::s]
        return np.concatenate([v[: sol.split][::s], v[sol.split:][::s]])

    samples = [on_coarse(sol, s) for sol, s in zip(sols, stride)]
    reference = samples[-1] + (samples[-1] - samples[-2]) / 3
    errors = [float(np.max(np.abs(x - reference))) for x in samples[:-1]]
    ratios = [errors[i] / errors[i + 1] for i in range(len(errors) - 1)]
    return errors, ratios


def write_trace_csv(path, solution: PdeSolution):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "rho_left", "rho_right", "grad_left", "grad_right"])
        for row in zip(solution.times, solution.rho_left, solution.rho_right, solution.grad_left,
                       solution.grad_right):
            w.writerow([repr(float(v)) for v in row])
