"""Test functions, weak-form residuals and discrete convergence suites.

Test functions are finite sums G(s, u) = sum_j s^k_j B_j(u) where each B_j
is a C^inf bump.  A term may live on both half-lines (continuous part) or
only on u < 0 or u >= 0, which produces functions that jump at the origin.
Every suite statistic is linear in G at fixed s (except ``tight2condaux``),
so the lattice sums are taken once per term and then combined on the
s-grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError
from .kernel import BarrierSpec, JumpKernel

S_GRID_POINTS = 33
EPSILON_GRID = (1 / 32, 1 / 16, 1 / 8, 1 / 4)
SUITE_KINDS = ("convdisc", "neum1", "lemconvrob", "lemconvneum", "princneu", "tight2condaux")
_DIF_ONLY = ("convdisc", "neum1", "tight2condaux")
_EPS_KINDS = ("lemconvneum", "princneu")


@dataclass(frozen=True)
class Bump:
    """amplitude * exp(1 - 1/(1 - ((u - center)/radius)^2)) on |u - center| < radius.

    The peak value equals ``amplitude``.  ``deriv`` selects the value or one
    of the first three u-derivatives, all in closed form.
    """

    center: float
    radius: float
    amplitude: float = 1.0

    def __call__(self, u, deriv=0):
        u = np.asarray(u, dtype=float)
        s = (u - self.center) / self.radius
        inside = np.abs(s) < 1
        out = np.zeros(u.shape)
        si = s[inside]
        q = 1.0 - si * si
        phi = self.amplitude * np.exp(1.0 - 1.0 / q)
        if deriv == 0:
            out[inside] = phi
        elif deriv == 1:
            out[inside] = phi * (-2.0 * si / (self.radius * q * q))
        else:
            # phi = A exp(L) with L = 1 - 1/q; chain rule on the derivatives of L
            d1 = -2.0 * si / (self.radius * q * q)
            d2 = (-2.0 / q**2 - 8.0 * si * si / q**3) / self.radius**2
            if deriv == 2:
                out[inside] = phi * (d1 * d1 + d2)
            elif deriv == 3:
                d3 = (-24.0 * si / q**3 - 48.0 * si**3 / q**4) / self.radius**3
                out[inside] = phi * (d1**3 + 3.0 * d1 * d2 + d3)
            else:
                raise ValueError("only derivatives up to order 3 are coded")
        return out

    @property
    def reach(self):
        return abs(self.center) + self.radius


@dataclass(frozen=True)
class Term:
    bump: Bump
    power: int = 0
    side: str = "both"  # "both", "left" (u < 0 only) or "right" (u >= 0 only)


@dataclass(frozen=True)
class TestFunction:
    terms: tuple

    __test__ = False  # not a pytest class

    @classmethod
    def continuous(cls, *pairs):
        """Element of S_Dif from (bump, power) pairs."""
        return cls(tuple(Term(b, k, "both") for b, k in pairs))

    @classmethod
    def split(cls, left=(), right=(), both=()):
        """Element of S_Rob: G_- built from ``left`` + ``both``, G_+ from ``right`` + ``both``."""
        terms = [Term(b, k, "left") for b, k in left]
        terms += [Term(b, k, "right") for b, k in right]
        terms += [Term(b, k, "both") for b, k in both]
        return cls(tuple(terms))

    @property
    def space(self):
        return "dif" if all(t.side == "both" for t in self.terms) else "rob"

    @property
    def support_radius(self):
        """b_G: G(s, u) = 0 whenever |u| >= b_G."""
        return max(t.bump.reach for t in self.terms)

    def spatial(self, u, deriv=0, side=None):
        """Matrix (terms, points) of B_j^(deriv)(u) with side masks.

        ``side=None`` assigns u < 0 to the left part and u >= 0 to the right
        part; ``side="left"``/``"right"`` forces one part for every point
        (used for the 0- and 0+ nodes of a split grid).
        """
        u = np.asarray(u, dtype=float)
        out = np.empty((len(self.terms),) + u.shape)
        for j, t in enumerate(self.terms):
            val = t.bump(u, deriv)
            if t.side != "both":
                if side is None:
                    mask = (u < 0) if t.side == "left" else (u >= 0)
                else:
                    mask = np.full(u.shape, side == t.side)
                val = np.where(mask, val, 0.0)
            out[j] = val
        return out

    def time_weights(self, s, deriv=0):
        """Matrix (times, terms) of d^deriv/ds^deriv s^k_j."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((s.size, len(self.terms)))
        for j, t in enumerate(self.terms):
            k = t.power
            if deriv == 0:
                out[:, j] = s**k
            elif k >= 1:
                out[:, j] = k * s ** (k - 1)
            else:
                out[:, j] = 0.0
        return out

    def __call__(self, s, u, deriv=0, side=None):
        """G (or its u-derivative) at scalar s and points u."""
        return (self.time_weights(s) @ self.spatial(np.ravel(u), deriv, side).reshape(len(self.terms), -1)).reshape(
            np.shape(u))

    def d_ds(self, s, u, side=None):
        return (self.time_weights(s, 1) @ self.spatial(np.ravel(u), 0, side).reshape(len(self.terms), -1)).reshape(
            np.shape(u))

    def at_origin(self, side, deriv=0):
        """Vector over terms of B_j^(deriv)(0) restricted to the ``side`` part."""
        return self.spatial(np.zeros(1), deriv, side)[:, 0]


def default_test_function(space="dif"):
    """Smooth test functions used by the convergence suites."""
    if space == "dif":
        return TestFunction.continuous((Bump(0.1, 0.6), 0), (Bump(-0.3, 0.5, 0.5), 1))
    if space == "rob":
        return TestFunction.split(left=[(Bump(-0.2, 0.5), 0), (Bump(-0.1, 0.4, 0.5), 1)],
                                  right=[(Bump(0.25, 0.5, 0.7), 0), (Bump(0.1, 0.4, -0.4), 1)])
    raise ConfigurationError(f"unknown test function space {space!r}")


def weak_test_function(space="dif"):
    """Test functions for residual studies on solver output.

    The split version carries a factor s^2: interface traces of the Robin
    solution behave like a + b sqrt(s) near s = 0, and the trapezoidal rule
    would lose half an order on the trace integrals without it.
    """
    if space == "dif":
        return default_test_function("dif")
    if space == "rob":
        return TestFunction.split(left=[(Bump(-0.2, 0.5), 2)], right=[(Bump(0.25, 0.5, 0.7), 2)])
    raise ConfigurationError(f"unknown test function space {space!r}")


def discrete_Kn(G: TestFunction, kernel: JumpKernel, n, s, x):
    """K_n G(s, x/n) = sum_z [G(s, (x+z)/n) - G(s, x/n)] p(z), for integer x."""
    x = np.atleast_1d(np.asarray(x, dtype=np.int64))
    z = kernel.displacements
    pz = kernel.p(z)
    here = G(s, x / n)
    there = G(s, (x[:, None] + z[None, :]) / n)
    out = (there - here[:, None]) @ pz
    return out if np.ndim(out) else float(out)


# -- weak formulation ---------------------------------------------------------

def _half_grids(solution):
    """(side, node slice, rho trace, gradient trace) for [-L, 0-] and [0+, L].

    A free solution is cut at its node u = 0, which then ends both halves.
    """
    k = solution.split
    if k is None:
        i0 = solution.u.size // 2
        left, right = slice(0, i0 + 1), slice(i0, None)
    else:
        left, right = slice(0, k), slice(k, None)
    return (("left", left, solution.rho_left, solution.grad_left),
            ("right", right, solution.rho_right, solution.grad_right))


def _space_integrals(G, solution, deriv, n_times):
    """int rho(s) B_j^(deriv) du per term, shape (times, terms).

    Trapezoid on each half grid plus the Euler-Maclaurin end correction
    -(h^2/12)[f'(end) - f'(start)] at the origin (G vanishes near +-L), so a
    jump of G at 0 does not cost accuracy.  Terms shared by both sides are
    smooth across 0 and skip the correction.
    """
    h = solution.problem.du
    sided = np.array([t.side != "both" for t in G.terms], dtype=float)
    rho = solution.values[:n_times]
    total = 0.0
    for side, sl, trace, grad in _half_grids(solution):
        u = solution.u[sl]
        w = np.full(u.size, h)
        w[0] = w[-1] = h / 2
        B = G.spatial(u, deriv, side)
        origin = sided * G.spatial(np.zeros(1), deriv, side)[:, 0]
        origin_d = sided * G.spatial(np.zeros(1), deriv + 1, side)[:, 0]
        df0 = grad[:n_times, None] * origin[None, :] + trace[:n_times, None] * origin_d[None, :]
        sign = 1.0 if side == "left" else -1.0
        total = total + (rho[:, sl] * w) @ B.T - sign * h * h / 12 * df0
    return total


@dataclass
class WeakResidualReport:
    functional: str
    value: float
    t: float
    kappa: float | None
    du: float
    time_points: int


def _bulk(solution, G, t, sigma2):
    """The three bulk terms: int rho(t)G(t) - int g G(0) - int_0^t int rho [D lap + d_s] G."""
    if G.support_radius >= solution.problem.half_length:
        raise ConfigurationError("test function support exceeds the solution grid")
    i_t = solution.time_index(t)
    times = solution.times[: i_t + 1]
    D = sigma2 / 2
    r0 = _space_integrals(G, solution, 0, i_t + 1)
    r2 = _space_integrals(G, solution, 2, i_t + 1)
    P = G.time_weights(times)
    dP = G.time_weights(times, 1)
    integrand = np.sum(r0 * dP + D * r2 * P, axis=1)
    final = float(r0[-1] @ P[-1])
    initial = float(r0[0] @ P[0])
    return final - initial - float(trapezoid(integrand, times)), times, i_t


def eval_F_dif(solution, G: TestFunction, t=None):
    """F_Dif for a PDE solution and G in S_Dif, trapezoidal in space and time."""
    if G.space != "dif":
        raise ConfigurationError("F_Dif needs a test function continuous at the origin")
    t = solution.problem.horizon if t is None else t
    value, times, _ = _bulk(solution, G, t, solution.problem.sigma2)
    return WeakResidualReport("F_Dif", value, t, None, solution.problem.du, times.size)


def eval_F_rob(solution, G: TestFunction, kappa, t=None):
    """F_Rob: bulk terms plus the gradient-trace and kappa-jump boundary integrals."""
    if kappa < 0:
        raise ConfigurationError("kappa must be >= 0")
    t = solution.problem.horizon if t is None else t
    sigma2 = solution.problem.sigma2
    D = sigma2 / 2
    value, times, i_t = _bulk(solution, G, t, sigma2)
    P = G.time_weights(times)
    g_l, g_r = P @ G.at_origin("left"), P @ G.at_origin("right")
    dg_l, dg_r = P @ G.at_origin("left", 1), P @ G.at_origin("right", 1)
    rl = solution.rho_left[: i_t + 1]
    rr = solution.rho_right[: i_t + 1]
    value += D * float(trapezoid(dg_l * rl - dg_r * rr, times))
    value += kappa * D * float(trapezoid((rr - rl) * (g_r - g_l), times))
    return WeakResidualReport("F_Rob", value, t, kappa, solution.problem.du, times.size)


def gradient_trace_terms(solution, G: TestFunction, t=None):
    """(sigma2/2) int_0^t [d_u G(0-) rho(0-) - d_u G(0+) rho(0+)] ds alone."""
    t = solution.problem.horizon if t is None else t
    i_t = solution.time_index(t)
    times = solution.times[: i_t + 1]
    P = G.time_weights(times)
    dg_l, dg_r = P @ G.at_origin("left", 1), P @ G.at_origin("right", 1)
    integrand = dg_l * solution.rho_left[: i_t + 1] - dg_r * solution.rho_right[: i_t + 1]
    return solution.problem.sigma2 / 2 * float(trapezoid(integrand, times))


# -- discrete convergence suites ---------------------------------------------

def _crossing_pairs(kernel):
    """All (y, z) with y < 0 <= z and z - y within the kernel range, plus p(z - y)."""
    d = np.arange(1, kernel.z_max + 1)
    lengths = np.repeat(d, d)
    # for length d the left end runs over -d..-1
    offsets = np.concatenate([np.arange(-k, 0) for k in d])
    y = offsets
    z = offsets + lengths
    return y, z, kernel.half_weights[lengths - 1]


def _lattice(G, kernel, n, lo=None, hi=None):
    reach = int(math.ceil(G.support_radius * n)) + kernel.z_max
    lo = -reach if lo is None else max(lo, -reach)
    hi = reach if hi is None else min(hi, reach)
    return np.arange(lo, hi + 1)


def _kn_terms(G, kernel, n, x, side=None, keep=None):
    """Per-term sum_z [B(x+z) - B(x)] p(z), optionally keeping only targets with keep(x+z)."""
    z = kernel.displacements
    pz = kernel.p(z)
    y = x[:, None] + z[None, :]
    By = G.spatial(y / n, 0, side)
    Bx = G.spatial(x / n, 0, side)
    diff = By - Bx[:, :, None]
    if keep is not None:
        diff = np.where(keep(y)[None], diff, 0.0)
    return diff @ pz


def _sup_abs(G, s_grid, Q):
    """max_s |sum_j s^k_j Q_j| (Q of shape (terms,) or (terms, points); points summed after abs)."""
    vals = G.time_weights(s_grid) @ Q.reshape(len(G.terms), -1)
    return np.abs(vals).max(axis=0)


def suite_statistic(kind, G: TestFunction, kernel: JumpKernel, barrier: BarrierSpec, n, epsilon=None,
                    horizon=0.1):
    """Value at one n (and one epsilon for the epsilon-dependent kinds)."""
    if kind not in SUITE_KINDS:
        raise ConfigurationError(f"unknown suite kind {kind!r}")
    if kind in _DIF_ONLY and G.space != "dif":
        raise ConfigurationError(f"{kind} needs a test function in S_Dif")
    if (kind in _EPS_KINDS) != (epsilon is not None):
        raise ConfigurationError(f"{kind} {'needs' if kind in _EPS_KINDS else 'takes no'} epsilon")
    s_grid = np.linspace(0.0, horizon, S_GRID_POINTS)
    D = kernel.sigma2 / 2
    if kind == "convdisc":
        x = _lattice(G, kernel, n)
        Q = n**2 * _kn_terms(G, kernel, n, x) - D * G.spatial(x / n, 2)
        return float(_sup_abs(G, s_grid, Q).sum() / n)
    if kind == "tight2condaux":
        x = _lattice(G, kernel, n)
        z = kernel.displacements
        P = G.time_weights(s_grid)
        Gx = P @ G.spatial(x / n)
        Gy = np.einsum("sj,jxz->sxz", P, G.spatial((x[:, None] + z[None, :]) / n))
        return float((((Gy - Gx[:, :, None]) ** 2) @ kernel.p(z)).sum(axis=1).max())
    if kind == "neum1":
        y, z, p = _crossing_pairs(kernel)
        if barrier.mode == "bridges":
            slow = np.array([not barrier.is_bridge(a, b) for a, b in zip(y, z)])
            y, z, p = y[slow], z[slow], p[slow]
        grad0 = G.spatial(np.zeros(1), 1)[:, 0]
        Q = (n * (G.spatial(z / n) - G.spatial(y / n)) - grad0[:, None] * (z - y)) @ p
        return float(_sup_abs(G, s_grid, Q).max())
    if kind == "lemconvrob":
        y, z, p = _crossing_pairs(kernel)
        jump0 = G.at_origin("left") - G.at_origin("right")
        Q = ((G.spatial(y / n) - G.spatial(z / n)) - jump0[:, None]) @ p
        return float(_sup_abs(G, s_grid, Q).max())
    k = int(math.floor(epsilon * n))
    if k < 1:
        raise ConfigurationError(f"epsilon * n = {epsilon * n} leaves no sites")
    if kind == "lemconvneum":
        zr = np.arange(0, k)
        right = _kn_terms(G, kernel, n, zr, "right", keep=lambda y: y >= 0).sum(axis=1) * n
        right -= G.at_origin("right", 1) * _first_moment_kept(kernel, zr, lambda y: y >= 0)
        zl = np.arange(-k + 1, 0)
        left = _kn_terms(G, kernel, n, zl, "left", keep=lambda y: y <= -1).sum(axis=1) * n if zl.size else 0.0
        left = left - G.at_origin("left", 1) * _first_moment_kept(kernel, zl, lambda y: y <= -1)
        return float(_sup_abs(G, s_grid, np.asarray(right)).max() + _sup_abs(G, s_grid, np.asarray(left)).max())
    # princneu
    zr = _lattice(G, kernel, n, lo=k)
    right = _kn_terms(G, kernel, n, zr, "right", keep=lambda y: y >= 0).sum(axis=1) * n
    zz = _lattice(G, kernel, n, lo=0)
    right -= D / n * G.spatial(zz / n, 2, "right").sum(axis=1)
    zl = _lattice(G, kernel, n, hi=-k)
    left = _kn_terms(G, kernel, n, zl, "left", keep=lambda y: y <= -1).sum(axis=1) * n
    zz = _lattice(G, kernel, n, hi=-1)
    left -= D / n * G.spatial(zz / n, 2, "left").sum(axis=1)
    return float(_sup_abs(G, s_grid, right).max() + _sup_abs(G, s_grid, left).max())


def _first_moment_kept(kernel, x, keep):
    """sum over x in ``x`` of sum_z z p(z) restricted to keep(x + z)."""
    if np.size(x) == 0:
        return 0.0
    z = kernel.displacements
    y = np.asarray(x)[:, None] + z[None, :]
    return float((np.where(keep(y), z[None, :], 0) @ kernel.p(z)).sum())


def convergence_suite(kind, G: TestFunction, kernel: JumpKernel, barrier: BarrierSpec, n_list,
                      eps_grid=EPSILON_GRID, horizon=0.1):
    """Rows (kind, n, epsilon or None, statistic) for every n (and epsilon)."""
    rows = []
    for n in n_list:
        if kind in _EPS_KINDS:
            for eps in eps_grid:
                rows.append((kind, int(n), float(eps), suite_statistic(kind, G, kernel, barrier, n, eps, horizon)))
        else:
            rows.append((kind, int(n), None, suite_statistic(kind, G, kernel, barrier, n, None, horizon)))
    return rows


def write_suite_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "n", "epsilon", "statistic"])
        for kind, n, eps, stat in rows:
            w.writerow([kind, n, "" if eps is None else repr(eps), repr(stat)])


# -- generator decomposition --------------------------------------------------

def generator_terms(G: TestFunction, kernel: JumpKernel, barrier: BarrierSpec, n, occupancy, s=0.0):
    """n^2 L_n <pi, G> for one configuration, computed four ways.

    ``direct`` uses the simulator's rates (jump x -> x+z at rate p(z), times
    alpha / n^beta on slow bonds, blocked when x+z is occupied);
    ``princdif`` + ``extradif`` and ``robterm`` + ``neuterm`` are the two
    rearrangements of the same quantity, with every bond counted once per
    ordered pair.  Sites outside the window are empty.
    """
    eta = np.asarray(occupancy, dtype=float)
    W = eta.size // 2
    x = np.arange(-W, W)
    z = kernel.displacements
    pz = kernel.p(z)
    q = barrier.thinning_probability(n)
    y = x[:, None] + z[None, :]
    eta_y = np.zeros(y.shape)
    inside = (y >= -W) & (y < W)
    eta_y[inside] = eta[y[inside] + W]
    cross = (x[:, None] < 0) != (y < 0)
    if barrier.mode == "bridges":
        for a, b in barrier.bridges:
            cross &= ~(((x[:, None] == a) & (y == b)) | ((x[:, None] == b) & (y == a)))
    Gx = G(s, x / n)
    Gy = G(s, y / n)
    dG = Gy - Gx[:, None]  # G(y) - G(x) for the ordered pair (x, y)
    rate = np.where(cross, q, 1.0) * pz[None, :]
    direct = n * float(np.sum(eta[:, None] * (1 - eta_y) * rate * dG))
    princdif = n * float(np.sum(eta * (dG @ pz)))
    diff_eta = eta[:, None] - eta_y
    # extradif: (n/2)(1 - q) sum over ordered slow pairs of [G(x) - G(y)] p [eta(x) - eta(y)]
    extradif = 0.5 * n * (1 - q) * float(np.sum(np.where(cross, -dG * pz[None, :] * diff_eta, 0.0)))
    # robterm / neuterm: sum over ordered pairs (y, x) of [G(y) - G(x)] p eta(x)
    terms = eta[:, None] * dG * pz[None, :]
    robterm = q * n * float(np.sum(np.where(cross, terms, 0.0)))
    neuterm = n * float(np.sum(np.where(cross, 0.0, terms)))
    return {"direct": direct, "princdif": princdif, "extradif": extradif, "robterm": robterm, "neuterm": neuterm}
