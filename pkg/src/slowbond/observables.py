"""Macroscopic observables of occupancy snapshots.

Snapshots are uint8 arrays over the window -W..W-1 (index ``x + W``).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .errors import ConfigurationError
from .simulator import SLOW_LR, SLOW_RL

EPSILON_GRID = (1 / 32, 1 / 16, 1 / 8, 1 / 4)


@dataclass
class DensityField:
    """Densities rho[i, j] at times[i] on bins [edges[j], edges[j+1]).

    ``u`` holds bin centers.  For PDE output the bins degenerate to grid
    nodes and ``edges`` is ``None``.
    """

    times: np.ndarray
    u: np.ndarray
    values: np.ndarray
    edges: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if self.values.shape != (len(self.times), len(self.u)):
            raise ValueError(f"values shape {self.values.shape} does not match grid")


@dataclass
class FluxSeries:
    """Cumulative net crossings of slow bonds (left to right minus right to left) divided by n."""

    times: np.ndarray
    cumulative_net_crossings: np.ndarray


def _check_bins(W, b):
    if b < 1:
        raise ConfigurationError("bin width must be >= 1")
    if W % b:
        # with W a multiple of b one bin edge sits on the bond {-1, 0}
        raise ConfigurationError(f"bin width {b} must divide the half window {W} so no bin straddles the origin")


def bin_edges(W, n, b):
    _check_bins(W, b)
    return np.arange(-W, W + 1, b) / n


def empirical_density(snapshot, n, bin_width_sites):
    """Bin averages (1/b) sum_{x in bin} eta(x), bins aligned on the origin.

    Accepts one snapshot (shape (2W,)) or a stack (..., 2W); returns the
    bin densities with the last axis replaced by bins, and the bin edges in
    macroscopic units.
    """
    snap = np.asarray(snapshot)
    W = snap.shape[-1] // 2
    b = int(bin_width_sites)
    edges = bin_edges(W, n, b)
    rho = snap.reshape(*snap.shape[:-1], 2 * W // b, b).mean(axis=-1)
    return rho, edges


def density_field(times, snapshots, n, bin_width_sites):
    """Ensemble-mean DensityField from snapshots shaped (replicas, times, 2W)."""
    rho, edges = empirical_density(snapshots, n, bin_width_sites)
    mean = rho.mean(axis=0)
    return DensityField(times=np.asarray(times, dtype=float), u=0.5 * (edges[1:] + edges[:-1]), values=mean,
                        edges=edges)


def box_average_right(snapshot, ell):
    """(1/ell) sum_{y=1}^{ell} eta(y); site 0 is not included."""
    snap = np.asarray(snapshot)
    W = snap.shape[-1] // 2
    if not 1 <= ell <= W - 1:
        raise ConfigurationError(f"box size {ell} does not fit in the half window {W}")
    return snap[..., W + 1: W + 1 + ell].mean(axis=-1)


def box_average_left(snapshot, ell):
    """(1/ell) sum_{y=-ell}^{-1} eta(y)."""
    snap = np.asarray(snapshot)
    W = snap.shape[-1] // 2
    if not 1 <= ell <= W:
        raise ConfigurationError(f"box size {ell} does not fit in the half window {W}")
    return snap[..., W - ell: W].mean(axis=-1)


def jump_estimate(field: DensityField):
    """rho(0+) - rho(0-) read off the two bins adjacent to the origin."""
    edges = field.edges
    j = int(np.searchsorted(edges, 0.0))
    if edges[j] != 0.0:
        raise ValueError("origin is not a bin edge")
    return field.values[:, j] - field.values[:, j - 1]


def crossing_flux(event_log, n, times):
    """Cumulative net slow-bond crossings over [0, t] divided by n, at each t in ``times``.

    ``event_log`` is an iterable of (time, counter index) pairs as recorded
    by the simulator; bridge crossings are ignored.
    """
    times = np.asarray(times, dtype=float)
    ev = np.asarray(list(event_log), dtype=float).reshape(-1, 2)
    sign = np.where(ev[:, 1] == SLOW_LR, 1.0, np.where(ev[:, 1] == SLOW_RL, -1.0, 0.0))
    order = np.argsort(ev[:, 0], kind="stable")
    t_sorted = ev[order, 0]
    cum = np.concatenate([[0.0], np.cumsum(sign[order])])
    idx = np.searchsorted(t_sorted, times, side="right")
    return FluxSeries(times=times, cumulative_net_crossings=cum[idx] / n)


def net_slow_crossings(crossings, n):
    """Net slow crossings / n from the simulator's cumulative counters (..., 4)."""
    c = np.asarray(crossings)
    return (c[..., SLOW_LR] - c[..., SLOW_RL]) / n


def write_density_csv(path, field: DensityField):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "u", "rho"])
        for i, t in enumerate(field.times):
            for u, r in zip(field.u, field.values[i]):
                w.writerow([repr(float(t)), repr(float(u)), repr(float(r))])


def write_flux_csv(path, flux: FluxSeries):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "flux"])
        for t, f in zip(flux.times, flux.cumulative_net_crossings):
            w.writerow([repr(float(t)), repr(float(f))])


def replacement_gap(box_series, site_series, dt):
    """|(1/T) int_0^T (box(s) - site(s)) ds| from equally spaced samples, per replica.

    Inputs are shaped (replicas, samples); the time integral uses the
    trapezoidal rule.
    """
    diff = np.asarray(box_series, dtype=float) - np.asarray(site_series, dtype=float)
    horizon = dt * (diff.shape[-1] - 1)
    return np.abs(trapezoid(diff, dx=dt, axis=-1)) / horizon
