import numpy as np
import pytest

from slowbond.errors import ConfigurationError
from slowbond.observables import (DensityField, FluxSeries, box_average_left, box_average_right, crossing_flux,
                                  density_field, empirical_density, jump_estimate, replacement_gap,
                                  write_density_csv, write_flux_csv)
from slowbond.simulator import BRIDGE_LR, SLOW_LR, SLOW_RL
from slowbond.snapshots import export_csv, read_snapshots, rle_decode, rle_encode, write_snapshots


def window(W, occupied=()):
    snap = np.zeros(2 * W, dtype=np.uint8)
    for x in occupied:
        snap[x + W] = 1
    return snap


def test_empty_and_full_snapshots():
    for value in (0, 1):
        rho, edges = empirical_density(np.full(16, value, dtype=np.uint8), 4, 2)
        assert np.all(rho == value)
        assert edges[0] == -2 and edges[-1] == 2


def test_small_example():
    rho, edges = empirical_density(window(8, (0, 1)), 4, 2)
    j = int(np.flatnonzero(edges == 0.0)[0])
    assert edges[j + 1] == 0.5
    assert rho[j] == 1.0
    assert np.count_nonzero(rho) == 1


def test_bin_must_divide_half_window():
    with pytest.raises(ConfigurationError):
        empirical_density(np.zeros(16, dtype=np.uint8), 4, 3)
    with pytest.raises(ConfigurationError):
        empirical_density(np.zeros(12, dtype=np.uint8), 4, 4)  # W=6: a bin would straddle {-1, 0}
    with pytest.raises(ConfigurationError):
        empirical_density(np.zeros(12, dtype=np.uint8), 4, 0)


def test_bin_mass_equals_particle_count():
    rng = np.random.default_rng(0)
    snaps = (rng.random((5, 3, 64)) < 0.4).astype(np.uint8)
    rho, _ = empirical_density(snaps, 16, 4)
    assert np.array_equal((rho * 4).sum(axis=-1).round(), snaps.sum(axis=-1))


def test_density_field_and_jump():
    W, b = 8, 2
    left_full = np.concatenate([np.ones(W), np.zeros(W)]).astype(np.uint8)
    snaps = np.stack([np.stack([left_full, left_full])] * 3)
    field = density_field((0.0, 0.1), snaps, 4, b)
    assert field.values.shape == (2, 2 * W // b)
    assert np.allclose(jump_estimate(field), -1.0)
    assert np.allclose(field.u[:2], [-1.75, -1.25])


def test_density_field_shape_checked():
    with pytest.raises(ValueError):
        DensityField(times=np.array([0.0]), u=np.arange(3.0), values=np.zeros((2, 3)))


def test_box_averages():
    W, ell = 16, 6
    assert box_average_right(window(W, range(1, ell + 1)), ell) == 1.0
    assert box_average_right(window(W, (0,)), ell) == 0.0  # site 0 is excluded
    assert box_average_left(window(W, range(-ell, 0)), ell) == 1.0
    alternating = window(W, range(1, W, 2))
    assert box_average_right(alternating, 8) == 0.5
    with pytest.raises(ConfigurationError):
        box_average_right(window(W), W)
    with pytest.raises(ConfigurationError):
        box_average_left(window(W), W + 1)
    with pytest.raises(ConfigurationError):
        box_average_right(window(W), 0)


def test_box_nesting():
    rng = np.random.default_rng(4)
    snap = (rng.random(128) < 0.5).astype(np.uint8)
    W, small, big = 64, 4, 32
    right = np.mean([snap[W + 1 + k * small: W + 1 + (k + 1) * small].mean() for k in range(big // small)])
    left = np.mean([snap[W - (k + 1) * small: W - k * small].mean() for k in range(big // small)])
    assert box_average_right(snap, big) == pytest.approx(right, abs=1e-15)
    assert box_average_left(snap, big) == pytest.approx(left, abs=1e-15)


def test_box_average_binomial_concentration():
    # Bernoulli(a) samples, l = n/8 = 64 sites: within 3 sd in at least 99% of draws
    rng = np.random.default_rng(8)
    a, n = 0.3, 512
    ell = n // 8
    snaps = (rng.random((2000, 2 * n)) < a).astype(np.uint8)
    avg = box_average_right(snaps, ell)
    inside = np.abs(avg - a) <= 3 * np.sqrt(a * (1 - a) / ell)
    assert inside.mean() >= 0.99


def test_crossing_flux():
    events = [(0.01, SLOW_LR), (0.02, SLOW_LR), (0.03, BRIDGE_LR), (0.05, SLOW_RL), (0.08, SLOW_LR)]
    flux = crossing_flux(events, 4, [0.0, 0.02, 0.04, 0.1])
    assert np.allclose(flux.cumulative_net_crossings, [0.0, 0.5, 0.5, 0.5])
    assert np.allclose(crossing_flux(events, 4, [0.06]).cumulative_net_crossings, [0.25])
    assert np.all(crossing_flux([], 4, [0.0, 1.0]).cumulative_net_crossings == 0)


def test_replacement_gap():
    box = np.array([[1.0, 1.0, 1.0], [0.5, 0.5, 0.5]])
    site = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    assert np.allclose(replacement_gap(box, site, 0.5), [1.0, 0.25])


def test_csv_headers(tmp_path):
    field = DensityField(times=np.array([0.1]), u=np.array([-0.5, 0.5]), values=[[1.0, 0.25]])
    write_density_csv(tmp_path / "d.csv", field)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines == ["time,u,rho", "0.1,-0.5,1.0", "0.1,0.5,0.25"]
    write_flux_csv(tmp_path / "f.csv", FluxSeries(np.array([0.0, 0.1]), np.array([0.0, 0.5])))
    assert (tmp_path / "f.csv").read_text().splitlines() == ["time,flux", "0.0,0.0", "0.1,0.5"]


def test_rle_roundtrip():
    rng = np.random.default_rng(2)
    for occ in (np.zeros(10, np.uint8), np.ones(7, np.uint8), (rng.random(300) < 0.3).astype(np.uint8)):
        first, runs = rle_encode(occ)
        assert runs.sum() == occ.size
        assert np.array_equal(rle_decode(first, runs), occ)


def test_snapshot_file_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    occ = (rng.random((3, 16)) < 0.5).astype(np.uint8)
    path = tmp_path / "r0.sbsn"
    write_snapshots(path, 4, 8, 123, 0, [0.0, 0.05, 0.1], occ)
    snap = read_snapshots(path)
    assert (snap.n, snap.half_width, snap.seed, snap.replica) == (4, 8, 123, 0)
    assert np.array_equal(snap.occupancy, occ)
    assert np.allclose(snap.clocks, [0.0, 0.05, 0.1])
    export_csv(snap, tmp_path / "r0.csv")
    lines = (tmp_path / "r0.csv").read_text().splitlines()
    assert lines[0] == "time,x,occupied" and len(lines) == 1 + 3 * 16
    assert lines[1] == f"0.0,-8,{occ[0, 0]}"
    (tmp_path / "bad.sbsn").write_bytes(b"XXXX" + path.read_bytes()[4:])
    with pytest.raises(ValueError):
        read_snapshots(tmp_path / "bad.sbsn")
