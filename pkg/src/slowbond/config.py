"""Experiment configuration: a versioned JSON document plus CLI overrides."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .kernel import BarrierSpec, KernelSpec
from .profiles import parse_profile

SCHEMA_VERSION = 1


def parse_kernel(text):
    """Shorthand kernel descriptors: ``nn``, ``finite:p1,p2,...``, ``power:gamma[:z_max]``."""
    head, _, rest = text.partition(":")
    try:
        if head == "nn":
            return KernelSpec.nearest_neighbor()
        if head == "finite":
            return KernelSpec.finite_range(tuple(float(v) for v in rest.split(",")))
        if head == "power":
            parts = rest.split(":")
            if len(parts) == 1:
                return KernelSpec.long_range(float(parts[0]))
            return KernelSpec.long_range(float(parts[0]), int(parts[1]))
    except ValueError as exc:
        raise ConfigurationError(f"bad kernel descriptor {text!r}") from exc
    raise ConfigurationError(f"unknown kernel descriptor {text!r}; use nn, finite:p1,... or power:gamma[:z_max]")


def parse_bridges(text):
    """``"-1,0;-2,1"`` -> ((-1, 0), (-2, 1))."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        try:
            a, b = (int(v) for v in item.split(","))
        except ValueError as exc:
            raise ConfigurationError(f"bad bridge {item!r}; expected x1,x2") from exc
        out.append((a, b))
    return tuple(out)


@dataclass
class ExperimentConfig:
    kernel: KernelSpec = field(default_factory=KernelSpec.nearest_neighbor)
    barrier: BarrierSpec = field(default_factory=lambda: BarrierSpec("full", 1.0, 1.0))
    n_list: tuple = (64, 128, 256, 512)
    window_factor: float = 2.0
    horizon: float = 0.1
    profile: str = "step(1,0)"
    replicas: int = 50
    snapshot_times: tuple = (0.05, 0.1)
    bin_width: float = 1 / 32
    pde_du: float = 1 / 256
    seed: int = 20240101
    log_events: bool = False
    dump_snapshots: bool = False
    workers: int = 1
    output_dir: str = "runs/experiment"

    def validate(self):
        self.kernel.validate()
        self.barrier.validate()
        if not self.n_list or any(int(n) != n or n < 1 for n in self.n_list):
            raise ConfigurationError("n_list must hold positive integers")
        if self.replicas < 1:
            raise ConfigurationError("replicas must be >= 1")
        if not self.horizon > 0 or not self.window_factor > 0:
            raise ConfigurationError("horizon and window factor must be positive")
        times = list(self.snapshot_times)
        if not times or times != sorted(times) or times[0] < 0 or times[-1] > self.horizon + 1e-12:
            raise ConfigurationError("snapshot times must be sorted and lie in [0, T]")
        profile = parse_profile(self.profile)
        if hasattr(profile, "r") and abs(profile.c) + profile.r > self.window_factor:
            raise ConfigurationError("bump profile leaves the analysis window")
        for n in self.n_list:
            W = self.window_factor * n
            if abs(W - round(W)) > 1e-9:
                raise ConfigurationError(f"L * n must be an integer (n={n})")
            b = self.bin_width * n
            if abs(b - round(b)) > 1e-9 or round(b) < 1 or round(W) % round(b):
                raise ConfigurationError(f"bin width {self.bin_width} must be a whole number of sites dividing L*n at n={n}")
            self.barrier.thinning_probability(n)
        cells = self.window_factor / self.pde_du
        if abs(cells - round(cells)) > 1e-9:
            raise ConfigurationError("pde_du must divide the window half length")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")
        return self

    def bin_sites(self, n):
        return int(round(self.bin_width * n))

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["kernel"] = self.kernel.to_dict()
        d["barrier"] = self.barrier.to_dict()
        d["n_list"] = list(self.n_list)
        d["snapshot_times"] = list(self.snapshot_times)
        return {"schema_version": SCHEMA_VERSION, **d}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        version = d.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {version} (expected {SCHEMA_VERSION})")
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        if "kernel" in d:
            d["kernel"] = KernelSpec.from_dict(d["kernel"])
        if "barrier" in d:
            d["barrier"] = BarrierSpec.from_dict(d["barrier"])
        for key in ("n_list", "snapshot_times"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def replace(self, **changes):
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def n_seed(seed, n):
    """Seed of the ensemble at scale n, derived from the experiment seed."""
    return int(np.random.SeedSequence(int(seed), spawn_key=(int(n),)).generate_state(1, np.uint64)[0])

