"""Initial density profiles u -> g(u) in [0, 1].

Profiles are small picklable objects so that ensemble workers and the
manifest writer can carry them around.  ``descriptor`` round-trips through
:func:`parse_profile`, e.g. ``"step(1,0)"``, ``"bump(0.2,0.5,0.25)"``,
``"constant(0.5)"``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class Constant:
    a: float

    def __call__(self, u):
        return np.full(np.shape(u), float(self.a))

    def left_limit(self, u):
        return self(u)

    def node_values(self, u):
        return self(u)

    @property
    def jump_at_origin(self):
        return 0.0

    @property
    def descriptor(self):
        return f"constant({self.a:g})"


@dataclass(frozen=True)
class Step:
    """g(u) = a for u < 0 and b for u >= 0."""

    a: float
    b: float

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u < 0, float(self.a), float(self.b))

    def left_limit(self, u):
        """Values with the left limit taken at u = 0."""
        u = np.asarray(u, dtype=float)
        return np.where(u <= 0, float(self.a), float(self.b))

    def node_values(self, u):
        # the jump node takes the mean of both one-sided limits
        u = np.asarray(u, dtype=float)
        out = self(u)
        return np.where(u == 0.0, 0.5 * (self.a + self.b), out)

    @property
    def jump_at_origin(self):
        return float(self.b - self.a)

    @property
    def descriptor(self):
        return f"step({self.a:g},{self.b:g})"


@dataclass(frozen=True)
class BumpProfile:
    """g(u) = a + (1 - a) * e * exp(-1 / (1 - ((u - c) / r)^2)) inside |u - c| < r.

    The bump reaches 1 at its center; outside the support g equals a.
    """

    a: float
    c: float
    r: float

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        s = (u - self.c) / self.r
        inside = np.abs(s) < 1
        out = np.zeros(u.shape)
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
        return self.a + (1.0 - self.a) * out

    def left_limit(self, u):
        return self(u)

    def node_values(self, u):
        return self(u)

    @property
    def jump_at_origin(self):
        return 0.0

    @property
    def descriptor(self):
        return f"bump({self.a:g},{self.c:g},{self.r:g})"


_PATTERN = re.compile(r"^\s*(\w+)\s*\(([^)]*)\)\s*$")
_ARITY = {"constant": (Constant, 1), "step": (Step, 2), "bump": (BumpProfile, 3)}


def parse_profile(text):
    match = _PATTERN.match(text)
    if not match or match.group(1) not in _ARITY:
        raise ConfigurationError(f"unrecognized profile {text!r}; expected step(a,b), bump(a,c,r) or constant(a)")
    cls, arity = _ARITY[match.group(1)]
    try:
        args = [float(v) for v in match.group(2).split(",")]
    except ValueError as exc:
        raise ConfigurationError(f"bad profile arguments in {text!r}") from exc
    if len(args) != arity:
        raise ConfigurationError(f"{match.group(1)} takes {arity} arguments, got {len(args)}")
    profile = cls(*args)
    check_profile(profile)
    return profile


def check_profile(profile):
    values = [getattr(profile, k) for k in ("a", "b") if hasattr(profile, k)]
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise ConfigurationError(f"profile {profile.descriptor} leaves [0, 1]")
    if isinstance(profile, BumpProfile) and not profile.r > 0:
        raise ConfigurationError("bump radius must be positive")
