"""Reproducible heterogeneous soil-parameter realizations.

Per-cell saturated water content, intrinsic permeability and pore-size
exponent are drawn as three mutually independent (uncorrelated)
Gaussian fields, truncated to physically admissible ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RNG_ALGORITHM = "numpy-PCG64"

# Sampling order is part of the reproducibility contract.
FIELD_NAMES = ("theta_s", "k_intrinsic", "n_vg")


class InvalidSpecError(ValueError):
    """Field spec admits values that violate a physical invariant."""


@dataclass(frozen=True)
class FieldSpec:
    """Truncated-Gaussian specification of one per-cell parameter."""

    mean: float
    std_dev: float
    lower_clamp: float
    upper_clamp: float

    def __post_init__(self):
        if self.std_dev < 0.0:
            raise ValueError("std_dev must be >= 0")
        if not self.lower_clamp < self.upper_clamp:
            raise ValueError("lower_clamp must be < upper_clamp")
        if not self.lower_clamp <= self.mean <= self.upper_clamp:
            raise ValueError("mean must lie inside the clamp interval")


@dataclass(frozen=True, eq=False)
class ParameterField:
    """One realization of the three per-cell parameter grids.

    Grids are (ny, nx) arrays, row j indexing height.  Regenerating with
    the same (seed, specs, nx, ny) reproduces the field bit-exactly.
    """

    nx: int
    ny: int
    theta_s: np.ndarray
    k_intrinsic: np.ndarray
    n_vg: np.ndarray
    seed: int
    specs: dict
    rng_algorithm: str = RNG_ALGORITHM

    def grids(self) -> dict:
        return {"theta_s": self.theta_s, "k_intrinsic": self.k_intrinsic,
                "n_vg": self.n_vg}


def default_specs() -> dict:
    """Desk-scale defaults; repo choices, all overridable in config."""
    return {
        "theta_s": FieldSpec(0.35, 0.03, 0.25, 0.45),
        "k_intrinsic": FieldSpec(1.0e-9, 0.3e-9, 0.1e-9, 3.0e-9),
        "n_vg": FieldSpec(4.0, 0.5, 1.5, 8.0),
    }


def sample_field(nx: int, ny: int, specs: dict, seed: int) -> ParameterField:
    """Draw one truncated-Gaussian realization of all three parameters.

    Each cell is sampled independently from Normal(mean, std_dev) and
    clamped into [lower_clamp, upper_clamp]; the three fields share one
    generator but consume disjoint stretches of its stream, which keeps
    them uncorrelated and the whole draw deterministic in the seed.
    """
    if nx < 1 or ny < 1:
        raise ValueError("nx and ny must be >= 1")
    missing = [name for name in FIELD_NAMES if name not in specs]
    if missing:
        raise InvalidSpecError(f"missing field specs: {missing}")
    if specs["n_vg"].lower_clamp <= 1.0:
        raise InvalidSpecError("n_vg clamps admit n <= 1")
    if specs["k_intrinsic"].lower_clamp <= 0.0:
        raise InvalidSpecError("k_intrinsic clamps admit k <= 0")
    if specs["theta_s"].lower_clamp <= 0.0 or specs["theta_s"].upper_clamp > 1.0:
        raise InvalidSpecError("theta_s clamps must lie inside (0, 1]")

    rng = np.random.default_rng(seed)
    grids = {}
    for name in FIELD_NAMES:
        sp = specs[name]
        raw = rng.normal(sp.mean, sp.std_dev, size=(ny, nx)) if sp.std_dev > 0 \
            else np.full((ny, nx), float(sp.mean))
        grids[name] = np.clip(raw, sp.lower_clamp, sp.upper_clamp)

    return ParameterField(nx=nx, ny=ny, theta_s=grids["theta_s"],
                          k_intrinsic=grids["k_intrinsic"], n_vg=grids["n_vg"],
                          seed=int(seed), specs=dict(specs))
