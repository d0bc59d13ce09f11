"""Capillary and relative-permeability closures for air/water flow in soil.

Everything here works in a cm-gram-hour unit system: heads in cm of
water, densities in g/cm^3, viscosities in g/(cm h).  All functions are
pure and accept scalars or numpy arrays (parameter fields may be
per-cell arrays, broadcast against the head argument).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.integrate import quad


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested relative tolerance."""


class NonpositiveDensityError(ValueError):
    """Air pressure head below the physical floor (density would be <= 0)."""


@dataclass(frozen=True, eq=False)
class VanGenuchtenParams:
    """Retention-curve parameters; m is always derived as 1 - 1/n.

    Fields may be scalars or per-cell arrays.  n > 1 is required so the
    retention curve has zero slope at zero capillary head.
    """

    alpha: Any          # inverse capillary head, 1/cm
    n: Any              # pore-size distribution exponent
    theta_r: Any        # residual volumetric water content
    theta_s: Any        # saturated volumetric water content
    eta: Any = 0.5      # tortuosity exponent (Mualem's classical value)

    def __post_init__(self):
        if not np.all(np.asarray(self.n) > 1.0):
            raise ValueError("van Genuchten n must be > 1")
        if not np.all(np.asarray(self.alpha) > 0.0):
            raise ValueError("alpha must be > 0")
        if not np.all(np.asarray(self.eta) >= 0.0):
            raise ValueError("eta must be >= 0")
        tr, ts = np.asarray(self.theta_r), np.asarray(self.theta_s)
        if not (np.all(tr >= 0.0) and np.all(tr < ts) and np.all(ts <= 1.0)):
            raise ValueError("need 0 <= theta_r < theta_s <= 1")

    @property
    def m(self):
        return 1.0 - 1.0 / np.asarray(self.n)


@dataclass(frozen=True)
class FluidProps:
    """Water/air fluid constants in cm-g-h units.

    lam = rho0_nw / h0_nw is the air compressibility; the default
    reference head makes lam = 1.24e-6 g/cm^4 for air at atmospheric
    conditions.
    """

    mu_w: float = 36.0                    # 0.01 g/(cm s)
    mu_nw: float = 0.648                  # 1.8e-4 g/(cm s)
    rho_w: float = 1.0
    rho0_nw: float = 1.2e-3
    h0_nw: float = 1.2e-3 / 1.24e-6       # cm of water at atmospheric pressure

    def __post_init__(self):
        for name in ("mu_w", "mu_nw", "rho_w", "rho0_nw", "h0_nw"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"FluidProps.{name} must be > 0")

    @property
    def lam(self) -> float:
        """Air compressibility rho0_nw / h0_nw, g/cm^4."""
        return self.rho0_nw / self.h0_nw


def effective_saturation(h_c, p: VanGenuchtenParams):
    """Water effective saturation S_ew(h_c).

    Negative capillary heads are treated as fully saturated (S_ew = 1),
    the standard saturated-zone convention.
    """
    h = np.maximum(np.asarray(h_c, dtype=float), 0.0)
    return (1.0 + (p.alpha * h) ** p.n) ** (-p.m)


def capillary_capacity(h_c, p: VanGenuchtenParams):
    """d(theta_w)/d(h_c), the analytic slope of the retention curve.

    Nonpositive for all h_c; identically zero where h_c <= 0.
    """
    h = np.asarray(h_c, dtype=float)
    hp = np.maximum(h, 0.0)
    u = p.alpha * hp
    un = u ** p.n
    dsat = -p.m * p.n * p.alpha * u ** (p.n - 1.0) * (1.0 + un) ** (-p.m - 1.0)
    cap = (np.asarray(p.theta_s) - np.asarray(p.theta_r)) * dsat
    return np.where(h <= 0.0, 0.0, cap)


def rel_perm_wetting(s_ew, p: VanGenuchtenParams):
    """Mualem-van Genuchten relative permeability of the wetting phase."""
    s = np.asarray(s_ew, dtype=float)
    inner = np.maximum(1.0 - s ** (1.0 / p.m), 0.0)
    return s ** p.eta * (1.0 - inner ** p.m) ** 2


def rel_perm_nonwetting(s_ew, p: VanGenuchtenParams):
    """Mualem-van Genuchten relative permeability of the non-wetting phase."""
    s = np.asarray(s_ew, dtype=float)
    inner = np.maximum(1.0 - s ** (1.0 / p.m), 0.0)
    return (1.0 - s) ** p.eta * inner ** (2.0 * p.m)


def capillary_head(s_ew, p: VanGenuchtenParams):
    """Inverse retention curve h_c(S_ew) for S_ew in (0, 1]."""
    s = np.asarray(s_ew, dtype=float)
    with np.errstate(divide="ignore"):
        h = (s ** (-1.0 / p.m) - 1.0) ** (1.0 / p.n) / p.alpha
    return np.where(s >= 1.0, 0.0, h)


def _quad_checked(f, a, b, rel_tol):
    val, err = quad(f, a, b, epsabs=0.0, epsrel=min(rel_tol, 1e-9), limit=200)
    if val == 0.0 or err / abs(val) > rel_tol:
        raise QuadratureError(
            f"quadrature on [{a}, {b}] reached relative error "
            f"{err / abs(val) if val else np.inf:.2e} > {rel_tol:.0e}"
        )
    return val


def mualem_quadrature_wetting(s_ew, p: VanGenuchtenParams,
                              rel_tol: float = 1e-7, cutoff: float = 1e-9) -> float:
    """Wetting relative permeability via numeric capillary-bundle integrals.

    Serves as an independent cross-check of rel_perm_wetting: the
    integrand 1/h_c(S) is integrated in saturation space, with the
    h_c -> infinity endpoint truncated at `cutoff` (the integrand decays
    there, so the omitted mass is below tolerance).
    """
    s = float(s_ew)
    if not 0.0 < s < 1.0:
        raise ValueError("quadrature requires S_ew in (0, 1)")
    integrand = lambda x: 1.0 / float(capillary_head(x, p))
    denom = _quad_checked(integrand, cutoff, 1.0, rel_tol)
    numer = _quad_checked(integrand, cutoff, s, rel_tol)
    return float(s ** p.eta) * (numer / denom) ** 2


def mualem_quadrature_nonwetting(s_ew, p: VanGenuchtenParams,
                                 rel_tol: float = 1e-7, cutoff: float = 1e-9) -> float:
    """Non-wetting relative permeability via numeric capillary-bundle integrals."""
    s = float(s_ew)
    if not 0.0 < s < 1.0:
        raise ValueError("quadrature requires S_ew in (0, 1)")
    integrand = lambda x: 1.0 / float(capillary_head(x, p))
    denom = _quad_checked(integrand, cutoff, 1.0, rel_tol)
    numer = _quad_checked(integrand, s, 1.0, rel_tol)
    return float((1.0 - s) ** p.eta) * (numer / denom) ** 2


def water_content(h_c, p: VanGenuchtenParams):
    """Volumetric water content theta_w(h_c)."""
    ts, tr = np.asarray(p.theta_s), np.asarray(p.theta_r)
    return tr + (ts - tr) * effective_saturation(h_c, p)


def air_density(h_nw, f: FluidProps):
    """Air density linear in pressure head: rho0 + lam * h_nw."""
    rho = f.rho0_nw + f.lam * np.asarray(h_nw, dtype=float)
    if np.any(rho <= 0.0):
        raise NonpositiveDensityError(
            f"air head below -{f.h0_nw:.6g} cm gives nonpositive density"
        )
    return rho
