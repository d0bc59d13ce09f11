"""Histogramming and nonlinear least-squares fits for the report curves.

Three parametric families are fitted: a truncated power law for the
normalized air-speed frequencies, a power law linking node degree and
clustering, and a sigmoid phase-change curve for the inverse mean
clustering of the velocity networks.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np


class TooFewSamplesError(ValueError):
    pass


class NonpositiveValueError(ValueError):
    """Logarithmic binning needs strictly positive values."""


class SingularJacobianError(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


class DomainGuardError(ValueError):
    """Sigmoid family undefined where 1 + delta*ln(t) vanishes."""


class AllPointsDroppedError(ValueError):
    pass


@dataclass
class FitResult:
    params: np.ndarray
    residual_norm: float
    converged: bool
    n_iter: int
    at_bounds: bool = False


@dataclass
class TruncatedPowerLawFit:
    amplitude: float
    v0: float
    beta: float
    kappa: float
    residual_norm: float
    converged: bool
    n_samples: int


@dataclass
class PowerLawFit:
    amplitude: float
    exponent: float
    residual_norm: float
    n_pairs: int


@dataclass
class SigmoidFit:
    scale: float
    beta: float
    delta: float
    residual_norm: float
    converged: bool


def histogram(values, bins: int = 30, binning: str = "linear"):
    """Density histogram with linear or logarithmic bins.

    Densities are normalized so that sum(density * bin_width) == 1.
    Returns (bin_centers, densities, bin_widths); log binning uses
    geometric-mean centers and refuses nonpositive values.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise ValueError("values must be nonempty")
    if bins < 2:
        raise ValueError("need at least 2 bins")
    if binning == "linear":
        edges = np.linspace(v.min(), v.max(), bins + 1)
        if edges[0] == edges[-1]:
            edges = edges[0] + np.linspace(-0.5, 0.5, bins + 1)
        centers = 0.5 * (edges[:-1] + edges[1:])
    elif binning == "logarithmic":
        if np.any(v <= 0.0):
            raise NonpositiveValueError("log binning requires positive values")
        lo, hi = v.min(), v.max()
        if lo == hi:
            lo, hi = lo * 0.5, hi * 2.0
        edges = np.geomspace(lo, hi, bins + 1)
        centers = np.sqrt(edges[:-1] * edges[1:])
    else:
        raise ValueError(f"unknown binning {binning!r}")
    densities, _ = np.histogram(v, bins=edges, density=True)
    return centers, densities, np.diff(edges)


def nls_fit(model, xdata, ydata, p0, bounds=None, *, max_iter: int = 500,
            step_tol: float = 1e-10) -> FitResult:
    """Damped (Levenberg-Marquardt style) least squares with box bounds.

    Minimizes sum((model(x, p) - y)^2) with a finite-difference
    Jacobian; trial steps are projected into the bounds, so a truth
    outside the box lands on the boundary with at_bounds set.
    Terminates when the relative step drops below step_tol, flagging
    convergence, or after max_iter iterations.
    """
    x = np.asarray(xdata, dtype=float)
    y = np.asarray(ydata, dtype=float)
    p = np.asarray(p0, dtype=float).copy()
    if y.size < p.size:
        raise InsufficientDataError(
            f"{y.size} points cannot determine {p.size} parameters")
    if bounds is None:
        lo = np.full(p.size, -np.inf)
        hi = np.full(p.size, np.inf)
    else:
        lo = np.asarray(bounds[0], dtype=float)
        hi = np.asarray(bounds[1], dtype=float)
    if np.any(p < lo) or np.any(p > hi):
        raise ValueError("initial guess outside bounds")

    def cost_and_residual(params):
        with np.errstate(all="ignore"):
            f = np.asarray(model(x, params), dtype=float)
        if f.shape != y.shape or not np.all(np.isfinite(f)):
            return np.inf, None
        r = y - f
        return float(np.dot(r, r)), r

    def jacobian(params, f0):
        J = np.empty((y.size, params.size))
        for k in range(params.size):
            h = 1e-7 * max(1.0, abs(params[k]))
            q = params.copy()
            q[k] = min(q[k] + h, hi[k]) if q[k] + h > hi[k] else q[k] + h
            if q[k] == params[k]:
                q[k] = params[k] - h
            with np.errstate(all="ignore"):
                fk = np.asarray(model(x, q), dtype=float)
            if not np.all(np.isfinite(fk)):
                fk = f0
            J[:, k] = (fk - f0) / (q[k] - params[k])
        return J

    cost, r = cost_and_residual(p)
    if r is None:
        raise ValueError("model not finite at the initial guess")
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        with np.errstate(all="ignore"):
            f0 = np.asarray(model(x, p), dtype=float)
        J = jacobian(p, f0)
        jtj = J.T @ J
        diag = np.diag(jtj).copy()
        if np.all(diag == 0.0):
            raise SingularJacobianError("Jacobian vanished at the iterate")
        diag[diag == 0.0] = 1.0
        g = J.T @ r
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(jtj + lam * np.diag(diag), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            trial = np.clip(p + step, lo, hi)
            trial_cost, trial_r = cost_and_residual(trial)
            if trial_cost < cost:
                rel_step = np.max(np.abs(trial - p) / np.maximum(1.0, np.abs(trial)))
                p, cost, r = trial, trial_cost, trial_r
                lam = max(lam / 3.0, 1e-14)
                accepted = True
                if rel_step < step_tol:
                    converged = True
                break
            lam *= 10.0
            if lam > 1e14:
                break
        if converged or not accepted:
            converged = converged or not accepted and cost == 0.0
            break
    at_bounds = bool(np.any(p == lo) or np.any(p == hi))
    return FitResult(params=p, residual_norm=float(np.sqrt(cost)),
                     converged=converged, n_iter=it, at_bounds=at_bounds)


def truncated_power_law(v, amplitude, v0, beta, kappa):
    """A * (v + v0)^(-beta) * exp(-v/kappa)."""
    return amplitude * (v + v0) ** (-beta) * np.exp(-v / kappa)


def fit_truncated_power_law(samples, *, bins: int = 30,
                            min_samples: int = 1000,
                            initial=(0.05, 1.5, 0.85)) -> TruncatedPowerLawFit:
    """Fit the truncated power law to log-binned speed frequencies.

    Samples are expected normalized to [0, 1]; zeros are dropped before
    logarithmic binning, as are empty bins.  The fit runs on log
    densities with a free amplitude.
    """
    v = np.asarray(samples, dtype=float).ravel()
    v = v[v > 0.0]
    if v.size < min_samples:
        raise TooFewSamplesError(f"{v.size} positive samples < {min_samples}")
    centers, dens, _ = histogram(v, bins=bins, binning="logarithmic")
    keep = dens > 0.0
    x, y = centers[keep], np.log(dens[keep])

    v0_0, beta_0, kappa_0 = initial
    f0 = (x + v0_0) ** (-beta_0) * np.exp(-x / kappa_0)
    amp0 = float(np.exp(np.mean(y - np.log(f0))))

    def log_model(xv, p):
        amp, v0, beta, kappa = p
        return (np.log(amp) - beta * np.log(xv + v0) - xv / kappa)

    res = nls_fit(log_model, x, y, [amp0, v0_0, beta_0, kappa_0],
                  bounds=([1e-300, 0.0, -10.0, 1e-6],
                          [np.inf, np.inf, 10.0, np.inf]))
    amp, v0, beta, kappa = res.params
    return TruncatedPowerLawFit(amplitude=float(amp), v0=float(v0),
                                beta=float(beta), kappa=float(kappa),
                                residual_norm=res.residual_norm,
                                converged=res.converged, n_samples=int(v.size))


def fit_kc_power_law(k_values, c_values) -> PowerLawFit:
    """Fit c = a * k^b by linear regression in (ln k, ln c).

    Only pairs with k >= 2 and c > 0 enter the regression.
    """
    k = np.asarray(k_values, dtype=float).ravel()
    c = np.asarray(c_values, dtype=float).ravel()
    keep = (k >= 2.0) & (c > 0.0)
    k, c = k[keep], c[keep]
    if k.size < 3:
        raise InsufficientDataError(f"only {k.size} admissible (k, c) pairs")
    lx, ly = np.log(k), np.log(c)
    design = np.column_stack([np.ones_like(lx), lx])
    coef, *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ coef
    return PowerLawFit(amplitude=float(np.exp(coef[0])), exponent=float(coef[1]),
                       residual_norm=float(np.sqrt(np.dot(resid, resid))),
                       n_pairs=int(k.size))


def sigmoid_inverse_clustering(t, scale, beta, delta):
    """scale * (1 + exp(-beta * (1 + ln t / (1 + delta*ln t))))."""
    lt = np.log(t)
    denom = 1.0 + delta * lt
    return scale * (1.0 + np.exp(-beta * (1.0 + lt / denom)))


def fit_sigmoid_inverse_clustering(times, inv_c, *, initial=None) -> SigmoidFit:
    """Fit the sigmoid phase-change family to an inverse-clustering series."""
    t = np.asarray(times, dtype=float).ravel()
    y = np.asarray(inv_c, dtype=float).ravel()
    if t.size != y.size or t.size < 4:
        raise InsufficientDataError("need >= 4 (t, 1/C) points")
    if np.any(t <= 0.0):
        raise ValueError("t must be positive")
    if initial is None:
        initial = (0.5 * float(np.min(y)), 1.0, 0.2)
    if np.any(np.abs(1.0 + initial[2] * np.log(t)) < 1e-12):
        raise DomainGuardError("delta * ln t == -1 at a data point")

    def model(tv, p):
        scale, beta, delta = p
        denom = 1.0 + delta * np.log(tv)
        if np.any(np.abs(denom) < 1e-12):
            return np.full_like(tv, np.nan)
        return sigmoid_inverse_clustering(tv, scale, beta, delta)

    res = nls_fit(model, t, y, list(initial))
    scale, beta, delta = res.params
    return SigmoidFit(scale=float(scale), beta=float(beta), delta=float(delta),
                      residual_norm=res.residual_norm, converged=res.converged)


def inverse_mean_clustering_series(times, mean_clusterings):
    """Pointwise 1/C; points with C <= 0 are dropped and reported.

    Returns (t_kept, inv_c, t_dropped).
    """
    t = np.asarray(times, dtype=float).ravel()
    c = np.asarray(mean_clusterings, dtype=float).ravel()
    if t.size != c.size:
        raise ValueError("times and clusterings must align")
    keep = c > 0.0
    if not np.any(keep):
        raise AllPointsDroppedError("every snapshot has zero mean clustering")
    return t[keep], 1.0 / c[keep], t[~keep]


def sample_truncated_power_law(n: int, v0: float, beta: float, kappa: float,
                               rng, v_max: float = 1.0) -> np.ndarray:
    """Rejection sampling from (v + v0)^(-beta) exp(-v/kappa) on (0, v_max].

    The proposal is the truncated exponential exp(-v/kappa); the
    power-law factor, bounded by v0^(-beta), sets the acceptance ratio.
    """
    out = np.empty(n)
    have = 0
    cdf_max = 1.0 - np.exp(-v_max / kappa)
    while have < n:
        m = int((n - have) * 1.5) + 16
        u = rng.random(m) * cdf_max
        v = -kappa * np.log1p(-u)
        accept = rng.random(m) < ((v + v0) / v0) ** (-beta)
        got = v[accept]
        take = min(got.size, n - have)
        out[have:have + take] = got[:take]
        have += take
    return out
