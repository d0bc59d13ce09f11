"""Implicit finite-volume solver for coupled air/water pressure-head flow.

The column cross-section is a 2D structured grid (x horizontal, y
vertical, gravity in -y), discretized cell-centered with two-point flux
approximation: harmonic-mean intrinsic permeability and upstream
relative permeability at faces.  Time stepping is backward Euler with
modified-Picard accumulation terms, so a converged step conserves water
volume and air mass to solver tolerance rather than to the chord-slope
error of the capacity term.

Boundary conditions follow the air-injection column experiment: the
air head is prescribed on the top boundary (no water flux there), the
water head is prescribed on the bottom outlet below an air-impermeable
disk, and the side walls pass neither phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .constitutive import (
    FluidProps,
    VanGenuchtenParams,
    air_density,
    capillary_capacity,
    effective_saturation,
    rel_perm_nonwetting,
    rel_perm_wetting,
    water_content,
)
from .hetfield import ParameterField

GRAVITY = 980.665 * 3600.0 ** 2  # cm/h^2


class NonConvergenceError(RuntimeError):
    """Picard iteration failed; carries iteration count and residual."""

    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"Picard iteration did not converge: {iterations} iterations, "
            f"relative head update {residual:.3e}"
        )
        self.iterations = iterations
        self.residual = residual


class TimestepUnderflowError(RuntimeError):
    """Adaptive time step was halved below its floor."""


@dataclass(frozen=True)
class GridGeometry:
    """Structured-grid geometry of the column cross-section (cm)."""

    nx: int
    ny: int
    column_height: float = 8.34
    column_width: float = 12.0
    disk_thickness: float = 0.74

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError("nx and ny must be >= 1")
        if not 0.0 <= self.disk_thickness < self.column_height:
            raise ValueError("disk_thickness must lie inside the column")

    @property
    def dx(self) -> float:
        return self.column_width / self.nx

    @property
    def dy(self) -> float:
        return self.column_height / self.ny

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy  # unit thickness in z

    def y_centers(self) -> np.ndarray:
        return (np.arange(self.ny) + 0.5) * self.dy

    def x_centers(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) * self.dx

    def disk_row_mask(self) -> np.ndarray:
        """True for grid rows whose cell centers sit inside the disk."""
        return self.y_centers() < self.disk_thickness


@dataclass
class State:
    """Per-cell pressure heads (cm of water) at one time (hours)."""

    h_w: np.ndarray
    h_nw: np.ndarray
    t: float

    def copy(self) -> "State":
        return State(self.h_w.copy(), self.h_nw.copy(), self.t)


@dataclass(frozen=True)
class BoundarySchedule:
    """Transient boundary heads: air at the inlet, water at the outlet.

    The inlet either ramps linearly or climbs a staircase of n_steps
    equal increments; the outlet rises linearly over [0, t_end].  Both
    are held at their end values past t_end.
    """

    kind: str = "ramp"  # "ramp" | "steps"
    inlet_start: float = 20.0
    inlet_end: float = 30.0
    outlet_start: float = 0.0
    outlet_end: float = 10.0
    t_end: float = 1.0
    n_steps: int = 5

    def __post_init__(self):
        if self.kind not in ("ramp", "steps"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if self.t_end <= 0.0:
            raise ValueError("t_end must be > 0")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")

    def inlet_air_head(self, t: float) -> float:
        tau = min(max(t / self.t_end, 0.0), 1.0)
        if self.kind == "steps":
            tau = np.floor(tau * self.n_steps) / self.n_steps
        return self.inlet_start + (self.inlet_end - self.inlet_start) * tau

    def outlet_water_head(self, t: float) -> float:
        tau = min(max(t / self.t_end, 0.0), 1.0)
        return self.outlet_start + (self.outlet_end - self.outlet_start) * tau


@dataclass(frozen=True, eq=False)
class Medium:
    """Per-cell material properties plus the air-impermeable bottom disk."""

    vg: VanGenuchtenParams       # array-valued theta_s / n, scalar alpha etc.
    k_intrinsic: np.ndarray      # (ny, nx), cm^2, disk override applied
    porosity: np.ndarray         # = theta_s (non-deformable medium)
    disk_mask: np.ndarray        # (ny, nx) bool

    @classmethod
    def from_field(cls, fld: ParameterField, geom: GridGeometry,
                   alpha: float = 0.0189, theta_r: float = 0.021,
                   eta: float = 0.5, disk_k: float = 1.0e-9) -> "Medium":
        vg = VanGenuchtenParams(alpha=alpha, n=fld.n_vg, theta_r=theta_r,
                                theta_s=fld.theta_s, eta=eta)
        disk = np.zeros((geom.ny, geom.nx), dtype=bool)
        disk[geom.disk_row_mask(), :] = True
        k = fld.k_intrinsic.copy()
        k[disk] = disk_k
        return cls(vg=vg, k_intrinsic=k, porosity=np.asarray(fld.theta_s, float),
                   disk_mask=disk)


@dataclass(frozen=True, eq=False)
class Snapshot:
    """Full-grid derived state at one emission time."""

    t: float
    s_nw: np.ndarray       # effective non-wetting saturation, in [0, 1]
    v_nw_abs: np.ndarray   # cm/h
    h_w: np.ndarray
    h_nw: np.ndarray

    FIELDS = ("s_nw", "v_nw_abs", "h_w", "h_nw")


@dataclass
class StepDiagnostics:
    iterations: int
    residual: float
    water_in: float = 0.0      # boundary water volume into the domain, cm^3
    air_mass_in: float = 0.0   # boundary air mass into the domain, g


@dataclass
class SimulationResult:
    snapshots: list
    n_steps: int = 0
    n_rejected: int = 0
    dt_min_used: float = np.inf
    dt_max_used: float = 0.0
    max_water_residual_rel: float = 0.0
    max_air_residual_rel: float = 0.0
    final_state: State | None = None


# ---------------------------------------------------------------------------
# face bookkeeping


class _Faces:
    """Static face index sets for a grid (flattened cell indices)."""

    _cache: dict = {}

    def __init__(self, geom: GridGeometry):
        p = np.arange(geom.nx * geom.ny).reshape(geom.ny, geom.nx)
        self.v_lo = p[:-1, :].ravel()   # vertical faces: lower cell
        self.v_up = p[1:, :].ravel()    # vertical faces: upper cell
        self.h_le = p[:, :-1].ravel()   # horizontal faces: left cell
        self.h_ri = p[:, 1:].ravel()    # horizontal faces: right cell
        self.bottom = p[0, :]
        self.top = p[-1, :]

    @classmethod
    def for_geom(cls, geom: GridGeometry) -> "_Faces":
        key = (geom.nx, geom.ny)
        if key not in cls._cache:
            cls._cache[key] = cls(geom)
        return cls._cache[key]


class _Pattern:
    """Static COO layout of the coupled 2N x 2N system.

    Duplicate (row, col) pairs are summed on conversion to CSR, so each
    contribution group owns a fixed slice of the value vector.
    """

    _cache: dict = {}

    def __init__(self, geom: GridGeometry):
        faces = _Faces.for_geom(geom)
        N = geom.nx * geom.ny
        cell = np.arange(N)
        rows, cols = [], []
        self.slices = {}

        def group(name, r, c):
            start = sum(len(x) for x in rows)
            rows.append(np.asarray(r))
            cols.append(np.asarray(c))
            self.slices[name] = slice(start, start + len(r))

        def face_group(name, a, b, offset):
            group(name + "_aa", offset + a, offset + a)
            group(name + "_ab", offset + a, offset + b)
            group(name + "_bb", offset + b, offset + b)
            group(name + "_ba", offset + b, offset + a)

        group("w_accum", cell, cell)
        group("w_cross", cell, N + cell)
        face_group("w_v", faces.v_lo, faces.v_up, 0)
        face_group("w_h", faces.h_le, faces.h_ri, 0)
        group("w_bc", faces.bottom, faces.bottom)
        group("a_accum", N + cell, N + cell)
        group("a_cross", N + cell, cell)
        face_group("a_v", faces.v_lo, faces.v_up, N)
        face_group("a_h", faces.h_le, faces.h_ri, N)
        group("a_bc", N + faces.top, N + faces.top)
        group("a_dead", N + cell, N + cell)

        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.nnz = self.rows.size
        self.shape = (2 * N, 2 * N)

    def values(self) -> np.ndarray:
        return np.zeros(self.nnz)

    def put(self, vals, name, data):
        vals[self.slices[name]] = data

    def put_faces(self, vals, name, t):
        self.put(vals, name + "_aa", t)
        self.put(vals, name + "_ab", -t)
        self.put(vals, name + "_bb", t)
        self.put(vals, name + "_ba", -t)

    def matrix(self, vals) -> sp.csr_matrix:
        return sp.csr_matrix((vals, (self.rows, self.cols)), shape=self.shape)

    @classmethod
    def for_geom(cls, geom: GridGeometry) -> "_Pattern":
        key = (geom.nx, geom.ny)
        if key not in cls._cache:
            cls._cache[key] = cls(geom)
        return cls._cache[key]


def _harmonic(a, b):
    return 2.0 * a * b / (a + b)


def _phase_coefficients(h_w, h_nw, medium: Medium, fluids: FluidProps):
    """Cellwise coefficients at the current iterate (flattened)."""
    h_c = h_nw - h_w
    s_ew = effective_saturation(h_c, medium.vg).ravel()
    theta_w = water_content(h_c, medium.vg).ravel()
    cap = capillary_capacity(h_c, medium.vg).ravel()
    rho = air_density(h_nw, fluids).ravel()
    krw = rel_perm_wetting(s_ew, _flat_vg(medium.vg))
    krnw = rel_perm_nonwetting(s_ew, _flat_vg(medium.vg))
    krnw = np.where(medium.disk_mask.ravel(), 0.0, krnw)
    return s_ew, theta_w, cap, rho, krw, krnw


def _flat_vg(vg: VanGenuchtenParams) -> VanGenuchtenParams:
    flat = lambda a: np.asarray(a, float).ravel() if np.ndim(a) else a
    return VanGenuchtenParams(alpha=flat(vg.alpha), n=flat(vg.n),
                              theta_r=flat(vg.theta_r), theta_s=flat(vg.theta_s),
                              eta=flat(vg.eta))


class _FaceSystem:
    """Face transmissibilities and gravity terms at one iterate.

    Transmissibility T is K_face * area / distance, so the volumetric
    inflow into cell a from neighbor b is T * [(h_b - h_a) + g*(y_b - y_a)]
    with g = 1 for water and rho_face/rho_w for air.
    """

    def __init__(self, faces: _Faces, geom: GridGeometry, medium: Medium,
                 fluids: FluidProps, h_w, h_nw, rho, krw, krnw,
                 include_gravity: bool):
        self.faces = faces
        kf = medium.k_intrinsic.ravel()
        disk = medium.disk_mask.ravel()
        y = np.repeat(geom.y_centers(), geom.nx)  # flattened cell y
        self.y = y
        g_w = fluids.rho_w * GRAVITY / fluids.mu_w
        g_a = fluids.rho_w * GRAVITY / fluids.mu_nw
        grav = 1.0 if include_gravity else 0.0

        # vertical faces
        lo, up = faces.v_lo, faces.v_up
        tk_v = _harmonic(kf[lo], kf[up]) * geom.dx / geom.dy
        dyv = y[up] - y[lo]
        dphi_w = (h_w[up] - h_w[lo]) + grav * dyv
        up_w = np.where(dphi_w > 0.0, up, lo)
        self.Tw_v = tk_v * g_w * krw[up_w]
        self.gw_v = grav * dyv

        rho_v = 0.5 * (rho[lo] + rho[up])
        gamma_v = grav * rho_v / fluids.rho_w
        dphi_a = (h_nw[up] - h_nw[lo]) + gamma_v * dyv
        up_a = np.where(dphi_a > 0.0, up, lo)
        Ta = tk_v * g_a * krnw[up_a]
        Ta[disk[lo] | disk[up]] = 0.0
        self.Ta_v = Ta
        self.rho_v = rho_v
        self.ga_v = gamma_v * dyv

        # horizontal faces (no gravity component)
        le, ri = faces.h_le, faces.h_ri
        tk_h = _harmonic(kf[le], kf[ri]) * geom.dy / geom.dx
        dphi_w = h_w[ri] - h_w[le]
        up_w = np.where(dphi_w > 0.0, ri, le)
        self.Tw_h = tk_h * g_w * krw[up_w]
        rho_h = 0.5 * (rho[le] + rho[ri])
        dphi_a = h_nw[ri] - h_nw[le]
        up_a = np.where(dphi_a > 0.0, ri, le)
        Ta = tk_h * g_a * krnw[up_a]
        Ta[disk[le] | disk[ri]] = 0.0
        self.Ta_h = Ta
        self.rho_h = rho_h

        # boundary faces (None when the domain is closed)
        self.bc_bottom_w = None   # (T, h_bc, grav_term)
        self.bc_top_a = None      # (rho_face * T, h_bc, grav_term)

    def set_bottom_water(self, geom, medium, fluids, krw, h_bc, include_gravity):
        cells = self.faces.bottom
        kf = medium.k_intrinsic.ravel()
        g_w = fluids.rho_w * GRAVITY / fluids.mu_w
        T = kf[cells] * krw[cells] * g_w * geom.dx / (geom.dy / 2.0)
        grav = (1.0 if include_gravity else 0.0) * (0.0 - self.y[cells])
        self.bc_bottom_w = (cells, T, h_bc, grav)

    def set_top_air(self, geom, medium, fluids, krnw, rho, h_bc, include_gravity):
        cells = self.faces.top
        kf = medium.k_intrinsic.ravel()
        g_a = fluids.rho_w * GRAVITY / fluids.mu_nw
        T = kf[cells] * krnw[cells] * g_a * geom.dx / (geom.dy / 2.0)
        rho_bc = 0.5 * (rho[cells] + air_density(h_bc, fluids))
        gamma = (1.0 if include_gravity else 0.0) * rho_bc / fluids.rho_w
        grav = gamma * (geom.column_height - self.y[cells])
        self.bc_top_a = (cells, T, rho_bc, h_bc, grav)

    def boundary_rates(self, h_w, h_nw):
        """Boundary inflow rates: (water volume/h, air mass/h)."""
        qw = 0.0
        qa = 0.0
        if self.bc_bottom_w is not None:
            cells, T, h_bc, grav = self.bc_bottom_w
            qw = float(np.sum(T * ((h_bc - h_w[cells]) + grav)))
        if self.bc_top_a is not None:
            cells, T, rho_bc, h_bc, grav = self.bc_top_a
            qa = float(np.sum(rho_bc * T * ((h_bc - h_nw[cells]) + grav)))
        return qw, qa


def _build_face_system(state_heads, medium, geom, fluids, faces, schedule,
                       t_bc, closed_box, include_gravity):
    h_w, h_nw = state_heads
    _, _, _, rho, krw, krnw = _phase_coefficients(
        h_w.reshape(geom.ny, geom.nx), h_nw.reshape(geom.ny, geom.nx),
        medium, fluids)
    fs = _FaceSystem(faces, geom, medium, fluids, h_w, h_nw, rho, krw, krnw,
                     include_gravity)
    if not closed_box:
        if schedule is None:
            raise ValueError("schedule required unless closed_box=True")
        fs.set_bottom_water(geom, medium, fluids, krw,
                            schedule.outlet_water_head(t_bc), include_gravity)
        fs.set_top_air(geom, medium, fluids, krnw, rho,
                       schedule.inlet_air_head(t_bc), include_gravity)
    return fs, rho, krw, krnw


# ---------------------------------------------------------------------------
# implicit step


def _assemble(h_w_m, h_nw_m, theta_w_n, rho_theta_n, dt, medium, geom, fluids,
              faces, schedule, t_new, closed_box, include_gravity):
    """One Picard linearization: sparse matrix and RHS for [h_w; h_nw]."""
    N = geom.nx * geom.ny
    V_dt = geom.cell_volume / dt
    pat = _Pattern.for_geom(geom)

    grid = lambda a: a.reshape(geom.ny, geom.nx)
    s_ew, theta_w, cap, rho, krw, krnw = _phase_coefficients(
        grid(h_w_m), grid(h_nw_m), medium, fluids)

    fs = _FaceSystem(faces, geom, medium, fluids, h_w_m, h_nw_m, rho, krw,
                     krnw, include_gravity)
    if not closed_box:
        if schedule is None:
            raise ValueError("schedule required unless closed_box=True")
        fs.set_bottom_water(geom, medium, fluids, krw,
                            schedule.outlet_water_head(t_new), include_gravity)
        fs.set_top_air(geom, medium, fluids, krnw, rho,
                       schedule.inlet_air_head(t_new), include_gravity)

    lam = fluids.lam
    phi = medium.porosity.ravel()
    theta_nw = phi - theta_w
    A_air = theta_nw * lam - rho * cap      # d(rho*theta_nw)/dh_nw, >= 0
    B_air = rho * cap                       # d(rho*theta_nw)/dh_w,  <= 0

    vals = pat.values()
    b = np.zeros(2 * N)

    # water accumulation: (theta^m - theta^n)/dt + C*(d h_nw - d h_w)/dt
    pat.put(vals, "w_accum", -cap * V_dt)
    pat.put(vals, "w_cross", cap * V_dt)
    b[:N] -= (theta_w - theta_w_n) * V_dt
    b[:N] += cap * V_dt * (h_nw_m - h_w_m)

    # air accumulation
    pat.put(vals, "a_accum", A_air * V_dt)
    pat.put(vals, "a_cross", B_air * V_dt)
    b[N:] -= (rho * theta_nw - rho_theta_n) * V_dt
    b[N:] += (A_air * h_nw_m + B_air * h_w_m) * V_dt

    # water faces
    pat.put_faces(vals, "w_v", fs.Tw_v)
    np.add.at(b, faces.v_lo, fs.Tw_v * fs.gw_v)
    np.add.at(b, faces.v_up, -fs.Tw_v * fs.gw_v)
    pat.put_faces(vals, "w_h", fs.Tw_h)

    # air faces (mass-weighted)
    rTa_v = fs.rho_v * fs.Ta_v
    rTa_h = fs.rho_h * fs.Ta_h
    pat.put_faces(vals, "a_v", rTa_v)
    np.add.at(b, N + faces.v_lo, rTa_v * fs.ga_v)
    np.add.at(b, N + faces.v_up, -rTa_v * fs.ga_v)
    pat.put_faces(vals, "a_h", rTa_h)

    # Dirichlet boundaries
    bc_air_load = np.zeros(N)
    if fs.bc_bottom_w is not None:
        cells, T, h_bc, grav = fs.bc_bottom_w
        pat.put(vals, "w_bc", T)
        np.add.at(b, cells, T * (h_bc + grav))
    if fs.bc_top_a is not None:
        cells, T, rho_bc, h_bc, grav = fs.bc_top_a
        pat.put(vals, "a_bc", rho_bc * T)
        np.add.at(b, N + cells, rho_bc * T * (h_bc + grav))
        bc_air_load[cells] = rho_bc * T

    # Cells with no air storage sensitivity and no open air face carry no
    # information about h_nw; pin them to the previous iterate.
    air_face_load = bc_air_load
    np.add.at(air_face_load, faces.v_lo, rTa_v)
    np.add.at(air_face_load, faces.v_up, rTa_v)
    np.add.at(air_face_load, faces.h_le, rTa_h)
    np.add.at(air_face_load, faces.h_ri, rTa_h)
    dead = (A_air == 0.0) & (B_air == 0.0) & (air_face_load == 0.0)
    if np.any(dead):
        pat.put(vals, "a_dead", dead.astype(float))
        b[N:][dead] = h_nw_m[dead]

    return pat.matrix(vals), b


def advance(state: State, dt: float, medium: Medium, geom: GridGeometry,
            fluids: FluidProps, schedule: BoundarySchedule | None = None, *,
            closed_box: bool = False, include_gravity: bool = True,
            picard_tol: float = 1e-6, picard_max_iter: int = 50) -> State:
    """Backward-Euler step of the coupled system to state.t + dt.

    Raises NonConvergenceError if the Picard iteration does not reach
    a relative head update below picard_tol; callers typically halve dt
    and retry.
    """
    new_state, _ = _advance_info(state, dt, medium, geom, fluids, schedule,
                                 closed_box=closed_box,
                                 include_gravity=include_gravity,
                                 picard_tol=picard_tol,
                                 picard_max_iter=picard_max_iter)
    return new_state


def _advance_info(state, dt, medium, geom, fluids, schedule, *, closed_box,
                  include_gravity, picard_tol, picard_max_iter):
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    N = geom.nx * geom.ny
    faces = _Faces.for_geom(geom)
    t_new = state.t + dt

    h_w = state.h_w.ravel().copy()
    h_nw = state.h_nw.ravel().copy()
    h_c = h_nw - h_w
    theta_w_n = water_content(h_c, _flat_vg(medium.vg))
    rho_theta_n = air_density(h_nw, fluids) * (medium.porosity.ravel() - theta_w_n)

    residual = np.inf
    for it in range(1, picard_max_iter + 1):
        M, b = _assemble(h_w, h_nw, theta_w_n, rho_theta_n, dt, medium, geom,
                         fluids, faces, schedule, t_new, closed_box,
                         include_gravity)
        u = spsolve(M, b)
        if not np.all(np.isfinite(u)):
            raise NonConvergenceError(it, np.inf)
        h_w_new, h_nw_new = u[:N], u[N:]
        delta = max(np.max(np.abs(h_w_new - h_w)), np.max(np.abs(h_nw_new - h_nw)))
        scale = max(1.0, np.max(np.abs(u)))
        residual = delta / scale
        h_w, h_nw = h_w_new, h_nw_new
        if residual < picard_tol:
            grid = lambda a: a.reshape(geom.ny, geom.nx)
            new_state = State(grid(h_w), grid(h_nw), t_new)
            return new_state, StepDiagnostics(iterations=it, residual=residual)
    raise NonConvergenceError(picard_max_iter, residual)


def boundary_flux_rates(state: State, medium: Medium, geom: GridGeometry,
                        fluids: FluidProps, schedule: BoundarySchedule | None,
                        *, closed_box: bool = False,
                        include_gravity: bool = True):
    """Instantaneous boundary inflow rates at the state's own time.

    Returns (water volume rate cm^3/h, air mass rate g/h), both positive
    into the domain.
    """
    if closed_box or schedule is None:
        return 0.0, 0.0
    faces = _Faces.for_geom(geom)
    fs, _, _, _ = _build_face_system(
        (state.h_w.ravel(), state.h_nw.ravel()), medium, geom, fluids, faces,
        schedule, state.t, closed_box, include_gravity)
    return fs.boundary_rates(state.h_w.ravel(), state.h_nw.ravel())


# ---------------------------------------------------------------------------
# velocities


@dataclass(frozen=True, eq=False)
class VelocityField:
    v_w_x: np.ndarray
    v_w_y: np.ndarray
    v_nw_x: np.ndarray
    v_nw_y: np.ndarray

    @property
    def v_nw_abs(self) -> np.ndarray:
        return np.hypot(self.v_nw_x, self.v_nw_y)

    @property
    def v_w_abs(self) -> np.ndarray:
        return np.hypot(self.v_w_x, self.v_w_y)


def darcy_velocity(state: State, medium: Medium, geom: GridGeometry,
                   fluids: FluidProps, schedule: BoundarySchedule | None = None,
                   *, include_gravity: bool = True) -> VelocityField:
    """Cell-centered Darcy flux densities (cm/h) for both phases.

    Face fluxes from the two-point approximation are averaged to cell
    centers.  Without a schedule all boundary faces are treated as
    closed (zero flux).
    """
    faces = _Faces.for_geom(geom)
    closed = schedule is None
    h_w = state.h_w.ravel()
    h_nw = state.h_nw.ravel()
    fs, _, _, _ = _build_face_system((h_w, h_nw), medium, geom, fluids, faces,
                                     schedule, state.t, closed, include_gravity)
    ny, nx = geom.ny, geom.nx

    # face flux densities, sign convention: +x rightward, +y upward
    qw_v = -(fs.Tw_v / geom.dx) * ((h_w[faces.v_up] - h_w[faces.v_lo]) + fs.gw_v)
    qa_v = -(fs.Ta_v / geom.dx) * ((h_nw[faces.v_up] - h_nw[faces.v_lo]) + fs.ga_v)
    qw_h = -(fs.Tw_h / geom.dy) * (h_w[faces.h_ri] - h_w[faces.h_le])
    qa_h = -(fs.Ta_h / geom.dy) * (h_nw[faces.h_ri] - h_nw[faces.h_le])

    def center_avg(q_v, q_h, q_bottom, q_top):
        qv = q_v.reshape(ny - 1, nx) if ny > 1 else np.zeros((0, nx))
        yfull = np.vstack([q_bottom[None, :], qv, q_top[None, :]])
        vy = 0.5 * (yfull[:-1, :] + yfull[1:, :])
        qh = q_h.reshape(ny, nx - 1) if nx > 1 else np.zeros((ny, 0))
        xfull = np.hstack([np.zeros((ny, 1)), qh, np.zeros((ny, 1))])
        vx = 0.5 * (xfull[:, :-1] + xfull[:, 1:])
        return vx, vy

    zero = np.zeros(nx)
    qw_bottom = zero
    qa_top = zero
    if fs.bc_bottom_w is not None:
        cells, T, h_bc, grav = fs.bc_bottom_w
        # inflow through the bottom face is upward (+y)
        qw_bottom = (T / geom.dx) * ((h_bc - h_w[cells]) + grav)
    if fs.bc_top_a is not None:
        cells, T, rho_bc, h_bc, grav = fs.bc_top_a
        # inflow through the top face points downward (-y)
        qa_top = -(T / geom.dx) * ((h_bc - h_nw[cells]) + grav)

    vwx, vwy = center_avg(qw_v, qw_h, qw_bottom, zero)
    vax, vay = center_avg(qa_v, qa_h, zero, qa_top)
    return VelocityField(v_w_x=vwx, v_w_y=vwy, v_nw_x=vax, v_nw_y=vay)


# ---------------------------------------------------------------------------
# driver


def initial_state(geom: GridGeometry, schedule: BoundarySchedule,
                  initial_air_head: float = 20.0) -> State:
    """Uniform air head over hydrostatic water consistent with the outlet."""
    y = geom.y_centers()
    h_w = (schedule.outlet_water_head(0.0) - y)[:, None] * np.ones((1, geom.nx))
    h_nw = np.full((geom.ny, geom.nx), float(initial_air_head))
    return State(h_w=h_w, h_nw=h_nw, t=0.0)


def snapshot_from_state(state: State, medium: Medium, geom: GridGeometry,
                        fluids: FluidProps,
                        schedule: BoundarySchedule | None = None) -> Snapshot:
    s_ew = effective_saturation(state.h_nw - state.h_w, medium.vg)
    s_nw = 1.0 - s_ew
    assert np.all((s_nw >= 0.0) & (s_nw <= 1.0)), "saturation out of [0, 1]"
    vel = darcy_velocity(state, medium, geom, fluids, schedule)
    return Snapshot(t=state.t, s_nw=np.asarray(s_nw), v_nw_abs=vel.v_nw_abs,
                    h_w=state.h_w.copy(), h_nw=state.h_nw.copy())


def run_simulation(cfg) -> SimulationResult:
    """Integrate the default column problem over cfg's snapshot times.

    Adaptive backward Euler: the step is halved on nonconvergence, grown
    by 1.2x after five consecutive accepted steps, clipped to land on
    snapshot times, and bounded to [cfg.dt_min, cfg.dt_max]; underflow
    of the floor is fatal.
    """
    from .config import RunConfig  # local import avoids cycle at import time

    assert isinstance(cfg, RunConfig)
    geom = GridGeometry(nx=cfg.nx, ny=cfg.ny, column_height=cfg.column_height,
                        column_width=cfg.column_width,
                        disk_thickness=cfg.disk_thickness)
    from .hetfield import sample_field
    fld = sample_field(cfg.nx, cfg.ny, cfg.field_specs(), cfg.seed)
    medium = Medium.from_field(fld, geom, alpha=cfg.alpha, theta_r=cfg.theta_r,
                               eta=cfg.eta, disk_k=cfg.disk_k)
    fluids = cfg.fluid_props()
    schedule = cfg.boundary_schedule()
    return integrate(medium, geom, fluids, schedule, cfg.snapshot_times,
                     initial_air_head=cfg.initial_air_head, dt_init=cfg.dt_init,
                     dt_min=cfg.dt_min, dt_max=cfg.dt_max,
                     picard_tol=cfg.picard_tol,
                     picard_max_iter=cfg.picard_max_iter)


def integrate(medium: Medium, geom: GridGeometry, fluids: FluidProps,
              schedule: BoundarySchedule, snapshot_times, *,
              initial_air_head: float = 20.0, dt_init: float = 1e-3,
              dt_min: float = 1e-7, dt_max: float = 1e-2,
              picard_tol: float = 1e-6, picard_max_iter: int = 50,
              state: State | None = None) -> SimulationResult:
    times = list(snapshot_times)
    if any(t < 0 for t in times) or sorted(times) != times:
        raise ValueError("snapshot times must be sorted and nonnegative")
    t_end = times[-1] if times else 0.0

    if state is None:
        state = initial_state(geom, schedule, initial_air_head)
    res = SimulationResult(snapshots=[])
    water_in_cum = 0.0
    air_in_cum = 0.0

    def totals(st):
        tw = water_content(st.h_nw - st.h_w, medium.vg)
        rho = air_density(st.h_nw, fluids)
        vol = geom.cell_volume
        return float(np.sum(tw) * vol), float(np.sum(rho * (medium.porosity - tw)) * vol)

    pending = list(times)
    eps = 1e-12
    while pending and pending[0] <= state.t + eps:
        res.snapshots.append(snapshot_from_state(state, medium, geom, fluids,
                                                 schedule))
        pending.pop(0)

    dt = dt_init
    consecutive = 0
    w_before, a_before = totals(state)
    while state.t < t_end - eps:
        target = pending[0] if pending else t_end
        dt_try = min(dt, target - state.t)
        landing = dt_try < dt
        try:
            new_state, diag = _advance_info(
                state, dt_try, medium, geom, fluids, schedule,
                closed_box=False, include_gravity=True,
                picard_tol=picard_tol, picard_max_iter=picard_max_iter)
        except NonConvergenceError:
            res.n_rejected += 1
            dt = dt_try / 2.0
            if dt < dt_min:
                raise TimestepUnderflowError(
                    f"time step underflow below {dt_min:g} h at t={state.t:g}")
            consecutive = 0
            continue

        qw, qa = boundary_flux_rates(new_state, medium, geom, fluids, schedule)
        water_in_cum += qw * dt_try
        air_in_cum += qa * dt_try
        w_after, a_after = totals(new_state)
        denom_w = max(abs(water_in_cum), 1e-12)
        denom_a = max(abs(air_in_cum), 1e-15)
        res.max_water_residual_rel = max(
            res.max_water_residual_rel,
            abs((w_after - w_before) - qw * dt_try) / denom_w)
        res.max_air_residual_rel = max(
            res.max_air_residual_rel,
            abs((a_after - a_before) - qa * dt_try) / denom_a)
        w_before, a_before = w_after, a_after

        state = new_state
        res.n_steps += 1
        res.dt_min_used = min(res.dt_min_used, dt_try)
        res.dt_max_used = max(res.dt_max_used, dt_try)
        if pending and abs(state.t - pending[0]) <= eps:
            state.t = pending[0]
            res.snapshots.append(snapshot_from_state(state, medium, geom,
                                                     fluids, schedule))
            pending.pop(0)
        if not landing:
            consecutive += 1
            if consecutive >= 5:
                dt = min(dt * 1.2, dt_max)
                consecutive = 0
    res.final_state = state
    return res


def mass_balance(state_before: State, state_after: State, water_in: float,
                 air_mass_in: float, medium: Medium, geom: GridGeometry,
                 fluids: FluidProps):
    """Discrete continuity residuals between two states.

    water residual  = d(total water volume) - net boundary water volume;
    air residual    = d(total air mass)     - net boundary air mass.
    """
    vol = geom.cell_volume

    def totals(st):
        tw = water_content(st.h_nw - st.h_w, medium.vg)
        rho = air_density(st.h_nw, fluids)
        return (float(np.sum(tw) * vol),
                float(np.sum(rho * (medium.porosity - tw)) * vol))

    w0, a0 = totals(state_before)
    w1, a1 = totals(state_after)
    return (w1 - w0) - water_in, (a1 - a0) - air_mass_in
