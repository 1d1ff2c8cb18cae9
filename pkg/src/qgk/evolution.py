"""Time integration of the reformulated equation and the exact linear flow.

Applying the inverse elliptic operator turns the model into

    dr/dt = -d(xi) transport(r, r)_hat - mu h(xi) r_hat + d(xi) f_hat ,

whose diagonal linear part exp(-mu h(xi) t) is treated exactly by an
integrating-factor Runge-Kutta scheme; for a vanishing nonlinearity the
step is exact to round-off regardless of dt.  The remaining term behaves
like first-order transport at high frequency (d |xi|^5 ~ |xi|), so the
explicit stage satisfies an advective CFL bound dt <= 0.5 (L/n) / max|u|.

The optional sharp Galerkin cutoff reproduces the projected system: the
cutoff is applied to the nonlinear term and the forcing, the initial datum
is projected, and all cancellations survive because the cutoff is
self-adjoint and idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import diagnostics as diag
from .grid import GridSpec, SpectralField, band_keep, multiplier_table, xi_squared
from .bilinear import transport
from .quadrature import duhamel_time_factor, linear_segment_factor
from .spectral import (
    inverse_transform,
    one_minus_laplacian,
    perp_gradient,
    project_jn,
    sanitize_band,
    sobolev_norm,
    _jn_mask,
)

IF_RK4 = "if_rk4"
IF_RK2 = "if_rk2"
STEPPERS = (IF_RK4, IF_RK2)

FORCING_KINDS = ("zero", "separable_decaying", "tabulated")


class SimulationAbort(RuntimeError):
    """Non-finite state encountered; carries the last good snapshot."""

    def __init__(self, message: str, t: float, last_good: SpectralField):
        super().__init__(message)
        self.t = t
        self.last_good = last_good


@dataclass(eq=False)
class ForcingSpec:
    """External force description.

    kinds:
      zero                 -- no forcing
      separable_decaying   -- f(t, x) = K (1+t)^(-1-eta) g(x) for a
                              band-limited profile g, so every Sobolev norm
                              of f carries the (1+t)^(-1-eta) law exactly
      tabulated            -- piecewise-linear interpolation of (time, field)
                              knots; zero outside the tabulated range
    """

    kind: str = "zero"
    profile: SpectralField | None = None
    amplitude: float = 1.0
    eta: float = 0.75
    table: list[tuple[float, SpectralField]] = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise ValueError(f"forcing kind must be one of {FORCING_KINDS}")
        if self.kind == "separable_decaying":
            if self.profile is None:
                raise ValueError("separable_decaying forcing needs a spatial profile")
            if not 0.0 < self.eta < 1.0:
                raise ValueError("forcing eta must lie in (0, 1)")
            if not self.amplitude > 0.0:
                raise ValueError("forcing amplitude must be positive")
            self.profile = sanitize_band(self.profile)
        if self.kind == "tabulated":
            if len(self.table) < 2:
                raise ValueError("tabulated forcing needs at least two knots")
            times = [t for t, _ in self.table]
            if any(t1 <= t0 for t0, t1 in zip(times, times[1:])):
                raise ValueError("tabulated knots must have increasing times")
            self.table = [(t, sanitize_band(f)) for t, f in self.table]

    def coefficients(self, t: float) -> np.ndarray | None:
        """f_hat(t) on the grid, or None for the zero fast path."""
        if self.kind == "zero":
            return None
        if self.kind == "separable_decaying":
            return self.amplitude * (1.0 + t) ** (-1.0 - self.eta) * self.profile.coeffs
        times = [tk for tk, _ in self.table]
        if t <= times[0] or t >= times[-1]:
            if t == times[0]:
                return self.table[0][1].coeffs.copy()
            if t == times[-1]:
                return self.table[-1][1].coeffs.copy()
            return None
        i = int(np.searchsorted(times, t) - 1)
        t0, f0 = self.table[i]
        t1, f1 = self.table[i + 1]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * f0.coeffs + w * f1.coeffs


@dataclass(eq=False)
class RunConfig:
    """Full description of one evolution experiment."""

    grid: GridSpec
    mu: float
    t_end: float
    dt: float
    initial_condition: SpectralField
    stepper: str = IF_RK4
    galerkin_cut: float | None = None
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    seed: int = 0
    diagnostics_every: int = 10
    snapshot_every: int = 0          # in units of diagnostics records; 0 = none
    sigma_list: tuple[float, ...] = (1.0,)
    disable_transport: bool = False  # diagnostic switch: run the linear flow

    def __post_init__(self):
        if self.mu < 0.0:
            raise ValueError("mu must be nonnegative")
        if not self.dt > 0.0 or not self.t_end > 0.0:
            raise ValueError("dt and t_end must be positive")
        if self.stepper not in STEPPERS:
            raise ValueError(f"stepper must be one of {STEPPERS}")
        if self.galerkin_cut is not None and not self.galerkin_cut > 0.0:
            raise ValueError("galerkin_cut must be positive when set")
        if self.diagnostics_every < 1:
            raise ValueError("diagnostics_every must be at least 1")
        if self.initial_condition.grid != self.grid:
            raise ValueError("initial condition grid does not match run grid")

    @property
    def n_steps(self) -> int:
        steps = int(round(self.t_end / self.dt))
        if abs(steps * self.dt - self.t_end) > 1e-9 * max(1.0, self.t_end):
            raise ValueError("t_end must be an integer number of steps")
        return steps


@dataclass
class TimeSeriesRecord:
    """One diagnostics row; columns in fixed CSV order."""

    t: float
    x: float
    y: float
    e_first: float
    e_second: float
    e_sigma: tuple
    h3: float
    h4: float
    diss_first: float
    diss_second: float
    work_first: float
    work_second: float
    res_first: float = 0.0
    res_second: float = 0.0

    @staticmethod
    def columns(sigma_list) -> list[str]:
        cols = ["t", "X", "Y", "E_first", "E_second"]
        cols += [f"E_sigma_{s:g}" for s in sigma_list]
        cols += ["H3", "H4", "diss_first", "diss_second", "work_first",
                 "work_second", "first_balance_residual", "second_balance_residual"]
        return cols

    def row(self) -> list[float]:
        return [self.t, self.x, self.y, self.e_first, self.e_second,
                *self.e_sigma, self.h3, self.h4, self.diss_first,
                self.diss_second, self.work_first, self.work_second,
                self.res_first, self.res_second]


@dataclass
class SimulationResult:
    final: SpectralField
    records: list
    snapshots: list               # (t, SpectralField) pairs
    warnings: list


def _forcing_coeffs(cfg: RunConfig, t: float) -> np.ndarray | None:
    """Forcing coefficients as the tendency sees them (band + Galerkin cut)."""
    f = cfg.forcing.coefficients(t)
    if f is None:
        return None
    f = f * band_keep(cfg.grid)
    if cfg.galerkin_cut is not None:
        f = f * _jn_mask(cfg.grid, float(cfg.galerkin_cut))
    return f


def _nonlinear_rhs(coeffs: np.ndarray, t: float, cfg: RunConfig) -> np.ndarray:
    """Everything but the diagonal dissipation: d (f_hat - transport_hat)."""
    mt = multiplier_table(cfg.grid)
    if cfg.disable_transport:
        nl = None
    else:
        nl = transport(SpectralField(cfg.grid, coeffs), SpectralField(cfg.grid, coeffs)).coeffs
    f = _forcing_coeffs(cfg, t)
    if f is None and nl is None:
        return np.zeros(cfg.grid.shape, dtype=complex)
    inner = (f - nl) if (f is not None and nl is not None) else (f if nl is None else -nl)
    rhs = mt.d * inner
    if cfg.galerkin_cut is not None:
        rhs = rhs * _jn_mask(cfg.grid, float(cfg.galerkin_cut))
    return rhs


def tendency(r: SpectralField, t: float, cfg: RunConfig) -> SpectralField:
    """Right-hand side of the reformulated system at state r and time t."""
    if r.grid != cfg.grid:
        raise ValueError("state grid does not match config grid")
    mt = multiplier_table(cfg.grid)
    rhs = _nonlinear_rhs(r.coeffs, t, cfg) - cfg.mu * mt.h * r.coeffs
    if not np.all(np.isfinite(rhs)):
        raise SimulationAbort("non-finite tendency", t, r)
    return SpectralField(cfg.grid, rhs)


@lru_cache(maxsize=None)
def _exp_factors(grid: GridSpec, mu: float, dt: float):
    h = multiplier_table(grid).h
    e_half = np.exp(-mu * h * (0.5 * dt))
    e_full = e_half * e_half
    e_half.setflags(write=False)
    e_full.setflags(write=False)
    return e_half, e_full


def step(r: SpectralField, t: float, cfg: RunConfig) -> SpectralField:
    """One integrating-factor Runge-Kutta step from t to t + dt.

    The dissipative factor exp(-mu h dt) multiplies the state exactly, so a
    vanishing nonlinearity propagates exactly for any dt.
    """
    dt = cfg.dt
    e_half, e_full = _exp_factors(cfg.grid, cfg.mu, dt)
    y = r.coeffs
    nl = _nonlinear_rhs
    if cfg.stepper == IF_RK2:
        k1 = nl(y, t, cfg)
        k2 = nl(e_half * (y + 0.5 * dt * k1), t + 0.5 * dt, cfg)
        out = e_full * y + dt * e_half * k2
    else:
        a = nl(y, t, cfg)
        b = nl(e_half * (y + 0.5 * dt * a), t + 0.5 * dt, cfg)
        c = nl(e_half * y + 0.5 * dt * b, t + 0.5 * dt, cfg)
        d = nl(e_full * y + dt * e_half * c, t + dt, cfg)
        out = e_full * y + (dt / 6.0) * (e_full * a + 2.0 * e_half * (b + c) + d)
    if not np.all(np.isfinite(out)):
        raise SimulationAbort("non-finite state after step", t + dt, r)
    return SpectralField(cfg.grid, out)


def max_velocity(r: SpectralField) -> float:
    u1, u2 = perp_gradient(one_minus_laplacian(r))
    p1 = inverse_transform(u1).samples
    p2 = inverse_transform(u2).samples
    return float(np.max(np.hypot(p1, p2)))


def cfl_limit(r: SpectralField) -> float:
    """Advective bound dt <= 0.5 (L/n) / max|u| (inf when the flow is still)."""
    umax = max_velocity(r)
    if umax == 0.0:
        return float("inf")
    return 0.5 * r.grid.dx / umax


def prepare_state(cfg: RunConfig) -> SpectralField:
    """Sanitized (and, if configured, Galerkin-projected) initial state."""
    r = sanitize_band(cfg.initial_condition)
    if cfg.galerkin_cut is not None:
        r = project_jn(r, cfg.galerkin_cut)
    return r


def _record(r: SpectralField, t: float, cfg: RunConfig) -> TimeSeriesRecord:
    f = _forcing_coeffs(cfg, t)
    fz = f if f is not None else np.zeros(cfg.grid.shape, dtype=complex)
    return TimeSeriesRecord(
        t=t,
        x=diag.x_of(r),
        y=diag.y_of(r),
        e_first=diag.energy_first(r),
        e_second=diag.energy_second(r),
        e_sigma=tuple(diag.energy_sigma(r, s) for s in cfg.sigma_list),
        h3=sobolev_norm(r, 3.0),
        h4=sobolev_norm(r, 4.0),
        diss_first=diag.dissipation_first(r),
        diss_second=diag.dissipation_second(r),
        work_first=diag.forcing_work_first(fz, r),
        work_second=diag.forcing_work_second(fz, r),
    )


def _attach_residuals(records: list, mu: float) -> None:
    times = [rec.t for rec in records]
    if len(times) < 3:
        return
    r1 = diag.first_balance_residuals(
        times, [r.e_first for r in records], [r.diss_first for r in records],
        [r.work_first for r in records], mu)
    r2 = diag.second_balance_residuals(
        times, [r.e_second for r in records], [r.diss_second for r in records],
        [r.work_second for r in records], mu)
    for rec, a, b in zip(records, r1, r2):
        rec.res_first = float(a)
        rec.res_second = float(b)


def simulate(cfg: RunConfig) -> SimulationResult:
    """Advance the configured run to t_end, collecting diagnostics.

    Deterministic given (cfg, seed): all randomness is consumed when the
    initial condition and forcing profile are built.
    """
    warnings: list[str] = []
    if cfg.mu == 0.0:
        warnings.append("mu = 0: inviscid run; conservation is tracked but "
                        "long-time stability is not certified")
    r = prepare_state(cfg)
    steps = cfg.n_steps
    if steps % cfg.diagnostics_every != 0:
        warnings.append("step count is not a multiple of diagnostics_every; "
                        "the final partial window is not recorded")
    records = [_record(r, 0.0, cfg)]
    snapshots = [(0.0, r.copy())] if cfg.snapshot_every > 0 else []
    limit = cfl_limit(r)
    if cfg.dt > limit:
        warnings.append(f"dt = {cfg.dt:g} exceeds the advective CFL bound {limit:g} at t = 0")
    for i in range(steps):
        t = i * cfg.dt
        r = step(r, t, cfg)
        done = i + 1
        if done % cfg.diagnostics_every == 0:
            t_rec = done * cfg.dt
            records.append(_record(r, t_rec, cfg))
            if cfg.snapshot_every > 0 and (done // cfg.diagnostics_every) % cfg.snapshot_every == 0:
                snapshots.append((t_rec, r.copy()))
            if len(warnings) < 8:
                limit = cfl_limit(r)
                if cfg.dt > limit:
                    warnings.append(
                        f"dt = {cfg.dt:g} exceeds the advective CFL bound {limit:g} at t = {t_rec:g}")
    _attach_residuals(records, cfg.mu)
    return SimulationResult(final=r, records=records, snapshots=snapshots, warnings=warnings)


# ---------------------------------------------------------------------------
# exact linear flow


def linear_evolve(w0: SpectralField, forcing: ForcingSpec, mu: float,
                  times) -> list[tuple[float, SpectralField]]:
    """Exact mode-wise solution of the linear equation at the given times.

    The free part is the diagonal propagator exp(-mu h t); the Duhamel
    integral is evaluated per mode, with the separable-decaying amplitude
    integrated by panel quadrature (grouped over equal dissipation rates)
    and tabulated forcing integrated segment-by-segment in closed form.
    """
    grid = w0.grid
    w0 = sanitize_band(w0)
    mt = multiplier_table(grid)
    out = []
    q = xi_squared(grid)
    uniq, inverse = np.unique(q.ravel(), return_inverse=True)
    for t in times:
        if t < 0.0:
            raise ValueError("times must be nonnegative")
        coeffs = np.exp(-mu * mt.h * t) * w0.coeffs
        if forcing.kind == "separable_decaying":
            lam_u = mu * (1.0 + uniq) * uniq * uniq / (1.0 + uniq + uniq * uniq)
            factors = duhamel_time_factor(lam_u, t, forcing.eta)[inverse].reshape(grid.shape)
            f0 = forcing.amplitude * mt.d * forcing.profile.coeffs
            coeffs = coeffs + f0 * factors * band_keep(grid)
        elif forcing.kind == "tabulated":
            coeffs = coeffs + _tabulated_duhamel(forcing, mu, t, grid)
        out.append((float(t), SpectralField(grid, coeffs)))
    return out


def _tabulated_duhamel(forcing: ForcingSpec, mu: float, t: float,
                       grid: GridSpec) -> np.ndarray:
    """Closed-form Duhamel integral of the piecewise-linear interpolant.

    Each segment is integrated from its upper end so that only decaying
    exponentials appear, keeping the evaluation stable for stiff modes.
    """
    mt = multiplier_table(grid)
    lam = mu * mt.h
    acc = np.zeros(grid.shape, dtype=complex)
    for (t0, f0), (t1, f1) in zip(forcing.table, forcing.table[1:]):
        if t <= t0:
            break
        t_up = min(t, t1)
        width = t_up - t0
        a0 = mt.d * f0.coeffs
        slope = (mt.d * f1.coeffs - a0) / (t1 - t0)
        j0, j1 = linear_segment_factor(lam, width)
        # int_{t0}^{t_up} e^{-lam (t - tau)} (a0 + slope (tau - t0)) dtau
        acc = acc + np.exp(-lam * (t - t_up)) * ((a0 + slope * width) * j0 - slope * j1)
    return acc


# ---------------------------------------------------------------------------
# twin-run stability


@dataclass
class StabilityReport:
    """Twin-run energy growth against the Gronwall-shaped envelope."""

    times: np.ndarray
    e_delta: np.ndarray          # first energy of the difference
    delta_h3: np.ndarray
    growth_integral: np.ndarray  # int_0^t |grad (Id - Delta) r_base|_{L4}^4
    fitted_c: float
    fitted_k: float
    envelope: np.ndarray
    envelope_margin: float       # sup of measured / envelope


def _grad_l4_fourth(r: SpectralField) -> float:
    g1, g2 = perp_gradient(one_minus_laplacian(r))
    p1 = inverse_transform(g1).samples
    p2 = inverse_transform(g2).samples
    cell = r.grid.dx ** 2
    return cell * float(np.sum((p1 * p1 + p2 * p2) ** 2))


def compare_runs(cfg: RunConfig, perturbation: SpectralField) -> StabilityReport:
    """Run the configured experiment twice, from r0 and r0 + perturbation.

    Reports the first-energy of the difference and fits the smallest
    constants (C, K >= 0) of the Gronwall-shaped envelope
    C E[delta r0] exp(K G(t)), G(t) = int_0^t |grad (Id - Delta) r_base|_{L4}^4,
    that dominates the measurement.  A healthy run keeps C of order one; the
    perturbation response itself is checked by the halving test.
    """
    if perturbation.grid != cfg.grid:
        raise ValueError("perturbation grid does not match run grid")
    base = prepare_state(cfg)
    pert = SpectralField(cfg.grid, base.coeffs + sanitize_band(perturbation).coeffs)
    if cfg.galerkin_cut is not None:
        pert = project_jn(pert, cfg.galerkin_cut)
    steps = cfg.n_steps
    times, e_delta, delta_h3, g_rate = [], [], [], []

    def push(t, a, b):
        delta = SpectralField(cfg.grid, b.coeffs - a.coeffs)
        times.append(t)
        e_delta.append(diag.energy_first(delta))
        delta_h3.append(sobolev_norm(delta, 3.0))
        g_rate.append(_grad_l4_fourth(a))

    push(0.0, base, pert)
    for i in range(steps):
        t = i * cfg.dt
        base = step(base, t, cfg)
        pert = step(pert, t, cfg)
        if (i + 1) % cfg.diagnostics_every == 0:
            push((i + 1) * cfg.dt, base, pert)

    times = np.asarray(times)
    e_delta = np.asarray(e_delta)
    g_int = diag.cumulative_simpson(np.asarray(g_rate), times[1] if len(times) > 1 else 1.0)
    if e_delta[0] > 0.0:
        # smallest constants of the one-sided Gronwall shape: the growth rate
        # K must be nonnegative, C is then the minimal dominating prefactor
        log_ratio = np.log(np.maximum(e_delta / e_delta[0], 1e-300))
        gm = g_int - g_int.mean()
        denom = float(np.sum(gm * gm))
        slope = float(np.sum(gm * (log_ratio - log_ratio.mean())) / denom) if denom > 0 else 0.0
        k_fit = max(slope, 0.0)
        c_fit = float(np.exp(np.max(log_ratio - k_fit * g_int)))
        envelope = c_fit * e_delta[0] * np.exp(k_fit * g_int)
        margin = float(np.max(e_delta / np.maximum(envelope, 1e-300)))
    else:
        k_fit, c_fit = 0.0, 1.0
        envelope = np.zeros_like(e_delta)
        margin = 0.0
    return StabilityReport(
        times=times, e_delta=e_delta, delta_h3=np.asarray(delta_h3),
        growth_integral=g_int, fitted_c=c_fit, fitted_k=k_fit,
        envelope=envelope, envelope_margin=margin,
    )
