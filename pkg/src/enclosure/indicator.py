"""Boundary indicator functional, tau-series and log-slope fits."""
from __future__ import annotations
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from . import ddarith as dd
from .errors import ConfigError, SolverError
from .forward import BoundaryDataset, ForwardSolver, superpose
from .grid import Grid
from .model import ConductivityModel
from .probes import (ProbeParams, ProbeSolution, TimeProfile, flux_from_probe, make_complex_probe,
                     make_real_probe)

DEFAULT_GUARD = 30.0


def time_weights(scheme: str, dt: float, n_steps: int, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Weights (w_u, w_f) on the time levels 0..M, discrete adjoints of the stepper.

    Summing w_u * u and w_f * f turns the time-stepped equation into the
    resolvent equation with parameter tau, up to a term of size rho^M at t = T.
    """
    if tau * dt > 0.5 + 1e-12:
        raise ConfigError(f"tau*dt = {tau * dt:.4g} exceeds 0.5; reduce dt")
    n = np.arange(n_steps + 1)
    if scheme == "be":
        rho = 1.0 - tau * dt
        wu = dt * rho ** n
        wu[0] = 0.0
        return wu, wu.copy()
    if scheme == "cn":
        rho = (1.0 - 0.5 * tau * dt) / (1.0 + 0.5 * tau * dt)
        wu = dt * 0.5 * (1.0 + rho) * rho ** n
        wu[0] = 0.0
        wf = wu.copy()
        wf[0] += 0.5 * dt * rho
        wf[-1] -= 0.5 * dt * rho ** (n_steps + 1)
        return wu, wf
    raise ConfigError(f"unknown scheme {scheme!r}")


@dataclass(frozen=True)
class IndicatorValue:
    """I = value * exp(log_scale); cancellation = log(sum of term magnitudes / |I|)."""

    value: complex
    log_scale: float
    cancellation: float
    psi: float
    tau: float
    tau_lattice: float

    @property
    def log_abs(self) -> float:
        a = abs(self.value)
        return math.log(a) + self.log_scale if a > 0 else -math.inf


def indicator_value(data: BoundaryDataset, probe: ProbeSolution, profile: TimeProfile | None = None,
                    tau: float | None = None, route: str = "laplace") -> IndicatorValue:
    """Pair recorded data with a probe: sum_b w_b int e^{-tau t}(-conj(v) f + u conj(dv/dnu)) dt."""
    if profile is not None and abs(profile.T - data.T) > 1e-9 * max(1.0, data.T):
        raise ConfigError(f"profile horizon T = {profile.T} differs from data horizon T = {data.T}")
    if tau is not None and abs(tau - probe.params.tau) > 1e-12 * tau:
        raise ConfigError("tau differs from the probe's tau")
    if data.f.shape[1] != probe.trace.shape[0]:
        raise ConfigError("data and probe have different boundary node counts")
    tl = probe.tau_lattice
    wu, wf = time_weights(data.scheme, data.dt, data.n_steps, tl)
    # shared prefactors, formed exactly in double-double
    wb = dd.dd(np.full(probe.trace.shape, probe.h))
    half = probe.h / 2 / probe.gamma0_node
    vbar, gbar = np.conj(probe.trace), np.conj(probe.conormal)
    p_v = dd.cscale(dd.cdd(-vbar), wb)
    p_g = dd.cscale(dd.cdd(gbar), wb)
    p_h = dd.cscale(dd.cdd(-gbar), dd.mul(wb, dd.dd(half)))
    col = lambda w: (w[0][:, None], w[1][:, None])
    w_u, w_f = col(dd.dd(wu)), col(dd.dd(wf))
    w_d = col(dd.two_sum(wu, -wf))
    f, u = dd.cdd(data.f), dd.cdd(data.u)
    if route == "laplace":
        G = dd.ctotal(dd.cscale(f, w_f), axis=0)
        W = dd.ctotal(dd.cscale(u, w_u), axis=0)
        D = dd.ctotal(dd.cscale(f, w_d), axis=0)
        terms = dd.cadd(dd.cadd(dd.cmul(p_v, G), dd.cmul(p_g, W)), dd.cmul(p_h, D))
        total = dd.to_complex(dd.ctotal(terms))
    elif route == "time":
        row = lambda x: tuple((a[None, :], b[None, :]) for a, b in x)
        integrand = dd.cadd(dd.cadd(dd.cmul(row(p_v), dd.cscale(f, w_f)), dd.cmul(row(p_g), dd.cscale(u, w_u))),
                            dd.cmul(row(p_h), dd.cscale(f, w_d)))
        per_step = dd.ctotal(integrand, axis=1)
        total = dd.to_complex(dd.ctotal(per_step, axis=0))
        G = dd.ctotal(dd.cscale(f, w_f), axis=0)
        W = dd.ctotal(dd.cscale(u, w_u), axis=0)
    else:
        raise ConfigError(f"unknown route {route!r}")
    G = G[0][0] + 1j * G[1][0]
    W = W[0][0] + 1j * W[1][0]
    S = float((probe.h * (np.abs(vbar * G) + np.abs(W * gbar))).sum())
    value = total
    cancellation = math.log(S / abs(value)) if abs(value) > 0 and S > 0 else math.inf
    psi = float(wf @ (profile(data.times) if profile is not None else np.ones(len(data.times))))
    return IndicatorValue(value, 2.0 * probe.log_scale, cancellation, psi, probe.params.tau, tl)


@dataclass
class SeriesPoint:
    tau: float
    status: str
    value: complex = 0j
    log_abs: float = math.nan
    log_scale: float = 0.0
    cancellation: float = math.nan
    psi: float = math.nan
    log_norm: float = 0.0
    dt: float = math.nan

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def as_dict(self) -> dict:
        return {"tau": self.tau, "status": self.status, "value_scaled": [self.value.real, self.value.imag],
                "log_abs": self.log_abs, "log_scale": self.log_scale, "cancellation": self.cancellation,
                "psi": self.psi, "log_norm": self.log_norm, "dt": self.dt}


@dataclass
class IndicatorSeries:
    kind: str
    omega: tuple[float, float]
    c: float
    points: list[SeriesPoint] = field(default_factory=list)
    T: float = math.nan
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_values(cls, taus, values, kind: str = "complex", c: float = 1.0, omega=(1.0, 0.0)):
        """Series from plain indicator values (no scaling, no normalization)."""
        pts = []
        for t, v in zip(taus, values):
            a = abs(complex(v))
            pts.append(SeriesPoint(float(t), "ok" if a > 0 else "zero", complex(v),
                                   math.log(a) if a > 0 else -math.inf, 0.0, 0.0, math.nan, 0.0))
        return cls(kind, tuple(omega), c, pts)

    @property
    def valid(self) -> list[SeriesPoint]:
        return [p for p in self.points if p.ok]

    def as_dict(self) -> dict:
        return {"kind": self.kind, "omega": list(self.omega), "c": self.c, "T": self.T,
                "points": [p.as_dict() for p in self.points], **self.meta}


@dataclass(frozen=True)
class SupportEstimate:
    omega: tuple[float, float]
    kind: str
    c: float
    c2: float
    c2_stderr: float
    beta: float
    alpha: float
    residual: float
    n_points: int
    taus: tuple[float, ...]
    corrected: tuple[float, ...]
    h: float
    h_stderr: float
    valid: bool
    reason: str = ""

    def as_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def invalid_estimate(omega, kind, c, reason, n=0) -> SupportEstimate:
    nan = math.nan
    return SupportEstimate(tuple(omega), kind, c, nan, math.inf, nan, nan, nan, n, (), (), nan, math.inf,
                           False, reason)


def probe_norm_factor(kind: str, tau: float, c: float) -> float:
    """log of the known polynomial factor multiplying the indicator (|z|^2 or tau)."""
    if kind == "real":
        return math.log(tau)
    return math.log(2.0 * c * c * tau * tau - tau)


def extract_slope(series: IndicatorSeries, mode: str | None = None, normalize: bool = True,
                  min_points: int = 4, max_h_stderr: float = 0.1) -> SupportEstimate:
    """Fit log|I| (optionally minus the known probe factor) to 2 C2 s + beta log tau + alpha."""
    mode = mode or ("real" if series.kind == "real" else "complex")
    if mode not in ("real", "complex"):
        raise ConfigError(f"unknown fit mode {mode!r}")
    pts = series.valid
    if len(pts) < min_points:
        return invalid_estimate(series.omega, series.kind, series.c,
                                f"only {len(pts)} valid points (need {min_points})", len(pts))
    tau = np.array([p.tau for p in pts])
    y = np.array([p.log_abs for p in pts])
    if normalize:
        y = y - np.array([p.log_norm for p in pts])
    s = np.sqrt(tau) if mode == "real" else tau
    X = np.column_stack([2.0 * s, np.log(tau), np.ones_like(s)])
    if np.linalg.matrix_rank(X) < 3:
        raise ConfigError("rank-deficient fit: schedule needs at least three distinct tau values")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    r = y - X @ coef
    dof = len(y) - 3
    rss = float(r @ r)
    if dof > 0:
        cov = rss / dof * np.linalg.inv(X.T @ X)
        c2_se = float(np.sqrt(max(cov[0, 0], 0.0)))
    else:
        c2_se = math.inf
    c2 = float(coef[0])
    scale = 1.0 if mode == "real" else series.c
    h, h_se = c2 / scale, c2_se / scale
    corrected = tuple(float(v) for v in np.array([p.log_abs for p in pts]) / (2.0 * s))
    valid = h_se <= max_h_stderr
    reason = "" if valid else f"standard error {h_se:.3g} exceeds {max_h_stderr}"
    return SupportEstimate(series.omega, series.kind, series.c, c2, c2_se, float(coef[1]), float(coef[2]),
                           float(np.sqrt(rss / len(y))), len(y), tuple(float(t) for t in tau), corrected,
                           h, h_se, valid, reason)


def correction_exponent(est: SupportEstimate) -> float:
    """Slope of log|log|I|/(2s) - C2| against log tau over the fitted points.

    The leading correction is O(log tau / tau), so the slope should sit near -1.
    """
    if not est.valid or len(est.taus) < 3:
        return math.nan
    r = np.abs(np.array(est.corrected) - est.c2)
    if np.any(r <= 0):
        return math.nan
    slope, _ = np.polyfit(np.log(est.taus), np.log(r), 1)
    return float(slope)


def geometric_schedule(start: float, stop: float, ratio: float) -> list[float]:
    n = int(math.floor(math.log(stop / start) / math.log(ratio) + 1e-9))
    return [start * ratio ** k for k in range(n + 1)]


DEFAULT_COMPLEX_SCHEDULE = tuple(geometric_schedule(4.0, 256.0, 2 ** 0.125))
DEFAULT_REAL_SCHEDULE = tuple(geometric_schedule(25.0, 1600.0, 2 ** 0.25))


def auto_dt(T: float, tau_lat: float, limit: float = 0.5) -> float:
    return T / math.ceil(tau_lat * T / limit - 1e-12)


def build_probe(params: ProbeParams, grid: Grid, model: ConductivityModel | None = None, eta: float = 1.0,
                **kw) -> ProbeSolution:
    if params.kind == "complex":
        return make_complex_probe(params, grid)
    if params.kind == "real":
        return make_real_probe(params.omega, params.tau, grid)
    from .cgo import build_cgo_probe
    return build_cgo_probe(model.background, params, eta, grid, **kw)


def run_series(model: ConductivityModel, omegas, kind: str, cs, profile: TimeProfile, schedule,
               dt: float | str = "auto", scheme: str = "be", guard: float = DEFAULT_GUARD,
               stop_after: int = 2, grid: Grid | None = None, eta: float = 1.0,
               solver: ForwardSolver | None = None, cgo_options: dict | None = None,
               sink=None, workers: int = 1) -> list[IndicatorSeries]:
    """Indicator series for many directions, batching all directions per tau into one solve.

    Within a direction tau increases; after `stop_after` consecutive points past
    the cancellation guard the remaining tau values are not computed. If `sink`
    is given, each probe's real and imaginary channel datasets are passed to
    sink(direction_index, probe, re, im) before being combined. Probes for one
    tau are built on `workers` threads; results are collected in order.
    """
    schedule = sorted(float(t) for t in schedule)
    if not schedule:
        raise ConfigError("empty tau schedule")
    if any(t <= 0 for t in schedule):
        raise ConfigError("tau values must be positive")
    omegas = [tuple(np.asarray(w, dtype=float)) for w in omegas]
    cs = list(cs) if np.ndim(cs) else [float(cs)] * len(omegas)
    solver = solver or ForwardSolver(model, grid)
    grid = solver.grid
    T = profile.T
    if dt != "auto":
        dt = float(dt)
        for t in schedule:
            if t * dt > 0.5 + 1e-12 and kind != "real":
                raise ConfigError(f"tau*dt = {t * dt:.4g} > 0.5 at tau = {t}; reduce dt")
    series = [IndicatorSeries(kind, w, c, [], T, {"scheme": scheme, "guard": guard}) for w, c in zip(omegas, cs)]
    fails = [0] * len(omegas)
    skipped = [[] for _ in omegas]
    for tau in schedule:
        todo = []
        for j, (w, c) in enumerate(zip(omegas, cs)):
            if fails[j] >= stop_after:
                series[j].points.append(SeriesPoint(tau, "not computed: precision floor reached"))
                continue
            if kind != "real" and c * c * tau < 1:
                skipped[j].append(tau)
                series[j].points.append(SeriesPoint(tau, "skipped: c^2 tau < 1"))
                continue
            if kind == "cgo" and c * c * tau <= 1:
                series[j].points.append(SeriesPoint(tau, "skipped: c^2 tau <= 1"))
                continue
            todo.append((j, ProbeParams(w, c if kind != "real" else 1.0, tau, kind)))

        def _build(item):
            try:
                return build_probe(item[1], grid, model, eta, **(cgo_options or {}))
            except SolverError as exc:
                return exc

        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                built = list(pool.map(_build, todo))
        else:
            built = [_build(item) for item in todo]
        jobs = []
        for (j, _), probe in zip(todo, built):
            if isinstance(probe, SolverError):
                series[j].points.append(SeriesPoint(tau, f"probe failed: {probe}"))
                fails[j] = stop_after
            else:
                jobs.append((j, probe))
        if not jobs:
            continue
        tl = max(p.tau_lattice for _, p in jobs)
        step = auto_dt(T, tl) if dt == "auto" else dt
        if tl * step > 0.5 + 1e-12:
            raise ConfigError(f"tau_lattice*dt = {tl * step:.4g} > 0.5 at tau = {tau}; reduce dt")
        fluxes = [flux_from_probe(p, profile, step) for _, p in jobs]
        if sink is None:
            datasets = solver.solve_many(fluxes, T, step, scheme)
        else:
            channels = [ch for fl in fluxes for ch in fl.channels()]
            parts = solver.solve_many(channels, T, step, scheme)
            datasets = []
            for (j, probe), re, im in zip(jobs, parts[0::2], parts[1::2]):
                sink(j, probe, re, im)
                datasets.append(superpose([re, im], [1.0, 1j]) if kind != "real" else re)
        for (j, probe), data in zip(jobs, datasets):
            iv = indicator_value(data, probe, profile)
            pt = SeriesPoint(tau, "ok", iv.value, iv.log_abs, iv.log_scale, iv.cancellation, iv.psi,
                             math.log(abs(iv.psi)) + probe_norm_factor(kind, tau, cs[j]), step)
            if not (iv.cancellation <= guard and math.isfinite(pt.log_abs)):
                pt.status = "below precision floor"
                fails[j] += 1
            else:
                fails[j] = 0
            series[j].points.append(pt)
    for w, sk in zip(omegas, skipped):
        if sk:
            warnings.warn(f"{len(sk)} tau value(s) below c^2 tau = 1 skipped for omega = "
                          f"({w[0]:.4g}, {w[1]:.4g})", UserWarning, stacklevel=2)
    return series


def indicator_series(model: ConductivityModel, params: ProbeParams, profile: TimeProfile, tau_schedule,
                     **kw) -> IndicatorSeries:
    """Series for one direction; `params.tau` is ignored in favour of the schedule."""
    return run_series(model, [params.omega], params.kind, [params.c], profile, tau_schedule, **kw)[0]


def energy_gap_diagnostic(series: IndicatorSeries, model: ConductivityModel | None, grid: Grid | None = None,
                          window: float = 3.0) -> dict:
    """log|I| - log(|Psi| ||grad v||^2_{L^2(D)}) across the valid points of a series."""
    if model is None:
        raise ConfigError("energy gap diagnostic needs the true inclusion geometry")
    from .grid import build_grid
    grid = grid or build_grid(model.domain)
    inc = [i for i in model.inclusions if i.contrast != 1.0]
    pts = series.valid
    if not inc:
        return {"applicable": False, "mode": "no inclusion",
                "tau": [p.tau for p in series.points],
                "log_abs_over_2tau": [p.log_abs / (2 * p.tau) for p in series.points if math.isfinite(p.log_abs)]}
    cells = grid.cell_centers()
    mask = np.zeros(grid.n_cells, dtype=bool)
    for i in inc:
        mask |= i.contains(cells)
    rows = []
    for p in pts:
        params = ProbeParams(series.omega, series.c if series.kind != "real" else 1.0, p.tau, series.kind)
        probe = build_probe(params, grid, model)
        v = probe.cell_sampler()[mask]
        g2 = float(np.sum(np.abs(probe.zeta) ** 2))
        energy = grid.h ** 2 * g2 * float(np.sum(np.abs(v) ** 2))
        log_e = math.log(energy) + 2 * probe.log_scale
        rows.append((p.tau, p.log_abs - math.log(abs(p.psi)) - log_e))
    diffs = [d for _, d in rows]
    width = max(diffs) - min(diffs) if diffs else math.nan
    return {"applicable": True, "tau": [t for t, _ in rows], "log_difference": diffs, "width": width,
            "window": window, "ok": bool(diffs) and width <= window}
