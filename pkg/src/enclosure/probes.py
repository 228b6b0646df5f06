"""Exponential probe solutions of the background equation and time profiles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from .errors import ConfigError
from .forward import FluxPrescription, time_grid
from .geometry import perp
from .grid import LD, Grid

CLD = np.clongdouble
KINDS = ("complex", "real", "cgo")


@dataclass(frozen=True)
class ProbeParams:
    omega: tuple[float, float]
    c: float
    tau: float
    kind: str = "complex"
    perp_sign: int = 1

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        n = np.hypot(*w)
        if not (np.isfinite(n) and n > 0):
            raise ConfigError("direction must be a nonzero finite vector")
        object.__setattr__(self, "omega", (float(w[0] / n), float(w[1] / n)))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "c", float(self.c))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown probe kind {self.kind!r}")
        if self.perp_sign not in (1, -1):
            raise ConfigError("perp_sign must be +1 or -1")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ConfigError("tau must be positive")
        if self.kind != "real":
            if not self.c > 0:
                raise ConfigError("virtual slowness c must be positive")
            if self.c ** 2 * self.tau < 1:
                raise ConfigError(f"c^2 tau = {self.c ** 2 * self.tau:.6g} < 1: no real lambda")
            if self.kind == "cgo" and self.c ** 2 * self.tau == 1:
                raise ConfigError("CGO probes need c^2 tau > 1 strictly")

    @property
    def omega_perp(self) -> np.ndarray:
        return perp(self.omega, self.perp_sign)

    @property
    def lam(self) -> float:
        return float(np.sqrt(max(0.0, 1.0 - 1.0 / (self.c ** 2 * self.tau))))

    @property
    def z(self) -> np.ndarray:
        """c tau (omega + i lambda omega_perp); z.z = tau."""
        w = np.asarray(self.omega)
        return self.c * self.tau * (w + 1j * self.lam * self.omega_perp)

    def as_dict(self) -> dict:
        return {"omega": list(self.omega), "c": self.c, "tau": self.tau, "kind": self.kind,
                "perp_sign": self.perp_sign}


@dataclass(frozen=True, eq=False)
class ProbeSolution:
    """Probe trace and conormal derivative on boundary nodes, stored scaled by exp(-log_scale)."""

    params: ProbeParams
    z: np.ndarray | None
    zeta: np.ndarray
    tau_lattice: float
    log_scale: float
    trace: np.ndarray
    conormal: np.ndarray
    gamma0_node: np.ndarray
    h: float
    lattice: bool = True
    cell_sampler: Callable[[], np.ndarray] | None = None
    sampler: Callable[[np.ndarray], np.ndarray] | None = None
    diagnostics: dict = field(default_factory=dict)

    def metadata(self) -> dict:
        return {**self.params.as_dict(), "tau_lattice": self.tau_lattice, "log_scale": self.log_scale,
                "lattice": self.lattice,
                "zeta": [[float(v.real), float(v.imag)] for v in np.asarray(self.zeta, dtype=complex)]}


def _lattice_zeta_complex(omega, c, tau, h) -> np.ndarray:
    """zeta = Re z + i eta with sum_k 2 cosh(zeta_k h) - 4 = tau h^2 (extended precision)."""
    om = np.asarray(omega, dtype=LD)
    op = np.array([-om[1], om[0]], dtype=LD)
    hl, cl, tl = LD(h), LD(c), LD(tau)
    a = hl * cl * tl * om
    lam = np.sqrt(max(LD(0), 1 - 1 / (cl * cl * tl)))
    b = hl * cl * tl * max(lam, LD(1e-3)) * op
    target = 2 + tl * hl * hl / 2
    for _ in range(200):
        w = (a + 1j * b).astype(CLD)
        r = np.cosh(w).sum() - target
        d = 1j * np.sinh(w)
        J = np.array([[d[0].real, d[1].real], [d[0].imag, d[1].imag]], dtype=LD)
        det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
        if det == 0:
            b = b * LD(1.5) + LD(1e-6) * hl * op
            continue
        db = np.array([-(J[1, 1] * r.real - J[0, 1] * r.imag) / det,
                       -(-J[1, 0] * r.real + J[0, 0] * r.imag) / det], dtype=LD)
        step = LD(1)
        while np.max(np.abs(step * db)) > LD(0.5):
            step /= 2
        b = b + step * db
        if np.max(np.abs(db)) < LD(1e-18) * max(LD(1), np.max(np.abs(b))):
            break
    r = np.cosh((a + 1j * b).astype(CLD)).sum() - target
    if not abs(r) < 1e-16 * float(target):
        raise ConfigError(f"no lattice wavevector for c tau h = {c * tau * h:.3g}; refine the grid")
    return (a + 1j * b).astype(CLD) / hl


def lattice_tau(zeta, h) -> LD:
    """Laplace parameter of a lattice exponential: (sum 2cosh(zeta_k h) - 4)/h^2."""
    hl = LD(h)
    z = np.asarray(zeta)
    if np.iscomplexobj(z):
        val = (2 * np.cosh(z.astype(CLD) * hl)).sum() - 4
        return LD(val.real) / (hl * hl)
    return ((2 * np.cosh(z.astype(LD) * hl)).sum() - 4) / (hl * hl)


def _assemble(params, grid: Grid, zeta, z, tau_lat, lattice: bool) -> ProbeSolution:
    if not grid.has_cells:
        raise NotImplementedError("probes are assembled on rectangular cell grids")
    hl = LD(1) / LD(grid.domain.resolution)
    zl = np.asarray(zeta).astype(CLD)
    xc = grid.node_cell_pos(LD)
    xg = grid.ghost_pos(LD)
    re = np.real(zl).astype(LD)
    cells = grid.cell_centers(LD)
    kappa = max(np.max(cells @ re), np.max(xg @ re))
    if lattice:
        vc = np.exp(xc @ zl - kappa)
        vg = np.exp(xg @ zl - kappa)
        g = (vg - vc) / hl
        trace = vc + hl / 2 * g
    else:
        xb = grid.node_pos.astype(LD)
        trace = np.exp(xb @ zl - kappa)
        g = (grid.node_normal.astype(LD) @ zl) * trace

    def cell_sampler(zl=zl, kappa=kappa):
        return np.exp(grid.cell_centers(LD) @ zl - kappa).astype(complex)

    def sampler(pts, zl=zl, kappa=kappa):
        p = np.atleast_2d(np.asarray(pts, dtype=LD))
        return np.exp(p @ zl - kappa).astype(complex)

    real = not np.iscomplexobj(zeta) or params.kind == "real"
    cast = (lambda a: np.real(a).astype(float)) if real else (lambda a: a.astype(complex))
    return ProbeSolution(params, z, np.asarray(zeta).astype(complex) if not real else np.real(zeta).astype(float),
                         float(tau_lat), float(kappa), cast(trace), cast(g), np.ones(grid.n_nodes), grid.h,
                         lattice, cell_sampler, sampler)


def make_complex_probe(params: ProbeParams, grid: Grid, lattice: bool = True) -> ProbeSolution:
    """Complex exponential e^{x.z}; with lattice=True the exact discrete analogue."""
    if params.kind != "complex":
        raise ConfigError("make_complex_probe needs kind='complex'")
    z = params.z
    if lattice:
        zeta = _lattice_zeta_complex(params.omega, params.c, params.tau, grid.h)
        zeta = zeta if params.perp_sign == 1 else _conj_perp(zeta, params)
        tau_lat = params.tau
    else:
        zeta, tau_lat = z.astype(CLD), params.tau
    return _assemble(params, grid, zeta, z, tau_lat, lattice)


def _conj_perp(zeta, params):
    # flipping omega_perp conjugates the imaginary part
    return np.real(zeta) - 1j * np.imag(zeta)


def make_real_probe(omega, tau: float, grid: Grid, lattice: bool = True) -> ProbeSolution:
    """Real exponential e^{sqrt(tau) x.omega}."""
    params = ProbeParams(omega, 1.0, tau, kind="real")
    zeta = np.sqrt(LD(params.tau)) * np.asarray(params.omega, dtype=LD)
    tau_lat = lattice_tau(zeta, grid.h) if lattice else LD(params.tau)
    return _assemble(params, grid, zeta, None, tau_lat, lattice)


@dataclass(frozen=True, eq=False)
class TimeProfile:
    """phi(t) on (0, T): 'constant', 'exp' (rate), or 'table' (times, values)."""

    kind: str = "constant"
    T: float = 1.0
    rate: float = 0.0
    table_times: np.ndarray | None = None
    table_values: np.ndarray | None = None

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError("profile horizon T must be positive")
        if self.kind == "table":
            t = np.asarray(self.table_times, dtype=float)
            v = np.asarray(self.table_values, dtype=float)
            if t.ndim != 1 or t.shape != v.shape or len(t) < 4:
                raise ConfigError("tabulated profile needs matching 1D times/values with at least 4 points")
            if not (np.all(np.diff(t) > 0) and abs(t[0]) < 1e-12 and abs(t[-1] - self.T) < 1e-9 * self.T):
                raise ConfigError("tabulated profile times must increase from 0 to T")
            if not np.all(np.isfinite(v)):
                raise ConfigError("tabulated profile values must be finite")
            object.__setattr__(self, "table_times", t)
            object.__setattr__(self, "table_values", v)
        elif self.kind == "exp":
            if not (np.isfinite(self.rate) and self.rate >= 0):
                raise ConfigError("exponential profile rate must be nonnegative")
        elif self.kind != "constant":
            raise ConfigError(f"unknown profile kind {self.kind!r}")
        if self.kind == "table" and not np.any(self.table_values != 0):
            raise ConfigError("all-zero profile never satisfies the moment condition")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "constant":
            return np.ones_like(t)
        if self.kind == "exp":
            return np.exp(-self.rate * t)
        if t.shape == self.table_times.shape and np.allclose(t, self.table_times, rtol=0, atol=1e-14):
            return self.table_values.copy()
        return self._spline(t)

    @property
    def _spline(self):
        return CubicSpline(self.table_times, self.table_values)

    def as_dict(self) -> dict:
        d = {"kind": self.kind, "T": self.T}
        if self.kind == "exp":
            d["rate"] = self.rate
        if self.kind == "table":
            d["table_times"] = self.table_times.tolist()
            d["table_values"] = self.table_values.tolist()
        return d


def laplace_weight(profile: TimeProfile, tau: float) -> float:
    """Psi(tau) = int_0^T e^{-tau t} phi(t) dt."""
    if not tau > 0:
        raise ConfigError("tau must be positive")
    T = profile.T
    if profile.kind == "constant":
        return float(-np.expm1(-tau * T) / tau)
    if profile.kind == "exp":
        s = tau + profile.rate
        return float(-np.expm1(-s * T) / s)
    cs = profile._spline
    knots = profile.table_times
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        total += quad(lambda t: np.exp(-tau * t) * cs(t), a, b, epsabs=0.0, epsrel=1e-13)[0]
    return float(total)


def flux_from_probe(probe: ProbeSolution, profile: TimeProfile, dt: float) -> FluxPrescription:
    """f(x, t) = (conormal trace at x) * phi(t), scaled like the probe."""
    times = time_grid(profile.T, dt)
    values = np.outer(profile(times), probe.conormal)
    meta = {"probe": probe.metadata(), "profile": profile.as_dict()}
    return FluxPrescription(times, values, meta)
