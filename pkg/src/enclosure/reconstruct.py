"""Direction sweeps, time budget, and convex hulls from support estimates."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError, EmptyHullError
from .forward import ForwardSolver
from .geometry import DomainSpec, directions, true_support  # noqa: F401  (re-exported)
from .grid import Grid
from .indicator import (DEFAULT_COMPLEX_SCHEDULE, DEFAULT_GUARD, DEFAULT_REAL_SCHEDULE, IndicatorSeries,
                        SupportEstimate, extract_slope, run_series)
from .model import ConductivityModel
from .probes import TimeProfile

AUTO_MARGIN = 0.1


@dataclass(frozen=True)
class BudgetDecision:
    accepted: bool
    c: float | None
    width: float
    reason: str = ""


def time_budget_check(T: float, c: float | None, domain: DomainSpec, omega, kind: str = "complex",
                      margin: float = AUTO_MARGIN) -> BudgetDecision:
    """Accept iff T > 2c(h_Omega(omega) + h_Omega(-omega)); c=None returns the largest admissible c."""
    w = np.asarray(omega, dtype=float)
    width = domain.support(w) + domain.support(-w)
    if kind == "real":
        return BudgetDecision(True, c, width, "real probes need no time budget")
    if c is None:
        return BudgetDecision(True, T / (2 * width) * (1 - margin), width, "auto")
    if T > 2 * c * width:
        return BudgetDecision(True, c, width, "")
    reason = f"T = {T:g} <= 2c(h(w)+h(-w)) = {2 * c * width:g}"
    if kind == "cgo":
        reason = f"T too small for required c = {c:g}: " + reason
    return BudgetDecision(False, c, width, reason)


def required_T(c: float, domain: DomainSpec, omega, margin: float = AUTO_MARGIN) -> float:
    """Smallest T for which the auto rule would select at least c."""
    w = np.asarray(omega, dtype=float)
    return 2 * c * (domain.support(w) + domain.support(-w)) / (1 - margin)


@dataclass(frozen=True)
class SweepConfig:
    n_directions: int = 16
    kind: str = "complex"
    T: float = 1.0
    dt: float | str = "auto"
    schedule: tuple[float, ...] | None = None
    c_policy: float | str = "auto"
    eta: float = 10.0
    scheme: str = "be"
    guard: float = DEFAULT_GUARD
    max_h_stderr: float = 0.1
    profile: TimeProfile | None = None
    cgo_options: dict = field(default_factory=dict)
    workers: int = 1

    def __post_init__(self):
        if self.n_directions < 3:
            raise ConfigError("need at least 3 directions")
        if not self.T > 0:
            raise ConfigError("T must be positive")
        if self.kind not in ("complex", "real", "cgo"):
            raise ConfigError(f"unknown probe kind {self.kind!r}")
        if self.c_policy != "auto" and not (isinstance(self.c_policy, (int, float)) and self.c_policy > 0):
            raise ConfigError("c policy must be 'auto' or a positive number")

    @property
    def tau_schedule(self) -> tuple[float, ...]:
        if self.schedule is not None:
            return tuple(self.schedule)
        return DEFAULT_REAL_SCHEDULE if self.kind == "real" else DEFAULT_COMPLEX_SCHEDULE

    @property
    def time_profile(self) -> TimeProfile:
        p = self.profile or TimeProfile("constant", self.T)
        if abs(p.T - self.T) > 1e-12 * self.T:
            raise ConfigError("profile horizon differs from T")
        return p

    def slowness(self, domain: DomainSpec) -> list[float]:
        out = []
        for w in directions(self.n_directions):
            c = None if self.c_policy == "auto" else float(self.c_policy)
            dec = time_budget_check(self.T, c, domain, w, self.kind)
            if not dec.accepted:
                raise ConfigError(dec.reason)
            out.append(dec.c if dec.c is not None else 1.0)
        return out


@dataclass
class SweepResult:
    estimates: list[SupportEstimate]
    series: list[IndicatorSeries]
    config: SweepConfig

    @property
    def n_detected(self) -> int:
        return sum(e.valid for e in self.estimates)

    @property
    def message(self) -> str:
        if self.n_detected == 0:
            return "no inclusion detected at tolerance"
        return f"{self.n_detected} of {len(self.estimates)} directions detected an inclusion"


def support_sweep(model: ConductivityModel, config: SweepConfig, grid: Grid | None = None,
                  solver: ForwardSolver | None = None, allow_empty: bool = True) -> SweepResult:
    """Per-direction support estimates; failed fits are flagged, not fatal."""
    oms = directions(config.n_directions)
    cs = config.slowness(model.domain)
    series = run_series(model, oms, config.kind, cs, config.time_profile, config.tau_schedule, config.dt,
                        config.scheme, config.guard, grid=grid, eta=config.eta, solver=solver,
                        cgo_options=config.cgo_options, workers=config.workers)
    est = [extract_slope(s, max_h_stderr=config.max_h_stderr) for s in series]
    res = SweepResult(est, series, config)
    if not allow_empty and res.n_detected == 0:
        raise EmptyHullError("all directions failed")
    return res


def clip_polygon(poly: np.ndarray, omega, h: float) -> np.ndarray:
    """Clip a convex polygon (ccw vertices) to {x : x . omega <= h}."""
    if len(poly) == 0:
        return poly
    w = np.asarray(omega, dtype=float)
    d = poly @ w - h
    out = []
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        dp, dq = d[i], d[(i + 1) % n]
        if dp <= 0:
            out.append(p)
        if (dp < 0 < dq) or (dq < 0 < dp):
            t = dp / (dp - dq)
            out.append(p + t * (q - p))
    if not out:
        return np.zeros((0, 2))
    pts = [out[0]]
    for p in out[1:]:
        if np.max(np.abs(p - pts[-1])) > 1e-12:
            pts.append(p)
    if len(pts) > 1 and np.max(np.abs(pts[0] - pts[-1])) <= 1e-12:
        pts.pop()
    return np.array(pts)


def polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def is_convex(poly: np.ndarray, tol: float = 1e-12) -> bool:
    if len(poly) < 3:
        return False
    e = np.roll(poly, -1, axis=0) - poly
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    return bool(np.all(cross >= -tol))


@dataclass
class HullEstimate:
    omegas: np.ndarray
    h: np.ndarray
    stderr: np.ndarray
    valid: np.ndarray
    vertices: np.ndarray
    empty: bool
    relaxations: list = field(default_factory=list)

    @property
    def area(self) -> float:
        return polygon_area(self.vertices)

    def support(self, omega) -> float:
        return float(np.max(self.vertices @ np.asarray(omega, dtype=float)))

    def as_dict(self) -> dict:
        return {"omegas": self.omegas.tolist(), "h": self.h.tolist(), "stderr": self.stderr.tolist(),
                "valid": self.valid.tolist(), "vertices": self.vertices.tolist(), "empty": self.empty,
                "relaxations": self.relaxations}


def _intersect(bbox, omegas, h, valid):
    x0, x1, y0, y1 = bbox
    poly = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]], dtype=float)
    for w, hv, ok in zip(omegas, h, valid):
        if ok:
            poly = clip_polygon(poly, w, hv)
            if len(poly) < 3:
                return np.zeros((0, 2))
    if polygon_area(poly) <= 1e-14:
        return np.zeros((0, 2))
    return poly


def hull_from_support(estimates, bbox, max_rounds: int = 10) -> HullEstimate:
    """Intersect half-planes x . omega <= h over valid estimates, clipped to bbox.

    `estimates` holds SupportEstimate objects or (omega, h, stderr) triples.
    """
    oms, hs, ses, val = [], [], [], []
    for e in estimates:
        if isinstance(e, SupportEstimate):
            oms.append(e.omega); hs.append(e.h); ses.append(e.h_stderr); val.append(e.valid)
        else:
            w, hv, se = e
            oms.append(tuple(w)); hs.append(float(hv)); ses.append(float(se)); val.append(math.isfinite(hv))
    oms, hs, ses = np.array(oms, float), np.array(hs, float), np.array(ses, float)
    val = np.array(val, bool) & np.isfinite(hs)
    if val.sum() < 3:
        raise ConfigError(f"need at least 3 valid support estimates, got {int(val.sum())}")
    poly = _intersect(bbox, oms, hs, val)
    relax = []
    h_work = hs.copy()
    order = [i for i in np.argsort(-np.where(np.isfinite(ses), ses, np.inf)) if val[i]]
    rounds = 0
    while len(poly) == 0 and rounds < max_rounds:
        rounds += 1
        for i in order:
            se = ses[i]
            if not (np.isfinite(se) and se > 0):
                continue
            h_work[i] += 2 * se
            relax.append({"direction": oms[i].tolist(), "index": int(i), "delta": 2 * float(se),
                          "round": rounds})
            poly = _intersect(bbox, oms, h_work, val)
            if len(poly):
                break
        else:
            if not any(np.isfinite(ses[i]) and ses[i] > 0 for i in order):
                break
    if len(poly) == 0:
        raise EmptyHullError(f"half-plane intersection empty after {len(relax)} relaxations")
    return HullEstimate(oms, h_work, ses, val, poly, False, relax)


def hausdorff_convex(support_a, support_b, n: int = 4096) -> float:
    """Hausdorff distance of two convex sets = sup over directions of |h_A - h_B|."""
    th = 2 * np.pi * np.arange(n) / n
    ws = np.column_stack([np.cos(th), np.sin(th)])
    return float(max(abs(support_a(w) - support_b(w)) for w in ws))
