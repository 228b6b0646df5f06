"""Strict YAML run configuration."""
from __future__ import annotations

import copy
from dataclasses import dataclass
import hashlib
import json
import math
from pathlib import Path

import yaml

from .background import Background, bump_background
from .errors import ConfigError
from .geometry import DomainSpec, InclusionSpec, directions
from .indicator import DEFAULT_COMPLEX_SCHEDULE, DEFAULT_GUARD, DEFAULT_REAL_SCHEDULE, geometric_schedule
from .model import ConductivityModel
from .probes import TimeProfile
from .reconstruct import SweepConfig, time_budget_check

SCHEMA = {
    "scenario": {"domain": {"shape", "bounds", "center", "radius", "resolution"},
                 "background": {"expression", "box", "preset", "center", "half_width", "amplitude", "width2"},
                 "inclusions": None},
    "measurement": {"T", "dt", "scheme", "profile"},
    "method": {"probe", "schedule", "directions", "c", "eta", "guard", "max_h_stderr", "stop_at_floor",
               "cgo_c_factors", "cgo_taus", "workers"},
    "output": {"dir", "svg", "datasets"},
    "seed": None,
}
INCLUSION_KEYS = {"kind", "center", "radius", "vertices", "contrast"}
PROFILE_KEYS = {"kind", "rate", "times", "values"}
SCHEDULE_KEYS = {"start", "stop", "ratio"}

DEFAULT = {
    "scenario": {
        "domain": {"shape": "rectangle", "bounds": [-1.0, 1.0, -1.0, 1.0], "resolution": 64},
        "background": {"expression": None},
        "inclusions": [{"kind": "disk", "center": [0.3, -0.2], "radius": 0.25, "contrast": 3.0}],
    },
    "measurement": {"T": 1.0, "dt": "auto", "scheme": "be", "profile": {"kind": "constant"}},
    "method": {"probe": "complex", "schedule": "default", "directions": 16, "c": "auto", "eta": 10.0,
               "guard": DEFAULT_GUARD, "max_h_stderr": 0.1, "stop_at_floor": True},
    "output": {"dir": "out", "svg": True, "datasets": "datasets"},
    "seed": 0,
}


def default_config() -> dict:
    return copy.deepcopy(DEFAULT)


def _fail(path: str, msg: str):
    raise ConfigError(f"config {path}: {msg}")


def _check_keys(d, allowed, path):
    if not isinstance(d, dict):
        _fail(path, "must be a mapping")
    for k in d:
        if k not in allowed:
            _fail(f"{path}.{k}" if path else k, f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _num(v, path, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        _fail(path, f"expected a finite number, got {v!r}")
    if positive and v <= 0:
        _fail(path, "must be positive")
    return float(v)


def _vec(v, n, path):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        _fail(path, f"expected a list of {n} numbers")
    return [_num(x, f"{path}[{i}]") for i, x in enumerate(v)]


@dataclass(frozen=True, eq=False)
class RunConfig:
    raw: dict
    model: ConductivityModel
    sweep: SweepConfig
    profile: TimeProfile
    output_dir: str
    datasets_dir: str
    svg: bool
    seed: int
    stop_at_floor: bool
    cgo_c_factors: tuple[float, ...]
    cgo_taus: tuple[float, ...] | None

    def digest(self) -> str:
        # the worker count does not change any result
        raw = copy.deepcopy(self.raw)
        raw.get("method", {}).pop("workers", None)
        text = json.dumps(raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def parse_config(raw: dict) -> RunConfig:
    raw = copy.deepcopy(raw)
    _check_keys(raw, set(SCHEMA), "")
    for sec in ("scenario", "measurement", "method", "output"):
        if sec not in raw:
            _fail(sec, "missing section")
    sc = raw["scenario"]
    _check_keys(sc, set(SCHEMA["scenario"]), "scenario")
    if "domain" not in sc:
        _fail("scenario.domain", "missing")
    dom = sc["domain"]
    _check_keys(dom, SCHEMA["scenario"]["domain"], "scenario.domain")
    res = dom.get("resolution")
    if not isinstance(res, int) or isinstance(res, bool) or res <= 0:
        _fail("scenario.domain.resolution", "expected a positive integer")
    shape = dom.get("shape", "rectangle")
    if shape == "rectangle":
        domain = DomainSpec.rectangle(*_vec(dom.get("bounds"), 4, "scenario.domain.bounds"), res)
    elif shape == "disk":
        domain = DomainSpec.disk(_vec(dom.get("center"), 2, "scenario.domain.center"),
                                 _num(dom.get("radius"), "scenario.domain.radius", True), res)
    else:
        _fail("scenario.domain.shape", f"unknown shape {shape!r}")

    bgc = sc.get("background") or {}
    _check_keys(bgc, SCHEMA["scenario"]["background"], "scenario.background")
    if bgc.get("preset") is not None:
        if bgc["preset"] != "bump":
            _fail("scenario.background.preset", "only 'bump' is available")
        kw = {}
        if "center" in bgc:
            kw["center"] = tuple(_vec(bgc["center"], 2, "scenario.background.center"))
        for key in ("half_width", "amplitude", "width2"):
            if key in bgc:
                kw[key] = _num(bgc[key], f"scenario.background.{key}", True)
        background = bump_background(**kw)
    elif bgc.get("expression") is not None:
        if not isinstance(bgc["expression"], str):
            _fail("scenario.background.expression", "expected a string")
        background = Background(bgc["expression"], tuple(_vec(bgc.get("box"), 4, "scenario.background.box")))
    else:
        background = Background()

    incs = []
    for i, inc in enumerate(sc.get("inclusions") or []):
        p = f"scenario.inclusions[{i}]"
        _check_keys(inc, INCLUSION_KEYS, p)
        k = _num(inc.get("contrast"), f"{p}.contrast", True)
        kind = inc.get("kind", "disk")
        if kind == "disk":
            incs.append(InclusionSpec.disk(_vec(inc.get("center"), 2, f"{p}.center"),
                                           _num(inc.get("radius"), f"{p}.radius", True), k))
        elif kind == "polygon":
            v = inc.get("vertices")
            if not isinstance(v, list):
                _fail(f"{p}.vertices", "expected a list of points")
            incs.append(InclusionSpec.polygon([_vec(q, 2, f"{p}.vertices[{j}]") for j, q in enumerate(v)], k))
        else:
            _fail(f"{p}.kind", f"unknown inclusion kind {kind!r}")
    model = ConductivityModel(domain, background, tuple(incs))

    ms = raw["measurement"]
    _check_keys(ms, SCHEMA["measurement"], "measurement")
    T = _num(ms.get("T"), "measurement.T", True)
    dt = ms.get("dt", "auto")
    if dt != "auto":
        dt = _num(dt, "measurement.dt", True)
    scheme = ms.get("scheme", "be")
    if scheme not in ("be", "cn"):
        _fail("measurement.scheme", "expected 'be' or 'cn'")
    pc = ms.get("profile") or {"kind": "constant"}
    _check_keys(pc, PROFILE_KEYS, "measurement.profile")
    pk = pc.get("kind", "constant")
    if pk == "constant":
        profile = TimeProfile("constant", T)
    elif pk == "exp":
        profile = TimeProfile("exp", T, rate=_num(pc.get("rate", 0.0), "measurement.profile.rate"))
    elif pk == "table":
        profile = TimeProfile("table", T, table_times=pc.get("times"), table_values=pc.get("values"))
    else:
        _fail("measurement.profile.kind", f"unknown profile kind {pk!r}")

    me = raw["method"]
    _check_keys(me, SCHEMA["method"], "method")
    kind = me.get("probe", "complex")
    if kind not in ("complex", "real", "cgo"):
        _fail("method.probe", f"unknown probe kind {kind!r}")
    if kind == "complex" and not background.is_constant:
        _fail("method.probe", "complex exponential probes need a constant background; use 'cgo'")
    sch = me.get("schedule", "default")
    if sch == "default":
        schedule = DEFAULT_REAL_SCHEDULE if kind == "real" else DEFAULT_COMPLEX_SCHEDULE
    elif isinstance(sch, dict):
        _check_keys(sch, SCHEDULE_KEYS, "method.schedule")
        schedule = tuple(geometric_schedule(_num(sch.get("start"), "method.schedule.start", True),
                                            _num(sch.get("stop"), "method.schedule.stop", True),
                                            _num(sch.get("ratio"), "method.schedule.ratio", True)))
    elif isinstance(sch, list):
        schedule = tuple(_num(t, f"method.schedule[{i}]", True) for i, t in enumerate(sch))
    else:
        _fail("method.schedule", "expected 'default', a list, or {start, stop, ratio}")
    if not schedule:
        _fail("method.schedule", "empty schedule")
    ndir = me.get("directions", 16)
    if not isinstance(ndir, int) or ndir < 3:
        _fail("method.directions", "need an integer >= 3")
    c = me.get("c", "auto")
    if c != "auto":
        c = _num(c, "method.c", True)
    eta = _num(me.get("eta", 10.0), "method.eta", True)
    guard = _num(me.get("guard", DEFAULT_GUARD), "method.guard", True)
    mse = _num(me.get("max_h_stderr", 0.1), "method.max_h_stderr", True)
    stop = me.get("stop_at_floor", True)
    if not isinstance(stop, bool):
        _fail("method.stop_at_floor", "expected true/false")
    factors = tuple(_num(f, "method.cgo_c_factors", True) for f in me.get("cgo_c_factors", [1, 2, 4]))
    workers = me.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        _fail("method.workers", "expected an integer >= 1")
    cgo_taus = me.get("cgo_taus")
    if cgo_taus is not None:
        cgo_taus = tuple(_num(t, "method.cgo_taus", True) for t in cgo_taus)

    # cross-field checks
    if dt != "auto":
        if dt > T:
            _fail("measurement.dt", "dt exceeds T")
        if max(schedule) * dt > 0.5 + 1e-12:
            _fail("measurement.dt", f"tau*dt = {max(schedule) * dt:g} > 0.5 at max tau (schema: tau*dt <= 0.5)")
    if kind != "real" and c != "auto" and c * c * min(schedule) < 1:
        _fail("method.c", f"c^2 * min tau = {c * c * min(schedule):g} < 1 (schema: c^2 tau >= 1)")
    if kind != "real" and c != "auto":
        for w in directions(ndir):
            d = time_budget_check(T, c, domain, w, kind)
            if not d.accepted:
                _fail("method.c", d.reason)

    sweep = SweepConfig(ndir, kind, T, dt, schedule, c, eta, scheme, guard, mse, profile, workers=workers)
    out = raw["output"]
    _check_keys(out, SCHEMA["output"], "output")
    svg = out.get("svg", True)
    if not isinstance(svg, bool):
        _fail("output.svg", "expected true/false")
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        _fail("seed", "expected an integer")
    return RunConfig(raw, model, sweep, profile, str(out.get("dir", "out")), str(out.get("datasets", "datasets")),
                     svg, seed, stop, factors, cgo_taus)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path}: top level must be a mapping")
    return parse_config(raw)
