"""End-to-end runs: simulate to files, reconstruct from files or in memory, CGO reports."""
from __future__ import annotations

from collections import defaultdict
import math
from pathlib import Path

import numpy as np

from .cgo import choose_padding, faddeev_kernel, liouville_potentials, neumann_solve, padded_grid
from .config import RunConfig
from .dataset_io import atomic_write, dumps, read_dataset, sha256_file, write_dataset
from .errors import ConfigError, EmptyHullError, NonContractionError, SolverError
from .forward import superpose
from .geometry import directions, true_support
from .grid import build_grid
from .indicator import (IndicatorSeries, SeriesPoint, build_probe, extract_slope, indicator_value,
                        probe_norm_factor, run_series)
from .probes import ProbeParams
from .reconstruct import SweepResult, hausdorff_convex, hull_from_support
from .svg import render_svg

MANIFEST = "manifest.json"


def _finite(x):
    return x if isinstance(x, (int, float)) and math.isfinite(x) else None


def build_report(cfg: RunConfig, result: SweepResult) -> tuple[dict, object]:
    """Deterministic JSON-ready report (no timings) and the hull (or None)."""
    model = cfg.model
    truth = [i for i in model.inclusions if i.contrast != 1.0]
    rows = []
    for e in result.estimates:
        row = {"omega": list(e.omega), "c": e.c, "h_estimate": _finite(e.h), "h_stderr": _finite(e.h_stderr),
               "c2": _finite(e.c2), "beta": _finite(e.beta), "alpha": _finite(e.alpha),
               "fit_residual": _finite(e.residual), "n_points": e.n_points, "valid": e.valid, "reason": e.reason,
               "taus": list(e.taus), "corrected": list(e.corrected)}
        if truth:
            hs = true_support(truth, e.omega)
            row["true_support"] = hs
            row["error"] = _finite(e.h - hs)
        rows.append(row)
    hull = None
    hull_info = {"empty": True, "vertices": [], "relaxations": [], "reason": ""}
    try:
        hull = hull_from_support(result.estimates, model.domain.bounding_box())
        hull_info = {"empty": False, "vertices": hull.vertices.tolist(), "relaxations": hull.relaxations,
                     "reason": ""}
        if truth:
            hull_info["hausdorff_to_truth"] = hausdorff_convex(hull.support, lambda w: true_support(truth, w))
    except (ConfigError, EmptyHullError) as exc:
        hull_info["reason"] = str(exc)
    report = {"config_digest": cfg.digest(), "probe": cfg.sweep.kind, "T": cfg.sweep.T,
              "n_directions": cfg.sweep.n_directions, "schedule": list(cfg.sweep.tau_schedule),
              "message": result.message, "n_detected": result.n_detected, "directions": rows, "hull": hull_info,
              "series": [s.as_dict() for s in result.series]}
    return report, hull


def write_outputs(cfg: RunConfig, report: dict, hull, out_dir, timings: dict) -> list[Path]:
    out = Path(out_dir)
    written = [out / "report.json"]
    atomic_write(written[0], dumps(report))
    atomic_write(out / "timings.json", dumps(timings))
    written.append(out / "timings.json")
    if cfg.svg:
        sched = cfg.sweep.tau_schedule
        cs = sorted({round(r["c"], 4) for r in report["directions"]})
        legend = {"T": cfg.sweep.T, "c": cs[0] if len(cs) == 1 else f"{cs[0]}..{cs[-1]}",
                  "tau": f"{min(sched):g}..{max(sched):g}"}
        svg = render_svg(cfg.model.domain.bounding_box(), hull, cfg.model.inclusions, cfg.model.domain, legend)
        atomic_write(out / "overlay.svg", svg)
        written.append(out / "overlay.svg")
    return written


def reconstruct_in_memory(cfg: RunConfig) -> tuple[dict, object, SweepResult]:
    from .reconstruct import support_sweep
    res = support_sweep(cfg.model, cfg.sweep)
    report, hull = build_report(cfg, res)
    return report, hull, res


def simulate(cfg: RunConfig, out_dir) -> dict:
    """Write one CSV+JSON dataset per (direction, tau, channel) and a manifest with hashes."""
    out = Path(out_dir)
    sw = cfg.sweep
    entries = []
    guard = sw.guard if cfg.stop_at_floor else math.inf

    def sink(j, probe, re, im):
        tau = probe.params.tau
        for ch, d in (("re", re), ("im", im)):
            if d is None or (sw.kind == "real" and ch == "im"):
                continue
            stem = out / f"d{j:03d}_tau{tau:.6f}_{ch}".replace(".", "p")
            csv_path, json_path = write_dataset(d, stem)
            entries.append({"direction_index": j, "omega": list(probe.params.omega), "c": probe.params.c,
                            "tau": tau, "channel": ch, "csv": csv_path.name, "json": json_path.name,
                            "csv_sha256": sha256_file(csv_path), "json_sha256": sha256_file(json_path)})

    oms = directions(sw.n_directions)
    cs = sw.slowness(cfg.model.domain)
    series = run_series(cfg.model, oms, sw.kind, cs, sw.time_profile, sw.tau_schedule, sw.dt, sw.scheme, guard,
                        eta=sw.eta, cgo_options=sw.cgo_options, sink=sink, workers=sw.workers)
    skipped = [{"direction_index": j, "tau": p.tau, "status": p.status}
               for j, s in enumerate(series) for p in s.points if p.status != "ok"
               and p.status != "below precision floor"]
    manifest = {"config_digest": cfg.digest(), "probe": sw.kind, "entries": entries, "skipped": skipped}
    atomic_write(out / MANIFEST, dumps(manifest))
    return manifest


def load_manifest(data_dir, cfg: RunConfig) -> dict:
    import json
    path = Path(data_dir) / MANIFEST
    if not path.exists():
        raise ConfigError(f"no manifest in {data_dir}")
    man = json.loads(path.read_text())
    if man.get("config_digest") != cfg.digest():
        raise ConfigError("manifest hash mismatch: datasets were produced by a different config")
    missing, bad = [], []
    for e in man["entries"]:
        for key in ("csv", "json"):
            p = Path(data_dir) / e[key]
            if not p.exists():
                missing.append(e[key])
            elif sha256_file(p) != e[f"{key}_sha256"]:
                bad.append(e[key])
    if missing:
        raise ConfigError("missing datasets: " + ", ".join(missing))
    if bad:
        raise ConfigError("datasets do not match their recorded hashes: " + ", ".join(bad))
    return man


def reconstruct_from_datasets(cfg: RunConfig, data_dir) -> tuple[dict, object, SweepResult]:
    man = load_manifest(data_dir, cfg)
    sw = cfg.sweep
    grid = build_grid(cfg.model.domain)
    groups = defaultdict(dict)
    for e in man["entries"]:
        groups[(e["direction_index"], e["tau"])][e["channel"]] = e
    oms = directions(sw.n_directions)
    cs = sw.slowness(cfg.model.domain)
    series = [IndicatorSeries(sw.kind, tuple(w), c, [], sw.T, {"scheme": sw.scheme, "guard": sw.guard})
              for w, c in zip(oms, cs)]
    profile = sw.time_profile
    for (j, tau), chans in sorted(groups.items()):
        e = chans["re"]
        re = read_dataset(Path(data_dir) / Path(e["csv"]).stem)
        data = re
        if sw.kind != "real":
            if "im" not in chans:
                raise ConfigError(f"missing imaginary channel for direction {j}, tau {tau}")
            im = read_dataset(Path(data_dir) / Path(chans["im"]["csv"]).stem)
            data = superpose([re, im], [1.0, 1j])
        params = ProbeParams(e["omega"], e["c"] if sw.kind != "real" else 1.0, tau, sw.kind)
        probe = build_probe(params, grid, cfg.model, sw.eta)
        iv = indicator_value(data, probe, profile)
        pt = SeriesPoint(tau, "ok", iv.value, iv.log_abs, iv.log_scale, iv.cancellation, iv.psi,
                         math.log(abs(iv.psi)) + probe_norm_factor(sw.kind, tau, e["c"]), data.dt)
        if not (iv.cancellation <= sw.guard and math.isfinite(pt.log_abs)):
            pt.status = "below precision floor"
        series[j].points.append(pt)
    for s in series:
        s.points.sort(key=lambda p: p.tau)
    est = [extract_slope(s, max_h_stderr=sw.max_h_stderr) for s in series]
    res = SweepResult(est, series, sw)
    report, hull = build_report(cfg, res)
    return report, hull, res


def cgo_report(cfg: RunConfig) -> dict:
    """Per-(omega, tau, c) Neumann-series diagnostics with the continuum kernel."""
    sw = cfg.sweep
    model = cfg.model
    h = 1.0 / model.domain.resolution
    taus = cfg.cgo_taus or (float(np.median(sw.tau_schedule)),)
    bbox = model.domain.bounding_box()
    entries = []
    for w in directions(sw.n_directions):
        c0 = sw.c_policy if sw.c_policy != "auto" else sw.slowness(model.domain)[0]
        for tau in taus:
            for fct in cfg.cgo_c_factors:
                c = float(c0) * fct
                entry = {"omega": list(w), "tau": tau, "c": c}
                if c * c * tau <= 1:
                    entries.append({**entry, "status": "failed", "reason": "increase c: c^2 tau <= 1"})
                    continue
                p = ProbeParams(w, c, tau, "cgo")
                entry["lambda"] = p.lam
                try:
                    pg = padded_grid(bbox, h, 2.0, choose_padding(p, h))
                    pots = liouville_potentials(model.background, pg)
                    corr = neumann_solve(pots, faddeev_kernel(p, pg), sw.eta)
                    entries.append({**entry, "status": "ok", "reason": "", **corr.as_dict()})
                except NonContractionError as exc:
                    entries.append({**entry, "status": "failed", "reason": f"increase c: {exc}"})
                except (SolverError, ConfigError) as exc:
                    entries.append({**entry, "status": "failed", "reason": str(exc)})
    return {"config_digest": cfg.digest(), "entries": entries}
