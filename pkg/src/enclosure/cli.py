"""Command-line interface: simulate, reconstruct, cgo-report, noise, validate-config."""
from __future__ import annotations

import argparse
import json
from pathlib import Path
import sys
import time

from .config import load_config
from .dataset_io import atomic_write, dumps, read_dataset, sha256_file, write_dataset
from .errors import ConfigError, EmptyHullError, SolverError
from .forward import add_noise

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_EMPTY = 0, 2, 3, 4


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"config OK: probe={cfg.sweep.kind} directions={cfg.sweep.n_directions} "
          f"T={cfg.sweep.T} digest={cfg.digest()[:12]}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    from .pipeline import simulate
    cfg = load_config(args.config)
    out = Path(args.out or Path(cfg.output_dir) / cfg.datasets_dir)
    man = simulate(cfg, out)
    print(f"wrote {len(man['entries'])} datasets and {out / 'manifest.json'}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    from .pipeline import reconstruct_from_datasets, reconstruct_in_memory, write_outputs
    cfg = load_config(args.config)
    if args.no_svg:
        cfg = type(cfg)(**{**cfg.__dict__, "svg": False})
    t0 = time.perf_counter()
    if args.datasets:
        report, hull, _ = reconstruct_from_datasets(cfg, args.datasets)
    else:
        report, hull, _ = reconstruct_in_memory(cfg)
    timings = {"reconstruct_seconds": time.perf_counter() - t0}
    out = Path(args.out or cfg.output_dir)
    write_outputs(cfg, report, hull, out, timings)
    print(report["message"])
    if report["hull"]["empty"]:
        _err(f"empty hull: {report['hull']['reason']}")
        return EXIT_EMPTY
    print(f"hull with {len(report['hull']['vertices'])} vertices written to {out / 'report.json'}")
    return EXIT_OK


def cmd_cgo_report(args) -> int:
    from .pipeline import cgo_report
    cfg = load_config(args.config)
    if cfg.sweep.kind != "cgo":
        raise ConfigError("cgo-report needs method.probe = 'cgo'")
    rep = cgo_report(cfg)
    out = Path(args.out or Path(cfg.output_dir) / "cgo_report.json")
    atomic_write(out, dumps(rep))
    n_ok = sum(e["status"] == "ok" for e in rep["entries"])
    print(f"{n_ok} of {len(rep['entries'])} CGO entries converged; report at {out}")
    return EXIT_OK


def cmd_noise(args) -> int:
    src, dst = Path(args.datasets), Path(args.out)
    man = json.loads((src / "manifest.json").read_text())
    entries = []
    for k, e in enumerate(man["entries"]):
        d = read_dataset(src / Path(e["csv"]).stem)
        noisy = add_noise(d, args.relative, args.seed + k)
        csv_path, json_path = write_dataset(noisy, dst / Path(e["csv"]).stem)
        entries.append({**e, "csv_sha256": sha256_file(csv_path), "json_sha256": sha256_file(json_path)})
    atomic_write(dst / "manifest.json", dumps({**man, "entries": entries,
                                                "noise": {"relative": args.relative, "seed": args.seed}}))
    print(f"wrote {len(entries)} perturbed datasets to {dst}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="enclosure", description="Thermal enclosure-method simulation and "
                                "convex-hull reconstruction")
    sub = p.add_subparsers(dest="command", required=True)
    s = sub.add_parser("validate-config", help="check a config file")
    s.add_argument("config")
    s.set_defaults(func=cmd_validate)
    s = sub.add_parser("simulate", help="simulate boundary datasets")
    s.add_argument("config")
    s.add_argument("--out", help="dataset directory (default: <output.dir>/<output.datasets>)")
    s.set_defaults(func=cmd_simulate)
    s = sub.add_parser("reconstruct", help="estimate support functions and the convex hull")
    s.add_argument("config")
    s.add_argument("--datasets", help="dataset directory from 'simulate' (default: simulate in memory)")
    s.add_argument("--out", help="output directory (default: output.dir)")
    s.add_argument("--no-svg", action="store_true", help="skip the SVG overlay")
    s.set_defaults(func=cmd_reconstruct)
    s = sub.add_parser("cgo-report", help="CGO remainder diagnostics")
    s.add_argument("config")
    s.add_argument("--out", help="output JSON path")
    s.set_defaults(func=cmd_cgo_report)
    s = sub.add_parser("noise", help="add Gaussian noise to recorded temperatures")
    s.add_argument("datasets")
    s.add_argument("out")
    s.add_argument("--relative", type=float, required=True, help="noise std relative to max |u|")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_noise)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_CONFIG
    except EmptyHullError as exc:
        _err(str(exc))
        return EXIT_EMPTY
    except (SolverError, NotImplementedError) as exc:
        _err(str(exc))
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
