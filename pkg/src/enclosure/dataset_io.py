"""BoundaryDataset persistence: CSV rows plus a JSON sidecar, written atomically."""
from __future__ import annotations

import hashlib
import io
import math
import json
import os
from pathlib import Path
import tempfile

import numpy as np

from .errors import ConfigError
from .forward import BoundaryDataset

COLUMNS = ("node_index", "s_arclength", "t", "f_re", "f_im", "u_re", "u_im")


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, np.integer)):
        x = x.item()
    if isinstance(x, complex):
        return [_jsonable(x.real), _jsonable(x.imag)]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def dataset_csv(data: BoundaryDataset) -> str:
    f = np.asarray(data.f, dtype=complex)
    u = np.asarray(data.u, dtype=complex)
    nb = f.shape[1]
    buf = io.StringIO()
    buf.write(",".join(COLUMNS) + "\n")
    s = [repr(float(v)) for v in data.node_s]
    for n, t in enumerate(data.times):
        ts = repr(float(t))
        fr, fi, ur, ui = f[n].real.tolist(), f[n].imag.tolist(), u[n].real.tolist(), u[n].imag.tolist()
        buf.write("".join(f"{b},{s[b]},{ts},{fr[b]!r},{fi[b]!r},{ur[b]!r},{ui[b]!r}\n" for b in range(nb)))
    return buf.getvalue()


def dataset_sidecar(data: BoundaryDataset) -> dict:
    return {"grid": data.grid, "scheme": data.scheme, "T": data.T, "n_steps": data.n_steps,
            "n_nodes": int(data.f.shape[1]), "complex": bool(np.iscomplexobj(data.f) or np.iscomplexobj(data.u)),
            "metadata": data.metadata, "columns": list(COLUMNS)}


def write_dataset(data: BoundaryDataset, stem) -> tuple[Path, Path]:
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    atomic_write(csv_path, dataset_csv(data))
    atomic_write(json_path, dumps(dataset_sidecar(data)))
    return csv_path, json_path


def read_dataset(stem) -> BoundaryDataset:
    stem = Path(stem)
    csv_path, json_path = stem.with_suffix(".csv"), stem.with_suffix(".json")
    try:
        side = json.loads(json_path.read_text())
        with open(csv_path) as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != COLUMNS:
                raise ConfigError(f"{csv_path}: unexpected CSV header {header}")
            arr = np.loadtxt(fh, delimiter=",", dtype=float, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {stem}: {exc}") from None
    nb, M1 = side["n_nodes"], side["n_steps"] + 1
    if arr.shape != (nb * M1, len(COLUMNS)):
        raise ConfigError(f"{csv_path}: expected {nb * M1} rows, found {arr.shape[0]}")
    arr = arr.reshape(M1, nb, len(COLUMNS))
    times = arr[:, 0, 2].copy()
    node_s = arr[0, :, 1].copy()
    f = arr[:, :, 3] + 1j * arr[:, :, 4]
    u = arr[:, :, 5] + 1j * arr[:, :, 6]
    if not side["complex"]:
        f, u = f.real.copy(), u.real.copy()
    grid = side["grid"]
    for k in ("bounds", "center"):
        if grid.get(k) is not None:
            grid[k] = tuple(grid[k])
    return BoundaryDataset(times, f, u, grid, node_s, side["scheme"], side["metadata"])
