"""Cell-centered grids and boundary node lists."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .geometry import DomainSpec

LD = np.longdouble
MIN_CELLS = 16


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centered grid on a rectangle (or node-only boundary for a disk).

    Cells are indexed ``i * ny + j`` with i along x. Boundary nodes are the
    midpoints of boundary faces, ordered counterclockwise from the corner
    (x_min, y_min); each node belongs to one boundary cell.
    """

    domain: DomainSpec
    h: float
    nx: int
    ny: int
    node_pos: np.ndarray      # (nb, 2)
    node_normal: np.ndarray   # (nb, 2)
    node_weight: np.ndarray   # (nb,)
    node_s: np.ndarray        # arclength at node
    node_cell: np.ndarray     # (nb,) flat cell index, -1 for disks

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def n_nodes(self) -> int:
        return len(self.node_pos)

    @property
    def has_cells(self) -> bool:
        return self.domain.shape == "rectangle"

    def cell_coords(self, dtype=float) -> tuple[np.ndarray, np.ndarray]:
        """1D coordinates of cell centers along x and y."""
        x0, _, y0, _ = self.domain.bounds
        r = dtype(self.domain.resolution)
        xc = dtype(x0) + (np.arange(self.nx, dtype=dtype) + dtype(0.5)) / r
        yc = dtype(y0) + (np.arange(self.ny, dtype=dtype) + dtype(0.5)) / r
        return xc, yc

    def cell_centers(self, dtype=float) -> np.ndarray:
        xc, yc = self.cell_coords(dtype)
        X, Y = np.meshgrid(xc, yc, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def node_cell_pos(self, dtype=float) -> np.ndarray:
        return self.cell_centers(dtype)[self.node_cell]

    def ghost_pos(self, dtype=float) -> np.ndarray:
        """Mirror points across boundary faces (cell center + h * normal)."""
        h = dtype(1) / dtype(self.domain.resolution)
        return self.node_cell_pos(dtype) + h * self.node_normal.astype(dtype)

    def metadata(self) -> dict:
        d = self.domain
        return {"shape": d.shape, "resolution": d.resolution, "bounds": d.bounds,
                "center": d.center, "radius": d.radius, "h": self.h, "nx": self.nx, "ny": self.ny,
                "n_nodes": self.n_nodes}


def build_grid(domain: DomainSpec) -> Grid:
    domain.validate()
    r = domain.resolution
    if domain.shape == "disk":
        R = domain.radius
        if 2 * R * r < MIN_CELLS:
            raise ConfigError(f"resolution too coarse: need at least {MIN_CELLS} cells across the domain")
        n = max(int(round(2 * np.pi * R * r)), 4 * MIN_CELLS)
        th = 2 * np.pi * np.arange(n) / n
        nrm = np.column_stack([np.cos(th), np.sin(th)])
        pos = np.asarray(domain.center) + R * nrm
        w = np.full(n, 2 * np.pi * R / n)
        return Grid(domain, 1.0 / r, 0, 0, pos, nrm, w, R * th, np.full(n, -1))

    x0, x1, y0, y1 = domain.bounds
    fx, fy = (x1 - x0) * r, (y1 - y0) * r
    nx, ny = int(round(fx)), int(round(fy))
    if abs(fx - nx) > 1e-9 * max(1.0, fx) or abs(fy - ny) > 1e-9 * max(1.0, fy):
        raise ConfigError("domain extents times resolution must be whole numbers of cells")
    if min(nx, ny) < MIN_CELLS:
        raise ConfigError(f"resolution too coarse: {nx}x{ny} cells, need at least {MIN_CELLS} per side")
    h = 1.0 / r
    ii, jj = np.arange(nx), np.arange(ny)
    xc = x0 + (ii + 0.5) * h
    yc = y0 + (jj + 0.5) * h
    cells, pos, nrm, s = [], [], [], []
    # bottom, right, top, left (counterclockwise)
    cells.append(ii * ny + 0); pos.append(np.column_stack([xc, np.full(nx, y0)]))
    nrm.append(np.tile([0.0, -1.0], (nx, 1))); s.append((ii + 0.5) * h)
    cells.append((nx - 1) * ny + jj); pos.append(np.column_stack([np.full(ny, x1), yc]))
    nrm.append(np.tile([1.0, 0.0], (ny, 1))); s.append(nx * h + (jj + 0.5) * h)
    ir = ii[::-1]
    cells.append(ir * ny + ny - 1); pos.append(np.column_stack([xc[::-1], np.full(nx, y1)]))
    nrm.append(np.tile([0.0, 1.0], (nx, 1))); s.append((nx + ny) * h + (ii + 0.5) * h)
    jr = jj[::-1]
    cells.append(jr); pos.append(np.column_stack([np.full(ny, x0), yc[::-1]]))
    nrm.append(np.tile([-1.0, 0.0], (ny, 1))); s.append((2 * nx + ny) * h + (jj + 0.5) * h)
    nb = 2 * (nx + ny)
    return Grid(domain, h, nx, ny, np.concatenate(pos), np.concatenate(nrm), np.full(nb, h),
                np.concatenate(s), np.concatenate(cells))
