"""Domains, inclusions and support functions."""
from __future__ import annotations

from dataclasses import dataclass
import warnings

import numpy as np

from .errors import ConfigError


def unit(omega) -> np.ndarray:
    w = np.asarray(omega, dtype=float)
    n = np.hypot(w[0], w[1])
    if not np.isfinite(n) or n == 0.0:
        raise ConfigError("direction must be a nonzero finite 2-vector")
    return w / n


def perp(omega, sign: int = 1) -> np.ndarray:
    """Rotate by +90 degrees (or -90 for sign=-1)."""
    w = np.asarray(omega, dtype=float)
    return sign * np.array([-w[1], w[0]])


def directions(n: int) -> np.ndarray:
    """Unit vectors at angles 2*pi*j/n."""
    th = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(th), np.sin(th)])


@dataclass(frozen=True)
class DomainSpec:
    """Axis-aligned rectangle or disk, with a resolution in cells per unit length."""

    shape: str
    resolution: int
    bounds: tuple[float, float, float, float] | None = None  # x_min, x_max, y_min, y_max
    center: tuple[float, float] | None = None
    radius: float | None = None

    @classmethod
    def rectangle(cls, x_min, x_max, y_min, y_max, resolution) -> "DomainSpec":
        d = cls("rectangle", int(resolution), bounds=(float(x_min), float(x_max), float(y_min), float(y_max)))
        d.validate()
        return d

    @classmethod
    def disk(cls, center, radius, resolution) -> "DomainSpec":
        d = cls("disk", int(resolution), center=(float(center[0]), float(center[1])), radius=float(radius))
        d.validate()
        return d

    def validate(self) -> None:
        if self.resolution <= 0:
            raise ConfigError("resolution must be positive")
        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.bounds
            if not (x1 > x0 and y1 > y0):
                raise ConfigError("degenerate rectangle: nonpositive extent")
        elif self.shape == "disk":
            if not self.radius > 0:
                raise ConfigError("degenerate disk: nonpositive radius")
        else:
            raise ConfigError(f"unknown domain shape {self.shape!r}")

    def bounding_box(self) -> tuple[float, float, float, float]:
        if self.shape == "rectangle":
            return self.bounds
        cx, cy = self.center
        r = self.radius
        return (cx - r, cx + r, cy - r, cy + r)

    def support(self, omega) -> float:
        """h_Omega(omega) = sup over the domain of x . omega."""
        w = np.asarray(omega, dtype=float)
        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.bounds
            return float(max(x0 * w[0], x1 * w[0]) + max(y0 * w[1], y1 * w[1]))
        return float(np.dot(self.center, w) + self.radius * np.hypot(*w))

    def contains(self, pts, margin: float = 0.0) -> np.ndarray:
        """Points at distance more than margin inside the domain."""
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.bounds
            return ((p[:, 0] > x0 + margin) & (p[:, 0] < x1 - margin)
                    & (p[:, 1] > y0 + margin) & (p[:, 1] < y1 - margin))
        d = np.hypot(p[:, 0] - self.center[0], p[:, 1] - self.center[1])
        return d < self.radius - margin

    @property
    def perimeter(self) -> float:
        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.bounds
            return 2.0 * ((x1 - x0) + (y1 - y0))
        return 2.0 * np.pi * self.radius


@dataclass(frozen=True)
class InclusionSpec:
    """Disk (center, radius) or convex polygon (counterclockwise vertices) with contrast k."""

    kind: str
    contrast: float
    center: tuple[float, float] | None = None
    radius: float | None = None
    vertices: tuple[tuple[float, float], ...] | None = None

    @classmethod
    def disk(cls, center, radius, contrast) -> "InclusionSpec":
        inc = cls("disk", float(contrast), center=(float(center[0]), float(center[1])), radius=float(radius))
        inc.validate()
        return inc

    @classmethod
    def polygon(cls, vertices, contrast) -> "InclusionSpec":
        v = tuple((float(a), float(b)) for a, b in vertices)
        inc = cls("polygon", float(contrast), vertices=v)
        inc.validate()
        return inc

    def validate(self) -> None:
        k = self.contrast
        if not (np.isfinite(k) and k > 0):
            raise ConfigError("contrast must be positive and finite")
        if k == 1.0:
            warnings.warn("inclusion contrast k = 1 carries no contrast; the inclusion is invisible",
                          UserWarning, stacklevel=3)
        if self.kind == "disk":
            if not self.radius > 0:
                raise ConfigError("disk inclusion needs a positive radius")
        elif self.kind == "polygon":
            v = np.asarray(self.vertices, dtype=float)
            if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
                raise ConfigError("polygon inclusion needs at least 3 vertices")
            e = np.roll(v, -1, axis=0) - v
            cross = e[:, 0] * np.roll(e, -1, axis=0)[:, 1] - e[:, 1] * np.roll(e, -1, axis=0)[:, 0]
            if not np.all(cross > 0):
                raise ConfigError("polygon inclusion must be strictly convex and counterclockwise")
        else:
            raise ConfigError(f"unknown inclusion kind {self.kind!r}")

    def support(self, omega) -> float:
        w = np.asarray(omega, dtype=float)
        if self.kind == "disk":
            return float(np.dot(self.center, w) + self.radius * np.hypot(*w))
        return float(np.max(np.asarray(self.vertices) @ w))

    def contains(self, pts) -> np.ndarray:
        p = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.kind == "disk":
            return (p[:, 0] - self.center[0]) ** 2 + (p[:, 1] - self.center[1]) ** 2 < self.radius ** 2
        v = np.asarray(self.vertices)
        inside = np.ones(len(p), dtype=bool)
        for a, b in zip(v, np.roll(v, -1, axis=0)):
            inside &= (b[0] - a[0]) * (p[:, 1] - a[1]) - (b[1] - a[1]) * (p[:, 0] - a[0]) > 0
        return inside

    def outline(self, n: int = 256) -> np.ndarray:
        """Closed boundary samples (for margins and plotting)."""
        if self.kind == "disk":
            th = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
            return np.column_stack([self.center[0] + self.radius * np.cos(th),
                                    self.center[1] + self.radius * np.sin(th)])
        return np.asarray(self.vertices, dtype=float)

    def translated(self, d) -> "InclusionSpec":
        d = np.asarray(d, dtype=float)
        if self.kind == "disk":
            return InclusionSpec("disk", self.contrast, center=tuple(np.add(self.center, d)), radius=self.radius)
        return InclusionSpec("polygon", self.contrast, vertices=tuple(tuple(v + d) for v in np.asarray(self.vertices)))


def true_support(inclusions, omega) -> float:
    """h_D(omega) for the union of inclusions."""
    inclusions = list(inclusions)
    if not inclusions:
        raise ConfigError("true_support needs at least one inclusion")
    return max(inc.support(omega) for inc in inclusions)
