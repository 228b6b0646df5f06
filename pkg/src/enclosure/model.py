"""Conductivity models and their cellwise sampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .background import Background
from .errors import ConfigError
from .geometry import DomainSpec, InclusionSpec
from .grid import Grid


@dataclass(frozen=True, eq=False)
class ConductivityModel:
    """gamma = gamma0 outside the inclusions and k * gamma0 inside."""

    domain: DomainSpec
    background: Background = field(default_factory=Background)
    inclusions: tuple[InclusionSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inclusions", tuple(self.inclusions))
        self.validate()

    def validate(self) -> None:
        self.domain.validate()
        for inc in self.inclusions:
            if not np.all(self.domain.contains(inc.outline(), margin=0.0)):
                raise ConfigError("inclusion touches or crosses the domain boundary")
        if not self.background.is_constant:
            if not self.background.inside_margin(self.domain.bounding_box(), 0.0):
                raise ConfigError("background support box must lie inside the domain")

    def translated(self, d) -> "ConductivityModel":
        """Shift the inclusions and the domain together (background must be constant)."""
        if not self.background.is_constant:
            raise ConfigError("translation is only implemented for a constant background")
        d = np.asarray(d, dtype=float)
        dom = self.domain
        if dom.shape == "rectangle":
            x0, x1, y0, y1 = dom.bounds
            nd = DomainSpec.rectangle(x0 + d[0], x1 + d[0], y0 + d[1], y1 + d[1], dom.resolution)
        else:
            nd = DomainSpec.disk(np.add(dom.center, d), dom.radius, dom.resolution)
        return ConductivityModel(nd, self.background, tuple(i.translated(d) for i in self.inclusions))


@dataclass(frozen=True, eq=False)
class ConductivityField:
    """Cellwise gamma0 and contrast multiplier; gamma = multiplier * gamma0."""

    gamma0: np.ndarray
    multiplier: np.ndarray

    @property
    def gamma(self) -> np.ndarray:
        return self.gamma0 * self.multiplier


def sample_conductivity(grid: Grid, model: ConductivityModel) -> ConductivityField:
    if not grid.has_cells:
        raise NotImplementedError("cellwise sampling needs a rectangular grid")
    model.validate()
    # every boundary cell must lie outside the inclusions and the background support
    margin = grid.h
    for inc in model.inclusions:
        if not np.all(model.domain.contains(inc.outline(), margin=margin)):
            raise ConfigError("inclusion touches the boundary cells; need a margin of at least one cell")
    if not model.background.inside_margin(model.domain.bounding_box(), margin):
        raise ConfigError("background support box must stay one cell away from the boundary")
    pts = grid.cell_centers()
    g0 = model.background.gamma0(pts[:, 0], pts[:, 1])
    k = np.ones(grid.n_cells)
    for inc in model.inclusions:
        k[inc.contains(pts)] = inc.contrast
    if not np.all(g0 * k > 0):
        raise ConfigError("sampled conductivity must be positive")
    return ConductivityField(g0, k)
