"""Enclosure-method reconstruction of the convex hull of inclusions in a
heat-conducting body from lateral boundary temperature and flux data."""

from .background import Background, bump_background
from .cgo import build_cgo_probe, faddeev_kernel, neumann_solve, padded_grid
from .config import RunConfig, default_config, load_config, parse_config
from .errors import ConfigError, EmptyHullError, EnclosureError, NonContractionError, SolverError
from .forward import BoundaryDataset, ForwardSolver, add_noise, solve_forward, superpose
from .geometry import DomainSpec, InclusionSpec, directions, true_support
from .grid import Grid, build_grid
from .indicator import (
    DEFAULT_COMPLEX_SCHEDULE,
    DEFAULT_GUARD,
    DEFAULT_REAL_SCHEDULE,
    IndicatorSeries,
    SupportEstimate,
    extract_slope,
    indicator_series,
    indicator_value,
    run_series,
)
from .model import ConductivityModel, sample_conductivity
from .probes import ProbeParams, TimeProfile, make_complex_probe, make_real_probe
from .reconstruct import SweepConfig, hausdorff_convex, hull_from_support, support_sweep, time_budget_check

__version__ = "0.1.0"
