import numpy as np
import pytest
from hypothesis import given, strategies as st

from enclosure.background import Background, bump_background
from enclosure.errors import ConfigError
from enclosure.geometry import DomainSpec, InclusionSpec, directions, perp, true_support
from enclosure.grid import build_grid
from enclosure.model import ConductivityModel, sample_conductivity


# grids

def test_square_perimeter_quadrature():
    g = build_grid(DomainSpec.rectangle(-1, 1, -1, 1, 32))
    assert abs(g.node_weight.sum() - 8.0) < 1e-10


def test_disk_weights_sum_to_circumference():
    for res in (8, 16, 40):
        g = build_grid(DomainSpec.disk((0, 0), 1.0, res))
        assert abs(g.node_weight.sum() - 2 * np.pi) < 1e-12


def test_coarse_resolution_rejected():
    with pytest.raises(ConfigError):
        build_grid(DomainSpec.rectangle(-1, 1, -1, 1, 4))


def test_fractional_cell_count_rejected():
    with pytest.raises(ConfigError):
        build_grid(DomainSpec.rectangle(-1, 1.01, -1, 1, 16))


def test_nodes_counterclockwise_with_outward_normals():
    g = build_grid(DomainSpec.rectangle(-1, 1, -0.5, 0.5, 16))
    assert np.all(np.diff(g.node_s) > 0)
    assert abs(g.node_s[0] - g.h / 2) < 1e-15
    # nodes sit on the boundary, normals point away from the centre
    assert np.all(np.sum(g.node_pos * g.node_normal, axis=1) > 0)
    x, y = g.node_pos.T
    on_edge = np.isclose(np.abs(x), 1) | np.isclose(np.abs(y), 0.5)
    assert on_edge.all()
    # each node's adjacent cell centre is half a cell inside
    cc = g.node_cell_pos()
    assert np.allclose(g.node_pos - cc, 0.5 * g.h * g.node_normal)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.05, 0.3), st.floats(0, 2 * np.pi))
def test_disk_support_matches_sampled_outline(cx, cy, r, th):
    inc = InclusionSpec.disk((cx, cy), r, 2.0)
    w = np.array([np.cos(th), np.sin(th)])
    sampled = np.max(inc.outline(4096) @ w)
    assert inc.support(w) >= sampled - 1e-12
    assert inc.support(w) - sampled < r * (1 - np.cos(np.pi / 4096)) + 1e-12


def test_disk_support_values():
    inc = InclusionSpec.disk((0.3, -0.2), 0.25, 3.0)
    assert abs(inc.support((1, 0)) - 0.55) < 1e-15
    assert abs(inc.support((0, 1)) - 0.05) < 1e-15


def test_union_support_is_max():
    a = InclusionSpec.disk((0.3, -0.2), 0.25, 3.0)
    b = InclusionSpec.disk((-0.4, 0.3), 0.1, 3.0)
    for w in directions(12):
        assert true_support([a, b], w) == max(a.support(w), b.support(w))


def test_polygon_inclusion_support_and_orientation():
    sq = InclusionSpec.polygon([(-0.2, -0.2), (0.2, -0.2), (0.2, 0.2), (-0.2, 0.2)], 2.0)
    assert abs(sq.support((1, 0)) - 0.2) < 1e-15
    assert abs(sq.support(np.array([1, 1]) / np.sqrt(2)) - 0.4 / np.sqrt(2)) < 1e-15
    with pytest.raises(ConfigError):
        InclusionSpec.polygon([(-0.2, -0.2), (-0.2, 0.2), (0.2, 0.2), (0.2, -0.2)], 2.0)


def test_unit_contrast_warns():
    with pytest.warns(UserWarning):
        InclusionSpec.disk((0, 0), 0.2, 1.0)


def test_perp_is_rotation():
    w = np.array([0.6, 0.8])
    assert np.allclose(perp(w), [-0.8, 0.6])
    assert np.allclose(perp(w, -1), [0.8, -0.6])


# conductivity sampling

def test_homogeneous_cells_are_one():
    d = DomainSpec.rectangle(-1, 1, -1, 1, 16)
    fld = sample_conductivity(build_grid(d), ConductivityModel(d))
    assert np.all(fld.gamma == 1.0)


def test_disk_inclusion_sampling():
    d = DomainSpec.rectangle(-1, 1, -1, 1, 16)
    g = build_grid(d)
    inc = InclusionSpec.disk((1 / 32, 1 / 32), 0.25, 3.0)   # centre on a cell centre
    fld = sample_conductivity(g, ConductivityModel(d, inclusions=[inc]))
    pts = g.cell_centers()
    centre = np.argmin(np.hypot(pts[:, 0] - 1 / 32, pts[:, 1] - 1 / 32))
    assert fld.gamma[centre] == 3.0
    assert fld.gamma[0] == 1.0


def test_inclusion_touching_boundary_rejected():
    d = DomainSpec.rectangle(-1, 1, -1, 1, 16)
    with pytest.raises(ConfigError):
        ConductivityModel(d, inclusions=[InclusionSpec.disk((0.9, 0), 0.2, 2.0)])


# background

def test_constant_background_has_zero_potentials():
    bg = Background()
    x = np.linspace(-1, 1, 11)
    assert np.all(bg.gamma0(x, x) == 1.0)
    assert np.all(bg.potential(x, x) == 0.0)


def test_background_expression_whitelist():
    for bad in ("__import__('os')", "sin(x)", "x.real", "[x]", "1 + z"):
        with pytest.raises(ConfigError):
            Background(bad, (-0.5, 0.5, -0.5, 0.5))


def test_background_must_be_one_on_box_edge():
    with pytest.raises(ConfigError):
        Background("1 + 0.5*exp(-(x**2 + y**2)/0.1)", (-0.5, 0.5, -0.5, 0.5))


def _fd_potential(bg, x, y, h=2e-3):
    s = lambda a, b: np.sqrt(bg.gamma0(a, b))
    c = (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12)
    lap = 0.0
    for k, ck in zip(range(-2, 3), c):
        lap = lap + ck * (s(x + k * h, y) + s(x, y + k * h))
    return lap / h ** 2 / s(x, y)


def test_potential_matches_finite_differences():
    bg = bump_background(center=(0.0, 0.0), half_width=0.5, amplitude=0.5, width2=0.1)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.45, 0.45, size=(50, 2))
    b = bg.potential(pts[:, 0], pts[:, 1])
    ref = _fd_potential(bg, pts[:, 0], pts[:, 1])
    assert np.max(np.abs(b - ref)) < 1e-6
    # nonzero only inside the box
    assert bg.potential(0.7, 0.0) == 0.0 and bg.gamma0(0.7, 0.0) == 1.0


def test_radial_background_potential_is_symmetric():
    bg = Background("1 + 0.5*exp(-(x**2 + y**2)/0.05)*(1 - x**2/0.25)**3*(1 - y**2/0.25)**3",
                    (-0.5, 0.5, -0.5, 0.5))
    # the box factor is symmetric under the dihedral group, so check the 8 images of a point
    p = np.array([0.13, 0.21])
    imgs = [(sx * a, sy * b) for a, b in (p, p[::-1]) for sx in (1, -1) for sy in (1, -1)]
    vals = [float(bg.potential(a, b)) for a, b in imgs]
    assert max(vals) - min(vals) < 1e-12 * max(1.0, abs(vals[0]))
