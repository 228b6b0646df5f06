import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enclosure.errors import ConfigError
from enclosure.geometry import DomainSpec, InclusionSpec
from enclosure.grid import LD, build_grid
from enclosure.probes import (ProbeParams, TimeProfile, flux_from_probe, laplace_weight, make_complex_probe,
                              make_real_probe)

GRID = build_grid(DomainSpec.rectangle(-1, 1, -1, 1, 32))
GRID64 = build_grid(DomainSpec.rectangle(-1, 1, -1, 1, 64))


def test_lambda_zero_boundary_case():
    p = ProbeParams((1, 0), 1.0, 1.0)
    assert p.lam == 0.0
    assert np.allclose(p.z, [1, 0])
    assert abs(np.dot(p.z, p.z) - 1) < 1e-15


def test_complex_z_example():
    p = ProbeParams((1, 0), 2.0, 1.0)
    assert np.allclose(p.z, [2, 1j * np.sqrt(3)], rtol=0, atol=1e-15)
    assert abs(np.dot(p.z, p.z) - 1.0) < 1e-14


@given(st.floats(0, 2 * np.pi), st.floats(0.05, 3.0), st.floats(0.1, 500.0), st.sampled_from([1, -1]))
def test_z_dot_z_equals_tau(th, c, tau, sign):
    if c * c * tau < 1:
        c = 1.0 / math.sqrt(tau) * 1.01
    p = ProbeParams((np.cos(th), np.sin(th)), c, tau, perp_sign=sign)
    zz = np.dot(p.z, p.z)
    assert abs(zz - tau) <= 1e-12 * max(tau, abs(p.z[0]) ** 2 + abs(p.z[1]) ** 2)


def test_invalid_parameters_rejected():
    with pytest.raises(ConfigError):
        ProbeParams((1, 0), 1.0, 0.0)
    with pytest.raises(ConfigError):
        ProbeParams((1, 0), 0.1, 4.0)   # c^2 tau < 1
    with pytest.raises(ConfigError):
        ProbeParams((0, 0), 1.0, 4.0)
    with pytest.raises(ConfigError):
        make_real_probe((1, 0), 0.0, GRID)


@given(st.floats(0, 2 * np.pi), st.floats(0.2, 1.0), st.floats(5, 200))
@settings(max_examples=30, deadline=None)
def test_modulus_level_sets_are_planes(th, c, tau):
    if c * c * tau < 1:
        tau = 1.0001 / c ** 2
    w = np.array([np.cos(th), np.sin(th)])
    pr = make_complex_probe(ProbeParams(w, c, tau), GRID, lattice=False)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, size=(20, 2))
    logv = np.log(np.abs(pr.sampler(pts))) + pr.log_scale
    assert np.allclose(logv, c * tau * pts @ w, rtol=1e-12, atol=1e-9)


def test_real_probe_value():
    pr = make_real_probe((1, 0), 4.0, GRID, lattice=False)
    for y in (-0.7, 0.0, 0.3):
        v = pr.sampler([(0.5, y)])[0] * math.exp(pr.log_scale)
        assert abs(v - math.e) < 1e-14


def _discrete_residual(pr, grid):
    X, Y = grid.cell_coords(LD)
    v = pr.cell_sampler().reshape(grid.nx, grid.ny)
    h = grid.h
    lap = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4 * v[1:-1, 1:-1]) / h ** 2
    return lap - pr.tau_lattice * v[1:-1, 1:-1], v[1:-1, 1:-1]


@pytest.mark.parametrize("tau", [4.0, 25.0, 100.0])
def test_lattice_probe_solves_discrete_equation(tau):
    rng = np.random.default_rng(int(tau))
    for pr in (make_complex_probe(ProbeParams((0.6, 0.8), 0.5, tau), GRID64),
               make_real_probe((0.6, -0.8), tau, GRID64)):
        res, v = _discrete_residual(pr, GRID64)
        idx = rng.integers(0, res.size, 200)
        r, a = np.abs(res.ravel()[idx]), np.abs(v.ravel()[idx])
        assert np.all(r < 1e-6 * tau * a)


@pytest.mark.parametrize("tau", [4.0, 36.0, 100.0])
def test_continuum_probe_finite_difference_residual(tau):
    # fourth-order differences in extended precision at random interior points
    p = ProbeParams((0.6, 0.8), max(0.3, 1.2 / math.sqrt(tau)), tau)
    pr = make_complex_probe(p, GRID, lattice=False)
    rng = np.random.default_rng(2)
    pts = rng.uniform(-0.9, 0.9, size=(25, 2)).astype(LD)
    h = LD(1) / 512
    z = p.z.astype(np.clongdouble)
    v = lambda q: np.exp(q @ z)
    lap = 0
    for k, ck in zip(range(-2, 3), (-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12)):
        lap = lap + LD(ck) * (v(pts + [k * h, 0]) + v(pts + [0, k * h]))
    lap = lap / h ** 2
    res = np.abs(lap - tau * v(pts)).astype(float)
    assert np.all(res < 1e-6 * np.abs(v(pts)).astype(float) * max(1.0, tau))
    # and the stored sampler agrees with direct evaluation
    direct = np.exp((pts @ z) - LD(pr.log_scale)).astype(complex)
    assert np.allclose(pr.sampler(pts), direct, rtol=1e-13)


def test_laplace_weight_values():
    one = TimeProfile("constant", 1.0)
    assert abs(laplace_weight(one, 1.0) - (1 - math.exp(-1))) < 1e-15
    assert abs(laplace_weight(one, 1.0) - 0.63212) < 1e-5
    for tau in (1e2, 1e4, 1e6):
        assert abs(laplace_weight(one, tau) * tau - 1) < 1.0 / tau + 1e-12
    t = np.linspace(0, 1, 201)
    tab = TimeProfile("table", 1.0, table_times=t, table_values=np.exp(-t))
    assert abs(laplace_weight(tab, 1.0) - (1 - math.exp(-2)) / 2) < 1e-8
    ex = TimeProfile("exp", 1.0, rate=1.0)
    assert abs(laplace_weight(ex, 1.0) - (1 - math.exp(-2)) / 2) < 1e-15


def test_profile_validation():
    with pytest.raises(ConfigError):
        TimeProfile("table", 1.0, table_times=[0, 0.5, 1.0], table_values=[1, 1, 1])
    with pytest.raises(ConfigError):
        TimeProfile("table", 1.0, table_times=[0, 0.2, 0.5, 1.0], table_values=[0, 0, 0, 0])
    with pytest.raises(ConfigError):
        TimeProfile("sawtooth", 1.0)
    with pytest.raises(ConfigError):
        laplace_weight(TimeProfile(), 0.0)


def test_real_probe_flux_closed_form():
    tau = 9.0
    w = np.array([0.6, 0.8])
    pr = make_real_probe(w, tau, GRID, lattice=False)
    fl = flux_from_probe(pr, TimeProfile("constant", 0.5), 0.05)
    x = GRID.node_pos
    expected = math.sqrt(tau) * (GRID.node_normal @ w) * np.exp(math.sqrt(tau) * x @ w - pr.log_scale)
    assert np.allclose(fl.values, expected[None, :], rtol=1e-12, atol=1e-300)
    assert np.all(fl.values == fl.values[0])


def test_complex_probe_flux_has_both_channels():
    pr = make_complex_probe(ProbeParams((1, 0), 0.5, 16.0), GRID)
    fl = flux_from_probe(pr, TimeProfile("constant", 1.0), 0.02)
    re, im = fl.channels()
    assert np.abs(re.values).max() > 0 and np.abs(im.values).max() > 0


def test_zero_conormal_nodes_get_zero_flux():
    horizontal = np.abs(GRID.node_normal[:, 0]) < 0.5   # top and bottom edges, normal perpendicular to (1, 0)
    # lambda = 0 makes z real, so z . nu vanishes exactly where nu is perpendicular to omega
    complex_probe = make_complex_probe(ProbeParams((1, 0), 0.25, 16.0), GRID, lattice=False)
    for pr in (make_real_probe((1, 0), 16.0, GRID), complex_probe):
        fl = flux_from_probe(pr, TimeProfile("constant", 1.0), 0.02)
        assert np.all(fl.values[:, horizontal] == 0)
        assert np.all(fl.values[:, ~horizontal] != 0)


def test_support_growth_rate():
    inc = InclusionSpec.disk((0.3, -0.2), 0.25, 3.0)
    pts = inc.outline(2048)
    w = (np.cos(0.7), np.sin(0.7))
    for tau in (16.0, 64.0, 256.0):
        pr = make_complex_probe(ProbeParams(w, 0.3, tau), GRID, lattice=False)
        growth = (np.max(np.log(np.abs(pr.sampler(pts)))) + pr.log_scale) / tau
        assert abs(growth - 0.3 * inc.support(w)) < 1.0 / tau
        rp = make_real_probe(w, tau, GRID, lattice=False)
        growth = (np.max(np.log(np.abs(rp.sampler(pts)))) + rp.log_scale) / math.sqrt(tau)
        assert abs(growth - inc.support(w)) < 1.0 / math.sqrt(tau)


def test_conormal_trace_second_order():
    errs = []
    for res in (32, 64):
        g = build_grid(DomainSpec.rectangle(-1, 1, -1, 1, res))
        p = ProbeParams((0.6, 0.8), 1.0, 4.0)
        pr = make_complex_probe(p, g)
        exact = (g.node_normal @ p.z) * np.exp(g.node_pos @ p.z - pr.log_scale)
        errs.append(np.max(np.abs(pr.conormal - exact) / np.abs(exact)))
    assert errs[1] < errs[0] / 3
    assert errs[1] < np.sum(np.abs(p.z) ** 2) * (1 / 64) ** 2


def test_h1_norm_growth():
    w = np.array([np.cos(0.3), np.sin(0.3)])
    c = 0.225
    h_omega = GRID64.domain.support(w)
    for tau in (64.0, 128.0, 256.0):
        p = ProbeParams(w, c, tau)
        pr = make_complex_probe(p, GRID64, lattice=False)
        v = pr.cell_sampler()
        grad2 = np.sum(np.abs(p.z) ** 2)
        log_norm = 0.5 * math.log(GRID64.h ** 2 * np.sum(np.abs(v) ** 2) * (1 + grad2)) + pr.log_scale
        assert abs(log_norm / tau - c * h_omega) < 0.05
