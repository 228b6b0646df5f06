import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from enclosure.dataset_io import read_dataset, write_dataset
from enclosure.errors import ConfigError
from enclosure.forward import (FluxPrescription, ForwardSolver, add_noise, boundary_heat_input,
                               heat_content, solve_forward, superpose, time_grid)
from enclosure.geometry import DomainSpec, InclusionSpec
from enclosure.grid import build_grid
from enclosure.model import ConductivityModel

DOMAIN = DomainSpec.rectangle(-1, 1, -1, 1, 8)
INCLUSION = InclusionSpec.disk((0.3, -0.2), 0.25, 3.0)


@pytest.fixture(scope="module")
def solver():
    return ForwardSolver(ConductivityModel(DOMAIN, inclusions=[INCLUSION]))


def random_flux(grid, T, dt, seed, complex_=False):
    rng = np.random.default_rng(seed)
    t = time_grid(T, dt)
    v = rng.standard_normal((len(t), grid.n_nodes))
    if complex_:
        v = v + 1j * rng.standard_normal(v.shape)
    return FluxPrescription(t, v)


def test_zero_flux_gives_zero_trace(solver):
    t = time_grid(0.5, 0.05)
    d = solver.solve(FluxPrescription(t, np.zeros((len(t), solver.grid.n_nodes))), 0.5, 0.05)
    assert np.all(d.u == 0)


@pytest.mark.parametrize("scheme", ["be", "cn"])
def test_unit_influx_mean_temperature(scheme):
    g = build_grid(DOMAIN)
    s = ForwardSolver(ConductivityModel(DOMAIN), g)
    T, dt = 1.0, 0.05
    t = time_grid(T, dt)
    f = np.ones((len(t), g.n_nodes))
    if scheme == "cn":
        f[0] = 0.0   # constant influx switched on after t = 0, averaged exactly by the trapezoid
        expected = 2.0 * (t - dt / 2)
        expected[0] = 0.0
    else:
        expected = 2.0 * t   # |boundary| / |domain| * t = 8 / 4 * t
    _, states = s.march(f, dt, scheme, keep_states=True)
    mean = states[:, :, 0].mean(axis=1)
    assert np.allclose(mean, expected, rtol=1e-6, atol=1e-12)


@pytest.mark.parametrize("scheme", ["be", "cn"])
def test_mass_balance_with_inclusion(solver, scheme):
    fl = random_flux(solver.grid, 0.4, 0.02, seed=3)
    u, states = solver.march(fl.values, 0.02, scheme, keep_states=True)
    data = solver.solve(fl, 0.4, 0.02, scheme)
    heat = heat_content(solver, states)[:, 0]
    inflow = boundary_heat_input(data, solver.grid.node_weight)
    assert np.allclose(heat, inflow, rtol=1e-6, atol=1e-10 * np.abs(inflow).max())


@settings(max_examples=15, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2 ** 16))
def test_linearity(solver, a, b, seed):
    f = random_flux(solver.grid, 0.2, 0.02, seed)
    g = random_flux(solver.grid, 0.2, 0.02, seed + 1)
    comb = FluxPrescription(f.times, a * f.values + b * g.values)
    d = solver.solve_many([f, g, comb], 0.2, 0.02)
    lhs = d[2].u
    rhs = a * d[0].u + b * d[1].u
    scale = max(np.abs(lhs).max(), np.abs(rhs).max(), 1e-300)
    assert np.abs(lhs - rhs).max() <= 1e-8 * scale


def test_superpose_identity_and_cancellation(solver):
    d = solver.solve(random_flux(solver.grid, 0.2, 0.02, 5), 0.2, 0.02)
    same = superpose([d], [1])
    assert np.array_equal(same.u, d.u) and np.array_equal(same.f, d.f)
    zero = superpose([d, d], [1, -1])
    assert np.all(zero.u == 0) and np.all(zero.f == 0)


def test_superposed_channels_match_direct_complex_solve(solver):
    fl = random_flux(solver.grid, 0.2, 0.02, 9, complex_=True)
    re, im = fl.channels()
    dre, dim = solver.solve_many([re, im], 0.2, 0.02)
    combined = superpose([dre, dim], [1, 1j])
    direct = solver.solve(fl, 0.2, 0.02, direct_complex=True)
    assert np.abs(combined.u - direct.u).max() <= 1e-10 * np.abs(direct.u).max()
    assert np.array_equal(combined.f, fl.values)


def test_backward_euler_positivity(solver):
    rng = np.random.default_rng(0)
    t = time_grid(0.3, 0.01)
    f = np.abs(rng.standard_normal((len(t), solver.grid.n_nodes)))
    u, states = solver.march(f, 0.01, "be", keep_states=True)
    assert states.min() >= -1e-12 * states.max()
    assert u.min() >= -1e-12 * u.max()


def _trace_samples(res, M, T=0.5):
    d = DomainSpec.rectangle(-1, 1, -1, 1, res)
    g = build_grid(d)
    t = time_grid(T, T / M)
    x, y = g.node_pos.T
    f = np.outer(np.sin(2 * np.pi * t), np.cos(np.pi * x / 2) * (1 + 0.5 * y))
    data = solve_forward(ConductivityModel(d), FluxPrescription(t, f), T, T / M, "cn", g)
    sq = np.linspace(0.3, 7.7, 23)
    return np.concatenate([np.interp(sq, g.node_s, data.u[k]) for k in (M // 2, M)])


def test_refinement_order():
    # reference at 4x the finer resolution in space and time
    ref = _trace_samples(64, 128)
    e1 = np.abs(_trace_samples(8, 16) - ref).max()
    e2 = np.abs(_trace_samples(16, 32) - ref).max()
    order = np.log2(e1 / e2)
    assert order >= 1.5
    # Richardson check: the reference error is small next to the measured ones
    e_ref_est = e2 / 2 ** (2 * order)
    assert e_ref_est < 0.25 * e2


def test_flux_shape_and_time_grid_checks(solver):
    with pytest.raises(ConfigError):
        time_grid(1.0, 0.3)
    t = time_grid(0.2, 0.02)
    with pytest.raises(ConfigError):
        solver.solve(FluxPrescription(t, np.zeros((len(t), 3))), 0.2, 0.02)
    with pytest.raises(ConfigError):
        solver.solve(FluxPrescription(t, np.zeros((len(t), solver.grid.n_nodes))), 0.2, 0.02, scheme="rk4")


def test_dataset_round_trip_is_lossless(solver, tmp_path):
    fl = random_flux(solver.grid, 0.1, 0.02, 11, complex_=True)
    d = solver.solve(fl, 0.1, 0.02)
    write_dataset(d, tmp_path / "d")
    back = read_dataset(tmp_path / "d")
    assert np.array_equal(back.u, d.u) and np.array_equal(back.f, d.f)
    assert np.array_equal(back.times, d.times) and np.array_equal(back.node_s, d.node_s)
    assert back.scheme == d.scheme and back.grid == d.grid


def test_noise_is_seeded_and_scaled(solver):
    d = solver.solve(random_flux(solver.grid, 0.2, 0.01, 2), 0.2, 0.01)
    a = add_noise(d, 0.01, seed=4)
    b = add_noise(d, 0.01, seed=4)
    assert np.array_equal(a.u, b.u)
    diff = (a.u - d.u)[1:]
    assert abs(diff.std() / (0.01 * np.abs(d.u).max()) - 1) < 0.05
    assert np.all(a.u[0] == 0) and np.array_equal(a.f, d.f)
