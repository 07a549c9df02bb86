"""Solver checks against exact solutions and conservation laws."""

import numpy as np
import pytest

from mhdflux.errors import BlowUp
from mhdflux.grid import GridSpec, VectorField3, curl, divergence
from mhdflux.solver import (
    MHDState,
    SolverConfig,
    abc_init,
    energy_balance_residual,
    run,
    step,
    taylor_green_mhd_init,
    total_energy,
)


GRID = GridSpec(32, 2 * np.pi)


def max_abs_diff(v: VectorField3, w: VectorField3) -> float:
    return max(float(np.max(np.abs(a - b))) for a, b in zip(v.components, w.components))


def zero_field(grid):
    z = np.zeros(grid.shape)
    return VectorField3.from_arrays(grid, z, z, z)


def test_abc_is_beltrami():
    v = abc_init(GRID)
    assert max_abs_diff(curl(v), v) <= 1e-10


def test_abc_exact_decay():
    """With b = 0 an ABC flow solves the equations exactly: u(t) = e^{-nu t} u(0).

    The nonlinear term is a pure gradient for Beltrami fields, so the only
    dynamics left is diffusion of a Laplacian eigenfunction (|k|^2 = 1).
    """
    nu = 0.05
    cfg = SolverConfig(nu=nu, eta_m=nu, dt=0.01, T=0.2, n_snapshots=5)
    init = MHDState(0.0, abc_init(GRID, amplitude=1.3), zero_field(GRID))
    series = run(init, cfg)
    for i, t in enumerate(series.times):
        factor = np.exp(-nu * t)
        expect = VectorField3.from_arrays(
            GRID, *[factor * c for c in init.u.components]
        )
        assert max_abs_diff(series.states[i].u, expect) <= 1e-6
        assert max_abs_diff(series.states[i].b, zero_field(GRID)) <= 1e-12


def test_aligned_elsasser_decay():
    """u = b kills both nonlinearities, so an aligned ABC pair just diffuses."""
    nu = 0.08
    cfg = SolverConfig(nu=nu, eta_m=nu, dt=0.01, T=0.15, n_snapshots=4)
    v = abc_init(GRID, amplitude=0.9)
    series = run(MHDState(0.0, v, v), cfg)
    t = series.T
    factor = np.exp(-nu * t)
    expect = VectorField3.from_arrays(GRID, *[factor * c for c in v.components])
    assert max_abs_diff(series.states[-1].u, expect) <= 1e-6
    assert max_abs_diff(series.states[-1].b, expect) <= 1e-6


def test_zero_is_fixed_point():
    cfg = SolverConfig(nu=1.0, eta_m=1.0, dt=0.02, T=0.1, n_snapshots=3)
    init = MHDState(0.0, zero_field(GRID), zero_field(GRID))
    series = run(init, cfg)
    assert max_abs_diff(series.states[-1].u, zero_field(GRID)) == 0.0
    assert max_abs_diff(series.states[-1].b, zero_field(GRID)) == 0.0


def test_divergence_free_preserved():
    cfg = SolverConfig(nu=0.01, eta_m=0.01, dt=0.01, T=0.1, n_snapshots=3)
    init = taylor_green_mhd_init(GRID, 1.0, 0.7, seed=2)
    series = run(init, cfg)
    for s in series.states:
        assert float(np.max(np.abs(divergence(s.u).values))) <= 1e-9
        assert float(np.max(np.abs(divergence(s.b).values))) <= 1e-9


def test_run_is_deterministic():
    cfg = SolverConfig(nu=0.02, eta_m=0.02, dt=0.01, T=0.08, n_snapshots=3)
    init = taylor_green_mhd_init(GRID, 1.1, 0.6, seed=5)
    a = run(init, cfg)
    b = run(init, cfg)
    for sa, sb in zip(a.states, b.states):
        for ca, cb in zip(sa.u.components, sb.u.components):
            assert np.array_equal(ca, cb)
        for ca, cb in zip(sa.b.components, sb.b.components):
            assert np.array_equal(ca, cb)


def test_snapshots_uniformly_spaced():
    cfg = SolverConfig(nu=0.05, eta_m=0.05, dt=0.0123, T=0.7, n_snapshots=13)
    init = MHDState(0.0, abc_init(GRID, 0.5), zero_field(GRID))
    series = run(init, cfg)
    assert len(series) == 13
    assert series.times[0] == 0.0
    assert series.T == pytest.approx(0.7, abs=1e-14)
    gaps = np.diff(series.times)
    assert np.max(np.abs(gaps - gaps[0])) <= 1e-13


def test_energy_balance_second_order():
    """The interval energy defect shrinks like the snapshot spacing squared."""
    init = taylor_green_mhd_init(GRID, 1.2, 0.8, seed=3)
    resids = []
    for n_snap in (11, 21):
        cfg = SolverConfig(nu=0.02, eta_m=0.02, dt=0.004, T=0.4, n_snapshots=n_snap)
        series = run(init, cfg)
        resids.append(energy_balance_residual(series, cfg))
    assert resids[0] <= 1e-3
    ratio = resids[0] / resids[1]
    assert 3.0 <= ratio <= 5.5


def test_energy_decays():
    cfg = SolverConfig(nu=0.02, eta_m=0.02, dt=0.005, T=0.3, n_snapshots=7)
    init = taylor_green_mhd_init(GRID, 1.2, 0.8, seed=3)
    series = run(init, cfg)
    energies = [total_energy(s) for s in series.states]
    assert all(e2 < e1 for e1, e2 in zip(energies, energies[1:]))


def test_blowup_detection():
    cfg = SolverConfig(nu=0.01, eta_m=0.01, dt=0.01, T=0.5, n_snapshots=3,
                      blowup_cap=0.5)
    init = taylor_green_mhd_init(GRID, 2.0, 1.0, seed=1)
    with pytest.raises(BlowUp) as info:
        run(init, cfg)
    assert info.value.max_value > 0.5


def test_step_matches_run():
    cfg = SolverConfig(nu=0.03, eta_m=0.03, dt=0.01, T=0.03, n_snapshots=4)
    init = taylor_green_mhd_init(GRID, 0.9, 0.5, seed=9)
    series = run(init, cfg)
    s = init
    for _ in range(3):
        s = step(s, cfg)
    assert max_abs_diff(s.u, series.states[-1].u) <= 1e-12
    assert max_abs_diff(s.b, series.states[-1].b) <= 1e-12


class TestTaylorGreenInit:
    def test_divergence_free_and_zero_mean(self):
        st = taylor_green_mhd_init(GRID, 1.5, 0.9, seed=4)
        assert float(np.max(np.abs(divergence(st.u).values))) <= 1e-10
        assert float(np.max(np.abs(divergence(st.b).values))) <= 1e-10
        for c in st.u.components + st.b.components:
            assert abs(float(np.mean(c))) <= 1e-13

    def test_seed_determinism(self):
        a = taylor_green_mhd_init(GRID, 1.0, 0.5, seed=11)
        b = taylor_green_mhd_init(GRID, 1.0, 0.5, seed=11)
        c = taylor_green_mhd_init(GRID, 1.0, 0.5, seed=12)
        assert max_abs_diff(a.u, b.u) == 0.0
        assert max_abs_diff(a.u, c.u) > 0.0

    def test_amplitude_scaling_without_seed(self):
        a = taylor_green_mhd_init(GRID, 1.0, 0.5, seed=None)
        b = taylor_green_mhd_init(GRID, 2.0, 1.0, seed=None)
        for ca, cb in zip(a.u.components, b.u.components):
            assert np.allclose(2.0 * ca, cb, atol=1e-13)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(nu=-1.0)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.0)
    with pytest.raises(ValueError):
        SolverConfig(n_snapshots=1)
