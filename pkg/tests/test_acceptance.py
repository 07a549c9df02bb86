"""Acceptance suite: one test per criterion, each a single pass/fail line.

These pin the headline guarantees at their stated tolerances; the per-module
test files cover the same ground in finer grain. The two long fixtures (the
n = 64 decomposition run and the shipped demo pipeline) are module-scoped so
each runs once.
"""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from mhdflux.assumptions import ball_integral, coherence_constant, current_smoothness
from mhdflux.cli import main as cli_main
from mhdflux.cutoffs import (
    Shoulder,
    Smoothstep,
    TemporalCutoff,
    make_refined,
    verify_bounds,
)
from mhdflux.ensembles import (
    _partition_geometry,
    canonical_ensemble,
    ensemble_average,
    grouped_average,
    large_scale_mean,
    lattice_partition,
)
from mhdflux.fluxes import flux_density, surface_flux, term_decomposition
from mhdflux.grid import (
    GridSpec,
    ScalarField,
    VectorField3,
    curl,
    divergence,
    integrate,
    leray_project,
)
from mhdflux.solver import (
    MHDState,
    SnapshotSeries,
    SolverConfig,
    abc_init,
    energy_balance_residual,
    run,
    taylor_green_mhd_init,
)


REPO = Path(__file__).resolve().parent.parent
DEMO_CFG = REPO / "configs" / "demo.cfg"


def bandlimited_field(grid, seed, kmax=6):
    rng = np.random.default_rng(seed)
    k = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    kh = 2 * np.pi * np.fft.rfftfreq(grid.n, d=grid.dx)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kh[None, None, :] ** 2
    comps = []
    for _ in range(3):
        spec = np.fft.rfftn(rng.standard_normal(grid.shape))
        spec[k2 > kmax**2] = 0.0
        c = np.fft.irfftn(spec, s=grid.shape, axes=(0, 1, 2))
        comps.append(c / max(1e-12, np.max(np.abs(c))))
    return VectorField3.from_arrays(grid, *comps)


def test_criterion_01_spectral_correctness():
    grid = GridSpec(32, 2 * np.pi)
    v = abc_init(grid)
    cv = curl(v)
    err = max(float(np.max(np.abs(a - b)))
              for a, b in zip(cv.components, v.components))
    assert err <= 1e-10
    for seed in range(20):
        w = bandlimited_field(grid, seed)
        c = curl(w)
        scale = max(float(np.max(np.abs(comp))) for comp in c.components)
        assert float(np.max(np.abs(divergence(c).values))) <= 1e-11 * scale


def test_criterion_02_solver_validity():
    grid = GridSpec(32, 2 * np.pi)
    nu = 0.05
    cfg = SolverConfig(nu=nu, eta_m=nu, dt=1e-3, T=0.1, n_snapshots=2)
    zero = VectorField3.from_arrays(grid, *[np.zeros(grid.shape)] * 3)
    series = run(MHDState(0.0, abc_init(grid), zero), cfg)
    expect = np.exp(-nu * 0.1)
    got = series.states[-1].u.components
    want = abc_init(grid).components
    rel = max(float(np.max(np.abs(g - expect * w))) / expect
              for g, w in zip(got, want))
    assert rel <= 1e-6

    init = taylor_green_mhd_init(grid, 1.2, 0.8, seed=3)
    resids = []
    for n_snap in (11, 21):
        c = SolverConfig(nu=0.02, eta_m=0.02, dt=0.004, T=0.4, n_snapshots=n_snap)
        resids.append(energy_balance_residual(run(init, c), c))
    assert resids[0] <= 1e-3
    assert resids[0] / resids[1] >= 3.0


def test_criterion_03_flux_identity():
    grid = GridSpec(64, 2 * np.pi)
    U = leray_project(bandlimited_field(grid, 1))
    B = leray_project(bandlimited_field(grid, 2))
    T = 1.0
    times = np.linspace(0.0, T, 16)
    states = []
    for t in times:
        au = 1.0 + 0.4 * np.sin(2 * np.pi * t / T)
        ab = 1.0 - 0.3 * np.cos(2 * np.pi * t / T)
        states.append(MHDState(
            float(t),
            VectorField3.from_arrays(grid, *[au * c for c in U.components]),
            VectorField3.from_arrays(grid, *[ab * c for c in B.components]),
        ))
    series = SnapshotSeries(grid, times, states)
    eta = TemporalCutoff(T)
    tf = make_refined(grid, (np.pi, np.pi, np.pi), 0.96, rho=0.9, C0_target=1000.0)
    lhs = integrate(ScalarField(grid, flux_density(series, eta).values * tf.field.values))
    rhs = surface_flux(series, tf, eta)
    assert abs(lhs - rhs) <= 1e-6 * max(abs(lhs), abs(rhs))


@pytest.fixture(scope="module")
def decomposition_residuals():
    grid = GridSpec(64, 2 * np.pi)
    init = taylor_green_mhd_init(grid, 1.5, 1.0, seed=7)
    tf = make_refined(grid, (np.pi, np.pi, np.pi), 1.0)
    out = {}
    for n_snap in (48, 96):
        cfg = SolverConfig(nu=0.02, eta_m=0.02, dt=5e-3, T=0.75, n_snapshots=n_snap)
        series = run(init, cfg)
        tb = term_decomposition(series, tf, TemporalCutoff(series.T), 0.02, 0.02)
        out[n_snap] = tb.identity_residual
    return out


def test_criterion_04_decomposition_identity(decomposition_residuals):
    r48 = decomposition_residuals[48]
    r96 = decomposition_residuals[96]
    assert r48 <= 1e-4
    assert r48 / r96 >= 3.0


@pytest.fixture(scope="module")
def sandwich_setup():
    grid = GridSpec(64, 2 * np.pi)
    psi0 = make_refined(grid, (np.pi, np.pi, np.pi), 0.96)
    ensembles = []
    for R in (0.48, 0.32):
        for jitter in (None, 1, 2, 3, 4):
            ensembles.append(canonical_ensemble(psi0, R, K1=64, K2=8,
                                                jitter_seed=jitter, min_points=3))
    return grid, psi0, ensembles


def nonneg_field(grid, seed):
    rng = np.random.default_rng(seed)
    k = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    kh = 2 * np.pi * np.fft.rfftfreq(grid.n, d=grid.dx)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kh[None, None, :] ** 2
    spec = rng.standard_normal((grid.n, grid.n, grid.n // 2 + 1)) \
        + 1j * rng.standard_normal((grid.n, grid.n, grid.n // 2 + 1))
    spec[k2 > 25.0] = 0.0
    vals = np.fft.irfftn(spec, s=grid.shape, axes=(0, 1, 2))
    vals -= vals.min()
    return ScalarField(grid, vals)


def test_criterion_05_ensemble_sandwich(sandwich_setup):
    grid, psi0, ensembles = sandwich_setup
    violations = 0
    for seed in range(100):
        f = nonneg_field(grid, seed)
        f0 = large_scale_mean(f, psi0)
        for e in ensembles:
            avg = ensemble_average(f, e)
            if not (f0 / e.K1 * (1 - 1e-12) <= avg <= e.K2 * f0 * (1 + 1e-12)):
                violations += 1
    delta = 2 * psi0.rho - 1.0
    for seed in range(100):
        f = nonneg_field(grid, 5000 + seed)
        f0 = float(np.sum(f.values * psi0.field.values**delta)
                   * grid.dx**3 / psi0.R**3)
        for e in ensembles:
            avg = ensemble_average(f, e, power=delta)
            if not (f0 / e.K1 * (1 - 1e-12) <= avg <= e.K2 * f0 * (1 + 1e-12)):
                violations += 1
    assert violations == 0


def test_criterion_06_partition_refinement():
    grid = GridSpec(64, 2 * np.pi)
    psi0 = make_refined(grid, (np.pi, np.pi, np.pi), 0.96)
    for ratio in (2, 3, 4):
        Rp = 0.96 / ratio
        pieces = lattice_partition(psi0, Rp, min_points=1)
        total = sum(p.field.values for p in pieces)
        assert np.max(np.abs(total - psi0.field.values)) <= 1e-12
        assert len(pieces) <= 8 * math.ceil(ratio) ** 3
        mult = sum((p.field.values > 0.0).astype(int) for p in pieces)
        assert int(mult.max()) <= 8

        m, s, w = _partition_geometry(0.96, Rp)
        sh = Shoulder(s / 2.0, w, Smoothstep(psi0.q))
        x = np.linspace(-3.0, 3.0, 4001)
        cover = np.zeros_like(x)
        for p in range(-10, 11):
            cover += sh.value(np.abs(x - s * p))
        assert np.all(cover >= 1.0 - 1e-12) and np.all(cover <= 2.0 + 1e-12)

    parent = canonical_ensemble(psi0, 0.48, K1=64, K2=8, min_points=3)
    from mhdflux.ensembles import refine_ensemble
    child = refine_ensemble(parent, 0.24, min_points=1)
    f = nonneg_field(grid, 42)
    direct = ensemble_average(f, parent)
    grouped = grouped_average(f, child)
    assert abs(direct - grouped) <= 1e-10 * max(1.0, abs(direct))


def test_criterion_07_refined_bounds():
    grid = GridSpec(48, 2 * np.pi)
    for R in (0.12, 0.24, 0.48, 0.96):
        tf = make_refined(grid, (np.pi, np.pi, np.pi), R, rho=0.8)
        c_grad, c_lap, ok = verify_bounds(tf)
        assert ok, (R, c_grad, c_lap, tf.C0)


@pytest.fixture(scope="module")
def demo_outputs(tmp_path_factory):
    base = tmp_path_factory.mktemp("demo")
    outs = []
    for name in ("a", "b"):
        out = base / name
        code = cli_main(["all", "--config", str(DEMO_CFG), "--out", str(out)])
        assert code == 0
        outs.append(out)
    return outs


def test_criterion_08_end_to_end_demo(demo_outputs):
    out_a, out_b = demo_outputs
    report = json.loads((out_a / "flux_report.json").read_text())
    sigma0 = report["quantities"]["sigma0"]
    assert sigma0 < 0.1 * report["R0"]
    assert report["assumption2_ok"] is True
    assert report["beta"] == 0.1
    assert len(report["scales"]) == 6
    by_scale = {}
    for row in report["rows"]:
        by_scale.setdefault(row["R"], []).append(row)
        assert math.isfinite(row["ratio_phi_over_P0"])
    assert all(len(v) >= 4 for v in by_scale.values())
    # positivity is an observed outcome of this fixture, recorded not asserted
    assert isinstance(report["all_ratios_positive"], bool)
    for name in ("flux_report.json", "flux_table.csv", "plotdata.csv",
                 "assumptions.json", "summary.txt", "config.resolved"):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name
    for pa in sorted((out_a / "snapshots").glob("*")):
        pb = out_b / "snapshots" / pa.name
        assert pa.read_bytes() == pb.read_bytes(), pa.name


def test_criterion_09_locality(demo_outputs):
    report = json.loads((demo_outputs[0] / "flux_report.json").read_text())
    # the two forms differ by the smoothness tail of the partition pieces;
    # on full-spectrum demo fields that defect measures ~1.3e-4
    for row in report["rows"]:
        lhs = row["psi_avg"]
        rhs = row["R"] ** 3 * row["phi_avg"]
        assert abs(lhs - rhs) <= 5e-4 * max(abs(lhs), abs(rhs))
    assert report["locality"], "no scale pairs sampled"
    k2 = report["K_star"] ** 2
    for pair in report["locality"]:
        s3 = pair["scale_ratio_cubed"]
        assert s3 / k2 <= pair["psi_ratio"] <= s3 * k2
        assert pair["within"] is True


def test_criterion_10_assumption_estimators():
    grid = GridSpec(32, 2 * np.pi)
    X, Y, _ = grid.meshgrid()
    zero = np.zeros(grid.shape)
    times = np.linspace(0.0, 1.0, 12)

    def series_from(u, b):
        states = [MHDState(float(t),
                           VectorField3.from_arrays(grid, *u),
                           VectorField3.from_arrays(grid, *b)) for t in times]
        return SnapshotSeries(grid, times, states)

    planar = series_from((np.sin(Y), np.sin(X), zero),
                         (np.cos(2 * Y), np.cos(2 * X), zero))
    coh = coherence_constant(planar, M=1e-6, n_samples=500, seed=3)
    assert coh.n_used > 0
    assert coh.value == pytest.approx(0.0, abs=1e-10)

    b = (np.cos(2 * X) + 0.3 * np.sin(Y), np.cos(X), 0.4 * np.sin(Y))
    u = (np.sin(Y), zero, zero)
    r1 = current_smoothness(series_from(u, b), M=1e-6, n_samples=400, seed=2)
    r2 = current_smoothness(series_from(u, [13.0 * c for c in b]),
                            M=1e-6, n_samples=400, seed=2)
    assert abs(r1.value - r2.value) <= 1e-12 * max(1.0, abs(r1.value))

    from mhdflux.assumptions import enstrophy_time_integral
    density = enstrophy_time_integral(series_from(u, b))
    rng = np.random.default_rng(9)
    for c in rng.uniform(0.0, grid.length, size=(10, 3)):
        vals = [ball_integral(grid, density, c, r)
                for r in np.linspace(0.3, 3.0, 8)]
        assert all(hi >= lo for lo, hi in zip(vals, vals[1:]))
