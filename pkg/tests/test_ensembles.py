"""Partition-of-unity refinement and (K1, K2)-ensemble properties."""

import math

import numpy as np
import pytest

from mhdflux.cutoffs import Shoulder, Smoothstep, make_refined
from mhdflux.ensembles import (
    POINTWISE_TOL,
    _partition_geometry,
    canonical_ensemble,
    ensemble_average,
    grouped_average,
    large_scale_mean,
    lattice_partition,
    refine_ensemble,
    validate_ensemble,
)
from mhdflux.errors import EnsembleInvalid, ResolutionTooCoarse
from mhdflux.grid import GridSpec, ScalarField


GRID = GridSpec(64, 2 * np.pi)
CENTER = (np.pi, np.pi, np.pi)


def random_nonneg_field(grid, seed, kmax=5):
    rng = np.random.default_rng(seed)
    shape = (grid.n, grid.n, grid.n // 2 + 1)
    k = 2 * np.pi * np.fft.fftfreq(grid.n, d=grid.dx)
    kh = 2 * np.pi * np.fft.rfftfreq(grid.n, d=grid.dx)
    k2 = k[:, None, None] ** 2 + k[None, :, None] ** 2 + kh[None, None, :] ** 2
    spec = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    spec[k2 > kmax**2] = 0.0
    vals = np.fft.irfftn(spec, s=grid.shape, axes=(0, 1, 2))
    vals -= vals.min()
    return ScalarField(grid, vals)


@pytest.mark.parametrize("ratio", [2, 3, 4])
def test_partition_reconstructs_parent(ratio):
    psi = make_refined(GRID, CENTER, 0.96)
    pieces = lattice_partition(psi, 0.96 / ratio, min_points=1)
    total = sum(p.field.values for p in pieces)
    assert np.max(np.abs(total - psi.field.values)) <= 1e-12


@pytest.mark.parametrize("ratio", [2, 3, 4])
def test_partition_count_bound(ratio):
    psi = make_refined(GRID, CENTER, 0.96)
    pieces = lattice_partition(psi, 0.96 / ratio, min_points=1)
    m = math.ceil(ratio)
    assert len(pieces) <= 8 * m**3


@pytest.mark.parametrize("ratio", [2, 3])
def test_partition_multiplicity(ratio):
    psi = make_refined(GRID, CENTER, 0.96)
    pieces = lattice_partition(psi, 0.96 / ratio, min_points=1)
    mult = sum((p.field.values > 0.0).astype(int) for p in pieces)
    assert int(mult.max()) <= 8


def test_lattice_sandwich_1d():
    """The shifted shoulder profiles satisfy 1 <= sum_p g_p <= 2 on a line."""
    R, Rp = 0.96, 0.48
    m, s, w = _partition_geometry(R, Rp)
    sh = Shoulder(s / 2.0, w, Smoothstep(6))
    x = np.linspace(-3.0, 3.0, 4001)
    total = np.zeros_like(x)
    for p in range(-8, 9):
        total += sh.value(np.abs(x - s * p))
    assert np.all(total >= 1.0 - 1e-12)
    assert np.all(total <= 2.0 + 1e-12)


def test_pieces_stay_below_parent():
    psi = make_refined(GRID, CENTER, 0.9)
    for p in lattice_partition(psi, 0.45, min_points=1):
        assert np.max(p.field.values - psi.field.values) <= 1e-13


def test_resolution_guard():
    with pytest.raises(ResolutionTooCoarse):
        lattice_partition(make_refined(GRID, CENTER, 0.9), 0.05)


def test_grouped_average_preserved():
    """Averaging refined pieces grouped by parent reproduces the parent average."""
    psi0 = make_refined(GRID, CENTER, 0.96)
    parent = canonical_ensemble(psi0, 0.96, K1=64, K2=8)
    child = refine_ensemble(parent, 0.48, min_points=3)
    f = random_nonneg_field(GRID, 11)
    direct = ensemble_average(f, parent)
    grouped = grouped_average(f, child)
    assert abs(direct - grouped) <= 1e-10 * max(1.0, abs(direct))


def test_canonical_ensemble_at_parent_scale_is_psi0():
    psi0 = make_refined(GRID, CENTER, 0.9)
    e = canonical_ensemble(psi0, 0.9, K1=64, K2=8)
    assert e.n == 1
    f = random_nonneg_field(GRID, 3)
    assert ensemble_average(f, e) == pytest.approx(large_scale_mean(f, psi0))


@pytest.mark.parametrize("jitter", [None, 5, 17])
def test_canonical_ensemble_validates(jitter):
    psi0 = make_refined(GRID, CENTER, 0.9)
    e = canonical_ensemble(psi0, 0.45, K1=64, K2=8, jitter_seed=jitter, min_points=3)
    assert e.n >= (0.9 / 0.45) ** 3 - 1e-9
    assert e.n <= 64 * (0.9 / 0.45) ** 3 + 1e-9


def test_validate_rejects_undersized_cover():
    psi0 = make_refined(GRID, CENTER, 0.9)
    e = canonical_ensemble(psi0, 0.45, K1=64, K2=8, min_points=3)
    with pytest.raises(EnsembleInvalid):
        validate_ensemble(psi0, 0.45, e.members[:-5], 64, 8)


def test_validate_rejects_small_k2():
    psi0 = make_refined(GRID, CENTER, 0.9)
    e = canonical_ensemble(psi0, 0.45, K1=64, K2=8, min_points=3)
    with pytest.raises(EnsembleInvalid):
        validate_ensemble(psi0, 0.45, e.members, 64, 1)


@pytest.fixture(scope="module")
def sandwich_ensembles():
    psi0 = make_refined(GRID, CENTER, 0.96)
    ensembles = []
    for R in (0.48, 0.32):
        for jitter in (None, 1, 2, 3, 4):
            ensembles.append(
                canonical_ensemble(psi0, R, K1=64, K2=8, jitter_seed=jitter, min_points=3)
            )
    return psi0, ensembles


class TestSandwich:
    """(1/K1) F0 <= <F>_R <= K2 F0 for nonnegative f over validated ensembles."""

    def test_no_violations_over_random_fields(self, sandwich_ensembles):
        psi0, ensembles = sandwich_ensembles
        violations = 0
        for seed in range(100):
            f = random_nonneg_field(GRID, seed)
            f0 = large_scale_mean(f, psi0)
            for e in ensembles:
                avg = ensemble_average(f, e)
                lo = f0 / e.K1
                hi = e.K2 * f0
                if not (lo * (1 - 1e-12) <= avg <= hi * (1 + 1e-12)):
                    violations += 1
        assert violations == 0

    def test_delta_variant(self, sandwich_ensembles):
        """Same sandwich with psi**delta weights, delta = 2 rho - 1."""
        psi0, ensembles = sandwich_ensembles
        delta = 2 * psi0.rho - 1.0
        violations = 0
        for seed in range(20):
            f = random_nonneg_field(GRID, 1000 + seed)
            f0 = (
                np.sum(f.values * psi0.field.values**delta)
                * GRID.dx**3 / psi0.R**3
            )
            for e in ensembles:
                avg = ensemble_average(f, e, power=delta)
                if not (f0 / e.K1 * (1 - 1e-12) <= avg <= e.K2 * f0 * (1 + 1e-12)):
                    violations += 1
        assert violations == 0
