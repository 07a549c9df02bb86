"""(K1, K2)-ensembles of test functions and the partition-of-unity refinement.

An ensemble at scale R over a fixed integral-scale cutoff psi0 (scale R0) is
a collection {psi_i} with

  1. psi_i <= psi0 <= sum_i psi_i pointwise,
  2. (R0/R)^3 <= n <= K1 (R0/R)^3,
  3. at most K2 members nonzero at any point.

The refinement splits a scale-R function into scale-R' pieces psi * h_p,
where h_p = g_p / sum_q g_q and the g_p are shifted products of 1D plateau
profiles. The lattice spacing is chosen as (2R + 2R') / ceil(R/R') rather
than the naive 2R': this widens the plateau slightly so that the support of
psi meets at most 2*ceil(R/R') lattice cells per axis, which is what makes
the piece-count bound 8*ceil(R/R')^3 actually hold for every center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .cutoffs import (
    ProductPiece,
    Shoulder,
    Smoothstep,
    TestFunction,
    _LatticeAxis,
    _sampled_bound_constants,
    evaluate_profile,
)
from .errors import EnsembleInvalid, ResolutionTooCoarse
from .grid import ScalarField, integrate

__all__ = [
    "Ensemble",
    "lattice_partition",
    "canonical_ensemble",
    "refine_ensemble",
    "ensemble_average",
    "grouped_average",
    "large_scale_mean",
    "validate_ensemble",
]

POINTWISE_TOL = 1e-12


@dataclass(frozen=True)
class Ensemble:
    """A validated collection of scale-R test functions covering psi0."""

    psi0: TestFunction
    R: float
    members: list[TestFunction]
    K1: int
    K2: int
    C0: float
    # piece indices per parent member, for the grouped normalization
    parent_groups: list[list[int]] | None = None
    parent_R: float | None = None

    @property
    def n(self) -> int:
        return len(self.members)


def _partition_geometry(R: float, R_prime: float) -> tuple[int, float, float]:
    """Return (m, spacing, support half-width) for the refinement lattice."""
    m = math.ceil(R / R_prime - 1e-9)
    w = 2.0 * R_prime
    s = (2.0 * R + w) / m
    return m, s, w


def lattice_partition(psi: TestFunction, R_prime: float,
                      offset: tuple[float, float, float] = (0.0, 0.0, 0.0),
                      min_points: int = 8) -> list[TestFunction]:
    """Split ``psi`` into scale-R' pieces psi * h_p that sum back to psi exactly.

    ``offset`` shifts the partition lattice (jittered ensembles); it is taken
    relative to psi's nominal center. Pieces that vanish identically on the
    grid are dropped. The returned count is at most 8 * ceil(R/R')^3.

    ``min_points`` guards flux accuracy (quadrature against the pieces); the
    algebraic properties (reconstruction, counts, multiplicity) hold at any
    resolution, so callers checking only those may lower it.
    """
    grid = psi.grid
    if not R_prime < psi.R:
        raise ValueError("R_prime must be smaller than the parent scale")
    if R_prime < min_points * grid.dx:
        raise ResolutionTooCoarse(
            f"R' = {R_prime:.4g} needs >= {min_points} grid points but dx = {grid.dx:.4g}"
        )
    m, s, w = _partition_geometry(psi.R, R_prime)
    step = Smoothstep(psi.q)
    shoulder = Shoulder(s / 2.0, w, step)

    pos = psi.pos
    base = np.asarray(pos, dtype=np.float64) + np.asarray(offset, dtype=np.float64)
    reach = 2.0 * psi.R + w
    # candidate lattice sites per axis: open interval of length 2m in lattice units
    ranges = []
    for i in range(3):
        lo = math.floor((pos[i] - reach - base[i]) / s) + 1
        hi = math.ceil((pos[i] + reach - base[i]) / s) - 1
        ranges.append(range(lo, hi + 1))

    pieces: list[TestFunction] = []
    half_l = grid.length / 2.0
    # ball-overlap pruning only applies to radially supported parents;
    # partition pieces have cube supports and are pruned by the grid check
    from .cutoffs import RadialProfile
    ball_parent = isinstance(psi.profile, RadialProfile)
    axis_cache: dict[tuple[int, int], _LatticeAxis] = {}

    def axis_for(i: int, p: int) -> _LatticeAxis:
        key = (i, p)
        if key not in axis_cache:
            axis_cache[key] = _LatticeAxis(shoulder, s, float(base[i] % s), float(base[i] + s * p), half_l)
        return axis_cache[key]

    for px in ranges[0]:
        for py in ranges[1]:
            for pz in ranges[2]:
                site = base + s * np.array([px, py, pz])
                if ball_parent:
                    # skip lattice cubes that cannot meet the support ball
                    gap2 = np.sum(np.maximum(np.abs(site - pos) - w, 0.0) ** 2)
                    if gap2 >= (2.0 * psi.R) ** 2:
                        continue
                profile = ProductPiece(psi.profile, (axis_for(0, px), axis_for(1, py), axis_for(2, pz)))
                fld = evaluate_profile(profile, grid, psi.anchor)
                if not np.any(fld.values != 0.0):
                    continue
                tf = TestFunction(
                    center=tuple(np.asarray(psi.anchor) + site),
                    R=float(R_prime),
                    rho=psi.rho,
                    C0=float("nan"),
                    q=psi.q,
                    field=fld,
                    profile=profile,
                    anchor=psi.anchor,
                )
                c_grad, c_lap = _sampled_bound_constants(tf, n_per_axis=40)
                object.__setattr__(tf, "C0", max(c_grad, c_lap))
                pieces.append(tf)

    assert len(pieces) <= 8 * m**3, "piece-count bound violated"
    return pieces


def validate_ensemble(psi0: TestFunction, R: float, members: list[TestFunction],
                      K1: int, K2: int, tol: float = POINTWISE_TOL) -> float:
    """Check Properties 1-3 and the member bounds; return the ensemble C0.

    Raises EnsembleInvalid with a description of the first failing property.
    """
    n = len(members)
    if n == 0:
        raise EnsembleInvalid("ensemble has no members")
    psi0_vals = psi0.field.values
    total = np.zeros_like(psi0_vals)
    multiplicity = np.zeros(psi0_vals.shape, dtype=np.int32)
    for i, tf in enumerate(members):
        vals = tf.field.values
        excess = float(np.max(vals - psi0_vals))
        if excess > tol:
            raise EnsembleInvalid(f"property 1: member {i} exceeds psi0 by {excess:.3g}")
        total += vals
        multiplicity += vals > 0.0
    deficit = float(np.max(psi0_vals - total))
    if deficit > tol:
        raise EnsembleInvalid(f"property 1: sum of members falls below psi0 by {deficit:.3g}")
    ratio3 = (psi0.R / R) ** 3
    if not ratio3 * (1.0 - 1e-9) <= n <= K1 * ratio3 * (1.0 + 1e-9):
        raise EnsembleInvalid(
            f"property 2: n = {n} outside [{ratio3:.4g}, {K1 * ratio3:.4g}] at R = {R:.4g}"
        )
    max_mult = int(np.max(multiplicity))
    if max_mult > K2:
        raise EnsembleInvalid(f"property 3: pointwise multiplicity {max_mult} exceeds K2 = {K2}")
    return max(tf.C0 for tf in members)


def canonical_ensemble(psi0: TestFunction, R: float, K1: int, K2: int,
                       jitter_seed: int | None = None,
                       min_points: int = 8) -> Ensemble:
    """Partition of psi0 at scale R, validated as a (K1, K2)-ensemble.

    With ``jitter_seed`` the partition lattice is shifted by a seeded uniform
    offset in one lattice cell, giving distinct but equally valid ensembles.
    """
    if abs(R - psi0.R) <= 1e-12 * psi0.R:
        c0 = psi0.C0
        return Ensemble(psi0, psi0.R, [psi0], K1, K2, c0,
                        parent_groups=[[0]], parent_R=psi0.R)
    offset = (0.0, 0.0, 0.0)
    if jitter_seed is not None:
        _, s, _ = _partition_geometry(psi0.R, R)
        rng = np.random.default_rng(jitter_seed)
        offset = tuple(rng.uniform(0.0, s, size=3))
    members = lattice_partition(psi0, R, offset=offset, min_points=min_points)
    c0 = validate_ensemble(psi0, R, members, K1, K2)
    return Ensemble(psi0, R, members, K1, K2, c0,
                    parent_groups=[list(range(len(members)))], parent_R=psi0.R)


def refine_ensemble(e: Ensemble, R_prime: float,
                    offset: tuple[float, float, float] = (0.0, 0.0, 0.0),
                    min_points: int = 8) -> Ensemble:
    """Partition every member at scale R'; validates as a (64 K1, 8 K2) ensemble."""
    members: list[TestFunction] = []
    groups: list[list[int]] = []
    for parent in e.members:
        pieces = lattice_partition(parent, R_prime, offset=offset, min_points=min_points)
        groups.append(list(range(len(members), len(members) + len(pieces))))
        members.extend(pieces)
    c0 = validate_ensemble(e.psi0, R_prime, members, 64 * e.K1, 8 * e.K2)
    return Ensemble(e.psi0, R_prime, members, 64 * e.K1, 8 * e.K2, c0,
                    parent_groups=groups, parent_R=e.R)


def ensemble_average(f: ScalarField, e: Ensemble, power: float = 1.0) -> float:
    """<F>_R = (1/n) sum_i (1/R^3) int f psi_i dx (flat normalization).

    ``power`` != 1 gives the modified average with psi_i**power weights.
    """
    acc = 0.0
    for tf in e.members:
        w = tf.field.values if power == 1.0 else tf.field.values**power
        acc += integrate(ScalarField(f.grid, f.values * w))
    return acc / (len(e.members) * e.R**3)


def grouped_average(f: ScalarField, e: Ensemble, power: float = 1.0) -> float:
    """Grouped normalization: pieces stay grouped by parent at the parent scale.

    Equals the parent ensemble's flat average exactly, by linearity.
    """
    if e.parent_groups is None or e.parent_R is None:
        raise ValueError("ensemble carries no parent grouping")
    acc = 0.0
    for group in e.parent_groups:
        for idx in group:
            w = e.members[idx].field.values
            if power != 1.0:
                w = w**power
            acc += integrate(ScalarField(f.grid, f.values * w))
    return acc / (len(e.parent_groups) * e.parent_R**3)


def large_scale_mean(f: ScalarField, psi0: TestFunction) -> float:
    """F0 = (1/R0^3) int f psi0 dx."""
    return integrate(ScalarField(f.grid, f.values * psi0.field.values)) / psi0.R**3
