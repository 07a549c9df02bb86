"""Refined spatial test functions and the temporal cutoff.

A refined test function at scale R is a smooth cutoff psi supported in the
periodic ball B(x0, 2R), equal to 1 on B(x0, R), with

    |grad psi| <= (C0/R) * psi**rho,      |lap psi| <= (C0/R^2) * psi**(2*rho-1)

for some C0 > 1 and rho in (3/4, 1). The canonical profile is a radial
polynomial smoothstep of order q = ceil(1/(1-rho)) + 1: near the support edge
psi ~ s**q, which keeps both ratios bounded. Profiles carry closed-form first
and second derivatives so the bound constants can be measured on a dense 1D
radial sample instead of only on the 3D grid (grid points can miss the thin
boundary layer where the ratio peaks).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.special import betainc, betaln

from .errors import BoundViolation, ScaleTooLarge
from .grid import GridSpec, ScalarField

__all__ = [
    "Smoothstep",
    "Shoulder",
    "RadialProfile",
    "ProductPiece",
    "TestFunction",
    "TemporalCutoff",
    "make_refined",
    "verify_bounds",
    "temporal_cutoff",
    "profile_order",
]


def profile_order(rho: float) -> int:
    """Smoothstep order for a given rho; the +1 gives Laplacian-bound margin."""
    return math.ceil(1.0 / (1.0 - rho) - 1e-9) + 1


class Smoothstep:
    """Symmetric polynomial smoothstep S with S(0)=0, S(1)=1, S ~ t**q near 0.

    Realized as the regularized incomplete beta function I_t(q, q); for
    integer q this is a degree 2q-1 polynomial with C^(q-1) gluing.
    """

    def __init__(self, q: int):
        if q < 2:
            raise ValueError("smoothstep order must be >= 2")
        self.q = q
        self._inv_beta = math.exp(-betaln(q, q))

    def value(self, t):
        t = np.clip(t, 0.0, 1.0)
        return betainc(self.q, self.q, t)

    def d1(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = (t > 0.0) & (t < 1.0)
        tc = np.where(inside, t, 0.5)
        out = self._inv_beta * tc ** (self.q - 1) * (1.0 - tc) ** (self.q - 1)
        return np.where(inside, out, 0.0)

    def d2(self, t):
        t = np.asarray(t, dtype=np.float64)
        inside = (t > 0.0) & (t < 1.0)
        tc = np.where(inside, t, 0.5)
        qm = self.q - 1
        out = self._inv_beta * qm * (
            tc ** (self.q - 2) * (1.0 - tc) ** qm - tc ** qm * (1.0 - tc) ** (self.q - 2)
        )
        return np.where(inside, out, 0.0)


@dataclass(frozen=True)
class Shoulder:
    """1D plateau profile of a distance: 1 for d <= plateau, 0 for d >= support."""

    plateau: float
    support: float
    step: Smoothstep

    def __post_init__(self) -> None:
        if not 0.0 < self.plateau < self.support:
            raise ValueError("need 0 < plateau < support")

    @property
    def _width(self) -> float:
        return self.support - self.plateau

    def _t(self, d):
        return (self.support - np.asarray(d, dtype=np.float64)) / self._width

    def value(self, d):
        return self.step.value(self._t(d))

    def d1(self, d):
        return -self.step.d1(self._t(d)) / self._width

    def d2(self, d):
        return self.step.d2(self._t(d)) / self._width**2


class RadialProfile:
    """psi(x) = shoulder(|x - x0|): the canonical refined test function."""

    def __init__(self, shoulder: Shoulder):
        self.shoulder = shoulder

    def value(self, dx, dy, dz):
        r = np.sqrt(dx**2 + dy**2 + dz**2)
        return self.shoulder.value(r)

    def gradient(self, dx, dy, dz):
        r = np.sqrt(dx**2 + dy**2 + dz**2)
        rr = np.where(r > 0.0, r, 1.0)
        slope = self.shoulder.d1(r) / rr
        return slope * dx, slope * dy, slope * dz

    def laplacian(self, dx, dy, dz):
        r = np.sqrt(dx**2 + dy**2 + dz**2)
        rr = np.where(r > 0.0, r, 1.0)
        # radial Laplacian psi'' + 2 psi'/r; psi' = 0 in a neighborhood of r=0
        return self.shoulder.d2(r) + 2.0 * self.shoulder.d1(r) / rr


class _LatticeAxis:
    """One axis of a shifted-shoulder partition: factor G(x - pos) / D(x).

    D is the sum of the shoulder over the full 1D lattice (spacing-periodic),
    evaluated over enough neighbors to cover the requested domain.
    """

    def __init__(self, shoulder: Shoulder, spacing: float, offset: float, pos: float, halfdomain: float):
        self.shoulder = shoulder
        self.spacing = spacing
        self.offset = offset
        self.pos = pos
        lo = math.floor((-halfdomain - shoulder.support - offset) / spacing)
        hi = math.ceil((halfdomain + shoulder.support - offset) / spacing)
        self._centers = offset + spacing * np.arange(lo, hi + 1)

    def _denominator(self, x):
        x = np.asarray(x, dtype=np.float64)
        d0 = np.zeros_like(x)
        d1 = np.zeros_like(x)
        d2 = np.zeros_like(x)
        for c in self._centers:
            u = x - c
            a = np.abs(u)
            sgn = np.sign(u)
            d0 += self.shoulder.value(a)
            d1 += sgn * self.shoulder.d1(a)
            d2 += self.shoulder.d2(a)
        return d0, d1, d2

    def factor(self, x):
        """Return f, f', f'' for f(x) = G(x - pos)/D(x)."""
        x = np.asarray(x, dtype=np.float64)
        u = x - self.pos
        a = np.abs(u)
        sgn = np.sign(u)
        g0 = self.shoulder.value(a)
        g1 = sgn * self.shoulder.d1(a)
        g2 = self.shoulder.d2(a)
        d0, d1, d2 = self._denominator(x)
        f0 = g0 / d0
        f1 = (g1 * d0 - g0 * d1) / d0**2
        f2 = (g2 * d0 - g0 * d2) / d0**2 - 2.0 * d1 * (g1 * d0 - g0 * d1) / d0**3
        return f0, f1, f2


class ProductPiece:
    """One partition-of-unity piece: parent(x) * prod_i G_i(x_i)/D_i(x_i)."""

    def __init__(self, parent, axes: tuple[_LatticeAxis, _LatticeAxis, _LatticeAxis]):
        self.parent = parent
        self.axes = axes

    def _factors(self, dx, dy, dz):
        return tuple(ax.factor(c) for ax, c in zip(self.axes, (dx, dy, dz)))

    def value(self, dx, dy, dz):
        (f0, _, _), (g0, _, _), (h0, _, _) = self._factors(dx, dy, dz)
        return self.parent.value(dx, dy, dz) * f0 * g0 * h0

    def gradient(self, dx, dy, dz):
        (f0, f1, _), (g0, g1, _), (h0, h1, _) = self._factors(dx, dy, dz)
        p0 = self.parent.value(dx, dy, dz)
        px, py, pz = self.parent.gradient(dx, dy, dz)
        gx = px * f0 * g0 * h0 + p0 * f1 * g0 * h0
        gy = py * f0 * g0 * h0 + p0 * f0 * g1 * h0
        gz = pz * f0 * g0 * h0 + p0 * f0 * g0 * h1
        return gx, gy, gz

    def laplacian(self, dx, dy, dz):
        (f0, f1, f2), (g0, g1, g2), (h0, h1, h2) = self._factors(dx, dy, dz)
        p0 = self.parent.value(dx, dy, dz)
        px, py, pz = self.parent.gradient(dx, dy, dz)
        plap = self.parent.laplacian(dx, dy, dz)
        sep_lap = f2 * g0 * h0 + f0 * g2 * h0 + f0 * g0 * h2
        cross = px * f1 * g0 * h0 + py * f0 * g1 * h0 + pz * f0 * g0 * h1
        return plap * f0 * g0 * h0 + 2.0 * cross + p0 * sep_lap


@dataclass(frozen=True)
class TestFunction:
    """A refined test function evaluated on a grid, with its closed-form profile.

    Profiles are always evaluated in displacement coordinates relative to
    ``anchor``. For canonical (radial) functions the anchor is the center;
    partition pieces keep their parent's anchor and record their own nominal
    center separately, so nested partitions stay in one coordinate frame.
    """

    center: tuple[float, float, float]
    R: float
    rho: float
    C0: float
    q: int
    field: ScalarField
    profile: object = dc_field(repr=False, default=None)
    anchor: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if self.anchor is None:
            object.__setattr__(self, "anchor", self.center)

    @property
    def grid(self) -> GridSpec:
        return self.field.grid

    @property
    def pos(self) -> np.ndarray:
        """Nominal center relative to the anchor (unwrapped)."""
        return np.asarray(self.center) - np.asarray(self.anchor)

    def _displacements(self):
        grid = self.grid
        x = grid.axis_coords()
        dx = grid.wrap_displacement(x - self.anchor[0])[:, None, None]
        dy = grid.wrap_displacement(x - self.anchor[1])[None, :, None]
        dz = grid.wrap_displacement(x - self.anchor[2])[None, None, :]
        return dx, dy, dz

    def gradient_values(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Closed-form gradient sampled on the grid (no spectral ringing)."""
        dx, dy, dz = self._displacements()
        gx, gy, gz = self.profile.gradient(dx, dy, dz)
        shape = self.grid.shape
        return (np.broadcast_to(gx, shape), np.broadcast_to(gy, shape), np.broadcast_to(gz, shape))

    def laplacian_values(self) -> np.ndarray:
        dx, dy, dz = self._displacements()
        return np.broadcast_to(self.profile.laplacian(dx, dy, dz), self.grid.shape)


def evaluate_profile(profile, grid: GridSpec, center) -> ScalarField:
    x = grid.axis_coords()
    dx = grid.wrap_displacement(x - center[0])[:, None, None]
    dy = grid.wrap_displacement(x - center[1])[None, :, None]
    dz = grid.wrap_displacement(x - center[2])[None, None, :]
    values = np.ascontiguousarray(np.broadcast_to(profile.value(dx, dy, dz), grid.shape))
    return ScalarField(grid, values)


def _radial_bound_constants(profile: RadialProfile, R: float, rho: float, n_samples: int = 20000):
    """sup over the shoulder of R|psi'|/psi^rho and R^2|lap psi|/psi^(2rho-1)."""
    sh = profile.shoulder
    r = np.linspace(sh.plateau, sh.support, n_samples, endpoint=False)[1:]
    psi = sh.value(r)
    mask = psi > 0.0
    r, psi = r[mask], psi[mask]
    grad = np.abs(sh.d1(r))
    lap = np.abs(sh.d2(r) + 2.0 * sh.d1(r) / r)
    c_grad = float(np.max(R * grad / psi**rho))
    c_lap = float(np.max(R**2 * lap / psi ** (2.0 * rho - 1.0)))
    return c_grad, c_lap


def _sampled_bound_constants(tf: TestFunction, n_per_axis: int = 64):
    """Measure the bound ratios on a dense sample of the support cube."""
    prof = tf.profile
    pos = tf.pos
    half = 2.0 * tf.R * 1.02
    pts = np.linspace(-half, half, n_per_axis)
    dx = (pos[0] + pts)[:, None, None]
    dy = (pos[1] + pts)[None, :, None]
    dz = (pos[2] + pts)[None, None, :]
    psi = np.broadcast_to(prof.value(dx, dy, dz), (n_per_axis,) * 3)
    mask = psi > 1e-13
    if not np.any(mask):
        return 0.0, 0.0
    gx, gy, gz = prof.gradient(dx, dy, dz)
    grad = np.broadcast_to(np.sqrt(gx**2 + gy**2 + gz**2), psi.shape)[mask]
    lap = np.abs(np.broadcast_to(prof.laplacian(dx, dy, dz), psi.shape))[mask]
    pm = psi[mask]
    c_grad = float(np.max(tf.R * grad / pm**tf.rho))
    c_lap = float(np.max(tf.R**2 * lap / pm ** (2.0 * tf.rho - 1.0)))
    return c_grad, c_lap


def make_refined(grid: GridSpec, center, R: float, rho: float = 0.8,
                 C0_target: float = 120.0) -> TestFunction:
    """Canonical refined test function: radial smoothstep, plateau B(x0, R).

    Raises ScaleTooLarge if the support plus the assumption-check margin does
    not fit in half the box, and BoundViolation if the measured constant
    exceeds ``C0_target``.
    """
    if not 0.75 < rho < 1.0:
        raise ValueError("rho must lie in (3/4, 1)")
    if R <= 0:
        raise ValueError("R must be positive")
    if 2.0 * R + R ** (2.0 / 3.0) >= grid.length / 2.0:
        raise ScaleTooLarge(
            f"2R + R^(2/3) = {2 * R + R ** (2 / 3):.4g} must be < L/2 = {grid.length / 2:.4g}"
        )
    q = profile_order(rho)
    profile = RadialProfile(Shoulder(R, 2.0 * R, Smoothstep(q)))
    c_grad, c_lap = _radial_bound_constants(profile, R, rho)
    c0 = max(c_grad, c_lap)
    if c0 > C0_target:
        raise BoundViolation(
            f"measured C0 = {c0:.4g} exceeds target {C0_target:.4g}; raise C0_target or q"
        )
    fld = evaluate_profile(profile, grid, center)
    return TestFunction(tuple(float(c) for c in center), float(R), float(rho), c0, q, fld, profile)


def verify_bounds(tf: TestFunction) -> tuple[float, float, bool]:
    """Measure the refined-bound constants; ok iff both <= tf.C0 (small slack)."""
    if isinstance(tf.profile, RadialProfile):
        c_grad, c_lap = _radial_bound_constants(tf.profile, tf.R, tf.rho)
    else:
        c_grad, c_lap = _sampled_bound_constants(tf)
    ok = max(c_grad, c_lap) <= tf.C0 * (1.0 + 1e-9)
    return c_grad, c_lap, ok


@dataclass(frozen=True)
class TemporalCutoff:
    """eta(t): 0 on [0, T/3], 1 on [2T/3, T], smoothstep in between."""

    T: float
    order: int = 6

    def __post_init__(self) -> None:
        if not self.T > 0:
            raise ValueError("T must be positive")
        object.__setattr__(self, "_step", Smoothstep(self.order))

    def value(self, t):
        s = (np.asarray(t, dtype=np.float64) - self.T / 3.0) / (self.T / 3.0)
        return self._step.value(s)

    def derivative(self, t):
        s = (np.asarray(t, dtype=np.float64) - self.T / 3.0) / (self.T / 3.0)
        inside = (s > 0.0) & (s < 1.0)
        return np.where(inside, self._step.d1(np.clip(s, 0.0, 1.0)) * 3.0 / self.T, 0.0)


def temporal_cutoff(T: float, order: int = 6) -> TemporalCutoff:
    return TemporalCutoff(T, order)
