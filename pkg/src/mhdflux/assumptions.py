"""Estimators for the coherence, smoothness, localization and modulation constants.

Nothing here is proved; each routine measures the best constant the data
admits, so a run can be certified as inside or outside the hypothesis set of
the concentration estimate. Maxima are taken over seeded random samples.
Sampling draws plain uniforms sequentially from one PCG64 stream, which makes
the estimate with n samples a prefix of the estimate with more: adding
samples never lowers a max and never reshuffles earlier ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .cutoffs import TestFunction
from .grid import GridSpec
from .solver import SnapshotSeries, _spectra

__all__ = [
    "EstimatorResult",
    "LocalizationResult",
    "AssumptionReport",
    "interpolate_vector",
    "interpolate_scalar",
    "gradient_norm",
    "gradient_rms",
    "sin_angle",
    "coherence_constant",
    "current_smoothness",
    "ball_integral",
    "enstrophy_time_integral",
    "localization_check",
    "modulation_check",
    "check_all",
]

SKIP_REL_THRESHOLD = 1e-10


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times)
    w[0] = 0.5 * (times[1] - times[0])
    w[-1] = 0.5 * (times[-1] - times[-2])
    w[1:-1] = 0.5 * (times[2:] - times[:-2])
    return w


def interpolate_scalar(grid: GridSpec, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Trilinear periodic interpolation of a scalar array at (m, 3) points."""
    pts = np.atleast_2d(points) / grid.dx
    i0 = np.floor(pts).astype(np.int64)
    frac = pts - i0
    out = np.zeros(len(pts))
    for cx in (0, 1):
        wx = frac[:, 0] if cx else 1.0 - frac[:, 0]
        ix = (i0[:, 0] + cx) % grid.n
        for cy in (0, 1):
            wy = frac[:, 1] if cy else 1.0 - frac[:, 1]
            iy = (i0[:, 1] + cy) % grid.n
            for cz in (0, 1):
                wz = frac[:, 2] if cz else 1.0 - frac[:, 2]
                iz = (i0[:, 2] + cz) % grid.n
                out += wx * wy * wz * values[ix, iy, iz]
    return out


def interpolate_vector(grid: GridSpec, comps, points: np.ndarray) -> np.ndarray:
    """Trilinear periodic interpolation of three components; returns (m, 3)."""
    return np.stack([interpolate_scalar(grid, c, points) for c in comps], axis=-1)


def gradient_norm(grid: GridSpec, comps) -> np.ndarray:
    """Pointwise Frobenius norm of the gradient of a vector field."""
    kx, ky, kz, _, _ = _spectra(grid.n, grid.length)
    acc = np.zeros(grid.shape)
    for c in comps:
        spec = np.fft.rfftn(c)
        for kk in (kx, ky, kz):
            acc += np.fft.irfftn(1j * kk * spec, s=grid.shape, axes=(0, 1, 2)) ** 2
    return np.sqrt(acc)


def gradient_rms(series: SnapshotSeries, which: str = "u") -> float:
    """Space-time rms of |grad u| or |grad b| (snapshot mean in time)."""
    acc = 0.0
    for k in range(len(series)):
        st = series.states[k]
        comps = st.u.components if which == "u" else st.b.components
        acc += float(np.mean(gradient_norm(series.grid, comps) ** 2))
    return float(np.sqrt(acc / len(series)))


def sin_angle(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """|sin| of the angle between rows of v and w (assumed nonzero)."""
    cross = np.cross(v, w)
    num = np.linalg.norm(cross, axis=-1)
    den = np.linalg.norm(v, axis=-1) * np.linalg.norm(w, axis=-1)
    return num / den


@dataclass(frozen=True)
class EstimatorResult:
    """A sampled max-estimate with its bookkeeping."""

    value: float
    n_samples: int
    n_used: int
    n_skipped: int
    vacuous: bool
    M: float
    r_max: float

    def to_dict(self) -> dict:
        return {
            "value": self.value, "n_samples": self.n_samples,
            "n_used": self.n_used, "n_skipped": self.n_skipped,
            "vacuous": self.vacuous, "M": self.M, "r_max": self.r_max,
        }


def _draw_samples(rng: np.random.Generator, n: int):
    """(n, 7) uniform block; sequential stream, so prefixes are stable."""
    return rng.random(7 * n).reshape(n, 7)


def _sample_points(row, center, ball_radius, r_max):
    """Decode one uniform row into (x, y-displacement)."""
    rx = ball_radius * row[1] ** (1.0 / 3.0)
    cx = 2.0 * row[2] - 1.0
    px = 2.0 * np.pi * row[3]
    sx = np.sqrt(max(0.0, 1.0 - cx * cx))
    x = center + rx * np.array([sx * np.cos(px), sx * np.sin(px), cx])
    ry = r_max * row[4] ** (1.0 / 3.0)
    cy = 2.0 * row[5] - 1.0
    py = 2.0 * np.pi * row[6]
    sy = np.sqrt(max(0.0, 1.0 - cy * cy))
    y = ry * np.array([sy * np.cos(py), sy * np.sin(py), cy])
    return x, y


def _holder_max(series: SnapshotSeries, field_of, filter_norm_of, ratio_fn,
                M, r_max, n_samples, seed, center, ball_radius):
    """Shared max-over-samples loop for the coherence/smoothness estimators.

    ``field_of(k)`` gives the sampled vector components at snapshot k,
    ``filter_norm_of(k)`` the gradient-norm array for the intensity filter,
    ``ratio_fn(va, vb, dist)`` the pointwise ratio or None to skip.
    """
    grid = series.grid
    rng = np.random.default_rng(seed)
    rows = _draw_samples(rng, n_samples)
    norm_cache: dict[int, np.ndarray] = {}
    best = 0.0
    n_used = 0
    n_skipped = 0
    for row in rows:
        k = min(int(row[0] * len(series)), len(series) - 1)
        x, y = _sample_points(row, center, ball_radius, r_max)
        dist = float(np.linalg.norm(y))
        if dist == 0.0:
            continue
        if k not in norm_cache:
            norm_cache[k] = filter_norm_of(k)
        gmag = interpolate_scalar(grid, norm_cache[k], x[None, :])[0]
        if gmag <= M:
            continue
        comps = field_of(k)
        pair = interpolate_vector(grid, comps, np.stack([x, x + y]))
        r = ratio_fn(pair[0], pair[1], dist)
        if r is None:
            n_skipped += 1
            continue
        n_used += 1
        best = max(best, r)
    return best, n_used, n_skipped


def coherence_constant(series: SnapshotSeries, M: float | None = None,
                       r_max: float = 1.0, n_samples: int = 4000, seed: int = 0,
                       center=None, ball_radius: float | None = None) -> EstimatorResult:
    """Best constant in |sin angle(omega(x+y), omega(x))| <= C |y|^(1/2).

    Samples (t, x, y) with x in the ball of ``ball_radius`` about ``center``
    and |y| < r_max, keeping only points where |grad u| exceeds M (default:
    twice the space-time rms). Near-zero vorticity pairs are skipped and
    counted; if no sample passes the filter the estimate is vacuous.
    """
    grid = series.grid
    if center is None:
        center = np.full(3, grid.length / 2.0)
    center = np.asarray(center, dtype=np.float64)
    if ball_radius is None:
        ball_radius = grid.length / 4.0
    if M is None:
        M = 2.0 * gradient_rms(series, "u")
    omega_rms_sq = np.mean([
        np.mean(sum(c**2 for c in series.omega(k).components))
        for k in range(len(series))
    ])
    floor = SKIP_REL_THRESHOLD * float(np.sqrt(omega_rms_sq))

    def ratio(va, vb, dist):
        na, nb = np.linalg.norm(va), np.linalg.norm(vb)
        if na < floor or nb < floor:
            return None
        return float(sin_angle(va[None, :], vb[None, :])[0]) / np.sqrt(dist)

    best, n_used, n_skipped = _holder_max(
        series, lambda k: series.omega(k).components,
        lambda k: gradient_norm(grid, series.states[k].u.components),
        ratio, M, r_max, n_samples, seed, center, ball_radius,
    )
    return EstimatorResult(best, n_samples, n_used, n_skipped,
                           vacuous=(n_used == 0 and n_skipped == 0),
                           M=float(M), r_max=float(r_max))


def current_smoothness(series: SnapshotSeries, M: float | None = None,
                       r_max: float = 1.0, n_samples: int = 4000, seed: int = 0,
                       center=None, ball_radius: float | None = None) -> EstimatorResult:
    """Best constant in |j(x+y) - j(x)| <= C |j(x+y)| |y|^(1/2).

    The assumption as stated holds iff the returned max ratio is <= 1. The
    ratio is homogeneous of degree zero in b, so it is invariant under
    rescaling the magnetic field. Filter: |grad b| > M (default 2x rms).
    """
    grid = series.grid
    if center is None:
        center = np.full(3, grid.length / 2.0)
    center = np.asarray(center, dtype=np.float64)
    if ball_radius is None:
        ball_radius = grid.length / 4.0
    if M is None:
        M = 2.0 * gradient_rms(series, "b")
    j_rms_sq = np.mean([
        np.mean(sum(c**2 for c in series.j(k).components))
        for k in range(len(series))
    ])
    floor = SKIP_REL_THRESHOLD * float(np.sqrt(j_rms_sq))

    def ratio(va, vb, dist):
        nb = np.linalg.norm(vb)
        if nb < floor:
            return None
        return float(np.linalg.norm(vb - va)) / (nb * np.sqrt(dist))

    best, n_used, n_skipped = _holder_max(
        series, lambda k: series.j(k).components,
        lambda k: gradient_norm(grid, series.states[k].b.components),
        ratio, M, r_max, n_samples, seed, center, ball_radius,
    )
    return EstimatorResult(best, n_samples, n_used, n_skipped,
                           vacuous=(n_used == 0 and n_skipped == 0),
                           M=float(M), r_max=float(r_max))


def enstrophy_time_integral(series: SnapshotSeries) -> np.ndarray:
    """A(x) = int_0^T (|omega|^2 + |j|^2) dt by trapezoid, as an array."""
    w = _trapezoid_weights(series.times)
    acc = np.zeros(series.grid.shape)
    for k in range(len(series)):
        om2 = sum(c**2 for c in series.omega(k).components)
        j2 = sum(c**2 for c in series.j(k).components)
        acc += w[k] * (om2 + j2)
    return acc


def ball_integral(grid: GridSpec, density: np.ndarray, center, radius: float) -> float:
    """Integral of ``density`` over the periodic ball B(center, radius)."""
    X, Y, Z = grid.meshgrid()
    c = np.asarray(center, dtype=np.float64)
    half = 0.5 * grid.length
    dx_ = (X - c[0] + half) % grid.length - half
    dy_ = (Y - c[1] + half) % grid.length - half
    dz_ = (Z - c[2] + half) % grid.length - half
    mask = dx_**2 + dy_**2 + dz_**2 <= radius**2
    return float(grid.dx**3 * np.sum(density[mask]))


@dataclass(frozen=True)
class LocalizationResult:
    value: float
    argmax: tuple
    radius: float
    n_centers: int
    threshold: float | None
    satisfied: bool | None

    def to_dict(self) -> dict:
        return {
            "value": self.value, "argmax": list(self.argmax),
            "radius": self.radius, "n_centers": self.n_centers,
            "threshold": self.threshold, "satisfied": self.satisfied,
        }


def localization_check(series: SnapshotSeries, beta: float, sigma0: float,
                       n_centers: int = 5, center=None, R0: float | None = None,
                       radius: float | None = None,
                       C2: float | None = None) -> LocalizationResult:
    """Max space-time enstrophy ball integral over a lattice of centers.

    The ball radius defaults to 2 sigma0/beta + (sigma0/beta)^(2/3); centers
    run over an n_centers^3 lattice inside the ball of 2 R0 about ``center``.
    When C2 is given, reports whether the max stays below 1/C2.
    """
    grid = series.grid
    if center is None:
        center = np.full(3, grid.length / 2.0)
    center = np.asarray(center, dtype=np.float64)
    if R0 is None:
        R0 = grid.length / 8.0
    s = sigma0 / beta
    if radius is None:
        radius = 2.0 * s + s ** (2.0 / 3.0)
    density = enstrophy_time_integral(series)

    # the unshifted center always participates, whatever the lattice prunes
    best = ball_integral(grid, density, center, radius)
    argmax = tuple(float(c) for c in center)
    ticks = np.linspace(-2.0 * R0, 2.0 * R0, n_centers)
    for ox in ticks:
        for oy in ticks:
            for oz in ticks:
                if ox**2 + oy**2 + oz**2 > (2.0 * R0) ** 2 + 1e-12:
                    continue
                y = center + np.array([ox, oy, oz])
                v = ball_integral(grid, density, y, radius)
                if v > best:
                    best = v
                    argmax = tuple(float(c) for c in y)
    threshold = None if C2 is None else 1.0 / C2
    satisfied = None if C2 is None else bool(best < threshold)
    return LocalizationResult(float(best), argmax, float(radius),
                              n_centers, threshold, satisfied)


def modulation_check(series: SnapshotSeries, psi0: TestFunction) -> tuple[float, float]:
    """(final / sup over snapshots) of the psi0-weighted enstrophies.

    The persistent-modulation hypothesis asks for both ratios >= 1/2: the
    enstrophy present at the final time should be comparable to its running
    peak, i.e. the cascade has not died out before the window closes.
    """
    grid = series.grid
    psi = psi0.field.values
    om_w = []
    j_w = []
    for k in range(len(series)):
        om2 = sum(c**2 for c in series.omega(k).components)
        j2 = sum(c**2 for c in series.j(k).components)
        om_w.append(float(grid.dx**3 * np.sum(om2 * psi)))
        j_w.append(float(grid.dx**3 * np.sum(j2 * psi)))
    sup_o = max(om_w)
    sup_j = max(j_w)
    ro = om_w[-1] / sup_o if sup_o > 0.0 else 1.0
    rj = j_w[-1] / sup_j if sup_j > 0.0 else 1.0
    return ro, rj


@dataclass
class AssumptionReport:
    """Estimated constants for the four hypotheses, with verdicts."""

    coherence: EstimatorResult
    smoothness: EstimatorResult
    localization: LocalizationResult
    modulation_ratio_omega: float
    modulation_ratio_j: float
    verdicts: dict = dc_field(default_factory=dict)

    @property
    def C1_estimate(self) -> float:
        return self.coherence.value

    @property
    def smoothness_max_ratio(self) -> float:
        return self.smoothness.value

    def to_dict(self) -> dict:
        return {
            "coherence": self.coherence.to_dict(),
            "smoothness": self.smoothness.to_dict(),
            "localization": self.localization.to_dict(),
            "modulation_ratio_omega": self.modulation_ratio_omega,
            "modulation_ratio_j": self.modulation_ratio_j,
            "verdicts": dict(self.verdicts),
        }


def check_all(series: SnapshotSeries, psi0: TestFunction, beta: float, sigma0: float,
              n_samples: int = 4000, n_centers: int = 5, seed: int = 0,
              C1_limit: float | None = None, C2: float | None = None) -> AssumptionReport:
    """Run all four estimators around psi0's center and collect verdicts.

    ``C1_limit`` is the user's acceptable coherence constant (the hypothesis
    leaves it free, so without a limit the verdict is just "finite").
    """
    center = psi0.pos
    R0 = psi0.R
    s = sigma0 / beta
    r_max = 2.0 * s + s ** (2.0 / 3.0)
    ball = 2.0 * R0 + R0 ** (2.0 / 3.0)
    coh = coherence_constant(series, r_max=r_max, n_samples=n_samples,
                             seed=seed, center=center, ball_radius=ball)
    smo = current_smoothness(series, r_max=r_max, n_samples=n_samples,
                             seed=seed + 1, center=center, ball_radius=ball)
    loc = localization_check(series, beta, sigma0, n_centers=n_centers,
                             center=center, R0=R0, C2=C2)
    ro, rj = modulation_check(series, psi0)
    verdicts = {
        "coherence": coh.vacuous or (bool(np.isfinite(coh.value))
                                     and (C1_limit is None or coh.value <= C1_limit)),
        "smoothness": smo.vacuous or smo.value <= 1.0,
        "localization": loc.satisfied if loc.satisfied is not None else True,
        "modulation": bool(ro >= 0.5 and rj >= 0.5),
    }
    return AssumptionReport(coherence=coh, smoothness=smo, localization=loc,
                            modulation_ratio_omega=ro, modulation_ratio_j=rj,
                            verdicts=verdicts)
