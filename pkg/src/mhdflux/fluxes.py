"""Enstrophy-flux diagnostics: densities, decompositions, scales, theorem check.

Everything here reduces to weighted spatial integrals of a handful of
time-collapsed density fields. For a snapshot series on (0, T) with temporal
cutoff eta, one pass over the snapshots accumulates (trapezoid in time):

  flux density      phi  = -int [(u.grad)omega.omega + (u.grad)j.j] eta dt
  transport vector  V    =  int (|omega|^2+|j|^2)/2 eta u dt
  term densities    for the heat, stretching, cross and exchange terms
  scale densities   for e0, E0, P0 (eta powers are separable from psi powers)

after which ensemble averages, the dynamic decomposition, the Kraichnan-type
scale and the concentration-theorem ratios are all integrals of these
densities against test functions (or their closed-form grad/Laplacian).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .cutoffs import TemporalCutoff, TestFunction
from .ensembles import Ensemble, canonical_ensemble
from .errors import (
    DegeneratePalinstrophy,
    MismatchedDiffusion,
    ScaleOutOfRange,
    TooFewSnapshots,
)
from .grid import GridSpec, ScalarField, volume_integral
from .solver import SnapshotSeries, _spectra

__all__ = [
    "CollapsedDensities",
    "ScaleQuantities",
    "TermBreakdown",
    "FluxRow",
    "LocalityRow",
    "FluxReport",
    "collapse_series",
    "flux_density",
    "surface_flux",
    "term_decomposition",
    "integral_scale_quantities",
    "kraichnan_scale",
    "verify_theorem",
    "locality_ratios",
]

MIN_SNAPSHOTS = 12


def _trapezoid_weights(times: np.ndarray) -> np.ndarray:
    w = np.zeros_like(times)
    w[0] = 0.5 * (times[1] - times[0])
    w[-1] = 0.5 * (times[-1] - times[-2])
    w[1:-1] = 0.5 * (times[2:] - times[:-2])
    return w


def _vector_gradients(grid: GridSpec, comps):
    """d comps[b] / d x_a as grads[a][b], via spectral derivatives."""
    kx, ky, kz, _, _ = _spectra(grid.n, grid.length)
    out = [[None] * 3 for _ in range(3)]
    for b, c in enumerate(comps):
        spec = np.fft.rfftn(c)
        out[0][b] = np.fft.irfftn(1j * kx * spec, s=grid.shape, axes=(0, 1, 2))
        out[1][b] = np.fft.irfftn(1j * ky * spec, s=grid.shape, axes=(0, 1, 2))
        out[2][b] = np.fft.irfftn(1j * kz * spec, s=grid.shape, axes=(0, 1, 2))
    return out


def _advective(vec, grads, weight):
    """sum_ab vec[a] * grads[a][b] * weight[b]."""
    acc = np.zeros_like(vec[0])
    for a in range(3):
        for b in range(3):
            acc += vec[a] * grads[a][b] * weight[b]
    return acc


@dataclass
class CollapsedDensities:
    """Time-collapsed spatial densities for one series + temporal cutoff."""

    grid: GridSpec
    T: float
    times: np.ndarray
    rho: float
    # flux densities (eta-weighted), per equation
    phi_omega: np.ndarray
    phi_j: np.ndarray
    phi_total_noeta: np.ndarray
    # transport vectors int (1/2)|.|^2 eta u dt, per equation
    v_omega: list
    v_j: list
    # heat-term pieces: int (1/2)|.|^2 eta' dt and int (1/2)|.|^2 eta dt
    heat_s_omega: np.ndarray
    heat_s_j: np.ndarray
    heat_lap_omega: np.ndarray
    heat_lap_j: np.ndarray
    # dissipation int |grad .|^2 eta dt and final-time (1/2)|.(T)|^2
    diss_omega: np.ndarray
    diss_j: np.ndarray
    final_omega: np.ndarray
    final_j: np.ndarray
    # nonlinear term densities (eta-weighted)
    n1_omega: np.ndarray
    n1_j: np.ndarray
    l_omega: np.ndarray
    l_j: np.ndarray
    n2_omega: np.ndarray
    n2_j: np.ndarray
    x_j: np.ndarray
    # scale-quantity densities: eta powers folded in, psi powers applied later
    e_dens: np.ndarray
    E_dens: np.ndarray
    # per-snapshot weighted enstrophies for sup_t quantities
    omega2_psi_trace: None = None
    enstrophy_snapshots: list = dc_field(default_factory=list)

    @property
    def phi(self) -> np.ndarray:
        return self.phi_omega + self.phi_j

    @property
    def p_dens(self) -> np.ndarray:
        """Nonnegative density of the palinstrophy terms (final + dissipation)."""
        return self.final_omega + self.final_j + self.diss_omega + self.diss_j


def collapse_series(series: SnapshotSeries, eta: TemporalCutoff, rho: float,
                    keep_snapshots: bool = True) -> CollapsedDensities:
    """One pass over the snapshots accumulating every collapsed density."""
    if len(series) < MIN_SNAPSHOTS:
        raise TooFewSnapshots(f"need >= {MIN_SNAPSHOTS} snapshots, got {len(series)}")
    grid = series.grid
    times = series.times
    w = _trapezoid_weights(times)
    eta_v = np.asarray(eta.value(times), dtype=np.float64)
    eta_d = np.asarray(eta.derivative(times), dtype=np.float64)
    shape = grid.shape

    z = lambda: np.zeros(shape)
    acc = {name: z() for name in (
        "phi_omega", "phi_j", "phi_total_noeta",
        "heat_s_omega", "heat_s_j", "heat_lap_omega", "heat_lap_j",
        "diss_omega", "diss_j",
        "n1_omega", "n1_j", "l_omega", "l_j", "n2_omega", "n2_j", "x_j",
        "e_dens", "E_dens",
    )}
    v_omega = [z(), z(), z()]
    v_j = [z(), z(), z()]
    enstrophy_snapshots = []

    for k in range(len(series)):
        st = series.states[k]
        u = st.u.components
        b = st.b.components
        om = series.omega(k).components
        jc = series.j(k).components
        gu = _vector_gradients(grid, u)
        gb = _vector_gradients(grid, b)
        go = _vector_gradients(grid, om)
        gj = _vector_gradients(grid, jc)

        om2 = om[0] ** 2 + om[1] ** 2 + om[2] ** 2
        j2 = jc[0] ** 2 + jc[1] ** 2 + jc[2] ** 2
        if keep_snapshots:
            enstrophy_snapshots.append((om2, j2))

        we = w[k] * eta_v[k]
        wd = w[k] * eta_d[k]

        adv_o = _advective(u, go, om)
        adv_j = _advective(u, gj, jc)
        acc["phi_omega"] += -we * adv_o
        acc["phi_j"] += -we * adv_j
        acc["phi_total_noeta"] += -w[k] * (adv_o + adv_j)

        for a in range(3):
            v_omega[a] += we * 0.5 * om2 * u[a]
            v_j[a] += we * 0.5 * j2 * u[a]

        acc["heat_s_omega"] += wd * 0.5 * om2
        acc["heat_s_j"] += wd * 0.5 * j2
        acc["heat_lap_omega"] += we * 0.5 * om2
        acc["heat_lap_j"] += we * 0.5 * j2

        acc["diss_omega"] += we * sum(go[a][c] ** 2 for a in range(3) for c in range(3))
        acc["diss_j"] += we * sum(gj[a][c] ** 2 for a in range(3) for c in range(3))

        acc["n1_omega"] += we * _advective(om, gu, om)
        acc["n1_j"] += we * _advective(jc, gu, jc)
        acc["l_omega"] += we * _advective(b, gj, om)
        acc["l_j"] += we * _advective(b, go, jc)
        acc["n2_omega"] += we * _advective(jc, gb, om)
        acc["n2_j"] += we * _advective(om, gb, jc)

        # 2 sum_l (grad b_l x grad u_l) . j  (the curl-of-induction exchange term)
        xw = np.zeros(shape)
        for l in range(3):
            xw += (gb[1][l] * gu[2][l] - gb[2][l] * gu[1][l]) * jc[0]
            xw += (gb[2][l] * gu[0][l] - gb[0][l] * gu[2][l]) * jc[1]
            xw += (gb[0][l] * gu[1][l] - gb[1][l] * gu[0][l]) * jc[2]
        acc["x_j"] += we * 2.0 * xw

        u2b2 = sum(c**2 for c in u) + sum(c**2 for c in b)
        acc["e_dens"] += w[k] * eta_v[k] ** (4.0 * rho - 3.0) * 0.5 * u2b2
        acc["E_dens"] += w[k] * eta_v[k] ** (2.0 * rho - 1.0) * (om2 + j2)

    last = len(series) - 1
    om_f = series.omega(last).components
    j_f = series.j(last).components
    final_omega = 0.5 * sum(c**2 for c in om_f)
    final_j = 0.5 * sum(c**2 for c in j_f)

    return CollapsedDensities(
        grid=grid, T=series.T, times=times, rho=rho,
        v_omega=v_omega, v_j=v_j,
        final_omega=final_omega, final_j=final_j,
        enstrophy_snapshots=enstrophy_snapshots,
        **acc,
    )


def flux_density(series: SnapshotSeries, eta: TemporalCutoff) -> ScalarField:
    """phi = -int [(u.grad)omega.omega + (u.grad)j.j] eta dt as a field."""
    if len(series) < MIN_SNAPSHOTS:
        raise TooFewSnapshots(f"need >= {MIN_SNAPSHOTS} snapshots, got {len(series)}")
    grid = series.grid
    w = _trapezoid_weights(series.times)
    eta_v = np.asarray(eta.value(series.times), dtype=np.float64)
    acc = np.zeros(grid.shape)
    for k in range(len(series)):
        u = series.states[k].u.components
        go = _vector_gradients(grid, series.omega(k).components)
        gj = _vector_gradients(grid, series.j(k).components)
        adv = _advective(u, go, series.omega(k).components) + _advective(
            u, gj, series.j(k).components
        )
        acc += -w[k] * eta_v[k] * adv
    return ScalarField(grid, acc)


def surface_flux(series: SnapshotSeries, tf: TestFunction, eta: TemporalCutoff) -> float:
    """Transport form: int int (1/2)(|omega|^2+|j|^2) u . grad(psi eta) dx dt."""
    grid = series.grid
    w = _trapezoid_weights(series.times)
    eta_v = np.asarray(eta.value(series.times), dtype=np.float64)
    gpsi = tf.gradient_values()
    total = 0.0
    for k in range(len(series)):
        u = series.states[k].u.components
        om2 = sum(c**2 for c in series.omega(k).components)
        j2 = sum(c**2 for c in series.j(k).components)
        integrand = 0.5 * (om2 + j2) * sum(u[a] * gpsi[a] for a in range(3))
        total += w[k] * eta_v[k] * volume_integral(grid, integrand)
    return total


@dataclass(frozen=True)
class TermBreakdown:
    """Every term of the dynamic flux decomposition, plus the localized scales."""

    lhs_omega: float
    lhs_j: float
    final_omega: float
    final_j: float
    diss_omega: float
    diss_j: float
    H_omega: float
    H_j: float
    N1_omega: float
    N1_j: float
    L_omega: float
    L_j: float
    N2_omega: float
    N2_j: float
    X: float
    e_local: float
    E_local: float
    P_local: float
    P_tilde_local: float
    identity_residual: float


def _member_terms(cd: CollapsedDensities, tf: TestFunction, nu: float):
    """Integrals of the collapsed densities against one test function."""
    grid = cd.grid
    psi = tf.field.values
    lap = tf.laplacian_values()
    I = lambda arr: volume_integral(grid, arr)

    out = {}
    out["final_omega"] = I(cd.final_omega * psi)
    out["final_j"] = I(cd.final_j * psi)
    out["diss_omega"] = nu * I(cd.diss_omega * psi)
    out["diss_j"] = nu * I(cd.diss_j * psi)
    out["H_omega"] = -(I(cd.heat_s_omega * psi) + nu * I(cd.heat_lap_omega * lap))
    out["H_j"] = -(I(cd.heat_s_j * psi) + nu * I(cd.heat_lap_j * lap))
    out["N1_omega"] = -I(cd.n1_omega * psi)
    out["N1_j"] = -I(cd.n1_j * psi)
    out["L_omega"] = -I(cd.l_omega * psi)
    out["L_j"] = -I(cd.l_j * psi)
    out["N2_omega"] = I(cd.n2_omega * psi)
    out["N2_j"] = I(cd.n2_j * psi)
    out["X"] = -I(cd.x_j * psi)
    return out


def term_decomposition(series: SnapshotSeries, tf: TestFunction, eta: TemporalCutoff,
                       nu: float, eta_m: float,
                       cd: CollapsedDensities | None = None) -> TermBreakdown:
    """All terms of the omega- and j-equation flux identities, by quadrature."""
    if abs(nu - eta_m) > 1e-14 * max(nu, eta_m):
        raise MismatchedDiffusion("decomposition identity requires nu == eta_m")
    if cd is None:
        cd = collapse_series(series, eta, tf.rho)
    grid = cd.grid
    psi = tf.field.values
    gpsi = tf.gradient_values()
    I = lambda arr: volume_integral(grid, arr)

    lhs_omega = sum(I(cd.v_omega[a] * gpsi[a]) for a in range(3))
    lhs_j = sum(I(cd.v_j[a] * gpsi[a]) for a in range(3))
    t = _member_terms(cd, tf, nu)

    rho = tf.rho
    e_local = I(cd.e_dens * psi ** (4.0 * rho - 3.0))
    E_local = I(cd.E_dens * psi ** (2.0 * rho - 1.0))
    p_final = t["final_omega"] + t["final_j"]
    p_diss = I((cd.diss_omega + cd.diss_j) * psi)
    P_local = p_final + p_diss
    sup_enstrophy = max(
        I((om2 + j2) * psi) for om2, j2 in cd.enstrophy_snapshots
    ) if cd.enstrophy_snapshots else 0.0
    P_tilde_local = 0.5 * sup_enstrophy + p_diss

    rhs_omega = (t["final_omega"] + t["diss_omega"] + t["H_omega"]
                 + t["N1_omega"] + t["L_omega"] + t["N2_omega"])
    rhs_j = (t["final_j"] + t["diss_j"] + t["H_j"]
             + t["N1_j"] + t["L_j"] + t["N2_j"] + t["X"])
    magnitudes = [abs(v) for v in (lhs_omega, lhs_j, *t.values())]
    scale = max(max(magnitudes), 1e-300)
    residual = (abs(lhs_omega - rhs_omega) + abs(lhs_j - rhs_j)) / scale

    return TermBreakdown(
        lhs_omega=lhs_omega, lhs_j=lhs_j,
        e_local=e_local, E_local=E_local,
        P_local=P_local, P_tilde_local=P_tilde_local,
        identity_residual=residual,
        **{k: v for k, v in t.items()},
    )


@dataclass(frozen=True)
class ScaleQuantities:
    """Integral-scale energy, enstrophy, palinstrophy and the Kraichnan scale."""

    e0: float
    E0: float
    P0: float
    sigma0: float


def integral_scale_quantities(series: SnapshotSeries, psi0: TestFunction,
                              eta: TemporalCutoff, rho: float | None = None,
                              cd: CollapsedDensities | None = None) -> ScaleQuantities:
    if rho is None:
        rho = psi0.rho
    if cd is None:
        cd = collapse_series(series, eta, rho, keep_snapshots=False)
    grid = cd.grid
    psi = psi0.field.values
    norm = 1.0 / (cd.T * psi0.R**3)
    e0 = norm * volume_integral(grid, cd.e_dens * psi ** (4.0 * rho - 3.0))
    E0 = norm * volume_integral(grid, cd.E_dens * psi ** (2.0 * rho - 1.0))
    P0 = norm * volume_integral(grid, cd.p_dens * psi)
    if P0 <= 0.0:
        raise DegeneratePalinstrophy("palinstrophy P0 is zero; sigma0 undefined")
    q = ScaleQuantities(e0=e0, E0=E0, P0=P0, sigma0=0.0)
    object.__setattr__(q, "sigma0", kraichnan_scale(q))
    return q


def kraichnan_scale(q: ScaleQuantities) -> float:
    """sigma0 = max{ (E0/P0)^(1/2), (e0/P0)^(1/4) }."""
    if q.P0 <= 0.0:
        raise DegeneratePalinstrophy("palinstrophy must be positive")
    return max((q.E0 / q.P0) ** 0.5, (q.e0 / q.P0) ** 0.25)


@dataclass(frozen=True)
class FluxRow:
    R: float
    ensemble_index: int
    jitter_seed: int | None
    n_members: int
    phi_avg: float
    psi_avg: float
    ratio_phi_over_P0: float
    terms: dict


@dataclass(frozen=True)
class LocalityRow:
    r: float
    R: float
    psi_ratio: float
    scale_ratio_cubed: float
    lower: float
    upper: float
    within: bool


@dataclass
class FluxReport:
    quantities: ScaleQuantities
    beta: float
    R0: float
    K1: int
    K2: int
    rows: list
    K_star: float
    all_ratios_positive: bool
    scales: list
    locality: list = dc_field(default_factory=list)
    warnings: list = dc_field(default_factory=list)

    def psi_avg_by_scale(self) -> dict:
        """Mean <Psi>_R over the ensembles at each scale."""
        out: dict[float, list] = {}
        for row in self.rows:
            out.setdefault(row.R, []).append(row.psi_avg)
        return {R: float(np.mean(v)) for R, v in out.items()}

    def to_dict(self) -> dict:
        return {
            "quantities": {
                "e0": self.quantities.e0,
                "E0": self.quantities.E0,
                "P0": self.quantities.P0,
                "sigma0": self.quantities.sigma0,
            },
            "beta": self.beta,
            "R0": self.R0,
            "assumption2_ok": bool(self.quantities.sigma0 < self.beta * self.R0),
            "K1": self.K1,
            "K2": self.K2,
            "K_star": self.K_star,
            "all_ratios_positive": self.all_ratios_positive,
            "scales": list(self.scales),
            "rows": [
                {
                    "R": r.R,
                    "ensemble_index": r.ensemble_index,
                    "jitter_seed": r.jitter_seed,
                    "n_members": r.n_members,
                    "phi_avg": r.phi_avg,
                    "psi_avg": r.psi_avg,
                    "ratio_phi_over_P0": r.ratio_phi_over_P0,
                    "terms": r.terms,
                }
                for r in self.rows
            ],
            "locality": [
                {
                    "r": l.r,
                    "R": l.R,
                    "psi_ratio": l.psi_ratio,
                    "scale_ratio_cubed": l.scale_ratio_cubed,
                    "lower": l.lower,
                    "upper": l.upper,
                    "within": l.within,
                }
                for l in self.locality
            ],
            "warnings": list(self.warnings),
        }


def verify_theorem(series: SnapshotSeries, psi0: TestFunction, scales, K1: int, K2: int,
                   beta: float, n_ensembles: int = 4, eta: TemporalCutoff | None = None,
                   seed: int = 0, nu: float | None = None,
                   cd: CollapsedDensities | None = None) -> FluxReport:
    """Compute <Phi>_R / P0 across scales and ensembles; empirical K*.

    Each scale gets one canonical ensemble plus jittered ones (seeded lattice
    offsets). A nonpositive ratio is reported, not raised: the theorem's
    hypotheses are empirical for any given run.
    """
    if eta is None:
        eta = TemporalCutoff(series.T)
    rho = psi0.rho
    if cd is None:
        cd = collapse_series(series, eta, rho, keep_snapshots=False)
    quantities = integral_scale_quantities(series, psi0, eta, rho, cd=cd)
    sigma0 = quantities.sigma0
    R0 = psi0.R
    lo = sigma0 / beta
    for R in scales:
        if R > R0 * (1.0 + 1e-9) or R < lo * (1.0 - 1e-9):
            raise ScaleOutOfRange(
                f"scale {R:.4g} outside [sigma0/beta, R0] = [{lo:.4g}, {R0:.4g}]"
            )
        if R < 8.0 * series.grid.dx:
            raise ScaleOutOfRange(f"scale {R:.4g} unresolved: needs >= 8 dx = {8 * series.grid.dx:.4g}")

    grid = cd.grid
    phi = cd.phi
    v_tot = [cd.v_omega[a] + cd.v_j[a] for a in range(3)]
    T = cd.T
    P0 = quantities.P0

    rows: list[FluxRow] = []
    warnings: list[str] = []
    for R in scales:
        for e_idx in range(n_ensembles):
            jitter = None if e_idx == 0 else seed * 1000 + e_idx
            if abs(R - R0) <= 1e-12 * R0 and e_idx > 0:
                continue  # at R = R0 the ensemble is the single member psi0
            ens = canonical_ensemble(psi0, R, K1, K2, jitter_seed=jitter)
            phi_sum = 0.0
            psi_sum = 0.0
            terms_sum: dict[str, float] = {}
            for tf in ens.members:
                psi_vals = tf.field.values
                phi_sum += volume_integral(grid, phi * psi_vals)
                gpsi = tf.gradient_values()
                psi_sum += sum(volume_integral(grid, v_tot[a] * gpsi[a]) for a in range(3))
                if nu is not None:
                    mt = _member_terms(cd, tf, nu)
                    for k, v in mt.items():
                        terms_sum[k] = terms_sum.get(k, 0.0) + v
            n = len(ens.members)
            phi_avg = phi_sum / (n * T * R**3)
            psi_avg = psi_sum / (n * T)
            norm = 1.0 / (n * T * R**3)
            rows.append(FluxRow(
                R=float(R), ensemble_index=e_idx, jitter_seed=jitter,
                n_members=n, phi_avg=phi_avg, psi_avg=psi_avg,
                ratio_phi_over_P0=phi_avg / P0,
                terms={k: v * norm for k, v in terms_sum.items()},
            ))

    ratios = [r.ratio_phi_over_P0 for r in rows]
    positive = all(r > 0.0 for r in ratios)
    if positive:
        k_star = max(max(ratios), 1.0 / min(ratios))
    else:
        k_star = float("inf")
        warnings.append("nonpositive flux ratio encountered; empirical K* undefined")

    report = FluxReport(
        quantities=quantities, beta=beta, R0=R0, K1=K1, K2=K2, rows=rows,
        K_star=k_star, all_ratios_positive=positive,
        scales=[float(R) for R in scales], warnings=warnings,
    )
    pairs = [(r, R) for r in report.scales for R in report.scales if r < R]
    report.locality = locality_ratios(report, pairs)
    return report


def locality_ratios(report: FluxReport, pairs) -> list:
    """<Psi>_r / <Psi>_R vs (r/R)^3 with the empirical K* bounds."""
    by_scale = report.psi_avg_by_scale()
    k2 = report.K_star**2
    out = []
    for r, R in pairs:
        if r not in by_scale or R not in by_scale:
            raise ScaleOutOfRange(f"pair ({r}, {R}) not among computed scales")
        denom = by_scale[R]
        ratio = by_scale[r] / denom if denom != 0.0 else float("inf")
        s3 = (r / R) ** 3
        lower, upper = s3 / k2, s3 * k2
        out.append(LocalityRow(
            r=float(r), R=float(R), psi_ratio=ratio, scale_ratio_cubed=s3,
            lower=lower, upper=upper,
            within=bool(lower <= ratio <= upper),
        ))
    return out
