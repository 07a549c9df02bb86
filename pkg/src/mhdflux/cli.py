"""Command-line pipeline: simulate -> diagnose -> assumptions -> report.

Each stage reads/writes files under the --out directory so stages can be run
separately or chained with ``all``. Exit codes: 0 ok, 1 usage or config
error, 2 solver blow-up, 3 degenerate diagnostics.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .assumptions import check_all
from .config import RunConfig, dump_config, load_config
from .cutoffs import make_refined, temporal_cutoff
from .errors import BlowUp, ConfigError, DegeneratePalinstrophy, MhdFluxError
from .fluxes import verify_theorem
from .grid import GridSpec, VectorField3
from .reporting import (
    render_figures,
    summary_text,
    write_flux_csv,
    write_json,
    write_plotdata,
)
from .snapshots import read_manifest, read_series, write_manifest, write_series
from .solver import (
    MHDState,
    SolverConfig,
    abc_init,
    run,
    taylor_green_mhd_init,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BLOWUP = 2
EXIT_DEGENERATE = 3


def _build_initial_state(cfg: RunConfig) -> MHDState:
    grid = GridSpec(cfg.n, cfg.L)
    if cfg.init == "zero":
        zeros = np.zeros(grid.shape)
        z = VectorField3.from_arrays(grid, zeros, zeros.copy(), zeros.copy())
        return MHDState(0.0, z, z)
    if cfg.init == "abc":
        v = abc_init(grid, cfg.amplitude_u)
        b = abc_init(grid, cfg.amplitude_b)
        return MHDState(0.0, v, b)
    return taylor_green_mhd_init(grid, cfg.amplitude_u, cfg.amplitude_b,
                                 seed=cfg.seed, perturbation=cfg.perturbation)


def _solver_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(nu=cfg.nu, eta_m=cfg.eta_m, dt=cfg.dt, T=cfg.T,
                        n_snapshots=cfg.n_snapshots)


def stage_simulate(cfg: RunConfig, out: Path, verbose: bool) -> int:
    snapdir = out / "snapshots"
    init = _build_initial_state(cfg)
    try:
        series = run(init, _solver_config(cfg))
    except BlowUp as exc:
        snapdir.mkdir(parents=True, exist_ok=True)
        write_manifest(snapdir / "manifest.json", {
            "n": cfg.n, "L": cfg.L, "completed": False,
            "blowup_time": exc.time, "blowup_max": exc.max_value,
            "files": [], "times": [],
        })
        print(f"solver blow-up at t = {exc.time:.6g}", file=sys.stderr)
        return EXIT_BLOWUP
    names = write_series(snapdir, series)
    (out / "config.resolved").write_text(dump_config(cfg), encoding="utf-8")
    if verbose:
        print(f"wrote {len(names)} snapshots to {snapdir}")
    return EXIT_OK


def _analysis_scales(cfg: RunConfig, sigma0: float, dx: float) -> list[float]:
    if cfg.n_scales == 1:
        return [cfg.R0]
    lo = max(sigma0 / cfg.beta, 8.0 * dx) * 1.02
    # stop just short of R0: at R = R0 the only ensemble is {psi0} itself,
    # and the demo wants several distinct ensembles per scale
    hi = 0.995 * cfg.R0
    if lo >= hi:
        raise DegeneratePalinstrophy(
            f"no admissible scale range: lower end {lo:.4g} >= {hi:.4g}"
        )
    return [float(R) for R in np.geomspace(lo, hi, cfg.n_scales)]


def stage_diagnose(cfg: RunConfig, out: Path, verbose: bool) -> int:
    series = read_series(out / "snapshots")
    eta = temporal_cutoff(series.T)
    psi0 = make_refined(series.grid, cfg.center, cfg.R0, rho=cfg.rho,
                        C0_target=cfg.C0)
    from .fluxes import collapse_series, integral_scale_quantities

    try:
        cd = collapse_series(series, eta, cfg.rho, keep_snapshots=False)
        q = integral_scale_quantities(series, psi0, eta, cfg.rho, cd=cd)
        scales = _analysis_scales(cfg, q.sigma0, series.grid.dx)
        report = verify_theorem(series, psi0, scales, cfg.K1, cfg.K2, cfg.beta,
                                n_ensembles=cfg.n_ensembles, eta=eta,
                                seed=cfg.seed, cd=cd)
    except DegeneratePalinstrophy as exc:
        print(f"degenerate diagnostics: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    payload = report.to_dict()
    write_json(out / "flux_report.json", payload)
    write_flux_csv(payload, out / "flux_table.csv")
    write_plotdata(payload, out / "plotdata.csv")
    if verbose:
        print(f"sigma0 = {q.sigma0:.6g}, K* = {report.K_star:.6g}, "
              f"{len(report.rows)} rows")
    return EXIT_OK


def stage_assumptions(cfg: RunConfig, out: Path, verbose: bool) -> int:
    series = read_series(out / "snapshots")
    eta = temporal_cutoff(series.T)
    psi0 = make_refined(series.grid, cfg.center, cfg.R0, rho=cfg.rho,
                        C0_target=cfg.C0)
    from .fluxes import integral_scale_quantities

    try:
        q = integral_scale_quantities(series, psi0, eta, cfg.rho)
    except DegeneratePalinstrophy as exc:
        print(f"degenerate diagnostics: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    rep = check_all(
        series, psi0, cfg.beta, q.sigma0,
        n_samples=cfg.assumption_samples, n_centers=cfg.n_centers,
        seed=cfg.seed,
        C1_limit=cfg.C1_limit if cfg.C1_limit > 0 else None,
        C2=cfg.C2 if cfg.C2 > 0 else None,
    )
    write_json(out / "assumptions.json", rep.to_dict())
    if verbose:
        print(f"coherence {rep.C1_estimate:.6g}, "
              f"smoothness {rep.smoothness_max_ratio:.6g}")
    return EXIT_OK


def stage_report(cfg: RunConfig, out: Path, verbose: bool) -> int:
    import json

    flux_path = out / "flux_report.json"
    if not flux_path.exists():
        print("flux_report.json missing; run diagnose first", file=sys.stderr)
        return EXIT_USAGE
    flux = json.loads(flux_path.read_text(encoding="utf-8"))
    assumptions = None
    apath = out / "assumptions.json"
    if apath.exists():
        assumptions = json.loads(apath.read_text(encoding="utf-8"))
    text = summary_text(flux, assumptions)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    figures = render_figures(flux, out / "figures")
    if verbose:
        print(text)
        print("figures:", ", ".join(figures))
    return EXIT_OK


STAGES = {
    "simulate": [stage_simulate],
    "diagnose": [stage_diagnose],
    "assumptions": [stage_assumptions],
    "report": [stage_report],
    "all": [stage_simulate, stage_diagnose, stage_assumptions, stage_report],
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mhdflux",
        description="enstrophy-flux concentration diagnostics for spectral MHD runs",
    )
    parser.add_argument("command", choices=sorted(STAGES))
    parser.add_argument("--config", required=True, help="path to key = value config")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    parser.add_argument("--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.seed is not None:
        cfg.seed = args.seed

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for stage in STAGES[args.command]:
        try:
            code = stage(cfg, out, args.verbose)
        except MhdFluxError as exc:
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        if code != EXIT_OK:
            return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
