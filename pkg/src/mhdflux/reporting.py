"""Report emission: CSV tables, plot data, rendered figures and the summary.

All text output is formatted with fixed precision so that reruns of the same
config + seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "write_flux_csv",
    "write_plotdata",
    "write_json",
    "render_figures",
    "summary_text",
]


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".12g")
    return str(x)


def _jsonable(obj):
    """numpy scalars slip into reports easily; coerce them on the way out."""
    import numpy as np

    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def write_flux_csv(report: dict, path) -> None:
    """Flux table; scale quantities repeat per row for standalone use."""
    q = report["quantities"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["R", "n_members", "phi_avg", "psi_avg",
                    "P0", "E0", "e0", "sigma0", "ratio_phi_over_P0"])
        for row in report["rows"]:
            w.writerow([_fmt(row["R"]), row["n_members"], _fmt(row["phi_avg"]),
                        _fmt(row["psi_avg"]), _fmt(q["P0"]), _fmt(q["E0"]),
                        _fmt(q["e0"]), _fmt(q["sigma0"]),
                        _fmt(row["ratio_phi_over_P0"])])


def write_plotdata(report: dict, path) -> None:
    """Per-scale (log R, log <Psi>_R) pairs; sign kept separately since the
    surface flux can be negative for a given run."""
    by_scale: dict[float, list] = {}
    for row in report["rows"]:
        by_scale.setdefault(row["R"], []).append(row["psi_avg"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["log10_R", "log10_abs_psi_avg", "sign"])
        for R in sorted(by_scale):
            mean = sum(by_scale[R]) / len(by_scale[R])
            mag = abs(mean)
            logv = math.log10(mag) if mag > 0 else float("-inf")
            w.writerow([_fmt(math.log10(R)), _fmt(logv),
                        "+" if mean >= 0 else "-"])


def render_figures(report: dict, outdir) -> list[str]:
    """Two PNGs: flux ratios across scales, and the locality scatter."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []

    k_star = report["K_star"]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for row in report["rows"]:
        marker = "o" if row["ensemble_index"] == 0 else "x"
        ax.semilogx(row["R"], row["ratio_phi_over_P0"], marker, color="C0", ms=5)
    if math.isfinite(k_star) and k_star > 0:
        ax.axhline(k_star, color="C3", ls="--", lw=1, label="K*")
        ax.axhline(1.0 / k_star, color="C3", ls=":", lw=1, label="1/K*")
        ax.legend(loc="best", fontsize=8)
    ax.axhline(0.0, color="k", lw=0.5)
    ax.set_xlabel("R")
    ax.set_ylabel(r"$\langle\Phi\rangle_R / P_0$")
    ax.set_title("ensemble flux averages across scales")
    fig.tight_layout()
    p = outdir / "flux_ratios.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    written.append(str(p))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = [row["scale_ratio_cubed"] for row in report["locality"]]
    ys = [row["psi_ratio"] for row in report["locality"]]
    if xs:
        ax.loglog(xs, ys, "o", color="C0", ms=5, label=r"$\langle\Psi\rangle_r/\langle\Psi\rangle_R$")
        lo = min(xs)
        hi = max(xs)
        if math.isfinite(k_star):
            ax.loglog([lo, hi], [lo * k_star**2, hi * k_star**2], "C3--", lw=1)
            ax.loglog([lo, hi], [lo / k_star**2, hi / k_star**2], "C3:", lw=1)
        ax.loglog([lo, hi], [lo, hi], "k-", lw=0.5)
        ax.legend(loc="best", fontsize=8)
    ax.set_xlabel(r"$(r/R)^3$")
    ax.set_ylabel("surface-flux ratio")
    ax.set_title("locality of the surface flux")
    fig.tight_layout()
    p = outdir / "locality.png"
    fig.savefig(p, dpi=110)
    plt.close(fig)
    written.append(str(p))
    return written


def summary_text(flux: dict, assumptions: dict | None = None) -> str:
    """One-page plain-text roll-up of the run."""
    q = flux["quantities"]
    beta = flux["beta"]
    lines = []
    lines.append("enstrophy concentration summary")
    lines.append("=" * 31)
    lines.append("")
    lines.append(f"e0      = {_fmt(q['e0'])}")
    lines.append(f"E0      = {_fmt(q['E0'])}")
    lines.append(f"P0      = {_fmt(q['P0'])}")
    lines.append(f"sigma0  = {_fmt(q['sigma0'])}")
    a2 = flux.get("assumption2_ok")
    lines.append(f"sigma0 < beta*R0 (beta = {_fmt(beta)}): {'yes' if a2 else 'NO'}")
    lines.append("")
    lines.append("per-scale flux averages (mean over ensembles)")
    by_scale: dict[float, list] = {}
    for row in flux["rows"]:
        by_scale.setdefault(row["R"], []).append(row["ratio_phi_over_P0"])
    for R in sorted(by_scale):
        vals = by_scale[R]
        mean = sum(vals) / len(vals)
        sign = "+" if mean > 0 else ("-" if mean < 0 else "0")
        lines.append(f"  R = {_fmt(R):<18} ratio = {_fmt(mean):<22} sign {sign}"
                     f"  ({len(vals)} ensembles)")
    lines.append("")
    if flux.get("all_ratios_positive"):
        lines.append(f"empirical K* = {_fmt(flux['K_star'])}")
    else:
        lines.append("empirical K* undefined (nonpositive flux ratio observed)")
    lines.append("")
    lines.append("locality table (r < R)")
    lines.append("  r          R          ratio          (r/R)^3        within bounds")
    for row in flux.get("locality", []):
        lines.append(
            f"  {_fmt(row['r']):<10} {_fmt(row['R']):<10} "
            f"{_fmt(row['psi_ratio']):<14} {_fmt(row['scale_ratio_cubed']):<14} "
            f"{'yes' if row['within'] else 'NO'}"
        )
    lines.append("")
    verdicts = {}
    if assumptions is not None:
        verdicts = assumptions.get("verdicts", {})
        lines.append("hypothesis estimates")
        lines.append(f"  coherence constant  = {_fmt(assumptions['coherence']['value'])}"
                     f" (vacuous: {assumptions['coherence']['vacuous']})")
        lines.append(f"  smoothness max      = {_fmt(assumptions['smoothness']['value'])}")
        lines.append(f"  localization max    = {_fmt(assumptions['localization']['value'])}")
        lines.append(f"  modulation (omega)  = {_fmt(assumptions['modulation_ratio_omega'])}")
        lines.append(f"  modulation (j)      = {_fmt(assumptions['modulation_ratio_j'])}")
        for name, ok in sorted(verdicts.items()):
            lines.append(f"  {name:<12} {'holds' if ok else 'FAILS'}")
        lines.append("")
    hypotheses_met = bool(a2) and all(verdicts.values()) if verdicts else bool(a2)
    concentration = flux.get("all_ratios_positive") and all(
        row["within"] for row in flux.get("locality", [])
    )
    if hypotheses_met and concentration:
        lines.append("THEOREM HYPOTHESES MET / CONCLUSION OBSERVED")
    else:
        if not hypotheses_met:
            lines.append("hypotheses NOT all met for this run (see above)")
        if not concentration:
            lines.append("concentration/locality NOT fully observed (see above)")
    lines.append("")
    return "\n".join(lines)
