"""Factores de convergencia y reporte markdown de corridas almacenadas"""

from __future__ import annotations

from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd
import statsmodels.api as sm


def convergence_factors(frame: pd.DataFrame) -> pd.DataFrame:
    """Agrega ρ_j = ‖r_j‖/‖r_{j−1}‖ por run"""
    out = frame.sort_values(["run_id", "iter"]).copy()
    out["factor"] = out.groupby("run_id")["residual_norm"].transform(lambda s: s / s.shift(1))
    return out


def asymptotic_rate(norms, tail: int | None = None) -> dict[str, float]:
    """Ajuste OLS de log10‖r‖ contra la iteración; rate = 10^pendiente"""
    y = np.log10(np.asarray(norms, dtype=np.float64))
    x = np.arange(1, y.size + 1, dtype=np.float64)
    if tail is not None:
        x, y = x[-tail:], y[-tail:]
    if y.size < 3 or not np.all(np.isfinite(y)):
        return {"rate": float("nan"), "r2": float("nan"), "points": int(y.size)}
    fit = sm.OLS(y, sm.add_constant(x)).fit()
    return {"rate": float(10 ** fit.params[1]), "r2": float(fit.rsquared), "points": int(y.size)}


def summarize(frame: pd.DataFrame, tail: int | None = None) -> pd.DataFrame:
    rows = []
    for run_id, run in convergence_factors(frame).groupby("run_id", sort=True):
        fit = asymptotic_rate(run["residual_norm"], tail)
        rows.append({
            "run_id": run_id,
            "problem": run["problem"].iloc[0],
            "mode": run["mode"].iloc[0],
            "m": run["m"].iloc[0],
            "k": int(run["k"].iloc[0]),
            "iterations": int(run["iter"].max()),
            "final_norm": float(run["residual_norm"].iloc[-1]),
            "converged": bool(run["converged"].iloc[-1]),
            "mean_factor": float(run["factor"].mean()),
            "rate": fit["rate"],
            "r2": fit["r2"],
            "seconds": float(run["seconds"].sum()),
        })
    return pd.DataFrame(rows)


def write_summary(frame: pd.DataFrame, path: str | Path, tail: int | None = None) -> Path:
    """Escribe el resumen markdown de todas las corridas"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = summarize(frame, tail)

    lines = ["# Reporte de convergencia - AT-MGRIT", ""]
    lines += ["## 📊 Corridas", ""]
    lines += ["| run | problema | modo | m | k | iter | ‖r‖ final | ρ medio | ρ asintótico | R² | s |",
              "|---|---|---|---|---|---|---|---|---|---|---|"]
    for _, row in table.iterrows():
        mark = "✅" if row["converged"] else "❌"
        lines.append(
            f"| {row['run_id']} {mark} | {row['problem']} | {row['mode']} | {row['m']} | {row['k']} "
            f"| {row['iterations']} | {row['final_norm']:.2e} | {row['mean_factor']:.3f} "
            f"| {row['rate']:.3f} | {row['r2']:.3f} | {row['seconds']:.2f} |"
        )
    if not table.empty:
        best = table.sort_values(["iterations", "k"]).iloc[0]
        lines += ["", "## 📈 Hallazgos Clave",
                  f"1. **Menos iteraciones**: {best['run_id']} ({best['iterations']} iteraciones con k={best['k']})",
                  f"2. **Corridas convergidas**: {int(table['converged'].sum())}/{len(table)}"]
    lines += ["", f"*Generado el {datetime.now():%Y-%m-%d %H:%M:%S}*", ""]
    path.write_text("\n".join(lines), encoding="utf-8")
    return path
