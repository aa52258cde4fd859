"""Persistencia de historias de convergencia en DuckDB + Parquet"""

from __future__ import annotations

from pathlib import Path

import duckdb
import pandas as pd

COLUMNS = ["run_id", "problem", "mode", "m", "k", "workers", "iter", "residual_norm", "seconds", "converged"]


def history_frame(run_id: str, report_frame: pd.DataFrame, *, problem: str, mode: str,
                  m: tuple[int, ...], k: int, workers: int, converged: bool) -> pd.DataFrame:
    """Historia en formato largo con las columnas de la tabla ``runs``"""
    frame = report_frame.copy()
    frame["run_id"] = run_id
    frame["problem"] = problem
    frame["mode"] = mode
    frame["m"] = ",".join(str(f) for f in m)
    frame["k"] = int(k)
    frame["workers"] = int(workers)
    frame["converged"] = bool(converged)
    return frame[COLUMNS]


def persist_history(db_path: str | Path, frame: pd.DataFrame) -> Path:
    """Reemplaza las filas del run en ``runs`` y escribe ``<run_id>.parquet`` junto a la base"""
    db_path = Path(db_path)
    db_path.parent.mkdir(parents=True, exist_ok=True)
    run_ids = sorted(frame["run_id"].unique())

    con = duckdb.connect(str(db_path))
    try:
        con.execute("CREATE TABLE IF NOT EXISTS runs AS SELECT * FROM frame LIMIT 0")
        for run_id in run_ids:
            con.execute("DELETE FROM runs WHERE run_id = ?", [run_id])
        con.execute("INSERT INTO runs BY NAME SELECT * FROM frame")
    finally:
        con.close()

    parquet = db_path.parent / f"{run_ids[0] if len(run_ids) == 1 else db_path.stem}.parquet"
    frame.to_parquet(parquet, index=False)
    return parquet


def load_runs(db_path: str | Path) -> pd.DataFrame:
    con = duckdb.connect(str(db_path), read_only=True)
    try:
        return con.execute("SELECT * FROM runs ORDER BY run_id, iter").df()
    finally:
        con.close()
