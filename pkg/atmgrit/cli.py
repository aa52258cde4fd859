#!/usr/bin/env python
"""CLI del laboratorio AT-MGRIT: solve, theory, sweep-k, propagator y report"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd
from rich.table import Table

from atmgrit import analysis, storage, theory
from atmgrit.config import RunConfig, load_config
from atmgrit.core import ATMGRITError, ConfigurationError, RuntimeFault
from atmgrit.logs import configure_logging, console, err_console
from atmgrit.runtime import run_parallel
from atmgrit.solver import ConvergenceReport, SolverConfig, solve

log = logging.getLogger(__name__)

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_CONFIG, EXIT_FAULT, EXIT_INTERNAL = 0, 1, 2, 3, 4


def _out_path(args, cfg: RunConfig, default: str) -> Path:
    path = Path(args.out) if args.out else (cfg.output_path or Path(default))
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _workers(args, cfg: RunConfig) -> int:
    return args.workers if args.workers is not None else cfg.workers


def run_solver(cfg: RunConfig, solver: SolverConfig, workers: int) -> ConvergenceReport:
    app = cfg.application()
    if workers > 1:
        _, report = run_parallel(app, solver, workers, timeout=cfg.timeout)
    else:
        _, report = solve(app, solver)
    return report


def _history_table(report: ConvergenceReport, title: str) -> Table:
    table = Table(title=title)
    for col in ["iter", "‖r‖", "s"]:
        table.add_column(col, justify="right")
    for it, norm, sec in zip(range(1, report.iterations + 1), report.residual_norms, report.iteration_seconds):
        table.add_row(str(it), f"{norm:.3e}", f"{sec:.3f}")
    return table


# =====================================================
# Subcomandos
# =====================================================

def cmd_solve(cfg: RunConfig, args) -> int:
    workers = _workers(args, cfg)
    out = _out_path(args, cfg, f"results/{cfg.run_id}.csv")
    console.print(f"🔄 solve: {cfg.problem}, modo {cfg.solver.mode}, m={list(cfg.solver.m)}, "
                  f"k={cfg.solver.k}, P={workers}")

    report = run_solver(cfg, cfg.solver, workers)

    report.to_frame().to_csv(out, index=False)
    summary = out.with_name(f"{out.stem}.summary.csv")
    pd.DataFrame([report.summary()]).to_csv(summary, index=False)
    if cfg.db_path:
        storage.persist_history(cfg.db_path, storage.history_frame(
            cfg.run_id, report.to_frame(), problem=cfg.problem, mode=cfg.solver.mode,
            m=cfg.solver.m, k=cfg.solver.k, workers=workers, converged=report.converged))

    if not args.quiet:
        console.print(_history_table(report, f"{cfg.run_id}: historia de residuos"))
    mark = "[green]✅ convergió[/]" if report.converged else "[yellow]⚠️  sin convergencia[/]"
    console.print(f"{mark} en {report.iterations} iteraciones ({report.total_seconds:.2f}s) → {out}")
    return EXIT_OK if report.converged else EXIT_NOT_CONVERGED


def _theory_pairs(opts: dict, m: int) -> tuple[np.ndarray, np.ndarray]:
    source = opts.get("source", "grid")
    if source == "heat":
        if "dt" not in opts:
            raise ConfigurationError("theory.source = 'heat' requiere theory.dt")
        return theory.heat_eigenpairs(opts.get("dof", 1025), opts["dt"], m)
    if source == "random":
        rng = np.random.default_rng(opts.get("seed", 0))
        n = opts.get("samples", 1000)
        if opts.get("complex", False):
            def draw():
                return np.sqrt(rng.uniform(0, 1, n)) * np.exp(2j * np.pi * rng.uniform(0, 1, n))
        else:
            def draw():
                return rng.uniform(-1, 1, n)
        lams = draw()
        mus = lams**m if opts.get("exact_coarse", False) else draw()
        return lams, mus

    lams = np.asarray(opts.get("lambda", [0.5]), dtype=np.float64)
    if opts.get("exact_coarse", False):
        return lams, lams**m
    mus = np.asarray(opts.get("mu", [0.5]), dtype=np.float64)
    grid_l, grid_m = np.meshgrid(lams, mus, indexing="ij")
    return grid_l.ravel(), grid_m.ravel()


def cmd_theory(cfg: RunConfig, args) -> int:
    opts = cfg.theory
    out = _out_path(args, cfg, f"results/{cfg.run_id}_theory.csv")
    size = opts.get("size", 32)
    frames, skipped = [], 0
    for m in np.atleast_1d(opts.get("m", 2)):
        lams, mus = _theory_pairs(opts, int(m))
        for k in np.atleast_1d(opts.get("k", 2)):
            frame, n_skip = theory.bound_rows(lams, mus, int(m), int(k), size)
            frames.append(frame)
            skipped += n_skip

    rows = pd.concat(frames, ignore_index=True)
    rows.to_csv(out, index=False)
    if skipped:
        log.warning("%d pares con |μ| ≥ 1 omitidos", skipped)
        err_console.print(f"[yellow]⚠️  {skipped} pares con |μ| ≥ 1 omitidos[/]")

    violations = int((rows["norm_Ecc"] > rows["bound"] * (1 + 1e-12)).sum())
    if not args.quiet and not rows.empty:
        table = Table(title="‖Ẽ_cc‖₂ vs cota")
        for col in ["m", "k", "pares", "máx ‖E_cc‖", "máx cota"]:
            table.add_column(col, justify="right")
        for (m, k), grp in rows.groupby(["m", "k"]):
            table.add_row(str(m), str(k), str(len(grp)), f"{grp['norm_Ecc'].max():.4f}", f"{grp['bound'].max():.4f}")
        console.print(table)
    if violations:
        err_console.print(f"[red]❌ {violations} filas violan la cota[/]")
        return EXIT_NOT_CONVERGED
    console.print(f"[green]✅ {len(rows)} filas, norma ≤ cota en todas[/] → {out}")
    return EXIT_OK


def cmd_sweep_k(cfg: RunConfig, args) -> int:
    workers = _workers(args, cfg)
    out = _out_path(args, cfg, f"results/{cfg.run_id}_sweep.csv")
    m_values = cfg.sweep_m or [cfg.solver.m[0]]
    k_values = cfg.sweep_k or [cfg.solver.k]
    app = cfg.application()

    rows = []
    for m in m_values:
        factors = (int(m), *cfg.solver.m[1:])
        base = dataclasses.replace(cfg.solver, m=factors)
        n_coarse = base.hierarchy(app.grid).n_coarse
        ks = sorted(set(k_values) | ({n_coarse} if cfg.include_parareal else set()))
        for k in ks:
            solver = dataclasses.replace(base, k=int(k))
            console.print(f"🔄 m={m}, k={k} ...")
            report = run_solver(cfg, solver, workers)
            rows.append({
                "m": int(m),
                "k": int(k),
                "k_over_ncpoints": k / n_coarse,
                "iterations": report.iterations,
                "converged": report.converged,
                "parareal_equivalent": bool(k >= n_coarse),
            })
            if cfg.db_path:
                storage.persist_history(cfg.db_path, storage.history_frame(
                    f"{cfg.run_id}-m{m}-k{k}", report.to_frame(), problem=cfg.problem,
                    mode=solver.mode, m=solver.m, k=solver.k, workers=workers,
                    converged=report.converged))

    frame = pd.DataFrame(rows)
    frame.to_csv(out, index=False)
    if not args.quiet:
        table = Table(title="Iteraciones vs k")
        for col in frame.columns:
            table.add_column(col, justify="right")
        for _, row in frame.iterrows():
            table.add_row(*(f"{v:.4f}" if isinstance(v, float) else str(v) for v in row))
        console.print(table)
    console.print(f"[green]✅ barrido completado[/] → {out}")
    return EXIT_OK if frame["converged"].all() else EXIT_NOT_CONVERGED


def cmd_propagator(cfg: RunConfig, args) -> int:
    opts = cfg.theory
    out = _out_path(args, cfg, f"results/{cfg.run_id}_propagator.csv")
    m = int(np.atleast_1d(opts.get("m", 2))[0])
    k = int(np.atleast_1d(opts.get("k", 2))[0])
    phi = opts.get("phi", 0.5)
    psi = opts.get("psi", phi**m)
    n_steps = opts.get("n_steps", 8)
    operator = opts.get("operator", "E_a")

    if operator == "E_e":
        matrix = theory.assemble_E_exact(phi, m, k, n_steps).matrix
    elif operator == "E_a":
        matrix = theory.assemble_E_approx(phi, psi, m, k, n_steps).matrix
    else:
        matrix = theory.assemble_Ecc(phi, psi, m, k, n_steps // m + 1)
    pd.DataFrame(matrix).to_csv(out, index=False, header=False)
    console.print(f"[green]✅ {operator} ({matrix.shape[0]}×{matrix.shape[1]})[/] → {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    db = Path(args.db)
    if not db.exists():
        raise ConfigurationError(f"no existe la base {db}")
    frame = storage.load_runs(db)
    out = analysis.write_summary(frame, args.out or "reports/convergence_summary.md", tail=args.tail)
    if not args.quiet:
        table = Table(title="Resumen de corridas")
        summary = analysis.summarize(frame, args.tail)
        for col in ["run_id", "k", "iterations", "final_norm", "rate"]:
            table.add_column(col, justify="right")
        for _, row in summary.iterrows():
            table.add_row(row["run_id"], str(row["k"]), str(row["iterations"]),
                          f"{row['final_norm']:.2e}", f"{row['rate']:.3f}")
        console.print(table)
    console.print(f"📝 Resumen: {out}")
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "theory": cmd_theory,
    "sweep-k": cmd_sweep_k,
    "propagator": cmd_propagator,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="atmgrit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug (incluye tiempos por rank)")
    parser.add_argument("-q", "--quiet", action="store_true", help="sin tablas")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="archivo TOML plano")
        p.add_argument("--out", help="ruta del CSV de salida")
        p.add_argument("--workers", type=int, help="número de ranks simulados")
    p = sub.add_parser("report")
    p.add_argument("--db", required=True, help="base duckdb con la tabla runs")
    p.add_argument("--out", help="ruta del markdown")
    p.add_argument("--tail", type=int, help="iteraciones finales para el ajuste")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging([logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)])
    try:
        if args.command == "report":
            return cmd_report(args)
        cfg = load_config(args.config)
        if args.workers is not None and args.workers < 1:
            raise ConfigurationError(f"--workers={args.workers} debe ser ≥ 1")
        return COMMANDS[args.command](cfg, args)
    except ConfigurationError as exc:
        err_console.print(f"[red]❌ configuración inválida:[/] {exc}")
        return EXIT_CONFIG
    except RuntimeFault as exc:
        err_console.print(f"[red]❌ fallo del runtime:[/] {exc}")
        return EXIT_FAULT
    except ATMGRITError as exc:
        err_console.print(f"[red]❌ {type(exc).__name__}:[/] {exc}")
        return EXIT_NOT_CONVERGED
    except Exception:
        log.exception("error interno en %s", args.command)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
