"""Figure and table rendering for run logs.

Consumes the JSON run log and writes, next to each other, delimited
iteration tables (CSV) and matplotlib figures: the interior-point mu
trajectory, the outer refinement gaps, and the condition-number track
when the run recorded one.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_IPM_COLUMNS = ["k", "mu", "gap", "neighborhood_distance", "solver_residual",
                "solver_iterations", "solver_method", "step_length",
                "primal_residual", "dual_residual", "kappa"]
_IR_COLUMNS = ["k", "gap", "eta", "residual", "oracle_iterations", "oracle_mu0",
               "kappa"]


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])


def render_report(log: dict, out_dir: str, stem: str = "run") -> list[str]:
    """Write CSV tables and figures for one run log; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    ipm = log.get("ipm_iterations", [])
    ir = log.get("ir_iterations", [])

    path = os.path.join(out_dir, f"{stem}_ipm.csv")
    _write_csv(path, _IPM_COLUMNS, ipm)
    written.append(path)
    path = os.path.join(out_dir, f"{stem}_ir.csv")
    _write_csv(path, _IR_COLUMNS, ir)
    written.append(path)

    if ipm:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.semilogy([r["k"] for r in ipm], [r["mu"] for r in ipm],
                    lw=1.2, color="tab:blue")
        ax.set_xlabel("interior-point iteration")
        ax.set_ylabel("mu")
        ax.set_title("central path parameter")
        ax.grid(True, which="both", alpha=0.3)
        path = os.path.join(out_dir, f"{stem}_mu.png")
        fig.savefig(path, dpi=130, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    if ir:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.semilogy([r["k"] for r in ir], [r["gap"] for r in ir],
                    marker="o", lw=1.2, color="tab:red")
        ax.set_xlabel("refinement round")
        ax.set_ylabel("duality gap")
        ax.set_title("outer refinement (gap squares per round)")
        ax.grid(True, which="both", alpha=0.3)
        path = os.path.join(out_dir, f"{stem}_ir.png")
        fig.savefig(path, dpi=130, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    kappa_rows = [r for r in ipm if r.get("kappa") is not None]
    if kappa_rows:
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        ax.loglog([r["mu"] for r in kappa_rows], [r["kappa"] for r in kappa_rows],
                  marker=".", lw=1.0, color="tab:green")
        ax.invert_xaxis()
        ax.set_xlabel("mu")
        ax.set_ylabel("cond(M)")
        ax.set_title("Newton system conditioning along the run")
        ax.grid(True, which="both", alpha=0.3)
        path = os.path.join(out_dir, f"{stem}_condition.png")
        fig.savefig(path, dpi=130, bbox_inches="tight")
        plt.close(fig)
        written.append(path)
    return written
