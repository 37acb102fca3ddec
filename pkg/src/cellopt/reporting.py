"""Run-history persistence and rendering: JSON report files, the per-iteration
CSV, and the objective-trend figure written alongside it."""

from __future__ import annotations

import json

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .acquisition import KappaSchedule, ProposalConfig
from .driver import IterationRecord, OptimizationReport, OptimizerConfig

CSV_HEADER = "iteration,objective_s,incumbent_s,kappa,feasible"


class ReportError(ValueError):
    """Report file missing fields or not parseable."""


def report_to_dict(report: OptimizationReport) -> dict:
    opt = report.config
    schedule = opt.effective_schedule()
    return {
        "version": 1,
        "complete": report.complete,
        "seed": opt.seed,
        "entity_map": [[eid, ix, iy] for eid, ix, iy in report.entity_map],
        "config": {
            "n_init": opt.n_init,
            "n_sim": opt.n_sim,
            "kappa": {"kappa0": schedule.kappa0, "a": schedule.a, "b": schedule.b},
            "proposal": {
                "n_starts": opt.proposal.n_starts,
                "refine_steps": opt.proposal.refine_steps,
                "refine_shrink": opt.proposal.refine_shrink,
                "use_upper_bound": opt.proposal.use_upper_bound,
            },
            "refit_every": opt.refit_every,
            "stall_limit": opt.stall_limit,
            "improvement_tol": opt.improvement_tol,
            "seed": opt.seed,
            "tune_hyperparams": opt.tune_hyperparams,
            "hyper_restarts": opt.hyper_restarts,
            "penalty_objective": opt.penalty_objective,
        },
        "records": [
            {
                "iteration": r.iteration,
                "x": list(r.x),
                "objective_s": r.objective_s,
                "feasible": r.feasible,
                "kappa": r.kappa,
                "incumbent_s": r.incumbent_s,
                "wall_ms": r.wall_ms,
            }
            for r in report.records
        ],
    }


def report_from_dict(doc: dict) -> OptimizationReport:
    try:
        cfg = doc["config"]
        schedule = KappaSchedule(
            kappa0=float(cfg["kappa"]["kappa0"]),
            a=float(cfg["kappa"]["a"]),
            b=float(cfg["kappa"]["b"]),
        )
        proposal = ProposalConfig(
            n_starts=int(cfg["proposal"]["n_starts"]),
            refine_steps=int(cfg["proposal"]["refine_steps"]),
            refine_shrink=float(cfg["proposal"]["refine_shrink"]),
            use_upper_bound=bool(cfg["proposal"]["use_upper_bound"]),
        )
        config = OptimizerConfig(
            n_init=int(cfg["n_init"]),
            n_sim=int(cfg["n_sim"]),
            schedule=schedule,
            proposal=proposal,
            refit_every=int(cfg["refit_every"]),
            stall_limit=int(cfg["stall_limit"]),
            improvement_tol=float(cfg["improvement_tol"]),
            seed=int(cfg["seed"]),
            tune_hyperparams=bool(cfg["tune_hyperparams"]),
            hyper_restarts=int(cfg["hyper_restarts"]),
            penalty_objective=float(cfg["penalty_objective"]),
        )
        entity_map = tuple((str(e[0]), int(e[1]), int(e[2])) for e in doc["entity_map"])
        records = tuple(
            IterationRecord(
                iteration=int(r["iteration"]),
                x=tuple(float(v) for v in r["x"]),
                objective_s=float(r["objective_s"]),
                feasible=bool(r["feasible"]),
                kappa=None if r["kappa"] is None else float(r["kappa"]),
                incumbent_s=None if r["incumbent_s"] is None else float(r["incumbent_s"]),
                wall_ms=float(r["wall_ms"]),
            )
            for r in doc["records"]
        )
        return OptimizationReport(records, config, entity_map, complete=bool(doc["complete"]))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ReportError(f"malformed report document: {exc}") from exc


def save_report(report: OptimizationReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_report(path) -> OptimizationReport:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ReportError(f"cannot read report file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ReportError(f"invalid JSON: {exc}") from exc
    return report_from_dict(doc)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(float(value))


def write_csv(report: OptimizationReport, path) -> None:
    """One row per evaluation; floats keep full round-trip precision."""
    lines = [CSV_HEADER]
    for r in report.records:
        lines.append(
            ",".join(
                [
                    str(r.iteration),
                    _fmt(r.objective_s),
                    _fmt(r.incumbent_s),
                    _fmt(r.kappa),
                    _fmt(r.feasible),
                ]
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def render_figure(report: OptimizationReport, path) -> None:
    """Objective trend over iterations with the incumbent and kappa traces."""
    iters = [r.iteration for r in report.records]
    objectives = [r.objective_s for r in report.records]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.scatter(iters, objectives, s=14, color="tab:gray", alpha=0.6, label="observed")
    inc_pts = [(r.iteration, r.incumbent_s) for r in report.records if r.incumbent_s is not None]
    if inc_pts:
        ax.step([p[0] for p in inc_pts], [p[1] for p in inc_pts], where="post",
                color="tab:blue", linewidth=2, label="incumbent")
    ax.set_xlabel("iteration")
    ax.set_ylabel("cycle time [s]")
    ax.grid(True, alpha=0.3)

    kap_pts = [(r.iteration, r.kappa) for r in report.records if r.kappa is not None]
    if kap_pts:
        ax2 = ax.twinx()
        ax2.plot([p[0] for p in kap_pts], [p[1] for p in kap_pts],
                 color="tab:orange", linestyle="--", linewidth=1, label="kappa")
        ax2.set_ylabel("kappa")
        lines1, labels1 = ax.get_legend_handles_labels()
        lines2, labels2 = ax2.get_legend_handles_labels()
        ax.legend(lines1 + lines2, labels1 + labels2, loc="upper right")
    else:
        ax.legend(loc="upper right")

    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
