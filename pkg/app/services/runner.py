"""
Experiment Runner - one experiment per config

Applies the ANISO_SEED / ANISO_WORKERS overrides, dispatches on the
experiment kind, wraps the result in a versioned ExperimentReport and
writes the JSON report, the CSV table and NDJSON paths that were asked for.
"""
import csv
import json
import logging
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, NamedTuple, Optional

from app.config import settings
from app.schemas.experiment import ExperimentConfig, ExperimentKind, GridSpec
from app.schemas.reports import ExperimentReport, Verdict
from app.services.boxes import box_service
from app.services.db import run_registry
from app.services.energy import NASH_MAX_SPREAD, energy_service
from app.services.ladder import ladder_service
from app.services.pool import PathPool
from app.services.scaling import scaling_service
from app.services.simulate import simulation_service
from app.services.verify import (
    DIAGONAL_MAX_SPREAD,
    ENVELOPE_MAX_SPREAD,
    MOMENT_MAX_SPREAD,
    SMALL_JUMP_TOLERANCE,
    verification_service,
)
from app.utils.errors import AnisoError, InvariantViolation
from app.utils.logger import ExperimentLogger

logger = logging.getLogger("runner")

FRAKN_KAPPAS = (1e-3, 1.0, 1e3)
FRAKN_DELTA_MAX = 40


class Outcome(NamedTuple):
    """What an experiment handler hands back to the runner"""
    verdict: Verdict
    summary: Dict[str, Any]
    payload: Dict[str, Any]
    rows: List[Dict[str, Any]]
    n_paths: Optional[int] = None


def _flatten(row: Dict[str, Any]) -> Dict[str, Any]:
    return {
        key: json.dumps(value, sort_keys=True) if isinstance(value, (list, dict)) else value
        for key, value in row.items()
    }


def write_csv(path: str, rows: List[Dict[str, Any]]):
    """One row per table entry; nested values are JSON-encoded"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fieldnames = sorted({key for row in rows for key in row})
    with target.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames, extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(_flatten(row))


def write_ndjson(path: str, records: List[Dict[str, Any]]):
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True) + "\n")


class ExperimentRunner:
    """Service for running configured experiments"""

    def __init__(self):
        self._handlers: Dict[ExperimentKind, Callable[[ExperimentConfig, PathPool], Outcome]] = {
            ExperimentKind.PHI_CHECK: self._phi_check,
            ExperimentKind.ENVELOPE: self._envelope,
            ExperimentKind.EXIT: self._exit,
            ExperimentKind.MOMENTS: self._moments,
            ExperimentKind.DIAG: self._diag,
            ExperimentKind.LADDER: self._ladder,
            ExperimentKind.NASH: self._nash,
            ExperimentKind.BOXES: self._boxes,
            ExperimentKind.SIMULATE: self._simulate,
        }

    def apply_overrides(self, config: ExperimentConfig) -> ExperimentConfig:
        """ANISO_SEED replaces the configured seed"""
        if settings.seed is not None and settings.seed != config.seed:
            logger.info(f"seed overridden by ANISO_SEED: {config.seed} -> {settings.seed}")
            return config.model_copy(update={"seed": settings.seed})
        return config

    def run(self, config: ExperimentConfig) -> ExperimentReport:
        config = self.apply_overrides(config)
        kind = config.experiment
        exp_logger = ExperimentLogger(kind.value)
        workers = settings.workers or config.n_workers or 1
        pool = PathPool(workers=workers, on_progress=exp_logger.log_progress)
        digest = config.digest()

        exp_logger.log_start(digest, config.seed, config.n_paths)
        started = time.perf_counter()
        try:
            outcome = self._handlers[kind](config, pool)
        except AnisoError as e:
            exp_logger.log_error(e)
            raise
        wall_time = time.perf_counter() - started

        report = ExperimentReport(
            experiment=kind.value,
            config_digest=digest,
            seed=config.seed,
            n_paths=outcome.n_paths,
            wall_time=wall_time,
            summary=outcome.summary,
            payload=outcome.payload,
            verdict=outcome.verdict,
        )
        self.write_outputs(config, report, outcome.rows)
        if run_registry.enabled:
            run_registry.record_run(report, report_path=config.out)
        exp_logger.log_end(report.verdict.value, report.summary, wall_time)
        return report

    def write_outputs(self, config: ExperimentConfig, report: ExperimentReport,
                      rows: List[Dict[str, Any]]):
        if config.out:
            target = Path(config.out)
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(report.to_json(), encoding="utf-8")
            logger.debug(f"report written to {target}")
        if config.csv_out:
            write_csv(config.csv_out, rows)

    # ---- handlers ----------------------------------------------------

    def _phi_check(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        phi = config.certified_phi()
        ws = scaling_service.check_ws(phi)
        integrability = scaling_service.levy_integrability(phi)
        passed = ws.passed and integrability.passed
        summary = {
            "family": phi.label(),
            "n_violations": ws.n_violations,
            "worst_ratio": ws.worst_ratio,
            "monotone": ws.monotone,
            "fitted_c_lower": ws.fitted_c_lower,
            "fitted_c_upper": ws.fitted_c_upper,
            "integrability_passed": integrability.passed,
        }
        payload = {
            "ws": ws.model_dump(mode="json"),
            "integrability": integrability.model_dump(mode="json"),
        }
        rows = [v.model_dump(mode="json") for v in ws.violations]
        return Outcome(Verdict.PASS if passed else Verdict.FAIL, summary, payload, rows)

    def _envelope(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        """Envelope ratios at t, checked against a wrong-time and a wrong-φ control"""
        t = config.t
        sim = config.sim_config(horizon=t)
        simulation_service.check_config(sim)
        phi = sim.phi
        start = sim.start_point
        kappa = scaling_service.inverse(phi, t)
        grid = GridSpec.around(start, kappa, config.half_width_factor, config.bin_factor)
        max_spread = config.max_spread or ENVELOPE_MAX_SPREAD
        tolerance = config.small_jump_tolerance
        strict = tolerance <= SMALL_JUMP_TOLERANCE
        if not strict:
            logger.warning(f"small-jump tolerance relaxed to {tolerance:g} (strict is {SMALL_JUMP_TOLERANCE:g})")
        gate = verification_service.small_jump_gate(sim, t, tolerance)

        hist = verification_service.empirical_density(simulation_service.terminals(sim, pool), grid)
        main = verification_service.envelope_ratio_report(
            hist, t, start, phi, config.min_count, max_spread
        )

        # same envelope, process run for the wrong time
        control_sim = sim.with_horizon(config.control_factor * t)
        control_hist = verification_service.empirical_density(
            simulation_service.terminals(control_sim, pool), grid
        )
        wrong_t = verification_service.control_band_check(
            main, control_hist, t, start, phi, "wrong_t",
            config.min_count, config.control_margin, factor=config.control_factor,
        )
        # same histogram, envelope under the wrong scaling function
        wrong_phi = verification_service.control_band_check(
            main, hist, t, start, verification_service.wrong_phi(phi, t, config.control_alpha),
            "wrong_phi", config.min_count, config.control_margin,
        )
        controls = (wrong_t, wrong_phi)

        if not gate:
            verdict = Verdict.INCONCLUSIVE
        elif main.verdict != Verdict.PASS:
            verdict = main.verdict
        elif not all(control.rejected for control in controls):
            for control in controls:
                if not control.rejected:
                    logger.warning(f"{control.kind} control was not rejected ({control.verdict.value})")
            verdict = Verdict.INCONCLUSIVE
        else:
            verdict = Verdict.PASS

        summary = {
            "t": t,
            "kappa": kappa,
            "c1": main.c1,
            "c2": main.c2,
            "spread": main.spread,
            "n_trusted": main.n_trusted,
            "overflow": hist.overflow,
            "small_jump_gate": gate,
            "small_jump_tolerance": tolerance,
            "strict_tolerance": strict,
            "control_t_rejected": wrong_t.rejected,
            "control_phi_rejected": wrong_phi.rejected,
        }
        payload = {
            "grid": grid.model_dump(mode="json"),
            "main": main.model_dump(mode="json"),
            "controls": {control.kind: control.model_dump(mode="json") for control in controls},
            "control_factor": config.control_factor,
            "small_jump_scale": verification_service.small_jump_scale(sim, t),
            "small_jump_tolerance": tolerance,
            "strict_tolerance": strict,
        }
        rows = [cell.model_dump(mode="json") for cell in main.cells]
        return Outcome(verdict, summary, payload, rows, sim.n_paths)

    def _exit(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        sim = config.sim_config(horizon=config.t)
        simulation_service.check_config(sim)
        report = verification_service.exit_time_tail(sim, sim.start_point, config.r_list, config.t, pool)
        summary = {"t": config.t, "sup_const": report.sup_const, "sup_r": report.sup_r}
        rows = [row.model_dump(mode="json") for row in report.rows]
        return Outcome(report.verdict, summary, report.model_dump(mode="json"), rows, sim.n_paths)

    def _moments(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        sim = config.sim_config()
        report = verification_service.exit_moments(
            sim, sim.start_point, config.radii, config.max_spread or MOMENT_MAX_SPREAD, pool
        )
        summary = {"mean_spread": report.mean_spread, "second_spread": report.second_spread}
        rows = [row.model_dump(mode="json") for row in report.rows]
        return Outcome(report.verdict, summary, report.model_dump(mode="json"), rows, sim.n_paths)

    def _diag(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        sim = config.sim_config()
        for t in config.t_list:
            simulation_service.check_config(sim.with_horizon(t))
        gates = {
            str(t): verification_service.small_jump_gate(sim, t, config.small_jump_tolerance)
            for t in config.t_list
        }
        report = verification_service.on_diagonal_check(
            sim, config.t_list, config.min_count, config.max_spread or DIAGONAL_MAX_SPREAD, pool=pool
        )
        verdict = report.verdict if all(gates.values()) else Verdict.INCONCLUSIVE
        summary = {
            "spread": report.spread,
            "slope": report.slope,
            "expected_slope": report.expected_slope,
            "small_jump_gate": all(gates.values()),
            "small_jump_tolerance": config.small_jump_tolerance,
            "strict_tolerance": config.small_jump_tolerance <= SMALL_JUMP_TOLERANCE,
        }
        payload = report.model_dump(mode="json")
        payload["small_jump_gates"] = gates
        payload["small_jump_tolerance"] = config.small_jump_tolerance
        rows = [row.model_dump(mode="json") for row in report.rows]
        return Outcome(verdict, summary, payload, rows, sim.n_paths)

    def _ladder(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        table = ladder_service.theta(config.dim, config.alpha_lower, config.alpha_upper)
        schedule = ladder_service.ladder_schedule(config.dim, config.alpha_lower, config.alpha_upper)
        payload: Dict[str, Any] = {
            "theta": table.model_dump(mode="json"),
            "schedule": [step.model_dump(mode="json") for step in schedule],
        }
        summary: Dict[str, Any] = {
            "theta": table.theta,
            "steps": table.steps,
            "n_transitions": len(schedule),
            "final": schedule[-1].target.model_dump(mode="json") if schedule else None,
        }
        verdict = Verdict.PASS
        phi = config.certified_phi()
        if phi is not None:
            bounds = ladder_service.frakN_bounds_check(phi, FRAKN_KAPPAS, FRAKN_DELTA_MAX)
            payload["frakN"] = bounds.model_dump(mode="json")
            summary["frakN_worst_slack"] = bounds.worst_slack
            if not bounds.passed:
                verdict = Verdict.FAIL
        rows = [
            {
                "source_q": step.source.q, "source_l": step.source.l,
                "target_q": step.target.q, "target_l": step.target.l,
                "rule": step.rule,
            }
            for step in schedule
        ]
        return Outcome(verdict, summary, payload, rows)

    def _nash(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        spec = config.kernel_spec()
        report = energy_service.nash_check(
            spec.phi, spec, config.scales, config.nodes, config.max_spread or NASH_MAX_SPREAD
        )
        summary = {"spread": report.spread, "min_ratio": report.min_ratio, "max_ratio": report.max_ratio}
        rows = [row.model_dump(mode="json") for row in report.rows]
        return Outcome(report.verdict, summary, report.model_dump(mode="json"), rows)

    def _boxes(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        point = config.point
        center = config.center or (0.0,) * len(point)
        box = box_service.box_index(point, center, config.kappa)
        w = [(p - c) / config.kappa for p, c in zip(point, center)]
        if not box.contains(w):
            raise InvariantViolation(f"{box.label()} does not contain {w}")
        summary: Dict[str, Any] = {
            "label": box.label(),
            "k": box.k,
            "gamma": list(box.gamma) if box.gamma else None,
            "signs": list(box.signs) if box.signs else None,
        }
        if not box.is_d0:
            summary["box_count"] = box_service.box_count(box.k, len(point))
        payload = {"box": box.model_dump(mode="json"), "normalized": w}
        return Outcome(Verdict.PASS, summary, payload, [summary])

    def _simulate(self, config: ExperimentConfig, pool: PathPool) -> Outcome:
        sim = config.sim_config()
        records = simulation_service.summaries(sim, events=config.events, pool=pool)
        if config.paths_out:
            write_ndjson(config.paths_out, records)
        n_events = [record["n_events"] for record in records]
        summary = {
            "n_paths": len(records),
            "horizon": sim.horizon,
            "mean_events": sum(n_events) / len(n_events),
            "max_events": max(n_events),
            "expected_jumps": simulation_service.expected_jumps(sim),
        }
        rows = [{key: value for key, value in record.items() if key != "events"} for record in records]
        return Outcome(Verdict.PASS, summary, {"paths_out": config.paths_out}, rows, sim.n_paths)


# Global experiment runner instance
experiment_runner = ExperimentRunner()
