import json
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import List, Optional, Tuple, Union

from sqlalchemy.orm import Session, sessionmaker

from mkfit.config import settings
from mkfit.database import ledger_url, make_session_factory
from mkfit.errors import (
    ArgumentError, ConfigError, DegeneracyError, NumericalError, StageError, TopologyError,
)
from mkfit.evolve import EvolveConfig, FrameRecord, run
from mkfit.field import MASS_SUM_TOLERANCE, discrete_field
from mkfit.geometry import voronoi_cells
from mkfit.measure import support_domain
from mkfit.models import EvolutionRun, IterationRecord, RunStatus
from mkfit.schemas import RunConfigFile, load_run_config
from mkfit.services.artifacts import (
    read_points_csv, write_diagnostics_csv, write_field_csv, write_frame_svg, write_points_csv,
)
from mkfit.services.metrics import RunMetrics
from mkfit.services.oracles import run_suite

logger = logging.getLogger(__name__)

CI_MAX_ITERATIONS = 50
CI_ITERATION_DIVISOR = 100


@dataclass
class RunOutcome:
    status: RunStatus
    exit_code: int
    message: str = ""
    frames: Optional[List[FrameRecord]] = None


def ci_iterations(iterations: int) -> int:
    return max(1, min(CI_MAX_ITERATIONS, iterations // CI_ITERATION_DIVISOR))


def classify_error(exc: Exception) -> Tuple[RunStatus, int, str]:
    """
    Classify a failure into (status, exit code, error type)

    Config and argument problems exit 2, aborted evolution stages exit 3,
    anything else exits 1.
    """
    if isinstance(exc, (ConfigError, ArgumentError)):
        return RunStatus.CONFIG_ERROR, 2, type(exc).__name__
    if isinstance(exc, StageError):
        cause = exc.cause
        if isinstance(cause, (DegeneracyError, TopologyError)):
            return RunStatus.GEOMETRY_ERROR, 3, exc.stage
        if isinstance(cause, NumericalError):
            return RunStatus.NUMERICAL_ERROR, 3, exc.stage
        return RunStatus.FAILED, 3, exc.stage
    if isinstance(exc, (DegeneracyError, TopologyError)):
        return RunStatus.CONFIG_ERROR, 2, type(exc).__name__
    return RunStatus.FAILED, 1, type(exc).__name__


class RunExecutor:
    """Executes a run config, writes its artifacts and records it in the ledger"""

    def __init__(self, session_factory: Optional[sessionmaker] = None):
        self._session_factory = session_factory

    def _sessions(self, out_dir: Path) -> Optional[sessionmaker]:
        if self._session_factory is None and settings.ledger_enabled:
            self._session_factory = make_session_factory(ledger_url(out_dir))
        return self._session_factory

    def execute(
        self,
        config_path: Union[str, Path],
        out_dir: Union[str, Path],
        frames_every: Optional[int] = None,
        ci: bool = False,
    ) -> RunOutcome:
        """
        Run an evolution from a config file

        Args:
            config_path: run-config JSON
            out_dir: artifact directory (created if missing)
            frames_every: frame stride overriding the config's
            ci: truncate iterations for fast pipelines

        Returns:
            RunOutcome with the ledger status and the CLI exit code
        """
        config_path = Path(config_path)
        out_dir = Path(out_dir)
        try:
            document = load_run_config(config_path)
            iterations = ci_iterations(document.iterations) if ci else document.iterations
            config = document.to_evolve_config(config_path.parent, iterations=iterations, frame_stride=frames_every)
        except Exception as e:
            status, code, _ = classify_error(e)
            logger.error(f"Config {config_path} rejected: {e}")
            return RunOutcome(status, code, str(e))

        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "frames").mkdir(exist_ok=True)
        sessions = self._sessions(out_dir)
        db = sessions() if sessions is not None else None
        record = None
        if db is not None:
            record = EvolutionRun(
                name=document.name,
                config_path=str(config_path),
                out_dir=str(out_dir),
                config_json=json.dumps(document.model_dump(mode="json")),
                iterations_requested=config.iterations,
                ci_mode=ci,
                started_at=datetime.utcnow(),
            )
            db.add(record)
            db.commit()

        logger.info(f"Run '{document.name}' started: {config.iterations} iterations -> {out_dir}")
        try:
            frames = self._evolve(document, config, out_dir, db, record)
        except Exception as e:
            status, code, error_type = classify_error(e)
            logger.error(f"Run '{document.name}' aborted: {e}", exc_info=True)
            if db is not None:
                record.status = status
                record.error_message = str(e)
                record.error_type = error_type
                record.failed_stage = e.stage if isinstance(e, StageError) else None
                record.completed_at = datetime.utcnow()
                db.commit()
                db.close()
            return RunOutcome(status, code, str(e))

        last = frames[-1].diagnostics
        if db is not None:
            record.status = RunStatus.SUCCESS
            record.iterations_completed = len(frames)
            record.final_objective = last.objective
            record.final_arclength = last.arclength
            record.final_cost = last.cost_total
            record.completed_at = datetime.utcnow()
            db.commit()
            db.close()
        logger.info(
            f"Run '{document.name}' finished: objective {frames[0].diagnostics.objective:.6g} -> "
            f"{last.objective:.6g}, arclength {last.arclength:.6g}"
        )
        return RunOutcome(RunStatus.SUCCESS, 0, "", frames)

    def _evolve(self, document: RunConfigFile, config: EvolveConfig, out_dir: Path,
                db: Optional[Session], record: Optional[EvolutionRun]) -> List[FrameRecord]:
        metrics = RunMetrics()

        def on_frame(frame: FrameRecord) -> None:
            diag = frame.diagnostics
            metrics.observe(diag)
            if db is not None:
                db.add(IterationRecord(
                    run_id=record.id,
                    iteration=diag.iteration,
                    n_samples=diag.n_samples,
                    arclength=diag.arclength,
                    objective=diag.objective,
                    cost_total=diag.cost_total,
                    soft_objective=diag.soft_objective,
                    max_field=diag.max_field,
                    max_gradient=diag.max_gradient,
                    c=diag.c,
                    lam=diag.lam,
                    effective_step=diag.effective_step,
                    step_bound_violated=diag.step_bound_violated,
                    seconds=diag.seconds,
                ))
                record.iterations_completed = diag.iteration + 1
                db.commit()
            if not frame.is_frame:
                return
            if document.oracles.mass_conservation:
                total = float(frame.field.masses.sum())
                if abs(total - 1.0) > MASS_SUM_TOLERANCE:
                    logger.warning(f"Iteration {frame.iteration}: cell masses sum to {total:.12f}")
            write_frame_svg(
                out_dir / "frames" / f"{frame.iteration:04d}.svg",
                config.domain, frame.samples, frame.cells, frame.field,
            )
            logger.info(
                f"Frame {frame.iteration}: objective={diag.objective:.6g} "
                f"arclength={diag.arclength:.6g} samples={diag.n_samples}"
            )

        frames = run(config, on_frame=on_frame)
        write_diagnostics_csv(out_dir / "diagnostics.csv", [f.diagnostics.as_row() for f in frames])
        write_points_csv(out_dir / "final_curve.csv", frames[-1].knots)
        if settings.metrics_enabled:
            metrics.write(out_dir / "metrics.prom")
        for suite in document.oracles.suites:
            for check in run_suite(suite, seed=config.rng_seed, ci=True):
                (logger.info if check.passed else logger.warning)(check.line())
        logger.info(f"Artifacts written to {out_dir}")
        return frames


def compute_field_dump(config_path: Union[str, Path], sites_csv: Union[str, Path],
                       out_csv: Union[str, Path]) -> RunOutcome:
    """One-shot barycenter field of the config's target at the given sites"""
    try:
        document = load_run_config(config_path)
        config = document.to_evolve_config(Path(config_path).parent)
        sites = read_points_csv(sites_csv)
        if len(sites) == 0:
            raise ArgumentError(f"{sites_csv}: no sites")
        cells = voronoi_cells(sites, support_domain(config.measure, sites))
        field = discrete_field(sites, cells, config.measure, config.p)
    except Exception as e:
        status, code, _ = classify_error(e)
        logger.error(f"Field dump failed: {e}")
        return RunOutcome(status, code, str(e))
    write_field_csv(out_csv, sites, field)
    logger.info(f"Field at {len(sites)} sites written to {out_csv}")
    return RunOutcome(RunStatus.SUCCESS, 0)
