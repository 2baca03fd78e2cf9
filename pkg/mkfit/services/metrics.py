import logging
from pathlib import Path
from typing import Union

from prometheus_client import CollectorRegistry, Counter, Gauge, Histogram, write_to_textfile

from mkfit.evolve import Diagnostics

logger = logging.getLogger(__name__)


class RunMetrics:
    """Per-run collectors, written as a textfile at the end of the run"""

    def __init__(self):
        self.registry = CollectorRegistry()
        self.steps = Counter(
            "mkfit_steps", "Evolution steps completed", registry=self.registry,
        )
        self.step_seconds = Histogram(
            "mkfit_step_seconds", "Wall time of one evolution step",
            buckets=(0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.5, 5.0, 10.0),
            registry=self.registry,
        )
        self.step_size_warnings = Counter(
            "mkfit_step_size_warnings", "Steps whose effective size exceeded objective/C_F",
            registry=self.registry,
        )
        self.objective = Gauge("mkfit_objective", "Objective at the latest step", registry=self.registry)
        self.arclength = Gauge("mkfit_arclength", "Arc length at the latest step", registry=self.registry)
        self.sites = Gauge("mkfit_sites", "Number of curve samples at the latest step", registry=self.registry)

    def observe(self, diagnostics: Diagnostics) -> None:
        self.steps.inc()
        self.step_seconds.observe(diagnostics.seconds)
        if diagnostics.step_bound_violated:
            self.step_size_warnings.inc()
        self.objective.set(diagnostics.objective)
        self.arclength.set(diagnostics.arclength)
        self.sites.set(diagnostics.n_samples)

    def write(self, path: Union[str, Path]) -> None:
        write_to_textfile(str(path), self.registry)
        logger.info(f"Metrics written to {path}")
