from sqlalchemy import (
    Column, Integer, String, DateTime, Float,
    Boolean, Text, ForeignKey, Enum as SQLEnum
)
from sqlalchemy.orm import declarative_base, relationship
from datetime import datetime
import enum

Base = declarative_base()


class RunStatus(str, enum.Enum):
    """Outcome of an evolution run"""
    SUCCESS = "SUCCESS"
    CONFIG_ERROR = "CONFIG_ERROR"
    GEOMETRY_ERROR = "GEOMETRY_ERROR"
    NUMERICAL_ERROR = "NUMERICAL_ERROR"
    FAILED = "FAILED"


class EvolutionRun(Base):
    """One invocation of `run` against a config file"""
    __tablename__ = "evolution_runs"

    id = Column(Integer, primary_key=True, index=True)
    name = Column(String(255), nullable=False, index=True)
    config_path = Column(String(2048), nullable=False)
    out_dir = Column(String(2048), nullable=False)
    config_json = Column(Text, nullable=True)  # validated config snapshot

    status = Column(SQLEnum(RunStatus), nullable=True)
    started_at = Column(DateTime, default=datetime.utcnow, nullable=False, index=True)
    completed_at = Column(DateTime, nullable=True)

    iterations_requested = Column(Integer, nullable=False)
    iterations_completed = Column(Integer, default=0, nullable=False)
    ci_mode = Column(Boolean, default=False, nullable=False)

    # Final state
    final_objective = Column(Float, nullable=True)
    final_arclength = Column(Float, nullable=True)
    final_cost = Column(Float, nullable=True)

    # Error details
    error_message = Column(Text, nullable=True)
    error_type = Column(String(100), nullable=True)  # stage name or exception class
    failed_stage = Column(String(100), nullable=True)

    # Relationships
    iterations = relationship("IterationRecord", back_populates="run", cascade="all, delete-orphan")


class IterationRecord(Base):
    """Diagnostics of a single evolution step"""
    __tablename__ = "iteration_records"

    id = Column(Integer, primary_key=True, index=True)
    run_id = Column(Integer, ForeignKey("evolution_runs.id", ondelete="CASCADE"), nullable=False, index=True)
    iteration = Column(Integer, nullable=False)

    n_samples = Column(Integer, nullable=False)
    arclength = Column(Float, nullable=False)
    objective = Column(Float, nullable=False)
    cost_total = Column(Float, nullable=False)
    soft_objective = Column(Float, nullable=False)
    max_field = Column(Float, nullable=False)
    max_gradient = Column(Float, nullable=False)
    c = Column(Float, nullable=False)
    lam = Column(Float, nullable=False)
    effective_step = Column(Float, nullable=False)
    step_bound_violated = Column(Boolean, default=False, nullable=False)
    seconds = Column(Float, nullable=True)

    # Relationships
    run = relationship("EvolutionRun", back_populates="iterations")
