from pathlib import Path
from typing import Optional, Union

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker
from mkfit.config import settings
from mkfit.models import Base
import logging

logger = logging.getLogger(__name__)


def ledger_url(out_dir: Union[str, Path]) -> str:
    """Ledger URL for a run: the configured one, else sqlite next to the artifacts"""
    if settings.database_url:
        return settings.database_url
    return f"sqlite:///{Path(out_dir).resolve() / 'ledger.db'}"


def make_session_factory(url: str, engine_kwargs: Optional[dict] = None) -> sessionmaker:
    """Create the engine, make sure tables exist, return a session factory"""
    engine = create_engine(url, echo=False, future=True, pool_pre_ping=True, **(engine_kwargs or {}))
    Base.metadata.create_all(engine)
    logger.info(f"Run ledger initialized at {engine.url.render_as_string(hide_password=True)}")
    return sessionmaker(engine, class_=Session, expire_on_commit=False, autoflush=False)
