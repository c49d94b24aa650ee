"""
Run Registry - SQLite with SQLAlchemy

One row per finished experiment. The registry is optional: runs are only
recorded when ANISO_REGISTRY_PATH is set.
"""
import logging
import uuid
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

from sqlalchemy import Column, DateTime, Float, Integer, String, create_engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker

from app.config import settings
from app.schemas.reports import ExperimentReport

logger = logging.getLogger("db")

# Create base class for models
Base = declarative_base()


def _utcnow() -> datetime:
    return datetime.now(timezone.utc)


# ============ Database Models ============

class RunModel(Base):
    """Run table model"""
    __tablename__ = "runs"

    id = Column(String, primary_key=True)
    experiment = Column(String, nullable=False)
    config_digest = Column(String, nullable=False, index=True)
    seed = Column(Integer, nullable=True)
    n_paths = Column(Integer, nullable=True)
    verdict = Column(String, nullable=False)
    wall_time = Column(Float, nullable=False, default=0.0)
    report_path = Column(String, nullable=True)

    # Metadata
    created_at = Column(DateTime, default=_utcnow)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary"""
        return {
            "id": self.id,
            "experiment": self.experiment,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "n_paths": self.n_paths,
            "verdict": self.verdict,
            "wall_time": self.wall_time,
            "report_path": self.report_path,
            "created_at": self.created_at.isoformat() if self.created_at else None,
        }


class RunRegistry:
    """Service for recording experiment runs using SQLAlchemy"""

    def __init__(self):
        self.engine = None
        self.SessionLocal = None
        self._url: Optional[str] = None

    @property
    def enabled(self) -> bool:
        return self.SessionLocal is not None or settings.registry_url is not None

    def initialize(self, path: Optional[str] = None):
        """Open the database (settings.registry_path unless given) and create tables"""
        url = f"sqlite:///{path}" if path else settings.registry_url
        if url is None:
            raise RuntimeError("run registry path is not configured")
        if self._url == url:
            return
        if path:
            Path(path).parent.mkdir(parents=True, exist_ok=True)

        self.engine = create_engine(url, connect_args={"check_same_thread": False})
        self.SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=self.engine)
        Base.metadata.create_all(bind=self.engine)
        self._url = url
        logger.debug(f"Run registry initialized: {url}")

    def get_session(self) -> Session:
        """Get database session"""
        self._ensure_initialized()
        return self.SessionLocal()

    def _ensure_initialized(self):
        if self.SessionLocal is None:
            self.initialize()

    def record_run(self, report: ExperimentReport, report_path: Optional[str] = None) -> Dict[str, Any]:
        """Store one finished experiment"""
        with self.get_session() as session:
            run = RunModel(
                id=str(uuid.uuid4()),
                experiment=report.experiment,
                config_digest=report.config_digest,
                seed=report.seed,
                n_paths=report.n_paths,
                verdict=report.verdict.value,
                wall_time=report.wall_time,
                report_path=report_path,
            )
            session.add(run)
            session.commit()
            session.refresh(run)
            logger.debug(f"recorded run {run.id} ({run.experiment}, {run.verdict})")
            return run.to_dict()

    def list_runs(self, limit: int = 20) -> List[Dict[str, Any]]:
        """Most recent runs first"""
        with self.get_session() as session:
            runs = session.query(RunModel).order_by(
                RunModel.created_at.desc()
            ).limit(limit).all()
            return [r.to_dict() for r in runs]


# Global run registry instance
run_registry = RunRegistry()
