"""
SQLAlchemy models and database setup for FreudGas
Registro opcional de los reportes de verificación
"""
import json
from datetime import datetime
from typing import List, Optional

from sqlalchemy import create_engine, Column, Integer, String, Float, DateTime, Text
from sqlalchemy.orm import declarative_base, sessionmaker, Session

from config import settings
from models import ExperimentReport

DATABASE_URL = settings.database_url

engine = create_engine(
    DATABASE_URL,
    connect_args={"check_same_thread": False} if "sqlite" in DATABASE_URL else {}
)

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


class ExperimentRun(Base):
    __tablename__ = "experiment_runs"

    id = Column(Integer, primary_key=True, index=True)
    name = Column(String, index=True)
    seed = Column(String)  # 64 bits no caben en INTEGER de SQLite
    verdict = Column(String, default="inconclusive")  # pass, fail, inconclusive
    p = Column(Float, nullable=True)
    beta = Column(Float, nullable=True)
    alpha = Column(Float, nullable=True)
    N = Column(Integer, nullable=True)
    report_json = Column(Text)
    runtime_seconds = Column(Float, default=0.0)
    created_at = Column(DateTime, default=datetime.utcnow)

    class Config:
        from_attributes = True


def init_db(bind=None) -> None:
    """Crea las tablas si no existen"""
    Base.metadata.create_all(bind=bind or engine)


def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()


def save_report(db: Session, report: ExperimentReport) -> ExperimentRun:
    model = report.model or {}
    run = ExperimentRun(
        name=report.name,
        seed=str(report.seed),
        verdict=report.overall().value,
        p=model.get("p"),
        beta=model.get("beta"),
        alpha=model.get("alpha"),
        N=int(model["N"]) if "N" in model else None,
        report_json=report.to_json(),
        runtime_seconds=report.runtime_seconds,
        created_at=report.created_at,
    )
    db.add(run)
    db.commit()
    db.refresh(run)
    return run


def list_runs(db: Session, name: Optional[str] = None, limit: int = 50) -> List[ExperimentRun]:
    query = db.query(ExperimentRun)
    if name:
        query = query.filter(ExperimentRun.name == name)
    return query.order_by(ExperimentRun.created_at.desc()).limit(limit).all()


def load_report(run: ExperimentRun) -> ExperimentReport:
    report = ExperimentReport.model_validate(json.loads(run.report_json))
    report.runtime_seconds = run.runtime_seconds
    report.created_at = run.created_at
    return report
