from contextlib import contextmanager
from functools import lru_cache
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker, declarative_base

import config

Base = declarative_base()

SessionLocal = sessionmaker(
    autocommit=False,
    autoflush=False
)


def database_url(out: str | Path) -> str:
    """RADLAB_DATABASE_URL, or a SQLite file inside the sweep directory."""
    if config.DATABASE_URL:
        return config.DATABASE_URL
    return f"sqlite:///{(Path(out) / 'sweep.db').resolve()}"


@lru_cache(maxsize=None)
def _engine(url: str):
    return create_engine(url, pool_pre_ping=True)


def get_engine(out: str | Path):
    return _engine(database_url(out))


def init_db(out: str | Path) -> None:
    Path(out).mkdir(parents=True, exist_ok=True)
    # models must be imported before create_all sees the table
    import models  # noqa: F401
    Base.metadata.create_all(bind=get_engine(out))


@contextmanager
def session_scope(out: str | Path):
    """Session that commits on success and rolls back on error."""
    db = SessionLocal(bind=get_engine(out))
    try:
        yield db
        db.commit()
    except Exception:
        db.rollback()
        raise
    finally:
        db.close()
