"""Database configuration and session management for the run registry."""
from pathlib import Path

from sqlalchemy import create_engine
from sqlalchemy.orm import declarative_base, sessionmaker

from app.config import DATABASE_URL

Base = declarative_base()


def make_engine(url: str = DATABASE_URL):
    """Create an engine, creating the sqlite file's directory when needed."""
    if url.startswith("sqlite:///") and url != "sqlite:///:memory:":
        Path(url[len("sqlite:///"):]).parent.mkdir(parents=True, exist_ok=True)
    return create_engine(
        url,
        connect_args={"check_same_thread": False} if "sqlite" in url else {},
        echo=False,
    )


def make_session_factory(url: str = DATABASE_URL):
    """Session factory bound to ``url``, with the registry tables created."""
    engine = make_engine(url)
    init_db(engine)
    return sessionmaker(autocommit=False, autoflush=False, bind=engine)


def init_db(engine) -> None:
    # Import models so their tables are registered on Base
    from app import models  # noqa: F401
    Base.metadata.create_all(bind=engine)
