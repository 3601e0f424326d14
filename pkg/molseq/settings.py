"""
Runtime settings for molseq scripts and the dashboard.

Values are layered: built-in defaults, then the `[molseq]` table of an optional
`molseq.toml` in the project root, then MOLSEQ_* environment variables.
"""
from __future__ import annotations

import logging
import os
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, fields, replace

logger = logging.getLogger(__name__)

project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

ENV_VARS = {
    "workers": "MOLSEQ_WORKERS",
    "log_dir": "MOLSEQ_LOG_DIR",
    "log_level": "MOLSEQ_LOG_LEVEL",
    "data_dir": "MOLSEQ_DATA_DIR",
}


@dataclass(frozen=True)
class Settings:
    workers: int = 1
    log_dir: str = "logs"
    log_level: str = "INFO"
    data_dir: str = "data"

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if logging.getLevelName(self.log_level.upper()) == f"Level {self.log_level.upper()}":
            raise ValueError(f"unknown log level '{self.log_level}'")


def _coerce(name, value):
    if name == "workers":
        return int(value)
    return str(value)


def load_settings_file(path: str) -> dict:
    """Read the [molseq] table from a TOML file (empty if the file is absent)."""
    if not os.path.exists(path):
        return {}
    with open(path, "rb") as f:
        data = tomllib.load(f)
    table = data.get("molseq", {})
    known = {f.name for f in fields(Settings)}
    unknown = sorted(set(table) - known)
    if unknown:
        logger.warning(f"⚠️ Ignoring unknown settings in {path}: {', '.join(unknown)}")
    return {k: v for k, v in table.items() if k in known}


def load_settings(path: str = None, environ: dict = None) -> Settings:
    """Resolve settings from defaults, molseq.toml and the environment."""
    environ = os.environ if environ is None else environ
    path = path or os.path.join(project_root, "molseq.toml")

    overrides = {k: _coerce(k, v) for k, v in load_settings_file(path).items()}
    for name, var in ENV_VARS.items():
        if environ.get(var):
            overrides[name] = _coerce(name, environ[var])
    return replace(Settings(), **overrides)


def setup_logging(settings: Settings = None, filename: str = "molseq.log", stream=None) -> logging.Logger:
    """Configure root logging to a log file and stdout."""
    settings = settings or load_settings()
    os.makedirs(settings.log_dir, exist_ok=True)
    log_file = os.path.join(settings.log_dir, filename)

    logging.basicConfig(
        level=getattr(logging, settings.log_level.upper()),
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=[
            logging.FileHandler(log_file),
            logging.StreamHandler(stream or sys.stdout),
        ],
        force=True,
    )
    return logging.getLogger("molseq")
