"""
Runtime configuration for the eco-lane planner.

Values come from the environment (or a .env file next to the code) and fall
back to the defaults below.
"""

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

from errors import ScenarioError

# Parameters
PROJECT_DIR = Path(__file__).resolve().parent
DEFAULT_SCENARIO_DIR = PROJECT_DIR / "scenarios"
DEFAULT_OUTPUT_DIR = Path("out")
LOG_FORMAT = "(%(tag)s): %(message)s"

load_dotenv(PROJECT_DIR / ".env", override=True)

OUTPUT_DIR = Path(os.getenv("ECO_PLANNER_OUTPUT_DIR", str(DEFAULT_OUTPUT_DIR)))
LOG_LEVEL = os.getenv("ECO_PLANNER_LOG_LEVEL", "INFO").upper()
SERVER_HOST = os.getenv("ECO_PLANNER_HOST", "127.0.0.1")
SERVER_PORT = int(os.getenv("ECO_PLANNER_PORT", "5000"))

_configured = False


class _TagFormatter(logging.Formatter):
    def format(self, record):
        record.tag = record.name.rsplit(".", 1)[-1]
        return super().format(record)


def _configure_root():
    global _configured
    if _configured:
        return
    handler = logging.StreamHandler()
    handler.setFormatter(_TagFormatter(LOG_FORMAT))
    root = logging.getLogger("eco")
    root.addHandler(handler)
    root.setLevel(getattr(logging, LOG_LEVEL, logging.INFO))
    root.propagate = False
    _configured = True


def get_logger(tag):
    """Logger whose records render as "(TAG): message"."""
    _configure_root()
    return logging.getLogger(f"eco.{tag}")


def scenario_dir():
    # read at call time so tests and the cli can point it elsewhere
    return Path(os.getenv("ECO_PLANNER_SCENARIO_DIR", str(DEFAULT_SCENARIO_DIR)))


def resolve_scenario_path(name_or_path):
    """Return an existing scenario path for a file path or a bundled scenario name."""
    candidate = Path(name_or_path)
    if candidate.exists():
        return candidate
    stem = candidate.stem if candidate.suffix == ".json" else str(name_or_path)
    bundled = scenario_dir() / f"{stem}.json"
    if bundled.exists():
        return bundled
    raise ScenarioError(f"scenario: '{name_or_path}' not found (looked in {scenario_dir()})")


def list_scenarios():
    directory = scenario_dir()
    if not directory.exists():
        return []
    return sorted(p.stem for p in directory.glob("*.json"))
