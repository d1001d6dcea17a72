import importlib.util
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
FIXTURES = Path(__file__).parent / "fixtures"
DB_ROOT = FIXTURES / "db"
CASSETTES = FIXTURES / "cassettes"

from convsql.corpus import introspect_schema, load_dataset  # noqa: E402
from convsql.llmio import ReplayBackend  # noqa: E402


def _require_fixtures():
    if not (DB_ROOT / "flights" / "flights.sqlite").exists():
        pytest.exit("fixtures missing; run: python scripts/make_fixtures.py",
                    returncode=3)


_require_fixtures()


def load_fixture_script():
    """Import scripts/make_fixtures.py (holds the scripted backend)."""
    spec = importlib.util.spec_from_file_location(
        "make_fixtures", REPO / "scripts" / "make_fixtures.py")
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def db_root() -> Path:
    return DB_ROOT


@pytest.fixture(scope="session")
def flights_db() -> Path:
    return DB_ROOT / "flights" / "flights.sqlite"


@pytest.fixture(scope="session")
def warehouse_db() -> Path:
    return DB_ROOT / "warehouse" / "warehouse.sqlite"


@pytest.fixture(scope="session")
def flights_schema(flights_db):
    return introspect_schema(flights_db)


@pytest.fixture(scope="session")
def warehouse_schema(warehouse_db):
    return introspect_schema(warehouse_db)


@pytest.fixture(scope="session")
def demo_dataset():
    return load_dataset(FIXTURES / "dialogues" / "flights_demo.json")


@pytest.fixture(scope="session")
def tdex12_dataset():
    return load_dataset(FIXTURES / "dialogues" / "tdex12.json")


@pytest.fixture()
def pipeline_backend():
    return ReplayBackend(CASSETTES / "pipeline.jsonl", model_id="scripted")


@pytest.fixture()
def selector_backend():
    return ReplayBackend(CASSETTES / "selector.jsonl", model_id="scripted")


@pytest.fixture()
def judge_backend():
    return ReplayBackend(CASSETTES / "judge.jsonl", model_id="scripted")


@pytest.fixture()
def augment_backend():
    return ReplayBackend(CASSETTES / "augment.jsonl", model_id="scripted")


@pytest.fixture(scope="session")
def scripted_backend_cls():
    return load_fixture_script().ScriptedBackend
