from pathlib import Path
from typing import List, Union

from loguru import logger

from polyfract.core.exceptions import InvalidInputError
from polyfract.models.system import SystemDescription
from polyfract.services.system import load_system

FIXTURE_DIR = Path(__file__).resolve().parent.parent / "fixtures"

# valid systems first, then the ones that fail the axioms
EXAMPLES = [
    "carpet",
    "folded-square",
    "folded-triangle",
    "hexa-d3",
    "identity-square",
    "opposite-corners",
]


def list_examples() -> List[str]:
    return list(EXAMPLES)


def example_text(name: str) -> str:
    if name not in EXAMPLES:
        raise InvalidInputError(f"unknown example {name!r}", {"name": name, "available": EXAMPLES})
    return (FIXTURE_DIR / f"{name}.toml").read_text(encoding="utf-8")


def load_example(name: str) -> SystemDescription:
    return load_system(example_text(name))


def write_example(name: str, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(example_text(name), encoding="utf-8")
    logger.info(f"Wrote example {name} to {path}")
    return path
