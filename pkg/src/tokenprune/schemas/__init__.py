"""JSON schemas for every JSON file the package writes."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema

NAMES = ("profile", "schedule", "steps", "manifest", "run_summary", "dataset_spec")


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in NAMES:
        raise KeyError(name)
    text = resources.files(__name__).joinpath(f"{name}.schema.json").read_text("utf-8")
    return json.loads(text)


def validate(doc, name: str) -> None:
    """Raise ``ValueError`` naming the offending field if ``doc`` does not match."""
    try:
        jsonschema.validate(doc, load_schema(name))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValueError(f"{name} document invalid at {where}: {exc.message}") from None
