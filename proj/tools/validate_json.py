#!/usr/bin/env python3
"""Validate emitted JSON files against docs/schemas.

usage: validate_json.py SCHEMA_DIR FILE[:SCHEMA] ...

Without an explicit schema the file name picks it (report.json -> report.schema.json);
other files are treated as domain specs when they carry a "shape" key, else as run configs.
"""
import json
import pathlib
import sys

from jsonschema import Draft202012Validator
from referencing import Registry, Resource

BY_NAME = {"report", "trajectory", "shot", "verdict", "inradius", "orbit_catalog"}


def load_registry(schema_dir):
    resources = []
    for path in sorted(schema_dir.glob("*.schema.json")):
        schema = json.loads(path.read_text())
        resources.append((schema["$id"], Resource.from_contents(schema)))
    return Registry().with_resources(resources)


def pick_schema(path, doc):
    stem = path.name.removesuffix(".json")
    if stem in BY_NAME:
        return stem
    return "domain" if isinstance(doc, dict) and "shape" in doc else "run_config"


def main(argv):
    if len(argv) < 3:
        print(__doc__, file=sys.stderr)
        return 2
    schema_dir = pathlib.Path(argv[1])
    registry = load_registry(schema_dir)
    failures = 0
    for arg in argv[2:]:
        file, _, name = arg.partition(":")
        path = pathlib.Path(file)
        doc = json.loads(path.read_text())
        name = name or pick_schema(path, doc)
        schema = registry.contents(f"{name}.schema.json")
        errors = list(Draft202012Validator(schema, registry=registry).iter_errors(doc))
        for err in errors[:5]:
            print(f"{path}: {name}: {err.json_path}: {err.message}", file=sys.stderr)
        print(f"{'ok  ' if not errors else 'FAIL'} {path} ({name})")
        failures += bool(errors)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main(sys.argv))
