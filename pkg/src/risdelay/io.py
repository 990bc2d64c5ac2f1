"""Schema-versioned CSV and JSON result files.

Column lists are frozen here and documented in docs/schema.md. Readers
reject files whose version they do not know.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping

SCHEMA_VERSION = 1

CSV_SCHEMAS: dict[str, tuple[str, ...]] = {
    "validate_bound": ("sweep", "distance_m", "n_rb", "epsilon", "omega", "w_bound_s",
                       "empirical_quantile_s", "ratio", "n_packets", "censored", "feasible"),
    "gloss_sweep": ("phase_bits", "n_elements", "distance_m", "g_loss", "noncentrality",
                    "mean_snr_db", "w_bound_s", "feasible"),
    "periods": ("period", "policy", "f_obj", "max_ratio_no_los", "max_ratio_los", "n_los_ues",
                "ris_slots_used", "steps", "hit_cap", "empirical_max_ratio"),
    "timings": ("period", "policy", "elapsed_s"),
}

JSON_SCHEMAS = ("summary", "brute_force", "manifest")


class SchemaError(ValueError):
    pass


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_csv(path: str | Path, schema: str, rows: Iterable[Mapping[str, Any]]) -> None:
    cols = CSV_SCHEMAS[schema]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("schema_version",) + cols)
        for row in rows:
            w.writerow([SCHEMA_VERSION] + [_cell(row.get(c)) for c in cols])


def read_csv(path: str | Path, schema: str) -> list[dict[str, str]]:
    cols = CSV_SCHEMAS[schema]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != ("schema_version",) + cols:
            raise SchemaError(f"{path}: columns do not match schema {schema!r}")
        rows = []
        for row in reader:
            if row["schema_version"] != str(SCHEMA_VERSION):
                raise SchemaError(f"{path}: unknown schema version {row['schema_version']!r}")
            rows.append({c: row[c] for c in cols})
    return rows


def _jsonable(v: Any):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, Mapping):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if hasattr(v, "tolist"):
        return _jsonable(v.tolist())
    return v


def write_json(path: str | Path, schema: str, payload: Mapping[str, Any]) -> None:
    if schema not in JSON_SCHEMAS:
        raise KeyError(schema)
    doc = {"schema": schema, "schema_version": SCHEMA_VERSION}
    doc.update(_jsonable(payload))
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path, schema: str) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != schema:
        raise SchemaError(f"{path}: expected schema {schema!r}, found {doc.get('schema')!r}")
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(f"{path}: unknown schema version {doc.get('schema_version')!r}")
    return doc
