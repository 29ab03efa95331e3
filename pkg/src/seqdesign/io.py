"""File formats: path CSV/JSON, gain and rule JSON, run manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Iterable, Sequence

from .engine import PATH_FIELDS, StageRecord
from .gain import GainInterpolant, GainSample
from .stage import StageRule

GAIN_SCHEMA = "seqdesign.gain/1"
RULE_SCHEMA = "seqdesign.rule/1"
MANIFEST_SCHEMA = "seqdesign.manifest/1"


def _num(v) -> str:
    # repr keeps full double precision and is stable across runs
    return repr(float(v))


def path_csv(records: Sequence[StageRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PATH_FIELDS)
    for r in records:
        w.writerow([r.stage, r.n_k, _num(r.x1), _num(r.x2), r.s1, r.s2,
                    _num(r.a_hat), _num(r.b_hat), _num(r.d), _num(r.c), r.stop_reason])
    return buf.getvalue()


def path_json(records: Sequence[StageRecord]) -> str:
    rows = [dict(zip(PATH_FIELDS, (r.stage, r.n_k, r.x1, r.x2, r.s1, r.s2, r.a_hat,
                                   r.b_hat, r.d, r.c, r.stop_reason))) for r in records]
    return json.dumps(rows, indent=2) + "\n"


def read_path_csv(text: str) -> list[StageRecord]:
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        out.append(StageRecord(int(row["stage"]), int(row["n_k"]), float(row["x1"]),
                               float(row["x2"]), int(row["s1"]), int(row["s2"]),
                               float(row["a_hat"]), float(row["b_hat"]), float(row["D"]),
                               float(row["C"]), row["stop_reason"]))
    return out


def table_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def gain_document(interp: GainInterpolant, params: dict) -> dict:
    """gain.json: simulated samples plus interpolant coefficients.

    Keys: ``schema``, ``parameters``, ``samples`` (list of GainSample dicts),
    ``interpolant`` (GainInterpolant dict).
    """
    return {
        "schema": GAIN_SCHEMA,
        "parameters": params,
        "samples": [s.to_dict() for s in interp.samples],
        "interpolant": interp.to_dict(),
    }


def load_gain(doc: dict) -> GainInterpolant:
    if doc.get("schema") != GAIN_SCHEMA:
        raise ValueError(f"not a gain document (schema={doc.get('schema')!r})")
    samples = [GainSample.from_dict(s) for s in doc.get("samples", [])]
    return GainInterpolant.from_dict(doc["interpolant"], samples)


def rule_document(rule: StageRule, params: dict, n_rows: int, n_null: int) -> dict:
    return {
        "schema": RULE_SCHEMA,
        "parameters": params,
        "rule": rule.to_dict(),
        "rows": n_rows,
        "null_rows": n_null,
    }


def load_rule(doc: dict) -> StageRule:
    if doc.get("schema") != RULE_SCHEMA:
        raise ValueError(f"not a rule document (schema={doc.get('schema')!r})")
    return StageRule.from_dict(doc["rule"])


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def manifest(command: str, params: dict, seed, version: str,
             inputs: dict[str, Path] | None = None, outputs: dict[str, bytes] | None = None) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "command": command,
        "parameters": params,
        "seed": seed,
        "version": version,
        "inputs": {name: sha256_file(p) for name, p in sorted((inputs or {}).items())},
        "outputs": {name: sha256_bytes(b) for name, b in sorted((outputs or {}).items())},
    }
