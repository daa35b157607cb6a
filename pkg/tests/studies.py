"""Replication studies shared by the acceptance tests, cached on disk.

A study takes hours on one core, so its report is stored under
``tests/.study_cache`` keyed by the study settings and a hash of the
numerical source files; any change to those files forces a rerun.
Run this module directly to fill the cache ahead of the test session.
"""
from __future__ import annotations

import hashlib
import json
import sys
from pathlib import Path

from ssearch.cli import run_replication

CACHE = Path(__file__).parent / ".study_cache"
SRC = Path(__file__).resolve().parents[1] / "src" / "ssearch"
# modules whose edits cannot change a study's numbers (plus every __init__.py)
NOT_NUMERIC = {"cli.py", "validate.py", "__main__.py"}

STUDIES = {
    "table1": dict(table="table1", reps=10, draws=500, scale=1.0, columns=None),
    "table2-full": dict(table="table2", reps=10, draws=800, scale=1.0, columns=["full info"]),
    "table2-s1": dict(table="table2", reps=10, draws=800, scale=1.0, columns=["(1) purchase only"]),
    "table3": dict(table="table3", reps=5, draws=1000, scale=0.25, columns=None),
}


def source_hash() -> str:
    h = hashlib.sha256()
    for p in sorted(SRC.rglob("*.py")):
        if p.name == "__init__.py" or (p.name in NOT_NUMERIC and p.parent == SRC):
            continue
        h.update(str(p.relative_to(SRC)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def get_study(name: str, seed: int = 0) -> tuple[dict, dict]:
    """Report and timing of a named study, from cache when current."""
    spec = STUDIES[name]
    key = f"{name}-seed{seed}-{source_hash()}"
    path = CACHE / f"{key}.json"
    if path.exists():
        blob = json.loads(path.read_text())
        return blob["report"], blob["timing"]
    report, timing = run_replication(spec["table"], spec["reps"], spec["draws"], spec["scale"],
                                     seed, threads=1, columns=spec["columns"])
    CACHE.mkdir(exist_ok=True)
    path.write_text(json.dumps({"report": report, "timing": timing}, indent=1, sort_keys=True))
    return report, timing


if __name__ == "__main__":
    for name in sys.argv[1:] or list(STUDIES):
        rep, tim = get_study(name)
        print(name, json.dumps(tim["columns"]), flush=True)
