"""Shared fixtures: checked-in programs plus a generated batch corpus."""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

import pytest

import fixutil
import programs

fixutil.ensure_fixtures()


@pytest.fixture(scope="session")
def batch_corpus(tmp_path_factory: pytest.TempPathFactory) -> tuple[Path, Path]:
    """100 labeled contracts (50 ponzi, 50 clean) and their CSV manifest.

    Session scoped: the batch and interruption acceptance checks share one
    corpus so their reports are comparable.
    """
    root = tmp_path_factory.mktemp("corpus")
    rng = random.Random(20240817)
    rows: list[tuple[str, str, str]] = []
    for i in range(50):
        for ponzi, prefix in ((True, "p"), (False, "n")):
            cid = f"{prefix}{i:03d}"
            _source, doc = programs.random_unit(rng, f"C{prefix.upper()}{i:03d}", ponzi)
            path = root / f"{cid}.json"
            path.write_text(json.dumps(doc, indent=1))
            rows.append((cid, str(path), "ponzi" if ponzi else "non_ponzi"))
    manifest = root / "manifest.csv"
    with manifest.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "path_or_address", "label"])
        writer.writerows(rows)
    return manifest, root
