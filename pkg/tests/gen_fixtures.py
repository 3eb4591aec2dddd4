"""Regenerate tests/fixtures/ from the builders in programs.py.

Usage: python3 tests/gen_fixtures.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

from programs import REGISTRY  # noqa: E402


def main() -> None:
    out_dir = Path(__file__).resolve().parent / "fixtures"
    out_dir.mkdir(exist_ok=True)
    for name, build in sorted(REGISTRY.items()):
        source, doc = build()
        (out_dir / f"{name}.sol").write_text(source)
        (out_dir / f"{name}.json").write_text(json.dumps(doc, indent=2) + "\n")
        print(f"wrote {name}.sol ({len(source)} bytes) and {name}.json")


if __name__ == "__main__":
    main()
