"""Regenerate nets/*.json from the in-code fixture registry.

The committed JSON files are what the command-line examples in the README
load; rerun this after changing a fixture definition so the two stay in sync.
"""

import argparse
from pathlib import Path

from resilmip.network import save_network
from resilmip.zoo import FIXTURES


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default=Path(__file__).resolve().parents[1] / "nets",
                    type=Path, help="directory receiving one JSON file per fixture")
    args = ap.parse_args()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, build in sorted(FIXTURES.items()):
        path = args.out_dir / f"{name}.json"
        save_network(build(), path)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
