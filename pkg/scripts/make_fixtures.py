"""Regenerate the bundled fixtures under src/perchsim/data."""

import argparse
from pathlib import Path

from perchsim.fixtures import write_fixtures


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "perchsim" / "data")
    args = ap.parse_args()
    paths = write_fixtures(args.root)
    print(f"wrote {len(paths)} files under {args.root}")


if __name__ == "__main__":
    main()
