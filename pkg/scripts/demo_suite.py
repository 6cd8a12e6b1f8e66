"""Run the full demo suite and optionally save the text and JSON reports.

    python3 scripts/demo_suite.py [--out-dir DIR]
"""
import argparse
import io
import sys
from pathlib import Path

from orbilift.cli import run


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", type=Path)
    args = p.parse_args()
    argv = ["demo"]
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        argv += ["--out", str(args.out_dir / "demo.json")]
    buf = io.StringIO()
    status = run(argv, stdout=buf)
    sys.stdout.write(buf.getvalue())
    if args.out_dir:
        (args.out_dir / "demo.txt").write_text(buf.getvalue())
    return status


if __name__ == "__main__":
    sys.exit(main())
