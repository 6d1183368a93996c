#!/usr/bin/env python3
"""Prepend cmake/license_header.txt to C++ sources that lack it.

Usage: tools/add_license_header.py [--check]
"""
import pathlib
import sys

ROOT = pathlib.Path(__file__).resolve().parent.parent
HEADER = (ROOT / "cmake" / "license_header.txt").read_text()
DIRS = ("include", "src", "tests", "tools")
SUFFIXES = {".hpp", ".cpp"}


def main() -> int:
    check = "--check" in sys.argv[1:]
    missing = []
    for d in DIRS:
        for path in sorted((ROOT / d).rglob("*")):
            if path.suffix not in SUFFIXES or not path.is_file():
                continue
            text = path.read_text()
            if text.startswith(HEADER):
                continue
            missing.append(path)
            if not check:
                path.write_text(HEADER + text)
    for path in missing:
        print(("missing: " if check else "added: ") + str(path.relative_to(ROOT)))
    return 1 if check and missing else 0


if __name__ == "__main__":
    sys.exit(main())
