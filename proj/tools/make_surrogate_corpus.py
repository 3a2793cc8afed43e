#!/usr/bin/env python3
"""Build a deterministic English-and-code text corpus when enwik8 is absent.

Concatenates the Python standard library sources in sorted path order and
writes a training slice followed by a disjoint evaluation slice.
"""
import argparse
import pathlib
import sys


def collect(root: pathlib.Path, limit: int) -> bytes:
    out = bytearray()
    for path in sorted(root.rglob("*.py")):
        try:
            data = path.read_bytes()
        except OSError:
            continue
        out += data
        if len(out) >= limit:
            break
    return bytes(out[:limit])


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--root", default=f"/usr/lib/python3.{sys.version_info.minor}")
    ap.add_argument("--train-bytes", type=int, default=10_000_000)
    ap.add_argument("--eval-bytes", type=int, default=1_000_000)
    ap.add_argument("--out-dir", required=True)
    args = ap.parse_args()

    data = collect(pathlib.Path(args.root), args.train_bytes + args.eval_bytes)
    if len(data) < args.train_bytes + args.eval_bytes:
        print(f"only {len(data)} bytes available under {args.root}", file=sys.stderr)
        return 1
    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "train.txt").write_bytes(data[: args.train_bytes])
    (out / "eval.txt").write_bytes(data[args.train_bytes :])
    return 0


if __name__ == "__main__":
    sys.exit(main())
