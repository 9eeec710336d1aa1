"""Place MovieLens 100K at data/ml-100k/u.data.

Tries the GroupLens archive first. If that host is unreachable, falls back
to the copy bundled in the RecBole wheel on PyPI (same 100,000 ratings,
with a header line that is stripped here).

    python3 scripts/fetch_ml100k.py [--out data/ml-100k/u.data]
"""

import argparse
import io
import subprocess
import sys
import tempfile
import urllib.request
import zipfile
from pathlib import Path

GROUPLENS = "https://files.grouplens.org/datasets/movielens/ml-100k.zip"
WHEEL_MEMBER = "recbole/dataset_example/ml-100k/ml-100k.inter"


def from_grouplens() -> bytes:
    with urllib.request.urlopen(GROUPLENS, timeout=30) as resp:
        archive = zipfile.ZipFile(io.BytesIO(resp.read()))
    return archive.read("ml-100k/u.data")


def from_recbole_wheel() -> bytes:
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(
            [sys.executable, "-m", "pip", "download", "recbole==1.2.1", "--no-deps",
             "--only-binary=:all:", "-d", tmp, "-q"],
            check=True,
        )
        wheel = next(Path(tmp).glob("recbole-*.whl"))
        text = zipfile.ZipFile(wheel).read(WHEEL_MEMBER).decode("utf-8")
    lines = text.splitlines()[1:]  # header: user_id:token item_id:token rating:float timestamp:float
    return ("\n".join(lines) + "\n").encode("utf-8")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="data/ml-100k/u.data")
    args = parser.parse_args()
    out = Path(args.out)
    if out.exists():
        print(f"{out} already present")
        return 0
    try:
        data = from_grouplens()
        source = "grouplens"
    except OSError as exc:
        print(f"grouplens unavailable ({exc}); using the RecBole wheel", file=sys.stderr)
        data = from_recbole_wheel()
        source = "recbole wheel"
    n = data.count(b"\n")
    if n != 100_000:
        print(f"unexpected line count {n}", file=sys.stderr)
        return 1
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(data)
    print(f"wrote {out} ({n} ratings, from {source})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
