"""Rebuild MovieLens-100k ``u.data`` / ``u.item`` from the copy bundled in a RecBole wheel.

The sandbox has no route to grouplens.org, but the RecBole wheel ships the
full ml-100k interaction and item files in its "atomic" layout. This script
rewrites them into the original GroupLens layout so the regular parsers
(and the acceptance suite) read them unchanged.

    pip download --no-deps -d /tmp/whl recbole==1.2.1
    python scripts/extract_ml100k.py /tmp/whl/recbole-1.2.1-py3-none-any.whl data/ml-100k
"""
import argparse
import zipfile
from pathlib import Path

PREFIX = "recbole/dataset_example/ml-100k/"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("wheel", type=Path)
    parser.add_argument("out_dir", type=Path)
    args = parser.parse_args()

    with zipfile.ZipFile(args.wheel) as zf:
        inter = zf.read(PREFIX + "ml-100k.inter").decode("latin-1").splitlines()
        items = zf.read(PREFIX + "ml-100k.item").decode("latin-1").splitlines()

    args.out_dir.mkdir(parents=True, exist_ok=True)
    with open(args.out_dir / "u.data", "w", encoding="latin-1", newline="\n") as fh:
        for line in inter[1:]:
            user, item, rating, ts = line.split("\t")
            fh.write(f"{user}\t{item}\t{int(float(rating))}\t{int(float(ts))}\n")

    with open(args.out_dir / "u.item", "w", encoding="latin-1", newline="\n") as fh:
        for line in items[1:]:
            item_id, title, year, _genres = (line.split("\t") + ["", "", ""])[:4]
            full = f"{title} ({year})" if year.strip() else title
            fh.write(f"{item_id}|{full}|||\n")
    print(f"wrote {len(inter) - 1} ratings and {len(items) - 1} items to {args.out_dir}")


if __name__ == "__main__":
    main()
