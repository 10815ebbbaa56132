"""Serve a saved built-in model over the line-delimited wire protocol.

    python -m unlearnaudit.serve model.json
"""

import argparse
import json
import sys

import numpy as np

from .models import BuiltinModel


def serve(model, stdin=sys.stdin, stdout=sys.stdout) -> int:
    first = stdin.readline()
    if not first:
        return 1
    hello = json.loads(first)
    if list(hello.get("features", [])) != list(model.features):
        print(f"feature mismatch: harness sent {hello.get('features')}, model expects "
              f"{list(model.features)}", file=sys.stderr)
        return 1
    for line in stdin:
        if not line.strip():
            continue
        rows = np.asarray(json.loads(line)["rows"], dtype=float).reshape(-1, len(model.features))
        preds = model.predict(rows)
        stdout.write(json.dumps({"preds": [float(p) for p in preds]}) + "\n")
        stdout.flush()
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python -m unlearnaudit.serve")
    ap.add_argument("model", help="model file written by BuiltinModel.save")
    args = ap.parse_args(argv)
    return serve(BuiltinModel.load(args.model))


if __name__ == "__main__":
    sys.exit(main())
