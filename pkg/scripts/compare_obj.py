#!/usr/bin/env python3
"""Compare two OBJ files after canonical parsing: identical iff vertex
coordinates are bit-equal doubles and faces match exactly."""

import json
import sys

import numpy as np

from steershape.mesh import load_obj


def main() -> int:
    if len(sys.argv) != 3:
        print("usage: compare_obj.py A.obj B.obj", file=sys.stderr)
        return 2
    a = load_obj(sys.argv[1])
    b = load_obj(sys.argv[2])
    identical = (np.array_equal(a.vertices, b.vertices)
                 and np.array_equal(a.faces, b.faces))
    max_delta = None
    if not identical and a.vertices.shape == b.vertices.shape:
        max_delta = float(np.abs(a.vertices - b.vertices).max())
    print(json.dumps({"identical": bool(identical), "max_delta": max_delta}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
