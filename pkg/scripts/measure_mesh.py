#!/usr/bin/env python3
"""Load an OBJ file and print its steering features as JSON."""

import json
import sys

from steershape.dataset import measure_features
from steershape.mesh import load_obj


def main() -> int:
    if len(sys.argv) != 2:
        print("usage: measure_mesh.py MESH.obj", file=sys.stderr)
        return 2
    mesh = load_obj(sys.argv[1])
    watertight = mesh.is_watertight()
    payload = {
        "n_vertices": mesh.n_vertices,
        "n_faces": mesh.n_faces,
        "watertight": watertight,
        "components": mesh.connected_component_count(),
    }
    if watertight:
        payload["features"] = measure_features(mesh).to_dict()
    print(json.dumps(payload, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
