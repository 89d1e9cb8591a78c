"""Report schema helpers and mesh export.

Reports are plain JSON documents carrying ``"schema": "wintgen-kit/1"``;
writing is deterministic (sorted keys, repr-exact floats, no timestamps) so
identical configurations produce byte-identical files.
"""
from __future__ import annotations

import json
import os

import numpy as np

SCHEMA = "wintgen-kit/1"


def jsonable(obj):
    """Recursively convert numpy containers into JSON-native values."""
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [jsonable(x) for x in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(x) for x in obj]
    return obj


def make_report(command: str, config: dict, body: dict) -> dict:
    return {"schema": SCHEMA, "command": command,
            "config": jsonable(config), **jsonable(body)}


def write_report(report: dict, path) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=1,
                  separators=(",", ": "))
        fh.write("\n")


# ---------------------------------------------------------------------------
# mesh export

def project_to_3d(points: np.ndarray) -> np.ndarray:
    """Viewable coordinates for sphere points of any ambient dimension:
    stereographic projection from the emptiest axis, then the first three
    coordinates."""
    P = np.asarray(points, dtype=float)
    if P.shape[1] <= 3:
        out = np.zeros((P.shape[0], 3))
        out[:, : P.shape[1]] = P
        return out
    pole = int(np.argmin(np.max(np.abs(P), axis=0)))
    denom = 1.0 - P[:, pole]
    denom = np.where(np.abs(denom) < 1e-9, 1e-9, denom)
    rest = np.delete(P, pole, axis=1) / denom[:, None]
    return rest[:, :3]


def grid_faces(n1: int, n2: int) -> list:
    """Two right-handed triangles per grid cell, 0-based indices."""
    faces = []
    for i in range(n1 - 1):
        for j in range(n2 - 1):
            a = i * n2 + j
            b = a + 1
            c = a + n2
            d = c + 1
            faces.append((a, b, d))
            faces.append((a, d, c))
    return faces


def export_obj(path, vertices, faces=(), polylines=()) -> None:
    """Wavefront OBJ: vertices as rows, 1-based face indices."""
    V = project_to_3d(np.asarray(vertices, dtype=float))
    with open(path, "w") as fh:
        for v in V:
            fh.write("v %.12g %.12g %.12g\n" % tuple(v))
        for f in faces:
            fh.write("f %d %d %d\n" % tuple(i + 1 for i in f))
        for line in polylines:
            fh.write("l " + " ".join(str(i + 1) for i in line) + "\n")


def export_ply(path, vertices, faces=(), edges=()) -> None:
    """ASCII PLY with optional face and edge elements."""
    V = project_to_3d(np.asarray(vertices, dtype=float))
    faces = list(faces)
    edges = list(edges)
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(V)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write(f"element face {len(faces)}\n")
        fh.write("property list uchar int vertex_indices\n")
        if edges:
            fh.write(f"element edge {len(edges)}\n")
            fh.write("property int vertex1\nproperty int vertex2\n")
        fh.write("end_header\n")
        for v in V:
            fh.write("%.12g %.12g %.12g\n" % tuple(v))
        for f in faces:
            fh.write("3 %d %d %d\n" % tuple(f))
        for e in edges:
            fh.write("%d %d\n" % tuple(e))
