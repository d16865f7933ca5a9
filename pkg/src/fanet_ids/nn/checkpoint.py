"""Weight checkpoints.

Layout: one ASCII header line holding JSON ``{"format": "fanet-ids-weights",
"version": 1, "arch": {...}, "shapes": [[...], ...], "dtype": "<f8"}``
terminated by ``\\n``, followed by every tensor's values as little-endian
float64 in C order, concatenated in WeightSet order.
"""
import json

import numpy as np

MAGIC = "fanet-ids-weights"


def save_weights(path, weights, arch):
    header = {"format": MAGIC, "version": 1, "arch": arch, "shapes": [list(np.shape(w)) for w in weights],
              "dtype": "<f8"}
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
        for w in weights:
            fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
    return path


def load_weights(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("ascii"))
        if header.get("format") != MAGIC:
            raise ValueError(f"{path} is not a weight checkpoint")
        raw = fh.read()
    flat = np.frombuffer(raw, dtype="<f8")
    out, pos = [], 0
    for shape in header["shapes"]:
        n = int(np.prod(shape)) if shape else 1
        out.append(flat[pos:pos + n].reshape(shape).astype(float))
        pos += n
    if pos != flat.size:
        raise ValueError(f"{path}: trailing bytes after last tensor")
    return out, header["arch"]
