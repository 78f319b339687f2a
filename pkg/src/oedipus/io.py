"""File formats: OEDM binary container, PGM images, pattern JSON, support JSON.

OEDM layout (little-endian): 4-byte magic ``OEDM``, then four uint32 values
``n1, n2, T, n_coils``, followed by ``T * n_coils`` image planes, each
stored as a float64 real plane then a float64 imaginary plane in C order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .design import SamplingPattern
from .sparsity import SupportSet

__all__ = [
    "write_oedm",
    "read_oedm",
    "write_image_oedm",
    "read_image_oedm",
    "write_pgm",
    "mask_to_rle",
    "rle_to_mask",
    "pattern_to_json",
    "pattern_from_json",
    "support_to_json",
    "support_from_json",
]

_MAGIC = b"OEDM"
_HEADER = struct.Struct("<4s4I")


def write_oedm(path, data: np.ndarray) -> None:
    """Write a (T, n_coils, n1, n2) complex array to an OEDM container."""
    data = np.asarray(data, dtype=complex)
    if data.ndim != 4:
        raise ValueError(f"expected a 4-d array, got shape {data.shape}")
    t, n_coils, n1, n2 = data.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n1, n2, t, n_coils))
        for ti in range(t):
            for ci in range(n_coils):
                plane = np.ascontiguousarray(data[ti, ci])
                fh.write(plane.real.astype("<f8").tobytes())
                fh.write(plane.imag.astype("<f8").tobytes())


def read_oedm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        magic, n1, n2, t, n_coils = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not an OEDM container")
        out = np.empty((t, n_coils, n1, n2), dtype=complex)
        plane_bytes = n1 * n2 * 8
        for ti in range(t):
            for ci in range(n_coils):
                re = np.frombuffer(fh.read(plane_bytes), dtype="<f8")
                im = np.frombuffer(fh.read(plane_bytes), dtype="<f8")
                out[ti, ci] = (re + 1j * im).reshape(n1, n2)
        return out


def write_image_oedm(path, image2d: np.ndarray) -> None:
    write_oedm(path, np.asarray(image2d, dtype=complex)[None, None, :, :])


def read_image_oedm(path) -> np.ndarray:
    return read_oedm(path)[0, 0]


def write_pgm(path, values: np.ndarray, max_abs: float | None = None) -> None:
    """8-bit binary PGM of ``|values|``, windowed to [0, max_abs]."""
    mag = np.abs(np.asarray(values))
    if mag.ndim != 2:
        raise ValueError("PGM export needs a 2-d array")
    peak = float(mag.max()) if max_abs is None else max_abs
    if peak <= 0:
        peak = 1.0
    pix = np.clip(np.round(255.0 * mag / peak), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode())
        fh.write(pix.tobytes())


def mask_to_rle(mask: np.ndarray) -> list[int]:
    """Run lengths of the flattened mask, first run counting zeros."""
    flat = np.asarray(mask).ravel().astype(bool)
    runs = []
    current = False
    count = 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current = v
            count = 1
    runs.append(count)
    return runs


def rle_to_mask(runs, shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    pos = 0
    value = False
    for run in runs:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    if pos != flat.size:
        raise ValueError(f"run lengths cover {pos} cells, expected {flat.size}")
    return flat.reshape(shape)


def pattern_to_json(pattern: SamplingPattern) -> str:
    doc = {
        "grid": list(pattern.grid_dims),
        "R": pattern.R,
        "mode": pattern.mode,
        "kept_groups": list(pattern.kept_groups),
        "mask": mask_to_rle(pattern.mask),
        "log": list(pattern.log),
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def pattern_from_json(text: str, candidates) -> SamplingPattern:
    """Rebuild a pattern against the candidate set it was designed for."""
    from .design import pattern_from_groups

    doc = json.loads(text)
    grid = tuple(doc["grid"])
    if grid != candidates.grid_dims:
        raise ValueError(
            f"pattern grid {grid} does not match candidate grid "
            f"{candidates.grid_dims}"
        )
    pattern = pattern_from_groups(
        candidates, doc["kept_groups"], mode=doc["mode"], log=doc.get("log", ())
    )
    stored = rle_to_mask(doc["mask"], grid)
    if not np.array_equal(stored, pattern.mask):
        raise ValueError("stored mask inconsistent with kept groups")
    return pattern


def support_to_json(support: SupportSet) -> str:
    doc = {
        "S": support.S,
        "indices": [int(i) for i in support.indices],
        "source_label": support.source_label,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def support_from_json(text: str, q: int) -> SupportSet:
    doc = json.loads(text)
    support = SupportSet(
        indices=np.array(doc["indices"], dtype=int),
        q=q,
        source_label=doc.get("source_label", ""),
    )
    if support.S != doc["S"]:
        raise ValueError("stored S inconsistent with index list")
    return support
