"""Dataset loading: IDX image files, labeled CSV, and synthetic streams."""

from __future__ import annotations

import gzip
import struct

import numpy as np

from ..core import Dataset
from ..seeds import derive_seed

__all__ = ["IdxFormatError", "load_csv", "load_idx", "synth_generate"]

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801

SYNTH_KINDS = ("blobs", "rings", "overlap-stress")


class IdxFormatError(ValueError):
    """IDX file violates the expected magic, rank, or payload length."""


def _read_binary(path) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            with gzip.open(fh) as gz:
                return gz.read()
        return fh.read()


def _need(buf: bytes, offset: int, count: int, path, what: str) -> None:
    if len(buf) < offset + count:
        raise IdxFormatError(
            f"{path}: truncated {what} at byte {len(buf)} "
            f"(need {offset + count})"
        )


def load_idx(images_path, labels_path) -> Dataset:
    """Load the big-endian IDX image/label pair used by digit benchmarks.

    Accepts plain or gzip-compressed files. Pixels are scaled from bytes
    to [0, 1] and images are flattened row-major.
    """
    img = _read_binary(images_path)
    _need(img, 0, 16, images_path, "image header")
    magic, count, rows, cols = struct.unpack(">iiii", img[:16])
    if magic != _IDX_IMAGES_MAGIC:
        raise IdxFormatError(
            f"{images_path}: bad image magic 0x{magic:08x} at byte 0"
        )
    _need(img, 16, count * rows * cols, images_path, "pixel payload")
    pixels = np.frombuffer(img, dtype=np.uint8, count=count * rows * cols,
                           offset=16)
    features = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0

    lab = _read_binary(labels_path)
    _need(lab, 0, 8, labels_path, "label header")
    magic, lab_count = struct.unpack(">ii", lab[:8])
    if magic != _IDX_LABELS_MAGIC:
        raise IdxFormatError(
            f"{labels_path}: bad label magic 0x{magic:08x} at byte 0"
        )
    if lab_count != count:
        raise IdxFormatError(
            f"{labels_path}: {lab_count} labels for {count} images"
        )
    _need(lab, 8, count, labels_path, "label payload")
    labels = np.frombuffer(lab, dtype=np.uint8, count=count, offset=8)
    return Dataset(features, labels.astype(np.int64))


def load_csv(path, normalization: str = "unit") -> Dataset:
    """Load rows of "label,f1,...,fd" with a fixed normalization.

    normalization: "unit" expects features already in [0, 1]; "byte"
    divides by 255; "pm1" maps [-1, 1] to [0, 1]. Malformed rows raise
    ValueError naming the line number.
    """
    if normalization not in ("unit", "byte", "pm1"):
        raise ValueError(f"unknown normalization {normalization!r}")
    labels: list[int] = []
    rows: list[np.ndarray] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if width is None:
                width = len(parts)
                if width < 2:
                    raise ValueError(f"{path}:{lineno}: need label plus features")
            elif len(parts) != width:
                raise ValueError(
                    f"{path}:{lineno}: expected {width} fields, got {len(parts)}"
                )
            try:
                label = int(float(parts[0]))
                values = np.array([float(v) for v in parts[1:]],
                                  dtype=np.float64)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric field") from exc
            labels.append(label)
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    features = np.vstack(rows)
    if normalization == "byte":
        features = features / 255.0
    elif normalization == "pm1":
        features = (features + 1.0) / 2.0
    lo, hi = features.min(), features.max()
    if lo < 0.0 or hi > 1.0:
        raise ValueError(
            f"{path}: features span [{lo}, {hi}] after {normalization!r} "
            "normalization; expected [0, 1]"
        )
    return Dataset(features, np.array(labels, dtype=np.int64))


# Fixed key so every blobs dataset, whatever its seed, shares one layout;
# train and test splits must agree on where the class sites live.
_BLOB_LAYOUT_KEY = 0x517E5


def _blob_centers(classes: int, d: int) -> tuple[np.ndarray, int]:
    """Class sites on a k^d lattice, k minimal with k**d >= classes.

    Sites occupy distinct lattice cells chosen by a fixed pseudorandom
    layout, spreading class mass across all axes. Collinear placement
    would leave every sample's wrong-class mass in a single direction,
    which degenerates gradient-based attacks on the trained model.
    Returns (centers, k); the cell pitch is 1/k.
    """
    k = 2
    while k ** d < classes:
        k += 1
    rng = np.random.default_rng(_BLOB_LAYOUT_KEY)
    seen: set[tuple[int, ...]] = set()
    cells = []
    while len(cells) < classes:
        cand = tuple(int(v) for v in rng.integers(0, k, size=d))
        if cand not in seen:
            seen.add(cand)
            cells.append(cand)
    centers = (np.asarray(cells, dtype=np.float64) + 0.5) / k
    return centers, k


def synth_generate(kind: str, d: int, classes: int, n: int, seed: int,
                   margin: float = 0.1) -> Dataset:
    """Deterministic synthetic streams for tests and demos.

    blobs: one uniform cube per class, each confined to its own cell of
    a fixed k^d lattice layout; margin shrinks the cube within the cell,
    so classes stay disjoint by construction at every margin.
    rings: concentric annuli in the first two dims, one radius band per
    class; margin widens the radial gap between bands.
    overlap-stress: several shared base sites where the class clusters
    sit margin apart along a site-specific axis; margin 0 makes classes
    coincide, provoking cross-class crowding.

    Labels cycle round-robin so every prefix of the stream is balanced.
    """
    if kind not in SYNTH_KINDS:
        raise ValueError(f"unknown synthetic kind {kind!r}; pick from {SYNTH_KINDS}")
    if d < 2 or classes < 2 or n < 1:
        raise ValueError("need d >= 2, classes >= 2, n >= 1")
    if not 0.0 <= margin <= 1.0:
        raise ValueError(f"margin must be in [0, 1], got {margin}")
    rng = np.random.default_rng(derive_seed(seed, "synth", kind))
    labels = np.arange(n, dtype=np.int64) % classes
    features = np.empty((n, d), dtype=np.float64)

    if kind == "blobs":
        centers, k = _blob_centers(classes, d)
        half = max((1.0 - margin) / (2.0 * k) * 0.9, 0.005)
        offsets = rng.uniform(-half, half, size=(n, d))
        features = centers[labels] + offsets
    elif kind == "rings":
        r_max = 0.45
        band = r_max / (classes + 1)
        width = band * max(1.0 - margin, 0.05) * 0.5
        radii = band * (np.arange(classes) + 1)
        r = radii[labels] + rng.uniform(-width, width, size=n)
        angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
        features[:] = 0.5
        features[:, 0] = 0.5 + r * np.cos(angle)
        features[:, 1] = 0.5 + r * np.sin(angle)
        if d > 2:
            features[:, 2:] += rng.uniform(-0.02, 0.02, size=(n, d - 2))
    else:  # overlap-stress
        sites = 3
        half = 0.04
        base = rng.uniform(0.25, 0.75, size=(sites, d))
        axes = rng.integers(0, d, size=sites)
        site = (np.arange(n) // classes) % sites
        features = base[site].copy()
        shift = (labels - (classes - 1) / 2.0) * margin
        features[np.arange(n), axes[site]] += shift
        features += rng.uniform(-half, half, size=(n, d))

    np.clip(features, 0.0, 1.0, out=features)
    return Dataset(features, labels, num_classes=classes)
