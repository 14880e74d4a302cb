"""Model persistence: exact float64 round-trip in a versioned container."""

from __future__ import annotations

import json

import numpy as np

from ..core import ArtmapParams, FuzzyArtmapModel

__all__ = ["FORMAT_VERSION", "load_model", "save_model"]

FORMAT_VERSION = 1


def save_model(model: FuzzyArtmapModel, path, metadata: dict | None = None) -> None:
    """Write the model to an .npz archive.

    Weights are stored as raw float64, so loading reproduces the category
    matrix bit for bit. metadata must be JSON-serializable; it rides along
    for provenance (training protocol, seeds, timing) and is returned by
    load_model untouched.
    """
    header = {
        "format_version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "step": model.step,
        "params": {
            "alpha": model.params.alpha,
            "beta": model.params.beta,
            "rho_baseline": model.params.rho_baseline,
            "match_tracking_delta": model.params.match_tracking_delta,
        },
        "metadata": metadata or {},
    }
    np.savez(path,
             header=np.frombuffer(json.dumps(header).encode("utf-8"),
                                  dtype=np.uint8),
             weights=model.weights.copy(),
             classes=model.class_map.copy(),
             created_steps=model.created_steps.copy())


def load_model(path) -> tuple[FuzzyArtmapModel, dict]:
    """Read an .npz model archive; returns (model, metadata)."""
    with np.load(path) as archive:
        header = json.loads(bytes(archive["header"]).decode("utf-8"))
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise ValueError(
                f"{path}: unsupported model format version {version!r}"
            )
        params = ArtmapParams(**header["params"])
        model = FuzzyArtmapModel.from_arrays(
            archive["weights"], archive["classes"], archive["created_steps"],
            step=header["step"], num_classes=header["num_classes"],
            params=params)
        if model.input_dim != header["input_dim"]:
            raise ValueError(f"{path}: header dimension mismatch")
    return model, header["metadata"]
