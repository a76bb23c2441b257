"""Evaluation: reconstruction accuracy, steerability correlation, and
training-versus-generated feature distributions."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .dataset import FEATURE_NAMES, ShapeDataset
from .generation import LatentSampler, generate_cohort, synthesize
from .mesh import chamfer_distance
from .model import ModelParams

REPORT_SCHEMA_VERSION = 1


class UndefinedCorrelationError(ValueError):
    """Pearson correlation is undefined when either side has zero variance."""


class EvaluationAbortedError(RuntimeError):
    """Evaluation stopped; the payload carries diagnostics."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


def pearson(xs, ys) -> float:
    """Standard sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64).reshape(-1)
    y = np.asarray(ys, dtype=np.float64).reshape(-1)
    if len(x) != len(y) or len(x) < 3:
        raise ValueError("pearson needs two equal-length series of >= 3 values")
    u = x - x.mean()
    v = y - y.mean()
    su = float(u @ u)
    sv = float(v @ v)
    if su <= 0.0 or sv <= 0.0:
        raise UndefinedCorrelationError("zero variance in a correlation argument")
    return float((u @ v) / np.sqrt(su * sv))


def evaluate_reconstruction(model: ModelParams, dataset: ShapeDataset,
                            resolution: int = 64, n_samples: int = 30000,
                            seed: int = 0, mm_per_unit: float | None = None) -> dict:
    """Chamfer between each training mesh and its own-code reconstruction."""
    per_shape = []
    for shape_id in model.shape_ids:
        rec = dataset.by_id(shape_id)
        recon = synthesize(model, model.code_for_shape(shape_id), resolution)
        if recon.is_empty:
            raise EvaluationAbortedError(
                f"reconstruction of {shape_id} produced an empty mesh",
                {"shape_id": shape_id})
        value = chamfer_distance(rec.mesh, recon, n_samples, seed)
        per_shape.append({"shape_id": shape_id, "chamfer": value})
    values = np.array([e["chamfer"] for e in per_shape])
    fragment = {
        "per_shape": per_shape,
        "chamfer_mean": float(values.mean()),
        "chamfer_std": float(values.std()),
        "units": "unit_cube",
        "n_samples": n_samples,
        "seed": seed,
        "resolution": resolution,
    }
    if mm_per_unit is not None:
        fragment["chamfer_mean_mm"] = float(values.mean() * mm_per_unit)
        fragment["chamfer_std_mm"] = float(values.std() * mm_per_unit)
    return fragment


def evaluate_steerability(model: ModelParams, sampler: LatentSampler,
                          n: int = 1000, seed: int = 0, resolution: int = 64,
                          max_empty_rate: float = 0.05) -> dict:
    """Correlation between conditioned features and measured features.

    Measured values come only from mesh measurements, never from the
    generator's ground-truth parameters.
    """
    if model.k == 0:
        raise ValueError("steerability needs a feature-conditioned model")
    cohort = generate_cohort(model, sampler, n, seed, resolution=resolution)
    bad = sum(1 for g in cohort if not g.ok)
    if bad > max_empty_rate * n:
        raise EvaluationAbortedError(
            f"{bad}/{n} generated shapes were empty or unmeasurable",
            {"empty_or_invalid": bad, "n": n})
    ok = [g for g in cohort if g.ok]
    fragment = {"n": n, "empty_or_invalid": bad, "seed": seed,
                "resolution": resolution, "features": {}}
    for name in model.feature_names:
        conditioned = [g.conditioned[name] for g in ok]
        measured = [getattr(g.measured, name) for g in ok]
        fragment["features"][name] = {
            "pcc": pearson(conditioned, measured),
            "conditioned": conditioned,
            "measured": measured,
        }
    return fragment


def compare_distributions(training_features: np.ndarray,
                          generated_features: np.ndarray,
                          names: tuple[str, ...] = FEATURE_NAMES) -> dict:
    """Aligned histograms plus two-sample KS statistics per feature."""
    a = np.asarray(training_features, dtype=np.float64)
    b = np.asarray(generated_features, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if len(a) < 2 or len(b) < 2:
        raise ValueError("distribution comparison needs >= 2 samples per side")
    # desk-scale training populations can be small; flag rather than refuse
    fragment = {"features": {},
                "small_sample": bool(len(a) < 30 or len(b) < 30)}
    for j, name in enumerate(names[:a.shape[1]]):
        xa, xb = a[:, j], b[:, j]
        pooled = np.concatenate([xa, xb])
        edges = np.histogram_bin_edges(pooled, bins="fd")
        ha, _ = np.histogram(xa, bins=edges)
        hb, _ = np.histogram(xb, bins=edges)
        ks = stats.ks_2samp(xa, xb)
        fragment["features"][name] = {
            "ks_statistic": float(ks.statistic),
            "ks_pvalue": float(ks.pvalue),
            "bin_edges": edges.tolist(),
            "training_counts": ha.tolist(),
            "generated_counts": hb.tolist(),
            "training_n": int(len(xa)),
            "generated_n": int(len(xb)),
        }
    return fragment


@dataclass
class EvalReport:
    """Versioned container combining the evaluation fragments."""

    reconstruction: dict | None = None
    steerability: dict | None = None
    distributions: dict | None = None
    comparison: dict | None = None
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"schema_version": REPORT_SCHEMA_VERSION, "metadata": self.metadata}
        for key in ("reconstruction", "steerability", "distributions", "comparison"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out

    def save(self, path: str | Path) -> None:
        from .mesh import json_default

        Path(path).write_text(
            json.dumps(self.to_dict(), indent=2, default=json_default) + "\n")
