"""Shape synthesis from trained models: reconstruction, random cohorts,
and feature-steered editing.

Synthesis evaluates the network on the cell centres of a regular grid over
the unit cube and extracts the zero level set. Random cohorts draw each
trainable dimension from a normal fit over the trained codes and draw the
conditioned features jointly from the training pool, so generated
populations follow the training population unless overridden.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import FeatureVector, measure_features
from .isosurface import ScalarGrid, marching_cubes
from .mesh import TriMesh
from .model import LatentCode, ModelParams, predict_sdf

DEFAULT_RESOLUTION = 64
EDIT_CLAMP_SIGMA = 3.0


class ConfigError(ValueError):
    pass


class UnsupportedModelError(ValueError):
    """Operation needs a feature-conditioned model (k > 0)."""


@dataclass
class LatentSampler:
    """Per-dimension normal fit over trained codes plus the feature pool."""

    mean: np.ndarray
    std: np.ndarray
    fixed_pool_z: np.ndarray
    fixed_pool_raw: np.ndarray
    feature_names: tuple[str, ...]

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(self.std, dtype=np.float64).reshape(-1)
        if np.any(self.std < 0):
            raise ValueError("negative std in latent sampler")
        self.fixed_pool_z = np.asarray(self.fixed_pool_z, dtype=np.float64)
        self.fixed_pool_raw = np.asarray(self.fixed_pool_raw, dtype=np.float64)
        self.feature_names = tuple(self.feature_names)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "fixed_pool_z": self.fixed_pool_z.tolist(),
            "fixed_pool_raw": self.fixed_pool_raw.tolist(),
            "feature_names": list(self.feature_names),
        }

    @staticmethod
    def from_dict(d: dict) -> "LatentSampler":
        # rows of empty lists come back as an (n, 0) array for k=0 models
        pool_z = np.array(d["fixed_pool_z"], dtype=np.float64)
        pool_raw = np.array(d["fixed_pool_raw"], dtype=np.float64)
        return LatentSampler(np.array(d["mean"]), np.array(d["std"]),
                             pool_z, pool_raw, tuple(d["feature_names"]))


def fit_sampler(model: ModelParams) -> LatentSampler:
    """Per-dimension sample mean/std of the trained trainable codes."""
    table = model.latents.trainable
    if len(table) < 2:
        raise ValueError("need at least 2 trained shapes to fit the sampler")
    if model.k:
        from .dataset import FEATURE_NAMES
        pool_z = model.latents.fixed.copy()
        raw_cols = [FEATURE_NAMES.index(n) for n in model.feature_names]
        pool_raw = model.features_raw[:, raw_cols].copy()
    else:
        pool_z = np.zeros((len(table), 0))
        pool_raw = np.zeros((len(table), 0))
    return LatentSampler(table.mean(axis=0), table.std(axis=0),
                         pool_z, pool_raw, model.feature_names)


def synthesize(model: ModelParams, code: LatentCode,
               resolution: int = DEFAULT_RESOLUTION) -> TriMesh:
    """Dense grid evaluation then isosurface extraction at level 0.

    An empty level set returns an empty mesh (``mesh.is_empty``), which is
    a flagged outcome rather than an error.
    """
    if resolution < 8:
        raise ConfigError("synthesis resolution must be at least 8")
    grid = ScalarGrid.cell_centered_unit(resolution)
    values = predict_sdf(model, code, grid.node_points())
    grid.values[...] = values.reshape(grid.resolution)
    return marching_cubes(grid)


@dataclass
class GeneratedShape:
    """One synthesized sample: its code, conditioning and measurements."""

    code: LatentCode
    mesh: TriMesh
    conditioned: dict[str, float]
    measured: FeatureVector | None
    pool_index: int | None = None
    extrapolated: bool = False

    @property
    def ok(self) -> bool:
        return self.measured is not None


def measure_or_none(mesh: TriMesh) -> FeatureVector | None:
    if mesh.is_empty or not mesh.is_watertight():
        return None
    try:
        return measure_features(mesh)
    except ValueError:
        return None


def _apply_overrides(model: ModelParams, z_fixed: np.ndarray, raw: np.ndarray,
                     overrides: dict[str, float]):
    """Replace pool-drawn feature slots with caller-supplied raw values."""
    z_fixed = z_fixed.copy()
    raw = raw.copy()
    extrapolated = False
    for name, value in overrides.items():
        if name not in model.feature_names:
            raise KeyError(f"model is not conditioned on {name!r}")
        slot = list(model.feature_names).index(name)
        raw[slot] = float(value)
        z = (float(value) - model.scaler.mean[slot]) / model.scaler.std[slot]
        z_fixed[slot] = z
        lo = model.latents.fixed[:, slot].min()
        hi = model.latents.fixed[:, slot].max()
        if not (lo <= z <= hi):
            extrapolated = True
    return z_fixed, raw, extrapolated


def generate_cohort(model: ModelParams, sampler: LatentSampler, n: int,
                    seed: int = 0, overrides: dict[str, float] | None = None,
                    resolution: int = DEFAULT_RESOLUTION,
                    measure: bool = True) -> list[GeneratedShape]:
    """Draw and synthesize ``n`` random shapes.

    Trainable dimensions are independent normals; conditioned features are
    drawn jointly (one training shape's triple at a time) from the pool
    unless overridden. Overrides outside the training range are permitted
    and flagged, not rejected.
    """
    if n < 1:
        raise ValueError("cohort size must be >= 1")
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        trainable = sampler.mean + sampler.std * rng.standard_normal(len(sampler.mean))
        pool_index = None
        extrapolated = False
        if model.k:
            pool_index = int(rng.integers(0, len(sampler.fixed_pool_z)))
            z_fixed = sampler.fixed_pool_z[pool_index]
            raw = sampler.fixed_pool_raw[pool_index]
            if overrides:
                z_fixed, raw, extrapolated = _apply_overrides(
                    model, z_fixed, raw, overrides)
            conditioned = {name: float(raw[i])
                           for i, name in enumerate(model.feature_names)}
            code = LatentCode(z_fixed, trainable)
        else:
            conditioned = {}
            code = LatentCode(np.zeros(0), trainable)
        mesh = synthesize(model, code, resolution)
        measured = measure_or_none(mesh) if measure else None
        out.append(GeneratedShape(code, mesh, conditioned, measured,
                                  pool_index, extrapolated))
    return out


@dataclass
class EditStep:
    code: LatentCode
    mesh: TriMesh
    conditioned: dict[str, float]
    measured: FeatureVector | None
    clamped: bool = False


def edit_shape(model: ModelParams, base_code: LatentCode,
               feature_targets, resolution: int = DEFAULT_RESOLUTION,
               clamp_sigma: float | None = EDIT_CLAMP_SIGMA) -> list[EditStep]:
    """Sweep conditioned features while holding the trainable code fixed.

    ``feature_targets`` is a sequence of {feature: raw value} mappings, one
    per step; absent features keep the base value. Values are clamped to
    ``clamp_sigma`` population standard deviations in z-space by default.
    """
    if model.k == 0:
        raise UnsupportedModelError(
            "editing needs a model conditioned on fixed features")
    steps = []
    for targets in feature_targets:
        z_fixed = base_code.fixed.copy()
        conditioned = {}
        clamped = False
        for name, value in targets.items():
            if name not in model.feature_names:
                raise KeyError(f"model is not conditioned on {name!r}")
            slot = list(model.feature_names).index(name)
            z = float((value - model.scaler.mean[slot]) / model.scaler.std[slot])
            if clamp_sigma is not None:
                z_clamped = float(np.clip(z, -clamp_sigma, clamp_sigma))
                clamped = clamped or bool(z_clamped != z)
                z = z_clamped
            z_fixed[slot] = z
        raw = model.scaler.invert(z_fixed)
        for i, name in enumerate(model.feature_names):
            conditioned[name] = float(raw[i])
        code = LatentCode(z_fixed, base_code.trainable.copy())
        mesh = synthesize(model, code, resolution)
        steps.append(EditStep(code, mesh, conditioned, measure_or_none(mesh),
                              clamped))
    return steps


def linear_sweep(base_value: float, lo: float, hi: float, steps: int,
                 name: str) -> list[dict[str, float]]:
    """Step targets for a one-feature sweep from lo to hi."""
    if steps < 2:
        raise ConfigError("sweep needs at least 2 steps")
    return [{name: float(v)} for v in np.linspace(lo, hi, steps)]


def save_sampler(sampler: LatentSampler, path: str | Path) -> None:
    Path(path).write_text(json.dumps(sampler.to_dict(), indent=2) + "\n")


def load_sampler(path: str | Path) -> LatentSampler:
    return LatentSampler.from_dict(json.loads(Path(path).read_text()))
