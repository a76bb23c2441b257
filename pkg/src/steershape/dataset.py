"""Synthetic two-lobe shape population and per-shape SDF sample sets.

Shapes are unions of two ellipsoidal lobes with an optional cylindrical
bridge, meshed by marching cubes on the analytic field, jointly normalized
into the unit cube, and labelled with exact mesh signed distances. The
three steering features (volume, bridge cross-section area at the mirror
plane, mirror symmetry) are measured on the normalized meshes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .isosurface import ScalarGrid, marching_cubes
from .mesh import (TriMesh, cross_section_area, load_obj, mesh_volume, mirror_iou,
                   normalize_population, PopulationTransform, sample_surface,
                   save_obj, signed_distance, write_json)

MIRROR_AXIS = 0
MIRROR_OFFSET = 0.5
SYMMETRY_RESOLUTION = 128

FEATURE_NAMES = ("volume", "isthmus_area", "symmetry")


class ParameterError(ValueError):
    """Lobe parameters place geometry outside the allowed region."""


@dataclass
class FeatureVector:
    """The three steering measurements, in unit-cube units."""

    volume: float
    isthmus_area: float
    symmetry: float

    def __post_init__(self):
        if not (self.volume > 0):
            raise ValueError(f"volume must be positive, got {self.volume}")
        if self.isthmus_area < 0:
            raise ValueError("isthmus area must be non-negative")
        if not (0.0 <= self.symmetry <= 1.0):
            raise ValueError(f"symmetry must be in [0, 1], got {self.symmetry}")

    def as_array(self) -> np.ndarray:
        return np.array([self.volume, self.isthmus_area, self.symmetry])

    def to_dict(self) -> dict:
        return {"volume": self.volume, "isthmus_area": self.isthmus_area,
                "symmetry": self.symmetry}

    @staticmethod
    def from_dict(d: dict) -> "FeatureVector":
        return FeatureVector(d["volume"], d["isthmus_area"], d["symmetry"])


def measure_features(mesh: TriMesh, symmetry_resolution: int = SYMMETRY_RESOLUTION) -> FeatureVector:
    """Measure the steering features of a watertight mesh."""
    return FeatureVector(
        volume=mesh_volume(mesh),
        isthmus_area=cross_section_area(mesh, MIRROR_AXIS, MIRROR_OFFSET),
        symmetry=mirror_iou(mesh, MIRROR_AXIS, MIRROR_OFFSET, symmetry_resolution),
    )


@dataclass
class LobeParams:
    """Two-lobe shape parameters in the generator frame (unit-cube units).

    ``bridge_radius`` 0 produces a split shape with two components. The
    tilt rotates the whole shape about the z axis through the centre.
    """

    left_radii: tuple[float, float, float]
    right_radii: tuple[float, float, float]
    lobe_offsets: tuple[float, float, float]
    bridge_radius: float = 0.03
    tilt_angle: float = 0.0

    CENTER = (0.5, 0.5, 0.5)

    def __post_init__(self):
        lr = np.asarray(self.left_radii, dtype=float)
        rr = np.asarray(self.right_radii, dtype=float)
        if np.any(lr <= 0) or np.any(rr <= 0):
            raise ParameterError("semi-axes must be positive")
        if self.bridge_radius < 0:
            raise ParameterError("bridge radius must be >= 0")
        reach = float(np.linalg.norm(self.lobe_offsets)
                      + max(lr.max(), rr.max(), self.bridge_radius))
        if reach > 0.45:
            raise ParameterError(
                f"shape reach {reach:.3f} escapes the [0.05, 0.95] cube")

    def lobe_centers(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.asarray(self.CENTER)
        off = np.asarray(self.lobe_offsets, dtype=float)
        return c - off, c + off

    def to_dict(self) -> dict:
        return {
            "left_radii": list(self.left_radii),
            "right_radii": list(self.right_radii),
            "lobe_offsets": list(self.lobe_offsets),
            "bridge_radius": self.bridge_radius,
            "tilt_angle": self.tilt_angle,
        }

    @staticmethod
    def from_dict(d: dict) -> "LobeParams":
        return LobeParams(tuple(d["left_radii"]), tuple(d["right_radii"]),
                          tuple(d["lobe_offsets"]), d["bridge_radius"],
                          d["tilt_angle"])


def _ellipsoid_field(p: np.ndarray, center: np.ndarray, radii: np.ndarray) -> np.ndarray:
    # distance-like field with the exact ellipsoid as zero set
    q = (p - center) / radii
    k0 = np.linalg.norm(q, axis=1)
    k1 = np.linalg.norm(q / radii, axis=1)
    safe = k1 > 1e-12
    return np.where(safe, k0 * (k0 - 1.0) / np.where(safe, k1, 1.0),
                    (k0 - 1.0) * radii.min())


def _capsule_field(p: np.ndarray, a: np.ndarray, b: np.ndarray, radius: float) -> np.ndarray:
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t[:, None] * ab), axis=1) - radius


def lobe_field(params: LobeParams, points: np.ndarray) -> np.ndarray:
    """Analytic union field; negative inside, exact zero set."""
    c = np.asarray(LobeParams.CENTER)
    p = np.asarray(points, dtype=np.float64)
    if params.tilt_angle != 0.0:
        # evaluate the base shape at the inversely rotated points
        ca, sa = np.cos(-params.tilt_angle), np.sin(-params.tilt_angle)
        rel = p - c
        p = np.column_stack([ca * rel[:, 0] - sa * rel[:, 1],
                             sa * rel[:, 0] + ca * rel[:, 1],
                             rel[:, 2]]) + c
    left_c, right_c = params.lobe_centers()
    d = np.minimum(
        _ellipsoid_field(p, left_c, np.asarray(params.left_radii, dtype=float)),
        _ellipsoid_field(p, right_c, np.asarray(params.right_radii, dtype=float)))
    if params.bridge_radius > 0:
        d = np.minimum(d, _capsule_field(p, left_c, right_c, params.bridge_radius))
    return d


def generate_lobe_shape(params: LobeParams, mesh_resolution: int = 96
                        ) -> tuple[TriMesh, FeatureVector]:
    """Mesh the analytic union and measure its features (generator frame)."""
    grid = ScalarGrid.cell_centered_unit(mesh_resolution)
    grid.values[...] = lobe_field(params, grid.node_points()).reshape(grid.resolution)
    mesh = marching_cubes(grid)
    if mesh.is_empty:
        raise ParameterError("parameters produced an empty shape")
    if not mesh.is_watertight():
        raise ParameterError("extracted mesh is not watertight")
    return mesh, measure_features(mesh)


@dataclass
class SampleSet:
    """Per-shape training pairs: coordinates with signed distances.

    The first ``n_surface`` rows are surface samples with value exactly 0;
    the rest are Gaussian-perturbed surface points with exact mesh signed
    distances (they may exit the unit cube slightly).
    """

    shape_id: str
    points: np.ndarray
    sdf_values: np.ndarray
    n_surface: int

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.sdf_values = np.ascontiguousarray(self.sdf_values, dtype=np.float64)
        if len(self.points) != len(self.sdf_values):
            raise ValueError("points and sdf values must have equal length")
        if np.any(self.sdf_values[:self.n_surface] != 0.0):
            raise ValueError("surface subset must have sdf exactly 0")

    def __len__(self) -> int:
        return len(self.points)


def build_sample_set(mesh: TriMesh, shape_id: str = "", n_surface: int = 40000,
                     n_perturbed: int = 10000, sigma: float = 0.1,
                     rng=0) -> SampleSet:
    """Sample the training set for one watertight normalized mesh.

    Perturbed points are drawn with replacement from the surface samples
    and displaced per-axis by N(0, sigma^2), then labelled with the exact
    signed distance. Points are not clipped to the unit cube.
    """
    rng = np.random.default_rng(rng)
    surface = sample_surface(mesh, n_surface, rng)
    pick = rng.integers(0, n_surface, size=n_perturbed)
    perturbed = surface[pick] + rng.normal(0.0, sigma, size=(n_perturbed, 3))
    sdf = signed_distance(mesh, perturbed)
    points = np.concatenate([surface, perturbed])
    values = np.concatenate([np.zeros(n_surface), sdf])
    return SampleSet(shape_id, points, values, n_surface)


@dataclass
class PopulationRanges:
    """Sampling ranges for the synthetic population, generator frame."""

    base_radius_x: tuple[float, float] = (0.07, 0.11)
    base_radius_y: tuple[float, float] = (0.08, 0.16)
    base_radius_z: tuple[float, float] = (0.08, 0.16)
    lobe_sep_x: tuple[float, float] = (0.12, 0.20)
    lobe_off_yz: tuple[float, float] = (-0.03, 0.03)
    tilt: tuple[float, float] = (-0.25, 0.25)
    bridge_radius: tuple[float, float] = (0.02, 0.05)
    asymmetry_max: float = 0.35
    split_fraction: float = 0.25
    mesh_resolution: int = 96
    lobe_gap: float = 0.02  # keeps lobes clear of the mirror plane

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "PopulationRanges":
        d = dict(d)
        for key in ("base_radius_x", "base_radius_y", "base_radius_z",
                    "lobe_sep_x", "lobe_off_yz", "tilt", "bridge_radius"):
            d[key] = tuple(d[key])
        return PopulationRanges(**d)


def sample_lobe_params(rng: np.random.Generator, ranges: PopulationRanges) -> LobeParams:
    u = lambda lo_hi: rng.uniform(lo_hi[0], lo_hi[1])
    dx = u(ranges.lobe_sep_x)
    # the x semi-axis must stay short of the separation so split shapes
    # really are split at the mirror plane
    rx_hi = min(ranges.base_radius_x[1], dx - ranges.lobe_gap)
    rx = rng.uniform(ranges.base_radius_x[0], max(ranges.base_radius_x[0] + 1e-6, rx_hi))
    base = np.array([rx, u(ranges.base_radius_y), u(ranges.base_radius_z)])
    wobble = 1.0 + rng.uniform(-ranges.asymmetry_max, ranges.asymmetry_max, size=3)
    right = base * np.clip(wobble, 0.5, 1.5)
    right[0] = min(right[0], dx - ranges.lobe_gap)
    offsets = (dx, u(ranges.lobe_off_yz), u(ranges.lobe_off_yz))
    split = rng.random() < ranges.split_fraction
    bridge = 0.0 if split else u(ranges.bridge_radius)
    return LobeParams(tuple(base), tuple(right), offsets, bridge, u(ranges.tilt))


@dataclass
class ShapeRecord:
    shape_id: str
    params: LobeParams | None
    mesh: TriMesh
    samples: SampleSet
    features: FeatureVector


@dataclass
class ShapeDataset:
    shapes: list[ShapeRecord]
    transform: PopulationTransform
    seed: int | None = None
    ranges: PopulationRanges | None = None

    def __len__(self) -> int:
        return len(self.shapes)

    def shape_ids(self) -> list[str]:
        return [s.shape_id for s in self.shapes]

    def feature_matrix(self) -> np.ndarray:
        return np.stack([s.features.as_array() for s in self.shapes])

    def by_id(self, shape_id: str) -> ShapeRecord:
        for s in self.shapes:
            if s.shape_id == shape_id:
                return s
        raise KeyError(f"unknown shape id {shape_id!r}")


def generate_population(n: int, seed: int = 0,
                        ranges: PopulationRanges | None = None,
                        n_surface: int = 40000, n_perturbed: int = 10000,
                        sigma: float = 0.1) -> ShapeDataset:
    """Reproducible synthetic population, jointly normalized and sampled."""
    if n < 2:
        raise ValueError("population needs at least 2 shapes")
    ranges = ranges or PopulationRanges()
    streams = np.random.SeedSequence(seed).spawn(n + 1)
    param_rng = np.random.default_rng(streams[0])

    raw = []
    for i in range(n):
        params = sample_lobe_params(param_rng, ranges)
        mesh, _ = generate_lobe_shape(params, ranges.mesh_resolution)
        raw.append((params, mesh))

    normalized, transform = normalize_population(
        [m for _, m in raw], reference=LobeParams.CENTER)

    shapes = []
    for i, ((params, _), mesh) in enumerate(zip(raw, normalized)):
        shape_id = f"shape_{i:03d}"
        samples = build_sample_set(mesh, shape_id, n_surface, n_perturbed,
                                   sigma, np.random.default_rng(streams[i + 1]))
        shapes.append(ShapeRecord(shape_id, params, mesh, samples,
                                  measure_features(mesh)))
    return ShapeDataset(shapes, transform, seed=seed, ranges=ranges)


def save_dataset(dataset: ShapeDataset, directory: str | Path) -> None:
    """One OBJ and one binary sample file per shape plus a JSON manifest."""
    directory = Path(directory)
    (directory / "shapes").mkdir(parents=True, exist_ok=True)
    (directory / "samples").mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "seed": dataset.seed,
        "generator": dataset.ranges.to_dict() if dataset.ranges else None,
        "normalization": dataset.transform.to_dict(),
        "shapes": [],
    }
    for rec in dataset.shapes:
        save_obj(rec.mesh, directory / "shapes" / f"{rec.shape_id}.obj")
        rows = np.column_stack([rec.samples.points, rec.samples.sdf_values])
        (directory / "samples" / f"{rec.shape_id}.bin").write_bytes(
            rows.astype("<f8").tobytes())
        manifest["shapes"].append({
            "id": rec.shape_id,
            "params": rec.params.to_dict() if rec.params else None,
            "features": rec.features.to_dict(),
            "n_surface": rec.samples.n_surface,
            "n_samples": len(rec.samples),
        })
    write_json(directory / "manifest.json", manifest)


def load_dataset(directory: str | Path) -> ShapeDataset:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    transform = PopulationTransform.from_dict(manifest["normalization"])
    ranges = (PopulationRanges.from_dict(manifest["generator"])
              if manifest.get("generator") else None)
    shapes = []
    for entry in manifest["shapes"]:
        shape_id = entry["id"]
        mesh = load_obj(directory / "shapes" / f"{shape_id}.obj")
        rows = np.frombuffer(
            (directory / "samples" / f"{shape_id}.bin").read_bytes(),
            dtype="<f8").reshape(-1, 4)
        samples = SampleSet(shape_id, rows[:, :3].copy(), rows[:, 3].copy(),
                            entry["n_surface"])
        params = LobeParams.from_dict(entry["params"]) if entry.get("params") else None
        shapes.append(ShapeRecord(shape_id, params, mesh, samples,
                                  FeatureVector.from_dict(entry["features"])))
    return ShapeDataset(shapes, transform, seed=manifest.get("seed"), ranges=ranges)


class FeatureScaler:
    """Z-scores the steering features over the training population."""

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64).reshape(-1)
        self.std = np.asarray(std, dtype=np.float64).reshape(-1)
        if np.any(self.std <= 0):
            raise ValueError("feature standard deviations must be positive")

    @staticmethod
    def fit(features: np.ndarray) -> "FeatureScaler":
        features = np.asarray(features, dtype=np.float64)
        return FeatureScaler(features.mean(axis=0), features.std(axis=0))

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"mean": [float(x) for x in self.mean],
                "std": [float(x) for x in self.std]}

    @staticmethod
    def from_dict(d: dict) -> "FeatureScaler":
        return FeatureScaler(d["mean"], d["std"])
