"""The conditioned SDF network and its latent-code table.

One MLP covers all model variants: the per-shape code is a fixed segment
(z-scored steering features, k slots, first) concatenated with a trainable
segment (N slots). k=0 gives the unconditioned baseline. Checkpoints are a
JSON header plus raw float64 blocks and round-trip byte-exactly.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import MLPLayer, ShapeError, Tensor2, forward_mlp_inference
from .dataset import FEATURE_NAMES, FeatureScaler

CHECKPOINT_MAGIC = b"SSCK"
CHECKPOINT_VERSION = 1

DEFAULT_HIDDEN = (256, 256, 256)
DEFAULT_LATENT_DIM = 64
LATENT_INIT_STD = 0.01


@dataclass
class LatentCode:
    """Fixed (conditioned) and trainable segments of one shape's code."""

    fixed: np.ndarray
    trainable: np.ndarray

    def __post_init__(self):
        self.fixed = np.asarray(self.fixed, dtype=np.float64).reshape(-1)
        self.trainable = np.asarray(self.trainable, dtype=np.float64).reshape(-1)

    def full(self) -> np.ndarray:
        return np.concatenate([self.fixed, self.trainable])

    def __len__(self) -> int:
        return len(self.fixed) + len(self.trainable)


class LatentTable:
    """Per-shape codes: fixed slots never receive optimizer updates."""

    def __init__(self, fixed: np.ndarray, trainable: np.ndarray):
        self.fixed = np.ascontiguousarray(fixed, dtype=np.float64)
        self.trainable = np.ascontiguousarray(trainable, dtype=np.float64)
        if self.fixed.ndim != 2 or self.trainable.ndim != 2:
            raise ShapeError("latent table segments must be 2-D")
        if len(self.fixed) != len(self.trainable):
            raise ShapeError("fixed and trainable tables must have equal rows")

    @property
    def n_shapes(self) -> int:
        return len(self.trainable)

    @property
    def k(self) -> int:
        return self.fixed.shape[1]

    @property
    def N(self) -> int:
        return self.trainable.shape[1]

    def code(self, i: int) -> LatentCode:
        return LatentCode(self.fixed[i].copy(), self.trainable[i].copy())

    def full_row(self, i: int) -> np.ndarray:
        return np.concatenate([self.fixed[i], self.trainable[i]])


def init_latents(n_shapes: int, latent_dim: int, sigma0: float = LATENT_INIT_STD,
                 rng=0, fixed: np.ndarray | None = None) -> LatentTable:
    """Trainable parts i.i.d. N(0, sigma0^2); fixed parts copied verbatim."""
    if n_shapes < 1:
        raise ValueError("need at least one shape")
    rng = np.random.default_rng(rng)
    trainable = rng.normal(0.0, sigma0, size=(n_shapes, latent_dim))
    if fixed is None:
        fixed = np.zeros((n_shapes, 0))
    fixed = np.asarray(fixed, dtype=np.float64).reshape(n_shapes, -1)
    return LatentTable(fixed, trainable)


FINAL_LAYER_SCALE = 0.05


def init_mlp(input_dim: int, hidden: tuple[int, ...], rng) -> list[MLPLayer]:
    """Fan-in-scaled uniform weights (Kaiming style), zero biases.

    The output layer starts small so initial predictions sit near the zero
    level set, which removes a large early transient in the fit.
    """
    rng = np.random.default_rng(rng)
    dims = [input_dim, *hidden, 1]
    layers = []
    for li, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        bound = np.sqrt(6.0 / fan_in)
        if li == len(dims) - 2:
            bound *= FINAL_LAYER_SCALE
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(MLPLayer(Tensor2(w), Tensor2.zeros(1, fan_out)))
    return layers


@dataclass
class ModelParams:
    """Checkpointable state: MLP layers plus the latent-code table."""

    layers: list[MLPLayer]
    latents: LatentTable
    feature_names: tuple[str, ...]
    scaler: FeatureScaler | None
    shape_ids: list[str]
    features_raw: np.ndarray  # (n_shapes, 3) raw measured features
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    init_scheme: str = "kaiming_uniform"
    seed: int | None = None
    train_config: dict | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features_raw = np.asarray(self.features_raw, dtype=np.float64)
        if self.input_dim != self.layers[0].weight.rows:
            raise ShapeError(
                f"first layer expects {self.layers[0].weight.rows} inputs, "
                f"code implies {self.input_dim}")

    @property
    def k(self) -> int:
        return self.latents.k

    @property
    def latent_dim(self) -> int:
        return self.latents.N

    @property
    def input_dim(self) -> int:
        return 3 + self.k + self.latents.N

    @property
    def n_shapes(self) -> int:
        return self.latents.n_shapes

    def code_for_shape(self, shape_id: str) -> LatentCode:
        try:
            i = self.shape_ids.index(shape_id)
        except ValueError:
            raise KeyError(f"unknown shape id {shape_id!r}") from None
        return self.latents.code(i)

    def check_finite(self) -> None:
        for layer in self.layers:
            layer.weight.check_finite()
            layer.bias.check_finite()
        if not (np.all(np.isfinite(self.latents.fixed))
                and np.all(np.isfinite(self.latents.trainable))):
            raise FloatingPointError("non-finite latent values")


def build_model(dataset, fixed_features: tuple[str, ...] = (),
                latent_dim: int = DEFAULT_LATENT_DIM,
                hidden: tuple[int, ...] = DEFAULT_HIDDEN,
                seed: int = 0) -> ModelParams:
    """Fresh model over a dataset; conditions on the named features (k=len)."""
    for name in fixed_features:
        if name not in FEATURE_NAMES:
            raise ValueError(f"unknown feature {name!r}; choose from {FEATURE_NAMES}")
    features_raw = dataset.feature_matrix()
    k = len(fixed_features)
    scaler = None
    fixed = np.zeros((len(dataset), 0))
    if k:
        cols = [FEATURE_NAMES.index(n) for n in fixed_features]
        scaler = FeatureScaler.fit(features_raw[:, cols])
        fixed = scaler.transform(features_raw[:, cols])
    streams = np.random.SeedSequence(seed).spawn(2)
    layers = init_mlp(3 + k + latent_dim, hidden, streams[0])
    latents = init_latents(len(dataset), latent_dim, LATENT_INIT_STD,
                           streams[1], fixed)
    return ModelParams(layers, latents, tuple(fixed_features), scaler,
                       dataset.shape_ids(), features_raw, hidden=tuple(hidden),
                       seed=seed)


def predict_sdf(model: ModelParams, code: LatentCode, points: np.ndarray,
                chunk: int = 1024) -> np.ndarray:
    """Batch SDF prediction for one code.

    Identical calls reproduce identical outputs bit for bit. A point's
    value may move by one ulp when the surrounding batch changes shape
    (BLAS kernels tile rows differently); treat per-point values as exact
    only relative to their batch. The chunk size keeps layer activations
    cache-resident on dense grids.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ShapeError(f"points must be (n, 3), got {points.shape}")
    z = code.full()
    if 3 + len(z) != model.input_dim:
        raise ShapeError(
            f"code length {len(z)} does not match model width {model.input_dim - 3}")
    out = np.empty(len(points))
    buf = np.empty((min(chunk, len(points)), 3 + len(z)))
    for lo in range(0, len(points), chunk):
        n = min(chunk, len(points) - lo)
        inp = buf[:n]
        inp[:, :3] = points[lo:lo + n]
        inp[:, 3:] = z
        out[lo:lo + n] = forward_mlp_inference(model.layers, inp)[:, 0]
    return out


def _parameter_blocks(model: ModelParams) -> list[tuple[str, np.ndarray]]:
    blocks = []
    for i, layer in enumerate(model.layers):
        blocks.append((f"layer{i}.weight", layer.weight.a))
        blocks.append((f"layer{i}.bias", layer.bias.a))
    blocks.append(("latent.fixed", model.latents.fixed))
    blocks.append(("latent.trainable", model.latents.trainable))
    return blocks


def save_checkpoint(model: ModelParams, path: str | Path) -> None:
    blocks = _parameter_blocks(model)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "hidden": list(model.hidden),
        "k": model.k,
        "latent_dim": model.latent_dim,
        "feature_names": list(model.feature_names),
        "feature_scaler": model.scaler.to_dict() if model.scaler else None,
        "shape_ids": list(model.shape_ids),
        "features_raw": [[float(x) for x in row] for row in model.features_raw],
        "init_scheme": model.init_scheme,
        "seed": model.seed,
        "train_config": model.train_config,
        "metadata": model.metadata,
        "blocks": [{"name": name, "rows": a.shape[0], "cols": a.shape[1]}
                   for name, a in blocks],
    }
    payload = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<IQ", CHECKPOINT_VERSION, len(payload)))
        f.write(payload)
        for _, a in blocks:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> ModelParams:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path} is not a model checkpoint")
    version, header_len = struct.unpack_from("<IQ", raw, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 4 + 12
    header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    offset += header_len

    arrays = {}
    for spec in header["blocks"]:
        n = spec["rows"] * spec["cols"]
        a = np.frombuffer(raw, dtype="<f8", count=n, offset=offset)
        arrays[spec["name"]] = a.reshape(spec["rows"], spec["cols"]).copy()
        offset += n * 8

    hidden = tuple(header["hidden"])
    layers = [MLPLayer(Tensor2(arrays[f"layer{i}.weight"]),
                       Tensor2(arrays[f"layer{i}.bias"]))
              for i in range(len(hidden) + 1)]
    latents = LatentTable(arrays["latent.fixed"], arrays["latent.trainable"])
    scaler = (FeatureScaler.from_dict(header["feature_scaler"])
              if header.get("feature_scaler") else None)
    return ModelParams(
        layers, latents, tuple(header["feature_names"]), scaler,
        list(header["shape_ids"]), np.array(header["features_raw"]),
        hidden=hidden, init_scheme=header.get("init_scheme", "kaiming_uniform"),
        seed=header.get("seed"), train_config=header.get("train_config"),
        metadata=header.get("metadata", {}))
