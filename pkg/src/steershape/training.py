"""Auto-decoder training of the conditioned SDF network.

Each epoch visits every shape once in shuffled order, draws a fresh batch
of its stored coordinate/SDF pairs, and applies one Adam step to the
network weights and that shape's trainable code (squared-error data term
plus L2 on the trainable code). With correlation decoupling enabled, an
extra step at the end of each epoch pushes the trainable table toward zero
Pearson correlation with every conditioned feature, leaving the weights
frozen. Fixed latent slots are never updated.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .autodiff import (AdamState, MLPLayer, Tape, Tensor2, backward, grad_of)
from .dataset import ShapeDataset
from .model import (DEFAULT_HIDDEN, DEFAULT_LATENT_DIM, ModelParams, build_model,
                    save_checkpoint)


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; a diagnostic checkpoint was written if possible."""


def desk_config(**overrides) -> "TrainConfig":
    """Desk-scale preset: 20 shapes / 2000 epochs with the published
    hyperparameters otherwise. Codes train with a higher learning rate than
    the network (standard auto-decoder practice); at this population size
    that spread is what lets fresh latent draws cover the training feature
    distribution."""
    base = dict(epochs=2000, points_per_shape_per_epoch=1000,
                learning_rate=3e-4, latent_lr_multiplier=10.0,
                latent_l2=1e-4, latent_dim=64, hidden=(256, 256, 256))
    base.update(overrides)
    return TrainConfig(**base)


@dataclass
class TrainConfig:
    epochs: int = 10000
    points_per_shape_per_epoch: int = 1000
    learning_rate: float = 3e-4
    latent_lr_multiplier: float = 1.0
    latent_l2: float = 1e-4
    corr_weight: float = 1.0
    corr_enabled: bool = False
    rng_seed: int = 0
    fixed_features: tuple[str, ...] = ()
    latent_dim: int = DEFAULT_LATENT_DIM
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    checkpoint_interval: int = 0  # epochs between checkpoints; 0 = final only
    checkpoint_path: str | None = None
    log_path: str | None = None

    def __post_init__(self):
        if self.latent_l2 < 0 or self.corr_weight < 0:
            raise ValueError("regularization weights must be >= 0")
        if self.latent_lr_multiplier <= 0:
            raise ValueError("latent lr multiplier must be positive")
        if self.epochs < 1 or self.points_per_shape_per_epoch < 1:
            raise ValueError("epochs and batch size must be positive")
        self.fixed_features = tuple(self.fixed_features)
        self.hidden = tuple(self.hidden)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fixed_features"] = list(self.fixed_features)
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class EpochReport:
    epoch: int
    mse: float
    latent_l2_term: float
    corr_loss: float
    wall_time: float

    def to_dict(self) -> dict:
        return asdict(self)


def reconstruction_loss(layers: list[MLPLayer], code_full: np.ndarray, k: int,
                        points: np.ndarray, targets: np.ndarray,
                        latent_l2: float):
    """Squared-error data term plus L2 on the trainable code segment.

    Returns ``(loss, data_term, weight_grads, trainable_code_grad)`` where
    ``weight_grads`` aligns with the flattened (weight, bias) parameter
    list. The L2 term covers only the trainable slots; the fixed slots are
    constants.
    """
    if len(points) == 0:
        raise ValueError("batch must be non-empty")
    tape = Tape()
    x = tape.leaf(np.ascontiguousarray(points, dtype=np.float64))
    z_leaf = tape.leaf(code_full.reshape(1, -1))
    inp = tape.concat_cols(x, tape.broadcast_rows(z_leaf, len(points)))

    layer_vars = [(tape.leaf(l.weight), tape.leaf(l.bias)) for l in layers]
    h = inp
    for li, (w, b) in enumerate(layer_vars):
        h = tape.affine(h, w, b, relu=li < len(layer_vars) - 1)

    resid = tape.sub(h, tape.leaf(np.asarray(targets, dtype=np.float64).reshape(-1, 1)))
    data_term = tape.sum_all(tape.square(resid))
    loss = data_term
    n_total = code_full.shape[-1]
    if latent_l2 > 0.0 and n_total > k:
        z_tr = tape.slice_cols(z_leaf, k, n_total)
        loss = tape.add(loss, tape.scale(tape.sum_all(tape.square(z_tr)), latent_l2))

    grads = backward(tape, root=loss)
    weight_grads = []
    for w, b in layer_vars:
        weight_grads.append(grad_of(grads, w))
        weight_grads.append(grad_of(grads, b))
    z_grad = grad_of(grads, z_leaf)[0, k:]
    return float(loss.value[0, 0]), float(data_term.value[0, 0]), weight_grads, z_grad


def correlation_loss(trainable: np.ndarray, fixed_values: np.ndarray) -> float:
    """Mean absolute across-shape Pearson correlation with one fixed feature.

    Trainable dimensions that are constant across shapes contribute 0 (no
    linear dependence is expressible). Always in [0, 1].
    """
    value, _ = correlation_loss_grad(trainable, fixed_values)
    return value


def correlation_loss_grad(trainable: np.ndarray, fixed_values: np.ndarray):
    """Loss value and its gradient with respect to the trainable table."""
    t = np.asarray(trainable, dtype=np.float64)
    f = np.asarray(fixed_values, dtype=np.float64).reshape(-1)
    n, num_dims = t.shape
    if n < 3:
        raise ValueError("correlation needs at least 3 shapes")
    if len(f) != n:
        raise ValueError("fixed feature length must match table rows")
    u = f - f.mean()
    su = float(u @ u)
    if su <= 0.0:
        raise ValueError("fixed feature has zero variance across shapes")

    v = t - t.mean(axis=0, keepdims=True)  # (n, N)
    sv = (v * v).sum(axis=0)               # (N,)
    suv = u @ v                             # (N,)
    # a constant dimension leaves rounding residue after centring; treat
    # variation below ~1e-12 of the value scale as zero variance
    scale = np.abs(t).max(axis=0) + 1.0
    live = sv > n * (1e-12 * scale) ** 2
    denom = np.sqrt(su * np.where(live, sv, 1.0))
    pcc = np.where(live, suv / denom, 0.0)
    value = float(np.abs(pcc).mean())

    # d|pcc_j|/dv = sign(pcc_j) * (u/denom_j - pcc_j * v_j/sv_j); centring the
    # result accounts for the mean subtraction in v
    sign = np.sign(pcc)
    with np.errstate(invalid="ignore", divide="ignore"):
        g = (u[:, None] / denom[None, :]
             - pcc[None, :] * v / np.where(live, sv, 1.0)[None, :])
    g = np.where(live[None, :], g * sign[None, :], 0.0)
    g -= g.mean(axis=0, keepdims=True)
    return value, g / num_dims


def _latent_row_view(table: np.ndarray, i: int) -> Tensor2:
    row = table[i:i + 1]
    t = Tensor2(row)
    assert t.a.base is not None or t.a is row  # must stay a writable view
    return t


def train(dataset: ShapeDataset, config: TrainConfig,
          model: ModelParams | None = None, progress=None
          ) -> tuple[ModelParams, list[EpochReport]]:
    """Optimize weights and trainable codes over the dataset.

    Fully seeded: the shape order, per-shape batches and initialization all
    derive from ``config.rng_seed``. Single-writer; reports are emitted per
    epoch and appended to ``config.log_path`` when set.
    """
    if config.points_per_shape_per_epoch > min(len(s.samples) for s in dataset.shapes):
        raise ValueError("points per shape per epoch exceeds the stored sample sets")
    if model is None:
        model = build_model(dataset, config.fixed_features, config.latent_dim,
                            config.hidden, seed=config.rng_seed)
    model.train_config = config.to_dict()
    k = model.k

    streams = np.random.SeedSequence(config.rng_seed).spawn(2)
    order_rng = np.random.default_rng(streams[0])
    batch_rng = np.random.default_rng(streams[1])

    theta = []
    for layer in model.layers:
        theta.extend([layer.weight, layer.bias])
    theta_adam = AdamState(theta, config.learning_rate)
    latent_lr = config.learning_rate * config.latent_lr_multiplier
    latent_adams = [
        AdamState([_latent_row_view(model.latents.trainable, i)], latent_lr)
        for i in range(model.n_shapes)
    ]
    corr_adam = (AdamState([Tensor2(model.latents.trainable)], latent_lr)
                 if config.corr_enabled and k > 0 else None)
    if corr_adam is not None:
        # the state must alias the live table, not a copy
        assert corr_adam.params[0].a is model.latents.trainable \
            or corr_adam.params[0].a.base is model.latents.trainable

    fixed_baseline = model.latents.fixed.copy()
    log_file = open(config.log_path, "a") if config.log_path else None
    reports: list[EpochReport] = []
    points_per = config.points_per_shape_per_epoch

    try:
        for epoch in range(config.epochs):
            t_start = time.perf_counter()
            order = order_rng.permutation(model.n_shapes)
            sq_sum = 0.0
            reg_sum = 0.0
            for i in order:
                samples = dataset.shapes[i].samples
                idx = batch_rng.integers(0, len(samples), size=points_per)
                pts = samples.points[idx]
                targets = samples.sdf_values[idx]
                code_full = model.latents.full_row(i)
                loss, data_term, w_grads, z_grad = reconstruction_loss(
                    model.layers, code_full, k, pts, targets, config.latent_l2)
                theta_adam.step(w_grads)
                latent_adams[i].step([z_grad.reshape(1, -1)])
                sq_sum += data_term
                reg_sum += loss - data_term

            corr_value = 0.0
            if corr_adam is not None:
                grad = np.zeros_like(model.latents.trainable)
                for j in range(k):
                    val, g = correlation_loss_grad(model.latents.trainable,
                                                   model.latents.fixed[:, j])
                    corr_value += val
                    grad += g
                corr_adam.step([grad * config.corr_weight])

            mse = sq_sum / (model.n_shapes * points_per)
            report = EpochReport(epoch, mse, reg_sum / model.n_shapes,
                                 corr_value, time.perf_counter() - t_start)
            reports.append(report)
            if log_file:
                log_file.write(json.dumps(report.to_dict()) + "\n")
                log_file.flush()
            if progress:
                progress(report)

            if not np.isfinite(mse):
                if config.checkpoint_path:
                    save_checkpoint(model, str(config.checkpoint_path) + ".diverged")
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}; check data and learning rate")

            if (config.checkpoint_interval and config.checkpoint_path
                    and (epoch + 1) % config.checkpoint_interval == 0):
                save_checkpoint(model, config.checkpoint_path)
    finally:
        if log_file:
            log_file.close()

    if not np.array_equal(fixed_baseline, model.latents.fixed):
        raise AssertionError("fixed latent slots were modified during training")
    model.check_finite()
    if config.checkpoint_path:
        save_checkpoint(model, config.checkpoint_path)
    return model, reports
