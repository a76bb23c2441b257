#!/usr/bin/env python3
"""Build a small conditioned checkpoint for the editor demo and tests.

Trains a few hundred epochs on a handful of shapes; good enough for
interactive editing, quick to produce.
"""

import argparse
import sys
from pathlib import Path

from steershape.dataset import generate_population, save_dataset
from steershape.training import TrainConfig, train


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="build/demo")
    parser.add_argument("--n", type=int, default=6)
    parser.add_argument("--epochs", type=int, default=600)
    parser.add_argument("--seed", type=int, default=20)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_population(args.n, seed=args.seed,
                                  n_surface=12000, n_perturbed=3000)
    save_dataset(dataset, out / "dataset")
    cfg = TrainConfig(
        epochs=args.epochs,
        points_per_shape_per_epoch=800,
        latent_dim=32,
        hidden=(128, 128, 128),
        rng_seed=args.seed,
        fixed_features=("volume", "isthmus_area", "symmetry"),
        corr_enabled=True,
        corr_weight=1.0,
        latent_lr_multiplier=10.0,
        checkpoint_path=str(out / "demo.ckpt"),
    )
    _, reports = train(dataset, cfg)
    print(f"wrote {out / 'demo.ckpt'} (final mse {reports[-1].mse:.2e})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
