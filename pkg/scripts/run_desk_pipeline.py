#!/usr/bin/env python3
"""End-to-end desk-scale experiment: dataset, the three model variants
(baseline / fixed conditioning / correlation step), and the evaluation
reports. Mirrors the acceptance setup; expect a couple of hours on a
small CPU box.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from steershape.dataset import generate_population, load_dataset, save_dataset
from steershape.generation import fit_sampler, generate_cohort
from steershape.metrics import (EvalReport, compare_distributions,
                                evaluate_reconstruction, evaluate_steerability)
from steershape.model import load_checkpoint, save_checkpoint
from steershape.training import desk_config, train

FEATURES = ("volume", "isthmus_area", "symmetry")


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default="build/desk")
    parser.add_argument("--n-shapes", type=int, default=20)
    parser.add_argument("--epochs", type=int, default=2000)
    parser.add_argument("--cohort", type=int, default=1000)
    parser.add_argument("--dataset-seed", type=int, default=101)
    parser.add_argument("--train-seed", type=int, default=11)
    args = parser.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.time()

    data_dir = out / "dataset"
    if (data_dir / "manifest.json").exists():
        dataset = load_dataset(data_dir)
        print(f"[{time.time()-t0:7.0f}s] reusing dataset at {data_dir}")
    else:
        dataset = generate_population(args.n_shapes, seed=args.dataset_seed)
        save_dataset(dataset, data_dir)
        print(f"[{time.time()-t0:7.0f}s] dataset written to {data_dir}")

    variants = {
        "baseline": dict(fixed_features=(), corr_enabled=False, corr_weight=0.0),
        "fixed": dict(fixed_features=FEATURES, corr_enabled=False,
                      corr_weight=0.0),
        "correlation": dict(fixed_features=FEATURES, corr_enabled=True,
                            corr_weight=1.0),
    }
    models = {}
    for name, extra in variants.items():
        ckpt = out / f"{name}.ckpt"
        if ckpt.exists():
            models[name] = load_checkpoint(ckpt)
            print(f"[{time.time()-t0:7.0f}s] reusing {ckpt}")
            continue
        cfg = desk_config(rng_seed=args.train_seed, epochs=args.epochs,
                          checkpoint_path=str(ckpt),
                          log_path=str(out / f"{name}.log"), **extra)
        model, reports = train(dataset, cfg)
        models[name] = model
        print(f"[{time.time()-t0:7.0f}s] {name}: final mse {reports[-1].mse:.2e}")

    summary = {}
    for name, model in models.items():
        report = EvalReport(metadata={"variant": name})
        report.reconstruction = evaluate_reconstruction(model, dataset)
        sampler = fit_sampler(model)
        if model.k:
            report.steerability = evaluate_steerability(
                model, sampler, args.cohort, seed=1000)
        cohort = generate_cohort(model, sampler, args.cohort, seed=1000)
        ok = [g for g in cohort if g.ok]
        measured = np.stack([g.measured.as_array() for g in ok])
        report.distributions = compare_distributions(dataset.feature_matrix(),
                                                     measured)
        report.distributions["empty_or_invalid"] = len(cohort) - len(ok)
        report.save(out / f"report_{name}.json")

        entry = {"chamfer_mean": report.reconstruction["chamfer_mean"],
                 "ks": {k: v["ks_statistic"]
                        for k, v in report.distributions["features"].items()}}
        if report.steerability:
            entry["pcc"] = {k: v["pcc"]
                            for k, v in report.steerability["features"].items()}
        summary[name] = entry
        print(f"[{time.time()-t0:7.0f}s] {name}: {json.dumps(entry)}")

    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(f"[{time.time()-t0:7.0f}s] wrote {out / 'summary.json'}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
