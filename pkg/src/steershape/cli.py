"""Command-line entry points for the full pipeline.

Subcommands: dataset-gen, train, reconstruct, generate, edit, evaluate,
serve. Every option can also come from a single TOML or JSON config file
(``--config``, top-level keys or per-command sections); explicit flags
win over the file, the file wins over built-in defaults. Failures print a
machine-readable error object to stderr and exit 1; usage errors exit 2.

Heavy imports stay inside the handlers so ``--threads`` can pin the BLAS
thread count before numpy loads (single-threaded mode makes the whole
pipeline bit-reproducible).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

FEATURE_ALIASES = {
    "volume": "volume",
    "isthmus": "isthmus_area",
    "isthmus_area": "isthmus_area",
    "symmetry": "symmetry",
}

# defaults live here, not in argparse: absent flags fall back to the config
# file first (argparse.SUPPRESS leaves them out of the namespace entirely)
DEFAULTS: dict[str, dict] = {
    "dataset-gen": {"n": None, "seed": 0, "out": None, "split_fraction": 0.25,
                    "mesh_resolution": 96, "n_surface": 40000,
                    "n_perturbed": 10000, "sigma": 0.1},
    "train": {"dataset": None, "out": None, "epochs": 10000, "latent_dim": 64,
              "fixed_features": "", "latent_l2": 1e-4, "corr_weight": 0.0,
              "seed": 0, "lr": 3e-4, "latent_lr_mult": 1.0,
              "points_per_epoch": 1000, "log": None,
              "checkpoint_interval": 0},
    "reconstruct": {"ckpt": None, "shape_id": None, "out": None,
                    "resolution": 64},
    "generate": {"ckpt": None, "n": 1000, "seed": 0, "out": None,
                 "resolution": 64, "volume": None, "isthmus": None,
                 "symmetry": None, "no_measure": False},
    "edit": {"ckpt": None, "shape_id": None, "sweep": None, "out": None,
             "resolution": 64, "no_clamp": False},
    "evaluate": {"ckpt": None, "ckpt_b": None, "dataset": None, "out": None,
                 "plots": None, "n": 1000, "seed": 0, "resolution": 64,
                 "chamfer_samples": 30000, "skip_steerability": False},
    "serve": {"ckpt": None, "port": None, "host": "127.0.0.1", "ui": None},
}

REQUIRED: dict[str, tuple[str, ...]] = {
    "dataset-gen": ("n", "out"),
    "train": ("dataset", "out"),
    "reconstruct": ("ckpt", "shape_id"),
    "generate": ("ckpt", "out"),
    "edit": ("ckpt", "shape_id", "sweep", "out"),
    "evaluate": ("ckpt", "dataset", "out"),
    "serve": ("ckpt",),
}


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _apply_thread_pin(argv: list[str]) -> None:
    """Pin math-library thread counts; must run before numpy is imported."""
    threads = os.environ.get("STEERSHAPE_THREADS")
    if "--threads" in argv:
        i = argv.index("--threads")
        if i + 1 < len(argv):
            threads = argv[i + 1]
    if threads:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
            os.environ[var] = str(threads)


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(raw)
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(raw.decode("utf-8"))


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(
        prog="steershape",
        description="Steerable shape synthesis: data, training, generation, "
                    "evaluation and the editor service.")
    parser.add_argument("--config", default=None,
                        help="TOML or JSON config file; flags win")
    parser.add_argument("--threads", type=int, default=None,
                        help="pin BLAS/numba threads (1 = bit-reproducible)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dataset-gen", help="generate a synthetic population")
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--split-fraction", type=float, default=S)
    p.add_argument("--mesh-resolution", type=int, default=S)
    p.add_argument("--n-surface", type=int, default=S)
    p.add_argument("--n-perturbed", type=int, default=S)
    p.add_argument("--sigma", type=float, default=S)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--dataset", default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--latent-dim", type=int, default=S)
    p.add_argument("--fixed-features", default=S,
                   help="comma list: volume,isthmus_area,symmetry (empty = baseline)")
    p.add_argument("--lambda", dest="latent_l2", type=float, default=S,
                   help="L2 weight on trainable codes")
    p.add_argument("--corr-weight", type=float, default=S,
                   help="> 0 enables the correlation decoupling step")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--lr", type=float, default=S)
    p.add_argument("--latent-lr-mult", type=float, default=S,
                   help="latent-code learning rate as a multiple of --lr")
    p.add_argument("--points-per-epoch", type=int, default=S)
    p.add_argument("--log", default=S, help="JSON-lines epoch log path")
    p.add_argument("--checkpoint-interval", type=int, default=S)

    p = sub.add_parser("reconstruct", help="synthesize a training shape")
    p.add_argument("--ckpt", default=S)
    p.add_argument("--shape-id", default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--resolution", type=int, default=S)

    p = sub.add_parser("generate", help="sample a random cohort")
    p.add_argument("--ckpt", default=S)
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--resolution", type=int, default=S)
    p.add_argument("--volume", type=float, default=S)
    p.add_argument("--isthmus", type=float, default=S)
    p.add_argument("--symmetry", type=float, default=S)
    p.add_argument("--no-measure", action="store_true", default=S)

    p = sub.add_parser("edit", help="sweep conditioned features of a shape")
    p.add_argument("--ckpt", default=S)
    p.add_argument("--shape-id", default=S)
    p.add_argument("--sweep", action="append", default=S,
                   metavar="FEATURE=LO:HI:STEPS",
                   help="repeatable; e.g. volume=0.05:0.2:8")
    p.add_argument("--out", default=S)
    p.add_argument("--resolution", type=int, default=S)
    p.add_argument("--no-clamp", action="store_true", default=S)

    p = sub.add_parser("evaluate", help="reconstruction/steerability report")
    p.add_argument("--ckpt", default=S)
    p.add_argument("--ckpt-b", default=S,
                   help="second checkpoint for side-by-side steerability")
    p.add_argument("--dataset", default=S)
    p.add_argument("--out", default=S)
    p.add_argument("--plots", default=S, help="directory for plot JSON files")
    p.add_argument("--n", type=int, default=S)
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--resolution", type=int, default=S)
    p.add_argument("--chamfer-samples", type=int, default=S)
    p.add_argument("--skip-steerability", action="store_true", default=S)

    p = sub.add_parser("serve", help="run the editor HTTP service")
    p.add_argument("--ckpt", default=S)
    p.add_argument("--port", type=int, default=S)
    p.add_argument("--host", default=S)
    p.add_argument("--ui", default=S, help="static UI directory to mount")
    return parser


def _resolve_args(parser: argparse.ArgumentParser,
                  argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    command = args.command
    merged = dict(DEFAULTS[command])
    if args.config:
        config = _load_config(args.config)
        section = {k: v for k, v in config.items() if not isinstance(v, dict)}
        section.update(config.get(command, {}))
        section.update(config.get(command.replace("-", "_"), {}))
        for key, value in section.items():
            key = key.replace("-", "_")
            if key in merged:
                merged[key] = value
    for key, value in vars(args).items():
        if key not in ("config", "threads", "command"):
            merged[key] = value
    for key in REQUIRED[command]:
        if merged.get(key) is None:
            flag = "--" + key.replace("_", "-")
            parser.error(f"{flag} is required for {command!r}")
    ns = argparse.Namespace(**merged)
    ns.command = command
    return ns


def _parse_features(spec: str) -> tuple[str, ...]:
    if not spec or str(spec).lower() == "none":
        return ()
    names = []
    for tok in str(spec).split(","):
        tok = tok.strip()
        if tok not in FEATURE_ALIASES:
            raise CliError("bad_feature",
                           f"unknown feature {tok!r}; choose from volume, "
                           f"isthmus_area, symmetry")
        names.append(FEATURE_ALIASES[tok])
    return tuple(names)


def cmd_dataset_gen(args) -> int:
    from .dataset import PopulationRanges, generate_population, save_dataset

    ranges = PopulationRanges(split_fraction=args.split_fraction,
                              mesh_resolution=args.mesh_resolution)
    dataset = generate_population(args.n, args.seed, ranges,
                                  n_surface=args.n_surface,
                                  n_perturbed=args.n_perturbed,
                                  sigma=args.sigma)
    save_dataset(dataset, args.out)
    print(json.dumps({"dataset": args.out, "n": len(dataset),
                      "seed": args.seed}))
    return 0


def cmd_train(args) -> int:
    from .dataset import load_dataset
    from .training import TrainConfig, train

    dataset = load_dataset(args.dataset)
    features = _parse_features(args.fixed_features)
    config = TrainConfig(
        epochs=args.epochs,
        points_per_shape_per_epoch=args.points_per_epoch,
        learning_rate=args.lr,
        latent_lr_multiplier=args.latent_lr_mult,
        latent_l2=args.latent_l2,
        corr_weight=args.corr_weight,
        corr_enabled=args.corr_weight > 0 and bool(features),
        rng_seed=args.seed,
        fixed_features=features,
        latent_dim=args.latent_dim,
        checkpoint_interval=args.checkpoint_interval,
        checkpoint_path=args.out,
        log_path=args.log,
    )
    model, reports = train(dataset, config)
    print(json.dumps({"checkpoint": args.out, "epochs": len(reports),
                      "final_mse": reports[-1].mse,
                      "final_corr_loss": reports[-1].corr_loss}))
    return 0


def cmd_reconstruct(args) -> int:
    from .generation import synthesize
    from .mesh import save_obj
    from .model import load_checkpoint

    model = load_checkpoint(args.ckpt)
    code = model.code_for_shape(args.shape_id)
    mesh = synthesize(model, code, args.resolution)
    out = args.out or f"{args.shape_id}_recon.obj"
    save_obj(mesh, out)
    print(json.dumps({"obj": out, "n_faces": mesh.n_faces,
                      "empty": mesh.is_empty}))
    return 0


def cmd_generate(args) -> int:
    from .generation import fit_sampler, generate_cohort
    from .mesh import save_obj, write_json
    from .model import load_checkpoint

    model = load_checkpoint(args.ckpt)
    sampler = fit_sampler(model)
    overrides = {}
    for flag, name in (("volume", "volume"), ("isthmus", "isthmus_area"),
                       ("symmetry", "symmetry")):
        value = getattr(args, flag)
        if value is not None:
            overrides[name] = value
    if overrides and model.k == 0:
        raise CliError("unconditioned_model",
                       "feature overrides need a conditioned checkpoint")

    cohort = generate_cohort(model, sampler, args.n, args.seed,
                             overrides or None, args.resolution,
                             measure=not args.no_measure)
    out = Path(args.out)
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    manifest = {"version": 1, "checkpoint": str(args.ckpt), "n": args.n,
                "seed": args.seed, "resolution": args.resolution,
                "overrides": overrides, "samples": []}
    empty = 0
    for i, g in enumerate(cohort):
        name = f"gen_{i:04d}.obj"
        save_obj(g.mesh, out / "meshes" / name)
        empty += int(g.mesh.is_empty)
        manifest["samples"].append({
            "index": i,
            "obj": f"meshes/{name}",
            "code": {"fixed": g.code.fixed.tolist(),
                     "trainable": g.code.trainable.tolist()},
            "conditioned": g.conditioned,
            "measured": g.measured.to_dict() if g.measured else None,
            "pool_index": g.pool_index,
            "extrapolated": g.extrapolated,
        })
    manifest["empty_meshes"] = empty
    write_json(out / "cohort.json", manifest)
    print(json.dumps({"out": str(out), "n": args.n, "empty_meshes": empty}))
    return 0


def _parse_sweep(spec: str):
    try:
        name, rng = spec.split("=", 1)
        lo, hi, steps = rng.split(":")
        return FEATURE_ALIASES[name.strip()], float(lo), float(hi), int(steps)
    except (ValueError, KeyError):
        raise CliError("bad_sweep",
                       f"sweep must look like volume=0.05:0.2:8, got {spec!r}")


def cmd_edit(args) -> int:
    from .generation import edit_shape, linear_sweep
    from .mesh import save_obj, write_json
    from .model import load_checkpoint

    model = load_checkpoint(args.ckpt)
    code = model.code_for_shape(args.shape_id)
    sweeps = args.sweep if isinstance(args.sweep, list) else [args.sweep]
    targets = []
    for spec in sweeps:
        name, lo, hi, steps = _parse_sweep(spec)
        targets.extend(linear_sweep(0.0, lo, hi, steps, name))
    steps = edit_shape(model, code, targets, args.resolution,
                       clamp_sigma=None if args.no_clamp else 3.0)
    out = Path(args.out)
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    manifest = {"version": 1, "checkpoint": str(args.ckpt),
                "shape_id": args.shape_id, "steps": []}
    for i, step in enumerate(steps):
        name = f"edit_{i:03d}.obj"
        save_obj(step.mesh, out / "meshes" / name)
        manifest["steps"].append({
            "index": i,
            "obj": f"meshes/{name}",
            "conditioned": step.conditioned,
            "measured": step.measured.to_dict() if step.measured else None,
            "clamped": step.clamped,
            "components": (step.mesh.connected_component_count()
                           if not step.mesh.is_empty else 0),
        })
    write_json(out / "edit.json", manifest)
    print(json.dumps({"out": str(out), "steps": len(steps)}))
    return 0


def cmd_evaluate(args) -> int:
    import numpy as np

    from .dataset import load_dataset
    from .generation import fit_sampler, generate_cohort
    from .metrics import (EvalReport, compare_distributions,
                          evaluate_reconstruction, evaluate_steerability)
    from .model import load_checkpoint

    dataset = load_dataset(args.dataset)
    model = load_checkpoint(args.ckpt)
    report = EvalReport(metadata={"checkpoint": str(args.ckpt),
                                  "dataset": str(args.dataset)})
    report.reconstruction = evaluate_reconstruction(
        model, dataset, args.resolution, args.chamfer_samples, args.seed)

    sampler = fit_sampler(model)
    if model.k and not args.skip_steerability:
        report.steerability = evaluate_steerability(
            model, sampler, args.n, args.seed, args.resolution)

    cohort = generate_cohort(model, sampler, args.n, args.seed,
                             resolution=args.resolution)
    rows = [g.measured.as_array() for g in cohort if g.ok]
    if len(rows) < 2:
        raise CliError("unmeasurable_cohort",
                       f"only {len(rows)}/{args.n} generated shapes were "
                       "measurable; the checkpoint looks undertrained")
    measured = np.stack(rows)
    report.distributions = compare_distributions(dataset.feature_matrix(),
                                                 measured)
    report.distributions["empty_or_invalid"] = sum(1 for g in cohort if not g.ok)
    report.distributions["n"] = args.n

    if args.ckpt_b:
        model_b = load_checkpoint(args.ckpt_b)
        sampler_b = fit_sampler(model_b)
        steer_b = evaluate_steerability(model_b, sampler_b, args.n, args.seed,
                                        args.resolution)
        comparison = {"checkpoint_b": str(args.ckpt_b), "features": {}}
        for name in model_b.feature_names:
            entry = {"b_pcc": steer_b["features"][name]["pcc"]}
            if report.steerability and name in report.steerability["features"]:
                entry["a_pcc"] = report.steerability["features"][name]["pcc"]
            comparison["features"][name] = entry
        report.comparison = comparison

    report.save(args.out)
    if args.plots:
        plots = Path(args.plots)
        plots.mkdir(parents=True, exist_ok=True)
        (plots / "distributions.json").write_text(
            json.dumps(report.distributions, indent=2) + "\n")
        if report.steerability:
            (plots / "steerability.json").write_text(
                json.dumps(report.steerability, indent=2) + "\n")
    summary = {"report": args.out,
               "chamfer_mean": report.reconstruction["chamfer_mean"]}
    if report.steerability:
        summary["pcc"] = {n: report.steerability["features"][n]["pcc"]
                          for n in report.steerability["features"]}
    print(json.dumps(summary))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import make_app

    port = args.port
    if port is None:
        port = int(os.environ.get("STEERSHAPE_PORT", "8471"))
    app = make_app(args.ckpt, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return 0


_HANDLERS = {
    "dataset-gen": cmd_dataset_gen,
    "train": cmd_train,
    "reconstruct": cmd_reconstruct,
    "generate": cmd_generate,
    "edit": cmd_edit,
    "evaluate": cmd_evaluate,
    "serve": cmd_serve,
}


def cmd_dispatch(argv: list[str]) -> int:
    parser = build_parser()
    args = _resolve_args(parser, argv)
    try:
        return _HANDLERS[args.command](args)
    except CliError as exc:
        print(json.dumps({"error": {"code": exc.code, "message": str(exc)}}),
              file=sys.stderr)
        return 1
    except (FileNotFoundError, KeyError, ValueError, RuntimeError) as exc:
        print(json.dumps({"error": {"code": type(exc).__name__,
                                    "message": str(exc)}}), file=sys.stderr)
        return 1


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _apply_thread_pin(argv)
    return cmd_dispatch(argv)


if __name__ == "__main__":
    sys.exit(main())
