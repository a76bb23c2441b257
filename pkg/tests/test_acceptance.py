"""Acceptance suite: every criterion at its stated tolerance, one printed
pass/fail line each.

The desk-scale runs (A4 onward) train real models; the full module takes
on the order of two hours on a 2-core box. Criteria share session-scoped
artifacts: one 20-shape dataset, a baseline model, and the two conditioned
variants (correlation step off/on) on identical seeds.
"""

import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from steershape.autodiff import backward, forward_mlp, grad_of, Tape
from steershape.dataset import (ShapeDataset, generate_population,
                                measure_features)
from steershape.generation import (edit_shape, fit_sampler, generate_cohort,
                                   linear_sweep, synthesize)
from steershape.isosurface import ScalarGrid, marching_cubes
from steershape.mesh import (chamfer_distance, cross_section_area, mesh_volume,
                             mirror_iou, signed_distance)
from steershape.metrics import compare_distributions, pearson
from steershape.model import build_model
from steershape.primitives import box, icosphere
from steershape.training import (TrainConfig, correlation_loss,
                                 correlation_loss_grad, desk_config, train)

pytestmark = pytest.mark.acceptance

DATASET_SEED = 101
TRAIN_SEED = 11
COHORT_SEED = 1000
COHORT_N = 1000
FEATURES = ("volume", "isthmus_area", "symmetry")


def report(criterion: str, ok: bool, detail: str) -> None:
    line = f"{criterion} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line, flush=True)
    sys.stderr.write(line + "\n")


# ---------------------------------------------------------------- artifacts


@pytest.fixture(scope="session")
def desk_dataset():
    return generate_population(20, seed=DATASET_SEED)


@pytest.fixture(scope="session")
def timings():
    return {}


@pytest.fixture(scope="session")
def baseline_model(desk_dataset, timings):
    t0 = time.perf_counter()
    model, reports = train(desk_dataset, desk_config(rng_seed=TRAIN_SEED))
    timings["train_baseline"] = time.perf_counter() - t0
    return model


@pytest.fixture(scope="session")
def fixed_model(desk_dataset, timings):
    cfg = desk_config(rng_seed=TRAIN_SEED, fixed_features=FEATURES,
                      corr_enabled=False, corr_weight=0.0)
    t0 = time.perf_counter()
    model, _ = train(desk_dataset, cfg)
    timings["train_fixed"] = time.perf_counter() - t0
    return model


@pytest.fixture(scope="session")
def corr_model(desk_dataset, timings):
    cfg = desk_config(rng_seed=TRAIN_SEED, fixed_features=FEATURES,
                      corr_enabled=True, corr_weight=1.0)
    t0 = time.perf_counter()
    model, _ = train(desk_dataset, cfg)
    timings["train_corr"] = time.perf_counter() - t0
    return model


def reconstruction_chamfers(model, dataset):
    values = []
    for shape_id in model.shape_ids:
        recon = synthesize(model, model.code_for_shape(shape_id), 64)
        values.append(chamfer_distance(dataset.by_id(shape_id).mesh, recon,
                                       30000, 0))
    return np.array(values)


def measured_cohort(model, n=COHORT_N, seed=COHORT_SEED):
    sampler = fit_sampler(model)
    return generate_cohort(model, sampler, n, seed=seed, resolution=64)


@pytest.fixture(scope="session")
def baseline_cohort(baseline_model):
    return measured_cohort(baseline_model)


@pytest.fixture(scope="session")
def fixed_cohort(fixed_model):
    return measured_cohort(fixed_model)


@pytest.fixture(scope="session")
def corr_cohort(corr_model):
    return measured_cohort(corr_model)


def steer_pcc(model, cohort):
    ok = [g for g in cohort if g.ok]
    out = {}
    for name in model.feature_names:
        out[name] = pearson([g.conditioned[name] for g in ok],
                            [getattr(g.measured, name) for g in ok])
    return out, len(cohort) - len(ok)


# ---------------------------------------------------------------- criteria


def test_a1_gradient_correctness():
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    max_rel = 0.0
    from helpers import finite_difference_check

    for _ in range(100):
        hidden = [int(rng.integers(2, 9)) for _ in range(int(rng.integers(2, 4)))]
        dims = [int(rng.integers(2, 9))] + hidden + [1]
        max_rel = max(max_rel, finite_difference_check(rng, dims, batch=4))
    elapsed = time.perf_counter() - t0
    ok = max_rel < 1e-4 and elapsed < 10.0
    report("A1", ok,
           f"100 random MLPs, max relative gradient error {max_rel:.2e} "
           f"(< 1e-4), runtime {elapsed:.1f}s (< 10s)")
    assert max_rel < 1e-4
    assert elapsed < 10.0


def test_a2_correlation_loss_gradient():
    rng = np.random.default_rng(13)
    table = rng.normal(size=(10, 4))
    feature = rng.normal(size=10)
    value, grad = correlation_loss_grad(table, feature)
    h = 1e-6
    max_rel = 0.0
    for i in range(10):
        for j in range(4):
            orig = table[i, j]
            table[i, j] = orig + h
            lp = correlation_loss(table, feature)
            table[i, j] = orig - h
            lm = correlation_loss(table, feature)
            table[i, j] = orig
            fd = (lp - lm) / (2 * h)
            denom = max(abs(fd), abs(grad[i, j]), 1e-8)
            max_rel = max(max_rel, abs(fd - grad[i, j]) / denom)

    in_range = 0.0 <= value <= 1.0
    affine_gap = abs(correlation_loss(table, feature)
                     - correlation_loss(table, 2.7 * feature + 3.1))
    ok = max_rel < 1e-4 and in_range and affine_gap < 1e-10
    report("A2", ok,
           f"grad FD error {max_rel:.2e} (< 1e-4), value {value:.4f} in [0,1], "
           f"affine invariance gap {affine_gap:.1e} (< 1e-10)")
    assert max_rel < 1e-4
    assert in_range
    assert affine_gap < 1e-10


def test_a3_geometry_oracles():
    t0 = time.perf_counter()
    sphere = icosphere(radius=0.3, subdivisions=4)
    d_center = signed_distance(sphere, np.array([0.5, 0.5, 0.5]))
    sdf_err = abs(d_center + 0.3)

    grid = ScalarGrid.cell_centered_unit(64)
    pts = grid.node_points()
    grid.values[...] = (np.linalg.norm(pts - 0.5, axis=1) - 0.3
                        ).reshape(grid.resolution)
    mc_mesh = marching_cubes(grid)
    vol = mesh_volume(mc_mesh)
    vol_analytic = 4.0 / 3.0 * np.pi * 0.3 ** 3
    vol_rel = abs(vol - vol_analytic) / vol_analytic

    xsec = cross_section_area(mc_mesh, 0, 0.5)
    xsec_rel = abs(xsec - np.pi * 0.09) / (np.pi * 0.09)

    cube = box((0.2, 0.3, 0.35), (0.8, 0.7, 0.65))
    iou = mirror_iou(cube, 0, 0.5, 128)

    self_chamfer = chamfer_distance(sphere, sphere, 30000, 0)
    elapsed = time.perf_counter() - t0

    ok = (sdf_err < 2e-3 and vol_rel < 0.02 and xsec_rel < 0.01
          and iou >= 0.98 and self_chamfer < 1e-9 and elapsed < 60)
    report("A3", ok,
           f"sphere sdf err {sdf_err:.2e} (< 2e-3), MC volume rel {vol_rel:.3%} "
           f"(< 2%), cross-section rel {xsec_rel:.3%} (< 1%), cube mirror IoU "
           f"{iou:.3f} (>= 0.98), self-chamfer {self_chamfer:.1e} (< 1e-9), "
           f"runtime {elapsed:.1f}s (< 60s)")
    assert sdf_err < 2e-3
    assert vol_rel < 0.02
    assert xsec_rel < 0.01
    assert iou >= 0.98
    assert self_chamfer < 1e-9
    assert elapsed < 60


def test_a4_overfit_sanity():
    t0 = time.perf_counter()
    population = generate_population(2, seed=DATASET_SEED + 1)
    single = ShapeDataset(population.shapes[:1], population.transform)
    cfg = desk_config(rng_seed=TRAIN_SEED, epochs=500)
    model, reports = train(single, cfg)
    final_mse = reports[-1].mse
    recon = synthesize(model, model.latents.code(0), 64)
    chamfer = chamfer_distance(single.shapes[0].mesh, recon, 30000, 0)
    elapsed = time.perf_counter() - t0
    ok = final_mse < 1e-4 and chamfer < 0.01 and elapsed < 300
    report("A4", ok,
           f"single-shape overfit: mse {final_mse:.2e} (< 1e-4), chamfer "
           f"{chamfer:.4f} (< 0.01), runtime {elapsed:.0f}s (< 300s)")
    assert final_mse < 1e-4
    assert chamfer < 0.01
    assert elapsed < 300


def test_a5_desk_scale_reconstruction(desk_dataset, baseline_model,
                                      fixed_model, timings):
    t0 = time.perf_counter()
    base_vals = reconstruction_chamfers(baseline_model, desk_dataset)
    fixed_vals = reconstruction_chamfers(fixed_model, desk_dataset)
    eval_time = time.perf_counter() - t0
    total = timings["train_baseline"] + timings["train_fixed"] + eval_time
    base_mean = base_vals.mean()
    fixed_mean = fixed_vals.mean()
    ok = (base_mean <= 0.02 and fixed_mean <= 1.25 * base_mean
          and total < 45 * 60)
    report("A5", ok,
           f"baseline chamfer {base_mean:.4f} (<= 0.02), conditioned "
           f"{fixed_mean:.4f} (<= 1.25x = {1.25 * base_mean:.4f}), "
           f"runtime {total / 60:.1f} min (< 45)")
    assert base_mean <= 0.02
    assert fixed_mean <= 1.25 * base_mean
    assert total < 45 * 60


def test_a6_generation_distribution(desk_dataset, baseline_cohort):
    empty = sum(1 for g in baseline_cohort if g.mesh.is_empty)
    invalid = sum(1 for g in baseline_cohort if not g.ok)
    measured = np.stack([g.measured.as_array() for g in baseline_cohort if g.ok])
    frag = compare_distributions(desk_dataset.feature_matrix(), measured)
    ks = {name: frag["features"][name]["ks_statistic"] for name in FEATURES}
    empty_rate = empty / len(baseline_cohort)
    ok = all(v < 0.15 for v in ks.values()) and empty_rate < 0.01
    report("A6", ok,
           f"KS volume {ks['volume']:.3f}, isthmus {ks['isthmus_area']:.3f}, "
           f"symmetry {ks['symmetry']:.3f} (each < 0.15); empty rate "
           f"{empty_rate:.1%} (< 1%), unmeasurable {invalid}")
    assert empty_rate < 0.01
    for name, value in ks.items():
        assert value < 0.15, f"KS for {name} is {value:.3f}"


def test_a7_steerability(corr_model, corr_cohort):
    pcc, bad = steer_pcc(corr_model, corr_cohort)
    ok = pcc["volume"] >= 0.9 and pcc["isthmus_area"] >= 0.7
    report("A7", ok,
           f"steerability PCC: volume {pcc['volume']:.3f} (>= 0.9), isthmus "
           f"{pcc['isthmus_area']:.3f} (>= 0.7), symmetry {pcc['symmetry']:.3f} "
           f"(reported, no bound); unmeasurable {bad}/{len(corr_cohort)}")
    assert pcc["volume"] >= 0.9
    assert pcc["isthmus_area"] >= 0.7


def test_a8_disentanglement_ablation(fixed_model, corr_model,
                                     fixed_cohort, corr_cohort):
    def table_pcc(model):
        total = 0.0
        for j in range(model.k):
            total += correlation_loss(model.latents.trainable,
                                      model.latents.fixed[:, j])
        return total / model.k

    fixed_tbl = table_pcc(fixed_model)
    corr_tbl = table_pcc(corr_model)
    pcc_fixed, _ = steer_pcc(fixed_model, fixed_cohort)
    pcc_corr, _ = steer_pcc(corr_model, corr_cohort)
    ok = (corr_tbl < fixed_tbl
          and pcc_corr["isthmus_area"] >= pcc_fixed["isthmus_area"])
    report("A8", ok,
           f"mean |PCC(features, trainable dims)|: corr-on {corr_tbl:.4f} < "
           f"corr-off {fixed_tbl:.4f}; isthmus steer PCC corr-on "
           f"{pcc_corr['isthmus_area']:.3f} vs corr-off "
           f"{pcc_fixed['isthmus_area']:.3f} (not worse)")
    assert corr_tbl < fixed_tbl
    assert pcc_corr["isthmus_area"] >= pcc_fixed["isthmus_area"]


def test_a9_pipeline_determinism(tmp_path):
    def run(root: Path) -> str:
        env = dict(os.environ)
        env.update({"OPENBLAS_NUM_THREADS": "1", "OMP_NUM_THREADS": "1",
                    "NUMBA_NUM_THREADS": "1"})
        steps = [
            ["dataset-gen", "--n", "6", "--seed", "42", "--out",
             str(root / "data"), "--n-surface", "3000", "--n-perturbed",
             "800", "--mesh-resolution", "64"],
            ["train", "--dataset", str(root / "data"), "--out",
             str(root / "model.ckpt"), "--epochs", "50", "--latent-dim",
             "16", "--seed", "7", "--points-per-epoch", "256"],
            ["generate", "--ckpt", str(root / "model.ckpt"), "--n", "10",
             "--seed", "9", "--out", str(root / "gen"), "--resolution",
             "48"],
        ]
        for step in steps:
            proc = subprocess.run(
                [sys.executable, "-m", "steershape", *step],
                env=env, capture_output=True, text=True, cwd="/root/pkg")
            assert proc.returncode == 0, proc.stderr
        import hashlib

        digest = hashlib.sha256()
        for base in ("data", "gen"):
            for p in sorted((root / base).rglob("*")):
                if p.is_file():
                    digest.update(str(p.relative_to(root)).encode())
                    digest.update(p.read_bytes())
        digest.update((root / "model.ckpt").read_bytes())
        return digest.hexdigest()

    h1 = run(tmp_path / "run1")
    h2 = run(tmp_path / "run2")
    ok = h1 == h2
    report("A9", ok,
           f"two single-threaded pipeline runs: digests "
           f"{'match' if ok else 'differ'} ({h1[:16]}…)")
    assert h1 == h2


def test_a10_topology_steering(corr_model):
    base = corr_model.code_for_shape(corr_model.shape_ids[0])
    hi = float(corr_model.features_raw[:, 1].max())
    steps = edit_shape(corr_model, base,
                       linear_sweep(0.0, 0.0, hi, 8, "isthmus_area"),
                       resolution=64)
    counts = [s.mesh.connected_component_count() if not s.mesh.is_empty else 0
              for s in steps]
    has_split = any(c >= 2 for c in counts)
    has_joined = any(c == 1 for c in counts)
    ok = has_split and has_joined
    report("A10", ok,
           f"isthmus sweep component counts {counts}: split state "
           f"{'seen' if has_split else 'missing'}, joined state "
           f"{'seen' if has_joined else 'missing'}")
    assert has_split and has_joined
