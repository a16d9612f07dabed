"""End-to-end acceptance suite: one test per criterion, each printing a
single pass/fail line (run with ``pytest tests/test_acceptance.py -v -s`` to
see the lines as they complete).

Criteria 8-10 share one paired smoke comparison (surrogate vs full mode,
population 12, 5 generations, the default 16x16 synthetic dataset and the
shipped default master seed), built once per session.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from lgpnas.analytics import energy_kwh
from lgpnas.cli import main as cli_main
from lgpnas.config import EnergyParams
from lgpnas.engine import expected_improvement
from lgpnas.genome import (
    GENE_CATALOG,
    GROUP_CONV,
    GenomeConfig,
    random_genotype,
    repair,
)
from lgpnas.phenotype import Architecture, LayerKind, LayerSpec, to_phenotype
from lgpnas.smallnet import (
    DatasetSplit,
    TrainConfig,
    extract_semantics,
    generate_synthetic,
    gradient_check,
    train,
)
from lgpnas.surrogate import PlsProjection, fit, kernel, predict

from test_surrogate import naive_gp_predict


def record(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {detail}"
    print(line)
    assert ok, line


# --------------------------------------------------------------------- smoke

@pytest.fixture(scope="session")
def smoke_runs(tmp_path_factory):
    """Paired smoke comparison: same dataset and master seed, both modes."""
    root = tmp_path_factory.mktemp("acceptance_smoke")
    ds_dir = root / "dataset"
    assert cli_main(["gen-data", "--out", str(ds_dir), "--seed", "0"]) == 0
    walls = {}
    for mode in ("surrogate", "full"):
        start = time.perf_counter()
        code = cli_main([
            "run", "--dataset", str(ds_dir), "--out", str(root / mode),
            "--mode", mode, "--population", "12", "--generations", "5",
        ])
        walls[mode] = time.perf_counter() - start
        assert code == 0, f"{mode} run failed"
    manifests = {
        mode: json.loads((root / mode / "manifest.json").read_text())
        for mode in ("surrogate", "full")
    }
    return {"root": root, "walls": walls, "manifests": manifests}


# ----------------------------------------------------------------- criteria

def test_criterion_01_expected_improvement_monte_carlo():
    start = time.perf_counter()
    z = np.random.default_rng(101).standard_normal(10_000_000)
    buf = np.empty_like(z)
    rng = np.random.default_rng(202)
    worst_ratio = 0.0
    for _ in range(100):
        mean, sigma, f_best = rng.uniform(0, 1), rng.uniform(0.001, 1.0), rng.uniform(0, 1)
        np.multiply(z, sigma, out=buf)
        buf += mean - f_best
        np.maximum(buf, 0.0, out=buf)
        estimate = float(buf.mean())
        second_moment = float(buf @ buf) / len(z)
        se = math.sqrt(max(second_moment - estimate**2, 0.0) / len(z))
        diff = abs(expected_improvement(mean, sigma, f_best) - estimate)
        # 1e-9 absolute floor: when the improvement region is so unlikely
        # that every sample is zero, the estimated SE degenerates to 0 while
        # the analytic value can still be a tiny positive number below the
        # 10^7-sample resolution
        if se > 0:
            worst_ratio = max(worst_ratio, diff / se)
        assert diff <= 3 * se + 1e-9
    assert expected_improvement(0.4, 0.0, 0.9) == 0.0
    assert expected_improvement(0.9, 0.0, 0.4) == 0.0
    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    record(1, True, f"100 triples within 3 SE (worst {worst_ratio:.2f} SE, "
                    f"1e-9 floor for sub-resolution cases), EI(sigma=0)=0, "
                    f"{elapsed:.1f}s < 30s")


def test_criterion_02_kriging_interpolation():
    rng = np.random.default_rng(102)
    x = rng.random((20, 5))
    y = rng.random(20)
    model = fit(x, y, use_pls=False, nugget=1e-10)
    worst_mean, worst_var = 0.0, 0.0
    for i in range(20):
        pred = predict(model, x[i])
        worst_mean = max(worst_mean, abs(pred.mean - y[i]))
        worst_var = max(worst_var, pred.variance)
    record(2, worst_mean < 1e-6 and worst_var <= 1e-8,
           f"max |mean-y| {worst_mean:.2e} < 1e-6, max variance {worst_var:.2e} <= 1e-8")


def test_criterion_03_projected_kernel_matches_plain():
    rng = np.random.default_rng(103)
    m = 8
    identity = PlsProjection(np.eye(m), m, np.zeros(m), np.ones(m), 0.0, 1.0)
    worst = 0.0
    for _ in range(1000):
        a, b = rng.random(m), rng.random(m)
        theta = 10.0 ** rng.uniform(-2, 1, size=m)
        worst = max(worst, abs(kernel(a, b, theta) - kernel(a, b, theta, identity)))
    record(3, worst <= 1e-12, f"1000 pairs, max |plain - projected| {worst:.2e} <= 1e-12")


def test_criterion_04_predictor_matches_naive_inverse():
    rng = np.random.default_rng(104)
    worst = 0.0
    for _ in range(50):
        x = rng.random((10, 4))
        y = rng.random(10)
        model = fit(x, y, h=3)
        omega = (model.projection.w**2) @ model.theta
        xq = rng.random(4)
        mean, var, _, _ = naive_gp_predict(
            model.x, y, omega, model.nugget, xq - model.projection.x_mean
        )
        pred = predict(model, xq)
        worst = max(worst, abs(pred.mean - mean), abs(pred.variance - var))
    record(4, worst <= 1e-8, f"50 models, max |factored - naive| {worst:.2e} <= 1e-8")


def test_criterion_05_high_dimensional_surrogate_quality():
    rng = np.random.default_rng(12)  # shipped default seed for this benchmark
    a_map = rng.standard_normal((2000, 3))
    z_train = rng.random((40, 3))
    z_test = rng.random((40, 3))

    def embed(z):
        return z @ a_map.T + 0.01 * rng.standard_normal((z.shape[0], 2000))

    def f(z):
        return -((z - 0.3) ** 2).sum(axis=1)

    x_train, x_test = embed(z_train), embed(z_test)
    start = time.perf_counter()
    model = fit(x_train, f(z_train), h=3)
    fit_seconds = time.perf_counter() - start
    preds = np.array([predict(model, q).mean for q in x_test])
    actual = f(z_test)
    from lgpnas.analytics import kendall_tau, r2_score

    tau = kendall_tau(preds, actual)
    r2 = r2_score(preds, actual)
    record(5, tau >= 0.8 and r2 >= 0.6 and fit_seconds < 10.0,
           f"n=40, m=2000, h=3: tau {tau:.4f} >= 0.8, R^2 {r2:.4f} >= 0.6, "
           f"fit {fit_seconds:.2f}s < 10s "
           f"(large-scale reference ranges: tau 0.5647-0.6791, R^2 0.5026-0.7786)")


def test_criterion_06_gradient_check():
    data = generate_synthetic(height=6, width=6, samples=60, noise=0.3, seed=31)
    batch = DatasetSplit(data.train.images[:8], data.train.labels[:8])
    arch = Architecture(
        (
            LayerSpec(LayerKind.CONV, filters=4, kernel=3),
            LayerSpec(LayerKind.MAX_POOL),
            LayerSpec(LayerKind.BATCH_NORM),
            LayerSpec(LayerKind.DENSE_OUTPUT),
        ),
        (6, 6, 1), 2,
    )
    err = gradient_check(arch, batch, epsilon=1e-5, seed=37)
    record(6, err < 1e-5, f"max relative gradient error {err:.2e} < 1e-5")


def test_criterion_07_intron_neutrality():
    data = generate_synthetic(height=8, width=8, samples=60, noise=0.8, seed=3)
    genome_cfg = GenomeConfig(min_len=1, max_len=6, num_registers=6)
    train_cfg = TrainConfig(partial_epochs=1, full_epochs=2)
    rng = np.random.default_rng(107)
    for i in range(1000):
        g = random_genotype(genome_cfg, rng)
        semantics = []
        for variant in (g, repair(g)):
            arch = to_phenotype(variant, data.input_shape, data.num_classes)
            net = train(arch, data.train, train_cfg, upto_epochs=1, seed=i)
            semantics.append(extract_semantics(net, data.val))
        assert (semantics[0] == semantics[1]).all(), f"genotype {i} semantics differ"
    record(7, True, "1000 random genotypes: semantics bit-identical after repair")


def test_criterion_08_split_policy_accounting(smoke_runs):
    sm = smoke_runs["manifests"]["surrogate"]["totals"]
    fl = smoke_runs["manifests"]["full"]["totals"]
    walls = smoke_runs["walls"]
    ok = (
        sm["full_trainings"] == 32
        and fl["full_trainings"] == 60
        and sm["epochs_trained"] < fl["epochs_trained"]
        and max(walls.values()) < 15 * 60
    )
    record(8, ok,
           f"full trainings {sm['full_trainings']} (=12+4*ceil(4.8)) vs "
           f"{fl['full_trainings']}; epochs {sm['epochs_trained']} < {fl['epochs_trained']}; "
           f"walls {walls['surrogate']:.0f}s/{walls['full']:.0f}s < 900s")


def test_criterion_09_quality_parity(smoke_runs):
    best_sm = smoke_runs["manifests"]["surrogate"]["best"]["fitness"]
    best_fl = smoke_runs["manifests"]["full"]["best"]["fitness"]
    diff = abs(best_sm - best_fl)
    record(9, diff <= 0.05,
           f"best validation accuracy {best_sm:.4f} (surrogate) vs {best_fl:.4f} (full), "
           f"|diff| {diff:.4f} <= 0.05")


def test_criterion_10_mse_series_stable(smoke_runs):
    path = smoke_runs["root"] / "surrogate" / "quality_per_gen.csv"
    rows = [line.split(",") for line in path.read_text().splitlines()[1:]]
    mses = [(int(r[0]), float(r[2])) for r in rows if r[2] != ""]
    assert mses, "no surrogate quality rows recorded"
    ok = all(math.isfinite(m) for _, m in mses)
    checks = []
    for gen, value in mses:
        if gen > 3:
            prior = [m for g, m in mses if g < gen]
            bound = 3.0 * float(np.median(prior))
            checks.append(f"gen {gen}: {value:.4f} <= {bound:.4f}")
            ok = ok and value <= bound
    record(10, ok, f"MSE series {[round(m, 4) for _, m in mses]}; " + "; ".join(checks))


def test_criterion_11_energy_formula():
    value = energy_kwh(EnergyParams(runtime_hours=1.0, cores_kw=0.3, usage=1.0,
                                    memory_kw=0.05, pue=1.67, psf=1.0))
    base = EnergyParams(runtime_hours=3.7, cores_kw=0.21, usage=0.8,
                        memory_kw=0.04, pue=1.67, psf=1.0)
    doubled = EnergyParams(**{**base.__dict__, "psf": 2.0})
    linear = energy_kwh(doubled) == 2.0 * energy_kwh(base)
    record(11, abs(value - 0.58450) <= 1e-9 and linear,
           f"E(1h, 0.3kW, U=1, 0.05kW, PUE 1.67, PSF 1) = {value:.5f} kWh "
           f"(=0.58450 +- 1e-9); doubling PSF doubles E exactly")


def test_criterion_12_initialization_proportions():
    cfg = GenomeConfig()
    rng = np.random.default_rng(112)
    group_counts: dict[str, int] = {}
    gene_counts: dict[str, int] = {}
    total = 0
    while total < 10_000:
        for ins in random_genotype(cfg, rng).instructions:
            group_counts[ins.gene.group] = group_counts.get(ins.gene.group, 0) + 1
            gene_counts[ins.gene.name] = gene_counts.get(ins.gene.name, 0) + 1
            total += 1
    worst_group = max(abs(c / total - 0.25) for c in group_counts.values())
    conv_target = 0.25 / 6
    worst_conv = max(
        abs(gene_counts.get(g.name, 0) / total - conv_target)
        for g in GENE_CATALOG if g.group == GROUP_CONV
    )
    record(12, worst_group < 0.02 and worst_conv < 0.01,
           f"{total} genes: max group deviation {worst_group:.4f} < 0.02, "
           f"max conv-gene deviation {worst_conv:.4f} < 0.01 (target 0.25/6)")


def test_criterion_13_run_determinism(tmp_path):
    ds_dir = tmp_path / "ds"
    assert cli_main(["gen-data", "--out", str(ds_dir), "--height", "8", "--width", "8",
                     "--samples", "60", "--noise", "0.8", "--seed", "3"]) == 0
    args = [
        "run", "--dataset", str(ds_dir), "--mode", "surrogate", "--seed", "9",
        "--population", "6", "--generations", "2",
        "--genome.min_len=2", "--genome.max_len=5", "--genome.num_registers=5",
        "--train.partial_epochs=1", "--train.full_epochs=3",
    ]
    for name in ("a", "b"):
        assert cli_main(args + ["--out", str(tmp_path / name)]) == 0
    report_csvs = ("quality_per_gen.csv", "pred_vs_actual.csv", "gene_proportions.csv")
    identical = all(
        (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
        for f in report_csvs
    )

    def rows_without_wall(path: Path):
        return [line.rsplit(",", 1)[0] for line in path.read_text().splitlines()]

    log_identical = rows_without_wall(tmp_path / "a" / "generations.csv") == \
        rows_without_wall(tmp_path / "b" / "generations.csv")
    record(13, identical and log_identical,
           "two identical runs: report CSVs byte-identical, evaluation log "
           "identical up to measured wall seconds")
