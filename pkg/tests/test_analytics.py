import math

import numpy as np
import pytest

from lgpnas.analytics import (
    EnergyParams,
    energy_kwh,
    energy_saving_report,
    gene_proportions,
    kendall_tau,
    mse,
    r2_score,
    surrogate_quality,
)
from lgpnas.errors import ReportError
from lgpnas.genome import GenomeConfig, parse, random_genotype


def brute_force_tau_b(a, b):
    """O(n^2) pair-counting oracle with tie correction."""
    n = len(a)
    concordant = discordant = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da, db = a[i] - a[j], b[i] - b[j]
            if da == 0 and db == 0:
                ties_a += 1
                ties_b += 1
            elif da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif da * db > 0:
                concordant += 1
            else:
                discordant += 1
    n0 = n * (n - 1) / 2
    denom = math.sqrt((n0 - ties_a) * (n0 - ties_b))
    if denom == 0:
        return 0.0
    return (concordant - discordant) / denom


def test_mse_basics():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert mse([0.0, 1.0], [1.0, 0.0]) == 1.0
    with pytest.raises(ValueError):
        mse([], [])


def test_mse_matches_naive_two_pass():
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = rng.random(17), rng.random(17)
        naive = sum((x - y) ** 2 for x, y in zip(a, b)) / 17
        assert abs(mse(a, b) - naive) < 1e-12


def test_kendall_tau_extremes():
    assert kendall_tau([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert kendall_tau([1, 2, 3, 4], [8, 6, 4, 2]) == pytest.approx(-1.0)
    with pytest.raises(ValueError):
        kendall_tau([1.0], [2.0])


def test_kendall_tau_all_ties_is_zero():
    assert kendall_tau([1.0, 1.0, 1.0], [2.0, 2.0, 2.0]) == 0.0


def test_kendall_tau_matches_pair_counting_oracle():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 25))
        # quantize to force ties
        a = np.round(rng.random(n), 1)
        b = np.round(rng.random(n), 1)
        expected = brute_force_tau_b(a, b)
        assert kendall_tau(a, b) == pytest.approx(expected, abs=1e-12)


def test_r2_score():
    actual = [1.0, 2.0, 3.0]
    assert r2_score(actual, actual) == pytest.approx(1.0)
    assert r2_score([2.0, 2.0, 2.0], actual) == pytest.approx(0.0)
    centered = [-1.0, 0.0, 1.0]
    assert r2_score([1.0, 0.0, -1.0], centered) < 0
    with pytest.raises(ValueError):
        r2_score([1.0, 2.0], [5.0, 5.0])


def test_surrogate_quality_bundle():
    q = surrogate_quality([0.1, 0.2, 0.3], [0.1, 0.25, 0.28])
    assert q.n_pairs == 3
    assert q.mse >= 0 and -1 <= q.kendall_tau <= 1 and q.r2 <= 1


def test_energy_formula_reference_value():
    p = EnergyParams(runtime_hours=1.0, cores_kw=0.3, usage=1.0,
                     memory_kw=0.05, pue=1.67, psf=1.0)
    assert energy_kwh(p) == pytest.approx(0.58450, abs=1e-9)


def test_energy_zero_draw():
    p = EnergyParams(runtime_hours=5.0, cores_kw=0.3, usage=0.0,
                     memory_kw=0.0, pue=1.67, psf=1.0)
    assert energy_kwh(p) == 0.0


def test_energy_linear_in_psf_and_runtime():
    base = EnergyParams(runtime_hours=2.0, cores_kw=0.2, usage=0.5,
                        memory_kw=0.03, pue=1.67, psf=1.0)
    doubled = EnergyParams(**{**base.__dict__, "psf": 2.0})
    assert energy_kwh(doubled) == 2.0 * energy_kwh(base)
    longer = EnergyParams(**{**base.__dict__, "runtime_hours": 6.0})
    assert energy_kwh(longer) == pytest.approx(3.0 * energy_kwh(base))


def _manifest(wall_seconds, fulls, epochs):
    return {"totals": {"wall_seconds": wall_seconds, "full_trainings": fulls,
                       "partial_trainings": 0, "epochs_trained": epochs}}


def test_energy_saving_report_identical_runs():
    params = EnergyParams()
    m = _manifest(3600.0, 60, 600)
    report = energy_saving_report(m, m, params)
    assert report["saving"]["relative"] == 0.0
    assert report["saving"]["absolute_kwh"] == 0.0


def test_energy_saving_report_epoch_accounting():
    # 20-individual, 15-generation split policy: 132 fulls at 10 epochs and
    # 168 partial-only individuals at 2 epochs vs 300 fulls at 10 epochs
    params = EnergyParams()
    sm = _manifest(1800.0, 132, 132 * 10 + 168 * 2)
    full = _manifest(3600.0, 300, 300 * 10)
    report = energy_saving_report(sm, full, params)
    assert report["saving"]["epochs_saved_relative"] == pytest.approx(0.448)
    assert report["saving"]["full_trainings_saved"] == 168
    assert report["saving"]["relative"] == pytest.approx(0.5)
    ref = report["reference_large_scale_study"]
    assert ref["relative_energy_saving"] == 0.25
    assert ref["total_kwh_saved"] == 89.28


def test_energy_saving_report_requires_timing():
    with pytest.raises(ReportError):
        energy_saving_report({"totals": {}}, _manifest(1.0, 1, 1), EnergyParams())


def test_gene_proportions_initial_snapshot():
    cfg = GenomeConfig()
    rng = np.random.default_rng(2)
    pop = [random_genotype(cfg, rng) for _ in range(400)]
    report = gene_proportions(pop, "initial")
    assert report.snapshot == "initial"
    assert sum(report.gene_proportions.values()) == pytest.approx(1.0, abs=1e-9)
    assert sum(report.group_proportions.values()) == pytest.approx(1.0, abs=1e-9)
    # effective-code filtering keeps group shares near the sampling proportions
    assert report.group_proportions["convolution"] == pytest.approx(0.25, abs=0.05)


def test_gene_proportions_single_gene_population():
    g = parse("r[0] := AVG_POOL(r[1])\n")
    report = gene_proportions([g, g, g], "final")
    assert report.gene_proportions["AVG_POOL"] == 1.0
    assert report.group_proportions["pooling"] == 1.0


def test_gene_proportions_counts_effective_only():
    text = "r[3] := CONV_32_3x3(r[2])\nr[0] := AVG_POOL(r[1])\n"
    report = gene_proportions([parse(text)], "final")
    assert report.gene_proportions["CONV_32_3x3"] == 0.0
    assert report.gene_proportions["AVG_POOL"] == 1.0
