"""Surrogate-quality metrics, gene-proportion analysis, and energy estimates.

Quality metrics are computed over (predicted, measured) fitness pairs, i.e.
only the fully evaluated fraction of each generation.  The energy model is

    E = r_t * (P_c * U + P_m) * PUE * PSF

with power draws in kW, runtime in hours, and E in kWh.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import stats

from .config import EnergyParams
from .errors import ReportError
from .genome import GENE_CATALOG, GROUPS, Genotype, mark_effective

logger = logging.getLogger(__name__)

# Reference figures from the original large-scale experiments; quoted in
# reports for context only, never reproduced at this scale.
REFERENCE_RELATIVE_ENERGY_SAVING = 0.25
REFERENCE_TOTAL_KWH_SAVED = 89.28
REFERENCE_RUN_COUNT = 32


def mse(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.ndim != 1:
        raise ValueError(f"mismatched metric inputs {pred.shape} / {actual.shape}")
    if pred.size == 0:
        raise ValueError("mse of empty vectors is undefined")
    return float(np.mean((pred - actual) ** 2))


def kendall_tau(pred, actual) -> float:
    """Tie-corrected rank correlation (tau-b); 0 with a warning when every
    pair is tied and the correction denominator vanishes."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.size < 2:
        raise ValueError("kendall_tau needs two equal-length vectors of size >= 2")
    tau = stats.kendalltau(pred, actual).statistic
    if math.isnan(tau):
        logger.warning("kendall_tau undefined for all-tied input, returning 0")
        return 0.0
    return float(tau)


def r2_score(pred, actual) -> float:
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.size < 2:
        raise ValueError("r2_score needs two equal-length vectors of size >= 2")
    ss_tot = float(np.sum((actual - actual.mean()) ** 2))
    if ss_tot == 0.0:
        raise ValueError("R^2 undefined: measured values have zero variance")
    ss_res = float(np.sum((actual - pred) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass
class SurrogateQuality:
    mse: float
    kendall_tau: float
    r2: float  # nan when undefined (constant measured values)
    n_pairs: int


def surrogate_quality(pred, actual) -> SurrogateQuality:
    """All three metrics over one set of (predicted, measured) pairs."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    err = mse(pred, actual)
    if pred.size < 2:
        return SurrogateQuality(err, 0.0, float("nan"), int(pred.size))
    tau = kendall_tau(pred, actual)
    try:
        r2 = r2_score(pred, actual)
    except ValueError:
        r2 = float("nan")
    return SurrogateQuality(err, tau, r2, int(pred.size))


def energy_kwh(p: EnergyParams) -> float:
    """Energy consumed in kWh."""
    return p.runtime_hours * (p.cores_kw * p.usage + p.memory_kw) * p.pue * p.psf


def energy_saving_report(
    surrogate_manifest: dict, full_manifest: dict, params: EnergyParams
) -> dict:
    """Energy and evaluation-count comparison of a surrogate-assisted run
    against its full-evaluation counterpart.

    Uses each run's measured wall time for the runtime term.  Includes the
    large-scale reference figures as context, clearly marked as not
    reproduced here.
    """
    per_run = {}
    for name, manifest in (("surrogate", surrogate_manifest), ("full", full_manifest)):
        totals = manifest.get("totals", {})
        if "wall_seconds" not in totals:
            raise ReportError(f"{name} run manifest is missing timing data")
        hours = totals["wall_seconds"] / 3600.0
        per_run[name] = {
            "wall_seconds": totals["wall_seconds"],
            "runtime_hours": hours,
            "energy_kwh": energy_kwh(replace(params, runtime_hours=hours)),
            "full_trainings": totals.get("full_trainings"),
            "partial_trainings": totals.get("partial_trainings"),
            "epochs_trained": totals.get("epochs_trained"),
        }
    e_sm, e_full = per_run["surrogate"]["energy_kwh"], per_run["full"]["energy_kwh"]
    saving = {
        "absolute_kwh": e_full - e_sm,
        "relative": 0.0 if e_full == 0 else 1.0 - e_sm / e_full,
    }
    epochs_sm = per_run["surrogate"]["epochs_trained"]
    epochs_full = per_run["full"]["epochs_trained"]
    if epochs_sm is not None and epochs_full:
        saving["epochs_saved_relative"] = 1.0 - epochs_sm / epochs_full
    fulls_sm = per_run["surrogate"]["full_trainings"]
    fulls_full = per_run["full"]["full_trainings"]
    if fulls_sm is not None and fulls_full is not None:
        saving["full_trainings_saved"] = fulls_full - fulls_sm
    return {
        "params": {
            "cores_kw": params.cores_kw,
            "usage": params.usage,
            "memory_kw": params.memory_kw,
            "pue": params.pue,
            "psf": params.psf,
        },
        "runs": per_run,
        "saving": saving,
        "reference_large_scale_study": {
            "note": "context from the original large-scale experiments; not reproduced at this scale",
            "relative_energy_saving": REFERENCE_RELATIVE_ENERGY_SAVING,
            "total_kwh_saved": REFERENCE_TOTAL_KWH_SAVED,
            "runs": REFERENCE_RUN_COUNT,
        },
    }


@dataclass
class GeneProportionReport:
    snapshot: str  # e.g. "initial" / "final"
    gene_proportions: dict[str, float]
    group_proportions: dict[str, float]
    n_genes: int


def gene_proportions(genotypes: list[Genotype], snapshot: str) -> GeneProportionReport:
    """Per-gene and per-group frequencies over effective instructions only.

    Intron genes never reach the phenotype, so they are excluded from the
    count; frequencies per snapshot sum to 1.
    """
    if not genotypes:
        raise ValueError("gene_proportions needs a non-empty population")
    counts = {gene.name: 0 for gene in GENE_CATALOG}
    total = 0
    for g in genotypes:
        for i in mark_effective(g):
            counts[g.instructions[i].gene.name] += 1
            total += 1
    if total == 0:
        raise ValueError("population has no effective instructions")
    gene_props = {name: c / total for name, c in counts.items()}
    group_props = {group: 0.0 for group in GROUPS}
    for gene in GENE_CATALOG:
        group_props[gene.group] += gene_props[gene.name]
    return GeneProportionReport(snapshot, gene_props, group_props, total)
