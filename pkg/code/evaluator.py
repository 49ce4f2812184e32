"""Evaluation and analysis: ensemble group separation and re-fitting of stored runs."""

import itertools
import logging
import os
from typing import Dict, Optional

import numpy as np

from config import DEFAULT_BIN_RULE, ENSEMBLE_GROUPS, SEPARATION_Z_BETWEEN, SEPARATION_Z_WITHIN
from distribution_fitting import fit_report, fit_table_rows
from exporter import load_run, write_json

logger = logging.getLogger(__name__)


def _z_score(mean1: float, sem1: float, mean2: float, sem2: float) -> float:
    combined = np.hypot(sem1, sem2)
    if combined == 0:
        return 0.0 if mean1 == mean2 else float("inf")
    return float(abs(mean1 - mean2) / combined)


def calculate_ensemble_statistics(samples: Dict[str, np.ndarray]) -> Dict[str, Dict]:
    """Mean, population std and standard error of sigma^2 per ensemble."""
    stats = {}
    for name, values in samples.items():
        values = np.asarray(values, dtype=float)
        if values.size < 2:
            raise ValueError(f"Ensemble {name} needs at least 2 samples, got {values.size}")
        stats[name] = {
            "n": int(values.size),
            "mean": float(values.mean()),
            "std": float(values.std()),
            "sem": float(values.std(ddof=1) / np.sqrt(values.size))
        }
    return stats


def calculate_pairwise_z(stats: Dict[str, Dict]) -> Dict[str, float]:
    """|mean_A - mean_B| / sqrt(sem_A^2 + sem_B^2) for every ensemble pair."""
    return {
        f"{a}|{b}": _z_score(stats[a]["mean"], stats[a]["sem"], stats[b]["mean"], stats[b]["sem"])
        for a, b in itertools.combinations(sorted(stats), 2)
    }


def calculate_overlap(samples: Dict[str, np.ndarray], z_max: float = SEPARATION_Z_WITHIN) -> Dict:
    """Whether all ensembles agree within z_max combined standard errors."""
    stats = calculate_ensemble_statistics(samples)
    pairwise = calculate_pairwise_z(stats)
    max_z = max(pairwise.values()) if pairwise else 0.0
    return {"statistics": stats, "pairwise_z": pairwise, "max_z": max_z, "overlap": max_z <= z_max}


def calculate_group_separation(samples: Dict[str, np.ndarray], groups: Optional[Dict] = None,
                               z_within: float = SEPARATION_Z_WITHIN,
                               z_between: float = SEPARATION_Z_BETWEEN) -> Dict:
    """Two-group analysis of mean sigma^2.

    Args:
        samples: per-ensemble sigma^2 arrays
        groups: {group_name: ensembles}; exactly two groups (default real_like / complex_like)
        z_within: consistency threshold inside a group
        z_between: separation threshold between the groups

    Returns:
        Dictionary with per-ensemble statistics, pairwise z-scores, per-group means,
        within-group consistency, between-group z, the group-mean ratio (first / second)
        and whether the groups are separated
    """
    groups = groups or ENSEMBLE_GROUPS
    if len(groups) != 2:
        raise ValueError(f"Group separation needs exactly two groups, got {len(groups)}")
    stats = calculate_ensemble_statistics(samples)
    pairwise = calculate_pairwise_z(stats)

    group_stats = {}
    for group, members in groups.items():
        present = [m for m in members if m in samples]
        if not present:
            raise ValueError(f"No samples for any member of group {group} {members}")
        pooled = np.concatenate([np.asarray(samples[m], dtype=float) for m in present])
        member_z = [pairwise[f"{a}|{b}"] for a, b in itertools.combinations(sorted(present), 2)]
        group_stats[group] = {
            "members": present,
            "n": int(pooled.size),
            "mean": float(pooled.mean()),
            "sem": float(pooled.std(ddof=1) / np.sqrt(pooled.size)),
            "max_within_z": max(member_z) if member_z else 0.0,
            "consistent": all(z <= z_within for z in member_z)
        }

    (g1, s1), (g2, s2) = group_stats.items()
    between = _z_score(s1["mean"], s1["sem"], s2["mean"], s2["sem"])
    return {
        "statistics": stats,
        "pairwise_z": pairwise,
        "groups": group_stats,
        "between_z": between,
        "ratio": s1["mean"] / s2["mean"] if s2["mean"] != 0 else float("inf"),
        "larger_group": g1 if s1["mean"] >= s2["mean"] else g2,
        "separated": between > z_between
    }


def evaluate_run(run_dir: str, rule: str = DEFAULT_BIN_RULE) -> Dict:
    """Re-fit the stored sigma^2 samples of a run and analyse group separation."""
    stored = load_run(run_dir)
    samples = {name: frame["sigma2"].to_numpy(dtype=float) for name, frame in stored.sigma2.items()}
    if not samples:
        raise ValueError(f"No per-sample tables found in {run_dir}")

    evaluation = {"run_dir": os.path.abspath(run_dir), "rule": rule, "fits": {}, "table": []}
    for name, values in samples.items():
        fits = {}
        for model in ("normal", "scaled_chi_square"):
            try:
                fits[model] = fit_report(values, model, rule)
            except (ValueError, RuntimeError) as e:
                logger.warning(f"{name}: {model} fit failed: {e}")
                fits[model] = {"model": model, "error": str(e)}
        evaluation["fits"][name] = fits
        try:
            evaluation["table"].extend(fit_table_rows(values, name, rule))
        except (ValueError, RuntimeError) as e:
            logger.warning(f"{name}: Fit-vs-Data rows failed: {e}")

    if all(any(m in samples for m in members) for members in ENSEMBLE_GROUPS.values()):
        evaluation["separation"] = calculate_group_separation(samples)
    evaluation["overlap"] = calculate_overlap(samples) if len(samples) > 1 else None
    return evaluation


def save_evaluation(evaluation: Dict, output_dir: str, filename: str = "evaluation.json") -> str:
    """Save evaluation results to JSON."""
    path = write_json(evaluation, os.path.join(output_dir, filename))
    logger.info(f"Evaluation results saved to: {path}")
    return path


def format_separation(separation: Dict) -> str:
    """Human-readable summary of a group separation analysis."""
    lines = ["Ensemble means (sigma^2):"]
    for name, s in separation["statistics"].items():
        lines.append(f"  {name}: {s['mean']:.6g} +/- {s['sem']:.2g} (n={s['n']})")
    for group, g in separation["groups"].items():
        flag = "consistent" if g["consistent"] else "INCONSISTENT"
        lines.append(f"  {group} {g['members']}: mean {g['mean']:.6g}, max within-group z {g['max_within_z']:.2f} ({flag})")
    lines.append(f"  between-group z = {separation['between_z']:.2f}, ratio = {separation['ratio']:.3f}, "
                 f"separated = {separation['separated']}")
    return "\n".join(lines)
