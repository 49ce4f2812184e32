"""Orchestrator: runs the Krylov statistics pipeline end-to-end and sweeps over the chaos parameter."""

import logging
import os
from concurrent.futures import Executor, ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from billiard_spectrum import Spectrum
from config import (BN_DUMP_SAMPLES, CODE_VERSION, ENSEMBLE_GROUPS, RAW_OUTPUTS_DIR, RESULTS_DIR, SAMPLE_CHUNK_SIZE,
                    SINAI_CUT_SCALE)
from distribution_fitting import fit_report, fit_table_rows
from evaluator import calculate_group_separation, format_separation
from exporter import EnsembleResult, ResultRecord, export, write_json
from krylov_engine import dump_coefficients, evolve_amplitudes, k_complexity, lanczos
from localization_stats import (CorrelationAccumulator, WindowError, log_ratios, scatter_products, variance,
                                variance_decomposition, zero_mode_from_ratios)
from operator_ensembles import SeedSpec, sample_initial
from run_config import RunConfig
from spectrum_cache import SpectrumCache, load_spectrum

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


class PrematureBreakdownError(RuntimeError):
    """Too many samples broke down before the end of the coefficient window."""

    def __init__(self, ensemble: str, failures: List[Dict], n_samples: int, limit: float, window):
        self.diagnostic = {
            "ensemble": ensemble,
            "failed": len(failures),
            "n_samples": n_samples,
            "limit": limit,
            "window": [window.start, window.end, window.phase],
            "samples": failures[:20]
        }
        shortest = min(f["terminated_at"] for f in failures)
        super().__init__(
            f"{ensemble}: {len(failures)}/{n_samples} samples broke down before b_{window.last_index} "
            f"(limit {limit:.1%}); shortest run produced {shortest} coefficients. "
            f"Shrink the window or raise max_steps/n_max."
        )


def configure_logging(log_dir: str = RAW_OUTPUTS_DIR, level: int = logging.INFO):
    """INFO-level logging to <log_dir>/orchestrator.log and the console."""
    os.makedirs(log_dir, exist_ok=True)
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(os.path.join(log_dir, 'orchestrator.log')),
            logging.StreamHandler()
        ],
        force=True
    )


def conventions(config: RunConfig) -> Dict:
    """Conventions recorded in every manifest."""
    return {
        "gue": "density exp(-Tr O^2 / 2): diagonal N(0,1), off-diagonal real and imaginary parts N(0,1/2)",
        "uniform": "U(-sqrt3, sqrt3) per independent real component",
        "uim_diagonal": "zero",
        "sinai_placement": config.placement,
        "sinai_cut_scale": config.cut_scale if config.cut_scale is not None else SINAI_CUT_SCALE.get(config.placement),
        "stadium": "unit square plus quarter disk of radius aL, area normalized to 1",
        "hamiltonian": "H = -Laplacian, Dirichlet",
        "reorthogonalization": config.reorth,
        "window": "half-open, 1-based: b_start .. b_{end-1}; x_i = ln|b_{w+2i-1}/b_{w+2i}|, w = start - 1 + phase",
        "variance": "population (1/P)",
        "zero_mode": "unit norm" if config.unit_norm else "psi_0 = 1",
        "kurtosis": "non-excess",
        "prng": "Philox(SeedSequence(master_seed, spawn_key=(ensemble ordinal, sample index)))",
        "chunk_size": SAMPLE_CHUNK_SIZE
    }


@dataclass
class ChunkResult:
    """Private outputs of one chunk of consecutive sample indices."""
    chunk_index: int
    accumulator: CorrelationAccumulator
    indices: List[int] = field(default_factory=list)
    sigma2: List[float] = field(default_factory=list)
    x_rows: List[np.ndarray] = field(default_factory=list)
    cross_ratios: List[float] = field(default_factory=list)
    premature: List[Dict] = field(default_factory=list)


def chunk_bounds(n_samples: int, size: int = SAMPLE_CHUNK_SIZE) -> List[Tuple[int, int]]:
    """Fixed chunks [start, stop); independent of the worker count."""
    return [(start, min(start + size, n_samples)) for start in range(0, n_samples, size)]


def process_chunk(task) -> ChunkResult:
    """Sample -> Lanczos -> log-ratios -> sigma^2 -> zero mode -> accumulate, for one chunk."""
    spectrum, config, ensemble, chunk_index, start, stop = task
    cfg = config.lanczos_config()
    result = ChunkResult(chunk_index, CorrelationAccumulator(config.window.n_pairs, unit_norm=config.unit_norm))

    for index in range(start, stop):
        O0 = sample_initial(ensemble, config.n_max, SeedSpec(config.master_seed, index))
        run = lanczos(spectrum, O0, cfg)
        try:
            xs = log_ratios(run.b, config.window)
        except WindowError:
            result.premature.append({"sample_index": index, "terminated_at": run.terminated_at,
                                     "breakdown": run.breakdown})
            continue
        term_diag, term_cross = variance_decomposition(xs)
        result.indices.append(index)
        result.sigma2.append(variance(xs))
        result.x_rows.append(xs.x)
        result.cross_ratios.append(abs(term_cross) / term_diag if term_diag > 0 else float("nan"))
        result.accumulator.accumulate(xs, zero_mode_from_ratios(xs))
    return result


def run_samples(spectrum: Spectrum, config: RunConfig, ensemble: str,
                executor: Optional[Executor] = None) -> Tuple[EnsembleResult, CorrelationAccumulator]:
    """All samples of one ensemble; chunk outputs are combined in chunk order."""
    tasks = [(spectrum, config, ensemble, i, start, stop)
             for i, (start, stop) in enumerate(chunk_bounds(config.n_samples))]
    if executor is None:
        chunks = [process_chunk(task) for task in tasks]
    else:
        chunks = list(executor.map(process_chunk, tasks))

    acc = CorrelationAccumulator(config.window.n_pairs, unit_norm=config.unit_norm)
    indices, sigma2, rows, ratios, premature = [], [], [], [], []
    for chunk in chunks:
        acc.merge(chunk.accumulator)
        indices.extend(chunk.indices)
        sigma2.extend(chunk.sigma2)
        rows.extend(chunk.x_rows)
        ratios.extend(chunk.cross_ratios)
        premature.extend(chunk.premature)

    if len(premature) > config.premature_limit * config.n_samples:
        raise PrematureBreakdownError(ensemble, premature, config.n_samples, config.premature_limit, config.window)
    if premature:
        logger.warning(f"{ensemble}: excluded {len(premature)} samples that broke down inside the window")

    result = EnsembleResult(
        ensemble=ensemble,
        sample_indices=np.asarray(indices, dtype=np.int64),
        sigma2=np.asarray(sigma2, dtype=float),
        premature=premature,
        psi_excluded=acc.excluded,
        cross_ratio_median=float(np.nanmedian(ratios)) if ratios else None,
        log_ratios=np.vstack(rows) if rows else np.zeros((0, config.window.n_pairs))
    )
    return result, acc


def obtain_spectrum(config: RunConfig, cache: SpectrumCache) -> Spectrum:
    if config.spectrum_file:
        return load_spectrum(config.spectrum_file, config.n_max)
    return cache.get(config.kind, config.a, config.n_max, config.placement, config.cut_scale, config.h)


def complexity_trace(spectrum: Spectrum, config: RunConfig, ensemble: str, index: int) -> pd.DataFrame:
    """C_K(t) and phi_n(t) of one sample on [0, ck_t_max]."""
    O0 = sample_initial(ensemble, config.n_max, SeedSpec(config.master_seed, index))
    run = lanczos(spectrum, O0, config.lanczos_config())
    t_grid = np.linspace(0.0, config.ck_t_max, config.ck_points)
    amps = evolve_amplitudes(run.b, t_grid)
    columns = {"t": t_grid, "ck": k_complexity(amps)}
    columns.update({f"phi_{n}": amps.phi[:, n] for n in range(amps.phi.shape[1])})
    return pd.DataFrame(columns)


def fit_ensemble(result: EnsembleResult) -> Dict:
    """Normal and scaled chi-square reports for sigma^2, plus scatter-entry diagnostics."""
    fits = {
        "normal": fit_report(result.sigma2, "normal"),
        "scaled_chi_square": fit_report(result.sigma2, "scaled_chi_square")
    }
    diag, offdiag = scatter_products(result.log_ratios)
    diag = diag[diag > 0]
    fits["scatter"] = {
        "diagonal": fit_report(diag, "scaled_chi_square"),
        "off_diagonal": fit_report(offdiag, "normal") if offdiag.size >= 4 else None
    }
    return fits


def run_experiment(config: RunConfig, cache: Optional[SpectrumCache] = None,
                   executor: Optional[Executor] = None) -> Dict:
    """Run the complete pipeline for one configuration.

    Args:
        config: validated RunConfig
        cache: spectrum cache (default: on-disk cache in SPECTRUM_CACHE_DIR)
        executor: optional shared process pool; one is created when config.workers > 1

    Returns:
        Dictionary with stages_completed, errors, start/end times, success, written files,
        per-ensemble summaries and the in-memory ResultRecord under "record"
    """
    cache = cache or SpectrumCache()
    output_dir = config.output_dir
    os.makedirs(output_dir, exist_ok=True)

    logger.info("=" * 80)
    logger.info(f"Run: {config.kind} a={config.a} N_max={config.n_max} N={config.n_samples} "
                f"ensembles={','.join(config.ensembles)} window=({config.window.start}, {config.window.end})")
    logger.info("=" * 80)

    results = {
        "output_dir": output_dir,
        "config": config.to_dict(),
        "stages_completed": [],
        "errors": [],
        "start_time": datetime.now().isoformat()
    }

    own_executor = None
    if executor is None and config.workers > 1:
        own_executor = executor = ProcessPoolExecutor(max_workers=config.workers)

    try:
        # Stage 1: Spectrum
        logger.info("\n[Stage 1] Spectrum")
        try:
            spectrum = obtain_spectrum(config, cache)
            results["stages_completed"].append(1)
            logger.info(f"[Stage 1] ✓ Complete (E_1={spectrum.energies[0]:.6g}, E_N={spectrum.energies[-1]:.6g})")
        except Exception as e:
            logger.error(f"[Stage 1] ✗ Error: {e}")
            results["errors"].append({"stage": 1, "error": str(e)})
            raise

        record = ResultRecord(config, spectrum.provenance, spectrum.energies,
                              conventions=conventions(config), code_version=CODE_VERSION)
        accumulators = {}

        # Stage 2: Sampling
        logger.info("\n[Stage 2] Sampling")
        try:
            for ensemble in config.ensembles:
                result, acc = run_samples(spectrum, config, ensemble, executor)
                record.ensembles[ensemble] = result
                accumulators[ensemble] = acc
                logger.info(f"[Stage 2] {ensemble}: {result.sigma2.size} samples, "
                            f"mean sigma2 {result.sigma2.mean():.6g}")
            results["stages_completed"].append(2)
            logger.info("[Stage 2] ✓ Complete")
        except Exception as e:
            logger.error(f"[Stage 2] ✗ Error: {e}")
            entry = {"stage": 2, "error": str(e)}
            if isinstance(e, PrematureBreakdownError):
                entry["diagnostic"] = e.diagnostic
            results["errors"].append(entry)
            raise

        # Stage 3: Statistics
        logger.info("\n[Stage 3] Statistics")
        try:
            for ensemble, result in record.ensembles.items():
                acc = accumulators[ensemble]
                result.n_accumulated = acc.n_samples
                if acc.n_samples:
                    result.xx, result.logpsi = acc.finalize()
                if config.ck_t_max > 0 and result.sample_indices.size:
                    result.ck = complexity_trace(spectrum, config, ensemble, int(result.sample_indices[0]))
                if config.dump_bn:
                    for index in range(min(BN_DUMP_SAMPLES, config.n_samples)):
                        O0 = sample_initial(ensemble, config.n_max, SeedSpec(config.master_seed, index))
                        dump_coefficients(lanczos(spectrum, O0, config.lanczos_config()),
                                          os.path.join(output_dir, f"bn_{ensemble}_{index}.txt"))
            results["stages_completed"].append(3)
            logger.info("[Stage 3] ✓ Complete")
        except Exception as e:
            logger.error(f"[Stage 3] ✗ Error: {e}")
            results["errors"].append({"stage": 3, "error": str(e)})
            raise

        # Stage 4: Fits (a failed fit does not invalidate the samples)
        logger.info("\n[Stage 4] Distribution fits")
        for ensemble, result in record.ensembles.items():
            try:
                result.fits = fit_ensemble(result)
                result.table_rows = fit_table_rows(result.sigma2, ensemble)
                normal = result.fits["normal"]
                logger.info(f"[Stage 4] {ensemble}: mu0={normal['params']['mu0']:.6g} "
                            f"sigma0={normal['params']['sigma0']:.6g} "
                            f"skewness={normal['moments']['skewness']:.4f} kurtosis={normal['moments']['kurtosis']:.4f}")
            except Exception as e:
                logger.error(f"[Stage 4] ✗ Error ({ensemble}): {e}")
                results["errors"].append({"stage": 4, "ensemble": ensemble, "error": str(e)})
        if not any(err["stage"] == 4 for err in results["errors"]):
            results["stages_completed"].append(4)
            logger.info("[Stage 4] ✓ Complete")

        # Stage 5: Export
        logger.info("\n[Stage 5] Export")
        try:
            results["files"] = export(record, output_dir)
            results["stages_completed"].append(5)
            logger.info("[Stage 5] ✓ Complete")
        except Exception as e:
            logger.error(f"[Stage 5] ✗ Error: {e}")
            results["errors"].append({"stage": 5, "error": str(e)})
            raise

        results["ensembles"] = {name: res.summary() for name, res in record.ensembles.items()}
        if all(any(m in record.ensembles for m in members) for members in ENSEMBLE_GROUPS.values()):
            try:
                separation = calculate_group_separation({n: r.sigma2 for n, r in record.ensembles.items()})
                results["separation"] = separation
                logger.info(format_separation(separation))
            except ValueError as e:
                logger.warning(f"Group separation skipped: {e}")
        results["record"] = record

        results["end_time"] = datetime.now().isoformat()
        results["success"] = len(results["errors"]) == 0

        logger.info(f"\n{'=' * 80}")
        logger.info(f"Run complete: {output_dir}")
        logger.info(f"Stages completed: {results['stages_completed']}")
        if results["errors"]:
            logger.warning(f"Errors encountered: {len(results['errors'])}")
        logger.info(f"{'=' * 80}\n")

    except Exception as e:
        logger.error(f"Fatal error in run {output_dir}: {e}")
        if not results["errors"]:
            results["errors"].append({"stage": "fatal", "error": str(e)})
        results["end_time"] = datetime.now().isoformat()
        results["success"] = False
    finally:
        if own_executor is not None:
            own_executor.shutdown()

    write_json({k: v for k, v in results.items() if k != "record"}, os.path.join(output_dir, "run_result.json"))
    return results


def sweep(base_config: RunConfig, a_values: Iterable[float], ensembles: Optional[Iterable[str]] = None,
          output_root: Optional[str] = None, cache: Optional[SpectrumCache] = None) -> Dict:
    """One member run per (a, ensemble); spectra are solved once per a and reused.

    Args:
        base_config: template RunConfig (a, ensembles and output_dir are replaced per member)
        a_values: chaos parameters
        ensembles: ensembles to run at every a (default: those of base_config)
        output_root: sweep directory (default: RESULTS_DIR/sweep)
        cache: spectrum cache shared across members

    Returns:
        Summary dictionary with one row per (a, ensemble), per-a group separation,
        member results, cache statistics and success counts
    """
    if base_config.spectrum_file:
        raise ValueError("A sweep over a cannot use a fixed spectrum file")
    cache = cache or SpectrumCache()
    output_root = output_root or os.path.join(RESULTS_DIR, "sweep")
    ensembles = tuple(ensembles or base_config.ensembles)
    a_values = [float(a) for a in a_values]
    members = [(a, ensemble) for a in a_values for ensemble in ensembles]
    os.makedirs(output_root, exist_ok=True)

    logger.info(f"Sweep: {len(a_values)} a values x {len(ensembles)} ensembles -> {output_root}")

    rows, member_results = [], []
    samples: Dict[float, Dict[str, np.ndarray]] = {}
    executor = ProcessPoolExecutor(max_workers=base_config.workers) if base_config.workers > 1 else None

    try:
        for i, (a, ensemble) in enumerate(members):
            logger.info(f"\n{'#' * 80}")
            logger.info(f"Member {i + 1}/{len(members)}: a={a} {ensemble}")
            logger.info(f"{'#' * 80}")
            solves_before = cache.solves
            try:
                cfg = base_config.with_changes(a=a, ensembles=[ensemble],
                                               output_dir=os.path.join(output_root, f"a_{a:g}", ensemble))
                result = run_experiment(cfg, cache=cache, executor=executor)
            except KeyboardInterrupt:
                logger.warning("Interrupted by user")
                break
            except Exception as e:
                logger.error(f"Failed member a={a} {ensemble}: {e}")
                result = {"success": False, "errors": [{"stage": "config", "error": str(e)}]}

            member = {
                "a": a,
                "ensemble": ensemble,
                "success": result.get("success", False),
                "errors": result.get("errors", []),
                "eigensolves": cache.solves - solves_before
            }
            member_results.append(member)
            if member["success"]:
                res = result["record"].ensembles[ensemble]
                summary = res.summary()
                rows.append({"a": a, "ensemble": ensemble, "mean_sigma2": summary["mean_sigma2"],
                             "std_sigma2": summary["std_sigma2"], "sem_sigma2": summary["sem_sigma2"],
                             "n": summary["n"]})
                samples.setdefault(a, {})[ensemble] = res.sigma2

            write_json({"total_processed": len(member_results), "current_index": i, "results": member_results},
                       os.path.join(output_root, "progress.json"))
    finally:
        if executor is not None:
            executor.shutdown()

    table_path = os.path.join(output_root, "sweep.csv")
    pd.DataFrame(rows, columns=["a", "ensemble", "mean_sigma2", "std_sigma2", "sem_sigma2", "n"]).to_csv(
        table_path, index=False)

    separation = {}
    for a, per_ensemble in samples.items():
        if all(any(m in per_ensemble for m in group) for group in ENSEMBLE_GROUPS.values()):
            try:
                separation[repr(a)] = calculate_group_separation(per_ensemble)
            except ValueError as e:
                logger.warning(f"Group separation at a={a} skipped: {e}")

    summary = {
        "total_members": len(members),
        "processed": len(member_results),
        "successful": sum(1 for m in member_results if m["success"]),
        "failed": sum(1 for m in member_results if not m["success"]),
        "rows": rows,
        "separation": separation,
        "cache": cache.stats(),
        "results": member_results,
        "table": table_path,
        "timestamp": datetime.now().isoformat()
    }
    summary_file = write_json(summary, os.path.join(output_root, "summary.json"))

    logger.info(f"\n{'=' * 80}")
    logger.info("Sweep complete!")
    logger.info(f"Total: {summary['total_members']}, Successful: {summary['successful']}, Failed: {summary['failed']}")
    logger.info(f"Summary saved to: {summary_file}")
    logger.info(f"{'=' * 80}")
    return summary
