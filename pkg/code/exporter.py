"""Result records and their on-disk layouts (CSV / JSON)."""

import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from run_config import RunConfig

logger = logging.getLogger(__name__)

EXPORT_FORMATS = ("csv", "json")


@dataclass
class EnsembleResult:
    """Per-ensemble outputs of one run."""
    ensemble: str
    sample_indices: np.ndarray
    sigma2: np.ndarray
    xx: Optional[np.ndarray] = None  # <x_i x_j>
    logpsi: Optional[np.ndarray] = None  # <ln|psi_2m psi_2n|>
    n_accumulated: int = 0
    premature: List[Dict] = field(default_factory=list)  # samples excluded for breakdown inside the window
    psi_excluded: int = 0
    cross_ratio_median: Optional[float] = None  # median |term_cross| / term_diag
    log_ratios: Optional[np.ndarray] = None  # (n, P) per-sample x vectors, kept in memory only
    fits: Dict = field(default_factory=dict)
    table_rows: List[Dict] = field(default_factory=list)
    ck: Optional[pd.DataFrame] = None

    def summary(self) -> Dict:
        s = self.sigma2
        return {
            "ensemble": self.ensemble,
            "n": int(s.size),
            "n_accumulated": self.n_accumulated,
            "mean_sigma2": float(s.mean()) if s.size else None,
            "std_sigma2": float(s.std()) if s.size else None,
            "sem_sigma2": float(s.std(ddof=1) / np.sqrt(s.size)) if s.size > 1 else None,
            "premature_excluded": len(self.premature),
            "psi_excluded": self.psi_excluded,
            "cross_ratio_median": self.cross_ratio_median
        }


@dataclass
class ResultRecord:
    config: RunConfig
    spectrum_provenance: Dict
    energies: np.ndarray
    ensembles: Dict[str, EnsembleResult] = field(default_factory=dict)
    conventions: Dict = field(default_factory=dict)
    code_version: str = ""

    def manifest(self) -> Dict:
        """Config, seed, conventions and counts; enough to rerun bit-identically."""
        return {
            "config": self.config.to_dict(),
            "master_seed": self.config.master_seed,
            "code_version": self.code_version,
            "conventions": self.conventions,
            "spectrum": {
                "provenance": _jsonable(self.spectrum_provenance),
                "n_max": int(self.energies.size),
                "energies": [float(e) for e in self.energies]
            },
            "counts": {name: res.summary() for name, res in self.ensembles.items()}
        }


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_json(data, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(data), f, indent=2, ensure_ascii=False)
    return path


def matrix_header(n: int, window, ensemble: str, a, n_max: int) -> str:
    return f"# N={n} window={window.start}:{window.end} phase={window.phase} ensemble={ensemble} a={a!r} n_max={n_max}"


def write_matrix_csv(matrix: np.ndarray, path: str, header: str) -> str:
    """Dense square CSV preceded by a one-line `#` header."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header + "\n")
        pd.DataFrame(matrix).to_csv(f, header=False, index=False)
    return path


def read_matrix_csv(path: str) -> np.ndarray:
    return pd.read_csv(path, comment="#", header=None, float_precision="round_trip").to_numpy(dtype=float)


def sigma2_frame(result: EnsembleResult, head: Optional[int] = None) -> pd.DataFrame:
    frame = pd.DataFrame({"sample_index": result.sample_indices.astype(np.int64), "sigma2": result.sigma2})
    return frame.head(head) if head is not None else frame


def export(record: ResultRecord, output_dir: Optional[str] = None, fmt: str = "csv",
           head: Optional[int] = None) -> List[str]:
    """Write a run's files and return their paths.

    Layout (csv): sigma2_<ENS>.csv (`sample_index,sigma2`), xx_<ENS>.csv and logpsi_<ENS>.csv
    (P x P and (P+1) x (P+1) with a one-line header), fits_<ENS>.json, table.csv
    (`ensemble,row,mu0,sigma0`), optional ck_<ENS>.csv, and manifest.json.
    fmt="json" writes sigma2_<ENS>.json and matrices_<ENS>.json in place of the CSVs.

    Args:
        record: ResultRecord
        output_dir: target directory (default: the run's output_dir)
        fmt: "csv" or "json"
        head: keep only the first `head` per-sample rows of each sigma^2 table
    """
    if fmt not in EXPORT_FORMATS:
        raise ValueError(f"Unknown export format {fmt!r} (expected one of {EXPORT_FORMATS})")
    output_dir = output_dir or record.config.output_dir
    os.makedirs(output_dir, exist_ok=True)
    cfg = record.config
    written = []

    for name, res in record.ensembles.items():
        frame = sigma2_frame(res, head)
        if fmt == "csv":
            path = os.path.join(output_dir, f"sigma2_{name}.csv")
            frame.to_csv(path, index=False)
            written.append(path)
            if res.xx is not None:
                header = matrix_header(res.n_accumulated, cfg.window, name, cfg.a, cfg.n_max)
                written.append(write_matrix_csv(res.xx, os.path.join(output_dir, f"xx_{name}.csv"), header))
                written.append(write_matrix_csv(res.logpsi, os.path.join(output_dir, f"logpsi_{name}.csv"), header))
        else:
            written.append(write_json(frame.to_dict(orient="records"),
                                      os.path.join(output_dir, f"sigma2_{name}.json")))
            if res.xx is not None:
                written.append(write_json({
                    "n": res.n_accumulated,
                    "window": [cfg.window.start, cfg.window.end, cfg.window.phase],
                    "ensemble": name, "a": cfg.a, "n_max": cfg.n_max,
                    "xx": res.xx, "logpsi": res.logpsi
                }, os.path.join(output_dir, f"matrices_{name}.json")))

        if res.fits:
            written.append(write_json(res.fits, os.path.join(output_dir, f"fits_{name}.json")))
        if res.ck is not None:
            path = os.path.join(output_dir, f"ck_{name}.csv")
            res.ck.to_csv(path, index=False)
            written.append(path)

    rows = [row for res in record.ensembles.values() for row in res.table_rows]
    if rows:
        path = os.path.join(output_dir, "table.csv")
        pd.DataFrame(rows, columns=["ensemble", "row", "mu0", "sigma0"]).to_csv(path, index=False)
        written.append(path)

    written.append(write_json(record.manifest(), os.path.join(output_dir, "manifest.json")))
    logger.info(f"Exported {len(written)} files to {output_dir}")
    return written


@dataclass
class StoredRun:
    """A run read back from its output directory."""
    run_dir: str
    manifest: Dict
    sigma2: Dict[str, pd.DataFrame]
    matrices: Dict[str, Dict[str, np.ndarray]]

    @property
    def config(self) -> RunConfig:
        return RunConfig.from_dict(self.manifest["config"])


def load_run(run_dir: str) -> StoredRun:
    """Read manifest.json, the sigma^2 tables and any correlation matrices of a CSV export."""
    manifest_path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(manifest_path):
        raise FileNotFoundError(f"No manifest.json in {run_dir}")
    with open(manifest_path, "r", encoding="utf-8") as f:
        manifest = json.load(f)

    sigma2, matrices = {}, {}
    for name in manifest["config"]["ensembles"]:
        path = os.path.join(run_dir, f"sigma2_{name}.csv")
        if not os.path.exists(path):
            logger.warning(f"Missing per-sample table for {name}: {path}")
            continue
        sigma2[name] = pd.read_csv(path, float_precision="round_trip")
        mats = {}
        for key in ("xx", "logpsi"):
            mpath = os.path.join(run_dir, f"{key}_{name}.csv")
            if os.path.exists(mpath):
                mats[key] = read_matrix_csv(mpath)
        matrices[name] = mats
    return StoredRun(run_dir, manifest, sigma2, matrices)


def record_from_stored(stored: StoredRun) -> ResultRecord:
    """Rebuild a ResultRecord (sigma^2 and matrices only) for re-export."""
    spec = stored.manifest.get("spectrum", {})
    record = ResultRecord(
        config=stored.config,
        spectrum_provenance=spec.get("provenance", {}),
        energies=np.asarray(spec.get("energies", []), dtype=float),
        conventions=stored.manifest.get("conventions", {}),
        code_version=stored.manifest.get("code_version", "")
    )
    counts = stored.manifest.get("counts", {})
    for name, frame in stored.sigma2.items():
        mats = stored.matrices.get(name, {})
        record.ensembles[name] = EnsembleResult(
            ensemble=name,
            sample_indices=frame["sample_index"].to_numpy(),
            sigma2=frame["sigma2"].to_numpy(dtype=float),
            xx=mats.get("xx"),
            logpsi=mats.get("logpsi"),
            n_accumulated=int(counts.get(name, {}).get("n_accumulated", len(frame))),
            psi_excluded=int(counts.get(name, {}).get("psi_excluded", 0))
        )
    return record
