"""Plain-text spectrum files and the on-disk spectrum cache shared by runs and sweeps."""

import fcntl
import hashlib
import logging
import os
from contextlib import contextmanager
from typing import Dict, Optional, Tuple

from billiard_spectrum import Spectrum, converge_spectrum, discretize, make_geometry, solve_spectrum
from config import SINAI_CUT_SCALE, SPECTRUM_CACHE_DIR, SPECTRUM_FORMAT, SPECTRUM_FORMAT_VERSION

logger = logging.getLogger(__name__)

HEADER_KEYS = ("kind", "a", "placement", "cut_scale", "h", "richardson", "n_max")


class SpectrumFileError(ValueError):
    """Malformed, truncated or mismatched spectrum file."""


@contextmanager
def _exclusive_lock(path):
    """Exclusive advisory lock on `<path>.lock` held for the duration of a write."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path + ".lock", "w") as lock_file:
        fcntl.flock(lock_file.fileno(), fcntl.LOCK_EX)
        try:
            yield
        finally:
            fcntl.flock(lock_file.fileno(), fcntl.LOCK_UN)


def _header_fields(spectrum: Spectrum) -> Dict[str, str]:
    prov = spectrum.provenance
    return {
        "kind": str(prov.get("kind", "unknown")),
        "a": repr(float(prov["a"])) if "a" in prov else "nan",
        "placement": str(prov.get("placement", "none")),
        "cut_scale": repr(float(prov.get("cut_scale", 1.0))),
        "h": repr(float(prov["h"])) if "h" in prov else "nan",
        "richardson": "1" if prov.get("richardson") else "0",
        "n_max": str(spectrum.n_max)
    }


def save_spectrum(spectrum: Spectrum, path: str) -> str:
    """Write a spectrum file: version line, header lines, one energy per line (repr precision).

    The file is written to a temporary name and moved into place under an exclusive lock,
    so concurrent readers only ever see complete files.
    """
    header = _header_fields(spectrum)
    lines = [f"# {SPECTRUM_FORMAT} {SPECTRUM_FORMAT_VERSION}"]
    lines += [f"{key} {header[key]}" for key in HEADER_KEYS]
    lines += [repr(float(e)) for e in spectrum.energies]

    with _exclusive_lock(path):
        tmp_path = path + ".new"
        with open(tmp_path, "w", encoding="utf-8") as f:
            f.write("\n".join(lines) + "\n")
        os.replace(tmp_path, path)
    return path


def load_spectrum(path: str, n_max: Optional[int] = None) -> Spectrum:
    """Read a spectrum file written by save_spectrum.

    Args:
        path: file path
        n_max: when given, the file must hold exactly this many levels

    Returns:
        Spectrum with provenance {"source": "file", "path": ..., header fields}
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Spectrum file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.strip() for line in f if line.strip()]

    expected_magic = f"# {SPECTRUM_FORMAT} {SPECTRUM_FORMAT_VERSION}"
    if not lines or lines[0] != expected_magic:
        found = lines[0] if lines else "<empty file>"
        raise SpectrumFileError(f"{path}: expected header {expected_magic!r}, found {found!r}")
    if len(lines) < 1 + len(HEADER_KEYS):
        raise SpectrumFileError(f"{path}: truncated header")

    header = {}
    for key, line in zip(HEADER_KEYS, lines[1:1 + len(HEADER_KEYS)]):
        parts = line.split(None, 1)
        if len(parts) != 2 or parts[0] != key:
            raise SpectrumFileError(f"{path}: expected header field {key!r}, found {line!r}")
        header[key] = parts[1]

    try:
        file_n_max = int(header["n_max"])
        energies = [float(v) for v in lines[1 + len(HEADER_KEYS):]]
    except ValueError as e:
        raise SpectrumFileError(f"{path}: malformed value ({e})") from e

    if len(energies) != file_n_max:
        raise SpectrumFileError(f"{path}: header declares n_max={file_n_max} but holds {len(energies)} energies")
    if n_max is not None and n_max != file_n_max:
        raise SpectrumFileError(f"{path}: requested n_max={n_max} but file has n_max={file_n_max}")

    provenance = {
        "source": "file",
        "path": os.path.abspath(path),
        "kind": header["kind"],
        "a": float(header["a"]),
        "placement": header["placement"],
        "cut_scale": float(header["cut_scale"]),
        "h": float(header["h"]),
        "richardson": header["richardson"] == "1"
    }
    try:
        return Spectrum(energies, file_n_max, provenance)
    except ValueError as e:
        raise SpectrumFileError(f"{path}: {e}") from e


def cache_key(kind: str, a: float, placement: str, cut_scale: float, h: Optional[float], n_max: int) -> str:
    """Hash of the requested header fields; h=None means the converged-grid default."""
    h_field = "auto" if h is None else repr(float(h))
    text = "|".join([kind, repr(float(a)), placement, repr(float(cut_scale)), h_field, str(n_max)])
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class SpectrumCache:
    """Spectra keyed by geometry and grid request, kept in memory and on disk.

    The hit/miss/solve counters let a sweep verify that ensembles sharing a
    (kind, a, h) reuse one eigensolve.
    """

    def __init__(self, cache_dir: str = SPECTRUM_CACHE_DIR):
        self.cache_dir = cache_dir
        self._memory: Dict[str, Spectrum] = {}
        self.hits = 0
        self.misses = 0
        self.solves = 0

    def path_for(self, key: str) -> str:
        return os.path.join(self.cache_dir, f"spectrum_{key}.txt")

    def _normalize_request(self, kind, placement, cut_scale) -> Tuple[str, float]:
        if kind == "stadium":
            return "none", 1.0
        if cut_scale is None:
            cut_scale = SINAI_CUT_SCALE[placement]
        return placement, float(cut_scale)

    def request_key(self, kind: str, a: float, n_max: int, placement: str = "vertex",
                    cut_scale: Optional[float] = None, h: Optional[float] = None) -> str:
        placement, cut_scale = self._normalize_request(kind, placement, cut_scale)
        return cache_key(kind, a, placement, cut_scale, h, n_max)

    def get(self, kind: str, a: float, n_max: int, placement: str = "vertex",
            cut_scale: Optional[float] = None, h: Optional[float] = None) -> Spectrum:
        """Return a cached spectrum or solve, store and return it."""
        key = self.request_key(kind, a, n_max, placement, cut_scale, h)
        placement, cut_scale = self._normalize_request(kind, placement, cut_scale)

        if key in self._memory:
            self.hits += 1
            return self._memory[key]

        path = self.path_for(key)
        if os.path.exists(path):
            try:
                spectrum = load_spectrum(path, n_max)
                self.hits += 1
                self._memory[key] = spectrum
                logger.info(f"Spectrum cache hit: {path}")
                return spectrum
            except SpectrumFileError as e:
                logger.warning(f"Ignoring unreadable cache file {path}: {e}")

        self.misses += 1
        spectrum = self.solve(kind, a, n_max, placement, cut_scale, h)
        save_spectrum(spectrum, path)
        self._memory[key] = spectrum
        logger.info(f"Spectrum cached: {path}")
        return spectrum

    def solve(self, kind, a, n_max, placement, cut_scale, h) -> Spectrum:
        self.solves += 1
        geom = make_geometry(kind, a, placement=placement if kind == "sinai" else "vertex",
                             cut_scale=cut_scale if kind == "sinai" else None)
        logger.info(f"Solving {kind} a={a} for {n_max} levels (h={'auto' if h is None else h})")
        if h is None:
            return converge_spectrum(geom, n_max)
        return solve_spectrum(discretize(geom, h, n_max), n_max)

    def stats(self) -> Dict[str, int]:
        return {"hits": self.hits, "misses": self.misses, "solves": self.solves}
