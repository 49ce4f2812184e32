"""Billiard spectra: Sinai and stadium domains, masked-grid Dirichlet Laplacian, eigenvalues.

H = p_x^2 + p_y^2 inside the domain and infinite outside, so H = -Laplacian with
Dirichlet conditions. Every domain is normalized to unit area unless asked not to be.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from config import (
    DENSE_SOLVER_LIMIT, GRID_CONVERGENCE_TOL, GRID_DIAGONAL_DIVISIONS,
    MAX_GRID_REFINEMENTS, MIN_NODES_PER_LEVEL, RITZ_TOL, SINAI_CUT_SCALE,
    SINAI_PLACEMENTS
)

logger = logging.getLogger(__name__)

BILLIARD_KINDS = ("sinai", "stadium")
SQRT3 = math.sqrt(3.0)
# side of the equilateral triangle with unit area
UNIT_TRIANGLE_SIDE = 2.0 * 3.0 ** -0.25


class EigensolverError(RuntimeError):
    """Raised when the sparse eigensolver fails to converge."""


def _vertex_cut_area(l):
    """Area of the disk of radius l centred at a vertex of the unit-side triangle, clipped to it."""
    altitude = SQRT3 / 2.0
    if l <= altitude:
        return math.pi * l * l / 6.0
    phi0 = math.acos(altitude / l)
    return 0.5 * l * l * (math.pi / 3.0 - 2.0 * phi0) + altitude * altitude * math.tan(phi0)


def _geometric_limit(kind, placement, cut_scale):
    """Supremum of a leaving a nonempty, connected region (exclusive), or None if unbounded."""
    if kind == "stadium":
        return None
    if placement == "vertex":
        # a disk of radius L centred at a vertex covers the whole triangle
        return 1.0 / cut_scale
    # a centred disk reaching the edges splits the triangle into corner pieces
    return (1.0 / (2.0 * SQRT3)) / cut_scale


def valid_a_range(kind: str, placement: str = "vertex", cut_scale: Optional[float] = None) -> Dict:
    """Report the accepted chaos-parameter range for a geometry family.

    Returns:
        Dictionary with `low`, `high` and `high_inclusive`.
    """
    if kind not in BILLIARD_KINDS:
        raise ValueError(f"Unknown billiard kind: {kind!r} (expected one of {BILLIARD_KINDS})")
    if kind == "sinai" and cut_scale is None:
        cut_scale = SINAI_CUT_SCALE[placement]
    limit = _geometric_limit(kind, placement, cut_scale)
    if limit is None or limit > 1.0:
        return {"low": 0.0, "high": 1.0, "high_inclusive": True}
    return {"low": 0.0, "high": limit, "high_inclusive": False}


@dataclass(frozen=True)
class BilliardGeometry:
    """A planar Dirichlet domain parametrized by the chaos parameter a = l/L.

    `side` is the length L after area normalization; `radius` is l.
    Sinai: equilateral triangle with vertices (0,0), (L,0), (L/2, sqrt(3)L/2) minus a disk.
    Stadium: square [0,L]^2 plus a quarter disk of radius l centred at (L,0), attached flush
    to the right side.
    """
    kind: str
    a: float
    side: float
    radius: float
    placement: str = "none"
    cut_scale: float = 1.0
    normalized: bool = True

    @property
    def scale(self) -> float:
        return self.side

    @property
    def disk_center(self) -> Tuple[float, float]:
        if self.kind == "stadium":
            return (self.side, 0.0)
        if self.placement == "vertex":
            return (0.0, 0.0)
        return (self.side / 2.0, self.side / (2.0 * SQRT3))

    @property
    def bounding_box(self) -> Tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax)."""
        if self.kind == "sinai":
            return (0.0, 0.0, self.side, SQRT3 * self.side / 2.0)
        return (0.0, 0.0, self.side + self.radius, self.side)

    def contains(self, x, y) -> np.ndarray:
        """Strict interior test, vectorized over coordinate arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        L, l = self.side, self.radius
        cx, cy = self.disk_center
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        if self.kind == "sinai":
            inside = (y > 0.0) & (y < SQRT3 * x) & (y < SQRT3 * (L - x))
            if l > 0.0:
                inside &= r2 > l * l
            return inside
        inside = (x > 0.0) & (x < L) & (y > 0.0) & (y < L)
        if l > 0.0:
            inside |= (x >= L) & (y > 0.0) & (r2 < l * l)
        return inside

    def area(self) -> float:
        """Analytic area."""
        L, l = self.side, self.radius
        if self.kind == "stadium":
            return L * L + math.pi * l * l / 4.0
        triangle = SQRT3 * L * L / 4.0
        if self.placement == "vertex":
            return triangle - L * L * _vertex_cut_area(l / L)
        return triangle - math.pi * l * l

    def perimeter(self) -> float:
        """Analytic boundary length (used by the two-term Weyl estimate)."""
        L, l = self.side, self.radius
        if self.kind == "stadium":
            return 4.0 * L + math.pi * l / 2.0
        if self.placement == "centroid":
            return 3.0 * L + 2.0 * math.pi * l
        altitude = SQRT3 * L / 2.0
        if l <= altitude:
            return 3.0 * L - 2.0 * l + math.pi * l / 3.0
        phi0 = math.acos(altitude / l)
        return 2.0 * (L - l) + L - 2.0 * math.sqrt(l * l - altitude * altitude) + l * (math.pi / 3.0 - 2.0 * phi0)

    def rescaled(self, factor: float) -> "BilliardGeometry":
        """Same shape with every length multiplied by `factor` (area no longer 1)."""
        if factor <= 0:
            raise ValueError(f"Scale factor must be positive, got {factor}")
        return replace(self, side=self.side * factor, radius=self.radius * factor, normalized=False)

    def describe(self) -> Dict:
        return {
            "kind": self.kind,
            "a": self.a,
            "placement": self.placement,
            "cut_scale": self.cut_scale,
            "side": self.side,
            "radius": self.radius,
            "normalized": self.normalized
        }


def make_geometry(kind: str, a: float, placement: str = "vertex",
                  cut_scale: Optional[float] = None, normalize: bool = True) -> BilliardGeometry:
    """Build a Sinai or stadium domain of unit area.

    Args:
        kind: "sinai" or "stadium"
        a: chaos parameter in [0, 1]; a=0 gives the equilateral triangle / unit square
        placement: Sinai disk centre, "vertex" (60 degree sector removed) or "centroid"
        cut_scale: Sinai radius is l = a * cut_scale * L; defaults per placement from config
        normalize: rescale to unit area; when False the reference side of the a=0 shape is kept

    Returns:
        BilliardGeometry
    """
    if kind not in BILLIARD_KINDS:
        raise ValueError(f"Unknown billiard kind: {kind!r} (expected one of {BILLIARD_KINDS})")
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"Chaos parameter a must lie in [0, 1], got {a}")

    if kind == "stadium":
        base_area = 1.0 + math.pi * a * a / 4.0
        side = 1.0 / math.sqrt(base_area) if normalize else 1.0
        return BilliardGeometry("stadium", a, side, a * side, normalized=normalize)

    if placement not in SINAI_PLACEMENTS:
        raise ValueError(f"Unknown Sinai disk placement: {placement!r} (expected one of {SINAI_PLACEMENTS})")
    if cut_scale is None:
        cut_scale = SINAI_CUT_SCALE[placement]
    if cut_scale <= 0:
        raise ValueError(f"cut_scale must be positive, got {cut_scale}")

    limit = _geometric_limit(kind, placement, cut_scale)
    if a >= limit:
        raise ValueError(
            f"a={a} leaves an empty or disconnected region for {placement} placement "
            f"with cut_scale={cut_scale}; valid range is [0, {limit:.6g})"
        )

    rel_radius = a * cut_scale
    if placement == "vertex":
        base_area = SQRT3 / 4.0 - _vertex_cut_area(rel_radius)
    else:
        base_area = SQRT3 / 4.0 - math.pi * rel_radius ** 2
    side = 1.0 / math.sqrt(base_area) if normalize else UNIT_TRIANGLE_SIDE
    return BilliardGeometry("sinai", a, side, rel_radius * side, placement, cut_scale, normalize)


def measure_area(geom: BilliardGeometry, resolution: int = 2000) -> float:
    """Midpoint-rule quadrature of the indicator of contains() over the bounding box."""
    xmin, ymin, xmax, ymax = geom.bounding_box
    dx = (xmax - xmin) / resolution
    dy = (ymax - ymin) / resolution
    xs = xmin + (np.arange(resolution) + 0.5) * dx
    total = 0
    # row blocks keep memory bounded at high resolution
    for start in range(0, resolution, 250):
        ys = ymin + (np.arange(start, min(start + 250, resolution)) + 0.5) * dy
        X, Y = np.meshgrid(xs, ys)
        total += int(np.count_nonzero(geom.contains(X, Y)))
    return total * dx * dy


@dataclass
class GridDiscretization:
    """Masked square grid with the 5-point negative Laplacian on interior nodes."""
    geometry: BilliardGeometry
    h: float
    origin: Tuple[float, float]
    mask: np.ndarray  # (ny, nx) bool, True on interior nodes
    laplacian: sp.csr_matrix

    @property
    def n_interior(self) -> int:
        return self.laplacian.shape[0]

    def interior_points(self) -> np.ndarray:
        """(n_interior, 2) coordinates in the row-major index order used by the Laplacian."""
        iy, ix = np.nonzero(self.mask)
        return np.column_stack((self.origin[0] + ix * self.h, self.origin[1] + iy * self.h))


def discretize(geom: BilliardGeometry, h: float, n_levels: Optional[int] = None) -> GridDiscretization:
    """Build the masked 5-point stencil; nodes outside the domain are dropped (Dirichlet).

    Args:
        geom: billiard domain
        h: grid spacing
        n_levels: when given, require at least 10 * n_levels interior nodes

    Returns:
        GridDiscretization
    """
    if not h > 0:
        raise ValueError(f"Grid spacing must be positive, got {h}")
    xmin, ymin, xmax, ymax = geom.bounding_box
    nx = int(math.ceil((xmax - xmin) / h - 1e-9)) + 1
    ny = int(math.ceil((ymax - ymin) / h - 1e-9)) + 1
    X, Y = np.meshgrid(xmin + np.arange(nx) * h, ymin + np.arange(ny) * h)
    mask = geom.contains(X, Y)

    n_nodes = int(np.count_nonzero(mask))
    required = 10 * n_levels if n_levels else 1
    if n_nodes < required:
        raise ValueError(
            f"Grid too coarse: h={h:.6g} gives {n_nodes} interior nodes, need at least {required}"
        )

    index = -np.ones(mask.shape, dtype=np.int64)
    index[mask] = np.arange(n_nodes)

    rows = [np.arange(n_nodes)]
    cols = [np.arange(n_nodes)]
    vals = [np.full(n_nodes, 4.0 / (h * h))]
    # east and north couplings, mirrored for west and south
    for (dy, dx) in ((0, 1), (1, 0)):
        here = index[: ny - dy, : nx - dx]
        there = index[dy:, dx:]
        linked = (here >= 0) & (there >= 0)
        a_idx, b_idx = here[linked], there[linked]
        off = np.full(a_idx.size, -1.0 / (h * h))
        rows += [a_idx, b_idx]
        cols += [b_idx, a_idx]
        vals += [off, off]

    laplacian = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_nodes, n_nodes)
    ).tocsr()
    logger.debug(f"Discretized {geom.kind} a={geom.a} with h={h:.6g}: {n_nodes} interior nodes")
    return GridDiscretization(geom, h, (xmin, ymin), mask, laplacian)


@dataclass
class Spectrum:
    """Ascending truncated energy levels E_1..E_{n_max} (H = -Laplacian, hbar = 1)."""
    energies: np.ndarray
    n_max: int
    provenance: Dict = field(default_factory=dict)
    discrepancy: Optional[np.ndarray] = None

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        if self.energies.ndim != 1 or self.energies.size != self.n_max:
            raise ValueError(f"Spectrum has {self.energies.size} levels but n_max={self.n_max}")
        if not np.all(np.isfinite(self.energies)):
            raise ValueError("Spectrum contains non-finite energies")
        if np.any(self.energies < 0):
            raise ValueError("Spectrum energies must be nonnegative")
        if np.any(np.diff(self.energies) < 0):
            raise ValueError("Spectrum energies must be sorted ascending")

    def differences(self) -> np.ndarray:
        """E_mn = E_m - E_n as an (n_max, n_max) array."""
        return self.energies[:, None] - self.energies[None, :]

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(self.energies * factor, self.n_max, dict(self.provenance, scaled_by=factor))


def solve_spectrum(disc: GridDiscretization, n_levels: int) -> Spectrum:
    """Lowest n_levels eigenvalues of the discrete -Laplacian, ascending."""
    n_nodes = disc.n_interior
    if n_levels < 1:
        raise ValueError(f"n_levels must be positive, got {n_levels}")
    if n_levels * MIN_NODES_PER_LEVEL > n_nodes:
        raise ValueError(
            f"Requested {n_levels} levels but the grid has only {n_nodes} interior nodes "
            f"(at most {n_nodes // MIN_NODES_PER_LEVEL} levels allowed)"
        )

    if n_nodes <= DENSE_SOLVER_LIMIT:
        energies = scipy.linalg.eigh(
            disc.laplacian.toarray(), eigvals_only=True, subset_by_index=[0, n_levels - 1]
        )
    else:
        try:
            # shift-invert about 0 returns the eigenvalues nearest zero
            energies = eigsh(
                disc.laplacian.tocsc(), k=n_levels, sigma=0.0, which="LM",
                tol=RITZ_TOL, return_eigenvectors=False
            )
        except ArpackNoConvergence as e:
            raise EigensolverError(
                f"Eigensolver did not converge for {n_levels} levels on {n_nodes} nodes: {e}"
            ) from e

    energies = np.sort(np.real(energies))
    geom = disc.geometry
    provenance = {"source": "solved", **geom.describe(), "h": disc.h, "richardson": False}
    return Spectrum(energies, n_levels, provenance)


def converge_spectrum(geom: BilliardGeometry, n_levels: int, h: Optional[float] = None,
                      tol: float = GRID_CONVERGENCE_TOL, max_refinements: int = MAX_GRID_REFINEMENTS,
                      extrapolate: bool = True) -> Spectrum:
    """Halve h until the n_levels-th eigenvalue moves by less than tol between h and h/2.

    The staircase boundary makes the leading error first order in h, so the reported
    energies are the Richardson values 2*E(h/2) - E(h) unless extrapolate is False.
    The per-level discrepancy |E(h/2) - E(h)| is kept on the Spectrum.
    """
    if h is None:
        xmin, ymin, xmax, ymax = geom.bounding_box
        h = math.hypot(xmax - xmin, ymax - ymin) / GRID_DIAGONAL_DIVISIONS

    coarse = solve_spectrum(discretize(geom, h, n_levels), n_levels)
    fine = coarse
    change = float("inf")
    for refinement in range(max_refinements):
        h = h / 2.0
        fine = solve_spectrum(discretize(geom, h, n_levels), n_levels)
        change = abs(fine.energies[-1] - coarse.energies[-1]) / fine.energies[-1]
        logger.info(f"  Grid h={h:.6g}: level {n_levels} changed by {change:.3%}")
        if change < tol:
            break
        if refinement < max_refinements - 1:
            coarse = fine
    else:
        logger.warning(
            f"Spectrum not converged after {max_refinements} refinements "
            f"(last relative change {change:.3%}); using h={h:.6g}"
        )

    discrepancy = np.abs(fine.energies - coarse.energies)
    energies = np.sort(2.0 * fine.energies - coarse.energies) if extrapolate else fine.energies
    provenance = dict(fine.provenance, richardson=bool(extrapolate), relative_change=float(change))
    return Spectrum(energies, n_levels, provenance, discrepancy)


def weyl_count(geom: BilliardGeometry, energy: float, perimeter_term: bool = True) -> float:
    """Weyl estimate of the number of Dirichlet levels below `energy` for H = -Laplacian."""
    count = geom.area() * energy / (4.0 * math.pi)
    if perimeter_term:
        count -= geom.perimeter() * math.sqrt(energy) / (4.0 * math.pi)
    return count


def triangle_levels(side: float, n_levels: int) -> np.ndarray:
    """Exact Dirichlet levels of the equilateral triangle: (16 pi^2 / 9 L^2)(m^2 + mn + n^2)."""
    bound = n_levels + 2
    q = sorted(m * m + m * n + n * n for m in range(1, bound) for n in range(1, bound))
    return 16.0 * math.pi ** 2 / (9.0 * side ** 2) * np.array(q[:n_levels], dtype=float)


def rectangle_levels(width: float, height: float, n_levels: int) -> np.ndarray:
    """Exact Dirichlet levels of a rectangle: pi^2 (m^2/W^2 + n^2/H^2)."""
    bound = n_levels + 2
    vals = sorted(math.pi ** 2 * (m * m / width ** 2 + n * n / height ** 2)
                  for m in range(1, bound) for n in range(1, bound))
    return np.array(vals[:n_levels])
