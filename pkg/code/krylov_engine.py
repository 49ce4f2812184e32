"""Krylov operator space: Liouvillian action, Lanczos coefficients, Krylov-chain dynamics.

In the energy basis the Liouvillian L = [H, .] multiplies each matrix element by
E_mn = E_m - E_n, so every Krylov operator is the initial operator times a polynomial
in E_mn, entry by entry. The recursion therefore runs on the spectral measure of O_0:
one real amplitude per distinct frequency, weighted by sum |O_mn|^2 over the entries
sharing it. The inner product (A|B) = tr[A^dagger B] = sum conj(A_mn) B_mn is the same
in both pictures, and the Krylov operators are rebuilt entrywise when requested.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import eigh_tridiagonal

from billiard_spectrum import Spectrum
from config import BREAKDOWN_TOL, PARTIAL_REORTH_THRESHOLD, REORTH_MODES

logger = logging.getLogger(__name__)

EPS = np.finfo(float).eps


class LanczosBreakdownError(ValueError):
    """Zero initial operator or non-finite values during the recursion."""


@dataclass
class LanczosConfig:
    max_steps: int = 1000
    reorth: str = "full"  # none | full | partial
    partial_threshold: float = PARTIAL_REORTH_THRESHOLD
    breakdown_tol: float = BREAKDOWN_TOL
    store_basis: bool = False

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.reorth not in REORTH_MODES:
            raise ValueError(f"Unknown reorthogonalization mode {self.reorth!r} (expected one of {REORTH_MODES})")
        if not self.breakdown_tol > 0:
            raise ValueError(f"breakdown_tol must be positive, got {self.breakdown_tol}")
        if not self.partial_threshold > 0:
            raise ValueError(f"partial_threshold must be positive, got {self.partial_threshold}")


@dataclass
class LanczosResult:
    b: np.ndarray  # b_1..b_T
    terminated_at: int  # T
    breakdown: bool  # b_{T+1} fell below tolerance
    reorth: str = "full"
    reorth_count: int = 0
    basis: Optional[List[np.ndarray]] = None  # O_0..O_T when stored

    @property
    def krylov_dimension(self) -> Optional[int]:
        """n_k when the Krylov space was exhausted, else None."""
        return self.terminated_at + 1 if self.breakdown else None


@dataclass
class WaveAmplitudes:
    t_grid: np.ndarray
    phi: np.ndarray  # (len(t_grid), T+1)
    meta: dict = field(default_factory=dict)


def liouvillian_apply(spectrum: Spectrum, O: np.ndarray) -> np.ndarray:
    """(L O)_mn = (E_m - E_n) O_mn."""
    O = np.asarray(O)
    if O.shape != (spectrum.n_max, spectrum.n_max):
        raise ValueError(f"Operator shape {O.shape} does not match spectrum n_max={spectrum.n_max}")
    return spectrum.differences() * O


def operator_inner(A: np.ndarray, B: np.ndarray) -> complex:
    """(A|B) = tr[A^dagger B]."""
    return complex(np.vdot(A, B))


def _norm(v: np.ndarray) -> float:
    # compensated summation keeps b_n stable over long runs
    return math.sqrt(math.fsum(np.abs(v) ** 2))


def _project_out(a: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Two passes of classical Gram-Schmidt against the rows of Q."""
    for _ in range(2):
        a = a - Q.T @ (Q @ a)
    return a


def spectral_measure(spectrum: Spectrum, O0: np.ndarray):
    """Group the entries of O0 by frequency E_mn.

    Returns:
        (frequencies, weights, inverse, support): distinct frequencies carrying weight,
        their weights sum |O_mn|^2, the group index of every flattened entry (-1 where the
        group has zero weight), and the boolean mask of entries in a weighted group.
    """
    omega = spectrum.differences().ravel()
    freqs, inverse = np.unique(omega, return_inverse=True)
    weights = np.bincount(inverse, weights=np.abs(np.asarray(O0).ravel()) ** 2, minlength=freqs.size)
    keep = weights > 0
    remap = -np.ones(freqs.size, dtype=np.int64)
    remap[keep] = np.arange(int(np.count_nonzero(keep)))
    group = remap[inverse]
    return freqs[keep], weights[keep], group, group >= 0


def lanczos(spectrum: Spectrum, O0: np.ndarray, cfg: Optional[LanczosConfig] = None) -> LanczosResult:
    """Lanczos coefficients of the Liouvillian starting from O0.

    A_n = L O_{n-1} - b_{n-1} O_{n-2},  b_n = ||A_n||,  O_n = A_n / b_n,  O_0 = O0 / ||O0||.
    Stops after cfg.max_steps coefficients or when b_n <= breakdown_tol * b_1
    (for the first step the reference is breakdown_tol * max|E_mn|).

    Args:
        spectrum: energy levels E_1..E_Nmax
        O0: (Nmax, Nmax) initial operator
        cfg: LanczosConfig

    Returns:
        LanczosResult
    """
    cfg = cfg or LanczosConfig()
    O0 = np.asarray(O0, dtype=np.complex128)
    if O0.shape != (spectrum.n_max, spectrum.n_max):
        raise ValueError(f"Operator shape {O0.shape} does not match spectrum n_max={spectrum.n_max}")
    if not np.all(np.isfinite(O0)):
        raise LanczosBreakdownError("Initial operator contains non-finite entries")

    freqs, weights, group, support = spectral_measure(spectrum, O0)
    if freqs.size == 0:
        raise LanczosBreakdownError("Initial operator is zero")

    q = np.sqrt(weights)
    q = q / _norm(q)
    q_prev = np.zeros_like(q)
    keep_rows = cfg.reorth != "none" or cfg.store_basis
    rows = min(cfg.max_steps + 1, freqs.size + 1)
    Q = np.empty((rows, freqs.size)) if keep_rows else None
    if keep_rows:
        Q[0] = q

    first_step_scale = cfg.breakdown_tol * float(np.max(np.abs(spectrum.differences())))
    b: List[float] = []
    breakdown = False
    reorth_count = 0
    # partial mode: estimated overlaps of the two latest vectors with all earlier ones
    w_old, w_cur = np.zeros(0), np.ones(1)
    force_next = False

    for n in range(1, cfg.max_steps + 1):
        if n > freqs.size:
            # the measure has only freqs.size points; anything left is roundoff
            breakdown = True
            break

        b_prev = b[-1] if b else 0.0
        a = freqs * q - b_prev * q_prev
        if cfg.reorth == "full":
            a = _project_out(a, Q[:n])
            reorth_count += 1
        b_n = _norm(a)

        if cfg.reorth == "partial" and b_n > 0:
            w_new = _estimate_overlaps(w_old, w_cur, b, b_n, freqs.size)
            if force_next or np.max(np.abs(w_new[:-1])) > cfg.partial_threshold:
                a = _project_out(a, Q[:n])
                b_n = _norm(a)
                reorth_count += 1
                w_new[:-1] = EPS
                force_next = not force_next
            w_old, w_cur = w_cur, w_new

        if not math.isfinite(b_n):
            raise LanczosBreakdownError(f"Non-finite Lanczos coefficient at step {n}")
        threshold = cfg.breakdown_tol * b[0] if b else first_step_scale
        if b_n <= threshold:
            breakdown = True
            break

        b.append(b_n)
        q_prev, q = q, a / b_n
        if keep_rows:
            Q[n] = q

    T = len(b)
    basis = None
    if cfg.store_basis:
        basis = [_rebuild_operator(O0, weights, group, support, Q[k]) for k in range(T + 1)]
    if T == cfg.max_steps and not breakdown:
        logger.debug(f"Lanczos stopped at max_steps={cfg.max_steps}")
    return LanczosResult(np.asarray(b), T, breakdown, cfg.reorth, reorth_count, basis)


def _estimate_overlaps(w_old, w_cur, b, b_new, dim):
    """One step of the orthogonality-level recurrence for a zero-diagonal tridiagonal.

    w_cur[k] estimates (O_j|O_k) for k <= j (w_cur[j] = 1), w_old the same for j-1;
    b holds b_1..b_j and b_new is b_{j+1}.
    """
    j = w_cur.size - 1
    w_new = np.empty(j + 2)
    for k in range(j):
        beta_k1 = b[k]  # couples O_k and O_{k+1}
        val = beta_k1 * w_cur[k + 1]
        if k > 0:
            val += b[k - 1] * w_cur[k - 1]
        val -= b[j - 1] * w_old[k]
        val /= b_new
        val += math.copysign(EPS * (beta_k1 + b_new) / b_new, val)
        w_new[k] = val
    w_new[j] = EPS * math.sqrt(dim)
    w_new[j + 1] = 1.0
    return w_new


def _rebuild_operator(O0, weights, group, support, qk):
    """O_k(m,n) = O0(m,n) * q_k[g] / sqrt(w_g) with g the frequency group of (m,n)."""
    flat = np.zeros(O0.size, dtype=np.complex128)
    g = group[support]
    flat[support] = O0.ravel()[support] * (qk[g] / np.sqrt(weights[g]))
    return flat.reshape(O0.shape)


def dump_coefficients(result: LanczosResult, path: str) -> str:
    """Write one line per step: `n b_n` in full precision."""
    with open(path, "w", encoding="utf-8") as f:
        for n, bn in enumerate(result.b, start=1):
            f.write(f"{n} {float(bn)!r}\n")
    return path


def evolve_amplitudes(b, t_grid) -> WaveAmplitudes:
    """Solve phi_n' = b_n phi_{n-1} - b_{n+1} phi_{n+1} with phi_n(0) = delta_n0.

    With psi_n = i^n phi_n the chain obeys psi' = i S psi for the real symmetric tridiagonal
    S of hoppings b, so the evolution is exact (unitary) through the eigenbasis of S and
    sum phi_n^2 is conserved to roundoff at every time.

    Returns:
        WaveAmplitudes with phi of shape (len(t_grid), len(b) + 1)
    """
    b = np.asarray(b, dtype=float)
    t_grid = np.asarray(t_grid, dtype=float)
    if b.ndim != 1 or b.size == 0:
        raise ValueError("Need at least one Lanczos coefficient")
    if not np.all(np.isfinite(b)):
        raise ValueError("Lanczos coefficients must be finite")
    if np.any(b <= 0):
        raise ValueError("Lanczos coefficients must be positive")
    if t_grid.ndim != 1 or t_grid.size == 0:
        raise ValueError("Time grid is empty")
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) < 0):
        raise ValueError("Time grid must be nonnegative and ascending")

    sites = b.size + 1
    evals, evecs = eigh_tridiagonal(np.zeros(sites), b)
    phases = np.exp(1j * np.outer(evals, t_grid)) * evecs[0][:, None]
    psi = evecs @ phases  # (sites, nt)
    phi = np.real((1j ** -np.arange(sites))[:, None] * psi).T
    phi[t_grid == 0] = np.eye(1, sites)[0]
    return WaveAmplitudes(t_grid, phi)


def k_complexity(amps: WaveAmplitudes) -> np.ndarray:
    """C_K(t) = sum_n n |phi_n(t)|^2."""
    return amps.phi ** 2 @ np.arange(amps.phi.shape[1])
