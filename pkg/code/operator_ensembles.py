"""Random initial operators in the energy basis: GOE, GUE, URE, UIM, UCP."""

from dataclasses import dataclass

import numpy as np

from config import ENSEMBLES

UNIFORM_HALF_WIDTH = np.sqrt(3.0)  # U(-sqrt3, sqrt3) has unit variance


@dataclass(frozen=True)
class SeedSpec:
    """(master_seed, sample_index) fixes a sample; streams are independent per index."""
    master_seed: int
    sample_index: int

    def __post_init__(self):
        if self.sample_index < 0:
            raise ValueError(f"sample_index must be >= 0, got {self.sample_index}")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ValueError(f"master_seed must be a 64-bit unsigned integer, got {self.master_seed}")


def ensemble_generator(kind: str, seed: SeedSpec) -> np.random.Generator:
    """Counter-based Philox stream keyed by (master_seed, ensemble, sample_index).

    No draw ordering is shared between samples, so any subset of indices can be
    recomputed in any order on any worker.
    """
    seq = np.random.SeedSequence(seed.master_seed, spawn_key=(ENSEMBLES.index(kind), seed.sample_index))
    return np.random.Generator(np.random.Philox(seq))


def _assemble(diagonal: np.ndarray, upper: np.ndarray, dim: int) -> np.ndarray:
    """Place diagonal and strict-upper values, mirror the conjugate below; exactly Hermitian."""
    O = np.zeros((dim, dim), dtype=np.complex128)
    iu = np.triu_indices(dim, k=1)
    O[iu] = upper
    O[(iu[1], iu[0])] = np.conj(upper)
    O[np.diag_indices(dim)] = diagonal
    return O


def sample_initial(kind: str, dim: int, seed: SeedSpec) -> np.ndarray:
    """Draw one initial operator O_mn = <m|O|n> of size dim x dim.

    GOE: diagonal N(0,1), off-diagonal N(0,1/2) (density ~ exp(-Tr O^2 / 2)).
    GUE: diagonal N(0,1), off-diagonal real and imaginary parts each N(0,1/2).
    URE: entries m <= n uniform on (-sqrt3, sqrt3), symmetrized.
    UCP: diagonal uniform, off-diagonal real and imaginary parts each uniform.
    UIM: off-diagonal i*u with u uniform, zero diagonal.

    Returns:
        complex128 Hermitian array
    """
    if kind not in ENSEMBLES:
        raise ValueError(f"Unknown ensemble: {kind!r} (expected one of {ENSEMBLES})")
    if dim < 2:
        raise ValueError(f"Operator dimension must be >= 2, got {dim}")

    rng = ensemble_generator(kind, seed)
    n_upper = dim * (dim - 1) // 2
    off_std = np.sqrt(0.5)

    if kind == "GOE":
        diagonal = rng.standard_normal(dim)
        upper = rng.normal(0.0, off_std, n_upper).astype(np.complex128)
    elif kind == "GUE":
        diagonal = rng.standard_normal(dim)
        upper = rng.normal(0.0, off_std, n_upper) + 1j * rng.normal(0.0, off_std, n_upper)
    elif kind == "URE":
        diagonal = rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, dim)
        upper = rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, n_upper).astype(np.complex128)
    elif kind == "UCP":
        diagonal = rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, dim)
        upper = (rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, n_upper)
                 + 1j * rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, n_upper))
    else:  # UIM
        diagonal = np.zeros(dim)
        upper = 1j * rng.uniform(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH, n_upper)

    return _assemble(diagonal, upper, dim)


def is_hermitian(O: np.ndarray) -> bool:
    """Exact check: O[m, n] == conj(O[n, m]) for every entry."""
    return bool(np.array_equal(O, np.conj(O.T)))
