"""Dense-matrix primitives shared by every other module.

Everything here is a thin, validated layer over numpy: seeded Gaussian
sampling, thin SVD with a reconstruction-friendly factor layout, and
deterministic seed derivation for experiment sweeps. All functions are pure
given their inputs; concurrent use is safe as long as each task owns its own
``numpy.random.Generator``.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SvdConvergenceError",
    "SvdFactors",
    "derive_seed",
    "matrix_with_spectrum",
    "min_singular_value",
    "rng_from",
    "sample_gaussian_matrix",
    "singular_values",
    "thin_svd",
]


class SvdConvergenceError(RuntimeError):
    """Raised when the SVD fails to converge on numerically pathological input."""


def rng_from(seed: int) -> np.random.Generator:
    """Fresh PCG64 generator. Same seed + same call sequence -> same stream."""
    return np.random.default_rng(seed)


def derive_seed(master: int, *parts) -> int:
    """Stable 64-bit seed derived from a master seed and context labels.

    Uses blake2b so the derivation is identical across processes and runs
    (Python's builtin hash is salted per process and unusable here).
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(repr(int(master)).encode())
    for part in parts:
        h.update(b"|")
        h.update(repr(part).encode())
    return int.from_bytes(h.digest(), "little")


def sample_gaussian_matrix(rows: int, cols: int, variance: float,
                           rng: np.random.Generator) -> np.ndarray:
    """i.i.d. zero-mean Gaussian matrix with the given entry variance."""
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix shape must be positive, got {rows}x{cols}")
    if not variance > 0.0:
        raise ValueError(f"variance must be positive, got {variance}")
    return rng.standard_normal((rows, cols)) * np.sqrt(variance)


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``M = left @ diag(singulars) @ right.T``.

    left is d x r and right is n x r, both with orthonormal columns;
    singulars is descending and nonnegative, r = min(d, n).
    """

    left: np.ndarray
    singulars: np.ndarray
    right: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left * self.singulars) @ self.right.T


def thin_svd(M: np.ndarray) -> SvdFactors:
    """Thin SVD of a dense real matrix.

    Deterministic for a fixed input within one build; the sign convention of
    the factors is whatever LAPACK produces and callers must not rely on it.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")
    try:
        u, s, vh = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(f"SVD failed on {M.shape} input: {exc}") from exc
    return SvdFactors(left=u, singulars=s, right=vh.T)


def singular_values(M: np.ndarray) -> np.ndarray:
    """Descending singular values (no factors)."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix contains non-finite entries")
    try:
        return np.linalg.svd(M, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdConvergenceError(f"SVD failed on {M.shape} input: {exc}") from exc


def min_singular_value(M: np.ndarray) -> float:
    """Smallest singular value of M."""
    return float(singular_values(M)[-1])


def matrix_with_spectrum(d: int, n: int, singulars,
                         rng: np.random.Generator) -> np.ndarray:
    """Random d x n matrix with the prescribed singular values.

    Builds U diag(s) V^T from Haar-distributed orthonormal factors; handy for
    constructing test states with a known spectrum.
    """
    s = np.asarray(singulars, dtype=float)
    r = min(d, n)
    if s.shape != (r,):
        raise ValueError(f"need {r} singular values for a {d}x{n} matrix, got {s.shape}")
    u, _ = np.linalg.qr(rng.standard_normal((d, r)))
    v, _ = np.linalg.qr(rng.standard_normal((n, r)))
    return (u * s) @ v.T
