"""Diagnostics of a representation matrix.

The central quantity is the orthogonality gap

    V(H) = || H^T H / ||H||_F^2  -  I_n / n ||_F,

which is zero exactly when the n columns of H are pairwise orthogonal with
equal norms. Its companion is the Lyapunov gap V_hat(H) = 1/n - sigma_min(H)^2,
defined for unit-Frobenius-norm inputs, which upper-bounds V via
V <= 2 n V_hat. The module also computes Gram matrices, pairwise column
cosines, entrywise moment summaries of a pre-normalization product, and the
stationarity gap L used by the general-activation conjecture sweep.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import singular_values

__all__ = [
    "GaussianityReport",
    "LayerTrace",
    "conjecture_gap",
    "gaussianity_diagnostics",
    "gram",
    "layer_trace",
    "lyapunov_gap",
    "orthogonality_gap",
    "pairwise_cosines",
    "v_from_spectrum",
]

_NORM_TOL = 1e-8  # Frobenius-norm slack for the unit-norm precondition


def orthogonality_gap(H: np.ndarray) -> float:
    """Frobenius distance between the normalized Gram matrix and I/n.

    Scale invariant: both terms are normalized, so gap(c*H) == gap(H) for any
    c != 0. Zero matrix is outside the domain.
    """
    H = np.asarray(H, dtype=float)
    n = H.shape[1]
    sq = float(np.sum(H * H))
    if sq == 0.0:
        raise ValueError("orthogonality gap is undefined for the zero matrix")
    C = (H.T @ H) / sq
    C[np.diag_indices(n)] -= 1.0 / n
    return float(np.linalg.norm(C))


def v_from_spectrum(singulars, n: int) -> float:
    """Orthogonality gap from the singular values of a unit-norm matrix.

    Uses V^2 = sum((sigma_i^2 - 1/n)^2) with zero padding up to n values,
    equivalently V^2 = sum(sigma_i^4) - 1/n when sum(sigma_i^2) = 1.
    """
    s2 = np.square(np.asarray(singulars, dtype=float))
    pad = n - s2.size
    if pad < 0:
        raise ValueError(f"more singular values ({s2.size}) than columns ({n})")
    return float(np.sqrt(np.sum((s2 - 1.0 / n) ** 2) + pad / n**2))


def lyapunov_gap(H: np.ndarray) -> float:
    """1/n minus the squared minimum singular value of a unit-norm matrix."""
    H = np.asarray(H, dtype=float)
    frob = np.linalg.norm(H)
    if abs(frob - 1.0) > _NORM_TOL:
        raise ValueError(
            f"Lyapunov gap requires unit Frobenius norm, got {frob!r}")
    n = H.shape[1]
    return 1.0 / n - float(singular_values(H)[-1]) ** 2


def gram(H: np.ndarray) -> np.ndarray:
    """Sample Gram matrix H^T H (n x n, symmetric PSD)."""
    H = np.asarray(H, dtype=float)
    return H.T @ H


def pairwise_cosines(H: np.ndarray) -> np.ndarray:
    """Cosine similarity of every unordered column pair, in [-1, 1]."""
    H = np.asarray(H, dtype=float)
    norms = np.linalg.norm(H, axis=0)
    bad = np.nonzero(norms == 0.0)[0]
    if bad.size:
        raise ValueError(f"column {bad[0]} is zero; cosine undefined")
    U = H / norms
    C = U.T @ U
    iu = np.triu_indices(H.shape[1], k=1)
    return np.clip(C[iu], -1.0, 1.0)


@dataclass(frozen=True)
class GaussianityReport:
    """Entrywise moments of a pre-normalization product W @ F(H).

    target_var is the analytic deep-layer value 1/(n*d) for the isotropic
    Gaussian limit law G/sqrt(n) with G having 1/d-variance entries. No
    pass/fail judgement is made here; consumers apply their own thresholds.
    """

    entry_mean: float
    entry_var: float
    target_var: float
    max_column_crosscorr: float
    degenerate: bool


def gaussianity_diagnostics(M: np.ndarray, n: int, d: int) -> GaussianityReport:
    """Empirical moments of M against the 1/(n*d) isotropic target."""
    M = np.asarray(M, dtype=float)
    mean = float(M.mean())
    var = float(M.var())
    if var == 0.0:
        return GaussianityReport(mean, 0.0, 1.0 / (n * d), 0.0, True)
    corr = np.corrcoef(M, rowvar=False)
    iu = np.triu_indices(M.shape[1], k=1)
    max_cross = float(np.max(np.abs(corr[iu]))) if iu[0].size else 0.0
    return GaussianityReport(mean, var, 1.0 / (n * d), max_cross, False)


@dataclass(frozen=True)
class LayerTrace:
    """Per-layer diagnostics of one chain state.

    Spectral quantities (v_gap, lyap_gap, sigma_min, singulars) are computed
    on H / ||H||_F so they are well defined for arbitrary layer-0 inputs;
    frob_norm records the actual norm. entry_mean / entry_var summarize the
    pre-normalization product that produced this layer (the layer's own
    matrix at layer 0). gram is the raw H^T H.
    """

    layer: int
    v_gap: float
    lyap_gap: float
    sigma_min: float
    frob_norm: float
    cosines: np.ndarray
    entry_mean: float
    entry_var: float
    singulars: np.ndarray
    gram: np.ndarray
    matrix: np.ndarray | None = None


def layer_trace(layer: int, H: np.ndarray, pre_product: np.ndarray | None = None,
                keep_matrix: bool = False) -> LayerTrace:
    """Assemble the full diagnostic record for one layer."""
    H = np.asarray(H, dtype=float)
    n = H.shape[1]
    frob = float(np.linalg.norm(H))
    if frob == 0.0:
        raise ValueError("cannot trace a zero representation")
    s = singular_values(H) / frob
    moments = pre_product if pre_product is not None else H
    return LayerTrace(
        layer=layer,
        v_gap=v_from_spectrum(s, n),
        lyap_gap=1.0 / n - float(s[-1]) ** 2,
        sigma_min=float(s[-1]),
        frob_norm=frob,
        cosines=pairwise_cosines(H),
        entry_mean=float(np.mean(moments)),
        entry_var=float(np.var(moments)),
        singulars=s,
        gram=gram(H),
        matrix=H.copy() if keep_matrix else None,
    )


def conjecture_gap(grams, burn_in: int) -> np.ndarray:
    """Stationarity gap L for each post-burn-in layer of a simulated chain.

    The invariant-law Gram E_nu[Q^T Q] is estimated by averaging the Gram
    matrices of all layers strictly after burn_in, and L at each of those
    layers is the Frobenius distance to that estimate. With a single
    post-burn-in layer the estimate is the layer itself and L = 0.
    """
    grams = [np.asarray(g, dtype=float) for g in grams]
    if burn_in < 0:
        raise ValueError("burn_in must be nonnegative")
    window = grams[burn_in:]
    if not window:
        raise ValueError(
            f"chain too short: {len(grams)} layers with burn_in={burn_in}")
    stack = np.stack(window)
    mean = stack.mean(axis=0)
    return np.linalg.norm(stack - mean, axis=(1, 2))
