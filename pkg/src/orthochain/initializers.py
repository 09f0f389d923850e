"""Weight initialization schemes, including iterative orthogonalization.

Given a representation H = U Sigma V^T with at least as many samples as
output units, the iterative-orthogonalization weight

    W = (1 / ||Sigma^{1/2}||_F) V' Sigma^{-1/2} U^T

maps H to W H = (1 / ||Sigma^{1/2}||_F) V' Sigma^{1/2} V^T, whose singular
values are sqrt(sigma_i) / ||Sigma^{1/2}||_F: a square-root flattening of the
input spectrum. For any orthogonal V' this strictly shrinks the orthogonality
gap of a full-rank, non-orthogonal input; applied layer by layer it keeps
representations close to orthogonal without batch normalization. A
convolutional variant applies the same construction to the im2col unfolding
of a feature-map tensor. Gaussian and Xavier samplers are included as
baselines.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .metrics import orthogonality_gap
from .numerics import sample_gaussian_matrix, thin_svd

__all__ = [
    "ConvInitSpec",
    "InitGapReport",
    "InitScheme",
    "RankDeficiencyError",
    "conv_feature_map",
    "conv_iterative_init",
    "feature_gap",
    "fold",
    "gaussian_init",
    "iterative_orthogonal_init",
    "unfold",
    "verify_init_gap",
    "xavier_init",
]

_QR_RANK_FLOOR = 1e-10


class RankDeficiencyError(ValueError):
    """The spectrum to invert has effectively collapsed columns."""


@dataclass(frozen=True)
class InitScheme:
    """Named initialization with the clamp threshold used for inversions."""

    kind: str
    clamp_ratio: float = 1e-8

    def __post_init__(self):
        if self.kind not in ("gaussian_variance_over_d", "xavier", "iterative_orthogonal"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if not 0.0 < self.clamp_ratio <= 1e-3:
            raise ValueError(f"clamp_ratio must lie in (0, 1e-3], got {self.clamp_ratio!r}")


@dataclass(frozen=True)
class ConvInitSpec:
    """Geometry of one convolutional initialization problem.

    padding defaults to (kernel - 1) / 2, the zero-padding that keeps feature
    maps the same size; only odd kernels are supported.
    """

    kernel: int
    in_channels: int
    out_filters: int
    image_side: int
    padding: int = field(default=-1)

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if min(self.in_channels, self.out_filters, self.image_side) < 1:
            raise ValueError("channels, filters, and image side must be positive")
        if self.padding == -1:
            object.__setattr__(self, "padding", (self.kernel - 1) // 2)
        elif self.padding != (self.kernel - 1) // 2:
            raise ValueError(f"padding must be (kernel-1)/2 = {(self.kernel - 1) // 2}")

    @property
    def patch_dim(self) -> int:
        return self.in_channels * self.kernel ** 2


def gaussian_init(d_out: int, d_in: int, rng: np.random.Generator) -> np.ndarray:
    """Gaussian baseline with entry variance 1/d_in."""
    return sample_gaussian_matrix(d_out, d_in, 1.0 / d_in, rng)


def xavier_init(d_out: int, d_in: int, rng: np.random.Generator) -> np.ndarray:
    """Xavier baseline: entry variance 2 / (fan_in + fan_out)."""
    return sample_gaussian_matrix(d_out, d_in, 2.0 / (d_in + d_out), rng)


def _orthogonal_slice(V: np.ndarray, out_dim: int, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal-factor V' (out_dim x p) obtained from a row slice of V.

    A raw row slice of a column-orthonormal V is not generally orthogonal, so
    the slice is passed through QR; if it is rank-deficient the factor falls
    back to a Haar-random one. The downstream gap is provably identical for
    every orthonormal choice (the singular values of V' Sigma^{1/2} V^T do
    not depend on V'), so this only pins a deterministic convention.
    """
    p = V.shape[1]
    rows = V[:min(out_dim, V.shape[0]), :]
    if rows.shape[0] < out_dim:  # fewer samples than outputs: nothing to slice
        rows = rng.standard_normal((out_dim, p))
    if out_dim >= p:
        q, r = np.linalg.qr(rows)                # out_dim x p, orthonormal columns
    else:
        q_t, r = np.linalg.qr(rows.T)            # p x out_dim, orthonormal columns
        q = q_t.T
    if np.min(np.abs(np.diag(r))) < _QR_RANK_FLOOR:
        g = rng.standard_normal((max(out_dim, p), min(out_dim, p)))
        q, _ = np.linalg.qr(g)
        q = q if out_dim >= p else q.T
    return q


def _eq6_weight(H: np.ndarray, out_dim: int, rng: np.random.Generator,
                clamp_ratio: float, clamp: bool) -> np.ndarray:
    """Core construction W = (1/||Sigma^{1/2}||_F) V' Sigma^{-1/2} U^T."""
    rows, cols = H.shape
    if cols < rows:
        raise ValueError(f"need at least as many samples as rows, got {H.shape}")
    factors = thin_svd(H)
    s = factors.singulars.copy()
    floor = clamp_ratio * s[0]
    if s[-1] < floor:
        if not clamp:
            raise RankDeficiencyError(
                f"sigma_min/sigma_max = {s[-1] / s[0]:.3e} < clamp_ratio "
                f"{clamp_ratio:.0e}; enlarge the batch or pass clamp=True")
        warnings.warn("clamping near-zero singular values before inversion",
                      RuntimeWarning, stacklevel=3)
        s = np.maximum(s, floor)
    v_prime = _orthogonal_slice(factors.right, out_dim, rng)
    scale = 1.0 / np.sqrt(s.sum())
    return scale * (v_prime / np.sqrt(s)) @ factors.left.T


def iterative_orthogonal_init(H: np.ndarray, rng: np.random.Generator,
                              clamp_ratio: float = 1e-8,
                              clamp: bool = False) -> np.ndarray:
    """Square weight for a d x n representation with n >= d.

    The product W @ H has singular values sqrt(sigma_i(H)) / ||Sigma^{1/2}||_F,
    so its orthogonality gap is strictly below the input's whenever the input
    is full rank with a non-flat spectrum. Raises RankDeficiencyError when the
    spectrum cannot be inverted safely (clamp=True clamps and warns instead).
    """
    H = np.asarray(H, dtype=float)
    return _eq6_weight(H, H.shape[0], rng, clamp_ratio, clamp)


def feature_gap(M: np.ndarray) -> float:
    """Orthogonality gap on the Gram of the smaller dimension.

    For a wide matrix (more samples than rows) the n x n sample Gram carries
    n - d forced zero eigenvalues; measuring on the d x d side removes that
    rank-induced constant. The two versions differ by a fixed offset in the
    squared gap, so one strictly decreases exactly when the other does.
    """
    M = np.asarray(M, dtype=float)
    return orthogonality_gap(M.T if M.shape[1] >= M.shape[0] else M)


@dataclass(frozen=True)
class InitGapReport:
    v_before: float
    v_after: float
    strict_decrease: bool


def verify_init_gap(H: np.ndarray, W: np.ndarray) -> InitGapReport:
    """Gap of H vs. gap of W @ H, measured by feature_gap.

    strict_decrease reports v_after < v_before; equality is expected only when
    v_before is already at the numerical floor (a perfectly flat spectrum).
    """
    before = feature_gap(H)
    after = feature_gap(np.asarray(W, dtype=float) @ np.asarray(H, dtype=float))
    return InitGapReport(v_before=before, v_after=after,
                         strict_decrease=bool(after < before))


def unfold(T: np.ndarray, kernel: int, padding: int | None = None) -> np.ndarray:
    """im2col: stack every zero-padded k x k patch of every sample as a column.

    T has shape (channels, m, m, batch); the result has shape
    (channels * k^2, m^2 * batch) and column t*m^2 + i*m + j holds the
    vectorized patch centered at pixel (i, j) of sample t.
    """
    T = np.asarray(T, dtype=float)
    if T.ndim != 4 or T.shape[1] != T.shape[2]:
        raise ValueError(f"expected (channels, m, m, batch), got {T.shape}")
    c, m, _, batch = T.shape
    pad = (kernel - 1) // 2 if padding is None else padding
    if pad != (kernel - 1) // 2:
        raise ValueError(f"padding must be (kernel-1)/2 = {(kernel - 1) // 2}")
    padded = np.zeros((c, m + 2 * pad, m + 2 * pad, batch))
    padded[:, pad:pad + m, pad:pad + m, :] = T
    # windows[c, i, j, t, a, b] = padded[c, i+a, j+b, t]
    windows = np.lib.stride_tricks.sliding_window_view(
        padded, (kernel, kernel), axis=(1, 2))
    # -> (c, k, k, m, m, t) -> (c*k^2, t*m^2 + i*m + j)
    ordered = windows.transpose(0, 4, 5, 3, 1, 2)
    return ordered.reshape(c * kernel * kernel, m * m * batch).copy()


def fold(M: np.ndarray, kernel: int, image_side: int) -> np.ndarray:
    """Inverse of unfold for k = 1; patch summation (the adjoint) for k > 1.

    Only the round-trip use is supported: fold(unfold(T)) reproduces T exactly
    for k = 1 and accumulates each pixel once per covering patch otherwise.
    """
    M = np.asarray(M, dtype=float)
    m = image_side
    rows, cols = M.shape
    if rows % kernel ** 2 or cols % (m * m):
        raise ValueError(f"shape {M.shape} incompatible with kernel {kernel}, side {m}")
    c = rows // kernel**2
    batch = cols // (m * m)
    patches = M.reshape(c, kernel, kernel, batch, m, m)
    pad = (kernel - 1) // 2
    canvas = np.zeros((c, m + 2 * pad, m + 2 * pad, batch))
    for a in range(kernel):
        for b in range(kernel):
            canvas[:, a:a + m, b:b + m, :] += patches[:, a, b].transpose(0, 2, 3, 1)
    return canvas[:, pad:pad + m, pad:pad + m, :]


def conv_feature_map(M: np.ndarray, image_side: int) -> np.ndarray:
    """Regroup a (filters x m^2*batch) product into per-sample feature vectors.

    Column t*m^2 + pix of M is the response at one pixel of sample t; stacking
    all pixels of a sample gives a (filters * m^2) x batch matrix whose sample
    Gram measures the orthogonality of the actual convolution outputs.
    """
    M = np.asarray(M, dtype=float)
    d, cols = M.shape
    pixels = image_side * image_side
    if cols % pixels:
        raise ValueError(f"{cols} columns not divisible by m^2 = {pixels}")
    batch = cols // pixels
    return M.reshape(d, batch, pixels).transpose(0, 2, 1).reshape(d * pixels, batch)


def conv_iterative_init(T: np.ndarray, spec: ConvInitSpec, rng: np.random.Generator,
                        clamp_ratio: float = 1e-8, clamp: bool = False) -> np.ndarray:
    """Iterative-orthogonalization weight for a convolution, via unfolding.

    Applies the square-root-flattening construction to H' = unfold(T) and
    returns the (out_filters x in_channels*k^2) kernel matrix. When
    out_filters >= in_channels*k^2 the unfolded product W @ H' inherits the
    strict gap decrease of the dense case; below that the output rank is
    capped at out_filters and the decrease holds only when the input patch
    spectrum is concentrated enough (effective rank under out_filters), as it
    is for spatially smooth inputs.
    """
    T = np.asarray(T, dtype=float)
    if T.shape[0] != spec.in_channels or T.shape[1] != spec.image_side:
        raise ValueError(f"tensor shape {T.shape} does not match {spec}")
    unfolded = unfold(T, spec.kernel, spec.padding)
    if unfolded.shape[1] < spec.patch_dim:
        raise ValueError(
            f"unfolded batch too narrow: {unfolded.shape[1]} columns for "
            f"patch dimension {spec.patch_dim}")
    return _eq6_weight(unfolded, spec.out_filters, rng, clamp_ratio, clamp)
