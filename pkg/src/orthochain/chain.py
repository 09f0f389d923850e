"""The Markov chain of hidden representations.

One step of the normalized chain maps a d x n state H to

    H' = (1/sqrt(d)) * BN(W @ F(H)),   BN(M) = diag(M M^T)^{-1/2} M,

with W freshly sampled from N(0, I_d/d) and F an entrywise activation
(identity for the linear chain). BN normalizes each of the d rows to unit
length and performs no mean subtraction, so every state after the first step
has Frobenius norm exactly one. In the general-activation recurrence F acts
on the normalization output (rows of unit norm), i.e. on sqrt(d) times the
stored unit-Frobenius state; see _activate. The vanilla comparison chain
replaces BN by a global Frobenius rescaling, which keeps the iteration in
floating-point range without changing any scale-invariant diagnostic
(cosines, orthogonality gap).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .metrics import LayerTrace, layer_trace
from .numerics import rng_from, sample_gaussian_matrix

__all__ = [
    "ACTIVATIONS",
    "ChainConfig",
    "ChainStepError",
    "DegenerateRowError",
    "batch_norm",
    "bn_step",
    "correlated_input",
    "gaussian_input",
    "orthogonal_input",
    "simulate_chain",
    "vanilla_step",
]

_ROW_NORM_FLOOR = 1e-12

ACTIVATIONS = {
    "linear": lambda x: x,
    "relu": lambda x: np.maximum(x, 0.0),
    "tanh": np.tanh,
    "sin": np.sin,
    "sigmoid": expit,
}


class DegenerateRowError(ValueError):
    """A row of the pre-normalization matrix has (numerically) zero norm."""

    def __init__(self, row: int, norm: float):
        self.row = row
        self.norm = norm
        super().__init__(f"row {row} has norm {norm:.3e} < {_ROW_NORM_FLOOR:.0e}; "
                         "batch norm would blow up")


class ChainStepError(RuntimeError):
    """A chain step failed; carries the index of the failing layer."""

    def __init__(self, layer: int, cause: Exception):
        self.layer = layer
        super().__init__(f"chain step failed at layer {layer}: {cause}")


@dataclass(frozen=True)
class ChainConfig:
    """Parameters of one simulated chain.

    The width must dominate the batch (d >= n), matching the regime in which
    the contraction theory is stated.
    """

    d: int
    n: int
    depth: int
    activation: str = "linear"
    kind: str = "bn"
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"batch size must be >= 1, got {self.n}")
        if self.d < self.n:
            raise ValueError(f"width d={self.d} must be >= batch size n={self.n}")
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; "
                             f"choose from {sorted(ACTIVATIONS)}")
        if self.kind not in ("bn", "vanilla"):
            raise ValueError(f"chain kind must be 'bn' or 'vanilla', got {self.kind!r}")


def batch_norm(M: np.ndarray) -> np.ndarray:
    """Row-normalize M: diag(M M^T)^{-1/2} M, no mean subtraction.

    A row with norm below 1e-12 raises DegenerateRowError rather than being
    epsilon-stabilized: under continuous weight draws the event has
    probability zero, so hitting it flags a seeding or shape bug.
    """
    M = np.asarray(M, dtype=float)
    norms = np.linalg.norm(M, axis=1)
    bad = np.nonzero(norms < _ROW_NORM_FLOOR)[0]
    if bad.size:
        raise DegenerateRowError(int(bad[0]), float(norms[bad[0]]))
    return M / norms[:, None]


def _activate(H, activation):
    """Apply F at the row-normalized scale, returned at the stored scale.

    The stored chain state is the normalized H = Q/sqrt(d), but the recurrence
    applies F to the normalization output Q itself (rows of unit norm, entries
    about 1/sqrt(n)), so F sees sqrt(d) * H and the result is scaled back.
    For linear and relu the two scales coincide after normalization; for
    saturating activations they do not: fed the tiny entries of a
    unit-Frobenius state, sigmoid degenerates to an affine map around 1/2 and
    the chain collapses onto exactly identical columns within ~50 layers.
    """
    if activation in ("linear", "relu"):
        return ACTIVATIONS[activation](H)
    root_d = np.sqrt(H.shape[0])
    return ACTIVATIONS[activation](root_d * H) / root_d


def _bn_step(H, rng, activation):
    """One normalized step; returns (next state, pre-normalization product)."""
    d = H.shape[0]
    product = sample_gaussian_matrix(d, d, 1.0 / d, rng) @ _activate(H, activation)
    return batch_norm(product) / np.sqrt(d), product


def _vanilla_step(H, rng, activation):
    """One unnormalized step, rescaled to unit Frobenius norm for stability."""
    d = H.shape[0]
    product = sample_gaussian_matrix(d, d, 1.0 / d, rng) @ _activate(H, activation)
    norm = np.linalg.norm(product)
    if norm < _ROW_NORM_FLOOR:
        raise ValueError("vanilla step produced a (numerically) zero matrix")
    return product / norm, product


def bn_step(H: np.ndarray, rng: np.random.Generator,
            activation: str = "linear") -> np.ndarray:
    """Advance the normalized chain one layer. Output has unit Frobenius norm."""
    return _bn_step(np.asarray(H, dtype=float), rng, activation)[0]


def vanilla_step(H: np.ndarray, rng: np.random.Generator,
                 activation: str = "linear") -> np.ndarray:
    """Advance the vanilla chain one layer (Frobenius-rescaled product)."""
    return _vanilla_step(np.asarray(H, dtype=float), rng, activation)[0]


def gaussian_input(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Default layer-0 state: row-normalized Gaussian scaled to unit norm."""
    return batch_norm(rng.standard_normal((d, n))) / np.sqrt(d)


def correlated_input(d: int, n: int, rng: np.random.Generator,
                     eps: float = 0.01) -> np.ndarray:
    """Highly correlated inputs: unit columns u + eps * g_i around a shared u."""
    u = rng.standard_normal(d)
    cols = u[:, None] + eps * rng.standard_normal((d, n))
    return cols / np.linalg.norm(cols, axis=0)


def orthogonal_input(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Perfectly orthogonal inputs: orthonormal columns scaled to unit norm."""
    q, r = np.linalg.qr(rng.standard_normal((d, n)))
    return q * np.sign(np.diag(r)) / np.sqrt(n)


def simulate_chain(config: ChainConfig, h0: np.ndarray | None = None,
                   keep_matrices: bool = False) -> list[LayerTrace]:
    """Run the chain for config.depth layers and trace each one.

    Returns one LayerTrace per layer 1..depth (layer 0 is the input and is
    not included; build it with metrics.layer_trace if needed). Deterministic
    for a fixed config: weights and the auto-sampled input both come from a
    generator seeded with config.seed.
    """
    rng = rng_from(config.seed)
    if h0 is None:
        H = gaussian_input(config.d, config.n, rng)
    else:
        H = np.asarray(h0, dtype=float)
        if H.shape != (config.d, config.n):
            raise ValueError(f"h0 has shape {H.shape}, expected {(config.d, config.n)}")
    step = _bn_step if config.kind == "bn" else _vanilla_step
    traces = []
    for layer in range(1, config.depth + 1):
        try:
            H, product = step(H, rng, config.activation)
        except (DegenerateRowError, ValueError) as exc:
            raise ChainStepError(layer, exc) from exc
        traces.append(layer_trace(layer, H, pre_product=product,
                                  keep_matrix=keep_matrices))
    return traces
