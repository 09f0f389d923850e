"""Reproducible experiment runners and the CSV contract.

Each runner is a pure function of its ExperimentSpec: replicate seeds are
derived from the master seed with a stable hash, tasks may execute
concurrently, and records are assembled in a deterministic order, so a rerun
of the same spec produces byte-identical CSV. The CSV schema is fixed:

    kind,n,d,layer,seed,metric,value

with one row per (layer, seed, metric), LF line endings, and floats printed
with 17 significant digits (value round-trips exactly). Aggregate rows (fit
slopes, plateau levels, battery margins) use d=0 and/or layer=0 with the
master seed in the seed column.
"""

import io
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import theory
from .chain import (ACTIVATIONS, ChainConfig, correlated_input,
                    orthogonal_input, simulate_chain)
from .initializers import (InitScheme, feature_gap, gaussian_init,
                           iterative_orthogonal_init, xavier_init)
from .metrics import conjecture_gap, layer_trace, orthogonality_gap
from .numerics import derive_seed, rng_from

__all__ = [
    "BatteryResult",
    "CSV_HEADER",
    "DecayEstimate",
    "ExperimentSpec",
    "RunRecord",
    "SlopeFit",
    "estimate_decay",
    "fit_loglog_slope",
    "records_to_csv",
    "run_chain",
    "run_cosine_contrast",
    "run_conjecture_sweep",
    "run_depth_sweep",
    "run_init_demo",
    "run_theory_battery",
    "run_width_sweep",
    "write_csv",
]

CSV_HEADER = "kind,n,d,layer,seed,metric,value"
CORRELATED_EPS = 0.01  # perturbation scale of the correlated-input generator

EXPERIMENT_KINDS = ("chain", "width_sweep", "depth_sweep", "cosine_contrast",
                    "conjecture_sweep", "theory_battery", "init_demo")


@dataclass(frozen=True)
class RunRecord:
    """One self-describing CSV row."""

    kind: str
    n: int
    d: int
    layer: int
    seed: int
    metric: str
    value: float

    def to_csv(self) -> str:
        return (f"{self.kind},{self.n},{self.d},{self.layer},{self.seed},"
                f"{self.metric},{format(float(self.value), '.17g')}")


def records_to_csv(records) -> str:
    lines = [CSV_HEADER]
    lines.extend(r.to_csv() for r in records)
    return "\n".join(lines) + "\n"


def write_csv(records, out: str | None):
    """Write records to a path, or to stdout when out is None."""
    text = records_to_csv(records)
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        with io.open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


@dataclass
class ExperimentSpec:
    """Flat experiment description, mirroring the JSON config keys.

    Replicates are identified either by an explicit `seeds` list (used
    verbatim as chain seeds) or by `n_seeds` + `master_seed`, in which case
    chain seeds are derived per (kind, parameter tuple, replicate index).
    """

    kind: str
    n: int = 4
    d: int | None = None
    d_list: list[int] | None = None
    depth: int | None = None
    activation: str = "linear"
    chain_kind: str = "bn"
    seeds: list[int] | None = None
    n_seeds: int | None = None
    master_seed: int = 0
    burn_in: int = 50
    out: str | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; "
                             f"choose from {EXPERIMENT_KINDS}")
        if self.seeds is not None and len(self.seeds) == 0:
            raise ValueError("seeds list must be nonempty")
        if self.seeds is None and self.n_seeds is not None and self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if self.d_list is not None:
            if any(b <= a for a, b in zip(self.d_list, self.d_list[1:])):
                raise ValueError("sweep values must be strictly increasing")

    def replicate_seeds(self, *params) -> list[int]:
        if self.seeds is not None:
            return [int(s) for s in self.seeds]
        count = self.n_seeds if self.n_seeds is not None else 20
        return [derive_seed(self.master_seed, self.kind, params, i)
                for i in range(count)]


def _map_tasks(fn, keys, threads: int = 1) -> dict:
    """Evaluate fn(key) for every key; deterministic dict regardless of order."""
    if threads <= 1 or len(keys) <= 1:
        return {k: fn(k) for k in keys}
    with ThreadPoolExecutor(max_workers=threads) as pool:
        results = list(pool.map(fn, keys))
    return dict(zip(keys, results))


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def fit_loglog_slope(points) -> SlopeFit:
    """OLS fit of ln(y) against ln(x)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 2:
        raise ValueError(f"need at least 2 sweep points for a slope, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("log-log fit requires strictly positive coordinates")
    lx = np.log([x for x, _ in pts])
    ly = np.log([y for _, y in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    total = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if total == 0.0 else 1.0 - float(np.sum(resid**2)) / total
    return SlopeFit(slope=float(slope), intercept=float(intercept), r_squared=r2)


@dataclass(frozen=True)
class DecayEstimate:
    """Geometric decay diagnostics of a per-layer mean-V curve.

    The plateau is the mean over the final half of the layers; the pre-plateau
    segment is the initial run of layers above 3x that level, and the rate is
    the per-layer multiplicative factor fitted on that segment.
    """

    rate: float
    plateau: float
    pre_plateau_layers: int


def estimate_decay(mean_v) -> DecayEstimate:
    v = np.asarray(mean_v, dtype=float)
    if v.size < 4 or np.any(v <= 0):
        raise ValueError("need >= 4 positive per-layer values")
    plateau = float(v[v.size // 2:].mean())
    above = v > 3.0 * plateau
    cut = int(np.argmin(above)) if not above.all() else v.size
    if cut >= 2:
        layers = np.arange(1, cut + 1, dtype=float)
        slope = np.polyfit(layers, np.log(v[:cut]), 1)[0]
        rate = float(np.exp(slope))
    else:
        rate = float("nan")
    return DecayEstimate(rate=rate, plateau=plateau, pre_plateau_layers=cut)


# ---------------------------------------------------------------------------
# sweep runners
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    records: list
    fit: SlopeFit | None = None
    summary: str = ""
    traces_by_seed: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)


def _chain_with_input(spec: ExperimentSpec, d: int, seed: int, depth: int,
                      input_kind: str, keep_matrices: bool = False):
    """Simulate one chain with a deterministically derived input state."""
    config = ChainConfig(d=d, n=spec.n, depth=depth, activation=spec.activation,
                         kind=spec.chain_kind, seed=seed)
    if input_kind == "auto":
        h0 = None
    else:
        in_rng = rng_from(derive_seed(seed, "input", input_kind))
        if input_kind == "correlated":
            h0 = correlated_input(d, spec.n, in_rng, eps=CORRELATED_EPS)
        elif input_kind == "orthogonal":
            h0 = orthogonal_input(d, spec.n, in_rng)
        else:
            raise ValueError(f"unknown input kind {input_kind!r}")
    traces = simulate_chain(config, h0=h0, keep_matrices=keep_matrices)
    return h0, traces


def run_width_sweep(spec: ExperimentSpec, threads: int = 1) -> SweepResult:
    """Mean orthogonality gap over layers vs. width, with a log-log fit."""
    widths = spec.d_list if spec.d_list is not None else [32, 64, 128, 256, 512, 1024]
    if len(widths) < 2:
        raise ValueError("width sweep needs at least 2 sweep points")
    if min(widths) < spec.n:
        raise ValueError(f"every width must be >= n = {spec.n}")
    depth = spec.depth if spec.depth is not None else 500

    tasks = [(d, seed) for d in widths for seed in spec.replicate_seeds(spec.n, d, depth)]

    def one(key):
        d, seed = key
        _, traces = _chain_with_input(spec, d, seed, depth, "auto")
        return float(np.mean([t.v_gap for t in traces]))

    means = _map_tasks(one, tasks, threads)
    records = [RunRecord(spec.kind, spec.n, d, depth, seed, "mean_v", means[(d, seed)])
               for d, seed in tasks]
    per_width = [(d, float(np.mean([means[k] for k in tasks if k[0] == d])))
                 for d in widths]
    fit = fit_loglog_slope(per_width)
    for name, value in (("slope", fit.slope), ("intercept", fit.intercept),
                        ("r_squared", fit.r_squared)):
        records.append(RunRecord(spec.kind, spec.n, 0, 0, spec.master_seed, name, value))
    return SweepResult(records=records, fit=fit,
                       summary=f"width-sweep slope={fit.slope:.4f} "
                               f"r2={fit.r_squared:.4f} over d={widths}",
                       extras={"per_width_mean_v": per_width})


def run_depth_sweep(spec: ExperimentSpec, threads: int = 1,
                    input_kind: str = "correlated",
                    keep_traces: bool = False) -> SweepResult:
    """Per-layer orthogonality gap at fixed width, with decay diagnostics.

    Starts from highly correlated inputs by default so the transient is
    visible; the input family is part of the echoed parameters.
    """
    d = spec.d if spec.d is not None else 1024
    depth = spec.depth if spec.depth is not None else 500
    if depth < 50:
        raise ValueError(f"depth sweep needs depth >= 50, got {depth}")
    seeds = spec.replicate_seeds(spec.n, d, depth, input_kind)

    def one(seed):
        return _chain_with_input(spec, d, seed, depth, input_kind)[1]

    traces_by_seed = _map_tasks(one, seeds, threads)
    records = []
    for seed in seeds:
        for t in traces_by_seed[seed]:
            records.append(RunRecord(spec.kind, spec.n, d, t.layer, seed, "v", t.v_gap))
    v_matrix = np.array([[t.v_gap for t in traces_by_seed[s]] for s in seeds])
    mean_v = v_matrix.mean(axis=0)
    decay = estimate_decay(mean_v)
    floor = min(theory.estimate_spectral_floor(traces_by_seed[s]) for s in seeds)
    for name, value in (("decay_rate", decay.rate),
                        ("decay_slope", float(np.log(decay.rate)),),
                        ("plateau", decay.plateau),
                        ("pre_plateau_layers", decay.pre_plateau_layers),
                        ("spectral_floor", floor)):
        records.append(RunRecord(spec.kind, spec.n, d, 0, spec.master_seed, name, value))
    return SweepResult(
        records=records,
        summary=(f"depth-sweep d={d} rate={decay.rate:.4f} "
                 f"plateau={decay.plateau:.5f} spectral_floor={floor:.4g} "
                 f"input={input_kind}"),
        traces_by_seed=traces_by_seed if keep_traces else {},
        extras={"mean_v": mean_v, "decay": decay, "spectral_floor": floor,
                "input_kind": input_kind},
    )


def run_cosine_contrast(spec: ExperimentSpec, threads: int = 1) -> SweepResult:
    """|cosine| across layers: normalized chain from correlated inputs vs.
    vanilla chain from orthogonal inputs."""
    if spec.n != 2:
        raise ValueError(f"cosine contrast is defined for n=2, got n={spec.n}")
    d = spec.d if spec.d is not None else 32
    depth = spec.depth if spec.depth is not None else 50
    legs = (("bn", "correlated"), ("vanilla", "orthogonal"))
    records, finals = [], {}
    for chain_kind, input_kind in legs:
        leg_spec = ExperimentSpec(kind=spec.kind, n=spec.n, d=d, depth=depth,
                                  activation=spec.activation, chain_kind=chain_kind,
                                  seeds=spec.seeds, n_seeds=spec.n_seeds,
                                  master_seed=spec.master_seed)
        seeds = leg_spec.replicate_seeds(chain_kind, d, depth, input_kind)

        def one(seed, leg_spec=leg_spec, input_kind=input_kind):
            h0, traces = _chain_with_input(leg_spec, d, seed, depth, input_kind)
            cos0 = float(np.abs(layer_trace(0, h0).cosines[0]))
            return [cos0] + [float(np.abs(t.cosines[0])) for t in traces]

        by_seed = _map_tasks(one, seeds, threads)
        metric = f"abs_cosine_{chain_kind}"
        for seed in seeds:
            for layer, value in enumerate(by_seed[seed]):
                records.append(RunRecord(spec.kind, spec.n, d, layer, seed,
                                         metric, value))
        finals[chain_kind] = float(np.median([by_seed[s][-1] for s in seeds]))
    for chain_kind, _ in legs:
        records.append(RunRecord(spec.kind, spec.n, d, depth, spec.master_seed,
                                 f"median_final_{chain_kind}", finals[chain_kind]))
    return SweepResult(
        records=records,
        summary=(f"cosine-contrast d={d} depth={depth} "
                 f"median|cos| bn={finals['bn']:.4f} vanilla={finals['vanilla']:.4f}"),
        extras={"median_final": finals},
    )


def run_conjecture_sweep(spec: ExperimentSpec, threads: int = 1) -> SweepResult:
    """Stationarity gap L vs. width for a nonlinear chain, with log-log fit."""
    if spec.activation not in ("relu", "tanh", "sin", "sigmoid"):
        raise ValueError("conjecture sweep needs a nonlinear activation, "
                         f"got {spec.activation!r}")
    widths = spec.d_list if spec.d_list is not None else [64, 128, 256, 512]
    if len(widths) < 2:
        raise ValueError("conjecture sweep needs at least 2 sweep points")
    window = (spec.depth - spec.burn_in) if spec.depth is not None else 1000
    if window < 1:
        raise ValueError("depth must exceed burn_in")
    depth = spec.burn_in + window

    tasks = [(d, seed) for d in widths
             for seed in spec.replicate_seeds(spec.activation, spec.n, d, depth)]

    def one(key):
        d, seed = key
        _, traces = _chain_with_input(spec, d, seed, depth, "auto")
        l_values = conjecture_gap([t.gram for t in traces], spec.burn_in)
        mean_v = float(np.mean([t.v_gap for t in traces[spec.burn_in:]]))
        return float(l_values.mean()), mean_v

    results = _map_tasks(one, tasks, threads)
    records = []
    for d, seed in tasks:
        mean_l, mean_v = results[(d, seed)]
        records.append(RunRecord(spec.kind, spec.n, d, depth, seed, "mean_l", mean_l))
        records.append(RunRecord(spec.kind, spec.n, d, depth, seed, "mean_v", mean_v))
    per_width = [(d, float(np.mean([results[k][0] for k in tasks if k[0] == d])))
                 for d in widths]
    fit = fit_loglog_slope(per_width)
    for name, value in (("slope", fit.slope), ("intercept", fit.intercept),
                        ("r_squared", fit.r_squared)):
        records.append(RunRecord(spec.kind, spec.n, 0, 0, spec.master_seed, name, value))
    return SweepResult(records=records, fit=fit,
                       summary=(f"conjecture-sweep activation={spec.activation} "
                                f"slope={fit.slope:.4f} over d={widths}"),
                       extras={"per_width_mean_l": per_width})


def run_chain(spec: ExperimentSpec, threads: int = 1) -> SweepResult:
    """Plain per-layer diagnostics of one chain configuration."""
    d = spec.d if spec.d is not None else 256
    depth = spec.depth if spec.depth is not None else 100
    seeds = spec.replicate_seeds(spec.n, d, depth)

    def one(seed):
        return _chain_with_input(spec, d, seed, depth, "auto")[1]

    traces_by_seed = _map_tasks(one, seeds, threads)
    records = []
    for seed in seeds:
        for t in traces_by_seed[seed]:
            for metric, value in (("v", t.v_gap), ("lyap", t.lyap_gap),
                                  ("sigma_min", t.sigma_min),
                                  ("frob_norm", t.frob_norm),
                                  ("entry_var", t.entry_var)):
                records.append(RunRecord(spec.kind, spec.n, d, t.layer, seed,
                                         metric, value))
    final_v = float(np.mean([traces_by_seed[s][-1].v_gap for s in seeds]))
    return SweepResult(records=records,
                       summary=f"chain d={d} n={spec.n} depth={depth} "
                               f"mean final V={final_v:.5f}",
                       traces_by_seed=traces_by_seed)


def run_init_demo(spec: ExperimentSpec, threads: int = 1,
                  init_kind: str = "iterative_orthogonal") -> SweepResult:
    """Layer-by-layer gap trajectory under a chosen initialization.

    With the iterative scheme each layer's weight is rebuilt from the current
    representation and the gap shrinks monotonically (linear activation);
    baselines just propagate through random weights.
    """
    scheme = InitScheme(kind=init_kind)
    d = spec.d if spec.d is not None else 32
    n = spec.n
    if n < d:
        n = 2 * d  # the scheme needs a large batch; default to n = 2d
    depth = spec.depth if spec.depth is not None else 8
    seeds = spec.replicate_seeds(init_kind, d, n, depth)
    records = []
    finals = []
    act = spec.activation
    for seed in seeds:
        rng = rng_from(seed)
        H = rng.standard_normal((d, n))
        for layer in range(1, depth + 1):
            before = feature_gap(H)
            if scheme.kind == "iterative_orthogonal":
                W = iterative_orthogonal_init(H, rng, clamp_ratio=scheme.clamp_ratio)
            elif scheme.kind == "xavier":
                W = xavier_init(d, d, rng)
            else:
                W = gaussian_init(d, d, rng)
            H = ACTIVATIONS[act](W @ H)
            after = feature_gap(H)
            records.append(RunRecord(spec.kind, n, d, layer, seed, "v_before", before))
            records.append(RunRecord(spec.kind, n, d, layer, seed, "v_after", after))
        finals.append(after)
    return SweepResult(records=records,
                       summary=(f"init-demo kind={init_kind} d={d} n={n} "
                                f"mean final gap={float(np.mean(finals)):.2e}"))


# ---------------------------------------------------------------------------
# theory battery
# ---------------------------------------------------------------------------

@dataclass
class BatteryResult:
    records: list
    margins: dict
    failures: list
    summary: str = ""


def check_unit_norm(traces, tol: float = 1e-10) -> float:
    """Margin of the unit-Frobenius-norm invariant over a trace list."""
    worst = max(abs(t.frob_norm - 1.0) for t in traces)
    return tol - worst


def check_gap_inequalities(traces, tol: float = 1e-8) -> dict:
    """Pointwise margins of the Lyapunov and coupling inequalities."""
    v_lyap = min(2.0 * t.gram.shape[0] * t.lyap_gap + tol - t.v_gap for t in traces)
    tight = min(np.sqrt(2.0) * (t.gram.shape[0] - 1) * t.lyap_gap + tol - t.v_gap
                for t in traces)
    coupling = np.inf
    for t in traces:
        q = theory.coupling_w2_quantities(t.singulars, t.gram.shape[0])
        coupling = min(coupling,
                       q.v_bound - q.coupling_cost + 1e-12,
                       q.quadratic_bound - q.coupling_cost + 1e-12)
    return {"v_lyap_bound": v_lyap, "v_lyap_bound_tight": tight,
            "coupling_chain": coupling}


def check_v_identity(traces, tol: float = 1e-8) -> float:
    """Margin of |V(from Gram) - V(from spectrum)| <= tol (needs matrices)."""
    worst = 0.0
    for t in traces:
        if t.matrix is None:
            raise ValueError("v-identity check needs traces with keep_matrices=True")
        worst = max(worst, abs(orthogonality_gap(t.matrix) - t.v_gap))
    return tol - worst


def run_theory_battery(spec: ExperimentSpec, threads: int = 1) -> BatteryResult:
    """Run every bound verifier at desk scale; one record per check.

    A check's value is its margin: nonnegative means the bound held (with its
    Monte Carlo or tolerance slack already folded in). Failures are collected,
    not raised.
    """
    master = spec.master_seed
    pairs = ((2, 64), (4, 256), (8, 1024))
    records, margins = [], {}

    def add(name, n, d, margin):
        margins[f"{name}[n={n},d={d}]" if n else name] = margin
        records.append(RunRecord(spec.kind, n, d, 0, master, name, margin))

    # simulated chains: invariants that must hold on every layer
    for n, d in pairs:
        trace_sets = []
        for i in range(2):
            config = ChainConfig(d=d, n=n, depth=40, activation="linear", kind="bn",
                                 seed=derive_seed(master, "battery_chain", n, d, i))
            trace_sets.append(simulate_chain(config, keep_matrices=True))
        flat = [t for tr in trace_sets for t in tr]
        add("unit_norm", n, d, check_unit_norm(flat))
        for name, margin in check_gap_inequalities(flat).items():
            add(name, n, d, margin)
        add("v_identity", n, d, check_v_identity(flat))

        # single-step contraction on a gaussian and a skewed state
        rng = rng_from(derive_seed(master, "battery_single", n, d))
        states = [theory.random_unit_state(d, n, rng),
                  theory.random_unit_state(d, n, rng,
                                           spectrum=theory.random_unit_spectrum(n, rng))]
        margin = min(theory.verify_single_step(H, 200, rng).margin for H in states)
        add("single_step", n, d, margin)

    # gram concentration at the reference pair
    rng = rng_from(derive_seed(master, "battery_gram"))
    H = theory.random_unit_state(256, 4, rng)
    gc = theory.verify_gram_concentration(H, 300, rng)
    add("gram_concentration", 4, 256, gc.concentration.margin)
    add("gram_diag_matches_p", 4, 256, gc.diag_margin)
    add("gram_offdiag_zero", 4, 256, gc.offdiag_margin)

    # contraction center + p-vector diagnostics on random spectra
    for n in (2, 4, 8):
        rng = rng_from(derive_seed(master, "battery_center", n))
        center = np.inf
        quad_mc = np.inf
        p_sum = np.inf
        p_mono = np.inf
        for _ in range(50):
            s = theory.random_unit_spectrum(n, rng)
            rep = theory.verify_contraction_center(s, n)
            center = min(center, rep.loose.margin, rep.tight.margin)
            pq = theory.p_vector_quadrature(s)
            p_sum = min(p_sum, 1e-6 - abs(pq.values.sum() - 1.0))
            p_mono = min(p_mono, float(np.min(-np.diff(pq.values))) + 1e-12)
        for _ in range(10):
            s = theory.random_unit_spectrum(n, rng)
            pq = theory.p_vector_quadrature(s)
            pm = theory.p_vector_montecarlo(s, 100_000, rng)
            # 4 sigma per component: ~100 comparisons across the battery, so a
            # 3 sigma slack would trip on chance alone
            quad_mc = min(quad_mc, float(np.min(
                4.0 * pm.std_errors - np.abs(pq.values - pm.values))))
        add("contraction_center", n, 0, center)
        add("p_sum_one", n, 0, p_sum)
        add("p_monotone", n, 0, p_mono)
        add("quadrature_vs_mc", n, 0, quad_mc)
        add("g_convexity", n, 0, theory.g_convexity_scan(n) + 1e-6)

    # assumption-free stability of the running product average
    seeds = [derive_seed(master, "battery_stability", i) for i in range(10)]

    def one(seed):
        config = ChainConfig(d=256, n=4, depth=100, seed=seed)
        return simulate_chain(config)

    by_seed = _map_tasks(one, seeds, threads)
    stab = theory.unconditional_stability([by_seed[s] for s in seeds], 256)
    add("unconditional_stability", 4, 256,
        float(np.min(stab.rhs + 3.0 * stab.std_errors - stab.lhs)))

    failures = [name for name, margin in margins.items() if margin < 0.0]
    return BatteryResult(records=records, margins=margins, failures=failures,
                         summary=f"theory battery: {len(margins)} checks, "
                                 f"{len(failures)} failures")
