"""Simulation-study harness, Monte-Carlo oracles and empirical diagnostics.

``run_study`` reproduces the bias/MSE experiments: simulate a field on a
fixed design, fit with one or more estimators, aggregate.  Everything is
seeded through derived streams, so a study is a pure function of its spec.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .correlation import CorrelationModel
from .errors import DataError, NonConvergenceError, NoPairsError
from .estimate import FieldData, FitConfig, OptimizerConfig, PairWeights, fit_by_method
from .locations import perturbed_grid, space_time_product, uniform_sites
from .models import PoissonFieldModel, ZipFieldModel
from .rng import SeedSpec
from .simulate import simulate_poisson_field, simulate_zip_field

__all__ = [
    "StudySpec",
    "StudyReport",
    "run_study",
    "OracleTable",
    "simulate_pair_counts",
    "mc_bivariate_oracle",
    "SemivariogramResult",
    "empirical_semivariogram",
]


@dataclass(frozen=True)
class StudySpec:
    """Declarative description of one simulation experiment."""

    scenario: str
    model: dict
    grid: dict
    weights: dict
    methods: tuple
    n_replicates: int
    seed: int
    fit: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_replicates < 2:
            raise ValueError("a study needs at least 2 replicates")
        if not self.methods:
            raise ValueError("methods must be nonempty")
        object.__setattr__(self, "methods", tuple(self.methods))

    @classmethod
    def from_dict(cls, d):
        return cls(
            scenario=d["scenario"],
            model=d["model"],
            grid=d["grid"],
            weights=d["weights"],
            methods=tuple(d["methods"]),
            n_replicates=int(d["n_replicates"]),
            seed=int(d["seed"]),
            fit=d.get("fit", {}),
        )

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "model": self.model,
            "grid": self.grid,
            "weights": self.weights,
            "methods": list(self.methods),
            "n_replicates": self.n_replicates,
            "seed": self.seed,
            "fit": self.fit,
        }


@dataclass
class StudyReport:
    scenario: str
    methods: tuple
    param_names: list
    true_params: dict
    bias: dict
    mse: dict
    estimates: dict
    n_failed: dict
    runtime: dict
    n_replicates: int

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "methods": list(self.methods),
            "param_names": self.param_names,
            "true_params": self.true_params,
            "bias": self.bias,
            "mse": self.mse,
            "n_failed": self.n_failed,
            "runtime_seconds": self.runtime,
            "n_replicates": self.n_replicates,
            "estimates": {m: np.asarray(v).tolist() for m, v in self.estimates.items()},
        }


def _build_locations(grid, seed):
    kind = grid.get("type", "perturbed")
    if kind == "perturbed":
        return perturbed_grid(
            int(grid.get("n_per_side", 15)),
            float(grid.get("spacing", 0.05)),
            float(grid.get("jitter", 0.015)),
            seed,
        )
    if kind == "uniform":
        return uniform_sites(int(grid["n_sites"]), seed)
    if kind == "uniform_spacetime":
        sites = uniform_sites(int(grid["n_sites"]), seed)
        n_times = int(grid.get("n_times", 10))
        step = float(grid.get("time_step", 0.25))
        return space_time_product(sites, np.arange(n_times) * step)
    raise DataError(f"unknown grid type {kind!r}")


def _true_param_dict(model_spec, corr):
    beta = [float(b) for b in model_spec["beta"]]
    out = {f"beta{i}": b for i, b in enumerate(beta)}
    out["alpha"] = corr.alpha
    if corr.alpha_t is not None:
        out["alpha_t"] = corr.alpha_t
    if model_spec.get("type") == "zip":
        out["theta"] = float(model_spec["theta"])
    return out


def run_study(spec):
    """Simulate-fit-aggregate loop over the study's replicates.

    Locations are generated once; covariates (when requested) are redrawn
    every replicate.  Replicate fits that fail are excluded and counted.
    Deterministic given the spec (including its seed).
    """
    seed = SeedSpec(spec.seed)
    locs = _build_locations(spec.grid, seed.child("locs"))
    n = len(locs)
    mspec = spec.model
    corr = CorrelationModel.from_dict(mspec["corr"])
    beta = np.asarray(mspec["beta"], dtype=float)
    n_cov = int(mspec.get("n_covariates", 0))
    if beta.shape[0] != 1 + n_cov:
        raise DataError("beta length must be 1 + n_covariates")
    t = float(mspec.get("t", 1.0))
    is_zip = mspec.get("type") == "zip"
    corr_b = CorrelationModel.from_dict(mspec["corr_b"]) if is_zip else None
    theta = float(mspec["theta"]) if is_zip else None
    weights = PairWeights(
        xi_s=float(spec.weights["xi_s"]),
        xi_t=(
            float(spec.weights["xi_t"])
            if spec.weights.get("xi_t") is not None
            else None
        ),
    )
    opt_kw = spec.fit.get("optimizer", {})
    config = FitConfig(
        family=corr.family,
        fixed=tuple(spec.fit.get("fixed", ("nugget",))),
        optimizer=OptimizerConfig(**opt_kw) if opt_kw else OptimizerConfig(),
        t=t,
    )
    true_params = _true_param_dict(mspec, corr)

    estimates = {m: [] for m in spec.methods}
    n_failed = {m: 0 for m in spec.methods}
    runtime = {m: 0.0 for m in spec.methods}
    param_names = None

    for rep in range(spec.n_replicates):
        if n_cov > 0:
            u = seed.generator("cov", rep).uniform(0.0, 1.0, size=(n, n_cov))
            design = np.column_stack([np.ones(n), u])
        else:
            design = np.ones((n, 1))
        base = PoissonFieldModel(beta, design, corr, t)
        if is_zip:
            model = ZipFieldModel(base, theta, corr_b)
            y = simulate_zip_field(model, locs, seed.child("sim", rep))
        else:
            y = simulate_poisson_field(base, locs, seed.child("sim", rep))
        data = FieldData(locs, y, design)
        for method in spec.methods:
            start = time.perf_counter()
            try:
                fit = fit_by_method(method, data, weights, config=config)
            except (NonConvergenceError, NoPairsError, np.linalg.LinAlgError):
                n_failed[method] += 1
                runtime[method] += time.perf_counter() - start
                continue
            runtime[method] += time.perf_counter() - start
            if not fit.converged:
                n_failed[method] += 1
                continue
            pv = fit.estimate
            row = list(pv.beta) + [pv.alpha]
            names = [f"beta{i}" for i in range(pv.beta.shape[0])] + ["alpha"]
            if pv.alpha_t is not None:
                row.append(pv.alpha_t)
                names.append("alpha_t")
            if pv.theta is not None:
                row.append(pv.theta)
                names.append("theta")
            estimates[method].append(row)
            param_names = names

    if param_names is None:
        raise NonConvergenceError("every replicate failed for every method")
    bias = {}
    mse = {}
    for m in spec.methods:
        rows = np.asarray(estimates[m])
        if rows.size == 0:
            bias[m] = {}
            mse[m] = {}
            continue
        bias[m] = {}
        mse[m] = {}
        for k, name in enumerate(param_names):
            if name not in true_params:
                continue
            err = rows[:, k] - true_params[name]
            bias[m][name] = float(np.mean(err))
            mse[m][name] = float(np.mean(err**2))
    return StudyReport(
        scenario=spec.scenario,
        methods=spec.methods,
        param_names=param_names,
        true_params=true_params,
        bias=bias,
        mse=mse,
        estimates={m: np.asarray(v) for m, v in estimates.items()},
        n_failed=n_failed,
        runtime=runtime,
        n_replicates=spec.n_replicates,
    )


# ---------------------------------------------------------------------------
# exact-construction pair oracle
# ---------------------------------------------------------------------------

def simulate_pair_counts(lambda_i, lambda_j, rho, n_reps, seed):
    """Exact renewal construction for a single pair of sites, vectorized
    over replicates.  Returns ``(n_i, n_j)`` count arrays."""
    if not abs(rho) < 1.0:
        raise ValueError("underlying correlation must satisfy |rho| < 1")
    seed = SeedSpec.coerce(seed)
    s_i = np.zeros(n_reps)
    s_j = np.zeros(n_reps)
    n_i = np.zeros(n_reps, dtype=np.int64)
    n_j = np.zeros(n_reps, dtype=np.int64)
    comp = math.sqrt(1.0 - rho * rho)
    max_copies = int(10.0 * max(lambda_i, lambda_j)) + 200
    copy = 0
    while True:
        rng = seed.generator("pair", copy)
        g1i = rng.standard_normal(n_reps)
        g1j = rho * g1i + comp * rng.standard_normal(n_reps)
        g2i = rng.standard_normal(n_reps)
        g2j = rho * g2i + comp * rng.standard_normal(n_reps)
        s_i += (g1i * g1i + g2i * g2i) / (2.0 * lambda_i)
        s_j += (g1j * g1j + g2j * g2j) / (2.0 * lambda_j)
        ai = s_i <= 1.0
        aj = s_j <= 1.0
        n_i += ai
        n_j += aj
        if not (ai.any() or aj.any()):
            return n_i, n_j
        copy += 1
        if copy > max_copies:
            raise NonConvergenceError("pair-oracle renewal guard tripped")


@dataclass
class OracleTable:
    freq: np.ndarray
    se: np.ndarray
    n_reps: int
    corr: float


def mc_bivariate_oracle(lambda_i, lambda_j, rho, n_reps, seed):
    """Empirical joint pmf table with per-cell binomial standard errors,
    from exact-construction pair simulation.  Intended for n_reps >= 1e5."""
    n_i, n_j = simulate_pair_counts(lambda_i, lambda_j, rho, n_reps, seed)
    tab = np.zeros((int(n_i.max()) + 1, int(n_j.max()) + 1))
    np.add.at(tab, (n_i, n_j), 1.0)
    freq = tab / n_reps
    se = np.sqrt(np.maximum(freq * (1.0 - freq), 0.0) / n_reps)
    corr = float(np.corrcoef(n_i, n_j)[0, 1])
    return OracleTable(freq=freq, se=se, n_reps=n_reps, corr=corr)


# ---------------------------------------------------------------------------
# empirical semivariogram
# ---------------------------------------------------------------------------

@dataclass
class SemivariogramResult:
    centers: np.ndarray
    semivariance: np.ndarray
    n_pairs: np.ndarray
    valid: np.ndarray


def empirical_semivariogram(data, bin_edges, values=None):
    """Classical (Matheron) binned semivariance estimator:

        gamma(bin) = mean over pairs in the bin of (z_i - z_j)^2 / 2.

    ``data`` is a FieldData bundle (counts used as values) or a LocationSet
    with explicit ``values``.  Bins with fewer than 2 pairs are flagged
    invalid (semivariance NaN).
    """
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or edges.shape[0] < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin_edges must be increasing with at least two entries")
    if isinstance(data, FieldData):
        locs = data.locs
        values = data.counts.astype(float) if values is None else np.asarray(values, dtype=float)
    else:
        locs = data
        if values is None:
            raise DataError("values are required when passing a bare LocationSet")
        values = np.asarray(values, dtype=float)
    if values.shape[0] != len(locs):
        raise DataError("values must align with locations")
    dist = locs.distance_matrix()
    iu = np.triu_indices(len(locs), k=1)
    d = dist[iu]
    sq = 0.5 * (values[iu[0]] - values[iu[1]]) ** 2
    which = np.digitize(d, edges) - 1
    n_bins = edges.shape[0] - 1
    inside = (which >= 0) & (which < n_bins)
    counts = np.bincount(which[inside], minlength=n_bins)
    sums = np.bincount(which[inside], weights=sq[inside], minlength=n_bins)
    valid = counts >= 2
    gamma = np.full(n_bins, np.nan)
    gamma[valid] = sums[valid] / counts[valid]
    centers = 0.5 * (edges[:-1] + edges[1:])
    return SemivariogramResult(
        centers=centers, semivariance=gamma, n_pairs=counts, valid=valid
    )
