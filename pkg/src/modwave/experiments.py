"""Monte Carlo scaling studies over noise level, sample count, tone count,
and subspace dimension.

A sweep varies one parameter over a grid of values, runs independently
seeded trials of the full denoising pipeline at each value, and aggregates
per-value error statistics.  Least-squares fits against the predicted
rates (log(N)/N, sigma^2, J log J, K log K) quantify how well the measured
error follows them.
"""

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import (
    GroundTruth,
    STREAM_FREQS,
    STREAM_WAVEFORM,
    generate_grid_freqs,
    generate_waveforms,
    make_instance,
    split_seed,
    wrap_distance,
)
from .solver import AdmmConfig, DenoiseProblem, oracle_lsq, regularization_lambda, solve_admm
from .certificate import localize, residual_certificate

__all__ = [
    "SWEEP_VARIABLES",
    "FixedParams",
    "SweepConfig",
    "ExperimentRecord",
    "AggregatePoint",
    "ScalingFit",
    "run_trial",
    "sweep_records",
    "aggregate",
    "sweep",
    "fit_scaling",
    "oracle_comparison",
    "write_trial_csv",
    "write_aggregate_csv",
    "write_fit_json",
]

SWEEP_VARIABLES = ("N", "sigma", "J", "K")

# stable words mixed into trial seeds so that sweeps over different
# variables never share noise streams even at coinciding numeric values
_VARIABLE_WORD = {"N": 1, "sigma": 2, "J": 3, "K": 4}

# fallback regularizer for noiseless trials, as a multiple of ||B||_F
# (the noise-calibrated formula degenerates to zero at sigma = 0)
_NOISELESS_LAMBDA_FACTOR = 1e-6

# peak threshold for per-trial frequency localization; the residual dual
# polynomial saturates near 1 at active tones of a converged solve
_LOCALIZE_THRESHOLD = 0.99


@dataclass(frozen=True)
class FixedParams:
    """Parameters held constant across a sweep.

    The swept variable overrides the matching field at each grid value.
    `freqs` is the tone layout used in fixed-frequency mode; `amps` of
    None means tone j carries amplitude j+1 (1-based linear ramp).
    """

    M: int = 20
    J: int = 3
    K: int = 4
    sigma: float = 0.1
    eta: float = 0.5
    trials: int = 50
    base_seed: int = 0
    freqs: Tuple[float, ...] = (0.1, 0.15, 0.5)
    amps: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class SweepConfig:
    variable: str
    values: Tuple[float, ...]
    fixed: FixedParams = field(default_factory=FixedParams)
    freqs_mode: str = "fixed"  # "fixed": use fixed.freqs; "grid": draw per trial with min separation 1/M

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if self.variable not in SWEEP_VARIABLES:
            raise ValueError(f"variable must be one of {SWEEP_VARIABLES}, got {self.variable!r}")
        if not self.values:
            raise ValueError("values must be nonempty")
        diffs = np.diff(self.values)
        if len(diffs) and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValueError("values must be strictly monotone")
        if self.freqs_mode not in ("fixed", "grid"):
            raise ValueError(f"freqs_mode must be 'fixed' or 'grid', got {self.freqs_mode!r}")
        if self.fixed.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.fixed.eta <= 0:
            raise ValueError("eta must be positive")
        if self.variable in ("N", "J", "K"):
            for v in self.values:
                if v != int(v) or v < 1:
                    raise ValueError(f"{self.variable} values must be positive integers")
        if self.variable == "N":
            for v in self.values:
                if (int(v) - 1) % 4 != 0 or v < 5:
                    raise ValueError(f"N value {int(v)} is not of the form 4M+1")
        if self.variable == "sigma" and any(v < 0 for v in self.values):
            raise ValueError("sigma values must be nonnegative")
        if self.variable == "J" and self.freqs_mode != "grid":
            raise ValueError("a J sweep needs freqs_mode='grid' (fixed tone lists pin J)")
        if self.freqs_mode == "fixed" and self.variable != "J":
            if len(self.fixed.freqs) != self.fixed.J:
                raise ValueError(
                    f"fixed.freqs has {len(self.fixed.freqs)} tones but J = {self.fixed.J}")
        if self.fixed.amps is not None:
            if self.variable == "J":
                raise ValueError("a J sweep ramps amplitudes (tone j carries j); "
                                 "fixed.amps does not apply")
            if len(self.fixed.amps) != self.fixed.J:
                raise ValueError(
                    f"fixed.amps has {len(self.fixed.amps)} entries but J = {self.fixed.J}")


@dataclass(frozen=True)
class ExperimentRecord:
    config: SweepConfig  # single-value snapshot of the point this trial belongs to
    trial_index: int
    seed: int
    mse: float
    converged: bool
    iterations: int
    localization_errors: Tuple[float, ...]
    wall_time: float


@dataclass(frozen=True)
class AggregatePoint:
    value: float
    mean_mse: float
    std_mse: float
    scaled_mse: float


@dataclass(frozen=True)
class ScalingFit:
    predictor: str
    slope: float
    intercept: float
    r_squared: float


def _trial_seed(config: SweepConfig, trial_index: int) -> int:
    # the swept value enters as the bit pattern of its float64
    # representation, so e.g. sigma = 0.025 seeds reproducibly
    value_word = int(np.float64(config.values[0]).view(np.uint64))
    return split_seed(config.fixed.base_seed, _VARIABLE_WORD[config.variable],
                      value_word, trial_index)


def _resolve_point(config: SweepConfig):
    """Effective (M, J, K, sigma) at this config's single grid value."""
    f = config.fixed
    v = config.values[0]
    M, J, K, sigma = f.M, f.J, f.K, f.sigma
    if config.variable == "N":
        M = (int(v) - 1) // 4
    elif config.variable == "sigma":
        sigma = float(v)
    elif config.variable == "J":
        J = int(v)
    elif config.variable == "K":
        K = int(v)
    return M, J, K, sigma


def run_trial(config: SweepConfig, trial_index: int,
              admm: Optional[AdmmConfig] = None,
              localize_peaks: bool = False) -> ExperimentRecord:
    """One seeded trial at config's single grid value.

    config.values must hold exactly the one point this trial belongs to;
    sweep() slices its grid into such single-point configs.  Draws the
    subspace, waveforms, tone layout, and noise from per-purpose
    substreams of the trial seed, solves with the noise-calibrated
    regularizer (or the tiny noiseless fallback when sigma = 0), and
    records the per-sample squared error against the clean signal.
    Solver non-convergence is recorded in the flag, not raised.
    """
    if len(config.values) != 1:
        raise ValueError("run_trial needs a single-value config; use sweep() for grids")
    M, J, K, sigma = _resolve_point(config)
    seed = _trial_seed(config, trial_index)

    if config.freqs_mode == "grid":
        freqs = generate_grid_freqs(J, M, split_seed(seed, STREAM_FREQS))
        min_sep = 1.0 / M
    else:
        freqs = np.asarray(config.fixed.freqs, dtype=float)
        min_sep = None
    if config.fixed.amps is not None:
        amps = np.asarray(config.fixed.amps, dtype=float)
    else:
        amps = np.arange(1, J + 1, dtype=float)
    H = generate_waveforms(J, K, split_seed(seed, STREAM_WAVEFORM))
    truth = GroundTruth(freqs=freqs, amps=amps, waveform_coeffs=H, min_sep=min_sep)

    t0 = time.perf_counter()
    inst = make_instance(M, truth, sigma, seed)
    if sigma > 0:
        lam = regularization_lambda(sigma, inst.subspace, config.fixed.eta)
    else:
        lam = _NOISELESS_LAMBDA_FACTOR * inst.subspace.frob_norm
    problem = DenoiseProblem(y=inst.noisy, subspace=inst.subspace, lam=lam)
    solution = solve_admm(problem, admm)
    mse = float(np.mean(np.abs(solution.x_hat - inst.clean) ** 2))

    loc_errors: Tuple[float, ...] = ()
    if localize_peaks:
        cert = residual_certificate(problem, solution)
        peaks = localize(cert, _LOCALIZE_THRESHOLD)
        loc_errors = tuple(
            min((wrap_distance(t, tau) for tau, _ in peaks), default=math.inf)
            for t in freqs)
    wall = time.perf_counter() - t0

    return ExperimentRecord(config=config, trial_index=trial_index, seed=seed,
                            mse=mse, converged=solution.converged,
                            iterations=solution.iterations,
                            localization_errors=loc_errors, wall_time=wall)


def _run_trial_star(args):
    return run_trial(*args)


def sweep_records(config: SweepConfig, admm: Optional[AdmmConfig] = None,
                  jobs: Optional[int] = 1,
                  localize_peaks: bool = False) -> List[ExperimentRecord]:
    """All trials of the sweep, ordered by (value position, trial index).

    jobs > 1 distributes trials across processes; the returned order (and
    therefore every aggregate) is independent of completion order.
    """
    points = [replace(config, values=(v,)) for v in config.values]
    tasks = [(pc, t, admm, localize_peaks)
             for pc in points for t in range(config.fixed.trials)]
    if jobs is None:
        jobs = os.cpu_count() or 1
    if jobs <= 1 or len(tasks) == 1:
        return [run_trial(*task) for task in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_trial_star, tasks))


def _scaled_mse(variable: str, value: float, mean_mse: float) -> float:
    """Per-figure normalization: constant when the predicted rate is exact."""
    if variable == "N":
        return mean_mse * value / math.log(value)
    if variable == "sigma":
        return mean_mse / value ** 2
    # J log J and K log K, with the scaler clamped at the log(1) = 0 point
    return mean_mse / (value * max(math.log(value), 1.0))


def aggregate(config: SweepConfig, records: Sequence[ExperimentRecord]) -> List[AggregatePoint]:
    records = sorted(records, key=lambda r: (config.values.index(r.config.values[0]),
                                             r.trial_index))
    out = []
    for v in config.values:
        mses = np.array([r.mse for r in records if r.config.values[0] == v])
        mean = float(np.mean(mses))
        std = float(np.std(mses, ddof=1)) if len(mses) > 1 else 0.0
        out.append(AggregatePoint(value=float(v), mean_mse=mean, std_mse=std,
                                  scaled_mse=_scaled_mse(config.variable, float(v), mean)))
    return out


def sweep(config: SweepConfig, admm: Optional[AdmmConfig] = None,
          jobs: Optional[int] = 1,
          localize_peaks: bool = False) -> List[AggregatePoint]:
    """Mean and standard deviation of the trial MSE at each grid value.

    Deterministic given base_seed: trial seeds depend only on
    (base_seed, variable, value, trial index).
    """
    return aggregate(config, sweep_records(config, admm, jobs, localize_peaks))


_PREDICTORS = {
    "log(N)/N": lambda v: math.log(v) / v,
    "sigma^2": lambda v: v ** 2,
    "J*log(J)": lambda v: v * max(math.log(v), 1.0),
    "K*log(K)": lambda v: v * max(math.log(v), 1.0),
}


def predictor_for(variable: str) -> str:
    """Name of the predicted rate for a sweep variable."""
    return {"N": "log(N)/N", "sigma": "sigma^2", "J": "J*log(J)", "K": "K*log(K)"}[variable]


def fit_scaling(points: Sequence, predictor: str) -> ScalingFit:
    """Ordinary least squares of mean MSE against a predicted rate.

    points are AggregatePoint-like (value, mean_mse, ...) rows.  The
    J log J and K log K predictors clamp the log factor at 1 so the
    value-1 point stays finite.  Needs at least 4 points and a
    non-constant predictor.
    """
    if predictor not in _PREDICTORS:
        raise ValueError(f"unknown predictor {predictor!r}; have {sorted(_PREDICTORS)}")
    if len(points) < 4:
        raise ValueError("need at least 4 points for a scaling fit")
    values = np.array([p[0] if isinstance(p, tuple) else p.value for p in points], dtype=float)
    means = np.array([p[1] if isinstance(p, tuple) else p.mean_mse for p in points], dtype=float)
    x = np.array([_PREDICTORS[predictor](v) for v in values])
    if np.ptp(x) == 0:
        raise ValueError("degenerate predictor: all points map to the same abscissa")
    slope, intercept = np.polyfit(x, means, 1)
    resid = means - (slope * x + intercept)
    ss_tot = float(np.sum((means - means.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid ** 2)) / ss_tot
    return ScalingFit(predictor=predictor, slope=float(slope), intercept=float(intercept),
                      r_squared=min(max(r2, 0.0), 1.0))


def oracle_comparison(config: SweepConfig):
    """Mean MSE of least squares that knows the true tones, vs sigma^2 KJ/N.

    Runs the same seeded instances a sweep at this config would, but fits
    only the waveform coefficients.  Returns (mean_oracle_mse, theory,
    ratio); at sigma = 0 both sides vanish and the ratio is 1 by
    convention.
    """
    if len(config.values) != 1:
        raise ValueError("oracle_comparison needs a single-value config")
    M, J, K, sigma = _resolve_point(config)
    N = 4 * M + 1
    mses = []
    for t in range(config.fixed.trials):
        mses.append(_oracle_trial(config, t))
    mean = float(np.mean(mses))
    theory = sigma ** 2 * K * J / N
    ratio = 1.0 if theory == 0 else mean / theory
    return mean, theory, ratio


def _oracle_trial(config: SweepConfig, trial_index: int) -> float:
    M, J, K, sigma = _resolve_point(config)
    seed = _trial_seed(config, trial_index)
    if config.freqs_mode == "grid":
        freqs = generate_grid_freqs(J, M, split_seed(seed, STREAM_FREQS))
    else:
        freqs = np.asarray(config.fixed.freqs, dtype=float)
    if config.fixed.amps is not None:
        amps = np.asarray(config.fixed.amps, dtype=float)
    else:
        amps = np.arange(1, J + 1, dtype=float)
    H = generate_waveforms(J, K, split_seed(seed, STREAM_WAVEFORM))
    truth = GroundTruth(freqs=freqs, amps=amps, waveform_coeffs=H)
    inst = make_instance(M, truth, sigma, seed)
    _, mse = oracle_lsq(inst.noisy, inst.subspace, freqs, inst.clean)
    return mse


# ---------------------------------------------------------------------------
# CSV / JSON serialization

def write_trial_csv(path, config: SweepConfig, records: Sequence[ExperimentRecord]) -> None:
    """Rows `variable,value,trial,seed,mse,converged,iters,wall_time`."""
    with open(path, "w") as fh:
        fh.write("variable,value,trial,seed,mse,converged,iters,wall_time\n")
        for r in records:
            fh.write(f"{config.variable},{r.config.values[0]!r},{r.trial_index},"
                     f"{r.seed},{r.mse!r},{int(r.converged)},{r.iterations},"
                     f"{r.wall_time!r}\n")


def write_aggregate_csv(path, points: Sequence[AggregatePoint]) -> None:
    """Rows `value,mean_mse,std_mse,scaled_mse`.

    Floats are written in shortest round-trip form, so the same points
    always produce byte-identical files.
    """
    with open(path, "w") as fh:
        fh.write("value,mean_mse,std_mse,scaled_mse\n")
        for p in points:
            fh.write(f"{p.value!r},{p.mean_mse!r},{p.std_mse!r},{p.scaled_mse!r}\n")


def write_fit_json(path, fit: ScalingFit) -> None:
    import json
    with open(path, "w") as fh:
        json.dump({"predictor": fit.predictor, "slope": fit.slope,
                   "intercept": fit.intercept, "r_squared": fit.r_squared}, fh, indent=1)
        fh.write("\n")
