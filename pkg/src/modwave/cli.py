"""Command-line pipeline: generate instances, denoise, localize tones,
certify tone layouts, run parameter sweeps, and compare against the
known-tones oracle.

Every command writes a manifest next to its outputs recording the full
resolved configuration, seeds, tool version, and SHA-256 digests of all
files read and written.  Exit codes: 0 success, 2 usage or config error,
3 solver non-convergence (output still written), 4 certificate failure.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from types import SimpleNamespace
from typing import Dict, Optional

import numpy as np

from . import __version__
from .model import (
    GroundTruth,
    STREAM_WAVEFORM,
    generate_waveforms,
    make_instance,
    read_signal_csv,
    read_subspace_csv,
    read_truth_json,
    split_seed,
    write_signal_csv,
    write_subspace_csv,
    write_truth_json,
)
from .solver import (
    AdmmConfig,
    DenoiseProblem,
    read_solution_json,
    regularization_lambda,
    solve_admm,
    write_solution_json,
)
from .certificate import (
    construct_certificate,
    localize,
    residual_certificate,
    write_certificate_report,
)
from .experiments import (
    FixedParams,
    SweepConfig,
    aggregate,
    fit_scaling,
    oracle_comparison,
    predictor_for,
    sweep_records,
    write_aggregate_csv,
    write_fit_json,
    write_trial_csv,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NONCONVERGED = 3
EXIT_CERTIFICATE = 4

SEED_ENV_VAR = "MODWAVE_SEED"


@dataclass
class RunManifest:
    command: str
    config: dict
    seeds: dict
    tool_version: str = __version__
    started: str = ""
    finished: str = ""
    inputs: Dict[str, str] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _digests(paths) -> Dict[str, str]:
    return {str(p): _sha256(p) for p in paths}


def _write_manifest(path, manifest: RunManifest) -> None:
    with open(path, "w") as fh:
        json.dump(asdict(manifest), fh, indent=1)
        fh.write("\n")


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def _env_seed() -> Optional[int]:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def _load_config(path) -> dict:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValueError(f"config {path} is not valid JSON: {e}")
    if not isinstance(obj, dict):
        raise ValueError(f"config {path} must be a JSON object")
    return obj


def _require(config: dict, name: str, kind, check=None, what: str = ""):
    if name not in config:
        raise ValueError(f"config missing field {name!r}")
    value = config[name]
    try:
        value = kind(value)
    except (TypeError, ValueError):
        raise ValueError(f"config field {name!r} has the wrong type")
    if check is not None and not check(value):
        raise ValueError(f"config field {name!r} is invalid{': ' + what if what else ''}")
    return value


# ---------------------------------------------------------------------------
# commands

def cmd_gen(args) -> int:
    """Write signal, clean, subspace, and truth files for a generated instance."""
    config = _load_config(args.config)
    M = _require(config, "M", int, lambda v: v >= 1, "M >= 1")
    K = _require(config, "K", int, lambda v: v >= 1, "K >= 1")
    sigma = _require(config, "sigma", float, lambda v: v >= 0, "sigma >= 0")
    seed = _require(config, "seed", int)
    freqs = _require(config, "freqs", list, lambda v: len(v) >= 1, "at least one tone")
    amps = _require(config, "amps", list, lambda v: len(v) == len(freqs),
                    "one amplitude per tone")
    freqs = [float(t) for t in freqs]
    amps = [float(c) for c in amps]
    env = _env_seed()
    if env is not None:
        seed = env

    J = len(freqs)
    H = generate_waveforms(J, K, split_seed(seed, STREAM_WAVEFORM))
    truth = GroundTruth(freqs=np.array(freqs), amps=np.array(amps), waveform_coeffs=H)
    inst = make_instance(M, truth, sigma, seed)

    started = _now()
    out = args.out_dir
    os.makedirs(out, exist_ok=True)
    signal_path = os.path.join(out, "signal.csv")
    clean_path = os.path.join(out, "clean.csv")
    subspace_path = os.path.join(out, "subspace.csv")
    truth_path = os.path.join(out, "truth.json")
    write_signal_csv(signal_path, inst.noisy, M)
    write_signal_csv(clean_path, inst.clean, M)
    write_subspace_csv(subspace_path, inst.subspace)
    write_truth_json(truth_path, truth, M, seed)

    manifest = RunManifest(
        command="gen",
        config={**config, "seed": seed, "seed_overridden": env is not None},
        seeds={"seed": seed},
        started=started, finished=_now(),
        inputs=_digests([args.config]),
        outputs=_digests([signal_path, clean_path, subspace_path, truth_path]))
    _write_manifest(os.path.join(out, "manifest.json"), manifest)
    return EXIT_OK


def cmd_denoise(args) -> int:
    """Solve the regularized fit and write the solution file."""
    if args.lam is not None and (args.sigma is not None or args.eta is not None):
        return _fail("--lambda excludes --sigma and --eta")
    if args.lam is None and args.sigma is None:
        return _fail("need either --sigma (optionally with --eta) or --lambda")
    if args.lam is not None and args.lam <= 0:
        return _fail("--lambda must be positive")

    y, M = read_signal_csv(args.signal)
    subspace = read_subspace_csv(args.subspace)
    if subspace.n_samples != y.shape[0]:
        return _fail(f"signal has {y.shape[0]} samples but subspace has "
                     f"{subspace.n_samples} rows")
    if args.lam is not None:
        lam = float(args.lam)
    else:
        eta = 0.5 if args.eta is None else float(args.eta)
        lam = regularization_lambda(float(args.sigma), subspace, eta)
        if lam <= 0:
            return _fail("--sigma 0 gives a zero regularizer; pass --lambda instead")

    started = _now()
    problem = DenoiseProblem(y=y, subspace=subspace, lam=lam)
    solution = solve_admm(problem, AdmmConfig(max_iters=args.max_iters))
    write_solution_json(args.out, solution, lam)

    manifest = RunManifest(
        command="denoise",
        config={"signal": str(args.signal), "subspace": str(args.subspace),
                "sigma": args.sigma, "eta": args.eta, "lambda": lam,
                "max_iters": args.max_iters},
        seeds={},
        started=started, finished=_now(),
        inputs=_digests([args.signal, args.subspace]),
        outputs=_digests([args.out]))
    _write_manifest(str(args.out) + ".manifest.json", manifest)
    if not solution.converged:
        print(f"warning: solver stopped at {solution.iterations} iterations "
              f"without meeting tolerances (residuals "
              f"{solution.primal_residual:.2e}/{solution.dual_residual:.2e})",
              file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_localize(args) -> int:
    """Recover tone locations from a solved instance's residual polynomial."""
    y, _ = read_signal_csv(args.signal)
    subspace = read_subspace_csv(args.subspace)
    data = read_solution_json(args.solution)
    if "lambda" not in data:
        return _fail(f"solution file {args.solution} carries no 'lambda' field; "
                     "re-run denoise to produce one")
    if data["x_hat"].shape != y.shape:
        return _fail("solution length does not match the signal")

    started = _now()
    problem = DenoiseProblem(y=y, subspace=subspace, lam=float(data["lambda"]))
    cert = residual_certificate(problem, SimpleNamespace(x_hat=data["x_hat"]))
    peaks = localize(cert, args.threshold)
    payload = {"freqs": [{"tau": t, "strength": s} for t, s in peaks]}
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")

    manifest = RunManifest(
        command="localize",
        config={"signal": str(args.signal), "subspace": str(args.subspace),
                "solution": str(args.solution), "threshold": args.threshold},
        seeds={},
        started=started, finished=_now(),
        inputs=_digests([args.signal, args.subspace, args.solution]),
        outputs=_digests([args.out]))
    _write_manifest(str(args.out) + ".manifest.json", manifest)
    return EXIT_OK


def cmd_certify(args) -> int:
    """Construct an interpolating certificate for a tone layout and scan it."""
    truth, M, truth_seed = read_truth_json(args.truth)
    subspace = read_subspace_csv(args.subspace)
    if subspace.half_order != M:
        return _fail(f"truth declares M={M} but subspace has M={subspace.half_order}")
    if subspace.dim != truth.waveform_coeffs.shape[1]:
        return _fail("waveform dimension does not match subspace")

    started = _now()
    try:
        _, report = construct_certificate(truth, subspace)
    except ValueError as e:
        if "singular" in str(e):
            print(f"error: {e}", file=sys.stderr)
            return EXIT_CERTIFICATE
        raise
    write_certificate_report(args.out, report)

    manifest = RunManifest(
        command="certify",
        config={"truth": str(args.truth), "subspace": str(args.subspace)},
        seeds={"seed": truth_seed},
        started=started, finished=_now(),
        inputs=_digests([args.truth, args.subspace]),
        outputs=_digests([args.out]))
    _write_manifest(str(args.out) + ".manifest.json", manifest)
    if report.far_max >= 1.0:
        print(f"certificate failed: far-region maximum {report.far_max:.6f} >= 1",
              file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def _sweep_config_from(config: dict) -> SweepConfig:
    variable = _require(config, "variable", str)
    values = _require(config, "values", list, lambda v: len(v) >= 1, "nonempty")
    fixed_dict = dict(_require(config, "fixed", dict))
    known = {"M", "J", "K", "sigma", "eta", "trials", "base_seed", "freqs", "amps"}
    unknown = set(fixed_dict) - known
    if unknown:
        raise ValueError(f"config field 'fixed' has unknown entries {sorted(unknown)}")
    env = _env_seed()
    if env is not None:
        fixed_dict["base_seed"] = env
    if "freqs" in fixed_dict:
        fixed_dict["freqs"] = tuple(float(t) for t in fixed_dict["freqs"])
    if "amps" in fixed_dict and fixed_dict["amps"] is not None:
        fixed_dict["amps"] = tuple(float(c) for c in fixed_dict["amps"])
    fixed = FixedParams(**fixed_dict)
    return SweepConfig(variable=variable, values=tuple(values), fixed=fixed,
                       freqs_mode=config.get("freqs_mode", "fixed"))


def cmd_sweep(args) -> int:
    """Run a parameter sweep and write trial, aggregate, and fit files."""
    config = _load_config(args.config)
    sweep_config = _sweep_config_from(config)

    started = _now()
    os.makedirs(args.out_dir, exist_ok=True)
    records = sweep_records(sweep_config, jobs=args.jobs)
    points = aggregate(sweep_config, records)

    trials_path = os.path.join(args.out_dir, "trials.csv")
    aggregate_path = os.path.join(args.out_dir, "aggregate.csv")
    write_trial_csv(trials_path, sweep_config, records)
    write_aggregate_csv(aggregate_path, points)
    outputs = [trials_path, aggregate_path]
    if len(points) >= 4:
        fit_path = os.path.join(args.out_dir, "fit.json")
        write_fit_json(fit_path, fit_scaling(points, predictor_for(sweep_config.variable)))
        outputs.append(fit_path)

    manifest = RunManifest(
        command="sweep",
        config={**config, "fixed": {**config["fixed"],
                                    "base_seed": sweep_config.fixed.base_seed},
                "jobs": args.jobs},
        seeds={"base_seed": sweep_config.fixed.base_seed},
        started=started, finished=_now(),
        inputs=_digests([args.config]),
        outputs=_digests(outputs))
    _write_manifest(os.path.join(args.out_dir, "manifest.json"), manifest)
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Compare known-tones least squares against its predicted error rate."""
    config = _load_config(args.config)
    sweep_config = _sweep_config_from(config)
    if len(sweep_config.values) != 1:
        return _fail("oracle comparison needs a single-value config")

    started = _now()
    mean, theory, ratio = oracle_comparison(sweep_config)
    payload = {"mean_oracle_mse": mean, "theory": theory, "ratio": ratio,
               "trials": sweep_config.fixed.trials}
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")

    manifest = RunManifest(
        command="oracle",
        config={**config, "fixed": {**config["fixed"],
                                    "base_seed": sweep_config.fixed.base_seed}},
        seeds={"base_seed": sweep_config.fixed.base_seed},
        started=started, finished=_now(),
        inputs=_digests([args.config]),
        outputs=_digests([args.out]))
    _write_manifest(str(args.out) + ".manifest.json", manifest)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modwave",
        description="Gridless denoising of subspace-modulated complex exponentials.")
    parser.add_argument("--version", action="version", version=f"modwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a signal instance from a config file")
    p.add_argument("config", help="JSON with M, K, sigma, seed, freqs, amps")
    p.add_argument("--out-dir", default=".", help="directory for the generated files")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("denoise", help="solve the regularized fit for a signal")
    p.add_argument("signal")
    p.add_argument("subspace")
    p.add_argument("--sigma", type=float, default=None, help="noise level for the regularizer")
    p.add_argument("--eta", type=float, default=None, help="regularizer scale (default 0.5)")
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="explicit regularizer, excludes --sigma/--eta")
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--out", default="solution.json")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("localize", help="recover tones from a solved instance")
    p.add_argument("signal")
    p.add_argument("subspace")
    p.add_argument("solution", help="output of the denoise command")
    p.add_argument("--threshold", type=float, default=0.99,
                   help="peak threshold on the residual polynomial, in (0, 1)")
    p.add_argument("--out", default="freqs.json")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("certify", help="construct and scan a certificate for a tone layout")
    p.add_argument("truth", help="truth JSON as written by gen")
    p.add_argument("subspace")
    p.add_argument("--out", default="certificate.json")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="run a parameter sweep from a config file")
    p.add_argument("config", help="JSON with variable, values, fixed, freqs_mode")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, default=None,
                   help="worker processes (default: logical core count)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="known-tones least-squares comparison")
    p.add_argument("config", help="single-value sweep config JSON")
    p.add_argument("--out", default="oracle.json")
    p.set_defaults(func=cmd_oracle)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except FileNotFoundError as e:
        return _fail(str(e))
    except (ValueError, OSError) as e:
        return _fail(str(e))


if __name__ == "__main__":
    sys.exit(main())
