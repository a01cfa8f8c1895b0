"""Denoise one noisy instance end to end and localize its tones.

Builds the standard three-tone signal (M = 20, so N = 81 samples) behind
a random Rademacher subspace of dimension 4, adds complex Gaussian noise
at sigma = 0.1, runs the ADMM solver, and reads the tone locations off
the residual dual polynomial.  At this noise level some seeds grow an
extra low-amplitude atom whose dual peak also touches the threshold;
downstream users filter those by fitted amplitude.
"""

import numpy as np

from modwave.certificate import localize, residual_certificate
from modwave.model import (
    GroundTruth, STREAM_WAVEFORM, generate_waveforms, make_instance, split_seed,
)
from modwave.solver import DenoiseProblem, regularization_lambda, solve_admm

SEED = 11

truth = GroundTruth(
    freqs=np.array([0.1, 0.15, 0.5]),
    amps=np.array([1.0, 2.0, 3.0]),
    waveform_coeffs=generate_waveforms(3, 4, split_seed(SEED, STREAM_WAVEFORM)))
inst = make_instance(20, truth, 0.1, SEED)

lam = regularization_lambda(0.1, inst.subspace, eta=0.5)
problem = DenoiseProblem(y=inst.noisy, subspace=inst.subspace, lam=lam)
solution = solve_admm(problem)

mse = float(np.mean(np.abs(solution.x_hat - inst.clean) ** 2))
print(f"converged: {solution.converged} after {solution.iterations} iterations")
print(f"MSE {mse:.3e} against noise power sigma^2 = 1.0e-02; the payoff "
      f"below is gridless structure, not just energy removal")

peaks = localize(residual_certificate(problem, solution), threshold=0.99)
print("recovered tones (tau, strength):")
for tau, strength in peaks:
    err = min(abs(tau - t) % 1 for t in truth.freqs)
    err = min(err, 1 - err)
    print(f"  tau = {tau:.6f}  strength = {strength:.3f}  error = {err:.2e}")
