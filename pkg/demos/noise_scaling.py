"""Trace the MSE-versus-noise-power law on a reduced grid.

Sweeps sigma over four values with 8 trials each (the shipped config
demos/configs/sweep_sigma.json carries the full 10-value, 20-trial
version) and fits mean MSE against sigma^2.  The fit should come out
close to linear: R^2 well above 0.95.
"""

from modwave.experiments import (
    FixedParams, SweepConfig, fit_scaling, predictor_for, sweep,
)

config = SweepConfig(
    variable="sigma",
    values=(0.05, 0.1, 0.15, 0.2),
    fixed=FixedParams(M=20, J=3, K=4, trials=8, base_seed=20260816))

points = sweep(config)
print(f"{'sigma':>8} {'mean MSE':>12} {'MSE/sigma^2':>12}")
for p in points:
    print(f"{p.value:>8.3f} {p.mean_mse:>12.4e} {p.scaled_mse:>12.4e}")

fit = fit_scaling(points, predictor_for("sigma"))
print(f"linear fit vs sigma^2: slope {fit.slope:.4f}, R^2 {fit.r_squared:.4f}")
