"""Noise calibration for a fixed privacy target.

Given (epsilon, delta) and a round count T, the calibrator returns the
smallest noise multiplier sigma whose T-fold Gaussian composition stays
within the budget. The round trip below recomputes the spent epsilon
from the calibrated sigma and lands back on the target.
"""

import math

from podfl.privacy import (
    PrivacyBudget,
    calibrate_sigma,
    compose_rdp,
    epsilon_for_sigma,
    noise_stddev,
    rdp_of_gaussian,
    rdp_to_dp,
    sensitivity_bound,
)

epsilon, delta, rounds = 8.0, 1e-5, 50

sigma = calibrate_sigma(epsilon, delta, rounds)
print(f"target ({epsilon=}, {delta=}, T={rounds}) -> sigma = {sigma:.6f}")

# replay the accountant by hand at the calibration order
alpha = 1.0 + 8.0 * math.log(1.0 / delta) / epsilon
per_round = rdp_of_gaussian(sigma)(alpha)   # alpha / (2 sigma^2)
total = compose_rdp([per_round] * rounds)
spent = rdp_to_dp(total, alpha, delta)
print(f"order alpha = {alpha:.4f}, per-round rdp = {per_round:.6f}")
print(f"epsilon spent after {rounds} rounds: {spent:.12f}")

# the convenience wrapper optimizes over orders, so it can only do better
best_eps, best_alpha = epsilon_for_sigma(sigma, delta, rounds)
print(f"best certified epsilon for that sigma: {best_eps:.4f} at order {best_alpha:.4f}")

# what actually gets added to a representative update: the update-space
# stddev is sigma times the clustering sensitivity
for dmax in (0.05, 0.5, 1.0):
    s = sensitivity_bound(dmax)
    print(f"  d_max={dmax}: sensitivity {s}, "
          f"stddev {noise_stddev(sigma, dmax, 'algorithm1'):.4f} (algorithm1) "
          f"/ {noise_stddev(sigma, dmax, 'analysis'):.4f} (analysis)")

# budgets tighten as epsilon shrinks
print("sigma needed at T=50, delta=1e-5:")
for eps in (1.0, 2.0, 4.0, 8.0):
    print(f"  epsilon {eps}: sigma {calibrate_sigma(eps, delta, rounds):.4f}")

b = PrivacyBudget.from_target(epsilon, delta, rounds)
print("budget record:", b)
