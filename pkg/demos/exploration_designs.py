"""Exploration designs: G-optimal (raw features) and mean-centered log-det.

Both come with a max-leverage certificate at d(1 + tol).  The centered design
is what the variance-reduced linear policy mixes in: it keeps the centered
covariance invertible no matter where the play distribution drifts.
"""

import numpy as np

from htbandits import FeatureSet, centered_optimal_design, covariance, g_optimal_design

rng = np.random.default_rng(0)
phi = rng.normal(size=(12, 3))
fs = FeatureSet(phi)

res = g_optimal_design(fs, tol=1e-3)
print("G-optimal design over 12 arms in R^3")
print("  weights:", np.round(res.distribution.weights, 4))
print("  support size:", int(np.sum(res.distribution.weights > 0)))
print(f"  max leverage: {res.max_leverage:.6f}  (certificate: <= {3 * 1.001})")
print(f"  iterations: {res.iterations}")
print()

cres = centered_optimal_design(fs, tol=1e-3)
op = covariance(cres.distribution, fs, "centered")
print("centered log-det design")
print("  weights:", np.round(cres.distribution.weights, 4))
print(f"  max centered norm^2: {cres.max_leverage:.6f}  (certificate: <= {3 * 1.001})")
print("  design mean:", np.round(op.mean, 4))
print()

# arms on an affine line in R^2: linear rank 2, affine rank 1, so the
# centered covariance is singular and the design solver refuses
line = FeatureSet(np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]]))
try:
    centered_optimal_design(line, 1e-3)
except Exception as exc:
    print("degenerate arm set rejected:", exc)
