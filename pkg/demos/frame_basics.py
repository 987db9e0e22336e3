"""Tetrahedral frame warm-up: effects, duals, and what happens when a
probability vector sits outside the physical set.

Every qubit state maps to a 4-outcome distribution p_a = Tr[rho E_a],
and any distribution maps back through the duals.  The map is a
bijection between the Bloch ball and a slice of the simplex, but the
simplex is bigger: most distributions reconstruct to Bloch vectors with
|r| > 1.  Training on raw outcome probabilities therefore needs a
positivity constraint, which is the whole story of this package.
"""

import numpy as np

from povmgs import frame

np.set_printoptions(precision=4, suppress=True)

print("tetrahedron directions (rows):")
print(frame.TETRA_VECTORS)
print("pairwise dot products (want -1/3 off-diagonal):")
print(frame.TETRA_VECTORS @ frame.TETRA_VECTORS.T)

effects = [frame.effect_matrix(a) for a in range(4)]
print("\nsum of effects (want identity):")
print(sum(effects).real)

# round trip: state -> distribution -> state
rng = np.random.default_rng(0)
r = rng.normal(size=3)
r *= rng.uniform() / np.linalg.norm(r)
p = frame.probs_from_state(r)
back = frame.reconstruct_qubit(p)
print("\nround trip |r - back| =", np.abs(r - back).max())

# a simplex vertex is very much not a state
vertex = np.array([1.0, 0.0, 0.0, 0.0])
bloch = frame.reconstruct_qubit(vertex)
rho = frame.density_matrix(bloch)
print("\nvertex p = (1,0,0,0) reconstructs to Bloch length",
      f"{np.linalg.norm(bloch):.4f}")
print("eigenvalues of the inferred matrix:", np.linalg.eigvalsh(rho))

# the outcome estimator: mean of c[a, p] over samples converges to <sigma_p>
bloch = np.array([0.3, -0.5, 0.6])
out = frame.sample_qubit_outcomes(bloch, 200_000, rng)
est = frame.DUAL_COEFFICIENTS[out, 1:].mean(axis=0)
print("\nsampled Bloch estimate:", est, " (true %s)" % bloch)
print("single-shot variance bound 3^2/N:", frame.variance_bound(1, 200_000))
