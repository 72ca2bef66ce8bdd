"""Tour of the dense linear-algebra kernels the solvers are built on.

Everything downstream reduces to two factorizations: the orthogonal polar
factor of a tall matrix (which maximizes tr(P'B) over orthonormal P) and the
top-k eigenpairs of a symmetric matrix (which maximize tr(P'HP), Fan's
principle).  Canonical angles measure how far consecutive iterates move.
"""

import numpy as np

from stiefelscf import (
    canonical_sin_theta,
    polar_factor,
    random_stiefel,
    top_k_eigenpairs,
    trace_norm,
)

# A tall matrix with known singular structure: columns scaled and swapped.
B = np.array([[0.0, 2.0],
              [3.0, 0.0],
              [0.0, 0.0]])
pol = polar_factor(B)
print("B =\n", B)
print("orthogonal factor P =\n", pol.orthogonal_factor)
print("psd factor Lambda =\n", pol.psd_factor)
print("trace norm =", pol.trace_norm, "(= 3 + 2, the singular values)")

# The polar factor is the argmax of tr(P'B): sample competitors.
best = max(np.trace(random_stiefel(3, 2, s).T @ B) for s in range(2000))
print(f"\nbest tr(P'B) over 2000 random P: {best:.4f}  <=  {trace_norm(B):.4f}")

# Top-k eigenpairs and the spectral gap that controls SCF convergence speed.
rng = np.random.default_rng(0)
H = rng.standard_normal((6, 6))
H = 0.5 * (H + H.T)
top = top_k_eigenpairs(H, 2)
print("\ntop-2 eigenvalues:", np.round(top.eigenvalues, 4), " gap:", round(top.gap, 4))
print("residual ||H V - V diag||:",
      np.linalg.norm(H @ top.eigenbasis - top.eigenbasis * top.eigenvalues))

# Canonical angles: a subspace distance invariant to basis rotations.
X = random_stiefel(6, 2, 1)
Y = random_stiefel(6, 2, 2)
d2, dF = canonical_sin_theta(X, Y)
Q = random_stiefel(2, 2, 3)
d2q, dFq = canonical_sin_theta(X @ Q, Y)
print(f"\nsin-theta distances: spectral {d2:.4f}, Frobenius {dF:.4f}")
print(f"after rotating the X basis:   {d2q:.4f},           {dFq:.4f}  (unchanged)")
