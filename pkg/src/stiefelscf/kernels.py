"""Dense linear-algebra kernels shared by the Stiefel SCF solvers.

All routines operate on plain NumPy arrays.  Orthonormal matrices ("Stiefel
points") are n-by-k arrays P with P.T @ P = I_k; symmetric matrices are stored
fully.  Every function is a pure function of its inputs, so results are safe
to share between threads.

Sign conventions
----------------
Singular vectors and eigenvectors carry an inherent sign ambiguity.  To make
iteration traces reproducible, every factorization returned here fixes signs
so that the largest-magnitude entry of each (left singular / eigen) vector is
positive, ties broken by lowest row index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


__all__ = [
    "PolarDecomposition",
    "SpectralTopK",
    "as_matrix",
    "canonical_sin_theta",
    "orthonormalize_against",
    "polar_factor",
    "random_stiefel",
    "reorthonormalize",
    "require_stiefel",
    "sym_part",
    "top_k_eigenpairs",
    "trace_norm",
]

# Orthonormality drift admitted before a matrix stops counting as a Stiefel
# point; re-orthonormalization (QR) is cheap if callers need to restore it.
STIEFEL_TOL = 1e-10

# Relative symmetry tolerance enforced when a symmetric matrix is expected.
SYMMETRY_TOL = 1e-12


def as_matrix(B, name: str = "matrix") -> np.ndarray:
    """Validate and return ``B`` as a 2-d float array with finite entries."""
    B = np.asarray(B, dtype=float)
    if B.ndim == 1:
        B = B.reshape(-1, 1)
    if B.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {B.shape}")
    if B.size and not np.isfinite(B).all():
        raise ValueError(f"{name} contains non-finite entries")
    return B


def require_stiefel(P, tol: float = STIEFEL_TOL, name: str = "P") -> np.ndarray:
    """Validate that ``P`` has orthonormal columns within ``tol``."""
    P = as_matrix(P, name)
    n, k = P.shape
    if k > n:
        raise ValueError(f"{name} must be tall: shape {P.shape}")
    drift = np.linalg.norm(P.T @ P - np.eye(k))
    if drift > tol:
        raise ValueError(
            f"{name} is not orthonormal: ||P'P - I||_F = {drift:.3e} > {tol:.1e}"
        )
    return P


def reorthonormalize(P) -> np.ndarray:
    """Restore orthonormal columns of a drifted Stiefel point (thin QR)."""
    P = as_matrix(P, "P")
    Q, R = np.linalg.qr(P)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def sym_part(M) -> np.ndarray:
    """Symmetric part (M + M.T) / 2 of a square matrix."""
    M = as_matrix(M, "M")
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"sym_part needs a square matrix, got shape {M.shape}")
    return 0.5 * (M + M.T)


def require_symmetric(H, tol: float = SYMMETRY_TOL, name: str = "H") -> np.ndarray:
    """Check symmetry within relative ``tol`` and return the symmetrized copy."""
    H = as_matrix(H, name)
    if H.shape[0] != H.shape[1]:
        raise ValueError(f"{name} must be square, got shape {H.shape}")
    scale = np.linalg.norm(H)
    if np.linalg.norm(H - H.T) > tol * max(scale, 1.0):
        raise ValueError(f"{name} is not symmetric within tolerance {tol:.1e}")
    return 0.5 * (H + H.T)


def _fix_svd_signs(U: np.ndarray, Vt: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Flip each (u_j, v_j) pair so the largest-|.| entry of u_j is positive;
    # the product U @ diag(s) @ Vt is unchanged.
    for j in range(U.shape[1]):
        lead = np.argmax(np.abs(U[:, j]))
        if U[lead, j] < 0:
            U[:, j] = -U[:, j]
            Vt[j, :] = -Vt[j, :]
    return U, Vt


def _fix_eig_signs(V: np.ndarray) -> np.ndarray:
    for j in range(V.shape[1]):
        lead = np.argmax(np.abs(V[:, j]))
        if V[lead, j] < 0:
            V[:, j] = -V[:, j]
    return V


@dataclass(frozen=True)
class PolarDecomposition:
    """Polar decomposition B = orthogonal_factor @ psd_factor.

    ``orthogonal_factor`` is n-by-k with orthonormal columns, ``psd_factor``
    is k-by-k symmetric positive semidefinite, and ``trace_norm`` is the sum
    of the singular values of B (= trace of ``psd_factor``).
    """

    orthogonal_factor: np.ndarray
    psd_factor: np.ndarray
    trace_norm: float


def polar_factor(B) -> PolarDecomposition:
    """Orthogonal polar factor of a tall matrix via the thin SVD.

    For B = U @ diag(s) @ Vt the factors are P = U @ Vt and
    Lambda = Vt.T @ diag(s) @ Vt, so that B = P @ Lambda with Lambda >= 0.
    When rank(B) < k the decomposition is not unique; the SVD basis provides
    a deterministic valid completion and B = P (P.T B) still holds.

    Parameters
    ----------
    B : (n, k) array_like, k <= n

    Returns
    -------
    PolarDecomposition
    """
    B = as_matrix(B, "B")
    n, k = B.shape
    if k > n:
        raise ValueError(f"polar_factor needs a tall matrix, got shape {B.shape}")
    U, s, Vt = np.linalg.svd(B, full_matrices=False)
    U, Vt = _fix_svd_signs(U, Vt)
    P = U @ Vt
    Lam = sym_part(Vt.T @ (s[:, None] * Vt))
    return PolarDecomposition(P, Lam, float(s.sum()))


@dataclass(frozen=True)
class SpectralTopK:
    """Top-k eigenpairs of a symmetric matrix.

    ``eigenvalues`` are the k largest eigenvalues in descending order,
    ``eigenbasis`` is an n-by-k orthonormal basis of the associated invariant
    subspace, and ``gap`` is lambda_k - lambda_{k+1} (+inf when k = n).
    """

    eigenvalues: np.ndarray
    eigenbasis: np.ndarray
    gap: float


def top_k_eigenpairs(H, k: int) -> SpectralTopK:
    """Eigenpairs for the ``k`` largest eigenvalues of symmetric ``H``.

    Uses a full symmetric eigendecomposition, which is the right tool at the
    dense sizes this library targets; an iterative eigensolver backend is an
    extension point, not a requirement.
    """
    H = require_symmetric(H)
    n = H.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n = {n}, got k = {k}")
    w, V = np.linalg.eigh(H)  # ascending
    idx = np.arange(n - 1, n - k - 1, -1)
    vals = w[idx].copy()
    basis = _fix_eig_signs(V[:, idx].copy())
    gap = float(w[n - k] - w[n - k - 1]) if k < n else np.inf
    return SpectralTopK(vals, basis, gap)


def trace_norm(B) -> float:
    """Sum of the singular values of ``B`` (nuclear norm)."""
    B = as_matrix(B, "B")
    return float(scipy.linalg.svdvals(B).sum())


def canonical_sin_theta(X, Y) -> tuple[float, float]:
    """Sine-based distances between the column spaces of X and Y.

    The canonical angles are theta_i = arccos(sigma_i(X.T Y)) with singular
    values clamped into [0, 1] against floating-point overshoot.  Returns
    ``(dist2, distF)``: the sine of the largest angle and the Frobenius norm
    of the vector of sines.  Both lie in [0, sqrt(k)].
    """
    X = as_matrix(X, "X")
    Y = as_matrix(Y, "Y")
    if X.shape != Y.shape:
        raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
    sigma = np.clip(scipy.linalg.svdvals(X.T @ Y), 0.0, 1.0)
    sines_sq = np.clip(1.0 - sigma**2, 0.0, None)
    dist2 = float(np.sqrt(sines_sq.max()))
    dist_f = float(np.sqrt(sines_sq.sum()))
    return dist2, dist_f


def _orth(V: np.ndarray, floor: float = 0.0, rank_tol: float = 1e-12) -> np.ndarray:
    if V.shape[1] == 0:
        return V
    U, s, _ = np.linalg.svd(V, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return V[:, :0]
    keep = s > max(rank_tol * s[0], floor)
    return U[:, keep]


def orthonormalize_against(P, V) -> np.ndarray:
    """Orthonormal basis of the part of range(V) outside range(P).

    Performs classical Gram-Schmidt against ``P`` twice, orthonormalizing in
    between, which in practice removes the P-components to machine precision.
    Numerically rank-deficient directions (singular values below
    1e-12 * sigma_max, measured against the scale of the input V so pure
    projection noise deflates to nothing) are dropped; the result may be
    empty.
    """
    P = require_stiefel(P)
    V = as_matrix(V, "V")
    if V.shape[0] != P.shape[0]:
        raise ValueError(f"row mismatch: P has {P.shape[0]}, V has {V.shape[0]}")
    if V.shape[1] == 0:
        return V
    floor = 1e-12 * float(np.linalg.norm(V, 2))
    W = V - P @ (P.T @ V)
    W = _orth(W, floor)
    if W.shape[1]:
        W = W - P @ (P.T @ W)
        W = _orth(W)
    return W


def random_stiefel(n: int, k: int, seed: int = 0) -> np.ndarray:
    """Deterministic random Stiefel point from a seeded Gaussian QR.

    The orthonormal factor of the QR decomposition of a standard-Gaussian
    n-by-k matrix, with column signs fixed by the sign of diag(R).
    """
    if k > n:
        raise ValueError(f"need k <= n, got n = {n}, k = {k}")
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, k))
    Q, R = np.linalg.qr(G)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs
