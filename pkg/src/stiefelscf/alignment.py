"""Rotation rules mapping subproblem solutions back into the feasible subset.

After the inner linear-algebra step produces an orthonormal P_hat, the
solvers apply a k-by-k orthogonal rotation Q so that P_next = P_hat @ Q lands
in the feasible subset the theory requires (typically {P : P'D >= 0}).  Each
rule also reports the positive-semidefiniteness margin it maintains, which
feeds the exit certificates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import as_matrix, polar_factor, sym_part

__all__ = [
    "BlockOverlapError",
    "BlockPolarAlignment",
    "IdentityAlignment",
    "PolarOfDAlignment",
    "ScriptDPolarAlignment",
    "align_rotation",
]


class BlockOverlapError(ValueError):
    """Per-block alignment requires pairwise column-disjoint selectors."""


def _polar_square(M: np.ndarray) -> np.ndarray:
    # Orthogonal polar factor of a square matrix; identity for (near-)zero M.
    if np.linalg.norm(M) < 1e-300:
        return np.eye(M.shape[0])
    return polar_factor(M).orthogonal_factor


def _is_psd_matrix(S: np.ndarray, scale: float, tol: float = 1e-10) -> bool:
    # Membership test for {P : P'D >= 0}: the product must be symmetric, not
    # just have a PSD symmetric part (a skew component breaks the theory's
    # trace inequalities).
    guard = tol * max(scale, 1.0)
    if np.linalg.norm(S - S.T) > guard:
        return False
    return bool(np.linalg.eigvalsh(sym_part(S))[0] >= -guard)


@dataclass(frozen=True)
class IdentityAlignment:
    """No rotation: Q = I. For right-unitarily invariant objectives."""

    def rotate(self, P_hat, obj, P_prev):
        P_hat = as_matrix(P_hat, "P_hat")
        return np.eye(P_hat.shape[1]), P_hat

    def psd_margin(self, obj, P):
        return None

    def is_feasible(self, obj, P):
        return True

    def transform(self, T):
        return self


@dataclass(frozen=True)
class PolarOfDAlignment:
    """Q = orthogonal polar factor of P_hat' D for a fixed matrix D.

    Guarantees P_next' D >= 0, the feasible subset for objectives that
    increase with tr((P'D)^m).
    """

    D: np.ndarray

    def rotate(self, P_hat, obj, P_prev):
        P_hat = as_matrix(P_hat, "P_hat")
        Q = _polar_square(P_hat.T @ self.D)
        return Q, P_hat @ Q

    def psd_margin(self, obj, P):
        S = sym_part(P.T @ self.D)
        return float(np.linalg.eigvalsh(S)[0]), float(np.linalg.norm(self.D, 2))

    def is_feasible(self, obj, P):
        return _is_psd_matrix(P.T @ self.D, np.linalg.norm(self.D, 2))

    def transform(self, T):
        return PolarOfDAlignment(as_matrix(T, "T").T @ self.D)


@dataclass(frozen=True)
class ScriptDPolarAlignment:
    """Q = orthogonal polar factor of P_hat' scriptD(P_prev).

    scriptD is the objective's partial-derivative-weighted sum of its linear
    matrices, recomputed at the previous iterate; the rotation additionally
    increases the objective beyond the plain ascent guarantee and makes
    P_next' scriptD(P_prev) >= 0.
    """

    def rotate(self, P_hat, obj, P_prev):
        P_hat = as_matrix(P_hat, "P_hat")
        Q = _polar_square(P_hat.T @ obj.script_d(P_prev))
        return Q, P_hat @ Q

    def psd_margin(self, obj, P):
        D = obj.script_d(P)
        S = sym_part(P.T @ D)
        return float(np.linalg.eigvalsh(S)[0]), float(np.linalg.norm(D, 2))

    def is_feasible(self, obj, P):
        D = obj.script_d(P)
        return _is_psd_matrix(P.T @ D, np.linalg.norm(D, 2))

    def transform(self, T):
        return self


@dataclass(frozen=True)
class BlockPolarAlignment:
    """Per-block polar rotations for column-disjoint linear terms.

    ``term_indices`` lists which linear terms of the objective drive a block
    each; their selectors must be pairwise column-disjoint.  Q is assembled
    block-diagonally from the per-block polar factors of the (weighted)
    P_hat_j' D_j, with identity on unselected columns.
    """

    term_indices: tuple[int, ...]

    def _blocks(self, obj):
        seen: set[int] = set()
        blocks = []
        for idx in self.term_indices:
            t = obj.terms[idx]
            cols = tuple(range(obj.k)) if t.cols is None else t.cols
            if seen.intersection(cols):
                raise BlockOverlapError(
                    f"alignment blocks overlap at term {idx} (columns {cols})")
            seen.update(cols)
            blocks.append((list(cols), t))
        return blocks

    def rotate(self, P_hat, obj, P_prev):
        P_hat = as_matrix(P_hat, "P_hat")
        k = P_hat.shape[1]
        phi = obj.outer.partials(obj.term_values(P_prev))
        Q = np.eye(k)
        for idx, (cols, t) in zip(self.term_indices, self._blocks(obj)):
            w = phi[idx] * t.c
            S = _polar_square(w * (P_hat[:, cols].T @ t.matrix))
            Q[np.ix_(cols, cols)] = S
        return Q, P_hat @ Q

    def psd_margin(self, obj, P):
        phi = obj.outer.partials(obj.term_values(P))
        margin = np.inf
        norm = 0.0
        for idx, (cols, t) in zip(self.term_indices, self._blocks(obj)):
            Dw = phi[idx] * t.c * t.matrix
            S = sym_part(P[:, cols].T @ Dw)
            margin = min(margin, float(np.linalg.eigvalsh(S)[0]))
            norm = max(norm, float(np.linalg.norm(Dw, 2)))
        return (0.0 if margin is np.inf else margin), norm

    def is_feasible(self, obj, P):
        phi = obj.outer.partials(obj.term_values(P))
        for idx, (cols, t) in zip(self.term_indices, self._blocks(obj)):
            Dw = phi[idx] * t.c * t.matrix
            if not _is_psd_matrix(P[:, cols].T @ Dw, np.linalg.norm(Dw, 2)):
                return False
        return True

    def transform(self, T):
        return self


def align_rotation(rule, P_hat, obj, P_prev):
    """Apply an alignment rule: returns (Q, P_next = P_hat @ Q)."""
    if rule is None:
        rule = IdentityAlignment()
    return rule.rotate(P_hat, obj, P_prev)
