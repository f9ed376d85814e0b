"""Essential-variable spaces of polynomials via the catalecticant matrix.

The catalecticant G of a degree-r polynomial p in M variables is the N x M
matrix whose column j lists the coefficients of dp/dz_j over the degree
<= r-1 monomials (graded-lex ascending row order).  Any vector w with
G w = 0 satisfies sum_j w_j dp/dz_j == 0 identically, so p is constant along
w: these are the vacuum directions.  The essential space reported here is
the orthocomplement of that kernel (the column space of G^H), which is the
mode space actually carrying the state; its dimension equals the minimal
number of variables p can depend on under any unitary change of variables.

Note on conjugation: the span of pointwise gradient evaluations is the
complex conjugate of the space stored here.  Dimensions, orthogonality
tests and the reduction unitary are unaffected by the conjugation, but the
covariance law for the stored basis under p -> p(Vz) is V^dagger rather
than V^T.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch
from .poly import Poly, monomials_upto

DEFAULT_RANK_TOL = 1e-8


def catalecticant(p: Poly) -> np.ndarray:
    """N x M matrix of gradient coefficients, N = #monomials of deg <= r-1."""
    r = p.total_degree()
    if r < 1:
        raise ValueError("catalecticant requires a non-constant polynomial")
    rows = monomials_upto(p.nvars, r - 1)
    index = {m: i for i, m in enumerate(rows)}
    G = np.zeros((len(rows), p.nvars), dtype=complex)
    for j in range(1, p.nvars + 1):
        for m, c in p.partial(j).terms.items():
            G[index[m], j - 1] = c
    return G


def _fix_phases(B: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column real positive."""
    B = B.copy()
    for k in range(B.shape[1]):
        col = B[:, k]
        i = int(np.argmax(np.abs(col)))
        if abs(col[i]) > 0:
            B[:, k] = col * (abs(col[i]) / col[i])
    return B


@dataclass
class EssentialSpace:
    """Orthonormal basis of the essential mode space and its complement."""

    ambient: int
    dim: int
    basis: np.ndarray            # M x E, orthonormal columns
    complement_basis: np.ndarray  # M x (M-E), orthonormal columns
    rank_tol: float
    singular_values: np.ndarray

    def unitary(self) -> np.ndarray:
        """Columns [basis | complement]; a unitary change of variables."""
        return np.hstack([self.basis, self.complement_basis])


def essential_space(p: Poly, rank_tol: float = DEFAULT_RANK_TOL) -> EssentialSpace:
    """Numerical essential space of p with an SVD rank decision.

    Constant polynomials get dimension 0 with a full complement (all modes
    in vacuum after displacement removal).
    """
    M = p.nvars
    if p.total_degree() < 1:
        return EssentialSpace(M, 0, np.zeros((M, 0), dtype=complex),
                              np.eye(M, dtype=complex), rank_tol,
                              np.zeros(0))
    G = catalecticant(p)
    _, s, vh = np.linalg.svd(G, full_matrices=True)
    smax = s[0] if len(s) else 0.0
    dim = int(np.sum(s > rank_tol * smax)) if smax > 0 else 0
    V = vh.conj().T  # columns v_i; G v_i = s_i u_i
    basis = _fix_phases(V[:, :dim])
    complement = _fix_phases(V[:, dim:])
    return EssentialSpace(M, dim, basis, complement, rank_tol, s)


def subspace_overlap(B1: np.ndarray, B2: np.ndarray) -> float:
    """Largest principal-angle cosine between two orthonormal column spans."""
    if B1.shape[1] == 0 or B2.shape[1] == 0:
        return 0.0
    return float(np.linalg.svd(B1.conj().T @ B2, compute_uv=False)[0])


def disjoint(p: Poly, q: Poly, tol: float = DEFAULT_RANK_TOL,
             rank_tol: float = DEFAULT_RANK_TOL) -> bool:
    """True iff the essential spaces are orthogonal (shared-variable test)."""
    if p.nvars != q.nvars:
        raise DimensionMismatch(
            f"ambient dimensions differ: {p.nvars} vs {q.nvars}")
    ep = essential_space(p, rank_tol)
    eq = essential_space(q, rank_tol)
    return subspace_overlap(ep.basis, eq.basis) < tol


def reduce_to_essential(p: Poly, rank_tol: float = DEFAULT_RANK_TOL):
    """Rotate p onto its essential variables.

    Returns (reduced, V, space): V = [basis | complement] and
    reduced = p(Vz) restricted to the first E variables.  Variables beyond E
    carry only coefficients below the cleanup threshold, which are dropped.
    """
    space = essential_space(p, rank_tol)
    V = space.unitary()
    q = p.compose_linear(V)
    reduced = q.restrict_vars(max(space.dim, 1))
    return reduced, V, space


def annihilation_residual(p: Poly, w: np.ndarray) -> float:
    """Norm of sum_j w_j dp/dz_j relative to |p| (vacuum-mode certificate)."""
    d = p.directional_derivative(w)
    scale = p.coeff_norm()
    return d.coeff_norm() / scale if scale > 0 else 0.0
