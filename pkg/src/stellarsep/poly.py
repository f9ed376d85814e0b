"""Sparse multivariate complex polynomials and the core-state bijection.

A polynomial in M complex variables is stored as a dict mapping exponent
tuples (one non-negative int per variable) to complex coefficients.  Every
constructor and arithmetic operation runs a relative cleanup pass: terms
whose magnitude falls below ``coeff_tol`` times the largest stored magnitude
are dropped, so numerical noise from earlier stages never masquerades as
structure.  The zero polynomial has an empty term map.

The monomial order used everywhere (leading terms, division, canonical
emission) is graded lexicographic: compare total degree first, then the
exponent tuple lexicographically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, ZeroStateError

# Relative magnitude below which coefficients are dropped.  Small coefficient
# perturbations flip irreducibility, so arithmetic re-normalizes noise away.
DEFAULT_COEFF_TOL = 1e-12

Monomial = tuple  # exponent tuple, one entry per variable


def grlex_key(mono):
    """Sort key implementing graded lexicographic order (max = leading)."""
    return (sum(mono), mono)


def monomials_upto(nvars: int, degree: int) -> list[Monomial]:
    """All exponent tuples of total degree <= degree, graded-lex ascending."""
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for e in range(remaining + 1):
            rec(prefix + (e,), remaining - e, slots - 1)

    for d in range(degree + 1):
        level = []

        def rec_level(prefix, remaining, slots):
            if slots == 1:
                level.append(prefix + (remaining,))
                return
            for e in range(remaining + 1):
                rec_level(prefix + (e,), remaining - e, slots - 1)

        rec_level((), d, nvars)
        level.sort()
        out.extend(level)
    return out


class Poly:
    """Immutable-by-convention sparse polynomial over complex coefficients."""

    __slots__ = ("nvars", "terms", "coeff_tol")

    def __init__(self, nvars: int, terms: dict | None = None,
                 coeff_tol: float = DEFAULT_COEFF_TOL, _clean: bool = True):
        if nvars < 1:
            raise ValueError(f"need at least one variable, got {nvars}")
        self.nvars = nvars
        self.coeff_tol = coeff_tol
        terms = dict(terms) if terms else {}
        for mono in terms:
            if len(mono) != nvars:
                raise DimensionMismatch(
                    f"monomial {mono} has {len(mono)} exponents, expected {nvars}")
        self.terms = self._cleanup(terms, coeff_tol) if _clean else terms

    @staticmethod
    def _cleanup(terms, tol):
        if not terms:
            return {}
        top = max(abs(c) for c in terms.values())
        if top == 0.0:
            return {}
        cut = tol * top
        return {m: complex(c) for m, c in terms.items() if abs(c) > cut}

    # ---- constructors -------------------------------------------------

    @classmethod
    def zero(cls, nvars):
        return cls(nvars, {})

    @classmethod
    def constant(cls, nvars, c):
        return cls(nvars, {(0,) * nvars: complex(c)})

    @classmethod
    def variable(cls, nvars, j):
        """The polynomial z_j (1-based index)."""
        if not 1 <= j <= nvars:
            raise DimensionMismatch(f"variable index {j} out of range 1..{nvars}")
        mono = tuple(int(i == j - 1) for i in range(nvars))
        return cls(nvars, {mono: 1.0 + 0.0j})

    @classmethod
    def linear_form(cls, coeffs, constant=0.0):
        """c0 + sum_j coeffs[j] z_{j+1}."""
        coeffs = np.asarray(coeffs, dtype=complex)
        n = len(coeffs)
        terms = {tuple(int(i == k) for i in range(n)): coeffs[k]
                 for k in range(n) if coeffs[k] != 0}
        if constant != 0:
            terms[(0,) * n] = complex(constant)
        return cls(n, terms)

    # ---- basic queries -------------------------------------------------

    def is_zero(self):
        return not self.terms

    def is_constant(self):
        return self.total_degree() <= 0

    def total_degree(self):
        """Max exponent sum; -1 for the zero polynomial."""
        if not self.terms:
            return -1
        return max(sum(m) for m in self.terms)

    def leading_monomial(self):
        if not self.terms:
            raise ZeroStateError("zero polynomial has no leading monomial")
        return max(self.terms, key=grlex_key)

    def leading_coefficient(self):
        return self.terms[self.leading_monomial()]

    def constant_term(self):
        return self.terms.get((0,) * self.nvars, 0.0 + 0.0j)

    def coeff_norm(self):
        """l2 norm of the coefficient vector."""
        return math.sqrt(sum(abs(c) ** 2 for c in self.terms.values()))

    def sorted_terms(self):
        """Terms in descending graded-lex order (leading first)."""
        return sorted(self.terms.items(), key=lambda kv: grlex_key(kv[0]),
                      reverse=True)

    def max_exponent(self, j):
        """Largest exponent of variable j (1-based) over all terms."""
        if not self.terms:
            return 0
        return max(m[j - 1] for m in self.terms)

    def min_exponent(self, j):
        if not self.terms:
            return 0
        return min(m[j - 1] for m in self.terms)

    # ---- arithmetic ----------------------------------------------------

    def _check_same_vars(self, other):
        if self.nvars != other.nvars:
            raise DimensionMismatch(
                f"variable counts differ: {self.nvars} vs {other.nvars}")

    def __add__(self, other):
        self._check_same_vars(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) + c
        return Poly(self.nvars, out, self.coeff_tol)

    def __sub__(self, other):
        self._check_same_vars(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            out[m] = out.get(m, 0.0) - c
        return Poly(self.nvars, out, self.coeff_tol)

    def __neg__(self):
        return self.scale(-1.0)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex)):
            return self.scale(other)
        self._check_same_vars(other)
        out = {}
        for ma, ca in self.terms.items():
            for mb, cb in other.terms.items():
                m = tuple(a + b for a, b in zip(ma, mb))
                out[m] = out.get(m, 0.0) + ca * cb
        return Poly(self.nvars, out, self.coeff_tol)

    __rmul__ = __mul__

    def scale(self, c):
        c = complex(c)
        return Poly(self.nvars, {m: v * c for m, v in self.terms.items()},
                    self.coeff_tol)

    def power(self, k):
        if k < 0:
            raise ValueError("negative power")
        result = Poly.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base if k > 1 else base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, Poly):
            return NotImplemented
        return self.nvars == other.nvars and self.terms == other.terms

    def __repr__(self):
        parts = [f"{c!r}*{m}" for m, c in self.sorted_terms()[:6]]
        more = "..." if len(self.terms) > 6 else ""
        return f"Poly({self.nvars}; {' + '.join(parts)}{more})"

    # ---- evaluation ----------------------------------------------------

    def evaluate(self, z):
        """Evaluate at a point, iterating terms in canonical order with
        cached variable powers (deterministic summation order)."""
        z = np.asarray(z, dtype=complex)
        if len(z) != self.nvars:
            raise DimensionMismatch(
                f"point has {len(z)} entries, expected {self.nvars}")
        if not self.terms:
            return 0.0 + 0.0j
        maxdeg = [self.max_exponent(j + 1) for j in range(self.nvars)]
        powers = []
        for j in range(self.nvars):
            col = [1.0 + 0.0j]
            for _ in range(maxdeg[j]):
                col.append(col[-1] * z[j])
            powers.append(col)
        total = 0.0 + 0.0j
        for m, c in self.sorted_terms():
            v = c
            for j, e in enumerate(m):
                if e:
                    v *= powers[j][e]
            total += v
        return total

    def gradient_at(self, z):
        """Vector of partial derivative values at a point."""
        return np.array([self.partial(j).evaluate(z)
                         for j in range(1, self.nvars + 1)])

    # ---- calculus ------------------------------------------------------

    def partial(self, j):
        """Symbolic partial derivative with respect to z_j (1-based)."""
        if not 1 <= j <= self.nvars:
            raise DimensionMismatch(f"variable index {j} out of range 1..{self.nvars}")
        out = {}
        i = j - 1
        for m, c in self.terms.items():
            e = m[i]
            if e:
                mm = m[:i] + (e - 1,) + m[i + 1:]
                out[mm] = out.get(mm, 0.0) + e * c
        return Poly(self.nvars, out, self.coeff_tol)

    def directional_derivative(self, v):
        """sum_j v_j dp/dz_j for a direction vector v."""
        v = np.asarray(v, dtype=complex)
        out = Poly.zero(self.nvars)
        for j in range(self.nvars):
            if v[j] != 0:
                out = out + self.partial(j + 1).scale(v[j])
        return out

    # ---- substitution --------------------------------------------------

    def compose_linear(self, V):
        """Return q(z) = p(Vz) for a square matrix V.

        Each input variable z_i is replaced by the linear form given by row i
        of V; the substituted products are expanded exactly and cleaned up.
        """
        V = np.asarray(V, dtype=complex)
        if V.shape != (self.nvars, self.nvars):
            raise DimensionMismatch(
                f"matrix is {V.shape}, expected ({self.nvars}, {self.nvars})")
        lin = [Poly.linear_form(V[i, :]) for i in range(self.nvars)]
        pow_cache = [{0: Poly.constant(self.nvars, 1.0)} for _ in range(self.nvars)]

        def lin_pow(i, e):
            cache = pow_cache[i]
            if e not in cache:
                best = max(k for k in cache if k <= e)
                cur = cache[best]
                for k in range(best + 1, e + 1):
                    cur = cur * lin[i]
                    cache[k] = cur
            return cache[e]

        acc = {}
        for m, c in self.sorted_terms():
            term = Poly.constant(self.nvars, c)
            for i, e in enumerate(m):
                if e:
                    term = term * lin_pow(i, e)
            for mm, cc in term.terms.items():
                acc[mm] = acc.get(mm, 0.0) + cc
        return Poly(self.nvars, acc, self.coeff_tol)

    def restrict_line(self, u, v):
        """Coefficients (ascending in t) of the univariate t -> p(u + t v)."""
        u = np.asarray(u, dtype=complex)
        v = np.asarray(v, dtype=complex)
        if np.linalg.norm(v) == 0:
            raise ValueError("line direction must be nonzero")
        deg = max(self.total_degree(), 0)
        out = np.zeros(deg + 1, dtype=complex)
        for m, c in self.sorted_terms():
            factor = np.array([1.0 + 0.0j])
            for j, e in enumerate(m):
                if e == 0:
                    continue
                base = np.array([u[j], v[j]])  # u_j + t v_j
                for _ in range(e):
                    factor = np.convolve(factor, base)
            out[:len(factor)] += c * factor
        top = max(abs(out)) if len(out) else 0.0
        if top > 0:
            out[abs(out) <= self.coeff_tol * top] = 0.0
        return out

    def restrict_plane(self, a, u, v):
        """Bivariate q(x, y) = p(a + x u + y v)."""
        a = np.asarray(a, dtype=complex)
        u = np.asarray(u, dtype=complex)
        v = np.asarray(v, dtype=complex)
        mat = np.stack([u, v], axis=1)
        if np.linalg.matrix_rank(mat, tol=1e-12) < 2:
            raise ValueError("plane directions must be linearly independent")
        lin = [Poly(2, {(0, 0): a[j], (1, 0): u[j], (0, 1): v[j]})
               for j in range(self.nvars)]
        pow_cache = [{0: Poly.constant(2, 1.0)} for _ in range(self.nvars)]

        def lin_pow(j, e):
            cache = pow_cache[j]
            if e not in cache:
                best = max(k for k in cache if k <= e)
                cur = cache[best]
                for k in range(best + 1, e + 1):
                    cur = cur * lin[j]
                    cache[k] = cur
            return cache[e]

        acc = {}
        for m, c in self.sorted_terms():
            term = Poly.constant(2, c)
            for j, e in enumerate(m):
                if e:
                    term = term * lin_pow(j, e)
            for mm, cc in term.terms.items():
                acc[mm] = acc.get(mm, 0.0) + cc
        return Poly(2, acc, self.coeff_tol)

    def restrict_vars(self, keep):
        """Project onto the first `keep` variables; terms touching dropped
        variables must already be negligible."""
        if keep >= self.nvars:
            return self
        keep = max(keep, 1)
        out = {}
        top = max((abs(c) for c in self.terms.values()), default=0.0)
        for m, c in self.terms.items():
            if any(m[j] for j in range(keep, self.nvars)):
                if abs(c) > 1e-6 * top:
                    raise ValueError(
                        f"cannot drop variable with live term {m}: |c|={abs(c):.3e}")
                continue
            out[m[:keep]] = c
        return Poly(keep, out, self.coeff_tol)

    def extend_vars(self, nvars):
        """Embed into a larger variable space (new variables unused)."""
        if nvars < self.nvars:
            raise DimensionMismatch("extend_vars cannot shrink")
        if nvars == self.nvars:
            return self
        pad = (0,) * (nvars - self.nvars)
        return Poly(nvars, {m + pad: c for m, c in self.terms.items()},
                    self.coeff_tol)

    # ---- division ------------------------------------------------------

    def divide(self, q):
        """Multivariate division p = quot*q + rem in graded-lex order.

        Returns (quotient, remainder).
        """
        self._check_same_vars(q)
        if q.is_zero():
            raise ZeroStateError("division by zero polynomial")
        lead_m = q.leading_monomial()
        lead_c = q.terms[lead_m]
        work = dict(self.terms)
        quot = {}
        rem = {}
        scale = max((abs(c) for c in self.terms.values()), default=0.0)
        cut = self.coeff_tol * scale if scale else 0.0
        while work:
            m = max(work, key=grlex_key)
            c = work.pop(m)
            if abs(c) <= cut:
                continue
            diff = tuple(a - b for a, b in zip(m, lead_m))
            if all(d >= 0 for d in diff):
                f = c / lead_c
                quot[diff] = quot.get(diff, 0.0) + f
                for qm, qc in q.terms.items():
                    if qm == lead_m:
                        continue
                    mm = tuple(a + b for a, b in zip(diff, qm))
                    work[mm] = work.get(mm, 0.0) - f * qc
            else:
                rem[m] = rem.get(m, 0.0) + c
        return (Poly(self.nvars, quot, self.coeff_tol),
                Poly(self.nvars, rem, self.coeff_tol))


def divide_exact(p: Poly, q: Poly):
    """Division with a certification residual.

    Returns (quotient, residual) where residual = |remainder|_2 / |p|_2 of
    the coefficient vectors; a residual below the caller's division
    tolerance certifies that q divides p.
    """
    if q.is_zero():
        raise ZeroStateError("division by zero polynomial")
    quot, rem = p.divide(q)
    denom = p.coeff_norm()
    residual = rem.coeff_norm() / denom if denom > 0 else 0.0
    return quot, residual


def poly_close(p: Poly, q: Poly, tol=1e-10):
    """Relative coefficient-norm distance test."""
    diff = (p - q).coeff_norm()
    scale = max(p.coeff_norm(), q.coeff_norm(), 1e-300)
    return diff / scale < tol


def projective_distance(p: Poly, q: Poly):
    """Distance up to a global complex scalar (0 = projectively equal)."""
    np_, nq = p.coeff_norm(), q.coeff_norm()
    if np_ == 0 or nq == 0:
        return 0.0 if np_ == nq else 1.0
    inner = 0.0 + 0.0j
    for m, c in p.terms.items():
        inner += c.conjugate() * q.terms.get(m, 0.0)
    lam = inner / (np_ ** 2)
    if lam == 0:
        return 1.0
    return (p.scale(lam) - q).coeff_norm() / nq


# ---- core states --------------------------------------------------------

MAX_FACTORIAL_OCC = 20  # exact integer factorials; beyond this we refuse


@dataclass
class CoreState:
    """Finite superposition of multimode Fock states.

    amplitudes maps occupation tuples (one int per mode) to complex
    amplitudes; the stellar rank is the largest total photon number in the
    support.
    """

    modes: int
    amplitudes: dict = field(default_factory=dict)
    normalized: bool = False

    def __post_init__(self):
        clean = {}
        for occ, amp in self.amplitudes.items():
            occ = tuple(int(n) for n in occ)
            if len(occ) != self.modes:
                raise DimensionMismatch(
                    f"occupation {occ} has {len(occ)} entries, expected {self.modes}")
            if any(n < 0 for n in occ):
                raise ValueError(f"negative occupation in {occ}")
            amp = complex(amp)
            if amp != 0:
                clean[occ] = amp
        self.amplitudes = clean

    def norm(self):
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def normalize(self):
        n = self.norm()
        if n == 0:
            raise ZeroStateError("cannot normalize the zero state")
        return CoreState(self.modes,
                         {o: a / n for o, a in self.amplitudes.items()},
                         normalized=True)

    def stellar_rank(self):
        if not self.amplitudes:
            return -1
        return max(sum(o) for o in self.amplitudes)

    def distance(self, other):
        keys = set(self.amplitudes) | set(other.amplitudes)
        return math.sqrt(sum(
            abs(self.amplitudes.get(k, 0) - other.amplitudes.get(k, 0)) ** 2
            for k in keys))


def _weight(occ):
    w = 1.0
    for n in occ:
        if n > MAX_FACTORIAL_OCC:
            raise ValueError(
                f"occupation {n} exceeds supported factorial range "
                f"({MAX_FACTORIAL_OCC})")
        w *= math.factorial(n)
    return math.sqrt(w)


def poly_from_core(state: CoreState) -> Poly:
    """Stellar polynomial of a core state: coefficient C_n / sqrt(prod n_j!)."""
    if not state.amplitudes:
        raise ZeroStateError("core state has empty support")
    terms = {occ: amp / _weight(occ) for occ, amp in state.amplitudes.items()}
    return Poly(state.modes, terms)


def core_from_poly(p: Poly) -> CoreState:
    """Inverse map: amplitude C_n = coeff(n) * sqrt(prod n_j!)."""
    amps = {m: c * _weight(m) for m, c in p.terms.items()}
    return CoreState(p.nvars, amps)


# ---- unitary helpers -----------------------------------------------------

UNITARY_TOL = 1e-10


def assert_unitary(U, tol=UNITARY_TOL):
    """Validate max-norm unitarity defect; returns the matrix as ndarray."""
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionMismatch(f"matrix shape {U.shape} is not square")
    defect = np.abs(U.conj().T @ U - np.eye(U.shape[0])).max()
    if defect >= tol:
        raise ValueError(f"unitarity defect {defect:.3e} exceeds {tol:.1e}")
    return U
