"""Numerical absolute factorization of stellar polynomials.

The pipeline factors a sparse complex polynomial into irreducible factors
with multiplicities:

  0. extract scalar and monomial factors (common exponent minima);
  1. rotate onto the essential variables so the search runs in as few
     variables as possible, mapping factors back afterwards;
  2. univariate / homogeneous-bivariate fast path (root finding only);
  3. peel affine hyperplane factors found from roots along generic lines;
  4. split the nonlinear residual by monodromy grouping of plane-section
     roots, cross-checked against a PDE-based factor count, with each
     component recovered as the kernel of a monomial evaluation matrix and
     certified by polynomial division.

Exact factorization of inexact coefficients is ill-posed (tiny coefficient
perturbations make a polynomial irreducible), so every accepted factor is
certified by a division residual, and failures surface as explicit
Inconclusive/Inconsistency errors rather than guesses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import Inconclusive, Inconsistency, ZeroStateError
from .essential import DEFAULT_RANK_TOL, essential_space
from .poly import Poly, divide_exact, monomials_upto
from .unionfind import UnionFind


@dataclass
class FactorizerConfig:
    seed: int = 0
    verify_tol: float = 1e-8
    root_tol: float = 1e-9
    loop_steps: int = 64
    max_loops: int = 32
    samples_per_component_factor: float = 2.0

    def __post_init__(self):
        if self.verify_tol <= 0:
            raise ValueError("verify_tol must be positive")


@dataclass
class IrreducibleFactor:
    poly: Poly          # leading graded-lex coefficient normalized to 1
    multiplicity: int
    degree: int


@dataclass
class Factorization:
    scalar: complex
    factors: list
    residual: float
    method_trace: list = field(default_factory=list)

    def reconstruct(self, nvars=None) -> Poly:
        nvars = nvars if nvars is not None else (
            self.factors[0].poly.nvars if self.factors else 1)
        out = Poly.constant(nvars, self.scalar)
        for f in self.factors:
            out = out * f.poly.power(f.multiplicity)
        return out

    def signature(self):
        """Multiset of (degree, multiplicity) pairs, sorted."""
        return sorted((f.degree, f.multiplicity) for f in self.factors)

    def total_degree(self):
        return sum(f.degree * f.multiplicity for f in self.factors)


class _TrackFailure(Exception):
    """Internal: a path-tracking attempt lost a root; caller retries."""


# ---------------------------------------------------------------------------
# univariate roots
# ---------------------------------------------------------------------------

def _newton_polish(coeffs_desc, z, steps=12):
    dcoeffs = np.polyder(coeffs_desc)
    for _ in range(steps):
        f = np.polyval(coeffs_desc, z)
        df = np.polyval(dcoeffs, z)
        if abs(df) < 1e-300:
            break
        dz = f / df
        z = z - dz
        if abs(dz) < 1e-15 * (1 + abs(z)):
            break
    return z


def univariate_roots(coeffs, root_tol=1e-9):
    """All complex roots with multiplicities of sum_k coeffs[k] t^k.

    Companion-matrix eigenvalues, Newton polishing, then cluster detection:
    near-coincident roots are merged and the cluster center re-polished on
    the derivative of matching order (an m-fold root of p is a simple root
    of the (m-1)-th derivative, which restores machine accuracy).
    """
    c = np.asarray(coeffs, dtype=complex)
    if len(c) == 0 or np.abs(c).max() == 0:
        raise ZeroStateError("zero polynomial has no roots")
    top = np.abs(c).max()
    deg = len(c) - 1
    while deg > 0 and abs(c[deg]) <= 1e-13 * top:
        deg -= 1
    if deg < 1:
        raise ValueError("polynomial must have degree >= 1")
    desc = c[:deg + 1][::-1]
    raw = np.array([_newton_polish(desc, z) for z in np.roots(desc)])

    # companion eigenvalues of an m-fold root scatter by ~eps^(1/m), so the
    # merge radius must sit well above root_tol
    scale = 1.0 + max((abs(z) for z in raw), default=0.0)
    radius = max(100 * root_tol, 2e-7) * scale
    clusters: list[list[complex]] = []
    for z in sorted(raw, key=lambda w: (w.real, w.imag)):
        for cl in clusters:
            if any(abs(z - w) < radius for w in cl):
                cl.append(z)
                break
        else:
            clusters.append([z])
    merged = True
    while merged:
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                if any(abs(a - b) < radius
                       for a in clusters[i] for b in clusters[j]):
                    clusters[i].extend(clusters.pop(j))
                    merged = True
                    break
            if merged:
                break

    out = []
    for cl in clusters:
        m = len(cl)
        center = sum(cl) / m
        if m > 1:
            dm = desc
            for _ in range(m - 1):
                dm = np.polyder(dm)
            center = _newton_polish(dm, center, steps=30)
        else:
            center = _newton_polish(desc, center, steps=6)
        out.append((complex(center), m))
    out.sort(key=lambda rm: (rm[0].real, rm[0].imag))
    assert sum(m for _, m in out) == deg
    return out


# ---------------------------------------------------------------------------
# small helpers
# ---------------------------------------------------------------------------

def _rand_vec(rng, n, radius=1.0):
    return radius * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / math.sqrt(2)


def _rand_unit(rng, n):
    v = _rand_vec(rng, n)
    return v / np.linalg.norm(v)


def _rand_plane(rng, n, offset=0.35):
    a = _rand_vec(rng, n, offset)
    U = np.linalg.qr(np.column_stack([_rand_vec(rng, n), _rand_vec(rng, n)]))[0]
    return a, U[:, 0], U[:, 1]


def _normalize_leading(p: Poly):
    """Scale so the leading graded-lex coefficient is 1; returns (poly, lc)."""
    lc = p.leading_coefficient()
    return p.scale(1.0 / lc), lc


def _canonical_key(p: Poly):
    items = tuple((m, round(c.real, 9), round(c.imag, 9))
                  for m, c in p.sorted_terms())
    return (p.total_degree(), items)


def _peel_multiplicity(work: Poly, f: Poly, tol):
    """Divide work by f while the residual certifies divisibility."""
    mult = 0
    while not work.is_zero() and work.total_degree() >= f.total_degree():
        quot, res = divide_exact(work, f)
        if res < tol:
            work = quot
            mult += 1
        else:
            break
    return work, mult


# ---------------------------------------------------------------------------
# linear factor peeling
# ---------------------------------------------------------------------------

def _hyperplane_candidate(q: Poly, z0, v, mult):
    """Affine form through a sampled variety point from the local gradient.

    On a hyperplane factor of multiplicity m the gradient of q itself
    vanishes; the gradient of the (m-1)-th directional derivative along the
    probe line does not, and is parallel to the hyperplane normal.
    """
    w = q
    for _ in range(mult - 1):
        w = w.directional_derivative(v)
    if w.is_zero():
        return None
    g = w.gradient_at(z0)
    gn = np.linalg.norm(g)
    if gn < 1e-10 * max(1.0, w.coeff_norm()):
        return None
    g = g / gn
    const = -complex(np.dot(g, z0))
    return Poly.linear_form(g, const)


def _refine_hyperplane(q: Poly, cand: Poly, rng):
    """Least-squares refit of a near-miss hyperplane from projected points."""
    M = q.nvars
    coeffs = np.array([cand.terms.get(tuple(int(i == k) for i in range(M)), 0.0)
                       for k in range(M)], dtype=complex)
    const = cand.constant_term()
    nrm = np.linalg.norm(coeffs)
    if nrm == 0:
        return None
    coeffs, const = coeffs / nrm, const / nrm
    basis = np.linalg.svd(coeffs.reshape(1, -1))[2].conj().T[:, 1:]
    z_base = -const * coeffs.conj()
    pts = []
    for _ in range(4 * (M + 2)):
        if len(pts) >= 2 * (M + 2):
            break
        w = z_base + (basis @ _rand_vec(rng, M - 1) if M > 1 else 0.0)
        s = 0.0 + 0.0j
        ok = False
        for _ in range(30):
            pt = w + s * coeffs.conj()
            fv = q.evaluate(pt)
            dv = complex(np.dot(q.gradient_at(pt), coeffs.conj()))
            if abs(dv) < 1e-14:
                break
            ds = fv / dv
            s -= ds
            if abs(ds) < 1e-14 * (1 + abs(s)):
                ok = True
                break
        if ok and abs(s) < 0.2:
            pts.append(w + s * coeffs.conj())
    if len(pts) < M + 2:
        return None
    A = np.hstack([np.array(pts), np.ones((len(pts), 1))])
    v = np.linalg.svd(A)[2].conj().T[:, -1]
    return Poly.linear_form(v[:M], v[M])


def peel_linear_factors(p: Poly, cfg: FactorizerConfig | None = None, rng=None):
    """Extract all affine hyperplane factors of p.

    Returns (factors, residual_poly).  Every root of p along a generic
    complex line yields a gradient-based hyperplane candidate, accepted only
    if polynomial division certifies it; the residual is returned once three
    independent probe lines in a row produce no new factor.
    """
    cfg = cfg or FactorizerConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if p.total_degree() < 1:
        raise ValueError("peel_linear_factors needs a non-constant input")
    M = p.nvars
    residual = p
    found: dict = {}
    clean = 0
    attempts = 0
    singular_streak = 0
    while residual.total_degree() >= 1 and clean < 3:
        attempts += 1
        if attempts > 3 * cfg.max_loops:
            break
        u = _rand_vec(rng, M, radius=0.7)
        v = _rand_unit(rng, M)
        line = residual.restrict_line(u, v)
        if np.abs(line).max() == 0:
            continue
        deg_line = len(line) - 1
        while deg_line > 0 and abs(line[deg_line]) <= 1e-12 * np.abs(line).max():
            deg_line -= 1
        if deg_line < residual.total_degree():
            continue  # degenerate slice, resample
        roots = univariate_roots(line[:deg_line + 1], cfg.root_tol)
        got = 0
        saw_candidate = False
        for t0, mult in roots:
            if residual.total_degree() < 1:
                break
            z0 = u + t0 * v
            cand = _hyperplane_candidate(residual, z0, v, mult)
            if cand is None:
                continue
            saw_candidate = True
            cand, _ = _normalize_leading(cand)
            quot, res = divide_exact(residual, cand)
            if cfg.verify_tol <= res < 1e-3:
                refined = _refine_hyperplane(residual, cand, rng)
                if refined is not None:
                    refined, _ = _normalize_leading(refined)
                    _, res2 = divide_exact(residual, refined)
                    if res2 < res:
                        cand, res = refined, res2
            if res < cfg.verify_tol:
                residual, m = _peel_multiplicity(residual, cand, cfg.verify_tol)
                if m == 0:
                    continue
                key = _canonical_key(cand)
                if key in found:
                    found[key].multiplicity += m
                else:
                    found[key] = IrreducibleFactor(cand, m, 1)
                got += 1
        if not saw_candidate and roots:
            singular_streak += 1
            if singular_streak > cfg.max_loops:
                raise Inconclusive(
                    "gradient vanished at all sampled roots on repeated probes",
                    partial=list(found.values()))
        else:
            singular_streak = 0
        clean = clean + 1 if got == 0 else 0
    factors = sorted(found.values(), key=lambda f: _canonical_key(f.poly))
    return factors, residual


# ---------------------------------------------------------------------------
# bivariate machinery: fast evaluation, squarefree part, factor count
# ---------------------------------------------------------------------------

class _Bivar:
    """Dense bivariate coefficient table with nested-Horner evaluation."""

    def __init__(self, p: Poly):
        assert p.nvars == 2
        dx = max((m[0] for m in p.terms), default=0)
        dy = max((m[1] for m in p.terms), default=0)
        rows = [[0j] * (dy + 1) for _ in range(dx + 1)]
        for (i, j), c in p.terms.items():
            rows[i][j] = c
        self.rows = rows

    def eval(self, x, y):
        acc = 0j
        for row in reversed(self.rows):
            ry = 0j
            for c in reversed(row):
                ry = ry * y + c
            acc = acc * x + ry
        return acc

    def x_slice(self, y):
        """Coefficients in x (ascending) at fixed y."""
        out = []
        for row in self.rows:
            ry = 0j
            for c in reversed(row):
                ry = ry * y + c
            out.append(ry)
        return np.array(out)


def _dx_chain(p: Poly, upto: int):
    """[p, dp/dx, ..., d^upto p/dx^upto] as _Bivar evaluators."""
    chain = [p]
    for _ in range(upto):
        chain.append(chain[-1].partial(1))
    return [_Bivar(q) for q in chain]


def _bivariate_squarefree(q: Poly, cfg: FactorizerConfig, rng):
    """Squarefree part of a bivariate polynomial, monic in x.

    Uses univariate root clustering on interleaved y-slices and interpolates
    the slice coefficients in y.  Assumes generic coordinates (constant
    leading x-coefficient), which callers arrange by a random rotation.
    """
    u = _rand_vec(rng, 2, 0.7)
    v = _rand_unit(rng, 2)
    if all(m == 1 for _, m in univariate_roots(q.restrict_line(u, v),
                                               cfg.root_tol)):
        return q
    bv = _Bivar(q)
    d = q.total_degree()
    n_samp = 2 * d + 5
    ys = [1.1 * np.exp(2j * math.pi * k / n_samp) + _rand_vec(rng, 1, 0.05)[0]
          for k in range(n_samp)]
    slices = []
    ndistinct = None
    for y in ys:
        roots = univariate_roots(bv.x_slice(y), cfg.root_tol)
        if ndistinct is None:
            ndistinct = len(roots)
        elif len(roots) != ndistinct:
            raise Inconclusive("squarefree slice structure varies across samples")
        slices.append(np.poly([r for r, _ in roots])[::-1])  # monic, ascending
    V = np.vander(np.array(ys), d + 1, increasing=True)
    coeffs = {}
    for xdeg in range(ndistinct + 1):
        vals = np.array([s[xdeg] for s in slices])
        sol, *_ = np.linalg.lstsq(V, vals, rcond=None)
        if np.linalg.norm(V @ sol - vals) > 1e-6 * max(1.0, np.linalg.norm(vals)):
            raise Inconclusive("squarefree interpolation failed to converge")
        for ydeg, c in enumerate(sol):
            if abs(c) > 1e-10:
                coeffs[(xdeg, ydeg)] = c
    return Poly(2, coeffs)


def _ruppert_count(f: Poly, rank_tol=1e-8):
    """Number of absolutely irreducible factors of a squarefree bivariate
    polynomial: the nullity of the linear system
    g_y f - g f_y - h_x f + h f_x = 0 under the standard degree bounds
    deg g <= (m-1, n), deg h <= (m, n-1)."""
    m = max((mo[0] for mo in f.terms), default=0)
    n = max((mo[1] for mo in f.terms), default=0)
    if m == 0 or n == 0:
        coeffs = np.zeros(max(m, n) + 1, dtype=complex)
        for mo, c in f.terms.items():
            coeffs[mo[0] + mo[1]] = c
        return len(univariate_roots(coeffs))
    f = f.scale(1.0 / f.coeff_norm())
    fx, fy = f.partial(1), f.partial(2)

    def shifted(p: Poly, di, dj, scl):
        return [((i + di, j + dj), scl * c) for (i, j), c in p.terms.items()]

    columns = []
    for i in range(m):
        for j in range(n + 1):
            col: dict = {}
            entries = shifted(fy, i, j, -1.0)
            if j > 0:
                entries += shifted(f, i, j - 1, j)
            for mo, c in entries:
                col[mo] = col.get(mo, 0.0) + c
            columns.append(col)
    for i in range(m + 1):
        for j in range(n):
            col = {}
            entries = shifted(fx, i, j, 1.0)
            if i > 0:
                entries += shifted(f, i - 1, j, -i)
            for mo, c in entries:
                col[mo] = col.get(mo, 0.0) + c
            columns.append(col)
    row_index: dict = {}
    for col in columns:
        for mo in col:
            row_index.setdefault(mo, len(row_index))
    A = np.zeros((max(len(row_index), 1), len(columns)), dtype=complex)
    for jcol, col in enumerate(columns):
        for mo, c in col.items():
            A[row_index[mo], jcol] = c
    s = np.linalg.svd(A, compute_uv=False)
    smax = s[0]
    pad = max(len(columns) - len(s), 0)  # implicit zero singular values
    asc = np.concatenate([np.zeros(pad), s[::-1]])
    # the null part must be separated from the structural part by a clear
    # multiplicative gap; structural values shrink with degree, so the
    # decision is gap-based rather than a fixed threshold
    cap = 1e-6 * smax
    small = [i for i in range(len(asc)) if asc[i] < cap]
    if not small:
        return 0
    best_i, best_ratio = None, 0.0
    for i in small:
        if i + 1 >= len(asc):
            continue
        lo = asc[i]
        hi = asc[i + 1]
        ratio = math.inf if lo == 0 else hi / lo
        if ratio >= best_ratio:
            best_ratio, best_i = ratio, i
    if best_i is None or best_ratio < 100.0:
        nlow = int(np.sum(asc < cap / 10))
        nhigh = int(np.sum(asc < cap * 10))
        raise Inconclusive(
            "factor-count rank decision ambiguous", partial=(nlow, nhigh))
    return best_i + 1


def count_absolute_factors(q: Poly, cfg: FactorizerConfig | None = None,
                           rng=None):
    """Distinct absolutely irreducible factors of squarefree(q), q bivariate."""
    cfg = cfg or FactorizerConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    if q.nvars != 2 or q.total_degree() < 1:
        raise ValueError("count_absolute_factors needs a bivariate nonconstant input")
    theta = rng.uniform(0.2, 1.3)
    phase = np.exp(1j * rng.uniform(0, 2 * math.pi))
    R = np.array([[math.cos(theta), math.sin(theta) * phase],
                  [-math.sin(theta) * phase.conjugate(), math.cos(theta)]])
    q2 = q.compose_linear(R)  # generic frame: constant leading x-coefficient
    s = _bivariate_squarefree(q2, cfg, rng)
    return _ruppert_count(s)


# ---------------------------------------------------------------------------
# monodromy splitting
# ---------------------------------------------------------------------------

def _newton_root(f, df, x, min_sep):
    for _ in range(40):
        dv = df(x)
        if abs(dv) < 1e-280:
            raise _TrackFailure("derivative vanished during tracking")
        dx = f(x) / dv
        x = x - dx
        if abs(dx) < 1e-13 * (1 + abs(x)):
            return x
        if abs(dx) > max(4 * min_sep, 1.0):
            raise _TrackFailure("newton step exploded")
    raise _TrackFailure("newton failed to converge on path step")


def _match_permutation(start, end, min_sep):
    """Nearest-neighbour bijection of loop endpoints onto start slots."""
    k = len(start)
    used = [False] * k
    perm: list = [None] * k
    for dist, i, j in sorted((abs(end[i] - start[j]), i, j)
                             for i in range(k) for j in range(k)):
        if perm[i] is None and not used[j]:
            if dist > 0.45 * min_sep:
                raise _TrackFailure("loop endpoint far from every start root")
            perm[i] = j
            used[j] = True
    return perm


class _PlaneSection:
    """Distinct x-roots of h on an affine plane slice, with multiplicity-aware
    tracking: an m-fold root is followed on the (m-1)-th x-derivative."""

    def __init__(self, h: Poly, a, u, v, y0, cfg, xs=None, mults=None, q2=None):
        self.a, self.u, self.v, self.y0 = a, u, v, y0
        self.q2 = q2 if q2 is not None else h.restrict_plane(a, u, v)
        if xs is None:
            roots = univariate_roots(_Bivar(self.q2).x_slice(y0), cfg.root_tol)
            xs = [r for r, _ in roots]
            mults = [m for _, m in roots]
        self.xs = list(xs)
        self.mults = list(mults)
        self.chain = _dx_chain(self.q2, max(self.mults))
        self.min_sep = min((abs(a_ - b_) for i, a_ in enumerate(self.xs)
                            for b_ in self.xs[:i]), default=1.0)
        if self.min_sep < 1e-6:
            raise _TrackFailure("plane slice roots nearly collide")

    def fun_pair(self, k):
        mu = self.mults[k]
        return self.chain[mu - 1], self.chain[mu]

    def track_to_y(self, k, x, y_path):
        fe, dfe = self.fun_pair(k)
        for y in y_path:
            x = _newton_root(lambda t: fe.eval(t, y), lambda t: dfe.eval(t, y),
                             x, self.min_sep)
        return x

    def track_all_to_y(self, y_path):
        """Track every slice root along a path, insisting that roots stay
        separated at every step; maintained separation certifies that no
        tracker jumped onto a neighbouring component."""
        xs = list(self.xs)
        guard = 0.25 * self.min_sep
        for y in y_path:
            for k in range(len(xs)):
                fe, dfe = self.fun_pair(k)
                xs[k] = _newton_root(lambda t: fe.eval(t, y),
                                     lambda t: dfe.eval(t, y),
                                     xs[k], self.min_sep)
            for i in range(len(xs)):
                for j in range(i):
                    if abs(xs[i] - xs[j]) < guard:
                        raise _TrackFailure("roots approached during tracking")
        return xs

    def loop(self, center, steps):
        """Monodromy permutation from one circular loop through y0."""
        ts = np.linspace(0.0, 1.0, steps + 1)[1:]
        path = [center + (self.y0 - center) * np.exp(2j * math.pi * t)
                for t in ts]
        finals = [self.track_to_y(k, self.xs[k], path)
                  for k in range(len(self.xs))]
        return _match_permutation(self.xs, finals, self.min_sep)

    def loop_around(self, b, rho, steps):
        """Permutation from a keyhole loop: walk towards branch point b,
        circle it once at radius rho, walk back."""
        direction = self.y0 - b
        dist = abs(direction)
        if dist < 2 * rho:
            return self.loop(b, steps)
        unit = direction / dist
        entry = b + rho * unit
        seg = [self.y0 + (entry - self.y0) * s
               for s in np.linspace(0, 1, 13)[1:]]
        circle = [b + rho * unit * np.exp(2j * math.pi * t)
                  for t in np.linspace(0, 1, steps + 1)[1:]]
        path = seg + circle + seg[::-1][1:] + [self.y0]
        finals = [self.track_to_y(k, self.xs[k], path)
                  for k in range(len(self.xs))]
        return _match_permutation(self.xs, finals, self.min_sep)

    def branch_points(self, cfg):
        """Approximate y-locations where distinct x-roots collide.

        The reduced discriminant (squared differences of the distinct slice
        roots) is a polynomial in y; it is sampled on a circle and recovered
        by least squares, and its roots are the loop targets.  Returns None
        when the slice structure is too irregular to fit.
        """
        d = self.q2.total_degree()
        K = len(self.xs)
        if K < 2:
            return []
        dd = d * (d - 1)
        n = 2 * dd + 9
        R = 1.9
        # fit in w = y/R on the unit circle, where the Vandermonde columns
        # are perfectly conditioned
        ws = np.exp(2j * math.pi * (np.arange(n) + 0.37) / n)
        vals = []
        bv = _Bivar(self.q2)
        for w in ws:
            try:
                roots = univariate_roots(bv.x_slice(R * w), cfg.root_tol)
            except (ValueError, ZeroStateError):
                return None
            if len(roots) != K:
                return None
            xs = [r for r, _ in roots]
            disc = 1.0 + 0.0j
            for i in range(K):
                for j in range(i):
                    disc *= (xs[i] - xs[j]) ** 2
            vals.append(disc)
        vals = np.array(vals)
        top_val = np.abs(vals).max()
        if top_val == 0:
            return None
        V = np.vander(ws, dd + 1, increasing=True)
        sol, *_ = np.linalg.lstsq(V, vals / top_val, rcond=None)
        top = np.abs(sol).max()
        if top == 0:
            return []
        deg = dd
        while deg > 0 and abs(sol[deg]) <= 1e-10 * top:
            deg -= 1
        if deg == 0:
            return []
        w_roots = np.roots(sol[:deg + 1][::-1])
        return [R * w for w in w_roots if abs(w) < 2.0]

    def point(self, x, y):
        return self.a + x * self.u + y * self.v


def _homotopy_to_plane(h, sec: _PlaneSection, a1, u1, v1, steps=14):
    """Continue all slice roots of sec onto a new plane (y held fixed),
    with the same separation guard as track_all_to_y."""
    xs = list(sec.xs)
    max_mu = max(sec.mults)
    guard = 0.25 * sec.min_sep
    for s in np.linspace(0.0, 1.0, steps + 1)[1:]:
        a = (1 - s) * sec.a + s * a1
        u = (1 - s) * sec.u + s * u1
        v = (1 - s) * sec.v + s * v1
        chain = _dx_chain(h.restrict_plane(a, u, v), max_mu)
        for k in range(len(xs)):
            fe, dfe = chain[sec.mults[k] - 1], chain[sec.mults[k]]
            xs[k] = _newton_root(lambda t: fe.eval(t, sec.y0),
                                 lambda t: dfe.eval(t, sec.y0),
                                 xs[k], sec.min_sep)
        for i in range(len(xs)):
            for j in range(i):
                if abs(xs[i] - xs[j]) < guard:
                    raise _TrackFailure("roots approached during homotopy")
    return xs


def _group_section_roots(h, sec: _PlaneSection, target, cfg, rng):
    """Union-find over monodromy permutations until `target` groups remain.

    Raises _TrackFailure if the target could not be reached, so the caller
    can retry the whole grouping on a fresh plane section.
    """
    K = len(sec.xs)
    uf = UnionFind(K)

    def absorb(perm):
        changed = False
        for i, j in enumerate(perm):
            if i != j and uf.union(i, j):
                changed = True
        return changed

    # grouping always runs on a squarefree section: tracking a repeated root
    # on a derivative jumps branches exactly at the loop targets
    if all(mu == 1 for mu in sec.mults):
        gsec = sec
    else:
        s = _bivariate_squarefree(sec.q2, cfg, rng)
        gsec = _PlaneSection(h, sec.a, sec.u, sec.v, sec.y0, cfg, q2=s)
        if len(gsec.xs) != K:
            raise Inconclusive("squarefree section lost slice roots")
        perm_align = _match_permutation(sec.xs, gsec.xs, sec.min_sep)
        gsec.xs = [gsec.xs[perm_align.index(k)] for k in range(K)]
        gsec.mults = [1] * K

    # primary pass: one keyhole loop per branch point gives a generating set
    # of the monodromy group, so the orbits are complete; on tracking trouble
    # a branch point is retried with a tighter, finer loop
    bps = gsec.branch_points(cfg) if uf.count > target else []
    if bps is None:
        bps = []
    for b in bps:
        if uf.count <= target:
            break
        others = [abs(b - o) for o in bps if abs(b - o) > 1e-9]
        rho0 = max(min(0.3, 0.25 * min(others, default=1.0)), 1e-4)
        for k in range(3):
            try:
                absorb(gsec.loop_around(b, rho0 * 0.5 ** k,
                                        cfg.loop_steps * 2 ** k))
                break
            except _TrackFailure:
                continue

    # fallback: random circles through the base point, reaching further out
    loops_done = 0
    clean = 0
    while loops_done < cfg.max_loops and clean < 4 and uf.count > target:
        center = gsec.y0 + _rand_vec(rng, 1, 1.0)[0] * rng.uniform(0.4, 3.0)
        try:
            perm = gsec.loop(center, cfg.loop_steps)
        except _TrackFailure:
            loops_done += 1
            continue
        loops_done += 1
        clean = 0 if absorb(perm) else clean + 1

    if uf.count > target:
        raise _TrackFailure("grouping did not reach the certified count")
    return uf


def monodromy_split(h: Poly, cfg: FactorizerConfig | None = None, rng=None,
                    expected_count=None):
    """Split a residual with no hyperplane factors into distinct irreducible
    factors; returns a list of (poly, slice_multiplicity) pairs.

    Roots of a generic plane section are grouped by the permutations induced
    by loops in the slice parameter (union-find over loop images), the group
    count is certified against the PDE-based factor count, and each group's
    component is sampled across several planes so its defining polynomial can
    be fitted as the one-dimensional kernel of a monomial evaluation matrix,
    certified by division.
    """
    cfg = cfg or FactorizerConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    d = h.total_degree()
    if d < 2:
        raise ValueError("monodromy_split expects degree >= 2")
    h = h.scale(1.0 / h.coeff_norm())
    E = h.nvars

    def fresh_section():
        for _ in range(8):
            try:
                a, u, v = _rand_plane(rng, E)
                y0 = 0.8 + 0.31j + _rand_vec(rng, 1, 0.1)[0]
                cand = _PlaneSection(h, a, u, v, y0, cfg)
                if cand.q2.total_degree() == d:
                    return cand
            except (_TrackFailure, ZeroStateError):
                continue
        raise Inconclusive("no usable plane section found")

    sec = fresh_section()
    target = expected_count
    if target is None:
        target = count_absolute_factors(sec.q2, cfg, rng)

    uf = None
    for attempt in range(3):
        if attempt:
            try:
                sec = fresh_section()
            except Inconclusive:
                break
        try:
            uf = _group_section_roots(h, sec, target, cfg, rng)
            break
        except _TrackFailure:
            uf = None
            continue
    if uf is None or uf.count != target:
        found = uf.count if uf is not None else "no"
        raise Inconsistency(
            f"monodromy found {found} component(s) but the factor "
            f"count certificate says {target}")
    K = len(sec.xs)
    groups = uf.groups()

    label_of = {}
    for gi, grp in enumerate(groups):
        mus = {sec.mults[k] for k in grp}
        if len(mus) != 1:
            raise Inconclusive("component carries mixed slice multiplicities")
        for k in grp:
            label_of[k] = gi
    mult_of = [sec.mults[grp[0]] for grp in groups]

    if len(groups) == 1 and mult_of[0] == 1:
        normalized, _ = _normalize_leading(h)
        return [(normalized, 1)]

    need = {}
    for gi, grp in enumerate(groups):
        n_mon = len(monomials_upto(E, len(grp)))
        need[gi] = max(int(math.ceil(cfg.samples_per_component_factor * n_mon)),
                       n_mon + 2)
    points: dict = {gi: [] for gi in range(len(groups))}

    def on_variety(z):
        return abs(h.evaluate(z)) <= 1e-7 * (1 + np.linalg.norm(z)) ** d

    def harvest(section: _PlaneSection, per_group_cap):
        counts = {gi: 0 for gi in points}
        for k in range(K):
            gi = label_of[k]
            z = section.point(section.xs[k], section.y0)
            if counts[gi] < per_group_cap and on_variety(z):
                points[gi].append(z)
                counts[gi] += 1
        tries = 0
        radius = 1.0
        while (any(counts[gi] < per_group_cap for gi in counts)
               and tries < 6 * per_group_cap):
            tries += 1
            y_next = section.y0 + _rand_vec(rng, 1, radius)[0]
            path = [section.y0 + (y_next - section.y0) * s
                    for s in np.linspace(0, 1, 12)[1:]]
            try:
                xs_there = section.track_all_to_y(path)
            except _TrackFailure:
                radius = max(0.25, 0.8 * radius)  # shorter, safer excursions
                continue
            for k in range(K):
                gi = label_of[k]
                if counts[gi] >= per_group_cap:
                    continue
                z = section.point(xs_there[k], y_next)
                if on_variety(z):
                    points[gi].append(z)
                    counts[gi] += 1

    max_deg = max(len(grp) for grp in groups)
    if E == 2:
        # the affine chart covers all of C^2: y-slices alone spread samples
        cap = max(need.values())
        harvest(sec, cap)
    else:
        # points must come from enough distinct planes, otherwise products of
        # plane equations pollute the fit kernel
        n_planes = max_deg + 2
        cap = max(2, math.ceil(max(need.values()) / n_planes))
        harvest(sec, cap)
        budget = cfg.max_loops
        planes_done = 1
        while budget > 0 and (planes_done < n_planes or
                              any(len(points[g]) < need[g] for g in need)):
            budget -= 1
            a1, u1, v1 = _rand_plane(rng, E)
            try:
                xs_new = _homotopy_to_plane(h, sec, a1, u1, v1)
                sec2 = _PlaneSection(h, a1, u1, v1, sec.y0, cfg,
                                     xs=xs_new, mults=sec.mults)
            except (_TrackFailure, ZeroStateError):
                continue
            if not all(on_variety(sec2.point(x, sec2.y0)) for x in xs_new):
                continue
            harvest(sec2, cap)
            planes_done += 1
        if planes_done < n_planes:
            raise Inconclusive(
                "could not reach enough independent planes for sampling")

    results = []
    for gi, grp in enumerate(groups):
        if len(points[gi]) < need[gi]:
            raise Inconclusive(
                f"could not sample enough points on a degree-{len(grp)} component")
        f_i = _fit_component(h, points[gi], len(grp), E, cfg)
        results.append((f_i, mult_of[gi]))
    return results


def _fit_component(h, pts, d_i, E, cfg):
    monos = monomials_upto(E, d_i)
    A = np.zeros((len(pts), len(monos)), dtype=complex)
    for r, z in enumerate(pts):
        powers = []
        for j in range(E):
            col = [1.0 + 0.0j]
            for _ in range(d_i):
                col.append(col[-1] * z[j])
            powers.append(col)
        for cidx, mo in enumerate(monos):
            val = 1.0 + 0.0j
            for j, e in enumerate(mo):
                if e:
                    val *= powers[j][e]
            A[r, cidx] = val
    _, s, vh = np.linalg.svd(A)
    if s[0] == 0:
        raise Inconclusive("degenerate component sample matrix")
    if s[-1] > 1e-7 * s[0] or (len(s) > 1 and s[-2] < 1e-4 * s[0]):
        raise Inconclusive("component fit kernel is not one-dimensional")
    vec = vh.conj().T[:, -1]
    f = Poly(E, {mo: vec[i] for i, mo in enumerate(monos)})
    f, _ = _normalize_leading(f)
    _, res = divide_exact(h, f)
    if res >= cfg.verify_tol:
        raise Inconclusive(
            f"fitted component fails division certification (residual {res:.2e})")
    return f


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def _univariate_factors(q: Poly, cfg):
    coeffs = np.zeros(q.total_degree() + 1, dtype=complex)
    for m, c in q.terms.items():
        coeffs[m[0]] = c
    return [(Poly(1, {(1,): 1.0 + 0j, (0,): -root}), mult)
            for root, mult in univariate_roots(coeffs, cfg.root_tol)]


def _homogeneous_bivariate_factors(q: Poly, cfg):
    """Linear factors of a homogeneous bivariate polynomial from the root
    pattern of the dehomogenization q(1, t)."""
    r = q.total_degree()
    coeffs = np.zeros(r + 1, dtype=complex)
    for (i, j), c in q.terms.items():
        coeffs[j] = c
    top = np.abs(coeffs).max()
    deg_t = r
    while deg_t > 0 and abs(coeffs[deg_t]) <= 1e-13 * top:
        deg_t -= 1
    out = []
    if r - deg_t > 0:
        out.append((Poly(2, {(1, 0): 1.0 + 0j}), r - deg_t))
    if deg_t >= 1:
        for root, mult in univariate_roots(coeffs[:deg_t + 1], cfg.root_tol):
            f, _ = _normalize_leading(
                Poly(2, {(0, 1): 1.0 + 0j, (1, 0): -root}))
            out.append((f, mult))
    return out


def _is_homogeneous(p: Poly):
    return len({sum(m) for m in p.terms}) == 1


def factor(p: Poly, cfg: FactorizerConfig | None = None) -> Factorization:
    """Factor p into irreducible factors with multiplicities.

    Postconditions: sum(degree * multiplicity) equals the total degree and
    the reconstruction residual is below cfg.verify_tol; otherwise
    Inconclusive is raised with the partial factorization attached.
    """
    cfg = cfg or FactorizerConfig()
    rng = np.random.default_rng(cfg.seed)
    if p.is_zero():
        raise ZeroStateError("cannot factor the zero polynomial")
    trace = []
    M = p.nvars
    r = p.total_degree()
    scalar = 1.0 + 0.0j
    factors: list[IrreducibleFactor] = []

    work = p
    if r == 0:
        return Factorization(work.constant_term(), [], 0.0, ["constant"])

    shifts = [work.min_exponent(j) for j in range(1, M + 1)]
    if any(shifts):
        trace.append("content")
        work = Poly(M, {tuple(e - s for e, s in zip(m, shifts)): c
                        for m, c in work.terms.items()}, work.coeff_tol)
        for j, s in enumerate(shifts):
            if s:
                factors.append(IrreducibleFactor(Poly.variable(M, j + 1), s, 1))

    if work.total_degree() == 0:
        scalar *= work.constant_term()
        factors.sort(key=lambda f: _canonical_key(f.poly))
        fz = Factorization(scalar, factors, 0.0, trace + ["monomial"])
        fz.residual = _verify(p, fz)
        return fz

    space = essential_space(work, DEFAULT_RANK_TOL)
    if space.dim == M:
        red, V = work, None
    else:
        V = space.unitary()
        red = work.compose_linear(V).restrict_vars(max(space.dim, 1))
        trace.append(f"essential_reduce({space.dim})")
    E = red.nvars

    if E == 1:
        trace.append("univariate_roots")
        reduced_factors = _univariate_factors(red, cfg)
    elif E == 2 and _is_homogeneous(red):
        trace.append("homogeneous_bivariate")
        reduced_factors = _homogeneous_bivariate_factors(red, cfg)
    else:
        lin, resid = peel_linear_factors(red, cfg, rng)
        if lin:
            trace.append("linear_peel")
        reduced_factors = [(f.poly, f.multiplicity) for f in lin]
        rd = resid.total_degree()
        if rd == 1:
            f, _ = _normalize_leading(resid)
            reduced_factors.append((f, 1))
        elif rd >= 2:
            trace.append("monodromy")
            try:
                reduced_factors.extend(monodromy_split(resid, cfg, rng))
            except Inconclusive as exc:
                raise Inconclusive(
                    str(exc), partial=Factorization(scalar, factors, 1.0, trace)
                ) from exc

    # multiplicities re-derived by repeated certified division
    cur = red
    final_reduced = []
    for f, _hint in reduced_factors:
        cur, mult = _peel_multiplicity(cur, f, cfg.verify_tol)
        if mult == 0:
            raise Inconclusive(
                "candidate factor fails division during assembly",
                partial=Factorization(scalar, factors, 1.0, trace))
        final_reduced.append((f, mult))
    if cur.total_degree() != 0:
        raise Inconclusive(
            f"assembly left a degree-{cur.total_degree()} residual",
            partial=Factorization(scalar, factors, 1.0, trace))
    scalar *= cur.constant_term()

    for f, mult in final_reduced:
        g = f.extend_vars(M)
        if V is not None:
            g = g.compose_linear(V.conj().T)
        g, lc = _normalize_leading(g)
        scalar *= lc ** mult
        factors.append(IrreducibleFactor(g, mult, g.total_degree()))

    factors.sort(key=lambda f: _canonical_key(f.poly))
    fz = Factorization(scalar, factors, 0.0, trace + ["verified"])
    fz.residual = _verify(p, fz)
    if fz.total_degree() != r:
        raise Inconclusive(
            f"degree conservation violated: {fz.total_degree()} != {r}",
            partial=fz)
    if fz.residual >= cfg.verify_tol:
        raise Inconclusive(
            f"reconstruction residual {fz.residual:.2e} exceeds "
            f"verify_tol {cfg.verify_tol:.1e}", partial=fz)
    return fz


def _verify(p: Poly, fz: Factorization) -> float:
    recon = fz.reconstruct(p.nvars)
    denom = p.coeff_norm()
    return (recon - p).coeff_norm() / denom if denom else 0.0
