"""Cauchy transforms near the real axis and the spectral data read from them.

The main route follows one root branch of a verified annihilator
``P(z, G(z)) = 0`` from the region where the moment series converges down
to ``x + i eps`` and inverts the transform (Stieltjes inversion).  Densities,
atom masses, support components, the log-energy ``int ln t dmu`` and the
Novikov-Shubin exponent are derived from the resulting samples.
"""
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "DEFAULT_EPS_LADDER", "ATOM_THRESHOLD", "SNAP_TOL",
    "BranchError", "BranchCollision", "SeedMismatch", "HalfPlaneViolation",
    "NonConvergentLadder", "OffGridMass", "DegenerateAnnihilator",
    "InsufficientDecades",
    "eval_g_series", "series_tail_bound", "BranchState", "eval_g_branch",
    "branch_ladder", "DensityProfile", "density_profile", "atom_candidates",
    "atom_mass", "extrapolate_ladder", "AtiyahGrid", "snap_to_grid",
    "support_components", "integrate_density", "component_masses", "SpectralMeasureModel",
    "LogEnergy", "log_energy", "novikov_shubin", "pencil_density", "scan_atoms",
]

DEFAULT_EPS_LADDER = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
ATOM_THRESHOLD = 1e-4
SNAP_TOL = 1e-2
RESIDUAL_TOL = 1e-10
_SEED_TAIL = 1e-9        # series tail required at the seed point
_MIN_LOG_STEP = 1e-12    # smaller continuation steps are reported as collisions
_MAX_LOG_STEP = math.log(10.0)


class BranchError(ArithmeticError):
    """Root-branch continuation failed at one point."""

    def __init__(self, message, x=None, height=None):
        super().__init__(message)
        self.x = x
        self.height = height


class BranchCollision(BranchError):
    """Another root came within resolution of the tracked one."""


class SeedMismatch(BranchError):
    """No root of P near the series value at the seed point."""


class HalfPlaneViolation(BranchError):
    """The tracked root left the closed lower half-plane."""


class NonConvergentLadder(ArithmeticError):
    """Residue estimates oscillate along the eps ladder."""


class OffGridMass(ValueError):
    """A mass is not within tolerance of the Atiyah grid."""


class DegenerateAnnihilator(ValueError):
    """The discriminant of P with respect to g vanishes identically."""


class InsufficientDecades(ValueError):
    """Fewer than two decades of resolved samples near 0."""


# -- series ------------------------------------------------------------------

def _float_moments(m):
    return np.array([float(v) for v in m.values])


def series_tail_bound(z, m, norm_bound=None):
    """``(R/|z|)^(K+1) / (|z| - R)``, the truncation bound of :func:`eval_g_series`."""
    r = float(m.element_norm_bound if norm_bound is None else norm_bound)
    az = abs(complex(z))
    if az <= r:
        raise ValueError(f"|z| = {az} must exceed the norm bound {r}")
    return (r / az) ** (m.order + 1) / (az - r)


def eval_g_series(z, m, norm_bound=None, with_bound=False):
    """Truncated Laurent series ``sum_k m_k / z^(k+1)``.

    Parameters
    ----------
    z : complex
        Point with ``|z| > norm_bound``.
    m : MomentSequence
    norm_bound : float, optional
        Defaults to ``m.element_norm_bound``.
    with_bound : bool
        Also return the tail bound.
    """
    z = complex(z)
    tail = series_tail_bound(z, m, norm_bound)
    w = 1.0 / z
    acc = 0j
    for v in _float_moments(m)[::-1]:
        acc = acc * w + v
    value = acc * w
    return (value, tail) if with_bound else value


# -- branch continuation ------------------------------------------------------

@dataclass
class BranchState:
    """Current point and tracked root of a continuation."""

    z: complex
    g: complex


def _coef_matrix(p):
    return np.array(p.coefficients, dtype=float)  # (deg_z+1, deg_g+1)


def _g_coefficients(c, z):
    """Rows of g-coefficients (lowest power first) at each z."""
    zp = z[:, None] ** np.arange(c.shape[0])[None, :]
    return zp @ c


def _roots_batch(q):
    """Roots of each row polynomial (lowest power first); missing roots are inf."""
    npts, width = q.shape
    deg = width - 1
    out = np.full((npts, deg), np.inf + 0j)
    if deg == 0:
        return out
    scale = np.abs(q).max(axis=1)
    lead = q[:, -1]
    good = np.abs(lead) > 1e-13 * np.where(scale > 0, scale, 1)
    if deg == 1:
        out[good, 0] = -q[good, 0] / q[good, 1]
    elif good.any():
        comp = np.zeros((good.sum(), deg, deg), complex)
        comp[:, 1:, :-1] = np.eye(deg - 1)
        comp[:, :, -1] = -q[good, :-1] / lead[good, None]
        out[good] = np.linalg.eigvals(comp)
    for i in np.flatnonzero(~good):
        r = np.roots(q[i, ::-1])
        out[i, :r.size] = r
    return out


def _polish(c, z, g, steps=2):
    """Newton steps in g at fixed z; returns polished roots and residuals."""
    q = _g_coefficients(c, z)
    powers = np.arange(q.shape[1])
    dq = q[:, 1:] * powers[1:]
    for _ in range(steps):
        gp = g[:, None] ** powers
        val = (q * gp).sum(axis=1)
        der = (dq * gp[:, :-1]).sum(axis=1) if dq.shape[1] else np.zeros_like(g)
        ok = np.abs(der) > 0
        g = np.where(ok, g - np.where(ok, val / np.where(ok, der, 1), 0), g)
    gp = g[:, None] ** powers
    scale = (np.abs(q) * np.abs(gp)).sum(axis=1)
    res = np.abs((q * gp).sum(axis=1)) / np.where(scale > 0, scale, 1)
    return g, res


def _slope(c, z, g):
    """``dg/dz = -P_z / P_g`` along the branch."""
    cz = c[1:] * np.arange(1, c.shape[0])[:, None] if c.shape[0] > 1 else np.zeros_like(c)
    powers = np.arange(c.shape[1])
    gp = g[:, None] ** powers
    qz = _g_coefficients(cz, z) if cz.size else np.zeros((z.size, c.shape[1]))
    pz = (qz * gp).sum(axis=1)
    q = _g_coefficients(c, z)
    pg = (q[:, 1:] * powers[1:] * gp[:, :-1]).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = -pz / pg
    return np.where(np.isfinite(out), out, 0)


def _match(rts, pred, scale):
    """Root nearest to the prediction in the coordinate ``scale * g``.

    Returns the root, its distance to the prediction and its distance to the
    nearest other root, both measured in the scaled coordinate.
    """
    rows = np.arange(rts.shape[0])
    scale = np.reshape(scale, (-1, 1))
    d = np.abs(rts * scale - np.reshape(pred, (-1, 1)))
    k = np.argmin(d, axis=1)
    cand = rts[rows, k]
    other = np.abs(rts - cand[:, None]) * np.abs(scale)
    other[rows, k] = np.inf
    return cand, d[rows, k], other.min(axis=1)


def _seed(p, xs, moments, norm_bound):
    """Seed heights and branch values, one per point."""
    r = float(norm_bound)
    xs = np.asarray(xs, float)
    if moments is not None:
        heights = np.full(xs.shape, r + 1.0)
        vals = np.empty(xs.shape, complex)
        tails = np.empty(xs.shape)
        for i, x in enumerate(xs):
            y = heights[i]
            # raise the seed until the truncated series is trustworthy
            while series_tail_bound(complex(x, y), moments, r) > _SEED_TAIL:
                y *= 1.5
            heights[i] = y
            vals[i], tails[i] = eval_g_series(complex(x, y), moments, r, with_bound=True)
        return heights, vals, tails
    # no moments: far seed where G(z) = 1/z + O(R / |z|^2)
    heights = 1e4 * (r + 1.0) + np.abs(xs)
    z = xs + 1j * heights
    az = np.abs(z)
    return heights, 1.0 / z, r / (az * (az - r))


def branch_ladder(p, xs, eps_ladder, norm_bound, moments=None, sign=1):
    """Branch values at ``x + i*sign*eps`` for every x and every ladder level.

    Returns
    -------
    values : ndarray, shape (len(xs), len(eps_ladder))
        NaN where the continuation failed.
    errors : list
        ``None`` or the :class:`BranchError` of each point.
    """
    xs = np.atleast_1d(np.asarray(xs, float))
    targets = np.asarray(sorted(eps_ladder, reverse=True), float)
    if np.any(targets <= 0):
        raise ValueError("eps values must be positive")
    c = _coef_matrix(p)
    npts = xs.size
    values = np.full((npts, targets.size), np.nan + 0j)
    errors = [None] * npts
    y0, g_seed, tails = _seed(p, xs, moments, norm_bound)

    # identify the tracked root at the seed
    z0 = xs + 1j * y0
    roots = _roots_batch(_g_coefficients(c, z0))
    dist = np.abs(roots - g_seed[:, None])
    k = np.argmin(dist, axis=1)
    g = roots[np.arange(npts), k]
    g, _ = _polish(c, z0, g)
    near = dist[np.arange(npts), k]
    active = np.ones(npts, bool)
    for i in np.flatnonzero(near > 10 * tails + 1e-8 * (1 + np.abs(g_seed))):
        errors[i] = SeedMismatch(
            f"no root of P within {near[i]:.3g} of the series value at x={xs[i]:.6g}",
            xs[i], y0[i])
        active[i] = False

    y = y0.copy()
    step = np.full(npts, _MAX_LOG_STEP)
    level = np.zeros(npts, int)
    for _ in range(100000):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        tgt = targets[level[idx]]
        y_new = np.maximum(y[idx] * np.exp(-step[idx]), tgt)
        z_new = xs[idx] + 1j * y_new
        rts = _roots_batch(_g_coefficients(c, z_new))
        # tangent predictors in g and in u = (z - x) g; u stays smooth near
        # poles of G on the real axis, g elsewhere
        dz = 1j * (y_new - y[idx])
        slope = _slope(c, xs[idx] + 1j * y[idx], g[idx])
        pred_g = g[idx] + slope * dz
        pred_u = 1j * y[idx] * g[idx] + (g[idx] + 1j * y[idx] * slope) * dz
        cand, moved, gap = _match(rts, pred_g, np.ones(idx.size))
        cand_u, moved_u, gap_u = _match(rts, pred_u, 1j * y_new)
        # a step is trusted when the tangent model is locally accurate: the
        # slope change over the step stays small against the root gap
        slope_g = _slope(c, z_new, cand)
        slope_u = _slope(c, z_new, cand_u)
        curv_g = 0.5 * np.abs(slope_g - slope) * np.abs(dz)
        curv_u = 0.5 * np.abs((cand_u + 1j * y_new * slope_u)
                              - (g[idx] + 1j * y[idx] * slope)) * np.abs(dz)
        ok_g = (moved < 0.25 * gap) & (curv_g < 0.25 * gap)
        use_u = ~ok_g & (moved_u < 0.25 * gap_u) & (curv_u < 0.25 * gap_u)
        cand = np.where(use_u, cand_u, cand)
        gap = np.where(use_u, gap_u / y_new, gap)
        upper = np.imag(cand) > 1e-8 * (1 + np.abs(cand))
        accept = (ok_g | use_u) & ~upper
        collide = gap < 1e-12 * (1 + np.abs(cand))
        if accept.any():
            a = idx[accept]
            za = z_new[accept]
            new_g, res = _polish(c, za, cand[accept])
            # Newton could have crossed to another root: keep eigen-root then
            jumped = np.abs(new_g - cand[accept]) > 0.25 * gap[accept]
            new_g = np.where(jumped, cand[accept], new_g)
            g[a] = new_g
            y[a] = y_new[accept]
            step[a] = np.minimum(step[a] * 1.5, _MAX_LOG_STEP)
            bad = np.imag(new_g) > 1e-8 * (1 + np.abs(new_g))
            for i in a[bad]:
                errors[i] = HalfPlaneViolation(
                    f"Im g = {g[i].imag:.3g} > 0 at x={xs[i]:.6g}, y={y[i]:.3g}", xs[i], y[i])
                active[i] = False
            hit = (y[a] == targets[level[a]]) & active[a]
            for i in a[hit]:
                values[i, level[i]] = g[i]
                level[i] += 1
                if level[i] == targets.size:
                    active[i] = False
        rej = idx[~accept]
        step[rej] *= 0.5
        for i, col, up in zip(rej, collide[~accept], upper[~accept]):
            if step[i] < _MIN_LOG_STEP and up:
                errors[i] = HalfPlaneViolation(
                    f"only roots with Im g > 0 near x={xs[i]:.6g} at height {y[i]:.3g}",
                    xs[i], y[i])
                active[i] = False
            elif col or step[i] < _MIN_LOG_STEP:
                errors[i] = BranchCollision(
                    f"root collision near x={xs[i]:.6g} at height {y[i]:.3g}", xs[i], y[i])
                active[i] = False
    if sign < 0:
        values = np.conj(values)
    order = np.argsort(np.argsort(-np.asarray(eps_ladder, float), kind="stable"),
                       kind="stable")
    return values[:, order], errors


def eval_g_branch(x, eps, p, norm_bound, moments=None):
    """Value at ``x + i eps`` of the branch of ``P = 0`` that equals ``G`` at infinity.

    The branch is seeded at ``x + i(norm_bound + 1)`` from the moment series
    (raised until the series tail is below 1e-9) or, without moments, far up
    the imaginary direction from ``G ~ 1/z``; it is then continued downward
    with steps on which the tracked root moves less than half its distance
    to the nearest other root.  A negative ``eps`` evaluates the reflected
    value ``conj(G(x + i|eps|))``.
    """
    if eps == 0:
        raise ValueError("eps must be nonzero")
    vals, errs = branch_ladder(p, [x], [abs(eps)], norm_bound, moments,
                               sign=1 if eps > 0 else -1)
    if errs[0] is not None:
        raise errs[0]
    return complex(vals[0, 0])


# -- densities ------------------------------------------------------------------

@dataclass
class DensityProfile:
    """Density samples on a uniform grid.

    ``raw`` holds ``-Im G / pi`` at the smallest eps before extrapolation;
    ``skipped`` lists ``(x, reason)`` for points whose branch failed (their
    ``f`` is NaN).
    """

    x: np.ndarray
    f: np.ndarray
    raw: np.ndarray
    skipped: list = field(default_factory=list)
    route: str = "annihilator"

    @property
    def step(self):
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else 0.0

    def finite(self):
        ok = np.isfinite(self.f)
        return self.x[ok], self.f[ok]

    def mass(self):
        x, f = self.x, np.nan_to_num(self.f)
        return float(np.trapezoid(f, x)) if x.size > 1 else 0.0


def _richardson(values, eps):
    """Order-1 extrapolation to eps = 0 from the two smallest levels."""
    if values.shape[1] < 2:
        return values[:, -1]
    ea, eb = eps[-2], eps[-1]
    return (ea * values[:, -1] - eb * values[:, -2]) / (ea - eb)


def _finish_density(x, samples, eps, skipped, route, clip_tol):
    raw = samples[:, -1]
    f = _richardson(samples, eps)
    f = np.where(np.isfinite(f) & (f < 0) & (f > -clip_tol), 0.0, f)
    f = np.where(np.isfinite(f), np.maximum(f, 0.0), f)
    return DensityProfile(np.asarray(x, float), f, raw, skipped, route)


def density_profile(p, grid, eps_ladder=DEFAULT_EPS_LADDER, norm_bound=None,
                    moments=None, clip_tol=1e-3):
    """Stieltjes inversion along the branch of ``p`` on a grid.

    ``f(x) = -Im G(x + i eps) / pi`` at every ladder level, extrapolated to
    eps = 0 with order-1 Richardson on the two smallest levels and clipped
    at 0.  Failed points are skipped and reported.
    """
    if norm_bound is None:
        if moments is None:
            raise ValueError("need a norm bound or a moment sequence")
        norm_bound = float(moments.element_norm_bound)
    eps = np.array(sorted(eps_ladder, reverse=True), float)
    vals, errs = branch_ladder(p, grid, eps, norm_bound, moments)
    samples = -vals.imag / math.pi
    skipped = [(float(x), str(e)) for x, e in zip(np.atleast_1d(grid), errs) if e is not None]
    return _finish_density(grid, samples, eps, skipped, "annihilator", clip_tol)


# -- atoms ----------------------------------------------------------------------

def atom_candidates(p, norm_bound=None, tol=1e-8):
    """Real zeros of disc_g(P) and of the leading g-coefficient.

    Raises
    ------
    DegenerateAnnihilator
        If the discriminant vanishes identically (P has a repeated factor in g).
    """
    import sympy

    expr, z, g = p.to_sympy()
    poly_g = sympy.Poly(expr, g)
    lead = sympy.Poly(poly_g.LC(), z)
    if p.deg_g >= 2:
        disc = sympy.discriminant(poly_g, g)
        disc = sympy.Poly(disc, z)
        if disc.is_zero:
            raise DegenerateAnnihilator(f"discriminant of {p.to_string()} is identically zero")
        factors = [disc, lead]
    else:
        factors = [lead]
    found = []
    for poly in factors:
        if poly.degree() <= 0:
            continue
        for fac, _ in poly.sqf_list()[1]:
            coeffs = [float(c) for c in fac.all_coeffs()]
            for r in np.roots(coeffs):
                if abs(r.imag) <= 1e-7 * (1 + abs(r.real)):
                    found.append(float(r.real))
    found.sort()
    out = []
    for r in found:
        if out and abs(r - out[-1]) <= tol:
            continue
        out.append(r)
    if norm_bound is not None:
        nb = float(norm_bound)
        out = [r for r in out if -nb - tol <= r <= nb + tol]
    return out


def extrapolate_ladder(eps, rho, tol=1e-3):
    """Limit eps -> 0 of residue estimates ``rho(eps)`` along a geometric ladder.

    Uses Aitken's delta-squared on the three smallest levels, which is exact
    for ``mu + c eps^beta`` on a geometric ladder (order-1 Richardson is the
    case beta = 1); falls back to the last value when the ladder has
    already settled.

    Raises
    ------
    NonConvergentLadder
        If successive differences alternate in sign above ``tol`` or do not
        shrink.
    """
    eps = np.asarray(eps, float)
    rho = np.asarray(rho, float)
    order = np.argsort(-eps)
    eps, rho = eps[order], rho[order]
    if rho.size == 1:
        return float(rho[0])
    diffs = np.diff(rho)
    big = np.abs(diffs) > tol
    if np.any(big[1:] & big[:-1] & (np.sign(diffs[1:]) != np.sign(diffs[:-1]))):
        raise NonConvergentLadder(f"ladder oscillates: {rho.tolist()}")
    if rho.size < 3 or abs(diffs[-1]) <= 1e-12:
        return float(rho[-1])
    d1, d2 = diffs[-2], diffs[-1]
    r = d2 / d1 if d1 != 0 else 0.0
    if r <= 0:
        return float(rho[-1])
    if r >= 0.95:
        if abs(d2) > tol:
            raise NonConvergentLadder(f"ladder does not settle: {rho.tolist()}")
        return float(rho[-1])
    return float(rho[-1] + d2 * r / (1 - r))


def atom_mass(a, p, eps_ladder=DEFAULT_EPS_LADDER, norm_bound=None, moments=None, tol=1e-3):
    """Point mass at ``a``: the extrapolated limit of ``-eps Im G(a + i eps)``.

    Returns the estimate (clipped at 0); compare with ``ATOM_THRESHOLD`` to
    decide "no atom".
    """
    if norm_bound is None:
        if moments is None:
            raise ValueError("need a norm bound or a moment sequence")
        norm_bound = float(moments.element_norm_bound)
    eps = np.array(sorted(eps_ladder, reverse=True), float)
    vals, errs = branch_ladder(p, [a], eps, norm_bound, moments)
    if errs[0] is not None:
        raise errs[0]
    rho = -eps * vals[0].imag
    return max(0.0, extrapolate_ladder(eps, rho, tol))


@dataclass(frozen=True)
class AtiyahGrid:
    """Lattice ``(1 / (d ell)) Z`` of admissible atom masses."""

    d: int = 1
    ell: int = 1

    def __post_init__(self):
        if int(self.d) < 1 or int(self.ell) < 1:
            raise ValueError("d and ell must be positive integers")

    @property
    def spacing(self):
        return Fraction(1, self.d * self.ell)


def snap_to_grid(mass, grid, tol=SNAP_TOL):
    """Nearest multiple of ``1/(d ell)``; :class:`OffGridMass` if farther than tol."""
    mass = float(mass)
    n = grid.d * grid.ell
    k = round(mass * n)
    if abs(mass - k / n) > tol:
        raise OffGridMass(f"mass {mass:.6g} is {abs(mass - k / n):.3g} away from "
                          f"the grid (1/{n})Z")
    return Fraction(k, n)


# -- support --------------------------------------------------------------------

def support_components(x, f, threshold=ATOM_THRESHOLD):
    """Maximal runs of grid points with ``f > threshold``.

    Runs separated by a single sub-threshold point are merged.  Returns a list
    of ``(start, end)`` grid coordinates.
    """
    x = np.asarray(x, float)
    on = np.nan_to_num(np.asarray(f, float)) > threshold
    runs = []
    i, n = 0, on.size
    while i < n:
        if not on[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and on[j + 1]:
            j += 1
        if runs and i - runs[-1][1] == 2:
            runs[-1][1] = j
        else:
            runs.append([i, j])
        i = j + 1
    return [(float(x[a]), float(x[b])) for a, b in runs]


def _fit_power(dist, f):
    """Fit ``ln f = ln c - beta ln t + d1 sqrt(t) + d2 t``; returns (c, beta, d1, d2).

    The square-root term absorbs the leading Puiseux correction at algebraic
    singularities.
    """
    design = np.column_stack([np.ones_like(dist), np.log(dist), np.sqrt(dist), dist])
    coef, *_ = np.linalg.lstsq(design, np.log(f), rcond=None)
    return math.exp(coef[0]), -coef[1], coef[2], coef[3]


def _power_integral(c, beta, d1, d2, length, log_weight=False):
    """``int_0^length [ln t] c t^-beta exp(d1 sqrt t + d2 t) dt`` for beta < 1."""
    from scipy.integrate import quad

    fn = lambda t: c * math.exp(d1 * math.sqrt(t) + d2 * t)
    # QUADPACK weights t^-beta (and t^-beta ln t) handle the endpoint exactly
    val, _ = quad(fn, 0.0, length, weight="alg-loga" if log_weight else "alg",
                  wvar=(-beta, 0.0), limit=200)
    return val


def integrate_density(x, f, singular=(), cells=12):
    """Trapezoid integral of density samples with power-law corrections.

    Near each point ``a`` of ``singular`` (atom candidates, where the density
    may blow up like ``|t - a|^-beta``) the first ``cells`` samples on each
    side are fitted to ``c |t - a|^-beta (1 + d |t - a|)`` and that stretch
    is integrated in closed form; the sample at ``a`` itself is ignored.
    Sides whose samples are not all positive fall back to a constant
    extrapolation of the nearest sample.
    """
    x = np.asarray(x, float)
    f = np.nan_to_num(np.asarray(f, float), nan=0.0, posinf=0.0, neginf=0.0)
    if x.size < 2:
        return 0.0
    h = float(x[1] - x[0])
    windows = []
    pieces = 0.0
    for a in singular:
        if not x[0] - 1e-6 * h <= a <= x[-1] + 1e-6 * h:
            continue
        bounds = []
        for side in (1, -1):
            dist = side * (x - a)
            sel = np.flatnonzero(dist > 1e-6 * h)
            sel = sel[np.argsort(dist[sel])][:cells]
            if sel.size == 0:
                bounds.append(float(a))
                continue
            fit = None
            if sel.size == cells and np.all(f[sel] > 0):
                fit = _fit_power(dist[sel], f[sel])
                if fit[1] >= 1:
                    fit = None
            if fit is None:
                sel = sel[:1]
                pieces += float(dist[sel[0]] * f[sel[0]])
            else:
                pieces += _power_integral(*fit, float(dist[sel[-1]]))
            bounds.append(float(x[sel[-1]]))
        windows.append((bounds[1], bounds[0]))
    cell = 0.5 * (f[1:] + f[:-1]) * np.diff(x)
    keep = np.ones(cell.size, bool)
    for lo, hi in windows:
        keep &= ~((x[:-1] < hi - 1e-9 * h) & (x[1:] > lo + 1e-9 * h))
    for i in range(x.size):
        for side in (1, -1):
            piece = _edge_piece(x, f, i, side)
            if piece is None:
                continue
            span = range(i - 3, i + 1) if side == 1 else range(i - 1, i + 3)
            if all(keep[c] for c in span):
                keep[list(span)] = False
                pieces += piece
    return float(cell[keep].sum()) + pieces


def _edge_piece(x, f, i, side):
    """Square-root edge between samples ``i`` and ``i + side``.

    ``f^2`` is smooth at a square-root edge, so a quadratic through the
    last three positive samples locates the edge ``e`` inside the gap and
    ``int sqrt(q)`` replaces the trapezoid on the four cells ending at the
    zero sample.  A fourth sample must agree with the fit to 5%; other edge
    exponents fail the check and keep the trapezoid.  Returns None when no
    correction applies.
    """
    from scipy.integrate import quad

    j = i + side
    pts = [i - side * k for k in range(4)]
    if not (0 <= j < x.size and all(0 <= p < x.size for p in pts)):
        return None
    # beyond the edge only regularization noise remains
    if not np.all(f[pts] > 0) or f[j] > 1e-6 * f[i]:
        return None
    q = np.polyfit(x[pts[:3]], f[pts[:3]] ** 2, 2)
    check = np.polyval(q, x[pts[3]])
    if check <= 0 or abs(math.sqrt(check) - f[pts[3]]) > 0.05 * f[pts[3]]:
        return None
    roots = np.roots(q)
    lo, hi = sorted((x[i], x[j]))
    edge = [r.real for r in roots if abs(r.imag) < 1e-12 and lo < r.real <= hi]
    if len(edge) != 1:
        return None
    e = edge[0]
    # sqrt(q) = sqrt(q / |e - t|) |e - t|^(1/2); the first factor is smooth
    lin = np.polydiv(q, [1.0, -e])[0]
    fn = lambda t: math.sqrt(max(side * -np.polyval(lin, t), 0.0))
    a, b = (x[i - 3], e) if side == 1 else (e, x[i + 3])
    wvar = (0.0, 0.5) if side == 1 else (0.5, 0.0)
    val, _ = quad(fn, a, b, weight="alg", wvar=wvar, limit=100)
    return val


def component_masses(x, f, components, atoms=(), singular=()):
    """Density mass of each component (one grid step of margin) plus atoms in it."""
    x = np.asarray(x, float)
    f = np.asarray(f, float)
    h = float(x[1] - x[0]) if x.size > 1 else 0.0
    out = []
    for lo, hi in components:
        pad = h * 1.000001
        sel = (x >= lo - pad) & (x <= hi + pad)
        inner = [a for a in singular if lo - pad <= a <= hi + pad]
        mass = integrate_density(x[sel], f[sel], inner) if sel.sum() > 1 else 0.0
        mass += sum(float(m) for loc, m in atoms if lo - pad <= loc <= hi + pad)
        out.append(mass)
    return out


@dataclass
class SpectralMeasureModel:
    """Atoms plus a density sampled on a uniform grid.

    ``singular`` lists points (atom candidates) where the density may have
    an integrable singularity; mass integrals treat them in closed form.
    """

    atoms: list
    x: np.ndarray
    f: np.ndarray
    norm_bound: float
    singular: tuple = ()

    @property
    def density(self):
        return list(zip(self.x.tolist(), self.f.tolist()))

    def total_mass(self):
        dens = integrate_density(self.x, self.f, self.singular)
        return dens + sum(float(m) for _, m in self.atoms)

    def check(self, tol=1e-3):
        """True when the invariants hold: unit mass and support inside the norm ball."""
        inside = np.all((np.nan_to_num(self.f) <= ATOM_THRESHOLD)
                        | (np.abs(self.x) <= self.norm_bound + 1e-9))
        return bool(abs(self.total_mass() - 1) <= tol and inside)

    def cdf(self, t):
        """``mu((-inf, t])`` by trapezoid on the density plus atoms at or below t."""
        t = float(t)
        sel = self.x <= t
        dens = 0.0
        if sel.sum() > 1:
            inner = [a for a in self.singular if a < t]
            dens = integrate_density(self.x[sel], self.f[sel], inner)
        return dens + sum(float(m) for loc, m in self.atoms if loc <= t)


# -- log energy and Novikov-Shubin ---------------------------------------------------

@dataclass
class LogEnergy:
    """Estimate of ``int_(0, inf) ln t dmu``.

    ``status`` is "finite", "divergent" (density blows up like t^-beta with
    beta >= 1 at 0) or "inconclusive" (ladder estimates do not settle).
    """

    value: float
    status: str
    excluded_mass: float = 0.0
    levels: tuple = ()


def _head(x, f, eps):
    """``int_0^eps ln t f(t) dt`` from a power-law fit of f on ``[eps, 5 eps]``.

    Returns ``(value, beta)``; ``beta >= 1`` signals a non-integrable blow-up.
    """
    sel = (x >= eps) & (x <= 5 * eps) & (f > 0)
    if sel.sum() < 6:
        return 0.0, 0.0
    c, beta, d1, d2 = _fit_power(x[sel], f[sel])
    if beta >= 1:
        return -math.inf, beta
    return _power_integral(c, beta, d1, d2, eps, log_weight=True), beta


def log_energy(model, tol=2e-2, first=1e-1):
    """``int ln t dmu`` over ``(0, inf)`` by an eps ladder with a power-law head.

    For each eps = first, first/sqrt(10), ... (down to twice the grid step)
    the integral over ``[eps, inf)`` is taken by trapezoid and the missing
    piece ``[0, eps)`` is added in closed form from a fit
    ``f ~ c t^-beta exp(d1 sqrt t + d2 t)`` on ``[eps, 5 eps]``.
    Atoms at 0 are excluded; the estimate is "finite" once two consecutive
    ladder estimates agree within ``tol``.
    """
    x = np.asarray(model.x, float)
    f = np.nan_to_num(np.asarray(model.f, float))
    h = float(x[1] - x[0]) if x.size > 1 else 1.0
    atoms = [(float(loc), float(m)) for loc, m in model.atoms]
    excluded = sum(m for loc, m in atoms if abs(loc) <= h / 2)
    atom_part = sum(m * math.log(loc) for loc, m in atoms if loc > h / 2)
    pos = x > 0
    xp, fp = x[pos], f[pos]
    if xp.size < 2 or not np.any(fp > 0):
        return LogEnergy(atom_part, "finite", excluded)
    levels = []
    eps = first
    while eps >= 2 * h:
        sel = xp >= eps
        xs = np.concatenate(([eps], xp[sel]))
        fs = np.concatenate(([np.interp(eps, xp, fp)], fp[sel]))
        body = float(np.trapezoid(np.log(xs) * fs, xs))
        head, beta = _head(xp, fp, eps)
        if beta >= 1:
            return LogEnergy(-math.inf, "divergent", excluded, tuple(levels))
        levels.append(atom_part + body + head)
        eps /= math.sqrt(10)
    if not levels:
        return LogEnergy(math.nan, "inconclusive", excluded)
    if len(levels) >= 2 and abs(levels[-1] - levels[-2]) > tol:
        return LogEnergy(levels[-1], "inconclusive", excluded, tuple(levels))
    return LogEnergy(levels[-1], "finite", excluded, tuple(levels))


def novikov_shubin(samples, f0, resolution=1e-14):
    """Slope of ``ln(F(t) - F(0))`` against ``ln t`` over the smallest resolved decade.

    Parameters
    ----------
    samples : iterable of (t, F(t))
        Positive t near 0.
    f0 : float
        ``F(0)``, the atom mass at 0 (plus the mass below 0).
    resolution : float
        Differences at or below this are treated as zero.

    Returns
    -------
    float or "infinity+"
        "infinity+" when ``F(t) = F(0)`` at resolution on the smallest decade
        of samples (zero isolated in the spectrum).

    Raises
    ------
    InsufficientDecades
        When resolved samples span fewer than two decades.
    """
    pts = sorted((float(t), float(v)) for t, v in samples if t > 0)
    if len(pts) < 2:
        raise InsufficientDecades("need at least two positive sample points")
    t = np.array([a for a, _ in pts])
    d = np.array([b for _, b in pts]) - float(f0)
    first_decade = t <= 10 * t[0]
    if np.all(d[first_decade] <= resolution) and t[-1] >= 10 * t[0]:
        return "infinity+"
    ok = d > resolution
    t, d = t[ok], d[ok]
    if t.size < 3 or math.log10(t[-1] / t[0]) < 2:
        raise InsufficientDecades("resolved samples span fewer than two decades")
    sel = t <= 10 * t[0]
    if sel.sum() < 3:
        sel = np.arange(t.size) < 3
    slope, _ = np.polyfit(np.log(t[sel]), np.log(d[sel]), 1)
    return float(slope)


# -- linear-pencil route ----------------------------------------------------------

def pencil_density(transform, grid, eps_ladder=DEFAULT_EPS_LADDER, clip_tol=1e-3):
    """Density on a grid from a :class:`~ncspectra.linearization.PencilTransform`.

    Ladder levels are solved in decreasing eps, warm-starting from the
    previous level; points whose fixed point stalls are skipped.
    """
    x = np.asarray(grid, float)
    eps = np.array(sorted(eps_ladder, reverse=True), float)
    samples = np.empty((x.size, eps.size))
    w = None
    failed = np.zeros(x.size, bool)
    for k, e in enumerate(eps):
        g, w, done = transform.cauchy(x + 1j * e, w)
        samples[:, k] = -g.imag / math.pi
        failed |= ~done
    samples[failed] = np.nan
    skipped = [(float(v), "pencil fixed point did not converge") for v in x[failed]]
    return _finish_density(x, samples, eps, skipped, "pencil", clip_tol)


def scan_atoms(transform, lo, hi, npts=2001, threshold=ATOM_THRESHOLD, eps_min=1e-7,
               zoom=10, tol=1e-3):
    """Heuristic atom search along the pencil route.

    The residue proxy ``rho(x) = -h Im G(x + i h)`` is screened on a grid of
    step h; every local maximum with ``rho >= 0.8 threshold`` is zoomed by
    factors of ``zoom`` (re-centering on the local argmax) down to
    ``eps_min`` and its mass extrapolated.  An atom of mass ``mu`` within
    half a grid step of a grid point gives ``rho >= 0.8 mu`` there, but atoms
    embedded in the support are only found when they produce a local maximum,
    so completeness is heuristic.

    Returns
    -------
    list of (location, mass)
    """
    x = np.linspace(lo, hi, npts)
    h = x[1] - x[0]
    g, w, done = transform.cauchy(x + 1j * h)
    rho = np.where(done, -h * g.imag, 0.0)
    cut = 0.8 * threshold
    cand = []
    for i in range(npts):
        left = rho[i - 1] if i else -np.inf
        right = rho[i + 1] if i + 1 < npts else -np.inf
        if rho[i] >= cut and rho[i] >= left and rho[i] >= right:
            cand.append(i)
    atoms = []
    for i in cand:
        xc, eps = x[i], h
        wc = w[i:i + 1]
        ladder_eps, ladder_rho = [h], [rho[i]]
        while eps > eps_min:
            new = eps / zoom
            local = xc + np.linspace(-eps, eps, 2 * zoom + 1)
            gl, wl, dl = transform.cauchy(local + 1j * new,
                                          np.repeat(wc, local.size, axis=0))
            rl = np.where(dl, -new * gl.imag, 0.0)
            j = int(np.argmax(rl))
            xc, eps, wc = local[j], new, wl[j:j + 1]
            ladder_eps.append(new)
            ladder_rho.append(rl[j])
            if rl[j] < cut:
                break
        if ladder_rho[-1] < cut:
            continue
        mass = extrapolate_ladder(ladder_eps, ladder_rho, tol)
        if mass >= threshold and not any(abs(xc - a) <= 2 * h for a, _ in atoms):
            atoms.append((float(xc), float(mass)))
    return atoms
