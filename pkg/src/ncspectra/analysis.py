"""End-to-end spectral analysis of one self-adjoint matrix polynomial.

moments -> annihilator -> density / atoms / support, with a verdict list
that records every check and every skipped step.  When no annihilator
exists inside the degree budget, purely semicircular inputs fall back to
the linear-pencil route; the chosen route is part of the result.
"""
from dataclasses import dataclass, field

import numpy as np

from .cauchy import (ATOM_THRESHOLD, DEFAULT_EPS_LADDER, SNAP_TOL, AtiyahGrid, BranchError,
                     NonConvergentLadder, OffGridMass, DegenerateAnnihilator,
                     SpectralMeasureModel, atom_candidates, atom_mass, component_masses,
                     density_profile, pencil_density, scan_atoms, snap_to_grid,
                     support_components)
from .moments import moment_sequence
from .ncpoly import SEMICIRCULAR, MatrixPolynomial, NcPolynomial
from .series import AnnihilatorNotFound, find_annihilator, verify_annihilator

__all__ = ["Verdict", "Atom", "Component", "SpectralAnalysis", "analyze", "MASS_TOL"]

MASS_TOL = 1e-3
VERIFY_EXTRA = 20
SUPPORT_DELTA = 1e-10


@dataclass
class Verdict:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class Atom:
    location: float
    mass: float
    snapped: object = None   # Fraction, or None when off the grid


@dataclass
class Component:
    start: float
    end: float
    mass: float
    snapped: object = None


@dataclass
class SpectralAnalysis:
    """Everything computed for one input; ``verdicts`` and ``skipped`` are exhaustive."""

    ell: int
    norm_bound: float
    moments: object = None
    annihilator: object = None
    route: str = None
    density: object = None
    candidates: list = field(default_factory=list)
    atoms: list = field(default_factory=list)
    components: list = field(default_factory=list)
    model: object = None
    window: tuple = None
    verdicts: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def check(self, name, passed, detail=""):
        self.verdicts.append(Verdict(name, bool(passed), detail))


def _as_matrix(a):
    return MatrixPolynomial.scalar(a) if isinstance(a, NcPolynomial) else a


def analyze(a, order=40, deg_z=8, deg_g=8, eps_ladder=DEFAULT_EPS_LADDER, grid=2001,
            d=1, atom_threshold=ATOM_THRESHOLD, snap_tol=SNAP_TOL, density=True,
            atoms=True, pencil=True, margin=10):
    """Run the spectral pipeline.

    Parameters
    ----------
    a : NcPolynomial or MatrixPolynomial
        Self-adjoint input.
    order : int
        Matching order K of the annihilator search; verification uses K + 20.
    deg_z, deg_g : int
        Degree budget of the annihilator.
    grid : int
        Number of density grid points on ``[-R, R]``, where ``R <= norm_bound``
        is the Markov radius of the moments (mass beyond it below 1e-10).
    d : int
        ``prod d_j`` of the Atiyah grid ``(1/(d l)) Z``.
    density, atoms : bool
        Which downstream stages to run.
    pencil : bool
        Allow the linear-pencil fallback for semicircular families.
    """
    a = _as_matrix(a)
    m = moment_sequence(a, order + VERIFY_EXTRA)
    nb = float(m.element_norm_bound)
    res = SpectralAnalysis(ell=a.rows, norm_bound=nb, moments=m)
    res.check("hankel_psd", m.hankel_min_eigenvalue() >= -1e-9,
              f"min eigenvalue {m.hankel_min_eigenvalue():.3e}")
    try:
        p = find_annihilator(m, deg_z, deg_g, order=order, margin=margin)
        ok = verify_annihilator(p, m, order + VERIFY_EXTRA)
        res.check("annihilator_verified", ok, f"{p.to_string()} through order {order + VERIFY_EXTRA}")
        if ok:
            res.annihilator = p
            res.route = "annihilator"
    except AnnihilatorNotFound as exc:
        res.skipped.append(("annihilator", str(exc)))
    if res.route is None and pencil and a.family.kinds() <= {SEMICIRCULAR}:
        res.route = "pencil"
    if not (density or atoms):
        return res
    if res.route is None:
        res.skipped.append(("density/atoms", "no annihilator within the degree budget and "
                                             "no pencil route for this family"))
        return res
    # every component carries mass >= 1/l, so nothing lies beyond this radius
    radius = m.support_radius(SUPPORT_DELTA)
    res.window = (-radius, radius)
    x = np.linspace(-radius, radius, grid)
    agrid = AtiyahGrid(d, a.rows)
    if res.route == "annihilator":
        _annihilator_stage(res, x, eps_ladder, agrid, atom_threshold, snap_tol)
    else:
        _pencil_stage(res, a, x, eps_ladder, agrid, atom_threshold, snap_tol)
    _support_stage(res, x, agrid, snap_tol)
    return res


def _record_atom(res, loc, mass, agrid, snap_tol):
    try:
        snapped = snap_to_grid(mass, agrid, snap_tol)
        res.check(f"atom_grid@{loc:.6g}", True, f"mass {mass:.6g} -> {snapped}")
    except OffGridMass as exc:
        snapped = None
        res.check(f"atom_grid@{loc:.6g}", False, str(exc))
    res.atoms.append(Atom(float(loc), float(mass), snapped))


def _annihilator_stage(res, x, eps_ladder, agrid, threshold, snap_tol):
    p, m, nb = res.annihilator, res.moments, res.norm_bound
    try:
        res.candidates = atom_candidates(p, nb)
    except DegenerateAnnihilator as exc:
        res.skipped.append(("atom_candidates", str(exc)))
    for a in res.candidates:
        try:
            mass = atom_mass(a, p, eps_ladder, nb, m)
        except (BranchError, NonConvergentLadder) as exc:
            res.check(f"atom_mass@{a:.6g}", False, str(exc))
            continue
        if mass >= threshold:
            _record_atom(res, a, mass, agrid, snap_tol)
    prof = density_profile(p, x, eps_ladder, nb, m)
    h = prof.step
    for a in res.candidates:
        # Stieltjes inversion is meaningless exactly at the finite exceptional set
        hit = np.abs(prof.x - a) < 1e-9 * max(h, 1.0)
        prof.f[hit] = np.nan
        prof.skipped.extend((float(v), "exceptional point (atom candidate)") for v in prof.x[hit])
    res.density = prof
    for xv, why in prof.skipped:
        if not why.startswith("exceptional"):
            res.skipped.append((f"density@{xv:.6g}", why))
    res.check("density_points", len([s for s in prof.skipped
                                     if not s[1].startswith("exceptional")]) == 0,
              f"{len(prof.skipped)} points skipped")


def _pencil_stage(res, a, x, eps_ladder, agrid, threshold, snap_tol):
    from .linearization import PencilTransform

    pt = PencilTransform(a)
    for loc, mass in scan_atoms(pt, x[0], x[-1], x.size, threshold):
        _record_atom(res, loc, mass, agrid, snap_tol)
    res.candidates = [at.location for at in res.atoms]
    prof = pencil_density(pt, x, eps_ladder)
    res.density = prof
    for xv, why in prof.skipped:
        res.skipped.append((f"density@{xv:.6g}", why))
    res.skipped.append(("atom completeness", "pencil route: atoms found by a local-maximum "
                                             "scan, completeness is heuristic"))


def _support_stage(res, x, agrid, snap_tol):
    prof = res.density
    f = prof.f
    comps = support_components(x, f)
    h = prof.step
    for at in res.atoms:
        if not any(lo - h <= at.location <= hi + h for lo, hi in comps):
            comps.append((at.location, at.location))
    comps.sort()
    atom_pairs = [(at.location, at.mass) for at in res.atoms]
    masses = component_masses(x, f, comps, atom_pairs, res.candidates)
    for (lo, hi), mass in zip(comps, masses):
        try:
            snapped = snap_to_grid(mass, AtiyahGrid(1, agrid.ell), snap_tol)
            ok, detail = True, f"mass {mass:.6g} -> {snapped}"
        except OffGridMass as exc:
            snapped, ok, detail = None, False, str(exc)
        res.components.append(Component(lo, hi, mass, snapped))
        res.check(f"component_mass@[{lo:.6g},{hi:.6g}]", ok, detail)
    res.check("component_count", len(comps) <= res.ell,
              f"{len(comps)} components for l = {res.ell}")
    model_atoms = [(at.location, at.snapped if at.snapped is not None else at.mass)
                   for at in res.atoms]
    res.model = SpectralMeasureModel(model_atoms, x, np.nan_to_num(f), res.norm_bound,
                                     tuple(res.candidates))
    total = res.model.total_mass()
    res.check("total_mass", abs(total - 1) <= MASS_TOL, f"{total:.6f}")
