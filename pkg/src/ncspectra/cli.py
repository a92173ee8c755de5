"""Command-line front end.

Problem files are JSON with exact rationals written as strings::

    {
      "generators": [{"name": "s1", "kind": "semicircular", "variance": "1"}],
      "matrix": [[ [[["1", "0"], ["s1"]]] ]],
      "options": {"order": 40}
    }

Each matrix entry is a list of terms ``[coeff, word]`` (or
``{"coeff": ..., "word": ...}``); a lone term or a bare number is accepted
as shorthand.  A coefficient is a number, a rational string ``"p/q"`` or a
``[re, im]`` pair; a word is a list of tokens (``"s1"``, ``"u2*"``) or one
space-separated string.
"""
import argparse
import csv
import io
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .exact import QQi, parse_rational
from .ncpoly import CUSTOM, HAAR, SEMICIRCULAR, Family, MatrixPolynomial, NcPolynomial

__all__ = ["SpecError", "GeneratorSpec", "MeasureSpec", "Options", "ProblemSpec",
           "parse_spec", "parse_spec_text", "serialize_spec", "build_matrix",
           "run_pipeline", "main", "SUBCOMMANDS", "CAPS"]

SUBCOMMANDS = ("moments", "annihilator", "density", "atoms", "rmt-check",
               "jacobian-rank", "commutative-rank", "all")
KIND_ALIASES = {"semicircular": SEMICIRCULAR, "haar": HAAR, "haar_unitary": HAAR,
                "custom": CUSTOM, "custom_selfadjoint": CUSTOM}
CAPS = {"order": 400, "deg_z": 24, "deg_g": 24, "grid": 200001, "trials": 1000,
        "N": 4000, "k_max": 40, "jacobian_N": 60}
FLOAT_DIGITS = 10


class SpecError(ValueError):
    """All validation problems of a problem file."""

    def __init__(self, errors):
        super().__init__("invalid problem spec:\n" + "\n".join(f"  {e}" for e in errors))
        self.errors = list(errors)


@dataclass(frozen=True)
class GeneratorSpec:
    name: str
    kind: str = SEMICIRCULAR
    variance: Fraction = Fraction(1)
    moments: tuple = ()
    norm_bound: Fraction = Fraction(0)


@dataclass(frozen=True)
class MeasureSpec:
    """Commutative coordinate law: ``((location, mass), ...)`` plus continuous mass."""

    atoms: tuple = ()
    continuous_mass: Fraction = Fraction(1)


@dataclass(frozen=True)
class Options:
    order: int = 40
    deg_z: int = 8
    deg_g: int = 8
    eps_ladder: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    grid: int = 2001
    seed: int = 20240101
    trials: int = 20
    N: int = 400
    k_max: int = 8
    jacobian_N: int = 20
    d: tuple = ()


@dataclass(frozen=True)
class ProblemSpec:
    """Validated problem: generators, matrix terms and options.

    Matrix entries are tuples of ``(QQi coefficient, word token tuple)``.
    """

    generators: tuple
    matrix: tuple
    polynomials: tuple = ()
    measures: tuple = ()
    options: Options = field(default_factory=Options)

    @property
    def shape(self):
        return len(self.matrix), len(self.matrix[0])

    @property
    def d(self):
        out = 1
        for v in self.options.d:
            out *= v
        return out


# -- parsing ---------------------------------------------------------------------

def _rational(value, where, errors):
    try:
        if isinstance(value, bool):
            raise ValueError
        if isinstance(value, int):
            return Fraction(value)
        if isinstance(value, float):
            raise ValueError("floats are not exact; write the coefficient as a string")
        if isinstance(value, str):
            return parse_rational(value)
        raise ValueError
    except (ValueError, ZeroDivisionError) as exc:
        msg = str(exc) or f"malformed rational {value!r}"
        errors.append(f"{where}: {msg}")
        return None


def _coeff(value, where, errors):
    if isinstance(value, list):
        if len(value) != 2:
            errors.append(f"{where}: complex coefficient must be [re, im]")
            return None
        re = _rational(value[0], where + ".re", errors)
        im = _rational(value[1], where + ".im", errors)
        return None if re is None or im is None else QQi(re, im)
    r = _rational(value, where, errors)
    return None if r is None else QQi(r)


def _is_word(value):
    return isinstance(value, str) or (isinstance(value, list)
                                      and all(isinstance(t, str) for t in value))


def _is_literal(value):
    if isinstance(value, bool):
        return False
    if isinstance(value, (int, float)):
        return True
    if isinstance(value, str):
        try:
            parse_rational(value)
            return True
        except (ValueError, ZeroDivisionError):
            return False
    return False


def _is_scalar(value):
    return _is_literal(value) or (isinstance(value, list) and len(value) == 2
                                  and all(_is_literal(v) for v in value))


def _word(value, names, where, errors):
    tokens = value.split() if isinstance(value, str) else list(value)
    tokens = [t for t in tokens if t not in ("e", "1")]
    out = []
    for k, tok in enumerate(tokens):
        base = tok[:-1] if tok.endswith("*") else tok
        if base not in names:
            errors.append(f"{where}.word[{k}]: unknown token {tok!r}")
            continue
        out.append(tok)
    return tuple(out)


def _entry(value, names, where, errors):
    """Entry -> tuple of (coeff, word)."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        c = _coeff(value, where, errors)
        return () if c is None or not c else ((c, ()),)
    if isinstance(value, dict) and "terms" in value:
        value = value["terms"]
    if isinstance(value, dict) or (isinstance(value, list) and len(value) == 2
                                   and _is_word(value[1])
                                   and (not isinstance(value[0], list) or _is_scalar(value[0]))):
        value = [value]
    if not isinstance(value, list):
        errors.append(f"{where}: entry must be a list of terms")
        return ()
    terms = []
    for t, term in enumerate(value):
        tw = f"{where}.term[{t}]"
        if isinstance(term, dict):
            missing = {"coeff", "word"} - term.keys()
            if missing:
                errors.append(f"{tw}: missing {sorted(missing)}")
                continue
            coeff, word = term["coeff"], term["word"]
        elif isinstance(term, list) and len(term) == 2:
            coeff, word = term
        else:
            errors.append(f"{tw}: term must be [coeff, word] or {{coeff, word}}")
            continue
        if not _is_word(word):
            errors.append(f"{tw}: word must be a token list or string")
            continue
        c = _coeff(coeff, tw + ".coeff", errors)
        w = _word(word, names, tw, errors)
        if c is not None:
            terms.append((c, w))
    return tuple(terms)


def _generators(raw, errors):
    if not isinstance(raw, list) or not raw:
        errors.append("generators: need a non-empty list")
        return ()
    out = []
    for i, g in enumerate(raw):
        where = f"generators[{i}]"
        if isinstance(g, str):
            g = {"kind": g}
        if not isinstance(g, dict):
            errors.append(f"{where}: must be an object")
            continue
        kind = KIND_ALIASES.get(str(g.get("kind", "semicircular")).lower())
        if kind is None:
            errors.append(f"{where}: unknown kind {g.get('kind')!r}")
            continue
        prefix = {SEMICIRCULAR: "s", HAAR: "u", CUSTOM: "x"}[kind]
        name = str(g.get("name") or f"{prefix}{i + 1}")
        var = _rational(g.get("variance", "1"), where + ".variance", errors)
        mom = tuple(_rational(v, f"{where}.moments[{k}]", errors)
                    for k, v in enumerate(g.get("moments", [])))
        nb = _rational(g.get("norm_bound", "0"), where + ".norm_bound", errors)
        if var is not None and kind == SEMICIRCULAR and var <= 0:
            errors.append(f"{where}.variance: must be positive")
        if kind == CUSTOM and (not mom or mom[0] != 1 or nb is None or nb <= 0):
            errors.append(f"{where}: custom generators need moments starting with 1 "
                          "and a positive norm_bound")
        out.append(GeneratorSpec(name, kind, var or Fraction(1),
                                 tuple(m for m in mom if m is not None), nb or Fraction(0)))
    names = [g.name for g in out]
    for n in sorted(set(names)):
        if names.count(n) > 1:
            errors.append(f"generators: duplicate name {n!r}")
    if not errors:
        try:
            _family_of(out)
        except ValueError as exc:
            errors.append(f"generators: {exc}")
    return tuple(out)


def _options(raw, errors):
    if raw is None:
        return Options()
    if not isinstance(raw, dict):
        errors.append("options: must be an object")
        return Options()
    known = {f for f in Options.__dataclass_fields__}
    kw = {}
    for key, value in raw.items():
        key_n = key.replace("-", "_")
        if key_n not in known:
            errors.append(f"options.{key}: unknown option")
            continue
        if key_n == "eps_ladder":
            try:
                vals = tuple(float(v) for v in value)
            except (TypeError, ValueError):
                errors.append("options.eps_ladder: must be a list of numbers")
                continue
            if not vals or any(v <= 0 for v in vals):
                errors.append("options.eps_ladder: values must be positive")
                continue
            kw[key_n] = tuple(sorted(vals, reverse=True))
        elif key_n == "d":
            if not isinstance(value, list) or not all(
                    isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value):
                errors.append("options.d: must be a list of positive integers")
                continue
            kw[key_n] = tuple(value)
        else:
            if not isinstance(value, int) or isinstance(value, bool):
                errors.append(f"options.{key}: must be an integer")
                continue
            if key_n != "seed" and value < (2 if key_n in ("N", "jacobian_N", "trials", "grid")
                                            else 1 if key_n != "order" else 0):
                errors.append(f"options.{key}: value {value} too small")
                continue
            if key_n in CAPS and value > CAPS[key_n]:
                errors.append(f"options.{key}: {value} exceeds the cap {CAPS[key_n]}")
                continue
            kw[key_n] = value
    return Options(**kw)


def _measures(raw, ngen, errors):
    if raw is None:
        return ()
    if not isinstance(raw, list) or len(raw) != ngen:
        errors.append(f"measures: need one entry per generator ({ngen})")
        return ()
    out = []
    for i, m in enumerate(raw):
        where = f"measures[{i}]"
        if not isinstance(m, dict):
            errors.append(f"{where}: must be an object")
            continue
        atoms = []
        for k, pair in enumerate(m.get("atoms", [])):
            if not isinstance(pair, list) or len(pair) != 2:
                errors.append(f"{where}.atoms[{k}]: must be [location, mass]")
                continue
            loc = _coeff(pair[0], f"{where}.atoms[{k}].location", errors)
            mass = _rational(pair[1], f"{where}.atoms[{k}].mass", errors)
            if loc is not None and mass is not None:
                if mass <= 0:
                    errors.append(f"{where}.atoms[{k}].mass: must be positive")
                atoms.append((loc, mass))
        default = 1 - sum((a[1] for a in atoms), Fraction(0))
        cont = _rational(m.get("continuous_mass", str(default)), where + ".continuous_mass",
                         errors)
        if cont is not None:
            if cont < 0 or sum((a[1] for a in atoms), Fraction(0)) + cont != 1:
                errors.append(f"{where}: atom masses plus continuous_mass must equal 1")
            out.append(MeasureSpec(tuple(atoms), cont))
    return tuple(out)


def parse_spec_text(text):
    """Validate a problem given as JSON text; raises :class:`SpecError` with every problem."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError([f"line {exc.lineno}, column {exc.colno}: {exc.msg}"]) from None
    errors = []
    if not isinstance(raw, dict):
        raise SpecError(["top level must be an object"])
    for key in raw:
        if key not in ("generators", "matrix", "polynomials", "measures", "options"):
            errors.append(f"{key}: unknown top-level key")
    gens = _generators(raw.get("generators"), errors)
    names = {g.name for g in gens}
    mat = raw.get("matrix")
    rows = []
    if not isinstance(mat, list) or not mat or not all(isinstance(r, list) and r for r in mat):
        errors.append("matrix: need a non-empty list of non-empty rows")
    else:
        width = len(mat[0])
        for i, row in enumerate(mat):
            if len(row) != width:
                errors.append(f"matrix[{i}]: has {len(row)} entries, expected {width}")
            rows.append(tuple(_entry(v, names, f"matrix[{i}][{j}]", errors)
                              for j, v in enumerate(row)))
    polys = tuple(_entry(v, names, f"polynomials[{k}]", errors)
                  for k, v in enumerate(raw.get("polynomials", []) or []))
    measures = _measures(raw.get("measures"), len(gens), errors)
    options = _options(raw.get("options"), errors)
    if errors:
        raise SpecError(errors)
    return ProblemSpec(gens, tuple(rows), polys, measures, options)


def parse_spec(path):
    """Read and validate a problem file."""
    with open(path, encoding="utf-8") as fh:
        return parse_spec_text(fh.read())


def _frac_str(x):
    return str(Fraction(x))


def _terms_json(entry):
    return [{"coeff": [_frac_str(c.re), _frac_str(c.im)], "word": list(w)} for c, w in entry]


def serialize_spec(spec):
    """Canonical JSON text; ``parse_spec_text(serialize_spec(s)) == s``."""
    gens = []
    for g in spec.generators:
        d = {"name": g.name, "kind": g.kind}
        if g.kind == SEMICIRCULAR:
            d["variance"] = _frac_str(g.variance)
        if g.kind == CUSTOM:
            d["moments"] = [_frac_str(m) for m in g.moments]
            d["norm_bound"] = _frac_str(g.norm_bound)
        gens.append(d)
    out = {"generators": gens,
           "matrix": [[_terms_json(e) for e in row] for row in spec.matrix]}
    if spec.polynomials:
        out["polynomials"] = [_terms_json(e) for e in spec.polynomials]
    if spec.measures:
        out["measures"] = [
            {"atoms": [[[_frac_str(loc.re), _frac_str(loc.im)], _frac_str(m)]
                       for loc, m in ms.atoms],
             "continuous_mass": _frac_str(ms.continuous_mass)} for ms in spec.measures]
    opts = spec.options
    out["options"] = {k: (list(v) if isinstance(v, tuple) else v)
                      for k, v in opts.__dict__.items()}
    return json.dumps(out, indent=2) + "\n"


def _family(spec):
    return _family_of(spec.generators)


def _family_of(generators):
    specs = []
    for g in generators:
        kw = {"name": g.name}
        if g.kind == SEMICIRCULAR:
            kw["variance"] = g.variance
        elif g.kind == CUSTOM:
            kw["moments"] = g.moments
            kw["norm_bound"] = g.norm_bound
        specs.append((g.kind, kw))
    return Family.build(specs)


def _poly(entry, fam):
    terms = {}
    for c, w in entry:
        word = fam.parse_word(list(w))
        terms[word] = terms[word] + c if word in terms else c
    return NcPolynomial(terms, fam)


def build_matrix(spec):
    """The spec's matrix as a :class:`MatrixPolynomial` over its family."""
    fam = _family(spec)
    return MatrixPolynomial([[_poly(e, fam) for e in row] for row in spec.matrix], fam)


# -- output helpers -----------------------------------------------------------------

def _num(x):
    """Fixed-precision float for byte-stable reports."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.{FLOAT_DIGITS}g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _write_table(out_dir, stem, header, rows, fmt):
    if out_dir is None:
        return None
    os.makedirs(out_dir, exist_ok=True)
    if fmt == "json":
        path = os.path.join(out_dir, stem + ".json")
        data = [dict(zip(header, r)) for r in rows]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(_clean(data), fh, indent=2)
            fh.write("\n")
    else:
        path = os.path.join(out_dir, stem + ".csv")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt_cell(v) for v in r])
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
    return os.path.basename(path)


def _fmt_cell(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{FLOAT_DIGITS}g}"
    return str(v)


# -- pipeline ---------------------------------------------------------------------

class _Report:
    def __init__(self, subcommand):
        self.data = {"subcommand": subcommand, "steps": {}, "verdicts": [],
                     "skipped": [], "files": [], "errors": []}
        self.timings = {}

    def verdict(self, step, name, passed, detail=""):
        self.data["verdicts"].append({"step": step, "name": name, "passed": bool(passed),
                                      "detail": detail})

    def skip(self, step, reason):
        self.data["skipped"].append({"step": step, "reason": reason})

    def file(self, name):
        if name:
            self.data["files"].append(name)

    @property
    def passed(self):
        return not self.data["errors"] and all(v["passed"] for v in self.data["verdicts"])


def _step_moments(spec, a, rep, out_dir, fmt):
    from .moments import moment_sequence

    m = moment_sequence(a, spec.options.order)
    rows = [(k, str(v)) for k, v in enumerate(m.values)]
    rep.file(_write_table(out_dir, "moments", ["k", "moment"], rows, fmt))
    rep.data["steps"]["moments"] = {"order": m.order, "norm_bound": m.element_norm_bound,
                                    "values": [str(v) for v in m.values]}
    lam = m.hankel_min_eigenvalue()
    rep.verdict("moments", "hankel_psd", lam >= -1e-9, f"min eigenvalue {lam:.3e}")
    rep.verdict("moments", "unit_mass", m.values[0] == 1, f"m_0 = {m.values[0]}")


def _analysis(spec, a, full):
    from .analysis import analyze

    o = spec.options
    return analyze(a, order=o.order, deg_z=o.deg_z, deg_g=o.deg_g, eps_ladder=o.eps_ladder,
                   grid=o.grid, d=spec.d, density=full, atoms=full)


def _record_analysis(res, rep, steps, out_dir, fmt):
    for v in res.verdicts:
        rep.verdict("/".join(steps), v.name, v.passed, v.detail)
    for step, why in res.skipped:
        rep.skip(step, why)
    info = {"route": res.route, "norm_bound": res.norm_bound}
    if res.annihilator is not None:
        info["annihilator"] = res.annihilator.to_string()
        if out_dir is not None:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "annihilator.txt"), "w", encoding="utf-8") as fh:
                fh.write(res.annihilator.to_text())
            rep.file("annihilator.txt")
    if res.density is not None:
        if "density" in steps:
            rows = list(zip(res.density.x.tolist(), res.density.f.tolist()))
            rep.file(_write_table(out_dir, "density", ["x", "f"], rows, fmt))
        info["components"] = [{"start": c.start, "end": c.end, "mass": c.mass,
                               "snapped": c.snapped} for c in res.components]
        info["candidates"] = list(res.candidates)
    if "atoms" in steps and res.density is not None:
        rows = [(at.location, at.snapped.numerator, at.snapped.denominator)
                for at in res.atoms if at.snapped is not None]
        rep.file(_write_table(out_dir, "atoms",
                              ["location", "mass_numerator", "mass_denominator"], rows, fmt))
        info["atoms"] = [{"location": at.location, "mass": at.mass, "snapped": at.snapped}
                         for at in res.atoms]
    rep.data["steps"]["/".join(steps)] = info


def _step_rmt(spec, a, rep):
    from .rmt import empirical_vs_exact

    if CUSTOM in a.family.kinds():
        rep.skip("rmt-check", "custom generators have no matrix model")
        return
    o = spec.options
    records = empirical_vs_exact(a, o.N, o.trials, o.k_max, o.seed)
    rep.data["steps"]["rmt-check"] = {"N": o.N, "trials": o.trials, "seed": o.seed,
                                      "moments": records}
    bad = [r["k"] for r in records if not r["within_3se"]]
    rep.verdict("rmt-check", "moments_within_3se", not bad,
                f"exceedances at k = {bad}" if bad else f"k <= {o.k_max}")


def _step_jacobian(spec, a, rep):
    from .rmt import MemoryCapExceeded, jacobian_rank_estimate

    fam = a.family
    if HAAR in fam.kinds():
        rep.skip("jacobian-rank", "difference quotients need self-adjoint generators")
        return
    polys = ([_poly(e, fam) for e in spec.polynomials] if spec.polynomials
             else list(a.entries))
    o = spec.options
    try:
        est = jacobian_rank_estimate(polys, o.jacobian_N, o.seed)
    except MemoryCapExceeded as exc:
        rep.verdict("jacobian-rank", "memory_cap", False, str(exc))
        return
    rep.data["steps"]["jacobian-rank"] = {"N": est.N, "rank": est.rank, "ratio": est.value,
                                          "rounded": est.rounded, "converged": est.converged}
    rep.verdict("jacobian-rank", "rounding_window", est.converged,
                f"rank/N^2 = {est.value:.4f}")
    if any(p.degree() > 0 for p in polys):
        rep.verdict("jacobian-rank", "rank_at_least_one", est.rounded >= 1,
                    f"rounded rank {est.rounded}")


def _commutative_matrix(spec, fam):
    from .commutative import MvPolynomial

    n = len(fam)
    rows = []
    for row in spec.matrix:
        out_row = []
        for entry in row:
            terms = {}
            for c, w in entry:
                exp = [0] * n
                for letter in fam.parse_word(list(w)):
                    exp[letter.gen] += 1
                exp = tuple(exp)
                terms[exp] = terms[exp] + c if exp in terms else c
            out_row.append(MvPolynomial(terms, n))
        rows.append(out_row)
    return rows


def _step_commutative(spec, a, rep):
    from .commutative import (CoordinateMeasure, ProductMeasureSpec, RankInstability,
                              check_atiyah_grid, expected_kernel_trace)

    fam = a.family
    if HAAR in fam.kinds():
        rep.skip("commutative-rank", "commutative reading needs self-adjoint generators")
        return
    if a.rows != a.cols:
        rep.skip("commutative-rank", "matrix is not square")
        return
    m = _commutative_matrix(spec, fam)
    if spec.measures:
        pms = ProductMeasureSpec(tuple(CoordinateMeasure(ms.atoms, ms.continuous_mass)
                                       for ms in spec.measures))
    else:
        pms = ProductMeasureSpec.continuous(len(fam))
    seed = spec.options.seed
    try:
        values = [expected_kernel_trace(m, pms, seed + k) for k in range(5)]
    except RankInstability as exc:
        rep.verdict("commutative-rank", "rank_stability", False, str(exc))
        return
    value = values[0]
    d = pms.d
    rep.data["steps"]["commutative-rank"] = {"kernel_trace": value, "d": d,
                                             "ell": a.rows}
    rep.verdict("commutative-rank", "atiyah_grid", check_atiyah_grid(value, d, a.rows),
                f"{value} with d = {d}, l = {a.rows}")
    rep.verdict("commutative-rank", "seed_independent", len(set(values)) == 1,
                f"values over 5 seeds: {sorted(set(str(v) for v in values))}")


def run_pipeline(spec, subcommand, out_dir=None, fmt="csv", timings=False):
    """Run one subcommand; returns ``(report_dict, exit_code)``.

    ``report.json`` is written to ``out_dir`` when given.  Timings are only
    included on request so identical inputs give byte-identical reports.
    """
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    rep = _Report(subcommand)
    rep.data["spec"] = json.loads(serialize_spec(spec))
    a = build_matrix(spec)
    steps = (["moments", "annihilator", "density", "atoms", "rmt-check",
              "jacobian-rank", "commutative-rank"] if subcommand == "all" else [subcommand])
    needs_sa = {"moments", "annihilator", "density", "atoms", "rmt-check"}
    analysis_done = False
    for step in steps:
        t0 = time.perf_counter()
        try:
            if step in needs_sa and (a.rows != a.cols or not a.is_selfadjoint()):
                raise ValueError("spectral steps need a square self-adjoint matrix")
            if step == "moments":
                _step_moments(spec, a, rep, out_dir, fmt)
            elif step == "annihilator" and subcommand != "all":
                _record_analysis(_analysis(spec, a, False), rep, ["annihilator"], out_dir, fmt)
            elif step in ("annihilator", "density", "atoms"):
                if subcommand == "all":
                    if not analysis_done:
                        _record_analysis(_analysis(spec, a, True), rep,
                                         ["annihilator", "density", "atoms"], out_dir, fmt)
                        analysis_done = True
                else:
                    _record_analysis(_analysis(spec, a, True), rep, [step], out_dir, fmt)
            elif step == "rmt-check":
                _step_rmt(spec, a, rep)
            elif step == "jacobian-rank":
                _step_jacobian(spec, a, rep)
            elif step == "commutative-rank":
                _step_commutative(spec, a, rep)
        except Exception as exc:  # module errors go into the report
            rep.data["errors"].append({"step": step, "error": f"{type(exc).__name__}: {exc}"})
        rep.timings[step] = time.perf_counter() - t0
    rep.data["passed"] = rep.passed
    if timings:
        rep.data["timings"] = rep.timings
    data = _clean(rep.data)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return data, 0 if rep.passed else 1


def _build_parser():
    p = argparse.ArgumentParser(
        prog="ncspectra",
        description="Spectral analysis of matrix polynomials in free semicircular "
                    "and Haar unitary variables.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("spec", help="problem file (JSON)")
    p.add_argument("--order", type=int, help="moment / matching order K (default 40)")
    p.add_argument("--deg-z", type=int, help="annihilator z-degree budget (default 8)")
    p.add_argument("--deg-g", type=int, help="annihilator g-degree budget (default 8)")
    p.add_argument("--eps-ladder", help="comma-separated eps values, e.g. 1e-2,1e-3,1e-4")
    p.add_argument("--grid", type=int, help="density grid points (default 2001)")
    p.add_argument("--seed", type=int, help="master seed for random steps")
    p.add_argument("--trials", type=int, help="Monte Carlo trials (default 20)")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("--format", choices=("csv", "json"), default="csv",
                   help="format of tabular outputs")
    p.add_argument("--timings", action="store_true",
                   help="add wall-clock timings to report.json (makes it run-dependent)")
    return p


def _apply_flags(spec, args):
    raw = json.loads(serialize_spec(spec))
    opts = raw["options"]
    for flag, key in (("order", "order"), ("deg_z", "deg_z"), ("deg_g", "deg_g"),
                      ("grid", "grid"), ("seed", "seed"), ("trials", "trials")):
        v = getattr(args, flag)
        if v is not None:
            opts[key] = v
    if args.eps_ladder:
        try:
            opts["eps_ladder"] = [float(v) for v in args.eps_ladder.split(",")]
        except ValueError:
            raise SpecError([f"--eps-ladder: cannot parse {args.eps_ladder!r}"]) from None
    return parse_spec_text(json.dumps(raw))


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        spec = _apply_flags(parse_spec(args.spec), args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SpecError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    report, code = run_pipeline(spec, args.subcommand, args.out, args.format, args.timings)
    for v in report["verdicts"]:
        print(f"[{'PASS' if v['passed'] else 'FAIL'}] {v['step']}: {v['name']} {v['detail']}")
    for s in report["skipped"]:
        print(f"[SKIP] {s['step']}: {s['reason']}")
    for e in report["errors"]:
        print(f"[ERROR] {e['step']}: {e['error']}")
    print(f"outputs in {args.out}: {', '.join(report['files'] + ['report.json'])}")
    return code


if __name__ == "__main__":
    sys.exit(main())
