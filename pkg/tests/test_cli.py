import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from ncspectra.cli import (SpecError, build_matrix, main, parse_spec, parse_spec_text,
                           run_pipeline, serialize_spec)
from ncspectra.exact import QQi
from ncspectra.ncpoly import Family

MINIMAL = '{"generators": [{"name": "s1", "kind": "semicircular", "variance": "1"}],' \
          ' "matrix": [[ [1, "s1"] ]]}'
BLOCK = {"generators": ["semicircular"],
         "matrix": [[[["1", "s1"]], []], [[], []]]}


def _write(tmp_path, obj, name="spec.json"):
    path = tmp_path / name
    path.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return path


def test_minimal_spec():
    spec = parse_spec_text(MINIMAL)
    a = build_matrix(spec)
    fam = Family.semicircular(1)
    assert a.shape == (1, 1) and a[0, 0] == fam.gen(0)
    assert spec.options.order == 40 and spec.options.grid == 2001


def test_rational_coefficient():
    spec = parse_spec_text('{"generators": ["semicircular"], "matrix": [[ ["1/3", ["s1"]] ]]}')
    assert spec.matrix[0][0] == ((QQi(Fraction(1, 3)), ("s1",)),)


def test_all_errors_are_collected():
    text = json.dumps({"generators": ["semicircular", "semicircular"],
                       "matrix": [[[1, "s3"], ["1/0", "s1"]], [[1, "s1"]]],
                       "options": {"grid": 10 ** 9, "colour": 1}})
    with pytest.raises(SpecError) as info:
        parse_spec_text(text)
    errors = info.value.errors
    assert any("'s3'" in e and e.startswith("matrix[0][0]") for e in errors)
    assert any("1/0" in e for e in errors)
    assert any("matrix[1]" in e and "expected 2" in e for e in errors)
    assert any("exceeds the cap" in e for e in errors)
    assert any("colour" in e for e in errors)


def test_syntax_error_position():
    with pytest.raises(SpecError) as info:
        parse_spec_text('{\n  "generators": [\n}')
    assert info.value.errors[0].startswith("line 3, column 1")


def test_floats_rejected():
    with pytest.raises(SpecError, match="not exact"):
        parse_spec_text('{"generators": ["semicircular"], "matrix": [[ [0.5, "s1"] ]]}')


tokens = st.sampled_from(["s1", "s2", "u3", "u3*"])
rat = st.builds(lambda n, d: str(Fraction(n, d)), st.integers(-50, 50), st.integers(1, 12))
term = st.fixed_dictionaries({"coeff": st.tuples(rat, rat).map(list),
                              "word": st.lists(tokens, max_size=3)})
entry = st.lists(term, max_size=3)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 2).flatmap(lambda r: st.integers(1, 2).flatmap(
    lambda c: st.lists(st.lists(entry, min_size=c, max_size=c), min_size=r, max_size=r))),
    st.integers(0, 10 ** 6))
def test_round_trip(matrix, seed):
    raw = {"generators": [{"kind": "semicircular", "variance": "1/2"},
                          {"kind": "semicircular"}, {"kind": "haar"}],
           "matrix": matrix, "options": {"seed": seed, "eps_ladder": [1e-2, 1e-4]}}
    spec = parse_spec_text(json.dumps(raw))
    text = serialize_spec(spec)
    assert parse_spec_text(text) == spec
    assert serialize_spec(parse_spec_text(text)) == text


def test_moments_csv(tmp_path):
    path = _write(tmp_path, MINIMAL)
    assert main(["moments", str(path), "--order", "6", "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "moments.csv").read_text().split()
    assert lines[0] == "k,moment"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["1", "0", "1", "0", "2", "0", "5"]


def test_annihilator_file(tmp_path):
    path = _write(tmp_path, MINIMAL)
    assert main(["annihilator", str(path), "--out", str(tmp_path / "o")]) == 0
    text = (tmp_path / "o" / "annihilator.txt").read_text()
    assert "g^2 - z*g + 1" in text


def test_atoms_block(tmp_path):
    path = _write(tmp_path, BLOCK)
    out = tmp_path / "o"
    assert main(["atoms", str(path), "--grid", "801", "--out", str(out)]) == 0
    rows = (out / "atoms.csv").read_text().split()
    assert rows == ["location,mass_numerator,mass_denominator", "0,1,2"]
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] and any(v["name"].startswith("atom_grid") and v["passed"]
                                    for v in report["verdicts"])


def test_json_format_and_density(tmp_path):
    path = _write(tmp_path, MINIMAL)
    out = tmp_path / "o"
    assert main(["density", str(path), "--grid", "401", "--format", "json",
                 "--out", str(out)]) == 0
    data = json.loads((out / "density.json").read_text())
    assert len(data) == 401 and set(data[0]) == {"x", "f"}


def test_reports_are_byte_identical(tmp_path):
    path = _write(tmp_path, MINIMAL)
    args = ["all", str(path), "--grid", "401", "--trials", "4", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    for name in ("report.json", "density.csv", "moments.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert "timings" not in json.loads((tmp_path / "a" / "report.json").read_text())


def test_exit_codes(tmp_path):
    bad = _write(tmp_path, '{"generators": ["semicircular"], "matrix": [[ [1, "s9"] ]]}')
    assert main(["moments", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert main(["moments", str(tmp_path / "missing.json")]) == 2
    # a non-self-adjoint input makes the spectral steps fail -> exit 1
    nsa = _write(tmp_path, {"generators": ["semicircular", "semicircular"],
                            "matrix": [[[1, "s1 s2"]]]}, "nsa.json")
    assert main(["moments", str(nsa), "--out", str(tmp_path / "n")]) == 1
    report = json.loads((tmp_path / "n" / "report.json").read_text())
    assert not report["passed"] and report["errors"][0]["step"] == "moments"


def test_skips_are_listed():
    spec = parse_spec_text('{"generators": ["haar"], "matrix": [[ [[1, "u1"], [1, "u1*"]] ]],'
                           ' "options": {"grid": 201}}')
    report, code = run_pipeline(spec, "jacobian-rank")
    assert code == 0 and report["skipped"][0]["step"] == "jacobian-rank"


def test_commutative_rank_with_measures(tmp_path):
    spec = parse_spec_text(json.dumps({
        "generators": ["semicircular"],
        "matrix": [[[[1, "s1"]]]],
        "measures": [{"atoms": [["0", "1/3"]], "continuous_mass": "2/3"}],
        "options": {"d": [3]}}))
    report, code = run_pipeline(spec, "commutative-rank")
    assert code == 0
    assert report["steps"]["commutative-rank"]["kernel_trace"] == "1/3"
