import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from nlelast import cli
from nlelast.config import compile_expression, parse_config, parse_cone
from nlelast.errors import InvalidArgumentError, UsageError
from nlelast.geometry import DoubleCone, Grid
from nlelast.kernels import FractionalCone, MixedOrder
from nlelast.nlfd import MAGIC, decode, encode, read_field, write_field
from nlelast.operators import GridField

MINIMAL = """
[kernel]
name = fractional_cone
s = 0.5

[grid]
d = 1
n = 128
"""

EXAMPLE1 = """
[kernel]
name = example1

[grid]
d = 1
n = 32

[domain]
lo = 0
hi = 1
collar = 1.0

[rhs]
kind = constant
value = 1
"""

THIN_CONE = """
[kernel]
name = fractional_cone
s = 0.5
r = 0.5
cone = 1,0:0.001

[grid]
d = 2
n = 8

[domain]
lo = 0, 0
hi = 1, 1
collar = 0.5
"""

REGULARITY = """
[kernel]
name = fractional_cone
s = 0.25
r = 0.5

[grid]
d = 1
n = 32

[domain]
lo = 0
hi = 1
collar = 0.5

[rhs]
kind = jump
lo = 0.4
hi = 0.7

[run]
levels = 0.03125, 0.015625, 0.0078125
cutoff_center = 0.5
cutoff_r_in = 0.15
cutoff_r_out = 0.3
"""


# ---------------------------------------------------------------------------
# NLFD


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=4, max_side=5),
                  elements=st.floats(allow_nan=False, allow_infinity=False)))
@settings(max_examples=50, deadline=None)
def test_nlfd_bitwise_round_trip(values):
    spacing = tuple(0.1 * (i + 1) for i in range(values.ndim - 1))
    out, sp = decode(encode(values, spacing))
    assert out.tobytes() == np.ascontiguousarray(values).tobytes()
    assert sp == spacing


def test_nlfd_file_round_trip(tmp_path, rng):
    g = Grid(2, (5, 7), (0.2, 0.125))
    u = GridField(g, rng.standard_normal((2, 5, 7)))
    path = write_field(tmp_path / "u.nlfd", u)
    assert path.read_bytes()[:4] == MAGIC
    v = read_field(path)
    assert np.array_equal(u.values, v.values)
    assert v.grid.spacing == g.spacing


def test_nlfd_rejects_corrupt_data():
    data = encode(np.zeros((1, 4)), 0.25)
    with pytest.raises(InvalidArgumentError):
        decode(b"XXXX" + data[4:])
    with pytest.raises(InvalidArgumentError):
        decode(data[:-8])
    with pytest.raises(InvalidArgumentError):
        decode(data[:4] + (2).to_bytes(4, "little") + data[8:])
    with pytest.raises(InvalidArgumentError):
        encode(np.zeros(4), 0.25)


# ---------------------------------------------------------------------------
# configuration


def test_minimal_config_parses():
    cfg = parse_config(MINIMAL)
    spec = cfg.build_kernel()
    assert isinstance(spec, FractionalCone) and spec.s == 0.5 and spec.d == 1
    assert cfg.grid["n"] == [128]


def test_out_of_range_order_is_reported_with_line():
    with pytest.raises(UsageError, match=r"line 4: \[kernel\] s"):
        parse_config(MINIMAL.replace("s = 0.5", "s = 1.5"))


def test_mixed_order_alpha_range():
    text = "[kernel]\nname = mixed_order\ns = 0.5\nalpha = 0.3\n[grid]\nd = 2\nn = 8\n"
    with pytest.raises(UsageError, match="alpha"):
        parse_config(text)
    cfg = parse_config(text.replace("alpha = 0.3", "alpha = 0.2"))
    assert isinstance(cfg.build_kernel(), MixedOrder)


def test_all_errors_are_listed():
    text = "[kernel]\nname = nope\nbogus = 1\n[grid]\nd = 5\n[shape]\n"
    with pytest.raises(UsageError) as exc:
        parse_config(text)
    msg = str(exc.value)
    for needle in ("unknown kernel", "unknown key 'bogus'", "missing required key 'n'", "dimension",
                   "unknown section [shape]"):
        assert needle in msg


def test_missing_rhs_file(tmp_path):
    text = EXAMPLE1.replace("kind = constant\nvalue = 1", "kind = file\npath = missing.nlfd")
    with pytest.raises(UsageError, match="does not exist"):
        parse_config(text, base_dir=tmp_path)


def test_rhs_file_is_loaded(tmp_path):
    cfg = parse_config(EXAMPLE1)
    spec = cfg.build_kernel()
    grid = cfg.build_grid(spec)
    u = GridField(grid, np.linspace(0, 1, grid.npoints)[None])
    write_field(tmp_path / "f.nlfd", u)
    cfg2 = parse_config(EXAMPLE1.replace("kind = constant\nvalue = 1", "kind = file\npath = f.nlfd"),
                        base_dir=tmp_path)
    assert np.array_equal(cfg2.build_field(grid).values, u.values)


def test_parse_cone_and_expression():
    cone = parse_cone("1,0:0.3; 0,1:0.2", 2, DoubleCone)
    assert len(cone.caps) == 2
    assert parse_cone("full", 3, DoubleCone).is_full
    with pytest.raises(InvalidArgumentError):
        parse_cone("1,0,0:0.3", 2, DoubleCone)
    fn = compile_expression("0.5 + 0.25*x**2", 1)
    assert np.allclose(fn(np.array([[0.0], [2.0]])), [0.5, 1.5])
    with pytest.raises(InvalidArgumentError):
        compile_expression("q + 1", 1)


# ---------------------------------------------------------------------------
# command line


def write(tmp_path, text, name="exp.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_solve_dirichlet_smoke(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["solve-dirichlet", "--config", write(tmp_path, EXAMPLE1), "--output", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    names = {a["path"] for a in manifest["artifacts"]}
    assert names == {"solution.nlfd", "report.json"}
    report = json.loads((out / "report.json").read_text())
    assert report["converged"] and report["residual_norm"] <= 1e-10
    assert "wall_time" not in report
    assert read_field(out / "solution.nlfd").values.shape[0] == 1


def test_manifest_is_deterministic(tmp_path):
    cfg = write(tmp_path, EXAMPLE1)
    for name in ("a", "b"):
        assert cli.main(["solve-dirichlet", "--config", cfg, "--output", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_thin_cone_exit_code(tmp_path, capsys):
    assert cli.main(["pk", "--config", write(tmp_path, THIN_CONE), "--output", str(tmp_path / "o")]) == 2
    assert "hypothesis violation" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    bad = MINIMAL.replace("s = 0.5", "s = 1.5").replace("n = 128", "n = 1")
    assert cli.main(["symbol", "--config", write(tmp_path, bad), "--output", str(tmp_path / "o")]) == 1
    err = capsys.readouterr().err
    assert "[kernel] s" in err and "[grid] n" in err


def test_usage_errors(tmp_path):
    cfg = write(tmp_path, EXAMPLE1)
    assert cli.main(["nonsense", "--config", cfg]) == 1
    assert cli.main(["pk", "--config", str(tmp_path / "none.cfg"), "--output", str(tmp_path)]) == 1
    assert cli.main(["pk", "--config", cfg]) == 1
    assert cli.main(["pk", "--config", cfg, "--output", str(tmp_path / "o"), "--threads", "0"]) == 1
    assert cli.main(["solve-shifted", "--config", cfg, "--output", str(tmp_path / "o")]) == 1
    assert cli.main(["solve-periodic", "--config", cfg, "--output", str(tmp_path / "o")]) == 1


def test_threads_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("NLELAST_THREADS", "many")
    assert cli.main(["pk", "--config", write(tmp_path, EXAMPLE1), "--output", str(tmp_path / "o")]) == 1
    monkeypatch.setenv("NLELAST_THREADS", "2")
    assert cli.main(["pk", "--config", write(tmp_path, EXAMPLE1), "--output", str(tmp_path / "o")]) == 0


def test_nonconvergence_exit_code(tmp_path):
    text = EXAMPLE1.replace("kind = constant\nvalue = 1", "kind = gaussian\ncenter = 0.3\nwidth = 0.1")
    text += "\n[run]\nmax_iter = 1\ntol = 1e-14\n"
    assert cli.main(["solve-dirichlet", "--config", write(tmp_path, text), "--output", str(tmp_path / "o")]) == 3


def test_regularity_csv(tmp_path):
    out = tmp_path / "o"
    assert cli.main(["regularity", "--config", write(tmp_path, REGULARITY), "--output", str(out)]) == 0
    with (out / "regularity.csv").open() as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    ratios = [float(r["ratio"]) for r in rows]
    assert max(ratios) / min(ratios) <= 2.0
    assert json.loads((out / "regularity.json").read_text())["passed"] is True


@pytest.mark.parametrize("sub,extra,files", [
    ("check-kernel", "", {"hypotheses.json"}),
    ("symbol", "", {"symbol.csv"}),
    ("solve-shifted", "\n[run]\nbeta = 10\n", {"solution.nlfd", "report.json"}),
    ("solve-nonzero", "\n[data]\nkind = constant\nvalue = 2\n", {"solution.nlfd", "report.json"}),
])
def test_other_bounded_subcommands(tmp_path, sub, extra, files):
    out = tmp_path / "o"
    assert cli.main([sub, "--config", write(tmp_path, EXAMPLE1 + extra), "--output", str(out)]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert {a["path"] for a in manifest["artifacts"]} == files


def test_periodic_subcommands(tmp_path):
    text = MINIMAL.replace("n = 128", "n = 64\nperiodic = true") + "\n[rhs]\nkind = mode\nk = 2\n"
    out = tmp_path / "p"
    assert cli.main(["solve-periodic", "--config", write(tmp_path, text), "--output", str(out)]) == 0
    korn = ("[kernel]\nname = fractional_cone\ns = 0.25\n[grid]\nd = 2\nn = 16\nperiodic = true\n"
            "[run]\nn_random = 5\n")
    out = tmp_path / "k"
    assert cli.main(["korn", "--config", write(tmp_path, korn, "k.cfg"), "--output", str(out), "--seed", "7"]) == 0
    with (out / "korn_fields.csv").open() as fh:
        assert len(list(csv.DictReader(fh))) == 8
