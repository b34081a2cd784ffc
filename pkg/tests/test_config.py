import json
import pathlib
import tempfile

import pytest

from degensolve.basics import Closure, NormMethod, PrincipalForm, ProblemKind, ValidationError
from degensolve.config import DEFAULT_MODULI, DEFAULT_T_VALUES, load_config, parse_config
from degensolve.opspace import SectorSpec
from degensolve.solve1d import Problem1D
from degensolve.solve2d import Problem2D


def problem_1d(**kw):
    p = {"exponents": {"alpha": 1.3}, "operator": {"scalar": 1}, "rhs": "exp(X)"}
    p.update(kw)
    return p


def problem_2d(**kw):
    p = {"exponents": {"alpha": 1.3, "beta": 1.4}, "operator": {"scalar": 1}, "rhs": "exp(X)*exp(Y)"}
    p.update(kw)
    return p


def test_solve1d_defaults():
    c = parse_config({"problem": problem_1d()}, "solve1d")
    p = c.problem
    assert isinstance(p, Problem1D)
    assert p.kind == ProblemKind.REGULARIZED
    assert p.grid.n == 257
    assert p.lam == 1e3
    assert p.closure == Closure.DIRICHLET
    assert p.bc.data is None
    assert c.norm_method == NormMethod.CLOSED
    assert c.seed == 0 and c.threads == 1
    js = c.get_json()
    assert js["mesh"]["depth"] == 12.0
    assert js["problem"]["lambda"] == 1e3
    assert js["problem"]["exponents"] == {"alpha": 1.3, "p": 4.0, "q": 2.0}


def test_echo_reloads():
    c = parse_config({"problem": problem_1d(bc={"m": 1, "delta": [1, [0, 2]], "data": [2.0]}),
                      "mesh": {"n": 65}}, "solve1d")
    again = parse_config(json.loads(json.dumps(c.get_json())), "solve1d")
    assert again.get_json() == c.get_json()
    assert again.problem.bc.delta == (1.0, 2j)
    assert again.problem.grid.depth == c.problem.grid.depth


def test_unknown_keys():
    with pytest.raises(ValidationError, match="problem.foo: unknown key 'foo'"):
        parse_config({"problem": problem_1d(foo=1)}, "solve1d")
    with pytest.raises(ValidationError, match="unknown key 'extra'"):
        parse_config({"problem": problem_1d(), "extra": True}, "solve1d")
    with pytest.raises(ValidationError, match="problem.exponents.beta: unknown key"):
        parse_config({"problem": problem_1d(exponents={"alpha": 1.3, "beta": 1.3})}, "solve1d")


def test_missing_keys():
    with pytest.raises(ValidationError, match="problem: missing required key"):
        parse_config({}, "solve1d")
    with pytest.raises(ValidationError, match="problem.exponents.alpha: missing required key"):
        parse_config({"problem": problem_1d(exponents={})}, "solve1d")
    with pytest.raises(ValidationError, match="problem.operator: missing"):
        parse_config({"problem": {"exponents": {"alpha": 1.3}}}, "solve1d")


def test_type_errors():
    with pytest.raises(ValidationError, match="problem.lambda"):
        parse_config({"problem": problem_1d(**{"lambda": "big"})}, "solve1d")
    with pytest.raises(ValidationError, match="mesh.n"):
        parse_config({"problem": problem_1d(), "mesh": {"n": 12.5}}, "solve1d")
    with pytest.raises(ValidationError, match="seed"):
        parse_config({"problem": problem_1d(), "seed": True}, "solve1d")
    with pytest.raises(ValidationError, match="problem.kind"):
        parse_config({"problem": problem_1d(kind="curved")}, "solve1d")
    with pytest.raises(ValidationError, match="problem.rhs"):
        parse_config({"problem": problem_1d(rhs="exp(")}, "solve1d")


def test_exponent_window():
    with pytest.raises(ValidationError, match="exponent outside coercivity window: alpha=1.2"):
        parse_config({"problem": problem_1d(exponents={"alpha": 1.2})}, "solve1d")
    # one-dimensional problems have no upper end
    assert parse_config({"problem": problem_1d(exponents={"alpha": 2.5})}, "solve1d").problem.alpha == 2.5
    with pytest.raises(ValidationError, match="problem.exponents.beta"):
        parse_config({"problem": problem_2d(exponents={"alpha": 1.3, "beta": 1.6})}, "solve2d")
    with pytest.raises(ValidationError, match="empty window"):
        parse_config({"problem": problem_2d(exponents={"alpha": 1.3, "p": 3.5})}, "solve2d")


def test_operator_section():
    c = parse_config({"problem": problem_1d(operator={"dense": [[2, 1], [1, 2]]}, rhs="m")}, "solve1d")
    assert c.problem.operator.dim_e == 2
    assert c.get_json()["problem"]["operator"]["dense"] == [[2.0, 1.0], [1.0, 2.0]]
    c = parse_config({"problem": problem_1d(operator={"diagonal": [1, 2, 3]})}, "solve1d")
    assert c.problem.operator.dim_e == 3
    with pytest.raises(ValidationError, match="exactly one"):
        parse_config({"problem": problem_1d(operator={"scalar": 1, "diagonal": [1]})}, "solve1d")
    with pytest.raises(ValidationError, match="problem.operator.dense"):
        parse_config({"problem": problem_1d(operator={"dense": [[1, 2]]})}, "solve1d")
    with pytest.raises(ValidationError, match="problem.operator.scalar"):
        parse_config({"problem": problem_1d(operator={"scalar": -1})}, "solve1d")


def test_boundary_section():
    c = parse_config({"problem": problem_1d(bc={"data": "2*x", "t_scaling": True}, kind="parametric", t=0.01)},
                     "solve1d")
    assert c.problem.bc.t_scaling
    assert c.problem.boundary_data() == pytest.approx([2.0])
    with pytest.raises(ValidationError, match="problem.bc"):
        parse_config({"problem": problem_1d(bc={"m": 2})}, "solve1d")
    with pytest.raises(ValidationError, match="problem.bc.delta"):
        parse_config({"problem": problem_1d(bc={"delta": "1"})}, "solve1d")


def test_solve2d():
    c = parse_config({"problem": problem_2d(form="regularized", t1=0.5, bc_y={"data": "exp(X)"},
                                            a1={"matrix": [[1.0]], "scale": "x"}),
                      "mesh": {"n": 17, "ny": 21}, "solver": "reduced"}, "solve2d")
    p = c.problem
    assert isinstance(p, Problem2D)
    assert p.grid.shape == (17, 21)
    assert p.form == PrincipalForm.REGULARIZED
    assert p.t1 == 0.5 and p.t2 == 1.0
    assert p.a1_law is not None and p.a2_law is None
    assert c.solver == "reduced"
    with pytest.raises(ValidationError, match="solver"):
        parse_config({"problem": problem_2d(), "solver": "iterative"}, "solve2d")
    with pytest.raises(ValidationError, match="unknown key 'solver'"):
        parse_config({"problem": problem_1d(), "solver": "direct"}, "solve1d")


def test_moving():
    c = parse_config({"problem": problem_2d(moving={"a": "1", "b": "1+s", "s": 0.5, "d": 2.0}, **{"lambda": 1})},
                     "moving")
    p = c.problem
    assert p.moving.extents() == (1.0, 1.5)
    assert p.lam == 3.0
    with pytest.raises(ValidationError, match="problem.moving: missing"):
        parse_config({"problem": problem_2d()}, "moving")
    with pytest.raises(ValidationError, match="problem.moving.d"):
        parse_config({"problem": problem_2d(moving={"a": "1", "b": "1", "d": -1})}, "moving")


def test_dimension():
    c = parse_config({"problem": problem_2d(dimension=2), "mesh": {"n": 17}}, "sweep-lambda")
    assert isinstance(c.problem, Problem2D)
    with pytest.raises(ValidationError, match="solve1d needs dimension 1"):
        parse_config({"problem": problem_1d(dimension=2)}, "solve1d")
    with pytest.raises(ValidationError, match="dimension 3 not 1 or 2"):
        parse_config({"problem": problem_1d(dimension=3)}, "sweep-t")


def test_sweep_section():
    c = parse_config({"problem": problem_1d()}, "sweep-lambda")
    assert isinstance(c.sector, SectorSpec)
    assert c.sector.moduli == tuple(DEFAULT_MODULI)
    assert len(c.sector.samples()) == 35
    c = parse_config({"problem": problem_1d(), "sweep": {"points": [10, [0, 100]]}}, "sweep-lambda")
    assert c.sector == [10 + 0j, 100j]
    c = parse_config({"problem": problem_1d(), "sweep": {"phi": 1.0, "moduli": [1, 2], "args": [0, 0.5]}},
                     "sweep-lambda")
    assert c.sector.args == (0.0, 0.5)
    with pytest.raises(ValidationError, match="sweep"):
        parse_config({"problem": problem_1d(), "sweep": {"phi": 1.0, "args": [2.0]}}, "sweep-lambda")
    with pytest.raises(ValidationError, match="sweep.points"):
        parse_config({"problem": problem_1d(), "sweep": {"points": []}}, "sweep-lambda")


def test_t_values():
    c = parse_config({"problem": problem_1d(kind="parametric")}, "sweep-t")
    assert c.t_values == DEFAULT_T_VALUES
    c = parse_config({"problem": problem_2d(dimension=2), "mesh": {"n": 17}, "t_values": [[1, 0.5], 0.1]},
                     "sweep-t")
    assert c.t_values == [(1.0, 0.5), 0.1]
    with pytest.raises(ValidationError, match="t_values\\[1\\]"):
        parse_config({"problem": problem_1d(kind="parametric"), "t_values": [1, 0]}, "sweep-t")
    with pytest.raises(ValidationError, match="t_values\\[0\\]"):
        parse_config({"problem": problem_1d(kind="parametric"), "t_values": [[1, 1]]}, "sweep-t")


def test_nonlinear_section():
    c = parse_config({"problem": problem_2d(), "mesh": {"n": 17},
                      "nonlinear": {"f": "1 - u^2", "g": "u", "radius": 0.5, "shrink": 2}}, "nonlinear")
    n = c.nonlinear
    assert n.radius == 0.5 and n.shrink == 2 and n.max_iter == 30 and n.samples == 64
    assert n.g_law is not None
    with pytest.raises(ValidationError, match="nonlinear: missing"):
        parse_config({"problem": problem_2d()}, "nonlinear")
    with pytest.raises(ValidationError, match="nonlinear.f: missing"):
        parse_config({"problem": problem_2d(), "nonlinear": {}}, "nonlinear")


def test_system_section():
    problem = problem_2d()
    del problem["operator"]
    c = parse_config({"problem": problem, "mesh": {"n": 9},
                      "system": {"d": "m^2", "a": "2^(-abs(m-j))", "n": 4, "n_list": [2, 4], "support": 1}},
                     "system")
    y = c.system
    assert y.n == 4 and y.n_list == [2, 4] and y.support == 1
    assert y.b_law is None
    c = parse_config({"problem": problem, "mesh": {"n": 9}, "system": {"d": "m", "n": 3}}, "system")
    assert c.system.n_list == [3]
    with pytest.raises(ValidationError, match="system.n_list"):
        parse_config({"problem": problem, "system": {"d": "m", "n_list": [4, 2]}}, "system")
    with pytest.raises(ValidationError, match="problem.operator: missing"):
        parse_config({"problem": problem}, "solve2d")


def test_checks_section():
    c = parse_config({"problem": problem_1d(), "checks": {"ratio_bracket": [0.5, 4], "t_spread": 3}},
                     "sweep-lambda")
    assert c.checks.ratio_bracket == (0.5, 4.0)
    assert c.checks.t_spread == 3.0
    with pytest.raises(ValidationError, match="checks.ratio_bracket"):
        parse_config({"problem": problem_1d(), "checks": {"ratio_bracket": [4, 0.5]}}, "sweep-lambda")


def test_verify_all():
    c = parse_config(None, "verify-all", threads=4, out="x")
    assert c.problem is None
    assert c.threads == 4
    assert c.out == "x"
    c = parse_config({"suite": ["moving"], "seed": 7}, "verify-all")
    assert c.suite == ["moving"]
    assert c.seed == 7
    with pytest.raises(ValidationError, match="unknown key 'problem'"):
        parse_config({"problem": problem_1d()}, "verify-all")
    with pytest.raises(ValidationError, match="unknown subcommand"):
        parse_config({}, "solve3d")


def test_load_config():
    with pytest.raises(ValidationError, match="needs --config"):
        load_config(None, "solve1d")
    assert load_config(None, "verify-all").command == "verify-all"
    with tempfile.TemporaryDirectory() as temp_dir:
        path = pathlib.Path(temp_dir) / "run.json"
        with pytest.raises(ValidationError, match="not found"):
            load_config(path, "solve1d")
        path.write_text("{\"problem\": ", encoding="utf-8")
        with pytest.raises(ValidationError, match="malformed JSON"):
            load_config(path, "solve1d")
        path.write_text(json.dumps({"problem": problem_1d(), "threads": 2}), encoding="utf-8")
        c = load_config(path, "solve1d", threads=3, out="o")
        assert c.threads == 2
        assert c.out == "o"
