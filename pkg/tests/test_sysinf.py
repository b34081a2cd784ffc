from dataclasses import replace

import numpy as np
import pytest

from degensolve.basics import ValidationError
from degensolve.funcdsl import parse
from degensolve.solve2d import solve_2d_direct
from degensolve.suite import SYSTEM_LAMBDA, SYSTEM_SCALE, system_fixture
from degensolve.sysinf import STUDY_COLUMNS, decay_condition_check, solve_system, truncate_and_solve, \
    truncation_study
from degensolve.verify import RATIO_BRACKET


def test_diagonal_law():
    spec = system_fixture()
    assert spec.diagonal(3) == pytest.approx([1.0, 4.0, 9.0])
    with pytest.raises(ValidationError, match="not positive at m=1"):
        replace(spec, d_law=parse("m-1")).diagonal(3)
    with pytest.raises(ValidationError, match="nondecreasing"):
        replace(spec, d_law=parse("1/m")).diagonal(3)


def test_spec_validation():
    spec = system_fixture()
    for k, v in (("mu", 0.5), ("n", 0), ("support", 0)):
        with pytest.raises(ValidationError, match=k):
            replace(spec, **{k: v}).validate()


def test_truncated_problem():
    spec = system_fixture()
    p = spec.problem(4)
    assert p.dim_e == 4
    assert p.operator.diagonal_values() == pytest.approx([1.0, 4.0, 9.0, 16.0])
    f = p.source()
    assert np.any(f[..., 0] != 0)
    assert np.all(f[..., 1:] == 0)
    assert p.a1_law is not None and p.a2_law is not None
    q = system_fixture(coupled=False).problem(4)
    assert q.a1_law is None
    assert np.any(q.source()[..., 3] != 0)


def test_decay_condition():
    spec = system_fixture()
    r = decay_condition_check(spec, [4, 8])
    assert r.finite
    assert [n for n, _, _ in r.growth_vs_n] == [4, 8, 16]
    assert 1.0 <= r.sup_a < 3.0
    assert r.sup_a == pytest.approx(r.sup_b)
    assert r.get_json()["growth_vs_n"][0]["n"] == 4
    flat = replace(spec, a_law=parse("1"), b_law=None)
    r = decay_condition_check(flat, [8])
    assert not r.finite
    assert r.sup_b == 0.0
    with pytest.raises(ValidationError, match="increasing"):
        decay_condition_check(spec, [8, 4])
    with pytest.raises(ValidationError):
        decay_condition_check(spec, [])


def test_truncate_and_solve():
    r = truncate_and_solve(system_fixture(), 8)
    assert r.n == 8
    assert r.decay.finite
    assert r.solution.u.dim_e == 8
    assert r.lqd_norm() > 0
    assert 0 < r.report.ratio < np.inf
    assert r.solution.coefficient_bound is not None
    js = r.get_json()
    assert set(js) == {"n", "lqd_norm", "report", "decay"}
    r = truncate_and_solve(replace(system_fixture(), a_law=parse("1")), 4)
    assert "decay_condition_failed" in r.solution.flags
    # partial sums still rise by 6% from N = 4 to 8
    r = truncate_and_solve(system_fixture(), 4)
    assert not r.decay.finite
    assert "decay_condition_failed" in r.solution.flags


def test_decoupled_solve():
    p = system_fixture(coupled=False).problem(3)
    a = solve_system(p, coupled=False).u.values
    b = solve_2d_direct(p).u.values
    assert np.max(np.abs(a - b)) < 1e-12


def test_truncation_study():
    study = truncation_study(system_fixture(), [4, 8])
    assert study.reference_n == 16
    assert [r.n for r in study.rows] == [4, 8]
    assert study.monotone()
    assert study.contraction() < 1.0
    assert list(study.rows[0].row()) == STUDY_COLUMNS
    assert study.rows[0].row()["decay_finite"] == "true"
    js = study.get_json()
    assert js["monotone"]
    threaded = truncation_study(system_fixture(), [4, 8], threads=2)
    assert [r.difference for r in threaded.rows] == [r.difference for r in study.rows]
    short = truncation_study(system_fixture(), [2, 4])
    assert short.rows[0].row()["decay_finite"] == "false"
    assert short.monotone()


def test_decoupled_oracle():
    study = truncation_study(system_fixture(coupled=False), [2, 4])
    assert max(r.difference for r in study.rows) < 1e-12


def test_scaled_system():
    spec = system_fixture(scale=SYSTEM_SCALE, lam=SYSTEM_LAMBDA)
    r = truncate_and_solve(spec, 8)
    assert r.decay.finite
    assert r.decay.sup_a == pytest.approx(SYSTEM_SCALE * decay_condition_check(system_fixture(), [8]).sup_a)
    assert RATIO_BRACKET[0] <= r.report.ratio <= RATIO_BRACKET[1]
    assert r.report.lower_order_ratio is not None
    assert complex(r.problem.lam) == SYSTEM_LAMBDA
