from dataclasses import replace

import numpy as np
import pytest

from degensolve.basics import Closure, ProblemKind, ValidationError
from degensolve.funcdsl import parse
from degensolve.mesh import weighted_lp_norm
from degensolve.opspace import OperatorSpec
from degensolve.solve1d import BoundarySpec, Problem1D, assemble_1d, solve_1d, solve_1d_physical
from degensolve.suite import REFERENCE_ALPHA, REFERENCE_P, manufactured_1d, reference_1d


def max_error(values: np.ndarray, exact: np.ndarray) -> float:
    return float(np.max(np.abs(values - exact)))


def test_manufactured_solution():
    errors = []
    for n in (129, 257):
        p = manufactured_1d(n)
        s = solve_1d(p)
        exact = np.exp(p.grid.y_nodes)
        errors.append(max_error(s.u.values[:, 0], exact))
        assert s.residual_norm < 1e-10
        assert s.u.values[-1, 0] == pytest.approx(1.0)
    assert errors[1] < 1e-3
    assert np.log2(errors[0] / errors[1]) > 1.8


def test_derivatives():
    p = manufactured_1d(513)
    s = solve_1d(p)
    exact = np.exp(p.grid.y_nodes)
    assert max_error(s.u1.values[:, 0], exact) < 1e-3
    assert max_error(s.u2.values[:, 0], exact) < 5e-3
    assert s.au.values == pytest.approx(s.u.values)


def test_complex_lambda():
    lam = 10j
    p = Problem1D.build(ProblemKind.REGULARIZED, 1.3, OperatorSpec.of_scalar(1.0), n=257, lam=lam,
                        bc=BoundarySpec(data=np.array([1.0])))
    exact = np.exp(p.grid.y_nodes)
    p = p.with_rhs(lam * exact)
    s = solve_1d(p)
    assert np.iscomplexobj(s.u.values)
    assert max_error(s.u.values[:, 0], exact) < 2e-3


def test_boundary_functional():
    # u = e^X has u^[1](a) = 1
    base = manufactured_1d(513)
    exact = np.exp(base.grid.y_nodes)
    for bc in (BoundarySpec(m=1, delta=(0.0, 1.0), data=np.array([1.0])),
               BoundarySpec(m=1, delta=(1.0, 1.0), data=np.array([2.0])),
               BoundarySpec(m=1, delta=(1.0, 1.0j), data=np.array([1.0 + 1.0j]))):
        s = solve_1d(replace(base, bc=bc))
        assert max_error(s.u.values[:, 0], exact) < 2e-3


def test_boundary_law():
    p = replace(manufactured_1d(129), bc=BoundarySpec(data=parse("x")))
    assert p.boundary_data() == pytest.approx([1.0])
    s = solve_1d(p)
    assert s.u.values[-1, 0] == pytest.approx(1.0)


def test_dense_operator():
    a = np.array([[2.0, 1.0], [1.0, 2.0]])
    c = np.array([1.0, -0.5])
    p = Problem1D.build(ProblemKind.REGULARIZED, 1.3, OperatorSpec.of_dense(a), n=257, lam=1.0,
                        bc=BoundarySpec(data=c))
    z = np.exp(p.grid.y_nodes)
    # -u^[2] + (A + 1)u = e^X A c for u = e^X c
    p = p.with_rhs(np.outer(z, a @ c))
    s = solve_1d(p)
    assert s.u.dim_e == 2
    assert max_error(s.u.values, np.outer(z, c)) < 2e-3
    assert s.au.values == pytest.approx(s.u.values @ a.T)


def test_diagonal_decouples():
    d = OperatorSpec.of_diagonal([1.0, 4.0])
    p = Problem1D.build(ProblemKind.REGULARIZED, 1.3, d, n=129, lam=2.0, depth=15.0, rhs=parse("exp(X)*m"))
    s = solve_1d(p)
    for m, v in enumerate((1.0, 4.0)):
        q = Problem1D.build(ProblemKind.REGULARIZED, 1.3, OperatorSpec.of_scalar(v), n=129, lam=2.0, depth=15.0,
                            rhs=parse(f"exp(X)*{m + 1}"))
        assert s.u.values[:, m] == pytest.approx(solve_1d(q).u.values[:, 0], abs=1e-12)


def test_closures_agree_near_endpoint():
    p = reference_1d(257)
    u_d = solve_1d(p).u.values[:, 0]
    u_n = solve_1d(replace(p, closure=Closure.NEUMANN)).u.values[:, 0]
    assert u_d[0] == 0.0
    assert u_n[0] != 0.0
    assert np.max(np.abs(u_d[128:] - u_n[128:])) < 1e-8


def test_plain_form():
    p = reference_1d(257, lam=1.0, kind=ProblemKind.PLAIN)
    a = solve_1d(p).u.values
    b = solve_1d_physical(p).u.values
    assert np.max(np.abs(a - b)) / np.max(np.abs(a)) < 5e-3
    with pytest.raises(ValidationError, match="plain form only"):
        solve_1d_physical(reference_1d(65))
    with pytest.raises(ValidationError, match="dirichlet"):
        solve_1d_physical(replace(p, closure=Closure.NEUMANN))


def test_parametric():
    p = reference_1d(129, kind=ProblemKind.PARAMETRIC)
    u1 = solve_1d(p).u.values
    small = solve_1d(replace(p, t=1e-4)).u.values
    assert np.max(np.abs(small)) > 0
    assert not np.allclose(u1, small)
    s = solve_1d(replace(p, t=1e-2, bc=BoundarySpec(data=np.array([1.0]), t_scaling=True)))
    assert "negative_sigma_0" in s.flags
    with pytest.raises(ValidationError, match="outside"):
        solve_1d(replace(p, t=0.0))
    with pytest.raises(ValidationError, match="only for the parametric"):
        solve_1d(replace(reference_1d(65), t=0.5))


def test_boundary_spec():
    with pytest.raises(ValidationError):
        BoundarySpec(m=2, delta=(1.0, 1.0, 1.0))
    with pytest.raises(ValidationError, match="coefficients"):
        BoundarySpec(m=1, delta=(1.0,))
    with pytest.raises(ValidationError, match="zero"):
        BoundarySpec(m=1, delta=(1.0, 0.0))
    c0, c1 = BoundarySpec(m=1, delta=(1.0, 2.0), t_scaling=True).coefficients(1e-2, 1.3, 4.0)
    assert c0 == pytest.approx((1e-2) ** (-5 / 12))
    assert c1 == pytest.approx(2 * (1e-2) ** (1 / 12))
    assert BoundarySpec(m=1, delta=(1.0, 2.0)).coefficients() == (1.0, 2.0)
    with pytest.raises(ValidationError, match="dimension"):
        BoundarySpec(data=np.array([1.0, 2.0])).data_vector(1)


def test_validation():
    with pytest.raises(ValidationError, match="1 \\+ 1/p"):
        solve_1d(Problem1D.build(ProblemKind.REGULARIZED, 1.2, OperatorSpec.of_scalar(1.0), n=65))
    with pytest.raises(ValidationError, match="below"):
        solve_1d(Problem1D.build(ProblemKind.REGULARIZED, 1.3, OperatorSpec.of_scalar(1.0), n=6))
    with pytest.raises(ValidationError, match="right-hand side shape"):
        solve_1d(reference_1d(65).with_rhs(np.ones(10)))


def test_assembly_shape():
    p = Problem1D.build(ProblemKind.PLAIN, 1.3, OperatorSpec.of_diagonal([1.0, 2.0, 3.0]), n=33)
    system = assemble_1d(p)
    assert system.matrix.shape == (31 * 3, 31 * 3)
    assert system.rhs.shape == (31 * 3,)
    assert not np.iscomplexobj(system.matrix.toarray())


def test_linearity():
    p = reference_1d(129)
    u1 = solve_1d(p.with_rhs(parse("exp(X)"), np.array([1.0]))).u.values
    u2 = solve_1d(p.with_rhs(parse("sin(3*X)"), np.array([-0.5]))).u.values
    u12 = solve_1d(p.with_rhs(parse("exp(X) + sin(3*X)"), np.array([0.5]))).u.values
    assert max_error(u12, u1 + u2) < 1e-12


def test_depth_doubling():
    p = reference_1d(129)
    depth = p.grid.depth
    q = Problem1D.build(ProblemKind.REGULARIZED, REFERENCE_ALPHA, OperatorSpec.of_scalar(1.0), n=257, lam=1e3,
                        depth=2 * depth, p=REFERENCE_P, rhs=parse("exp(X)"))
    assert q.grid.y_nodes[128] == pytest.approx(-depth)
    short = solve_1d(p).u.values
    long = solve_1d(q).u.values[128:]
    assert weighted_lp_norm(long - short, p.grid, REFERENCE_P) < 1e-8
