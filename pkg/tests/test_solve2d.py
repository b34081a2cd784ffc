from dataclasses import replace

import numpy as np
import pytest

from degensolve.basics import OperatorError, PrincipalForm, ValidationError
from degensolve.funcdsl import parse
from degensolve.mesh import Exponents
from degensolve.opspace import OperatorSpec
from degensolve.solve1d import BoundarySpec
from degensolve.solve2d import CoefficientLaw, MovingSpec, Problem2D, assemble_2d, boundary_factor, \
    principal_factor, rescale, solve_2d_direct, solve_2d_reduced, solve_moving
from degensolve.suite import moving_problem, reference_2d
from degensolve.verify import coercivity_report


def exponents(alpha=1.3, beta=1.3):
    return Exponents(alpha, beta, 4.0)


def relative(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.max(np.abs(u - v)) / np.max(np.abs(u)))


def test_manufactured_solution():
    # u = e^(X + Y) with -u^[2]_x - u^[2]_y + (1 + 3)u = 2 e^(X + Y)
    p = Problem2D.build(exponents(), OperatorSpec.of_scalar(1.0), n=129, lam=3.0, form=PrincipalForm.REGULARIZED,
                        rhs=parse("2*exp(X+Y)"), bc_x=BoundarySpec(data=parse("exp(Y)")),
                        bc_y=BoundarySpec(data=parse("exp(X)")))
    s = solve_2d_direct(p)
    zx, zy = np.meshgrid(p.grid.gx.y_nodes, p.grid.gy.y_nodes, indexing="ij")
    exact = np.exp(zx + zy)
    assert np.max(np.abs(s.u.values[..., 0] - exact)) < 5e-3
    assert s.u.values[-1, -1, 0] == pytest.approx(1.0)
    assert s.residual_norm < 1e-10
    assert s.coefficient_bound is None


def test_two_paths():
    p = reference_2d(33)
    assert relative(solve_2d_direct(p).u.values, solve_2d_reduced(p).u.values) < 1e-10
    p = reference_2d(33, form=PrincipalForm.PLAIN)
    assert relative(solve_2d_direct(p).u.values, solve_2d_reduced(p).u.values) < 1e-10
    p = reference_2d(33, lam=100 * np.exp(1j * np.pi / 3))
    direct = solve_2d_direct(p).u.values
    assert np.iscomplexobj(direct)
    assert relative(direct, solve_2d_reduced(p).u.values) < 1e-10


def test_two_paths_diagonal():
    p = Problem2D.build(exponents(1.3, 1.4), OperatorSpec.of_diagonal([1.0, 5.0]), n=17, ny=21, lam=10.0,
                        form=PrincipalForm.REGULARIZED, rhs=parse("exp(X)*exp(Y)*m"),
                        bc_y=BoundarySpec(data=np.array([1.0, 2.0])))
    a = solve_2d_direct(p).u.values
    assert a.shape == (17, 21, 2)
    assert relative(a, solve_2d_reduced(p).u.values) < 1e-10


def test_dense_operator():
    p = Problem2D.build(exponents(), OperatorSpec.of_dense([[2.0, 1.0], [0.0, 3.0]]), n=17, lam=1.0,
                        rhs=parse("exp(X)*exp(Y)"))
    s = solve_2d_direct(p)
    assert s.au.values[..., 0] == pytest.approx(2 * s.u.values[..., 0] + s.u.values[..., 1])
    with pytest.raises(OperatorError):
        solve_2d_reduced(p)


def test_derivative_terms():
    p = reference_2d(33, form=PrincipalForm.PLAIN)
    s = solve_2d_direct(p)
    assert s.ux2.values == pytest.approx(s.u2x.values - 1.3 * np.power(p.grid.gx.x_nodes, 0.3)[:, None, None]
                                         * s.u1x.values)
    assert s.u1y.values.shape == s.u.values.shape


def test_assembly_order():
    p = reference_2d(17)
    asm = assemble_2d(p)
    assert asm.matrix.shape == (15 * 15, 15 * 15)
    assert asm.edge_x.shape == (17, 1)
    assert asm.edge_y.shape == (17, 1)
    # symmetric y-operator in the regularized form
    m = asm.matrix.toarray()
    assert m == pytest.approx(m.T)


def test_lower_order_terms():
    law = CoefficientLaw(matrix=np.eye(1), scale=parse("x"))
    p = replace(reference_2d(17, lam=10.0), a1_law=law)
    s = solve_2d_direct(p)
    # ||A1 A^-(1/2 - mu)|| with A = 1 and sup x = 1
    assert s.coefficient_bound == pytest.approx(1.0)
    assert s.lower_order_norm > 0
    assert s.flags == []
    s = solve_2d_direct(replace(p, coefficient_bound=0.5))
    assert "coefficient_bound_exceeded" in s.flags
    with pytest.raises(ValidationError, match="A1 = A2 = 0"):
        solve_2d_reduced(p)


def test_coefficient_law():
    with pytest.raises(ValidationError):
        CoefficientLaw()
    with pytest.raises(ValidationError):
        CoefficientLaw(matrix=np.eye(2), entries=parse("1"))
    law = CoefficientLaw(entries=parse("x*2^(-abs(m-j))"))
    v = law.values(np.array([1.0, 2.0]), np.array([0.0, 0.0]), 2)
    assert v.shape == (2, 2, 2)
    np.testing.assert_allclose(v[1], [[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(law.block(np.array([1.0, 2.0]), np.zeros(2), 2).toarray()[2:, 2:], v[1])
    with pytest.raises(ValidationError, match="shape"):
        CoefficientLaw(matrix=np.eye(2)).values(np.ones(1), np.ones(1), 3)


def test_validation():
    p = reference_2d(17)
    with pytest.raises(ValidationError, match="t1"):
        solve_2d_direct(replace(p, t1=0.0))
    with pytest.raises(ValidationError, match="mu"):
        solve_2d_direct(replace(p, mu=0.5))
    with pytest.raises(ValidationError, match="exponents.beta"):
        solve_2d_direct(Problem2D.build(exponents(1.3, 1.2), OperatorSpec.of_scalar(1.0), n=17))
    with pytest.raises(ValidationError, match="right-hand side shape"):
        solve_2d_direct(replace(p, rhs=np.ones((5, 5))))


def test_scaling_factors():
    assert principal_factor(0.5, 1.3) == pytest.approx(0.5 ** -0.6)
    assert boundary_factor(0.5, 1.3, 1) == pytest.approx(0.5 ** -0.3)
    assert boundary_factor(0.5, 1.3, 0) == 1.0


def test_moving_identity():
    p = moving_problem("1", 33)
    s = solve_moving(p)
    assert relative(s.u.values, solve_2d_direct(replace(p, moving=None)).u.values) < 1e-12
    assert s.condition is not None and s.condition > 1


def test_moving_stretched():
    p = moving_problem("1+s", 33)
    r = rescale(p)
    assert (r.physical.a, r.physical.b) == (1.0, 2.0)
    assert r.multipliers == (1.0, 0.5)
    assert r.physical.grid.gy.x_nodes[-1] == 2.0
    # nodes coincide under the substitution
    assert r.physical.grid.gy.x_nodes * 0.5 == pytest.approx(p.grid.gy.x_nodes, rel=1e-12)
    s = solve_moving(p)
    assert s.u.grid.gy.a == 2.0
    assert relative(s.u.values, solve_2d_direct(r.physical).u.values) < 1e-9


def test_moving_validation():
    p = moving_problem("1", 17)
    with pytest.raises(ValidationError, match="solve_moving"):
        solve_2d_direct(p)
    with pytest.raises(ValidationError, match="positive"):
        rescale(replace(p, moving=MovingSpec(parse("1"), parse("-s"), 1.0)))
    with pytest.raises(ValidationError, match="lower order"):
        rescale(replace(p, a1_law=CoefficientLaw(matrix=np.eye(1))))
    with pytest.raises(ValidationError, match="no moving"):
        rescale(replace(p, moving=None))


def test_symmetric_solution():
    p = reference_2d(33)
    u = solve_2d_direct(p).u.values[..., 0]
    assert np.max(np.abs(u - u.T)) < 1e-10 * np.max(np.abs(u))


def test_swapped_parameters():
    p = reference_2d(33)
    a = replace(p, t1=1e-2, t2=1.0)
    b = replace(p, t1=1.0, t2=1e-2)
    ra = coercivity_report(a, solve_2d_direct(a))
    rb = coercivity_report(b, solve_2d_direct(b))
    assert ra.ratio == pytest.approx(rb.ratio, rel=1e-8)
    assert ra.ratio_alt == pytest.approx(rb.ratio_alt, rel=1e-8)


def test_scaled_source():
    p = reference_2d(33)
    q = replace(p, rhs=7.0 * p.source())
    r = coercivity_report(p, solve_2d_direct(p))
    s = coercivity_report(q, solve_2d_direct(q))
    assert s.denominator == pytest.approx(7.0 * r.denominator)
    assert s.ratio == pytest.approx(r.ratio, rel=1e-10)


def test_moving_factor_convention():
    # k = b / b(s) = 1/2 enters as k^(2(1 - alpha)), the reciprocal of 2^(2(1 - alpha))
    r = rescale(moving_problem("1+s", 17))
    k = r.multipliers[1]
    assert k == 0.5
    assert principal_factor(k, 1.3) == pytest.approx(0.5 ** -0.6)
    assert principal_factor(k, 1.3) == pytest.approx(1.0 / 2 ** (2 * (1 - 1.3)))
    assert 2 ** (2 * (1 - 1.3)) == pytest.approx(0.6598, abs=1e-4)
    assert principal_factor(1.0 / k, 1.3) == pytest.approx(2 ** (2 * (1 - 1.3)))
