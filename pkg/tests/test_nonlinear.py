from dataclasses import replace

import numpy as np
import pytest

from degensolve.basics import DivergenceError, PrincipalForm, ValidationError
from degensolve.funcdsl import parse
from degensolve.nonlinear import MIN_FIT_POINTS, IterationStep, IterationTrace, NonlinearSpec, PicardSolver, \
    TRACE_COLUMNS, ball_check, lipschitz_probe, picard_solve
from degensolve.solve2d import MovingSpec
from degensolve.suite import DIVERGENT_EPSILON, MIN_R2, RATIO_CONSTANCY, affine_rate, affine_toy, nonlinear_toy, \
    reference_2d


def test_toy_problem_converges():
    spec = nonlinear_toy(0.1, n=65)
    u, trace = picard_solve(spec, tol=1e-10, max_iter=30)
    assert trace.converged
    assert 1 <= trace.iterations < 30
    assert trace.final_residual() < 1e-8
    assert trace.stayed_in_ball()
    # too few iterates for a rate
    assert trace.iterations < MIN_FIT_POINTS
    assert trace.geometric_fit() is None
    assert trace.get_json()["r2"] is None
    g = spec.base.grid
    zx, zy = np.meshgrid(g.gx.y_nodes, g.gy.y_nodes, indexing="ij")
    exact = zx * zy * np.exp(zx + zy)
    assert np.max(np.abs(u.u.values[..., 0] - exact)) < 2e-2


def test_trace_rows():
    _, trace = picard_solve(nonlinear_toy(0.1, n=17), tol=1e-8)
    rows = [s.row() for s in trace.steps]
    assert list(rows[0]) == TRACE_COLUMNS
    assert rows[0]["iteration"] == 0
    assert rows[0]["ratio"] == ""
    assert rows[1]["in_ball"] == "true"
    js = trace.get_json()
    assert js["iterations"] == trace.iterations
    assert js["converged"]
    assert len(js["contraction_estimates"]) == trace.iterations


def test_divergence():
    with pytest.raises(DivergenceError) as e:
        picard_solve(nonlinear_toy(DIVERGENT_EPSILON, n=17), tol=1e-10, max_iter=30)
    assert e.value.trace is not None
    assert not e.value.trace.converged
    assert e.value.trace.shrink == 0


def test_shrink_retry():
    try:
        _, trace = picard_solve(nonlinear_toy(DIVERGENT_EPSILON, n=17), tol=1e-10, max_iter=30, shrink=1)
    except DivergenceError as e:
        trace = e.trace
    assert trace.shrink == 1
    assert trace.extent == (0.5, 0.5)


def test_zero_source():
    spec = NonlinearSpec(reference_2d(17, lam=1.0), parse("0"), parse("u^2"))
    u, trace = picard_solve(spec)
    assert trace.converged
    assert trace.iterations == 0
    assert np.all(u.u.values == 0)


def test_lipschitz_probe():
    spec = NonlinearSpec(reference_2d(17, lam=1.0), parse("2*u"), seed=3)
    r = lipschitz_probe(spec, 40)
    assert r.mu_hat == pytest.approx(2.0, abs=1e-10)
    assert r.samples == 40
    js = r.get_json()
    assert js["mu_r"] == 1.0
    spec = NonlinearSpec(reference_2d(17, lam=1.0), parse("sin(ux)"), seed=3)
    assert lipschitz_probe(spec).mu_hat <= 1.0 + 1e-12
    with pytest.raises(ValidationError):
        lipschitz_probe(spec, 1)


def test_probe_is_seeded():
    spec = nonlinear_toy(0.1, n=17)
    assert lipschitz_probe(spec).mu_hat == lipschitz_probe(spec).mu_hat


def test_ball_check():
    trace = IterationTrace(steps=[IterationStep(0, 2.0, 0.0, None, True), IterationStep(1, 0.1, 0.0, 0.05, True)],
                           w_norm=2.0, f_norm=4.0)
    b = ball_check(trace, 0.5, 1.0)
    assert b.stayed_in_ball
    assert b.implied_r == 2.5
    assert b.c0 == 0.5
    assert b.contraction()
    assert not ball_check(trace, 0.5, 3.0).contraction()
    assert ball_check(trace, 0.5, 1.0, c0=2.0).contraction_bound == 2.0
    assert b.get_json()["implied_R"] == 2.5


def test_geometric_fit():
    steps = [IterationStep(0, 5.0, 0.0, None, True)]
    steps += [IterationStep(n, 10.0 ** -n, 0.0, 0.1, True) for n in range(1, 6)]
    rate, r2 = IterationTrace(steps=steps).geometric_fit()
    assert rate == pytest.approx(0.1)
    assert r2 == pytest.approx(1.0)
    assert IterationTrace(steps=steps).ratio_spread() == pytest.approx(1.0)
    assert IterationTrace(steps=steps[:-1]).geometric_fit() is None
    assert IterationTrace(steps=steps[:3]).ratio_spread() is None
    assert IterationTrace().final_residual() == np.inf


def test_validation():
    base = reference_2d(17, lam=1.0)
    with pytest.raises(ValidationError, match="real lambda"):
        PicardSolver(NonlinearSpec(replace(base, lam=1 + 1j), parse("1")))
    with pytest.raises(ValidationError, match="radius"):
        PicardSolver(NonlinearSpec(base, parse("1"), radius=0.0))
    with pytest.raises(ValidationError, match="Lipschitz"):
        PicardSolver(NonlinearSpec(base, parse("1"), mu_r=-1.0))
    with pytest.raises(ValidationError, match="moving"):
        PicardSolver(NonlinearSpec(replace(base, moving=MovingSpec(parse("1"), parse("1"), 0.0)), parse("1")))
    spec = NonlinearSpec(base, parse("1"))
    with pytest.raises(ValidationError, match="tolerance"):
        picard_solve(spec, tol=0.0)
    with pytest.raises(ValidationError, match="shrink"):
        picard_solve(spec, shrink=5)


def test_affine_rate_is_constant():
    spec = affine_toy()
    _, trace = picard_solve(spec, tol=1e-10, max_iter=30)
    assert trace.converged
    rho = affine_rate(spec)
    assert 0.0 < rho < 1.0
    ratios = [s.ratio for s in trace.steps if s.iteration > 2]
    assert len(ratios) >= 2
    assert max(ratios) / min(ratios) <= RATIO_CONSTANCY
    assert ratios == pytest.approx([rho] * len(ratios), rel=1e-3)
    rate, r2 = trace.geometric_fit()
    assert rate == pytest.approx(rho, rel=1e-3)
    assert r2 >= MIN_R2
    assert trace.get_json()["ratio_spread"] == trace.ratio_spread()


def test_affine_mixed_modes():
    base = affine_toy().base
    _, trace = picard_solve(NonlinearSpec(base, parse("0.5*u + exp(X)*exp(Y)")), tol=1e-10, max_iter=30)
    ratios = trace.contraction_estimates()
    # the estimates rise toward the rate of the slowest mode
    assert ratios[-1] > ratios[1]
    assert max(ratios) < 1.0


def test_plain_toy():
    spec = nonlinear_toy(0.1, n=65, form=PrincipalForm.PLAIN)
    assert spec.base.form == PrincipalForm.PLAIN
    u, trace = picard_solve(spec, tol=1e-10, max_iter=30)
    assert trace.converged
    assert trace.final_residual() < 1e-8
    g = spec.base.grid
    zx, zy = np.meshgrid(g.gx.y_nodes, g.gy.y_nodes, indexing="ij")
    exact = zx * zy * np.exp(zx + zy)
    assert np.max(np.abs(u.u.values[..., 0] - exact)) < 5e-2
