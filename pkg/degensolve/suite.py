"""Frozen reference problems and acceptance checks"""

from dataclasses import replace
import logging
import math
import time
from typing import Callable, Dict, List, Optional

import numpy as np

from degensolve.basics import DegenSolveError, DivergenceError, NormMethod, PrincipalForm, ProblemKind, \
    ValidationError
from degensolve.config import DEFAULT_FRACTIONS, DEFAULT_MODULI, DEFAULT_T_VALUES, RunConfig
from degensolve.funcdsl import parse
from degensolve.mesh import Exponents
from degensolve.nonlinear import NonlinearSpec, TRACE_COLUMNS, ball_check, lipschitz_probe, picard_solve
from degensolve.opspace import OperatorSpec, SectorSpec
from degensolve.report import RunReport, Table
from degensolve.solve1d import BoundarySpec, Problem1D, solve_1d, solve_1d_physical
from degensolve.solve2d import MovingSpec, Problem2D, rescale, solve_2d_direct, solve_2d_reduced, solve_moving
from degensolve.sysinf import STUDY_COLUMNS, SystemSpec, truncate_and_solve, truncation_study
from degensolve.verdict import Check, Verdict
from degensolve.verify import LEVEL_BRACKET, REPORT_COLUMNS, coercivity_report, semigroup_probe, sweep_lambda, \
    sweep_t

# Exponents of the reference problems
REFERENCE_ALPHA = 1.3
REFERENCE_P = 4.0

# Node counts of the manufactured solution convergence study
CONVERGENCE_LEVELS = (65, 129, 257, 513)
MIN_ORDER = 1.9
CONVERGENCE_SECONDS = 5.0

# Plain and regularized form agreement
FORM_TOLERANCE = 5e-3
FORM_REFINEMENT = 3.0

# Direct and reduced 2D solves
TWO_PATH_TOLERANCE = 1e-10
TWO_PATH_SECONDS = 30.0

# Closed form and K-functional interpolation norm equivalence constant
EQUIVALENCE_BRACKET = 3.0

# Moving domain pullback
IDENTITY_TOLERANCE = 1e-12
MOVING_TOLERANCE = 5e-3

# Nonlinear iteration
TOY_EPSILON = 0.1
DIVERGENT_EPSILON = 500.0
AFFINE_SLOPE = 0.5
RATIO_CONSTANCY = 1.05
MIN_R2 = 0.999
RESIDUAL_BOUND = 1e-10
MAX_ITERATIONS = 30
LIPSCHITZ_TOLERANCE = 1e-10

# Infinite system truncation
SYSTEM_SIZES = [8, 16, 32, 64]
SYSTEM_NODES = 9
DECAY_BOUND = 3.0
TRUNCATION_CONTRACTION = 1e-3
DECOUPLED_TOLERANCE = 1e-12
SYSTEM_SCALE = 0.1
SYSTEM_LAMBDA = 1e3

# Sector sample of the reference sweeps
REFERENCE_SECTOR = SectorSpec.symmetric(math.pi / 3, DEFAULT_MODULI, DEFAULT_FRACTIONS)


def reference_1d(n: int = 257, lam: complex = 1e3, kind: ProblemKind = ProblemKind.REGULARIZED) -> Problem1D:
    """-u^[2] + (1 + lambda)u = e^X on (0, 1), u(1) = 0"""
    return Problem1D.build(kind, REFERENCE_ALPHA, OperatorSpec.of_scalar(1.0), n=n, lam=lam, p=REFERENCE_P,
                           rhs=parse("exp(X)"))


def manufactured_1d(n: int) -> Problem1D:
    """Exact solution u = e^X at lambda = 1"""
    return Problem1D.build(ProblemKind.REGULARIZED, REFERENCE_ALPHA, OperatorSpec.of_scalar(1.0), n=n, lam=1.0,
                           p=REFERENCE_P, bc=BoundarySpec(data=np.array([1.0])), rhs=parse("exp(X)"))


def reference_2d(n: int = 65, lam: complex = 1e3, form: PrincipalForm = PrincipalForm.REGULARIZED) -> Problem2D:
    """Separable problem with source e^X e^Y on the unit square"""
    e = Exponents(REFERENCE_ALPHA, REFERENCE_ALPHA, REFERENCE_P)
    return Problem2D.build(e, OperatorSpec.of_scalar(1.0), n=n, lam=lam, rhs=parse("exp(X)*exp(Y)"), form=form)


def nonlinear_toy(epsilon: float = TOY_EPSILON, n: int = 65,
                  form: PrincipalForm = PrincipalForm.REGULARIZED) -> NonlinearSpec:
    """Cubic perturbation with exact solution u = X Y e^(X + Y), the suite runs the regularized form"""
    base = reference_2d(n, lam=1.0, form=form)
    u = "X*Y*exp(X+Y)"
    f = f"-(2+X)*Y*exp(X+Y) - X*(2+Y)*exp(X+Y) + 2*{u} + {epsilon!r}*({u})^3"
    if form == PrincipalForm.PLAIN:
        # -x^2a u_xx = -u^[2] + alpha x^(alpha - 1) u^[1]
        a = REFERENCE_ALPHA
        f += f" + {a!r}*x^{a - 1.0!r}*(1+X)*Y*exp(X+Y) + {a!r}*y^{a - 1.0!r}*X*(1+Y)*exp(X+Y)"
    return NonlinearSpec(base, parse(f), parse(f"{epsilon!r}*u^2"), mu_r=1.0, radius=0.5)


def affine_toy(slope: float = AFFINE_SLOPE, n: int = 33) -> NonlinearSpec:
    """F = slope u + f0 with f0 the lowest discrete eigenmode of the frozen operator"""
    base = reference_2d(n, lam=1.0)
    k = math.pi / base.grid.gx.depth
    return NonlinearSpec(base, parse(f"{slope!r}*u + sin({k!r}*X)*sin({k!r}*Y)"), mu_r=slope, radius=1.0)


def affine_rate(spec: NonlinearSpec, slope: float = AFFINE_SLOPE) -> float:
    """Exact contraction rate slope / (1 + lambda + mu_x + mu_y) of the affine toy"""
    mu = 0.0
    for g in (spec.base.grid.gx, spec.base.grid.gy):
        mu += 4.0 / g.h ** 2 * math.sin(math.pi / (2 * (g.n - 1))) ** 2
    return slope / (1.0 + complex(spec.base.lam).real + mu)


def system_fixture(coupled: bool = True, scale: float = 1.0, lam: float = 1.0) -> SystemSpec:
    """d_m = m^2 with couplings scale 2^-|m-j|, forced in the first component when coupled"""
    e = Exponents(REFERENCE_ALPHA, REFERENCE_ALPHA, REFERENCE_P)
    base = Problem2D.build(e, OperatorSpec.of_scalar(1.0), n=SYSTEM_NODES, lam=lam, rhs=parse("exp(X)*exp(Y)/m"),
                           form=PrincipalForm.REGULARIZED)
    law = parse(f"{scale!r}*2^(-abs(m-j))") if coupled else None
    return SystemSpec(parse("m^2"), base, law, law, mu=0.25, support=1 if coupled else None)


def _relative(u: np.ndarray, v: np.ndarray) -> float:
    scale = float(np.max(np.abs(u)))
    return float(np.max(np.abs(u - v))) / (scale if scale > 0 else 1.0)


def check_manufactured(report: RunReport, config: RunConfig):
    """Observed order of the manufactured solution study"""
    start = time.monotonic()
    rows = []
    for n in CONVERGENCE_LEVELS:
        p = manufactured_1d(n)
        s = solve_1d(p)
        error = float(np.max(np.abs(s.u.values[:, 0] - np.exp(p.grid.y_nodes))))
        rows.append({"n": n, "h": p.grid.h, "error": error})
    elapsed = time.monotonic() - start
    hs = np.log([r["h"] for r in rows])
    es = np.log([r["error"] for r in rows])
    order = float(np.polyfit(hs, es, 1)[0])
    report.add_table("convergence", ["n", "h", "error"], rows)
    report.results["manufactured"] = {"order": order, "seconds": elapsed}
    report.add_check(Check.at_least("manufactured_order", order, MIN_ORDER))
    report.add_check(Check.at_most("manufactured_time", elapsed, CONVERGENCE_SECONDS))


def check_form_equivalence(report: RunReport, config: RunConfig):
    """Plain form by the drift identity against differences on the physical nodes"""
    diffs = []
    for n in (129, 257):
        p = reference_1d(n, lam=1.0, kind=ProblemKind.PLAIN)
        diffs.append(_relative(solve_1d(p).u.values, solve_1d_physical(p).u.values))
    refinement = diffs[0] / diffs[1] if diffs[1] > 0 else math.inf
    report.results["form_equivalence"] = {"difference_129": diffs[0], "difference_257": diffs[1],
                                          "refinement": refinement}
    report.add_check(Check.at_most("form_equivalence", diffs[0], FORM_TOLERANCE))
    report.add_check(Check.at_least("form_refinement", refinement, FORM_REFINEMENT))


def check_two_path(report: RunReport, config: RunConfig):
    """Direct and reduced 2D solves of the separable problem"""
    start = time.monotonic()
    p = reference_2d()
    diff = _relative(solve_2d_direct(p).u.values, solve_2d_reduced(p).u.values)
    elapsed = time.monotonic() - start
    report.results["two_path_2d"] = {"difference": diff, "seconds": elapsed}
    report.add_check(Check.at_most("two_path_2d", diff, TWO_PATH_TOLERANCE))
    report.add_check(Check.at_most("two_path_time", elapsed, TWO_PATH_SECONDS))


def check_sector(report: RunReport, config: RunConfig):
    """Coercive ratio over the sector for both reference problems"""
    low, high = config.checks.ratio_bracket
    for name, p in (("sector_1d", reference_1d()), ("sector_2d", reference_2d())):
        r = sweep_lambda(p, REFERENCE_SECTOR, config.threads, config.norm_method, high)
        report.add_table(name, REPORT_COLUMNS, [rep.row(i) for i, rep in enumerate(r.reports)])
        report.results[name] = r.get_json()
        report.add_check(Check.at_most(f"{name}_slope", r.slope, config.checks.slope_tolerance))
        report.add_check(Check.within(f"{name}_max_ratio", r.max_ratio, low, high))
        report.add_check(Check.at_most(f"{name}_errors", r.errors, 0))


def check_semigroup(report: RunReport, config: RunConfig):
    """Discrete resolvent bound across mesh levels"""
    t = semigroup_probe(reference_1d(), REFERENCE_SECTOR)
    report.add_table("semigroup", ["n", "lambda_re", "lambda_im", "bound"],
                     [{"n": n, "lambda_re": lam.real, "lambda_im": lam.imag, "bound": v} for n, lam, v in t.table])
    report.results["semigroup"] = t.get_json()
    report.add_check(Check.within("semigroup_probe", t.level_ratio(), *LEVEL_BRACKET))


def check_uniform_t(report: RunReport, config: RunConfig):
    """Ratio spread over small parameters, and the boundary data terms by both norm methods"""
    p = reference_1d(kind=ProblemKind.PARAMETRIC)
    r = sweep_t(p, DEFAULT_T_VALUES, config.threads, config.norm_method)
    report.add_table("t_sweep", REPORT_COLUMNS, [rep.row(i) for i, rep in enumerate(r.reports)])
    report.results["t_sweep"] = r.get_json()
    report.add_check(Check.at_most("uniform_in_t", r.spread(), config.checks.t_spread))
    report.add_check(Check.at_most("t_sweep_errors", r.errors, 0))
    q = replace(p, t=1e-2, bc=BoundarySpec(data=np.array([1.0]), t_scaling=True))
    s = solve_1d(q)
    closed = coercivity_report(q, s, NormMethod.CLOSED)
    kfun = coercivity_report(q, s, NormMethod.KFUNCTIONAL)
    ratio = kfun.terms["f1_interp"] / closed.terms["f1_interp"]
    report.results["interp_equivalence"] = {"closed": closed.get_json(), "kfunctional": kfun.get_json(),
                                            "ratio": ratio}
    report.add_check(Check.within("interp_equivalence", ratio, 1.0 / EQUIVALENCE_BRACKET, EQUIVALENCE_BRACKET))


def moving_problem(b_law: str, n: int) -> Problem2D:
    """Plain form problem on (0, 1) x (0, b(s)) at s = 1"""
    e = Exponents(REFERENCE_ALPHA, REFERENCE_ALPHA, REFERENCE_P)
    return Problem2D.build(e, OperatorSpec.of_scalar(1.0), n=n, lam=1.0, rhs=parse("exp(X)*exp(Y)"),
                           moving=MovingSpec(parse("1"), parse(b_law), 1.0))


def check_moving(report: RunReport, config: RunConfig):
    """Pullback to the fixed domain against direct solves"""
    p = moving_problem("1", 65)
    identity = _relative(solve_moving(p).u.values, solve_2d_direct(replace(p, moving=None)).u.values)
    q = moving_problem("1+s", 129)
    s = solve_moving(q)
    stretched = _relative(s.u.values, solve_2d_direct(rescale(q).physical).u.values)
    report.results["moving"] = {"identity": identity, "stretched": stretched, "condition": s.condition}
    report.add_check(Check.at_most("moving_identity", identity, IDENTITY_TOLERANCE))
    report.add_check(Check.at_most("moving_stretched", stretched, MOVING_TOLERANCE))


def check_nonlinear(report: RunReport, config: RunConfig):
    """Contraction on the toy problem, constant rate on the affine toy, divergence for a large perturbation,
    probe on F = 2u"""
    spec = replace(nonlinear_toy(), seed=config.seed)
    _, trace = picard_solve(spec, tol=RESIDUAL_BOUND, max_iter=MAX_ITERATIONS)
    report.add_table("picard", TRACE_COLUMNS, [s.row() for s in trace.steps])
    report.results["nonlinear"] = trace.get_json()
    report.add_check(Check.at_most("picard_residual", trace.final_residual(), RESIDUAL_BOUND))
    report.add_check(Check.at_most("picard_iterations", trace.iterations, MAX_ITERATIONS))
    affine = affine_toy()
    _, linear = picard_solve(affine, tol=RESIDUAL_BOUND, max_iter=MAX_ITERATIONS)
    report.results["affine"] = linear.get_json()
    report.results["affine"]["exact_rate"] = affine_rate(affine)
    fit = linear.geometric_fit()
    spread = linear.ratio_spread()
    if fit is None or spread is None:
        report.add_check(Check("picard_geometric", Verdict.INCON, explanation="too few iterates"))
    else:
        report.add_check(Check.at_least("picard_geometric", fit[1], MIN_R2))
        report.add_check(Check.at_most("picard_ratio_spread", spread, RATIO_CONSTANCY))
    try:
        picard_solve(nonlinear_toy(DIVERGENT_EPSILON), tol=RESIDUAL_BOUND, max_iter=MAX_ITERATIONS)
        report.add_check(Check("picard_divergence", Verdict.FAIL, explanation="no divergence detected"))
    except DivergenceError as e:
        report.add_check(Check("picard_divergence", Verdict.PASS, explanation=str(e)))
    probe = lipschitz_probe(NonlinearSpec(spec.base, parse("2*u"), seed=config.seed))
    report.results["lipschitz"] = probe.get_json()
    report.add_check(Check.within("lipschitz_probe", probe.mu_hat, 2.0 - LIPSCHITZ_TOLERANCE,
                                  2.0 + LIPSCHITZ_TOLERANCE))
    report.results["ball"] = ball_check(trace, spec.radius, probe.mu_hat).get_json()


def check_system(report: RunReport, config: RunConfig):
    """Decay condition, truncation self-convergence, the decoupled oracle and the scaled coupling ratio"""
    study = truncation_study(system_fixture(), SYSTEM_SIZES, config.threads)
    report.add_table("truncation", STUDY_COLUMNS, [r.row() for r in study.rows])
    report.results["truncation"] = study.get_json()
    decay = study.decay
    report.add_check(Check("decay_finite", Verdict.of(decay.finite)))
    report.add_check(Check.at_most("decay_sup", max(decay.sup_a, decay.sup_b), DECAY_BOUND))
    report.add_check(Check.at_most("truncation_contraction", study.contraction(), TRUNCATION_CONTRACTION))
    oracle = truncation_study(system_fixture(coupled=False), SYSTEM_SIZES[:2], config.threads)
    worst = max(r.difference for r in oracle.rows)
    report.results["decoupled"] = oracle.get_json()
    report.add_check(Check.at_most("decoupled_oracle", worst, DECOUPLED_TOLERANCE))
    scaled = truncate_and_solve(system_fixture(scale=SYSTEM_SCALE, lam=SYSTEM_LAMBDA), SYSTEM_SIZES[0])
    report.results["scaled_system"] = scaled.get_json()
    low, high = config.checks.ratio_bracket
    report.add_check(Check.within("system_ratio", scaled.report.ratio, low, high))


def check_determinism(report: RunReport, config: RunConfig):
    """Same sweep serially and concurrently gives identical CSV text"""
    sector = SectorSpec.symmetric(math.pi / 3, DEFAULT_MODULI[::2], DEFAULT_FRACTIONS)
    texts = []
    for threads in (1, max(2, config.threads)):
        r = sweep_lambda(reference_1d(), sector, threads, config.norm_method)
        texts.append(Table(REPORT_COLUMNS, [rep.row(i) for i, rep in enumerate(r.reports)]).text())
    report.add_check(Check("determinism", Verdict.of(texts[0] == texts[1])))


# Acceptance checks by name, in run order
SUITE: Dict[str, Callable[[RunReport, RunConfig], None]] = {
    "manufactured": check_manufactured,
    "form_equivalence": check_form_equivalence,
    "two_path_2d": check_two_path,
    "sector": check_sector,
    "semigroup": check_semigroup,
    "uniform_t": check_uniform_t,
    "moving": check_moving,
    "nonlinear": check_nonlinear,
    "system": check_system,
    "determinism": check_determinism,
}


def run_suite(report: RunReport, config: RunConfig, names: Optional[List[str]] = None) -> RunReport:
    """Run the named checks, all by default, a failing check does not stop the others"""
    logger = logging.getLogger("runner")
    names = names or list(SUITE)
    unknown = [n for n in names if n not in SUITE]
    if unknown:
        raise ValidationError(f"unknown checks {', '.join(unknown)}, expected some of {', '.join(SUITE)}",
                              "suite")
    for name in names:
        logger.info("running %s", name)
        try:
            SUITE[name](report, config)
        except DegenSolveError as e:
            logger.error("check %s failed: %s", name, e)
            report.add_check(Check(name, Verdict.FAIL, explanation=str(e)))
    return report
