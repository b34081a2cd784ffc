"""Coercive estimate terms and parameter sweeps"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.integrate

from degensolve.basics import DegenSolveError, NormMethod, ProblemKind, PrincipalForm, SolverError, ValidationError
from degensolve.mesh import ComponentNorm, build_grid, weighted_lp_norm
from degensolve.opspace import InterpParams, OperatorSpec, SectorSpec, interp_norm, operator_norm, \
    resolvent_norm
from degensolve.solve1d import Problem1D, Solution1D, assemble_1d, solve_1d, drift_coefficient
from degensolve.solve2d import Problem2D, Solution2D, rescale, solve_2d_direct, solve_moving

Problem = Union[Problem1D, Problem2D]
Solution = Union[Solution1D, Solution2D]

# Moduli below this are reported but excluded from the trend
TREND_MIN_MODULUS = 1e3

# Largest accepted trend slope of ratio against log10 |lambda|
SLOPE_TOLERANCE = 0.02

# Bracket for coercivity ratios of the reference problems
RATIO_BRACKET = (0.25, 8.0)

# Largest accepted max/min ratio spread over a t sweep
T_SPREAD = 10.0

# Largest max/min ratio over the arguments of one modulus before growth is flagged
ARG_SPREAD = 1.5

# Accepted ratio of semigroup probe maxima between mesh levels
LEVEL_BRACKET = (0.5, 2.0)

# Mesh levels of the semigroup probe
PROBE_LEVELS = (65, 513)

# CSV columns of sweep reports
REPORT_COLUMNS = ["index", "lambda_re", "lambda_im", "t1", "t2", "numerator", "denominator", "ratio",
                  "ratio_alt", "lower_order_ratio", "error"]


@dataclass
class CoercivityReport:
    """Terms of the coercive estimate for one solve"""
    lam: complex
    t1: float
    t2: float
    terms: Dict[str, float] = field(default_factory=dict)
    numerator: float = 0.0
    denominator: float = 0.0
    ratio: float = 0.0
    ratio_alt: Optional[float] = None       # 2D ratio with t^(i/2) weights
    lower_order_ratio: Optional[float] = None
    metadata: Dict[str, Any] = field(default_factory=dict)
    error: Optional[str] = None

    def ok(self) -> bool:
        """Solved without error"""
        return self.error is None

    def row(self, index: int) -> Dict[str, Any]:
        """CSV row"""
        return {
            "index": index,
            "lambda_re": complex(self.lam).real,
            "lambda_im": complex(self.lam).imag,
            "t1": self.t1,
            "t2": self.t2,
            "numerator": self.numerator,
            "denominator": self.denominator,
            "ratio": self.ratio,
            "ratio_alt": "" if self.ratio_alt is None else self.ratio_alt,
            "lower_order_ratio": "" if self.lower_order_ratio is None else self.lower_order_ratio,
            "error": self.error or "",
        }

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        js = {"lambda": [complex(self.lam).real, complex(self.lam).imag], "t1": self.t1, "t2": self.t2,
              "terms": dict(self.terms), "numerator": self.numerator, "denominator": self.denominator,
              "ratio": self.ratio}
        if self.ratio_alt is not None:
            js["ratio_alt"] = self.ratio_alt
        if self.lower_order_ratio is not None:
            js["lower_order_ratio"] = self.lower_order_ratio
        if self.metadata:
            js["metadata"] = dict(self.metadata)
        if self.error:
            js["error"] = self.error
        return js


def _ratio(numerator: float, denominator: float) -> float:
    if denominator == 0:
        return 0.0 if numerator == 0 else math.inf
    return numerator / denominator


def _boundary_terms(operator: OperatorSpec, data: np.ndarray, weights: Optional[np.ndarray], alpha: float,
                    p: float, q: float, lam: complex, method: NormMethod) -> Dict[str, float]:
    """||f1||_E1 and |lambda|^(1 - theta) ||f1||_E, data rows are edge points"""
    if not np.any(data):
        return {}
    ip = InterpParams.boundary(alpha, p, q)
    inter = np.array([interp_norm(v, operator, ip, method) for v in data])
    plain = ComponentNorm(q).of(data)
    if weights is None:
        n1, n2 = float(inter[0]), float(plain[0])
    else:
        n1 = float(np.sum(weights * inter ** p) ** (1 / p))
        n2 = float(np.sum(weights * plain ** p) ** (1 / p))
    return {"f1_interp": n1, "f1_lambda": abs(lam) ** (1.0 - ip.theta) * n2}


def coercivity_report(problem: Problem, solution: Solution,
                      method: NormMethod = NormMethod.CLOSED) -> CoercivityReport:
    """Evaluate the coercive estimate of a solved problem"""
    if isinstance(problem, Problem1D) and isinstance(solution, Solution1D):
        return _report_1d(problem, solution, method)
    if isinstance(problem, Problem2D) and isinstance(solution, Solution2D):
        if problem.moving is not None:
            # solution lives on the moving domain nodes
            problem = rescale(problem).physical
        return _report_2d(problem, solution, method)
    raise ValidationError("problem and solution kinds do not match")


def _report_1d(p: Problem1D, s: Solution1D, method: NormMethod) -> CoercivityReport:
    g = s.u.grid
    en = ComponentNorm(p.q)
    lam = abs(complex(p.lam))
    t = p.t

    def norm(v) -> float:
        return weighted_lp_norm(v, g, p.p, en)

    if p.kind == ProblemKind.PLAIN:
        # x^2a u'' = u^[2] - alpha x^(alpha - 1) u^[1]
        drift = drift_coefficient(g.x_nodes, p.alpha)[:, None]
        second = norm(s.u2.values - drift * s.u1.values)
    else:
        second = norm(s.u2)
    terms = {
        "lambda_u": lam * norm(s.u),
        "u1": lam ** 0.5 * t ** 0.5 * norm(s.u1),
        "u2": t * second,
        "au": norm(s.au),
    }
    f = p.source()
    den = {"f": norm(f)}
    den.update(_boundary_terms(p.operator, p.boundary_data()[np.newaxis, :], None, p.alpha, p.p, p.q,
                               p.lam, method))
    num = sum(terms.values())
    d = sum(den.values())
    terms.update(den)
    r = CoercivityReport(p.lam, t, 1.0, terms, num, d, _ratio(num, d))
    r.metadata = {"kind": p.kind.value, "n": g.n, "depth": g.depth}
    if s.flags:
        r.metadata["flags"] = list(s.flags)
    return r


def _report_2d(p: Problem2D, s: Solution2D, method: NormMethod) -> CoercivityReport:
    g = s.u.grid
    e = p.exponents
    en = ComponentNorm(e.q)
    lam = abs(complex(p.lam))

    def norm(v) -> float:
        return weighted_lp_norm(v, g, e.p, en)

    plain = p.form == PrincipalForm.PLAIN
    nx = {"u1": norm(s.u1x), "u2": norm(s.ux2 if plain else s.u2x)}
    ny = {"u1": norm(s.u1y), "u2": norm(s.uy2 if plain else s.u2y)}
    base = lam * norm(s.u) + norm(s.au)
    printed = base
    halved = base
    terms = {"lambda_u": lam * norm(s.u), "au": norm(s.au)}
    for name, tk, nv in (("x", p.t1, nx), ("y", p.t2, ny)):
        terms[f"u1{name}"] = lam ** 0.5 * tk * nv["u1"]
        terms[f"u2{name}"] = tk ** 2 * nv["u2"]
        printed += terms[f"u1{name}"] + terms[f"u2{name}"]
        halved += lam ** 0.5 * tk ** 0.5 * nv["u1"] + tk * nv["u2"]
    den = {"f": norm(p.source())}
    edge_x, edge_y = p.edge_data()
    for edge, weights, exponent in ((edge_x, g.gy.weights, e.alpha), (edge_y, g.gx.weights, e.beta)):
        for k, v in _boundary_terms(p.operator, edge, weights, exponent, e.p, e.q, p.lam, method).items():
            den[k] = den.get(k, 0.0) + v
    d = sum(den.values())
    terms.update(den)
    r = CoercivityReport(p.lam, p.t1, p.t2, terms, printed, d, _ratio(printed, d), ratio_alt=_ratio(halved, d))
    if p.has_lower_order():
        terms["lower_order"] = s.lower_order_norm
        r.lower_order_ratio = _ratio(s.lower_order_norm, printed)
    r.metadata = {"form": p.form.value, "n": list(g.shape), "depth": g.gx.depth}
    if s.coefficient_bound is not None:
        r.metadata["coefficient_bound"] = s.coefficient_bound
    if s.condition is not None:
        r.metadata["condition"] = s.condition
    if s.flags:
        r.metadata["flags"] = list(s.flags)
    return r


def solve(problem: Problem) -> Solution:
    """Solve with the matching solver"""
    if isinstance(problem, Problem1D):
        return solve_1d(problem)
    if problem.moving is not None:
        return solve_moving(problem)
    return solve_2d_direct(problem)


@dataclass
class SweepResult:
    """Reports over a parameter grid"""
    reports: List[CoercivityReport]
    max_ratio: float = 0.0
    min_ratio: float = 0.0
    argmax: Optional[int] = None
    slope: float = 0.0
    arg_spread: float = 1.0
    growth: bool = False
    errors: int = 0

    def get_json(self) -> Dict[str, Any]:
        """Summary as JSON"""
        js: Dict[str, Any] = {"points": len(self.reports), "max_ratio": self.max_ratio,
                              "min_ratio": self.min_ratio, "slope": self.slope, "arg_spread": self.arg_spread,
                              "growth": self.growth, "errors": self.errors}
        if self.argmax is not None:
            a = self.reports[self.argmax]
            js["argmax"] = {"index": self.argmax, "lambda": [complex(a.lam).real, complex(a.lam).imag],
                            "t1": a.t1, "t2": a.t2}
        return js

    def spread(self) -> float:
        """max_ratio / min_ratio"""
        return _ratio(self.max_ratio, self.min_ratio)


def _run_point(problem: Problem, method: NormMethod) -> CoercivityReport:
    """Solve and report one point, errors recorded"""
    logger = logging.getLogger("verify")
    t1, t2 = (problem.t, 1.0) if isinstance(problem, Problem1D) else (problem.t1, problem.t2)
    try:
        resolvent_norm(problem.operator, problem.lam)
        return coercivity_report(problem, solve(problem), method)
    except DegenSolveError as e:
        logger.warning("point lambda=%s t=(%s, %s) failed: %s", problem.lam, t1, t2, e)
        return CoercivityReport(problem.lam, t1, t2, error=str(e))


def _run(problems: Sequence[Problem], threads: int, method: NormMethod) -> List[CoercivityReport]:
    """Run points concurrently, results in grid order"""
    if threads <= 1 or len(problems) <= 1:
        return [_run_point(p, method) for p in problems]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda p: _run_point(p, method), problems))


def _arg_spread(good: List[Tuple[int, CoercivityReport]]) -> float:
    """Largest max/min ratio over the arguments sampled at one modulus and t"""
    groups: Dict[Tuple[str, float, float], Dict[float, float]] = {}
    for _, rep in good:
        lam = complex(rep.lam)
        key = (f"{abs(lam):.10g}", rep.t1, rep.t2)
        groups.setdefault(key, {})[round(abs(math.atan2(lam.imag, lam.real)), 12)] = rep.ratio
    spread = 1.0
    for by_arg in groups.values():
        ratios = list(by_arg.values())
        if len(ratios) < 2 or min(ratios) <= 0:
            continue
        spread = max(spread, max(ratios) / min(ratios))
    return spread


def summarize(reports: List[CoercivityReport], ratio_bound: float = RATIO_BRACKET[1],
              slope_tolerance: float = SLOPE_TOLERANCE, arg_spread: float = ARG_SPREAD) -> SweepResult:
    """Summary statistics, trend over |lambda| >= TREND_MIN_MODULUS and ratio spread over arguments"""
    logger = logging.getLogger("verify")
    r = SweepResult(reports)
    good = [(i, rep) for i, rep in enumerate(reports) if rep.ok()]
    r.errors = len(reports) - len(good)
    if not good:
        return r
    ratios = np.array([rep.ratio for _, rep in good])
    k = int(np.argmax(ratios))
    r.argmax = good[k][0]
    r.max_ratio = float(ratios[k])
    r.min_ratio = float(np.min(ratios))
    trend = [(math.log10(abs(complex(rep.lam))), rep.ratio) for _, rep in good
             if abs(complex(rep.lam)) >= TREND_MIN_MODULUS]
    if len({x for x, _ in trend}) >= 2:
        xs, ys = np.array(trend).T
        r.slope = float(np.polyfit(xs, ys, 1)[0])
    r.arg_spread = _arg_spread(good)
    if r.arg_spread > arg_spread:
        logger.warning("ratio grows with arg lambda: spread %.3g at a fixed modulus", r.arg_spread)
    r.growth = bool(r.slope > slope_tolerance or not r.max_ratio <= ratio_bound or r.arg_spread > arg_spread)
    return r


def sweep_lambda(problem: Problem, sector: Union[SectorSpec, Sequence[complex]], threads: int = 1,
                 method: NormMethod = NormMethod.CLOSED, ratio_bound: float = RATIO_BRACKET[1]) -> SweepResult:
    """Solve and report over the sector sample, or over explicit points"""
    logger = logging.getLogger("verify")
    points = sector.samples() if isinstance(sector, SectorSpec) else list(sector)
    if not points:
        raise ValidationError("empty lambda sample", "sector")
    reports = _run([replace(problem, lam=lam) for lam in points], threads, method)
    r = summarize(reports, ratio_bound)
    logger.info("lambda sweep of %d points: max ratio %.6g slope %.3g errors %d", len(points), r.max_ratio,
                r.slope, r.errors)
    return r


def sweep_t(problem: Problem, t_grid: Sequence[Union[float, Tuple[float, float]]], threads: int = 1,
            method: NormMethod = NormMethod.CLOSED) -> SweepResult:
    """Solve and report over small parameter values"""
    logger = logging.getLogger("verify")
    if not t_grid:
        raise ValidationError("empty t sample", "t")
    problems = []
    for t in t_grid:
        if isinstance(problem, Problem1D):
            problems.append(replace(problem, t=float(t)))
        else:
            t1, t2 = t if isinstance(t, (tuple, list)) else (t, t)
            problems.append(replace(problem, t1=float(t1), t2=float(t2)))
    r = summarize(_run(problems, threads, method))
    logger.info("t sweep of %d points: ratio spread %.3g", len(problems), r.spread())
    return r


@dataclass
class ProbeTable:
    """Discrete resolvent bounds per mesh level"""
    levels: List[int]
    table: List[Tuple[int, complex, float]]
    maxima: List[float]

    def level_ratio(self) -> float:
        """Maximum on the finest level over the coarsest"""
        return self.maxima[-1] / self.maxima[0]

    def get_json(self) -> Dict[str, Any]:
        """Get as JSON"""
        return {"levels": self.levels, "maxima": self.maxima, "level_ratio": self.level_ratio()}


def discrete_operator(problem: Problem1D, n: int):
    """Assembled operator B_h at lambda = 0 on n nodes, same depth"""
    g = problem.grid
    grid = build_grid(g.transform, n, g.depth)
    return assemble_1d(replace(problem, grid=grid, lam=0.0, rhs=None)).matrix


def semigroup_probe(problem: Problem1D, sector: SectorSpec, levels: Sequence[int] = PROBE_LEVELS) -> ProbeTable:
    """Tabulate (1 + |lambda|) ||(B_h + lambda)^-1||_2 for mesh levels"""
    logger = logging.getLogger("verify")
    samples = sector.samples()
    if not samples:
        raise ValidationError("empty sector sample", "sector")
    table = []
    maxima = []
    for n in levels:
        b = discrete_operator(problem, n).toarray()
        ident = np.eye(b.shape[0])
        best = 0.0
        for lam in samples:
            v = (1.0 + abs(lam)) * resolvent_of(b, ident, lam)
            table.append((n, lam, v))
            best = max(best, v)
        maxima.append(best)
        logger.info("semigroup probe n=%d: max %.6g", n, best)
    return ProbeTable(list(levels), table, maxima)


def resolvent_of(b: np.ndarray, ident: np.ndarray, lam: complex) -> float:
    """||(B + lambda)^-1||_2"""
    m = b + lam * ident
    if np.linalg.cond(m) > 1e14:
        raise SolverError(f"singular resolvent sample at lambda={lam}")
    return operator_norm(np.linalg.inv(m), 2)


@dataclass
class HalfLineReference:
    """Exact solution u = e^y - e^(ky) of -u'' + (c + lambda)u = (k^2 - 1)e^y, u(0) = 0"""
    c: float
    lam: float
    alpha: float
    a: float = 1.0
    p: float = 4.0

    @property
    def k(self) -> float:
        """Decay rate sqrt(c + lambda)"""
        return math.sqrt(self.c + self.lam)

    def rhs_source(self) -> str:
        """Right-hand side law in the transformed coordinate"""
        return f"{self.k ** 2 - 1.0!r}*exp(X)"

    def ratio(self, depth: float) -> float:
        """Ratio of the coercive estimate from exact integrals"""
        k = self.k
        g1 = 1.0 - self.alpha

        def x(y):
            return (self.a ** g1 + g1 * y) ** (1.0 / g1)

        def norm(fun: Callable[[float], float]) -> float:
            parts = [(-depth, -1.0), (-1.0, 0.0)] if depth > 1 else [(-depth, 0.0)]
            s = 0.0
            for lo, hi in parts:
                s += scipy.integrate.quad(lambda y: abs(fun(y)) ** self.p * x(y) ** self.alpha, lo, hi,
                                          limit=200, epsabs=0, epsrel=1e-12)[0]
            return s ** (1.0 / self.p)

        u = norm(lambda y: math.exp(y) - math.exp(k * y))
        u1 = norm(lambda y: math.exp(y) - k * math.exp(k * y))
        u2 = norm(lambda y: math.exp(y) - k * k * math.exp(k * y))
        f = norm(lambda y: (k * k - 1.0) * math.exp(y))
        lam = abs(self.lam)
        return (lam * u + lam ** 0.5 * u1 + u2 + self.c * u) / f
