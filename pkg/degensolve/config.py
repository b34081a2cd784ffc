"""Run configuration documents"""

from dataclasses import dataclass, field
import json
import math
import pathlib
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type, Union

import numpy as np

from degensolve.basics import Closure, NormMethod, PrincipalForm, ProblemKind, ValidationError
from degensolve.funcdsl import Expression, parse
from degensolve.mesh import Exponents
from degensolve.opspace import OperatorSpec, SectorSpec
from degensolve.solve1d import BoundarySpec, Problem1D
from degensolve.solve2d import COEFFICIENT_BOUND, CoefficientLaw, MovingSpec, Problem2D
from degensolve.verify import RATIO_BRACKET, SLOPE_TOLERANCE, T_SPREAD

# Subcommands and the problem dimension they default to, zero for no problem
COMMANDS = {
    "solve1d": 1,
    "solve2d": 2,
    "sweep-lambda": 1,
    "sweep-t": 1,
    "moving": 2,
    "nonlinear": 2,
    "system": 2,
    "verify-all": 0,
}

# Default node count per direction
DEFAULT_NODES = {1: 257, 2: 65}

# Default spectral parameter
DEFAULT_LAMBDA = 1e3

# Default sector sample
DEFAULT_PHI = math.pi / 3
DEFAULT_MODULI = [10.0 ** k for k in range(7)]
DEFAULT_FRACTIONS = [0.0, 0.5, 1.0]

# Default small parameter sample
DEFAULT_T_VALUES = [1.0, 1e-1, 1e-2, 1e-3, 1e-4]


class Section:
    """JSON object being read, resolved values are echoed and unknown keys rejected"""
    def __init__(self, data: Any, path: str, echo: Dict[str, Any]):
        if not isinstance(data, dict):
            raise ValidationError(f"expected an object, got {type(data).__name__}", path)
        self.data = data
        self.path = path
        self.echo = echo
        self.used: List[str] = []

    def key_path(self, key: str) -> str:
        """Full key path"""
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        """Key present with a value"""
        return self.data.get(key) is not None

    def raw(self, key: str, default: Any = None, required: bool = False) -> Any:
        """Raw value"""
        self.used.append(key)
        if self.data.get(key) is None:
            if required:
                raise ValidationError("missing required key", self.key_path(key))
            return default
        return self.data[key]

    def number(self, key: str, default: Optional[float] = None, required: bool = False,
               positive: bool = False, low: Optional[float] = None) -> Optional[float]:
        """Real number"""
        v = self.raw(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"expected a number, got {v!r}", self.key_path(key))
        v = float(v)
        if not math.isfinite(v) or (positive and not v > 0) or (low is not None and v < low):
            raise ValidationError(f"value {v} out of range", self.key_path(key))
        self.echo[key] = v
        return v

    def integer(self, key: str, default: Optional[int] = None, required: bool = False,
                low: Optional[int] = None) -> Optional[int]:
        """Integer"""
        v = self.raw(key, default, required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, int):
            raise ValidationError(f"expected an integer, got {v!r}", self.key_path(key))
        if low is not None and v < low:
            raise ValidationError(f"value {v} below {low}", self.key_path(key))
        self.echo[key] = v
        return v

    def string(self, key: str, default: Optional[str] = None, choices: Sequence[str] = ()) -> Optional[str]:
        """String, optionally from a fixed set"""
        v = self.raw(key, default)
        if v is None:
            return None
        if not isinstance(v, str) or (choices and v not in choices):
            raise ValidationError(f"unexpected value {v!r}" + (f", expected one of {', '.join(choices)}"
                                                               if choices else ""), self.key_path(key))
        self.echo[key] = v
        return v

    def flag(self, key: str, default: bool = False) -> bool:
        """Boolean"""
        v = self.raw(key, default)
        if not isinstance(v, bool):
            raise ValidationError(f"expected true or false, got {v!r}", self.key_path(key))
        self.echo[key] = v
        return v

    def choice(self, key: str, enum_type: Type, default: Any) -> Any:
        """Enumeration member by value"""
        v = self.raw(key, default.value)
        try:
            r = enum_type(v)
        except ValueError:
            values = ", ".join(e.value for e in enum_type)
            raise ValidationError(f"unknown value {v!r}, expected one of {values}", self.key_path(key)) from None
        self.echo[key] = r.value
        return r

    def expression(self, key: str, default: Optional[str] = None, required: bool = False) -> Optional[Expression]:
        """Expression source, numbers accepted as constants"""
        v = self.raw(key, default, required)
        if v is None:
            return None
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = repr(float(v))
        if not isinstance(v, str):
            raise ValidationError(f"expected an expression, got {v!r}", self.key_path(key))
        try:
            e = parse(v)
        except ValidationError as ex:
            raise ValidationError(str(ex), self.key_path(key)) from ex
        self.echo[key] = v
        return e

    def complex_number(self, key: str, default: complex) -> complex:
        """Number or [re, im] pair"""
        v = self.raw(key, None)
        r = complex(default) if v is None else complex_of(v, self.key_path(key))
        self.echo[key] = [r.real, r.imag] if r.imag else r.real
        return r

    def numbers(self, key: str, default: Optional[Sequence[float]] = None, required: bool = False) \
            -> Optional[List[float]]:
        """List of numbers"""
        v = self.raw(key, default, required)
        if v is None:
            return None
        if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v):
            raise ValidationError("expected a list of numbers", self.key_path(key))
        r = [float(x) for x in v]
        self.echo[key] = r
        return r

    def integers(self, key: str, default: Optional[Sequence[int]] = None) -> Optional[List[int]]:
        """List of integers"""
        v = self.raw(key, default)
        if v is None:
            return None
        if not isinstance(v, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in v):
            raise ValidationError("expected a list of integers", self.key_path(key))
        self.echo[key] = list(v)
        return list(v)

    def section(self, key: str, required: bool = False, optional: bool = False) -> Optional['Section']:
        """Nested object, missing sections read as empty unless optional"""
        v = self.raw(key, None, required)
        if v is None:
            if optional:
                return None
            v = {}
        echo: Dict[str, Any] = {}
        self.echo[key] = echo
        return Section(v, self.key_path(key), echo)

    def done(self) -> 'Section':
        """Reject unknown keys"""
        for k in self.data:
            if k not in self.used:
                raise ValidationError(f"unknown key '{k}'", self.key_path(k))
        return self


def complex_of(v: Any, path: str) -> complex:
    """Complex number from a number or [re, im]"""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(float(v), 0.0)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(x, (int, float)) and not isinstance(x, bool)
                                                   for x in v):
        return complex(float(v[0]), float(v[1]))
    raise ValidationError(f"expected a number or [re, im], got {v!r}", path)


@dataclass
class Checks:
    """Acceptance thresholds of the sweeps"""
    ratio_bracket: Tuple[float, float] = RATIO_BRACKET
    slope_tolerance: float = SLOPE_TOLERANCE
    t_spread: float = T_SPREAD


@dataclass
class NonlinearSettings:
    """Nonlinear section"""
    f_law: Expression
    g_law: Optional[Expression] = None
    mu_r: float = 1.0
    radius: float = 1.0
    tol: float = 1e-10
    max_iter: int = 30
    shrink: int = 0
    samples: int = 64


@dataclass
class SystemSettings:
    """Infinite system section"""
    d_law: Expression
    a_law: Optional[Expression] = None
    b_law: Optional[Expression] = None
    mu: float = 0.25
    n: int = 8
    n_list: List[int] = field(default_factory=list)
    support: Optional[int] = None


@dataclass
class RunConfig:
    """Validated run configuration with defaults resolved"""
    command: str
    seed: int = 0
    threads: int = 1
    out: Optional[str] = None
    problem: Union[Problem1D, Problem2D, None] = None
    solver: str = "direct"
    sector: Union[SectorSpec, List[complex], None] = None
    t_values: List[Union[float, Tuple[float, float]]] = field(default_factory=list)
    nonlinear: Optional[NonlinearSettings] = None
    system: Optional[SystemSettings] = None
    norm_method: NormMethod = NormMethod.CLOSED
    checks: Checks = field(default_factory=Checks)
    suite: List[str] = field(default_factory=list)
    echo: Dict[str, Any] = field(default_factory=dict)

    def get_json(self) -> Dict[str, Any]:
        """Resolved configuration, loading it back reproduces the run"""
        return self.echo


def _operator(s: Section) -> OperatorSpec:
    keys = [k for k in ("scalar", "diagonal", "dense") if s.has(k)]
    if len(keys) != 1:
        raise ValidationError("operator needs exactly one of scalar, diagonal, dense", s.path)
    k = keys[0]
    try:
        if k == "scalar":
            r = OperatorSpec.of_scalar(s.number("scalar"))
        elif k == "diagonal":
            r = OperatorSpec.of_diagonal(s.numbers("diagonal"))
        else:
            v = s.raw("dense")
            r = OperatorSpec.of_dense(v)
            s.echo["dense"] = r.matrix.tolist()
    except ValidationError as e:
        raise ValidationError(str(e), s.key_path(k)) from e
    except (TypeError, ValueError) as e:
        raise ValidationError(f"malformed operator: {e}", s.key_path(k)) from e
    s.done()
    return r


def _boundary(s: Section) -> BoundarySpec:
    m = s.integer("m", 0)
    delta = s.raw("delta", [1.0] if m == 0 else [0.0, 1.0])
    if not isinstance(delta, list):
        raise ValidationError("expected a list of coefficients", s.key_path("delta"))
    coefficients = tuple(complex_of(d, s.key_path("delta")) for d in delta)
    s.echo["delta"] = [[c.real, c.imag] if c.imag else c.real for c in coefficients]
    if isinstance(s.data.get("data"), list):
        data: Union[np.ndarray, Expression, None] = np.array(s.numbers("data"))
    else:
        data = s.expression("data")
    t_scaling = s.flag("t_scaling", False)
    s.done()
    try:
        return BoundarySpec(m, coefficients, data, t_scaling)
    except ValidationError as e:
        raise ValidationError(str(e), s.key_path(e.key_path or "m")) from e


def _coefficient(s: Optional[Section]) -> Optional[CoefficientLaw]:
    if s is None:
        return None
    if s.has("entries"):
        r = CoefficientLaw(entries=s.expression("entries"))
    else:
        v = s.raw("matrix", required=True)
        try:
            matrix = np.array(v, dtype=float)
        except (TypeError, ValueError) as e:
            raise ValidationError(f"malformed coefficient matrix: {e}", s.key_path("matrix")) from e
        s.echo["matrix"] = matrix.tolist()
        r = CoefficientLaw(matrix=matrix, scale=s.expression("scale"))
    s.done()
    return r


@dataclass
class MeshSettings:
    """Mesh section"""
    n: int
    ny: int
    depth: Optional[float]


def _mesh(s: Section, dimension: int) -> MeshSettings:
    n = s.integer("n", DEFAULT_NODES[dimension], low=2)
    ny = s.integer("ny", n, low=2) if dimension == 2 else n
    depth = s.number("depth", None, positive=True)
    s.done()
    return MeshSettings(n, ny, depth)


def _problem(s: Section, dimension: int, mesh: MeshSettings, command: str) -> Union[Problem1D, Problem2D]:
    ex = s.section("exponents", required=True)
    alpha = ex.number("alpha", required=True)
    beta = ex.number("beta", alpha) if dimension == 2 else alpha
    p = ex.number("p", 4.0)
    q = ex.number("q", 2.0)
    ex.done()
    exponents = Exponents(alpha, beta, p, q)
    if dimension == 2:
        exponents.check_window(ex.path)
    else:
        # one-dimensional estimates only need the lower end of the window
        exponents.check_indices(ex.path)
        if not alpha > 1.0 + 1.0 / p:
            raise ValidationError(f"exponent outside coercivity window: alpha={alpha} not above "
                                  f"{1.0 + 1.0 / p:.6g}", ex.key_path("alpha"))
    dom = s.section("domain")
    a = dom.number("a", 1.0, positive=True)
    b = dom.number("b", 1.0, positive=True) if dimension == 2 else 1.0
    dom.done()
    if command == "system" and not s.has("operator"):
        # replaced by diag(d_m) of the system section
        operator = OperatorSpec.of_scalar(1.0)
    else:
        operator = _operator(s.section("operator", required=True))
    lam = s.complex_number("lambda", DEFAULT_LAMBDA)
    rhs = s.expression("rhs", "0")
    if dimension == 1:
        kind = s.choice("kind", ProblemKind, ProblemKind.REGULARIZED)
        t = s.number("t", 1.0, positive=True)
        bc = _boundary(s.section("bc"))
        closure = s.choice("closure", Closure, Closure.DIRICHLET)
        s.done()
        return Problem1D.build(kind, alpha, operator, n=mesh.n, a=a, lam=lam, depth=mesh.depth, t=t, p=p, q=q,
                               bc=bc, rhs=rhs, closure=closure)
    form = s.choice("form", PrincipalForm, PrincipalForm.PLAIN)
    t1 = s.number("t1", 1.0, positive=True)
    t2 = s.number("t2", 1.0, positive=True)
    bc_x = _boundary(s.section("bc_x"))
    bc_y = _boundary(s.section("bc_y"))
    closure_x = s.choice("closure_x", Closure, Closure.DIRICHLET)
    closure_y = s.choice("closure_y", Closure, Closure.DIRICHLET)
    a1 = _coefficient(s.section("a1", optional=True))
    a2 = _coefficient(s.section("a2", optional=True))
    mu = s.number("mu", 0.25)
    bound = s.number("coefficient_bound", COEFFICIENT_BOUND, positive=True)
    mv = s.section("moving", required=command == "moving", optional=True)
    moving = None
    if mv is not None:
        moving = MovingSpec(mv.expression("a", required=True), mv.expression("b", required=True),
                            mv.number("s", 0.0))
        # shift d folded into lambda
        lam = lam + mv.number("d", 0.0, low=0.0)
        mv.done()
    s.done()
    return Problem2D.build(exponents, operator, n=mesh.n, ny=mesh.ny, a=a, b=b, lam=lam, depth=mesh.depth, t1=t1,
                           t2=t2, bc_x=bc_x, bc_y=bc_y, rhs=rhs, form=form, closure_x=closure_x,
                           closure_y=closure_y, a1_law=a1, a2_law=a2, mu=mu, coefficient_bound=bound,
                           moving=moving)


def _sector(s: Section) -> Union[SectorSpec, List[complex]]:
    if s.has("points"):
        v = s.raw("points")
        if not isinstance(v, list) or not v:
            raise ValidationError("expected a nonempty list of points", s.key_path("points"))
        points = [complex_of(x, f"{s.key_path('points')}[{i}]") for i, x in enumerate(v)]
        s.echo["points"] = [[p.real, p.imag] for p in points]
        s.done()
        return points
    phi = s.number("phi", DEFAULT_PHI, low=0.0)
    moduli = s.numbers("moduli", DEFAULT_MODULI)
    try:
        if s.has("args"):
            r = SectorSpec(phi, tuple(moduli), tuple(s.numbers("args")))
        else:
            r = SectorSpec.symmetric(phi, moduli, s.numbers("fractions", DEFAULT_FRACTIONS))
    except ValidationError as e:
        raise ValidationError(str(e), s.path) from e
    s.done()
    return r


def _t_values(s: Section, dimension: int) -> List[Union[float, Tuple[float, float]]]:
    v = s.raw("t_values", DEFAULT_T_VALUES)
    path = s.key_path("t_values")
    if not isinstance(v, list) or not v:
        raise ValidationError("expected a nonempty list", path)
    r: List[Union[float, Tuple[float, float]]] = []
    for i, t in enumerate(v):
        if isinstance(t, list) and dimension == 2:
            c = complex_of(t, f"{path}[{i}]")
            r.append((c.real, c.imag))
        elif isinstance(t, (int, float)) and not isinstance(t, bool):
            r.append(float(t))
        else:
            raise ValidationError(f"unexpected value {t!r}", f"{path}[{i}]")
    for i, t in enumerate(r):
        if not all(0.0 < x <= 1.0 for x in (t if isinstance(t, tuple) else (t,))):
            raise ValidationError("parameter outside (0, 1]", f"{path}[{i}]")
    s.echo["t_values"] = [list(t) if isinstance(t, tuple) else t for t in r]
    return r


def _nonlinear(s: Section) -> NonlinearSettings:
    r = NonlinearSettings(
        s.expression("f", required=True), s.expression("g"), s.number("mu_r", 1.0, positive=True),
        s.number("radius", 1.0, positive=True), s.number("tol", 1e-10, positive=True),
        s.integer("max_iter", 30, low=0), s.integer("shrink", 0, low=0), s.integer("samples", 64, low=2))
    s.done()
    return r


def _system(s: Section) -> SystemSettings:
    d = s.expression("d", required=True)
    a = s.expression("a")
    b = s.expression("b")
    mu = s.number("mu", 0.25)
    n = s.integer("n", 8, low=1)
    n_list = s.integers("n_list", [n])
    support = s.integer("support", None, low=1)
    s.done()
    if not n_list or any(k < 1 for k in n_list) or any(y <= x for x, y in zip(n_list, n_list[1:])):
        raise ValidationError("truncation sizes must be positive and increasing", s.key_path("n_list"))
    return SystemSettings(d, a, b, mu, n, n_list, support)


def _checks(s: Section) -> Checks:
    bracket = s.numbers("ratio_bracket", list(RATIO_BRACKET))
    if len(bracket) != 2 or not 0 <= bracket[0] <= bracket[1]:
        raise ValidationError("expected [low, high]", s.key_path("ratio_bracket"))
    r = Checks((bracket[0], bracket[1]), s.number("slope_tolerance", SLOPE_TOLERANCE, low=0.0),
               s.number("t_spread", T_SPREAD, positive=True))
    s.done()
    return r


def parse_config(data: Any, command: str, threads: int = 1, out: Optional[str] = None) -> RunConfig:
    """Validate a configuration document for a subcommand"""
    if command not in COMMANDS:
        raise ValidationError(f"unknown subcommand '{command}'")
    echo: Dict[str, Any] = {}
    s = Section(data if data is not None else {}, "", echo)
    c = RunConfig(command, echo=echo)
    c.seed = s.integer("seed", 0, low=0)
    c.threads = s.integer("threads", threads, low=1)
    c.out = s.string("out", out)
    c.norm_method = s.choice("norm_method", NormMethod, NormMethod.CLOSED)
    c.checks = _checks(s.section("checks"))
    dimension = COMMANDS[command]
    if command == "verify-all":
        c.suite = [str(x) for x in (s.raw("suite", []) or [])]
        echo["suite"] = c.suite
        s.done()
        return c
    ps = s.section("problem", required=True)
    if command in ("sweep-lambda", "sweep-t"):
        dimension = ps.integer("dimension", dimension)
        if dimension not in (1, 2):
            raise ValidationError(f"dimension {dimension} not 1 or 2", ps.key_path("dimension"))
    elif ps.has("dimension"):
        if ps.integer("dimension") != dimension:
            raise ValidationError(f"{command} needs dimension {dimension}", ps.key_path("dimension"))
    mesh = _mesh(s.section("mesh"), dimension)
    c.problem = _problem(ps, dimension, mesh, command)
    s.echo["mesh"]["depth"] = c.problem.grid.depth if dimension == 1 else c.problem.grid.gx.depth
    if command == "solve2d":
        c.solver = s.string("solver", "direct", ("direct", "reduced"))
    if command == "sweep-lambda":
        c.sector = _sector(s.section("sweep"))
    if command == "sweep-t":
        c.t_values = _t_values(s, dimension)
    if command == "nonlinear":
        c.nonlinear = _nonlinear(s.section("nonlinear", required=True))
    if command == "system":
        c.system = _system(s.section("system", required=True))
    s.done()
    return c


def load_config(path: Optional[pathlib.Path], command: str, threads: int = 1,
                out: Optional[str] = None) -> RunConfig:
    """Load and validate a JSON configuration file"""
    if path is None:
        if command != "verify-all":
            raise ValidationError(f"{command} needs --config")
        return parse_config(None, command, threads, out)
    if not path.exists():
        raise ValidationError(f"configuration file {path} not found")
    with path.open(encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ValidationError(f"malformed JSON in {path}: {e}") from e
    return parse_config(data, command, threads, out)
