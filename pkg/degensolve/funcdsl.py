"""Arithmetic expression language for coefficient and forcing laws"""

from dataclasses import dataclass
import re
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Set, Tuple, Union

import numpy as np

from degensolve.basics import ExpressionEvaluationError, ExpressionSyntaxError

Value = Union[float, np.ndarray]

# Function name: (minimum arity, maximum arity or None)
FUNCTIONS: Dict[str, Tuple[int, Optional[int]]] = {
    "exp": (1, 1),
    "sin": (1, 1),
    "cos": (1, 1),
    "abs": (1, 1),
    "sqrt": (1, 1),
    "log": (1, 1),
    "min": (2, None),
    "max": (2, None),
    "pow": (2, 2),
}


class Node:
    """Expression tree node"""
    def variables(self) -> Set[str]:
        """Free variables"""
        raise NotImplementedError()

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        """Evaluate with variable bindings"""
        raise NotImplementedError()

    def unparse(self) -> str:
        """Source text which parses back to this tree"""
        raise NotImplementedError()


@dataclass(frozen=True)
class Number(Node):
    """Literal"""
    value: float

    def variables(self) -> Set[str]:
        return set()

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        return self.value

    def unparse(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Variable(Node):
    """Variable reference"""
    name: str

    def variables(self) -> Set[str]:
        return {self.name}

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        if self.name not in bindings:
            raise ExpressionEvaluationError(f"unbound variable '{self.name}'")
        v = bindings[self.name]
        return v if np.isscalar(v) else np.asarray(v, dtype=float)

    def unparse(self) -> str:
        return self.name


@dataclass(frozen=True)
class Negate(Node):
    """Unary minus"""
    operand: Node

    def variables(self) -> Set[str]:
        return self.operand.variables()

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        return -self.operand.evaluate(bindings)

    def unparse(self) -> str:
        return f"(-{self.operand.unparse()})"


@dataclass(frozen=True)
class Binary(Node):
    """Binary operator +, -, *, / or ^"""
    op: str
    left: Node
    right: Node

    def variables(self) -> Set[str]:
        return self.left.variables() | self.right.variables()

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        lhs = self.left.evaluate(bindings)
        rhs = self.right.evaluate(bindings)
        with np.errstate(all="ignore"):
            if self.op == "+":
                r = np.add(lhs, rhs)
            elif self.op == "-":
                r = np.subtract(lhs, rhs)
            elif self.op == "*":
                r = np.multiply(lhs, rhs)
            elif self.op == "/":
                if np.any(np.equal(rhs, 0.0)):
                    raise ExpressionEvaluationError(f"division by zero in {self.unparse()}")
                r = np.divide(lhs, rhs)
            else:
                r = _power(lhs, rhs, self)
        return _finite(r, self)

    def unparse(self) -> str:
        return f"({self.left.unparse()} {self.op} {self.right.unparse()})"


@dataclass(frozen=True)
class Call(Node):
    """Built-in function call"""
    name: str
    args: Tuple[Node, ...]

    def variables(self) -> Set[str]:
        r = set()
        for a in self.args:
            r |= a.variables()
        return r

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        vs = [a.evaluate(bindings) for a in self.args]
        with np.errstate(all="ignore"):
            if self.name == "pow":
                r = _power(vs[0], vs[1], self)
            elif self.name == "min":
                r = vs[0]
                for v in vs[1:]:
                    r = np.minimum(r, v)
            elif self.name == "max":
                r = vs[0]
                for v in vs[1:]:
                    r = np.maximum(r, v)
            elif self.name == "sqrt":
                if np.any(np.less(vs[0], 0.0)):
                    raise ExpressionEvaluationError(f"sqrt of negative value in {self.unparse()}")
                r = np.sqrt(vs[0])
            elif self.name == "log":
                if np.any(np.less_equal(vs[0], 0.0)):
                    raise ExpressionEvaluationError(f"log of non-positive value in {self.unparse()}")
                r = np.log(vs[0])
            else:
                r = _UNARY[self.name](vs[0])
        return _finite(r, self)

    def unparse(self) -> str:
        return f"{self.name}({', '.join(a.unparse() for a in self.args)})"


_UNARY: Dict[str, Callable[[Value], Value]] = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
}


def _power(base: Value, exponent: Value, node: Node) -> Value:
    """Real power, negative base only with integer exponent"""
    negative = np.less(base, 0.0)
    fractional = np.not_equal(exponent, np.round(exponent))
    if np.any(negative & fractional):
        raise ExpressionEvaluationError(f"negative base with non-integer exponent in {node.unparse()}")
    if np.any(np.equal(base, 0.0) & np.less(exponent, 0.0)):
        raise ExpressionEvaluationError(f"zero to negative power in {node.unparse()}")
    return np.power(np.asarray(base, dtype=float), exponent)


def _finite(value: Value, node: Node) -> Value:
    """Check intermediate is finite"""
    if not np.all(np.isfinite(value)):
        raise ExpressionEvaluationError(f"non-finite value in {node.unparse()}")
    return value


@dataclass(frozen=True)
class Token:
    """Lexical token"""
    kind: str       # number, name, op, end
    text: str
    position: int


_TOKEN_RE = re.compile(r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
                       r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))")


def tokenize(source: str) -> Iterator[Token]:
    """Split source into tokens"""
    pos = 0
    while True:
        m = _TOKEN_RE.match(source, pos)
        if m is None or m.end() == pos:
            rest = source[pos:]
            if rest.strip():
                off = pos + len(rest) - len(rest.lstrip())
                raise ExpressionSyntaxError(f"unexpected character '{source[off]}'", off, source)
            yield Token("end", "", len(source))
            return
        kind = m.lastgroup
        yield Token(kind, m.group(kind), m.start(kind))
        pos = m.end()


class Parser:
    """Recursive descent parser, ^ binds tightest and associates to the right"""
    def __init__(self, source: str):
        self.source = source
        self.tokens: List[Token] = list(tokenize(source))
        self.index = 0

    def peek(self) -> Token:
        """Current token"""
        return self.tokens[self.index]

    def advance(self) -> Token:
        """Consume current token"""
        t = self.tokens[self.index]
        if t.kind != "end":
            self.index += 1
        return t

    def match(self, *ops: str) -> Optional[Token]:
        """Consume operator token if it is one of given"""
        t = self.peek()
        if t.kind == "op" and t.text in ops:
            return self.advance()
        return None

    def expect(self, op: str):
        """Consume expected operator or fail"""
        if self.match(op) is None:
            t = self.peek()
            found = t.text or "end of input"
            raise ExpressionSyntaxError(f"expected '{op}', found {found}", t.position, self.source)

    def parse(self) -> Node:
        """Parse the complete source"""
        node = self.expression()
        t = self.peek()
        if t.kind != "end":
            raise ExpressionSyntaxError(f"expected operator or end of input, found '{t.text}'",
                                        t.position, self.source)
        return node

    def expression(self) -> Node:
        """expression := term (('+' | '-') term)*"""
        node = self.term()
        while True:
            t = self.match("+", "-")
            if t is None:
                return node
            node = Binary(t.text, node, self.term())

    def term(self) -> Node:
        """term := unary (('*' | '/') unary)*"""
        node = self.unary()
        while True:
            t = self.match("*", "/")
            if t is None:
                return node
            node = Binary(t.text, node, self.unary())

    def unary(self) -> Node:
        """unary := '-' unary | '+' unary | power"""
        if self.match("-"):
            return Negate(self.unary())
        if self.match("+"):
            return self.unary()
        return self.power()

    def power(self) -> Node:
        """power := primary ('^' unary)?"""
        node = self.primary()
        if self.match("^"):
            return Binary("^", node, self.unary())
        return node

    def primary(self) -> Node:
        """primary := number | name | name '(' arguments ')' | '(' expression ')'"""
        t = self.peek()
        if t.kind == "number":
            self.advance()
            value = float(t.text)
            if not np.isfinite(value):
                raise ExpressionSyntaxError(f"literal out of range '{t.text}'", t.position, self.source)
            return Number(value)
        if t.kind == "name":
            self.advance()
            if self.match("("):
                return self.call(t)
            if t.text in FUNCTIONS:
                raise ExpressionSyntaxError(f"expected '(' after function '{t.text}'",
                                            self.peek().position, self.source)
            return Variable(t.text)
        if self.match("("):
            node = self.expression()
            self.expect(")")
            return node
        found = t.text or "end of input"
        raise ExpressionSyntaxError(f"expected number, name or '(', found {found}", t.position, self.source)

    def call(self, name: Token) -> Node:
        """Function call arguments"""
        arity = FUNCTIONS.get(name.text)
        if arity is None:
            raise ExpressionSyntaxError(f"unknown function '{name.text}'", name.position, self.source)
        args = [self.expression()]
        while self.match(","):
            args.append(self.expression())
        self.expect(")")
        low, high = arity
        if len(args) < low or (high is not None and len(args) > high):
            raise ExpressionSyntaxError(f"wrong number of arguments for '{name.text}'", name.position,
                                        self.source)
        return Call(name.text, tuple(args))


@dataclass(frozen=True)
class Expression:
    """Parsed expression, immutable"""
    source: str
    root: Node

    def variables(self) -> Set[str]:
        """Free variables"""
        return self.root.variables()

    def evaluate(self, bindings: Mapping[str, Value]) -> Value:
        """Evaluate, arrays in bindings broadcast"""
        return self.root.evaluate(bindings)

    def __call__(self, **bindings: Value) -> Value:
        return self.evaluate(bindings)

    def evaluate_on(self, shape: Tuple[int, ...], bindings: Mapping[str, Value]) -> np.ndarray:
        """Evaluate and broadcast the result to given shape"""
        return np.broadcast_to(np.asarray(self.evaluate(bindings), dtype=float), shape).copy()

    def unparse(self) -> str:
        """Canonical source text"""
        return self.root.unparse()

    def __repr__(self):
        return self.source


def parse(source: str) -> Expression:
    """Parse source text into expression"""
    return Expression(source, Parser(source).parse())


def evaluate(expression: Expression, bindings: Mapping[str, Value]) -> Value:
    """Evaluate expression with variable bindings"""
    return expression.evaluate(bindings)


def unparse(expression: Expression) -> str:
    """Canonical source text of expression"""
    return expression.unparse()
