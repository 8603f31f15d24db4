"""Exact arithmetic in cyclotomic fields and the point expression language.

Every coordinate the geometry layer touches is a :class:`CycloNumber`, an
element of Q(zeta_N) stored in the power basis modulo the N-th cyclotomic
polynomial. The ambient order is N = 2J for even J and N = 4J for odd J, the
smallest cyclotomic field holding both e^{i pi/J} and the polygon vertices.
"""
from fractions import Fraction
from functools import lru_cache
import math
import re
import threading
from typing import Annotated, Dict, Iterable, List, Literal, Optional, Sequence, Tuple, Union

import sympy
from loguru import logger
from mpmath import iv
from pydantic import BaseModel, ConfigDict, Field

from polyfract.config.settings import settings
from polyfract.core.exceptions import (
    CycloDivisionByZero,
    ExpressionSyntaxError,
    FieldTooSmallError,
    IndexOutOfRangeError,
    InvalidInputError,
    JTooSmallError,
    NotRealError,
    PrecisionExhaustedError,
    UnknownSymbolError,
)

Rational = Union[int, Fraction]

_X = sympy.Symbol("x")


def field_order(J: int) -> int:
    """Order N of the ambient cyclotomic field for a J-gon."""
    if J < 3:
        raise JTooSmallError(f"J must be at least 3, got {J}", {"J": J})
    return 2 * J if J % 2 == 0 else 4 * J


class CyclotomicField:
    """Q(zeta_N) with precomputed reductions of every power of zeta."""

    _instances: Dict[int, "CyclotomicField"] = {}
    _lock = threading.Lock()

    def __init__(self, order: int):
        self.order = order
        phi = sympy.Poly(sympy.cyclotomic_poly(order, _X), _X)
        # low to high, monic
        self.modulus: List[int] = [int(c) for c in reversed(phi.all_coeffs())]
        self.degree = len(self.modulus) - 1
        self._phi_qq = sympy.Poly(phi.as_expr(), _X, domain=sympy.QQ)
        self.power_table: List[Tuple[Tuple[int, int], ...]] = [
            self._reduce_power(e) for e in range(order)
        ]
        self.cosines = [math.cos(2 * math.pi * k / order) for k in range(self.degree)]
        self.sines = [math.sin(2 * math.pi * k / order) for k in range(self.degree)]

    @classmethod
    def get(cls, order: int) -> "CyclotomicField":
        with cls._lock:
            field = cls._instances.get(order)
            if field is None:
                field = cls(order)
                cls._instances[order] = field
            return field

    @classmethod
    def for_polygon(cls, J: int) -> "CyclotomicField":
        return cls.get(field_order(J))

    def _reduce_power(self, e: int) -> Tuple[Tuple[int, int], ...]:
        d = self.degree
        v = [0] * (e + 1)
        v[e] = 1
        for k in range(e, d - 1, -1):
            c = v[k]
            if c:
                for t in range(d + 1):
                    v[k - d + t] -= c * self.modulus[t]
        return tuple((k, c) for k, c in enumerate(v[:d]) if c)

    def zero(self) -> "CycloNumber":
        return CycloNumber(self, (Fraction(0),) * self.degree)

    def one(self) -> "CycloNumber":
        return self.rational(1)

    def rational(self, value: Rational) -> "CycloNumber":
        coeffs = [Fraction(0)] * self.degree
        coeffs[0] = Fraction(value)
        return CycloNumber(self, tuple(coeffs))

    def zeta(self, k: int) -> "CycloNumber":
        """zeta_N^k."""
        return self.from_exponents({k % self.order: Fraction(1)})

    def from_exponents(self, terms: Dict[int, Fraction]) -> "CycloNumber":
        acc = [Fraction(0)] * self.degree
        for e, c in terms.items():
            if not c:
                continue
            for k, t in self.power_table[e % self.order]:
                acc[k] += c * t
        return CycloNumber(self, tuple(acc))

    def __repr__(self) -> str:
        return f"CyclotomicField({self.order})"


class CycloNumber:
    """Immutable element of a cyclotomic field, identified with a complex number."""

    __slots__ = ("field", "coeffs", "_hash")

    def __init__(self, field: CyclotomicField, coeffs: Sequence[Fraction]):
        self.field = field
        self.coeffs = tuple(coeffs)
        self._hash = None

    # construction helpers

    def _coerce(self, other) -> "CycloNumber":
        if isinstance(other, CycloNumber):
            if other.field is not self.field:
                raise FieldTooSmallError(
                    f"cannot mix Q(zeta_{self.field.order}) and Q(zeta_{other.field.order})"
                )
            return other
        if isinstance(other, (int, Fraction)):
            return self.field.rational(other)
        return NotImplemented

    # arithmetic

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return CycloNumber(self.field, tuple(a + b for a, b in zip(self.coeffs, other.coeffs)))

    __radd__ = __add__

    def __neg__(self):
        return CycloNumber(self.field, tuple(-a for a in self.coeffs))

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return CycloNumber(self.field, tuple(a - b for a, b in zip(self.coeffs, other.coeffs)))

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other - self

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        xs = [(i, a) for i, a in enumerate(self.coeffs) if a]
        ys = [(j, b) for j, b in enumerate(other.coeffs) if b]
        d = self.field.degree
        if len(xs) == 1 and xs[0][0] == 0:
            a = xs[0][1]
            return CycloNumber(self.field, tuple(a * b for b in other.coeffs))
        if len(ys) == 1 and ys[0][0] == 0:
            b = ys[0][1]
            return CycloNumber(self.field, tuple(a * b for a in self.coeffs))
        acc = [Fraction(0)] * d
        table = self.field.power_table
        n = self.field.order
        for i, a in xs:
            for j, b in ys:
                ab = a * b
                for k, t in table[(i + j) % n]:
                    acc[k] += ab * t
        return CycloNumber(self.field, tuple(acc))

    __rmul__ = __mul__

    def inverse(self) -> "CycloNumber":
        if self.is_zero():
            raise CycloDivisionByZero("division by zero in cyclotomic field")
        if self.is_rational():
            return self.field.rational(1 / self.coeffs[0])
        poly = sympy.Poly(
            [sympy.Rational(c.numerator, c.denominator) for c in reversed(self.coeffs)],
            _X,
            domain=sympy.QQ,
        )
        inv = poly.invert(self.field._phi_qq)
        high_to_low = inv.all_coeffs()
        coeffs = [Fraction(0)] * self.field.degree
        for k, c in enumerate(reversed(high_to_low)):
            c = sympy.Rational(c)
            coeffs[k] = Fraction(int(c.p), int(c.q))
        return CycloNumber(self.field, tuple(coeffs))

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self * other.inverse()

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return other * self.inverse()

    def __pow__(self, exponent: int):
        if not isinstance(exponent, int):
            return NotImplemented
        if exponent < 0:
            return self.inverse() ** (-exponent)
        result = self.field.one()
        base = self
        while exponent:
            if exponent & 1:
                result = result * base
            base = base * base
            exponent >>= 1
        return result

    def conj(self) -> "CycloNumber":
        n = self.field.order
        return self.field.from_exponents({(n - k) % n: c for k, c in enumerate(self.coeffs) if c})

    def real_part(self) -> "CycloNumber":
        return (self + self.conj()) * Fraction(1, 2)

    # predicates

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def is_rational(self) -> bool:
        return not any(self.coeffs[1:])

    def is_real(self) -> bool:
        return self.conj() == self

    def rational_value(self) -> Fraction:
        if not self.is_rational():
            raise ValueError(f"{self!r} is not rational")
        return self.coeffs[0]

    def __eq__(self, other) -> bool:
        if isinstance(other, CycloNumber):
            return self.field is other.field and self.coeffs == other.coeffs
        if isinstance(other, (int, Fraction)):
            return self.is_rational() and self.coeffs[0] == other
        return NotImplemented

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self.field.order, self.coeffs))
        return self._hash

    # float views

    def to_complex(self) -> complex:
        re_part = 0.0
        im_part = 0.0
        for k, c in enumerate(self.coeffs):
            if c:
                fc = float(c)
                re_part += fc * self.field.cosines[k]
                im_part += fc * self.field.sines[k]
        return complex(re_part, im_part)

    def to_xy(self) -> Tuple[float, float]:
        z = self.to_complex()
        return z.real, z.imag

    def __float__(self) -> float:
        return self.to_complex().real

    def __repr__(self) -> str:
        terms = [f"{c}*z^{k}" if k else f"{c}" for k, c in enumerate(self.coeffs) if c]
        return f"CycloNumber[{self.field.order}]({' + '.join(terms) or '0'})"


_iv_lock = threading.Lock()


def real_sign(x: CycloNumber) -> int:
    """Exact sign of a real field element.

    Zero is decided on the canonical form. Nonzero values are first tried
    with a guarded float evaluation and then by interval evaluation of the
    real embedding with doubling precision.

    Raises:
        NotRealError: if conj(x) != x
        PrecisionExhaustedError: if the precision cap is reached
    """
    if x.conj() != x:
        raise NotRealError(f"{x!r} is not real")
    if x.is_zero():
        return 0

    field = x.field
    try:
        approx = 0.0
        magnitude = 0.0
        for k, c in enumerate(x.coeffs):
            if c:
                fc = float(c)
                approx += fc * field.cosines[k]
                magnitude += abs(fc)
        if abs(approx) > 1e-12 * magnitude + 1e-300:
            return 1 if approx > 0 else -1
    except OverflowError:
        pass

    prec = settings.precision_start
    with _iv_lock:
        saved = iv.prec
        try:
            while prec <= settings.precision_cap:
                iv.prec = prec
                total = iv.mpf(0)
                for k, c in enumerate(x.coeffs):
                    if c:
                        total += iv.mpf(c.numerator) / iv.mpf(c.denominator) * iv.cos(2 * iv.pi * k / field.order)
                if total.a > 0:
                    return 1
                if total.b < 0:
                    return -1
                logger.debug(f"real_sign: interval still straddles 0 at {prec} bits, doubling")
                prec *= 2
        finally:
            iv.prec = saved
    raise PrecisionExhaustedError(
        f"could not separate value from 0 within {settings.precision_cap} bits",
        {"precision_cap": settings.precision_cap},
    )


def compare(a: CycloNumber, b: CycloNumber) -> int:
    """Sign of a - b for real a, b."""
    return real_sign(a - b)


def cyclo_arith(x: CycloNumber, y: Optional[CycloNumber], op: str):
    """Dispatch form of the field operations; op is add, sub, mul, div, conj or eq."""
    if op == "add":
        return x + y
    if op == "sub":
        return x - y
    if op == "mul":
        return x * y
    if op == "div":
        return x / y
    if op == "conj":
        return x.conj()
    if op == "eq":
        return x == y
    raise InvalidInputError(f"unknown operation {op!r}", {"op": op})


# Polygon constants shared with the geometry layer

def _unit(field: CyclotomicField, J: int, e: int) -> CycloNumber:
    """e^{i pi e / (2J)}."""
    num = e * field.order
    if num % (4 * J):
        raise FieldTooSmallError(f"e^(i pi {e}/(2*{J})) is not in Q(zeta_{field.order})")
    return field.zeta(num // (4 * J))


@lru_cache(maxsize=None)
def polygon_constants(J: int) -> Dict[str, object]:
    """omega, i, vertices p_k and midpoints q_k of the normalized J-gon."""
    field = CyclotomicField.for_polygon(J)
    omega = field.zeta(field.order // (2 * J))
    imag = field.zeta(field.order // 4)
    inv_cos = Fraction(2) / (omega + omega.conj())
    vertices = tuple(inv_cos * _unit(field, J, 2 + 4 * k - J) for k in range(J))
    midpoints = tuple(_unit(field, J, 4 * k - J) for k in range(J))
    return {"field": field, "omega": omega, "i": imag, "vertices": vertices, "midpoints": midpoints}


# Point expression grammar

class ExprNode(BaseModel):
    model_config = ConfigDict(frozen=True)


class RationalLit(ExprNode):
    kind: Literal["rational"] = "rational"
    numerator: int
    denominator: int = 1


class SymbolRef(ExprNode):
    kind: Literal["symbol"] = "symbol"
    name: Literal["p", "q", "w", "i", "r"]
    index: Optional[int] = None


class BinaryOp(ExprNode):
    kind: Literal["binary"] = "binary"
    op: Literal["+", "-", "*"]
    left: "PointExpr"
    right: "PointExpr"


class Negate(ExprNode):
    kind: Literal["neg"] = "neg"
    operand: "PointExpr"


class Power(ExprNode):
    kind: Literal["pow"] = "pow"
    base: "PointExpr"
    exponent: int


PointExpr = Annotated[
    Union[RationalLit, SymbolRef, BinaryOp, Negate, Power],
    Field(discriminator="kind"),
]

BinaryOp.model_rebuild()
Negate.model_rebuild()
Power.model_rebuild()


_TOKEN_RE = re.compile(r"(?P<num>[0-9]+(?:/[0-9]+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*^()])")
_INDEXED_RE = re.compile(r"([pq])([0-9]+)")


class _Token:
    __slots__ = ("kind", "text", "offset")

    def __init__(self, kind: str, text: str, offset: int):
        self.kind = kind
        self.text = text
        self.offset = offset


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _tokenize(text: str) -> List[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos), text)
        tokens.append(_Token(m.lastgroup, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(_Token("end", "", _byte_offset(text, len(text))))
    return tokens


class _Parser:
    def __init__(self, text: str, J: Optional[int]):
        self.text = text
        self.J = J
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, tok: _Token):
        raise ExpressionSyntaxError(message, tok.offset, self.text)

    def parse(self) -> ExprNode:
        node = self.parse_expr()
        tok = self.peek()
        if tok.kind != "end":
            self.error(f"unexpected token {tok.text!r}", tok)
        return node

    def parse_expr(self) -> ExprNode:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            node = BinaryOp(op=op, left=node, right=self.parse_term())
        return node

    def parse_term(self) -> ExprNode:
        node = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text == "*":
            self.advance()
            node = BinaryOp(op="*", left=node, right=self.parse_unary())
        return node

    def parse_unary(self) -> ExprNode:
        if self.peek().kind == "op" and self.peek().text == "-":
            self.advance()
            return Negate(operand=self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> ExprNode:
        base = self.parse_atom()
        if self.peek().kind == "op" and self.peek().text == "^":
            self.advance()
            sign = 1
            if self.peek().kind == "op" and self.peek().text == "-":
                self.advance()
                sign = -1
            tok = self.advance()
            if tok.kind != "num" or "/" in tok.text:
                self.error("exponent must be an integer", tok)
            return Power(base=base, exponent=sign * int(tok.text))
        return base

    def parse_atom(self) -> ExprNode:
        tok = self.advance()
        if tok.kind == "num":
            if "/" in tok.text:
                num, den = tok.text.split("/")
                if int(den) == 0:
                    self.error("zero denominator", tok)
                return RationalLit(numerator=int(num), denominator=int(den))
            return RationalLit(numerator=int(tok.text))
        if tok.kind == "name":
            return self.symbol(tok)
        if tok.kind == "op" and tok.text == "(":
            node = self.parse_expr()
            close = self.advance()
            if close.kind != "op" or close.text != ")":
                self.error("expected ')'", close)
            return node
        if tok.kind == "end":
            self.error("unexpected end of expression", tok)
        self.error(f"unexpected token {tok.text!r}", tok)

    def symbol(self, tok: _Token) -> SymbolRef:
        if tok.text in ("w", "i", "r"):
            return SymbolRef(name=tok.text)
        m = _INDEXED_RE.fullmatch(tok.text)
        if m is None:
            raise UnknownSymbolError(
                f"unknown symbol {tok.text!r} at offset {tok.offset}",
                {"symbol": tok.text, "offset": tok.offset},
            )
        index = int(m.group(2))
        if self.J is not None and index >= self.J:
            raise IndexOutOfRangeError(
                f"{tok.text} is out of range for J={self.J} at offset {tok.offset}",
                {"symbol": tok.text, "J": self.J, "offset": tok.offset},
            )
        return SymbolRef(name=m.group(1), index=index)


def parse_expression(text: str, J: Optional[int] = None) -> ExprNode:
    """Parse a point expression into its AST without evaluating it."""
    return _Parser(text, J).parse()


def evaluate(node: ExprNode, J: int, r: Optional[CycloNumber] = None) -> CycloNumber:
    consts = polygon_constants(J)
    field = consts["field"]

    def walk(n: ExprNode) -> CycloNumber:
        if isinstance(n, RationalLit):
            return field.rational(Fraction(n.numerator, n.denominator))
        if isinstance(n, SymbolRef):
            if n.name == "w":
                return consts["omega"]
            if n.name == "i":
                return consts["i"]
            if n.name == "r":
                if r is None:
                    raise UnknownSymbolError("'r' is not available in this context", {"symbol": "r"})
                return r
            if n.index >= J:
                raise IndexOutOfRangeError(f"{n.name}{n.index} is out of range for J={J}", {"J": J})
            table = consts["vertices"] if n.name == "p" else consts["midpoints"]
            return table[n.index]
        if isinstance(n, BinaryOp):
            left, right = walk(n.left), walk(n.right)
            if n.op == "+":
                return left + right
            if n.op == "-":
                return left - right
            return left * right
        if isinstance(n, Negate):
            return -walk(n.operand)
        if isinstance(n, Power):
            return walk(n.base) ** n.exponent
        raise TypeError(f"unknown node {n!r}")

    return walk(node)


def parse_point_expr(text: str, J: int, r: Optional[CycloNumber] = None) -> CycloNumber:
    """Parse and evaluate a point expression for the J-gon with ratio r."""
    return evaluate(parse_expression(text, J), J, r)


_PRECEDENCE = {"rational": 5, "symbol": 5, "pow": 4, "neg": 3, "*": 2, "+": 1, "-": 1}


def _prec(node: ExprNode) -> int:
    if isinstance(node, BinaryOp):
        return _PRECEDENCE[node.op]
    return _PRECEDENCE[node.kind]


def format_expression(node: ExprNode) -> str:
    """Print an AST so that parsing the result gives back the same AST."""

    def wrap(child: ExprNode, needs: bool) -> str:
        text = format_expression(child)
        return f"({text})" if needs else text

    if isinstance(node, RationalLit):
        if node.denominator == 1:
            return str(node.numerator)
        return f"{node.numerator}/{node.denominator}"
    if isinstance(node, SymbolRef):
        return node.name if node.index is None else f"{node.name}{node.index}"
    if isinstance(node, BinaryOp):
        p = _prec(node)
        left = wrap(node.left, _prec(node.left) < p)
        right = wrap(node.right, _prec(node.right) <= p)
        return f"{left} {node.op} {right}"
    if isinstance(node, Negate):
        return "-" + wrap(node.operand, _prec(node.operand) < 3)
    if isinstance(node, Power):
        return f"{wrap(node.base, _prec(node.base) < 5)}^{node.exponent}"
    raise TypeError(f"unknown node {node!r}")


def collect_symbols(node: ExprNode) -> Iterable[SymbolRef]:
    if isinstance(node, SymbolRef):
        yield node
    elif isinstance(node, BinaryOp):
        yield from collect_symbols(node.left)
        yield from collect_symbols(node.right)
    elif isinstance(node, Negate):
        yield from collect_symbols(node.operand)
    elif isinstance(node, Power):
        yield from collect_symbols(node.base)
