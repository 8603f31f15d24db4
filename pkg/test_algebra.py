from fractions import Fraction

import pytest
from hypothesis import given, settings as hsettings, strategies as st

from polyfract.core.exceptions import (
    CycloDivisionByZero,
    ExpressionSyntaxError,
    IndexOutOfRangeError,
    InvalidInputError,
    JTooSmallError,
    NotRealError,
    UnknownSymbolError,
)
from polyfract.services.algebra import (
    CyclotomicField,
    cyclo_arith,
    field_order,
    format_expression,
    parse_expression,
    parse_point_expr,
    polygon_constants,
    real_sign,
)

FIELD8 = CyclotomicField.get(8)

small_fractions = st.fractions(min_value=-5, max_value=5, max_denominator=7)
elements8 = st.lists(small_fractions, min_size=FIELD8.degree, max_size=FIELD8.degree).map(
    lambda cs: FIELD8.from_exponents({k: c for k, c in enumerate(cs)})
)


def test_field_order():
    assert field_order(4) == 8
    assert field_order(6) == 12
    assert field_order(3) == 12
    assert field_order(5) == 20
    with pytest.raises(JTooSmallError):
        field_order(2)


def test_square_vertices_and_midpoints():
    consts = polygon_constants(4)
    i = consts["i"]
    p = consts["vertices"]
    q = consts["midpoints"]
    assert p[0] == 1 - i
    assert p[1] == 1 + i
    assert p[2] == -1 + i
    assert p[3] == -1 - i
    assert q[0] == -i
    assert q[1] == 1
    # q_k is the midpoint of b_k = [p_{k-1}, p_k]
    for k in range(4):
        assert (p[k - 1] + p[k]) * Fraction(1, 2) == q[k]


def test_sqrt2_identities():
    consts = polygon_constants(4)
    omega = consts["omega"]
    root2 = omega + omega.conj()
    assert root2 * root2 == 2
    assert omega ** 8 == 1
    assert omega ** 4 == -1
    assert real_sign(root2 - Fraction(141, 100)) == 1
    assert real_sign(root2 - Fraction(142, 100)) == -1


def test_real_sign_rejects_non_real():
    i = polygon_constants(4)["i"]
    with pytest.raises(NotRealError):
        real_sign(i)


def test_division_by_zero():
    with pytest.raises(CycloDivisionByZero):
        FIELD8.one() / FIELD8.zero()


def test_cyclo_arith():
    z2 = FIELD8.zeta(2)
    assert cyclo_arith(z2, z2, "mul") == FIELD8.rational(-1)
    x = FIELD8.rational(Fraction(3, 7))
    assert cyclo_arith(x, cyclo_arith(FIELD8.one(), x, "div"), "mul") == FIELD8.one()
    z = FIELD8.zeta(1)
    assert cyclo_arith(cyclo_arith(z, None, "conj"), z, "mul") == FIELD8.one()
    assert cyclo_arith(cyclo_arith(x, z, "add"), z, "sub") == x
    assert cyclo_arith(x, x, "eq") is True
    with pytest.raises(CycloDivisionByZero):
        cyclo_arith(x, FIELD8.zero(), "div")
    with pytest.raises(InvalidInputError):
        cyclo_arith(x, x, "pow")


@hsettings(max_examples=40, deadline=None)
@given(elements8)
def test_inverse_is_multiplicative_inverse(x):
    if x.is_zero():
        return
    assert x * x.inverse() == 1


@hsettings(max_examples=40, deadline=None)
@given(elements8, elements8)
def test_conjugation_is_a_field_automorphism(x, y):
    assert (x * y).conj() == x.conj() * y.conj()
    assert (x + y).conj() == x.conj() + y.conj()
    assert (x * x.conj()).is_real()


@hsettings(max_examples=40, deadline=None)
@given(elements8)
def test_norm_is_nonnegative(x):
    n = x * x.conj()
    assert real_sign(n) == (0 if x.is_zero() else 1)


def test_point_expressions():
    assert parse_point_expr("2/3 * p3", 4) == polygon_constants(4)["vertices"][3] * Fraction(2, 3)
    assert parse_point_expr("(1 - r) * q1", 4, FIELD8.rational(Fraction(1, 3))) == Fraction(2, 3)
    assert parse_point_expr("i^2", 4) == -1
    assert parse_point_expr("w^-1 * w", 6) == 1


@pytest.mark.parametrize("text", ["2/3 * p3", "-(p0 + q1)^2", "1 - 2 - 3", "w^-2 * i"])
def test_format_expression_reparses(text):
    node = parse_expression(text, 4)
    assert parse_expression(format_expression(node), 4) == node


def test_expression_errors():
    with pytest.raises(ExpressionSyntaxError) as err:
        parse_expression("1/0")
    assert err.value.offset == 0
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("p0 +")
    with pytest.raises(ExpressionSyntaxError):
        parse_expression("p0 $ p1")
    with pytest.raises(IndexOutOfRangeError):
        parse_expression("p4", 4)
    with pytest.raises(UnknownSymbolError):
        parse_expression("z1", 4)
