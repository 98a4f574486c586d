"""Exact rational functions over Q(i) on a coordinate chart.

Rational functions are elements of sympy's fraction field over the Gaussian
rationals, so every arithmetic result is reduced (numerator and denominator
coprime) and an element is zero exactly when its numerator is zero. Divisor
components are declared irreducible by the user; irreducibility is trusted,
not verified.
"""
import logging
import math
import re
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy
from sympy import lambdify
from sympy.polys.domains import QQ_I
from sympy.polys.domains.gaussiandomains import GaussianRational
from sympy.polys.fields import FracElement
from sympy.polys.rings import PolyElement

from src.models.errors import NearPoleEvaluation, ParseError, PoleOnComponent, ValidationError

logger = logging.getLogger(__name__)

MultiPoly = PolyElement
RationalFn = FracElement

DEFAULT_FLOOR = 1e-13
RESERVED_NAMES = ('i',)
IDENTIFIER = re.compile(r'^[A-Za-z_][A-Za-z0-9_]*$')


def validate_var_names(var_names):
    """Validate chart variable names"""
    errors = []
    if not var_names:
        errors.append('A chart needs at least one variable')
    for name in var_names:
        if not IDENTIFIER.match(name):
            errors.append(f'Invalid variable name: {name!r}')
        elif name in RESERVED_NAMES:
            errors.append(f'Variable name {name!r} is reserved for the imaginary unit')
    if len(set(var_names)) != len(var_names):
        errors.append('Variable names must be distinct')
    return errors


@dataclass(frozen=True)
class DivisorComponent:
    poly: PolyElement
    multiplicity: int = 1
    label: str = ''

    def __post_init__(self):
        if self.poly.is_ground:
            raise ValidationError('A divisor component must be a non-constant polynomial')
        if self.multiplicity < 1:
            raise ValidationError('Divisor multiplicities must be positive')
        if not self.label:
            object.__setattr__(self, 'label', str(self.poly.as_expr()))

    def __str__(self):
        return self.label


class Chart:
    """A coordinate chart of C^n with a polynomial divisor.

    The chart owns the fraction field Q(i)(z_1, ..., z_n) every rational
    function on it lives in. Charts sharing variable names share the field.
    """

    def __init__(self, var_names, divisor=()):
        var_names = tuple(var_names)
        errors = validate_var_names(var_names)
        if errors:
            raise ValidationError(errors)
        self.var_names = var_names
        self.symbols = tuple(sympy.Symbol(name) for name in var_names)
        self.domain = QQ_I.frac_field(*self.symbols)
        self.field = self.domain.field
        self.ring = self.field.ring
        self.divisor = tuple(divisor)

    def __repr__(self):
        return f'Chart({", ".join(self.var_names)}; divisor=[{", ".join(map(str, self.divisor))}])'

    @property
    def nvars(self):
        return len(self.var_names)

    @property
    def gens(self):
        return self.field.gens

    @property
    def zero(self):
        return self.field.zero

    @property
    def one(self):
        return self.field.one

    def var(self, index):
        return self.field.gens[index]

    def constant(self, value):
        """Embed an int, Fraction, sympy number or Gaussian rational"""
        if isinstance(value, GaussianRational):
            return self.field.ground_new(value)
        return self.field.from_expr(sympy.nsimplify(value) if isinstance(value, float) else sympy.sympify(value))

    def from_expr(self, expr):
        return self.field.from_expr(sympy.sympify(expr))

    def lift(self, f):
        """Move a rational function from another chart into this one (by variable name)"""
        if f.field == self.field:
            return f
        return self.field.from_expr(f.as_expr())

    def component(self, poly, multiplicity=1, label=''):
        if isinstance(poly, FracElement):
            if not poly.denom.is_ground:
                raise ValidationError(f'Divisor component {poly.as_expr()} is not a polynomial')
            poly = poly.numer.quo_ground(poly.denom.LC)
        elif not isinstance(poly, PolyElement):
            poly = self.ring.from_expr(sympy.sympify(poly))
        else:
            poly = self.ring.from_expr(poly.as_expr()) if poly.ring != self.ring else poly
        return DivisorComponent(poly, multiplicity, label)

    def with_divisor(self, components):
        return Chart(self.var_names, tuple(components))

    def divisor_fractions(self):
        return [self.field.new(q.poly) for q in self.divisor]

    @cached_property
    def divisor_evaluator(self):
        return NumericEvaluator(self, self.divisor_fractions())

    def divisor_moduli(self, point):
        """|q_alpha(point)| for every declared component, in declaration order"""
        if not self.divisor:
            return np.zeros(0)
        return np.abs(self.divisor_evaluator(point))


def _as_poly(q):
    return q.poly if isinstance(q, DivisorComponent) else q


def multiplicity(p, q):
    """Largest k with q^k dividing the nonzero polynomial p"""
    k = 0
    while True:
        quotient, remainder = p.div(q)
        if remainder:
            return k
        p = quotient
        k += 1


def order_along(f, q):
    """ord_q(num) - ord_q(den); +inf for the zero function"""
    q = _as_poly(q)
    if q.is_ground:
        raise ValidationError('Order along a constant polynomial is undefined')
    if not f:
        return math.inf
    return multiplicity(f.numer, q) - multiplicity(f.denom, q)


def vanishes_on(f, q):
    order = order_along(f, q)
    if order < 0:
        raise PoleOnComponent(f'{f.as_expr()} has a pole of order {-order} along {_as_poly(q).as_expr()}')
    return order >= 1


def partial(f, var):
    """Exact partial derivative with respect to the variable of index `var`"""
    # FracElement.diff calls to_poly(), whose `denom != 1` check fails over QQ_I
    x = f.field.ring.gens[var]
    return f.new(f.numer.diff(x) * f.denom - f.numer * f.denom.diff(x), f.denom ** 2)


def strip_divisor(p, components):
    """Divide out every declared component; returns (residual, orders)"""
    orders = []
    for q in components:
        k = multiplicity(p, _as_poly(q))
        if k:
            p = p.exquo(_as_poly(q) ** k)
        orders.append(k)
    return p, orders


def poles_only_on(f, components):
    """True when the denominator is a product of divisor polynomials up to a constant"""
    residual, _ = strip_divisor(f.denom, components)
    return residual.is_ground


def is_holomorphic(f):
    """Holomorphic on the whole chart: the reduced denominator is constant"""
    return f.denom.is_ground


def to_complex(value):
    """Gaussian rational (or a ground rational function) to complex double"""
    if isinstance(value, FracElement):
        value = constant_value(value)
    return complex(QQ_I.to_sympy(value))


def constant_value(f):
    if not (f.numer.is_ground and f.denom.is_ground):
        raise ValidationError(f'{f.as_expr()} is not a constant')
    return QQ_I.quo(f.numer.LC, f.denom.LC) if f else QQ_I.zero


def gaussian(value):
    """Exact Gaussian rational from an int, Fraction, string or complex with rational parts"""
    if isinstance(value, GaussianRational):
        return value
    if isinstance(value, complex):
        return QQ_I.from_sympy(sympy.nsimplify(value.real) + sympy.I * sympy.nsimplify(value.imag))
    return QQ_I.from_sympy(sympy.sympify(value))


def evaluate(f, point, floor=DEFAULT_FLOOR):
    """num(point) / den(point) in complex double precision"""
    num = _poly_value(f.numer, point)
    den = _poly_value(f.denom, point)
    if abs(den) < floor:
        raise NearPoleEvaluation(f'|den| = {abs(den):.3e} below floor {floor:.1e}',
                                 point=tuple(point), modulus=abs(den))
    return num / den


def _poly_value(p, point):
    point = [complex(x) for x in point]
    total = 0j
    for monom, coeff in p.terms():
        term = to_complex(coeff)
        for x, e in zip(point, monom):
            if e:
                term *= x ** e
        total += term
    return total


def substitute(f, images, target_field):
    """Compose f with the map whose coordinate functions are `images`"""
    num = _substitute_poly(f.numer, images, target_field)
    den = _substitute_poly(f.denom, images, target_field)
    if not den:
        raise ZeroDivisionError('denominator vanishes identically after substitution')
    return num / den


def substitute_poly(p, images, target_field):
    return _substitute_poly(p, images, target_field)


def _substitute_poly(p, images, target_field):
    powers = {}
    result = target_field.zero
    for monom, coeff in p.terms():
        term = target_field.ground_new(coeff)
        for index, e in enumerate(monom):
            if e:
                key = (index, e)
                if key not in powers:
                    powers[key] = images[index] ** e
                term *= powers[key]
        result += term
    return result


class NumericEvaluator:
    """Complex-double evaluation of a fixed batch of rational functions.

    Numerators and denominators are compiled separately with `lambdify`
    so the denominator floor can be enforced before dividing.
    """

    def __init__(self, chart, fns, shape=None, floor=DEFAULT_FLOOR):
        self.chart = chart
        self.fns = [chart.lift(f) for f in fns]
        self.shape = tuple(shape) if shape is not None else (len(self.fns),)
        self.floor = floor
        symbols = chart.symbols
        self._num = lambdify(symbols, [f.numer.as_expr() for f in self.fns], modules='numpy')
        self._den = lambdify(symbols, [f.denom.as_expr() for f in self.fns], modules='numpy')

    def __call__(self, point):
        if not self.fns:
            return np.zeros(self.shape, dtype=complex)
        args = [complex(x) for x in point]
        num = np.asarray(self._num(*args), dtype=complex)
        den = np.asarray(self._den(*args), dtype=complex)
        modulus = float(np.min(np.abs(den)))
        if modulus < self.floor:
            raise NearPoleEvaluation(f'|den| = {modulus:.3e} below floor {self.floor:.1e} at {args}',
                                     point=tuple(args), modulus=modulus)
        return (num / den).reshape(self.shape)


def random_rational(rng, radius=1, max_den=8):
    """Small exact Gaussian rational with both parts in [-radius, radius]"""
    parts = []
    for _ in range(2):
        den = int(rng.integers(1, max_den + 1))
        num = int(rng.integers(-radius * den, radius * den + 1))
        parts.append(sympy.Rational(num, den))
    return QQ_I.from_sympy(parts[0] + sympy.I * parts[1])


def random_point(chart, rng, radius=1, max_den=8, clearance=1e-3):
    """Exact random point of the chart at distance from the divisor"""
    while True:
        point = [random_rational(rng, radius, max_den) for _ in range(chart.nvars)]
        numeric = [to_complex(c) for c in point]
        if not chart.divisor or np.min(chart.divisor_moduli(numeric)) > clearance:
            return point


# Expression grammar: identifiers, integers, `i`, + - * / ^ (integer
# exponents), parentheses. Whitespace-insensitive.

TOKEN = re.compile(r'\s*(?:(?P<number>\d+)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))')


def _tokenize(text, line, column_offset):
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        match = TOKEN.match(text, pos)
        if not match or match.end() == pos:
            raise ParseError(f'Unexpected character {text[pos:].strip()[:1]!r}',
                             line, column_offset + pos + 1)
        kind = match.lastgroup
        start = match.start(kind)
        tokens.append((kind, match.group(kind), column_offset + start + 1))
        pos = match.end()
    tokens.append(('end', '', column_offset + len(text) + 1))
    return tokens


class _ExpressionParser:
    def __init__(self, tokens, chart, params, line):
        self.tokens = tokens
        self.pos = 0
        self.chart = chart
        self.params = params or {}
        self.line = line

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def fail(self, message, token=None):
        token = token or self.peek()
        raise ParseError(message, self.line, token[2])

    def expect(self, value):
        token = self.take()
        if token[1] != value:
            self.fail(f'Expected {value!r}', token)

    def parse(self):
        value = self.expression()
        if self.peek()[0] != 'end':
            self.fail(f'Unexpected token {self.peek()[1]!r}')
        return value

    def expression(self):
        value = self.term()
        while self.peek()[1] in ('+', '-'):
            op = self.take()[1]
            rhs = self.term()
            value = value + rhs if op == '+' else value - rhs
        return value

    def term(self):
        value = self.unary()
        while self.peek()[1] in ('*', '/'):
            token = self.take()
            rhs = self.unary()
            if token[1] == '*':
                value = value * rhs
            else:
                if not rhs:
                    self.fail('Division by zero', token)
                value = value / rhs
        return value

    def unary(self):
        if self.peek()[1] in ('+', '-'):
            op = self.take()[1]
            operand = self.unary()
            return -operand if op == '-' else operand
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] == '^':
            self.take()
            sign = 1
            if self.peek()[1] == '-':
                self.take()
                sign = -1
            parenthesized = False
            if self.peek()[1] == '(':
                self.take()
                parenthesized = True
                if self.peek()[1] == '-':
                    self.take()
                    sign = -sign
            token = self.take()
            if token[0] != 'number':
                self.fail('Exponents must be integer literals', token)
            if parenthesized:
                self.expect(')')
            exponent = sign * int(token[1])
            if exponent < 0:
                if not base:
                    self.fail('Negative power of zero', token)
                return (self.chart.one / base) ** (-exponent)
            return base ** exponent
        return base

    def atom(self):
        token = self.take()
        kind, text, _ = token
        if kind == 'number':
            return self.chart.constant(int(text))
        if kind == 'name':
            if text == 'i':
                return self.chart.constant(sympy.I)
            if text in self.chart.var_names:
                return self.chart.var(self.chart.var_names.index(text))
            if text in self.params:
                return self.chart.lift(self.params[text])
            self.fail(f'Undeclared identifier {text!r}', token)
        if text == '(':
            value = self.expression()
            self.expect(')')
            return value
        self.fail(f'Unexpected token {text!r}' if text else 'Unexpected end of expression', token)


def parse_expression(text, chart, params=None, line=None, column_offset=0):
    """Parse an expression of the input grammar into a rational function on `chart`"""
    tokens = _tokenize(text, line, column_offset)
    if tokens[0][0] == 'end':
        raise ParseError('Empty expression', line, column_offset + 1)
    return _ExpressionParser(tokens, chart, params, line).parse()


def format_rational(f):
    """Render in the input grammar (round-trips through parse_expression)"""
    return _format_expr(f.as_expr())


def _format_expr(expr):
    expr = expr.subs(sympy.I, sympy.Symbol('i'))
    return sympy.sstr(expr, order='lex').replace('**', '^')
