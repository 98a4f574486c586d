"""Scenario files: sectioned key-value text describing a chart connection.

    [meta]          name = hopf
    [params]        lambda = 1/2
    [chart]         vars = z1, z2 / basepoint = 1, 1
    [divisor]       z1 = z1 ; 1
    [christoffel]   1,1,1 = 1/z1            (k,i,j, 1-based)
    [frame]         Q.1,1 = 1/(2*z1) / Qinv.1,1 = 2*z1
    [expect]        branched = true ; DERIVED
"""
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property

from src.models.connection import ChartConnection, GaugeMatrix, SubmoduleFrame, matrix
from src.models.errors import ConnscopeError, ParseError, ValidationError
from src.models.rational import Chart, constant_value, format_rational, parse_expression, to_complex

logger = logging.getLogger(__name__)

SECTIONS = ('meta', 'params', 'chart', 'divisor', 'christoffel', 'frame', 'expect')
SECTION = re.compile(r'^\[(?P<name>[A-Za-z_]+)\]$')
INDEX3 = re.compile(r'^(\d+)\s*,\s*(\d+)\s*,\s*(\d+)$')
FRAME_KEY = re.compile(r'^(Q|Qinv)\.(\d+)\s*,\s*(\d+)$')
PROVENANCE = ('TRIVIAL', 'DERIVED', 'LITERATURE', 'COMPUTED')


@dataclass(frozen=True)
class Entry:
    """A `key = value` line with the column where the value starts"""
    key: str
    value: str
    line: int
    column: int


@dataclass(frozen=True)
class Expectation:
    key: str
    value: object
    provenance: str = ''


@dataclass(frozen=True)
class DivisorEntry:
    label: str
    expression: str
    multiplicity: int = 1


@dataclass
class ConnectionSpec:
    name: str
    var_names: tuple
    basepoint: tuple = ()
    divisor: tuple = ()
    christoffel: dict = field(default_factory=dict)
    frame: dict = field(default_factory=dict)
    frame_inverse: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    expectations: tuple = ()
    pole_bound: int = None

    def __eq__(self, other):
        if not isinstance(other, ConnectionSpec):
            return NotImplemented
        return self.structure() == other.structure()

    def structure(self):
        return (self.name, tuple(self.var_names), tuple(self.basepoint), tuple(self.divisor),
                tuple(sorted(self.christoffel.items())), tuple(sorted(self.frame.items())),
                tuple(sorted(self.frame_inverse.items())), tuple(self.params.items()),
                tuple(self.meta.items()), tuple(self.expectations), self.pole_bound)

    @property
    def nvars(self):
        return len(self.var_names)

    @cached_property
    def bare_chart(self):
        return Chart(self.var_names)

    @cached_property
    def param_values(self):
        values = {}
        for name, text in self.params.items():
            value = parse_expression(text, self.bare_chart, values)
            if not (value.numer.is_ground and value.denom.is_ground):
                raise ValidationError(f'Parameter {name} must be a constant')
            values[name] = value
        return values

    def expression(self, text):
        return parse_expression(text, self.bare_chart, self.param_values)

    @cached_property
    def chart(self):
        components = []
        for entry in self.divisor:
            poly = self.expression(entry.expression)
            components.append(self.bare_chart.component(poly, entry.multiplicity, entry.label))
        return self.bare_chart.with_divisor(components)

    @cached_property
    def connection(self):
        entries = {index: self.chart.lift(self.expression(text)) for index, text in self.christoffel.items()}
        return ChartConnection.from_entries(self.chart, entries, self.pole_bound)

    @property
    def has_frame(self):
        return bool(self.frame)

    @cached_property
    def submodule_frame(self):
        """Declared frame, or the coordinate frame Q = Id"""
        if not self.frame:
            return SubmoduleFrame.trivial(self.chart)
        n = self.nvars

        def build(entries):
            rows = [[self.chart.zero for _ in range(n)] for _ in range(n)]
            for (a, b), text in entries.items():
                rows[a][b] = self.chart.lift(self.expression(text))
            return matrix(self.chart, rows)

        return SubmoduleFrame(self.chart, GaugeMatrix(build(self.frame), build(self.frame_inverse)))

    @cached_property
    def basepoint_values(self):
        if not self.basepoint:
            return None
        return [to_complex(constant_value(self.expression(text))) for text in self.basepoint]

    @classmethod
    def from_objects(cls, name, conn, frame=None, basepoint=(), expectations=()):
        """Spec text fields from built objects (canonical formatting)"""
        chart = conn.chart
        divisor = tuple(DivisorEntry(q.label, format_rational(chart.field.new(q.poly)), q.multiplicity)
                        for q in chart.divisor)
        christoffel = {index: format_rational(value) for index, value in conn.nonzero_entries().items()}
        frame_entries, inverse_entries = {}, {}
        if frame is not None:
            for target, M in ((frame_entries, frame.Q), (inverse_entries, frame.Qinv)):
                for a, row in enumerate(M.to_list()):
                    for b, value in enumerate(row):
                        if value:
                            target[(a, b)] = format_rational(value)
        meta = {'name': name}
        if conn.pole_bound is not None:
            meta['pole_bound'] = str(conn.pole_bound)
        return cls(name, chart.var_names, tuple(basepoint), divisor, christoffel, frame_entries,
                   inverse_entries, {}, meta, tuple(expectations), conn.pole_bound)


def _strip_comment(text):
    position = text.find('#')
    return text if position < 0 else text[:position]


def _split_entry(raw, line):
    if '=' not in raw:
        raise ParseError('Expected `key = value`', line, 1)
    key_part, value_part = raw.split('=', 1)
    column = len(key_part) + 2 + (len(value_part) - len(value_part.lstrip()))
    return Entry(key_part.strip(), value_part.strip(), line, column)


def _sections(text):
    sections = {name: [] for name in SECTIONS}
    current = None
    for line_number, raw in enumerate(text.splitlines(), start=1):
        stripped = _strip_comment(raw).rstrip()
        if not stripped.strip():
            continue
        match = SECTION.match(stripped.strip())
        if match:
            current = match.group('name')
            if current not in sections:
                raise ParseError(f'Unknown section [{current}]', line_number, 1)
            continue
        if current is None:
            raise ParseError('Entry outside of any section', line_number, 1)
        sections[current].append(_split_entry(stripped, line_number))
    return sections


def _parse_value(text):
    lowered = text.lower()
    if lowered in ('true', 'false'):
        return lowered == 'true'
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            continue
    return text


def _checked(errors, action):
    try:
        return action()
    except ConnscopeError as e:
        errors.extend(getattr(e, 'errors', [str(e)]))
        return None


def parse_spec(text):
    """Parse and fully validate a scenario file"""
    sections = _sections(text)
    errors = []
    meta = {e.key: e.value for e in sections['meta']}
    meta.setdefault('name', 'unnamed')
    chart_keys = {e.key: e for e in sections['chart']}
    if 'vars' not in chart_keys:
        raise ParseError('[chart] needs a `vars` entry', 1, 1)
    var_names = tuple(v.strip() for v in chart_keys['vars'].value.split(',') if v.strip())
    bare = _checked(errors, lambda: Chart(var_names))
    if bare is None:
        raise ValidationError(errors)

    params = {}
    param_values = {}
    for e in sections['params']:
        params[e.key] = e.value
        value = _checked(errors, lambda: parse_expression(e.value, bare, param_values, e.line, e.column - 1))
        if value is not None:
            param_values[e.key] = value

    def check_expression(e, text=None, column=None):
        _checked(errors, lambda: parse_expression(text or e.value, bare, param_values, e.line,
                                                  (column or e.column) - 1))

    basepoint = ()
    if 'basepoint' in chart_keys:
        entry = chart_keys['basepoint']
        basepoint = tuple(part.strip() for part in entry.value.split(','))
        for part in basepoint:
            check_expression(entry, part)
        if len(basepoint) != len(var_names):
            errors.append(f'line {entry.line}: basepoint needs {len(var_names)} coordinates')

    divisor = []
    for e in sections['divisor']:
        expression, _, mult = e.value.partition(';')
        multiplicity = 1
        if mult.strip():
            try:
                multiplicity = int(mult)
            except ValueError:
                errors.append(f'line {e.line}: multiplicity must be an integer')
        check_expression(e, expression.strip())
        divisor.append(DivisorEntry(e.key, expression.strip(), multiplicity))

    christoffel = {}
    n = len(var_names)
    for e in sections['christoffel']:
        match = INDEX3.match(e.key)
        if not match:
            errors.append(f'line {e.line}, column 1: Christoffel keys look like k,i,j')
            continue
        index = tuple(int(x) - 1 for x in match.groups())
        if any(not 0 <= x < n for x in index):
            errors.append(f'line {e.line}, column 1: index {e.key} out of range 1..{n}')
            continue
        check_expression(e)
        christoffel[index] = e.value

    frame, frame_inverse = {}, {}
    for e in sections['frame']:
        match = FRAME_KEY.match(e.key)
        if not match:
            errors.append(f'line {e.line}, column 1: frame keys look like Q.a,b or Qinv.a,b')
            continue
        a, b = int(match.group(2)) - 1, int(match.group(3)) - 1
        if not (0 <= a < n and 0 <= b < n):
            errors.append(f'line {e.line}, column 1: index {e.key} out of range 1..{n}')
            continue
        check_expression(e)
        (frame if match.group(1) == 'Q' else frame_inverse)[(a, b)] = e.value

    expectations = []
    for e in sections['expect']:
        value, _, provenance = e.value.partition(';')
        provenance = provenance.strip()
        if provenance and provenance not in PROVENANCE:
            errors.append(f'line {e.line}: unknown provenance {provenance}')
        expectations.append(Expectation(e.key, _parse_value(value.strip()), provenance))

    if errors:
        raise ParseError(errors[0]) if len(errors) == 1 else ValidationError(errors)

    pole_bound = int(meta['pole_bound']) if 'pole_bound' in meta else None
    spec = ConnectionSpec(meta['name'], var_names, basepoint, tuple(divisor), christoffel,
                          frame, frame_inverse, params, meta, tuple(expectations), pole_bound)
    validate_spec(spec)
    return spec


def validate_spec(spec):
    """Build every object the scenario declares; raises ValidationError on the first failure"""
    spec.connection
    if spec.frame and not spec.frame_inverse:
        raise ValidationError('A frame needs its declared inverse (Qinv entries)')
    spec.submodule_frame
    if spec.basepoint_values is not None and spec.chart.divisor:
        moduli = spec.chart.divisor_moduli(spec.basepoint_values)
        if min(moduli) == 0:
            raise ValidationError('Basepoint lies on the divisor')
    logger.debug('scenario %s validated: %d Christoffel entries', spec.name, len(spec.christoffel))
    return spec


def emit_spec(spec):
    """Scenario text that parses back to an equal spec"""
    lines = ['[meta]']
    meta = dict(spec.meta)
    meta.setdefault('name', spec.name)
    if spec.pole_bound is not None:
        meta.setdefault('pole_bound', str(spec.pole_bound))
    lines += [f'{key} = {value}' for key, value in meta.items()]
    if spec.params:
        lines += ['', '[params]'] + [f'{key} = {value}' for key, value in spec.params.items()]
    lines += ['', '[chart]', f'vars = {", ".join(spec.var_names)}']
    if spec.basepoint:
        lines.append(f'basepoint = {", ".join(spec.basepoint)}')
    if spec.divisor:
        lines += ['', '[divisor]'] + [f'{d.label} = {d.expression} ; {d.multiplicity}' for d in spec.divisor]
    if spec.christoffel:
        lines += ['', '[christoffel]']
        lines += [f'{k + 1},{i + 1},{j + 1} = {text}' for (k, i, j), text in sorted(spec.christoffel.items())]
    if spec.frame:
        lines += ['', '[frame]']
        lines += [f'Q.{a + 1},{b + 1} = {text}' for (a, b), text in sorted(spec.frame.items())]
        lines += [f'Qinv.{a + 1},{b + 1} = {text}' for (a, b), text in sorted(spec.frame_inverse.items())]
    if spec.expectations:
        lines += ['', '[expect]']
        for e in spec.expectations:
            value = str(e.value).lower() if isinstance(e.value, bool) else str(e.value)
            lines.append(f'{e.key} = {value}' + (f' ; {e.provenance}' if e.provenance else ''))
    return '\n'.join(lines) + '\n'
