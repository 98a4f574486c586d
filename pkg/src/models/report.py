"""Report serialisation: report.json, summary.txt and traces/*.csv."""
import csv
import json
import logging
import math
import os

import numpy as np
from jinja2 import Environment, FileSystemLoader, StrictUndefined

from src.models.errors import ValidationError

logger = logging.getLogger(__name__)

FORMATS = ('json', 'text', 'csv-traces')
TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'templates')


def plain(value):
    """JSON-ready copy: complex as [re, im], arrays as nested lists, tuples as lists"""
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return [_real(value.real), _real(value.imag)]
    if isinstance(value, (float, np.floating)):
        return _real(value)
    return value


def _real(x):
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return repr(x)
    return x


def render_json(report):
    return json.dumps(plain(report.to_dict()), indent=2, ensure_ascii=False) + '\n'


def _environment():
    return Environment(loader=FileSystemLoader(TEMPLATE_DIR), undefined=StrictUndefined,
                       keep_trailing_newline=True, trim_blocks=True, lstrip_blocks=True)


def _component_lines(report):
    """One verdict line per divisor component"""
    sections = report.sections
    spiral = sections.get('spiral', {}).get('components', {})
    monodromy = sections.get('monodromy', {}).get('components', {})
    labels = list(dict.fromkeys(list(report.components) + list(spiral) + list(monodromy)))
    lines = []
    for label in labels:
        parts = []
        s = spiral.get(label)
        if s is not None:
            parts.append(f'spiral={"yes" if s["spiral"] else "no"}')
            parts.append(f'strong_spiral={"yes" if s["strong_spiral"] else "no"}')
            if s.get('in_A01') is not None:
                parts.append(f'A01={"yes" if s["in_A01"] else "no"}')
        m = monodromy.get(label)
        if m is not None:
            parts.append(f'local_monodromy={"trivial" if m["trivial"] else "nontrivial"} (|M-I|={m["distance"]:.3e})')
            if 'trivial_on_killing_subspace' in m:
                parts.append(f'on_killing={"trivial" if m["trivial_on_killing_subspace"] else "nontrivial"}')
        lines.append({'label': label, 'verdict': ', '.join(parts) or 'no verdict computed'})
    return lines


def render_text(report):
    template = _environment().get_template('summary.txt.j2')
    return template.render(report=report, data=report.to_dict(), components=_component_lines(report))


def write_traces(report, directory):
    """traces/<name>.csv, one file per recorded trajectory"""
    paths = []
    trace_dir = os.path.join(directory, 'traces')
    if report.traces:
        os.makedirs(trace_dir, exist_ok=True)
    for name, rows in sorted(report.traces.items()):
        path = os.path.join(trace_dir, f'{name}.csv')
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            csv.writer(handle, lineterminator='\n').writerows(rows)
        paths.append(path)
    return paths


def emit_report(report, fmt='json', out=None):
    """Write the report in `fmt` under directory `out`; returns the written paths"""
    if fmt not in FORMATS:
        raise ValidationError(f'Unknown format {fmt!r}; expected one of {", ".join(FORMATS)}')
    out = out or '.'
    os.makedirs(out, exist_ok=True)
    if fmt == 'csv-traces':
        paths = write_traces(report, out)
    else:
        name, text = ('report.json', render_json(report)) if fmt == 'json' else ('summary.txt', render_text(report))
        path = os.path.join(out, name)
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write(text)
        paths = [path]
    logger.info('wrote %s', ', '.join(paths) if paths else 'nothing')
    return paths
