import os

# Every tolerance, budget and seed used by the engines. Each key can be
# overridden through CONNSCOPE_<KEY> in the environment or --tol-overrides.
DEFAULTS = {
    'seed': 0,
    # rational_core
    'eval_floor': 1e-13,
    # geodesic_engine
    'geodesic_rtol': 1e-10,
    'geodesic_atol': 1e-10,
    'pole_guard': 1e-10,
    'pole_halt': 1e-8,
    'det_floor': 1e-10,
    'crossing_tol': 1e-8,
    'root_xtol': 1e-12,
    'transversality_tol': 1e-8,
    'distinguished_half_span': 0.25,
    'crossing_grid': 200,
    'spiral_budget': 64,
    'pole_free_margin': 1e-3,
    'residual_tol': 1e-6,
    # killing_engine
    'rank_tol': 1e-9,
    'transport_tol': 1e-11,
    'ansatz_degree': 2,
    'ansatz_pole_order': 2,
    'subspace_angle_tol': 1e-6,
    'check_offset': 0.125,
    # monodromy_engine
    'path_clearance': 1e-6,
    'loop_radius': 0.5,
    'loop_samples': 512,
    'monodromy_trivial_tol': 1e-6,
    'integrality_tol': 1e-8,
    'diagonalizable_cond': 1e8,
    'singular_tol': 1e-12,
    # cli_scenarios
    'workers': 4,
}

ENV_PREFIX = 'CONNSCOPE_'


def _coerce(key, raw):
    """Convert a textual override to the type of the default value"""
    default = DEFAULTS[key]
    if isinstance(default, bool):
        return str(raw).strip().lower() in ('1', 'true', 'yes', 'on')
    if isinstance(default, int):
        return int(raw)
    return float(raw)


def parse_overrides(text):
    """Parse `key=value,key=value` into a dict, rejecting unknown keys"""
    from src.models.errors import ValidationError

    overrides = {}
    errors = []
    if not text:
        return overrides
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        if '=' not in item:
            errors.append(f'Override must look like key=value: {item}')
            continue
        key, value = (part.strip() for part in item.split('=', 1))
        if key not in DEFAULTS:
            errors.append(f'Unknown configuration key: {key}')
            continue
        try:
            overrides[key] = _coerce(key, value)
        except ValueError:
            errors.append(f'Invalid value for {key}: {value}')
    if errors:
        raise ValidationError(errors)
    return overrides


def load_config(overrides=None):
    """Merge defaults, environment variables and explicit overrides"""
    config = dict(DEFAULTS)
    for key in DEFAULTS:
        raw = os.environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            config[key] = _coerce(key, raw)
    if overrides:
        config.update(overrides)
    return config


def scenario_dir():
    default = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'scenarios')
    return os.environ.get(ENV_PREFIX + 'SCENARIOS', default)


def settings(config=None):
    """Defaults completed with whatever keys `config` sets"""
    merged = dict(DEFAULTS)
    if config:
        merged.update(config)
    return merged
