"""Experiment configuration files.

A config is UTF-8 ``key = value`` text in two sections::

    [experiment]
    name = axioms
    seed = 7

    [parameters]
    trials = 1000
    p = 1.5, 2, 3

Every parameter has a default, so naming the experiment is enough.
"""
from __future__ import annotations

import configparser
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ResourceError, ValidationError
from .gasket import DEFAULT_MAX_LEVEL

EXPERIMENTS = (
    "axioms-check",
    "eid-scalar",
    "eid-planar",
    "approx-demo",
    "cones-demo",
    "currents-check",
    "preiss",
    "gasket-mdim",
)
ALIASES = {
    "axioms": "axioms-check",
    "scalar": "eid-scalar",
    "planar": "eid-planar",
    "approx": "approx-demo",
    "cones": "cones-demo",
    "currents": "currents-check",
    "gasket": "gasket-mdim",
}
STENCILS = ("axis", "king", "knight-extended")


def canonical_name(name):
    name = name.strip()
    name = ALIASES.get(name, name)
    if name not in EXPERIMENTS:
        raise ValidationError(f"experiment.name: unknown experiment {name!r}")
    return name


# -- value parsers -----------------------------------------------------------

def _int(s):
    return int(s)


def _float(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def _floats(s):
    return tuple(_float(t) for t in s.split(",") if t.strip())


def _ints(s):
    return tuple(int(t) for t in s.split(",") if t.strip())


def _bool(s):
    t = s.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError("not a boolean")


def _str(s):
    return s.strip()


@dataclass(frozen=True)
class Param:
    parse: object
    default: object
    check: object = None  # callable(value) -> error message or None
    path: bool = False  # value names an input file


def _positive(v):
    vs = v if isinstance(v, tuple) else (v,)
    return None if all(x > 0 for x in vs) else "must be positive"


def _p_values(v):
    vs = v if isinstance(v, tuple) else (v,)
    if not vs:
        return "needs at least one value"
    return None if all(x > 1 for x in vs) else "p must exceed 1"


def _unit_open(v):
    return None if 0 < v < 1 else "must lie strictly between 0 and 1"


def _prob(v):
    return None if 0 < v <= 1 else "must lie in (0, 1]"


def _amplitude(v):
    return None if 0 <= v < 1 else "must lie in [0, 1)"


def _stencil(v):
    return None if v in STENCILS else f"must be one of {', '.join(STENCILS)}"


def _nonempty(v):
    return None if len(v) else "needs at least one value"


def _increasing(v):
    if len(v) < 2:
        return "needs at least two values"
    return None if all(b > a for a, b in zip(v, v[1:])) else "must be strictly increasing"


def _nested_counts(v):
    msg = _increasing(v)
    if msg:
        return msg
    if any(n < 3 for n in v) or any((b - 1) % (a - 1) for a, b in zip(v, v[1:])):
        return "grid point counts must be nested (n_{i+1} - 1 divisible by n_i - 1)"
    return None


def _dims(v):
    return None if v and all(n in (2, 3) for n in v) else "dimensions must be 2 or 3"


def _gasket_level(v):
    if v < 0:
        return "must be nonnegative"
    return None


SCHEMA = {
    "axioms-check": {
        "trials": Param(_int, 1000, _positive),
        "p": Param(_floats, (2.0,), _p_values),
        "vertices": Param(_int, 50, lambda v: None if v >= 3 else "needs at least 3 vertices"),
        "edge_prob": Param(_float, 0.3, _prob),
        "n_values": Param(_ints, (2, 3), _dims),
        "graph": Param(_str, "", path=True),
    },
    "eid-scalar": {
        "points": Param(_int, 4096, lambda v: None if v >= 16 else "needs at least 16 points"),
        "bins": Param(_int, 64, _positive),
        "amplitude": Param(_float, 0.5, _amplitude),
        "tolerance": Param(_float, 0.05, _positive),
        "cantor_level": Param(_int, 8, lambda v: None if 0 <= v <= 20 else "must lie in [0, 20]"),
        "eps_exponents": Param(_ints, (4, 5, 6, 7, 8), _increasing),
        "ladder": Param(_ints, (257, 513, 1025, 2049), _nested_counts),
        "match": Param(_float, 1.0, _positive),
        "decrease": Param(_float, 0.4, _unit_open),
        "floor": Param(_float, 0.5, _unit_open),
    },
    "eid-planar": {
        "ladder": Param(_ints, (17, 33, 65, 129), _nested_counts),
        "amplitude": Param(_float, 0.3, _amplitude),
        "match": Param(_float, 0.5, _positive),
        "cap_factor": Param(_float, 2.0, _positive),
        "decrease": Param(_float, 0.4, _unit_open),
        "floor": Param(_float, 0.5, _unit_open),
        "directions": Param(_int, 720, _positive),
    },
    "approx-demo": {
        "size": Param(_int, 512, lambda v: None if v >= 16 else "needs at least 16 points per axis"),
        "stencil": Param(_str, "king", _stencil),
        "radius": Param(_float, 0.75, _positive),
        "slab_width": Param(_float, 0.05, _positive),
        "epsilon": Param(_float, 0.25, _unit_open),
        "ladder": Param(_floats, (0.1, 0.3, 0.5, 0.7, 0.9), _increasing),
        "points_1d": Param(_int, 4001, lambda v: None if v >= 3 else "needs at least 3 points"),
        "cantor_level": Param(_int, 6, lambda v: None if 0 <= v <= 10 else "must lie in [0, 10]"),
    },
    "cones-demo": {
        "curves": Param(_int, 1000, _positive),
        "steps": Param(_int, 200, _positive),
        "grid": Param(_int, 65, lambda v: None if v >= 3 and v % 2 else "must be odd and at least 3"),
        "theta": Param(_float, math.pi / 3, lambda v: None if 0 < v < math.pi / 2 else "must lie in (0, pi/2)"),
        "epsilon": Param(_float, 0.2, lambda v: None if 0 < v < math.pi / 2 else "must lie in (0, pi/2)"),
        "directions": Param(_int, 720, lambda v: None if v >= 8 else "needs at least 8 directions"),
        "tolerance": Param(_float, 1e-3, _positive),
    },
    "currents-check": {
        "graphs": Param(_int, 100, _positive),
        "max_vertices": Param(_int, 50, lambda v: None if v >= 3 else "needs at least 3 vertices"),
        "tolerance": Param(_float, 1e-8, _positive),
        "grid": Param(_int, 17, lambda v: None if v >= 3 else "needs at least 3 points"),
    },
    "preiss": {
        "size": Param(_int, 257, lambda v: None if v >= 33 and v % 2 else "must be odd and at least 33"),
        "ks": Param(_ints, (4, 8, 16), _increasing),
        "radius": Param(_float, 0.45, _positive),
        "half_length": Param(_float, 0.25, _positive),
        "stencil": Param(_str, "knight-extended", _stencil),
        "slack": Param(_float, 0.05, _positive),
        "empty_k": Param(_bool, False),
    },
    "gasket-mdim": {
        "min_level": Param(_int, 3, _gasket_level),
        "max_level": Param(_int, 8, _gasket_level),
        "mdim_from": Param(_int, 6, _gasket_level),
        "taus": Param(_floats, (0.2, 0.1, 0.05, 0.01), _nonempty),
        "threshold": Param(_float, 0.05, _unit_open),
        "quantile": Param(_float, 0.99, _unit_open),
        "harmonic_tuples": Param(_int, 200, _positive),
        "random_tuples": Param(_int, 50, _positive),
        "alpha": Param(_float, 1.0, lambda v: None if 0 < v <= 1 else "must lie in (0, 1]"),
        "hausdorff_dim": Param(_float, math.log(3) / math.log(2), _positive),
        "level_cap": Param(_int, DEFAULT_MAX_LEVEL, _gasket_level),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    params: dict = field(default_factory=dict)
    source: Path | None = None
    inputs: list = field(default_factory=list)  # (path, sha256)

    def __getitem__(self, key):
        return self.params[key]


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _check_levels(params):
    cap = params["level_cap"]
    if cap > DEFAULT_MAX_LEVEL:
        raise ResourceError(f"parameters.level_cap: {cap} exceeds the built-in cap {DEFAULT_MAX_LEVEL}")
    for key in ("min_level", "max_level", "mdim_from"):
        if params[key] > cap:
            raise ResourceError(f"parameters.{key}: gasket level {params[key]} exceeds the cap {cap}")
    if params["min_level"] > params["max_level"]:
        raise ValidationError("parameters.min_level: must not exceed max_level")


def build_config(sections, source=None, experiment=None) -> ExperimentConfig:
    """Validate a ``{section: {key: text}}`` mapping and fill defaults."""
    for sec in sections:
        if sec not in ("experiment", "parameters"):
            raise ValidationError(f"{sec}: unknown section")
    head = dict(sections.get("experiment", {}))
    for key in head:
        if key not in ("name", "seed"):
            raise ValidationError(f"experiment.{key}: unknown key")
    if "name" in head:
        name = canonical_name(head["name"])
        if experiment is not None and canonical_name(experiment) != name:
            raise ValidationError(f"experiment.name: config names {name!r} but {experiment!r} was requested")
    elif experiment is not None:
        name = canonical_name(experiment)
    else:
        raise ValidationError("experiment.name: missing")
    try:
        seed = int(head.get("seed", "0"))
    except ValueError:
        raise ValidationError(f"experiment.seed: not an integer: {head['seed']!r}") from None
    if not 0 <= seed < 2 ** 64:
        raise ValidationError("experiment.seed: must fit in 64 unsigned bits")

    schema = SCHEMA[name]
    params = {k: p.default for k, p in schema.items()}
    base = source.parent if source is not None else Path.cwd()
    inputs = []
    for key, text in sections.get("parameters", {}).items():
        if key not in schema:
            raise ValidationError(f"parameters.{key}: unknown key for {name}")
        spec = schema[key]
        try:
            value = spec.parse(text)
        except ValueError as exc:
            raise ValidationError(f"parameters.{key}: cannot parse {text!r} ({exc})") from None
        if spec.check is not None:
            msg = spec.check(value)
            if msg:
                raise ValidationError(f"parameters.{key}: {msg}")
        if spec.path and value:
            path = (base / value).resolve()
            if not path.is_file():
                raise ValidationError(f"parameters.{key}: no such file {value!r}")
            value = path
        params[key] = value
    if name == "gasket-mdim":
        _check_levels(params)
    if source is not None:
        inputs.append((str(source), file_digest(source)))
    for key, spec in schema.items():
        if spec.path and params[key]:
            inputs.append((str(params[key]), file_digest(params[key])))
    return ExperimentConfig(name, seed, params, source, inputs)


def parse_config_text(text, source=None, experiment=None) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True, empty_lines_in_values=False)
    cp.optionxform = str  # keys are case sensitive
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"malformed config: {exc}") from None
    sections = {s: dict(cp.items(s, raw=True)) for s in cp.sections()}
    if cp.defaults():
        raise ValidationError("DEFAULT: section is not supported")
    return build_config(sections, source, experiment)


def parse_config(path, experiment=None) -> ExperimentConfig:
    path = Path(path).resolve()
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError:
        raise ValidationError(f"{path}: config must be UTF-8") from None
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    return parse_config_text(text, path, experiment)
