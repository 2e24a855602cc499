"""Scenario files: INI text with [scenario], [parameters] and optional [sweep].

Example::

    [scenario]
    name = herding-demo
    kind = homogeneous
    output_dir = runs/herding-demo

    [parameters]
    d = 0.2
    t_end = 100.0

    [sweep]
    axis = d
    values = [0.1, 0.2, 0.3]

Values are read with :func:`ast.literal_eval`; anything that is not a
Python literal stays a string (profiles such as ``theta = 0.1 / rho``).
Unknown sections and keys are rejected.
"""

from __future__ import annotations

import ast
import configparser
import math
from dataclasses import dataclass, field, replace

from ..errors import ConfigurationError
from ..expressions import Profile

KINDS = (
    "equilibrium",
    "homogeneous",
    "particles",
    "kinetic",
    "macro",
    "phase_sweep",
    "closure_compare",
)

_INF = math.inf


@dataclass(frozen=True)
class Param:
    kind: str  # float, int, str, expr, floats
    default: object = None
    low: float = -_INF
    high: float = _INF
    low_open: bool = False
    high_open: bool = False
    choices: tuple = ()
    required: bool = False
    help: str = ""

    def range_text(self) -> str:
        if self.choices:
            return "{" + ", ".join(self.choices) + "}"
        lo = "-∞" if self.low == -_INF else _fmt(self.low)
        hi = "∞" if self.high == _INF else _fmt(self.high)
        left = "(" if self.low_open or self.low == -_INF else "["
        right = ")" if self.high_open or self.high == _INF else "]"
        return f"{left}{lo}, {hi}{right}"

    def contains(self, x: float) -> bool:
        if self.low_open and not x > self.low:
            return False
        if not self.low_open and not x >= self.low:
            return False
        if self.high_open and not x < self.high:
            return False
        return self.high_open or x <= self.high


def _fmt(v):
    return repr(int(v)) if float(v).is_integer() else repr(float(v))


def _positive(default, **kw):
    return Param("float", default, 0.0, low_open=True, **kw)


def _count(default, low=1, **kw):
    return Param("int", default, low, **kw)


_COMMON = {
    "seed": Param("int", 0, 0, help="RNG seed (recorded in every manifest)"),
}

_D = _positive(0.2, help="noise level d")
_N = Param("int", 2, 1, 3, help="sphere dimension n (decisions on S^{n-1})")
_STRENGTH = Param("float", 1.0, 0.0, help="interaction strength s")

SCHEMAS = {
    "equilibrium": {
        "d": _D,
        "n": _N,
        "interaction_strength": _STRENGTH,
        "grid_nodes": _count(None, 3, help="decision nodes (default 256 circle, 129 sphere)"),
        "damping": Param("float", 0.5, 0.0, 1.0, low_open=True, help="fixed-point damping α"),
        "tol": _positive(1e-10, help="L1 stopping tolerance"),
        "max_iter": _count(10_000, help="iteration budget"),
        "init": Param("str", "vmf", choices=("vmf", "uniform", "perturbed"), help="initial guess"),
        "init_kappa": Param("float", 1.0, 0.0, help="concentration of the VMF initial guess"),
    },
    "homogeneous": {
        "d": _D,
        "n": _N,
        "interaction_strength": _STRENGTH,
        "grid_nodes": _count(None, 3, help="decision nodes (default 256 circle, 129 sphere)"),
        "dt": _positive(None, help="time step (default: the scheme's bound)"),
        "t_end": Param("float", 50.0, 0.0, help="final time"),
        "record_every": _count(100, help="steps between diagnostics rows"),
        "scheme": Param(
            "str", "SemiImplicitDiffusion",
            choices=("SemiImplicitDiffusion", "ExplicitFluxLimited"), help="time stepping"),
        "init": Param("str", "perturbed", choices=("perturbed", "vmf", "uniform"),
                      help="initial density"),
        "init_kappa": Param("float", 3.0, 0.0, help="concentration when init = vmf"),
        "perturbation": Param("float", 0.1, 0.0, 1.0, high_open=True,
                              help="cosine amplitude when init = perturbed"),
    },
    "particles": {
        "d": Param("float", 0.2, 0.0, help="noise level d"),
        "n": Param("int", 2, 2, 3, help="sphere dimension n"),
        "n_agents": _count(10_000, help="number of agents N"),
        "interaction_strength": _STRENGTH,
        "dt": _positive(1e-3, help="time step"),
        "t_end": Param("float", 10.0, 0.0, help="final time"),
        "kernel": Param("str", "Global", choices=("Global", "None"), help="spatial kernel"),
        "record_every": _count(10, help="steps between diagnostics rows"),
        "init": Param("str", "vmf", choices=("vmf", "uniform"), help="initial decisions"),
        "init_kappa": Param("float", 0.0, 0.0,
                            help="VMF concentration of the initial decisions (0 = κ_d)"),
        "histogram_nodes": _count(64, 3, help="cells of the final empirical density"),
    },
    "kinetic": {
        "d": _D,
        "epsilon": _positive(0.1, help="scaling parameter ε"),
        "x_dim": Param("int", 1, 1, 2, help="configuration dimension m"),
        "x_cells": _count(128, 4, help="cells per configuration axis"),
        "y_nodes": _count(128, 3, help="angles on the decision circle"),
        "dt": _positive(None, help="time step (default 0.5 Δx)"),
        "t_end": Param("float", 0.5, 0.0, help="final time"),
        "records": _count(11, 2, help="number of diagnostics rows"),
        "rho_amplitude": Param("float", 0.3, 0.0, 1.0, high_open=True,
                               help="ρ0 = 1 + a cos(2πx)"),
        "angle_amplitude": Param("float", 0.0, help="Ω0 angle = a sin(2πx_last)"),
    },
    "macro": {
        "d": _D,
        "b": Param("expr", required=True, help="b(ρ), expression in rho"),
        "theta": Param("expr", required=True, help="Θ(ρ), expression in rho"),
        "x_dim": Param("int", 1, 1, 2, help="configuration dimension m"),
        "x_cells": _count(256, 4, help="cells per configuration axis"),
        "t_end": Param("float", 0.5, 0.0, help="final time"),
        "records": _count(11, 2, help="number of diagnostics rows"),
        "rho_amplitude": Param("float", 0.2, 0.0, 1.0, high_open=True,
                               help="ρ0 = 1 + a cos(2πx)"),
        "angle_amplitude": Param("float", 0.3, help="Ω0 angle = a sin(2πx_last)"),
        "table_samples": _count(256, 4, help="nodes of the c(ρ) table"),
        "rho_max": _positive(10.0, help="upper end of the c(ρ) table"),
    },
    "phase_sweep": {
        "n": _N,
        "interaction_strength": Param("float", 1.0, 0.0, low_open=True,
                                      help="s; the sweep uses d_eff = d / s"),
        "d_min": _positive(0.05, help="smallest d"),
        "d_max": _positive(0.95, help="largest d"),
        "points": _count(19, help="number of d values"),
    },
    "closure_compare": {
        "d": _D,
        "b": Param("expr", required=True, help="b(ρ), expression in rho"),
        "theta": Param("expr", required=True, help="Θ(ρ), expression in rho"),
        "epsilons": Param("floats", (0.1, 0.05, 0.025), 0.0, low_open=True,
                          help="list of ε values"),
        "x_cells": _count(256, 4, help="configuration cells (one dimension)"),
        "y_nodes": _count(128, 3, help="angles on the decision circle"),
        "t_end": Param("float", 0.5, 0.0, low_open=True, help="final time"),
        "samples": _count(5, 1, help="comparison times (t_end included)"),
        "rho_amplitude": Param("float", 0.3, 0.0, 1.0, high_open=True,
                               help="ρ0 = 1 + a cos(2πx)"),
    },
}
for _schema in SCHEMAS.values():
    _schema.update(_COMMON)

_SECTIONS = {
    "scenario": {"name", "kind", "output_dir"},
    "parameters": None,
    "sweep": {"axis", "values"},
}


@dataclass(frozen=True)
class Scenario:
    name: str
    kind: str
    parameters: dict
    output_dir: str = "."
    sweep_axis: str | None = None
    sweep_values: tuple = field(default=())

    def with_parameter(self, key, value) -> "Scenario":
        params = dict(self.parameters)
        params[key] = value
        return validate(replace(self, parameters=params))

    def echo(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "output_dir": self.output_dir,
            "parameters": dict(self.parameters),
        }


def _literal(text: str):
    text = text.strip()
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _coerce(key, param: Param, value):
    def bad(why=None):
        msg = f"parameter {key!r} = {value!r} "
        msg += why or f"is out of range {param.range_text()}"
        raise ConfigurationError(msg)

    if param.kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad(f"must be a number in {param.range_text()}")
        value = float(value)
        if not math.isfinite(value) or not param.contains(value):
            bad()
        return value
    if param.kind == "int":
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            bad(f"must be an integer in {param.range_text()}")
        if not param.contains(value):
            bad()
        return value
    if param.kind == "str":
        if not isinstance(value, str) or value not in param.choices:
            bad()
        return value
    if param.kind == "expr":
        if isinstance(value, bool) or not isinstance(value, (str, int, float)):
            bad("must be a number or an expression in rho")
        Profile(value)  # raises ConfigurationError on bad syntax
        return value
    if param.kind == "floats":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            value = (value,)
        if not isinstance(value, (list, tuple)) or not value:
            bad("must be a non-empty list of numbers")
        return tuple(_coerce(key, replace(param, kind="float"), v) for v in value)
    raise AssertionError(param.kind)


def validate(s: Scenario) -> Scenario:
    """Check every parameter of ``s`` against its schema and fill defaults."""
    if s.kind not in SCHEMAS:
        raise ConfigurationError(f"unknown scenario kind {s.kind!r}; expected one of {', '.join(KINDS)}")
    schema = SCHEMAS[s.kind]
    unknown = sorted(set(s.parameters) - set(schema))
    if unknown:
        raise ConfigurationError(
            f"unknown parameters for kind {s.kind!r}: {', '.join(unknown)} "
            f"(allowed: {', '.join(sorted(schema))})"
        )
    missing = sorted(k for k, p in schema.items() if p.required and s.parameters.get(k) is None)
    if missing:
        raise ConfigurationError(
            f"kind {s.kind!r} requires parameters: {', '.join(missing)}"
        )
    params = {}
    for key, param in schema.items():
        value = s.parameters.get(key, param.default)
        params[key] = None if value is None else _coerce(key, param, value)
    if s.kind == "phase_sweep" and not params["d_min"] <= params["d_max"]:
        raise ConfigurationError(
            f"parameter 'd_min' = {params['d_min']!r} must not exceed 'd_max' = {params['d_max']!r}"
        )
    if s.sweep_axis is not None:
        param = schema.get(s.sweep_axis)
        if param is None or param.kind not in ("float", "int"):
            numeric = sorted(k for k, p in schema.items() if p.kind in ("float", "int"))
            raise ConfigurationError(
                f"sweep axis {s.sweep_axis!r} is not a numeric parameter of {s.kind!r} "
                f"(numeric: {', '.join(numeric)})"
            )
        values = tuple(_coerce(s.sweep_axis, param, v) for v in s.sweep_values)
        s = replace(s, sweep_values=values)
    return replace(s, parameters=params)


def parse_config(text: str, kind: str | None = None) -> Scenario:
    """Parse and validate a scenario document.

    ``kind`` (from the command line) fills in or must agree with the
    document's ``[scenario] kind``.
    """
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed scenario file: {exc}") from None
    unknown = sorted(set(parser.sections()) - set(_SECTIONS))
    if unknown:
        raise ConfigurationError(
            f"unknown sections: {', '.join(unknown)} (allowed: {', '.join(_SECTIONS)})"
        )
    for section, allowed in _SECTIONS.items():
        if allowed is not None and parser.has_section(section):
            extra = sorted(set(parser[section]) - allowed)
            if extra:
                raise ConfigurationError(
                    f"unknown keys in [{section}]: {', '.join(extra)} (allowed: {', '.join(sorted(allowed))})"
                )
    head = parser["scenario"] if parser.has_section("scenario") else {}
    doc_kind = head.get("kind", "").strip() or None
    if doc_kind is not None:
        doc_kind = doc_kind.replace("-", "_")
    if kind is not None and doc_kind is not None and kind != doc_kind:
        raise ConfigurationError(f"scenario kind {doc_kind!r} does not match command {kind!r}")
    final_kind = kind or doc_kind
    if final_kind is None:
        raise ConfigurationError("scenario kind missing: set [scenario] kind")
    params = {}
    if parser.has_section("parameters"):
        params = {k: _literal(v) for k, v in parser["parameters"].items()}
    axis, values = None, ()
    if parser.has_section("sweep"):
        sw = parser["sweep"]
        if "axis" not in sw:
            raise ConfigurationError("[sweep] needs an 'axis' key")
        axis = sw["axis"].strip()
        raw = _literal(sw.get("values", "[]"))
        values = tuple(raw) if isinstance(raw, (list, tuple)) else (raw,)
    scenario = Scenario(
        name=head.get("name", final_kind).strip(),
        kind=final_kind,
        parameters=params,
        output_dir=head.get("output_dir", final_kind).strip(),
        sweep_axis=axis,
        sweep_values=values,
    )
    return validate(scenario)


def load_config(path, kind: str | None = None) -> Scenario:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc.strerror}") from None
    return parse_config(text, kind)


def defaults_table() -> str:
    """Markdown table of every parameter, its default and admissible range."""
    lines = ["| kind | parameter | default | range | meaning |", "|---|---|---|---|---|"]
    for kind in KINDS:
        for key, p in SCHEMAS[kind].items():
            default = "required" if p.required else ("auto" if p.default is None else repr(p.default))
            rng = "expression" if p.kind == "expr" else p.range_text()
            lines.append(f"| {kind} | `{key}` | {default} | {rng} | {p.help} |")
    return "\n".join(lines)
