"""Experiment configuration: YAML schema, validation and built-in experiments.

A configuration is a mapping with these top-level keys (``version`` is
mandatory, everything else has defaults)::

    version: 1
    name: example3
    seed: 0
    output: runs/example3          # optional; CLI --out wins
    space:
      axes:
        - {kind: interval, lo: 0, hi: pi/2, rule: trapezoid}
      resolution: 257              # int, or one int per axis
    kernel:
      kind: rhombus_symdiff        # two_rod_area | sized_two_rod_area | rhombus_symdiff | custom-tabulated
      parameters: {}               # L for sized_two_rod_area, path for custom-tabulated
    solver:
      damping: 0.5
      max_iterations: 10000
      tolerance: 1.0e-10
      init: uniform                # uniform | perturbed | tabulated
      init_path: null              # density file, for init: tabulated
      amplitude: 0.1
      acceleration: anderson       # none | anderson
      anderson_memory: 5
      point_seeds: 0               # dense kernels: also solve from the best point-mass seeds
    b_schedule: [1, 10, 100]
    analyses:
      validate_kernel: true
      branches: {example: 1, b_schedule: [10, 50, 200, 1000], scan_resolution: 2001, L: 1}
      concentration:
        eps: 0.1
        tau: null                  # zero-set threshold, default 1e-3 * sup_norm
        candidates:
          - {label: top, point: [pi/2]}
          - {label: M+1, level: 1}
          - {label: picked, indices: [0, 5]}
      selection:
        - {map: rhombus, q: pi/4, c: null, eps: 0.03}
        - {map: two_rod, c: 1.2, eps: 0.3}
        - {map: identity, of: 0, c: 1.5}
      zeroset: {tau: 1.0e-6}

Numbers may be written as arithmetic in ``pi`` (``pi/2``, ``2*pi``).
"""

from __future__ import annotations

import ast
import copy
import math
import operator
from pathlib import Path

import yaml

SCHEMA_VERSION = 1

_TOP_KEYS = {"version", "name", "seed", "output", "space", "kernel", "solver", "b_schedule", "analyses"}
_SOLVER_KEYS = {
    "damping", "max_iterations", "tolerance", "init", "init_path", "amplitude",
    "acceleration", "anderson_memory", "point_seeds",
}
_ANALYSIS_KEYS = {"validate_kernel", "branches", "concentration", "selection", "zeroset"}


class SchemaError(ValueError):
    """Malformed configuration; ``path`` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
        self.message = message


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
           ast.Pow: operator.pow}


def _eval_expr(node):
    if isinstance(node, ast.Expression):
        return _eval_expr(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_expr(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_expr(node.left), _eval_expr(node.right))
    raise ValueError("unsupported expression")


def number(value, path: str) -> float:
    """A float from a YAML scalar; strings may be arithmetic in ``pi``."""
    if isinstance(value, bool):
        raise SchemaError(path, "expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(_eval_expr(ast.parse(value.strip(), mode="eval")))
        except (SyntaxError, ValueError, ZeroDivisionError):
            pass
    raise SchemaError(path, f"expected a number, got {value!r}")


def integer(value, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise SchemaError(path, f"must be >= {minimum}, got {value}")
    return int(value)


def _mapping(value, path: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected a mapping, got {type(value).__name__}")
    return value


def _known(d: dict, keys: set, path: str):
    for k in d:
        if k not in keys:
            raise SchemaError(f"{path}.{k}" if path else str(k), "unknown field")


def _schedule(value, path: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(path, "expected a list of numbers")
    out = [number(v, f"{path}[{i}]") for i, v in enumerate(value)]
    for i, v in enumerate(out):
        if v < 0:
            raise SchemaError(f"{path}[{i}]", "b values must be >= 0")
        if i and v <= out[i - 1]:
            raise SchemaError(path, f"must be strictly increasing (entry {i}: {v} after {out[i - 1]})")
    return out


def _axis(d, path: str) -> dict:
    d = _mapping(d, path)
    kind = d.get("kind")
    if kind == "periodic":
        _known(d, {"kind", "period", "lo", "hi"}, path)
        lo = number(d.get("lo", 0.0), f"{path}.lo")
        if "period" in d:
            hi = lo + number(d["period"], f"{path}.period")
        else:
            hi = number(d.get("hi", 2 * math.pi), f"{path}.hi")
        if not hi > lo:
            raise SchemaError(path, "period must be > 0")
        return {"kind": "periodic", "lo": lo, "hi": hi}
    if kind == "interval":
        _known(d, {"kind", "lo", "hi", "rule"}, path)
        if "lo" not in d or "hi" not in d:
            raise SchemaError(path, "interval axes need lo and hi")
        lo = number(d["lo"], f"{path}.lo")
        hi = number(d["hi"], f"{path}.hi")
        if not hi > lo:
            raise SchemaError(path, f"interval needs lo < hi, got [{lo}, {hi}]")
        rule = d.get("rule", "trapezoid")
        if rule not in ("trapezoid", "gauss"):
            raise SchemaError(f"{path}.rule", f"unknown quadrature rule {rule!r}")
        return {"kind": "interval", "lo": lo, "hi": hi, "rule": rule}
    raise SchemaError(f"{path}.kind", f"expected 'periodic' or 'interval', got {kind!r}")


def _candidate(d, path: str) -> dict:
    d = _mapping(d, path)
    _known(d, {"label", "level", "point", "indices", "components"}, path)
    forms = [k for k in ("level", "point", "indices", "components") if k in d]
    if len(forms) != 1:
        raise SchemaError(path, "give exactly one of level, point, indices, components")
    out = {"label": str(d.get("label", ""))}
    form = forms[0]
    if form == "level":
        out["level"] = number(d["level"], f"{path}.level")
    elif form == "point":
        pt = d["point"]
        if not isinstance(pt, list):
            pt = [pt]
        out["point"] = [number(v, f"{path}.point[{i}]") for i, v in enumerate(pt)]
    elif form == "indices":
        idx = d["indices"]
        if not isinstance(idx, list) or not idx:
            raise SchemaError(f"{path}.indices", "expected a nonempty list of grid indices")
        out["indices"] = [integer(v, f"{path}.indices[{i}]", 0) for i, v in enumerate(idx)]
    else:
        out["components"] = bool(d["components"])
    return out


def _selection(d, path: str, index: int) -> dict:
    d = _mapping(d, path)
    kind = d.get("map")
    if kind == "two_rod":
        _known(d, {"map", "c", "eps", "tau"}, path)
        return {
            "map": kind,
            "c": number(d.get("c", 1.2), f"{path}.c"),
            "eps": number(d.get("eps", 0.3), f"{path}.eps"),
            "tau": number(d.get("tau", 1e-12), f"{path}.tau"),
        }
    if kind == "rhombus":
        _known(d, {"map", "q", "c", "eps"}, path)
        if "q" not in d:
            raise SchemaError(f"{path}.q", "missing")
        c = d.get("c")
        return {
            "map": kind,
            "q": number(d["q"], f"{path}.q"),
            "c": None if c is None else number(c, f"{path}.c"),
            "eps": number(d.get("eps", 0.03), f"{path}.eps"),
        }
    if kind == "identity":
        _known(d, {"map", "of", "c"}, path)
        of = integer(d.get("of", 0), f"{path}.of", 0)
        if of >= index:
            raise SchemaError(f"{path}.of", "must refer to an earlier selection entry")
        return {"map": kind, "of": of, "c": number(d.get("c", 1.5), f"{path}.c")}
    raise SchemaError(f"{path}.map", f"expected two_rod, rhombus or identity, got {kind!r}")


def validate_config(raw) -> dict:
    """Check ``raw`` against the schema and return a normalized copy.

    Raises
    ------
    SchemaError
        With the dotted path of the first offending field.
    """
    raw = _mapping(raw, "<root>")
    _known(raw, _TOP_KEYS, "")
    if "version" not in raw:
        raise SchemaError("version", "missing (mandatory)")
    if raw["version"] != SCHEMA_VERSION:
        raise SchemaError("version", f"unsupported version {raw['version']!r}, expected {SCHEMA_VERSION}")
    cfg = {"version": SCHEMA_VERSION, "name": str(raw.get("name", "experiment"))}
    cfg["seed"] = integer(raw.get("seed", 0), "seed", 0)
    out = raw.get("output")
    if out is not None and not isinstance(out, str):
        raise SchemaError("output", "expected a path string")
    cfg["output"] = out

    space = _mapping(raw.get("space"), "space")
    _known(space, {"axes", "resolution"}, "space")
    axes = space.get("axes")
    if not isinstance(axes, list) or not axes:
        raise SchemaError("space.axes", "expected a nonempty list of axes")
    cfg_axes = [_axis(a, f"space.axes[{i}]") for i, a in enumerate(axes)]
    res = space.get("resolution")
    if res is not None:
        if isinstance(res, list):
            if len(res) != len(cfg_axes):
                raise SchemaError("space.resolution", "one resolution per axis is required")
            res = [integer(r, f"space.resolution[{i}]", 2) for i, r in enumerate(res)]
        else:
            res = integer(res, "space.resolution", 2)
    cfg["space"] = {"axes": cfg_axes, "resolution": res}

    kernel = _mapping(raw.get("kernel"), "kernel")
    _known(kernel, {"kind", "parameters"}, "kernel")
    kind = kernel.get("kind")
    if kind not in ("two_rod_area", "sized_two_rod_area", "rhombus_symdiff", "custom-tabulated"):
        raise SchemaError("kernel.kind", f"unknown kernel kind {kind!r}")
    params = dict(_mapping(kernel.get("parameters"), "kernel.parameters"))
    if "L" in params:
        params["L"] = number(params["L"], "kernel.parameters.L")
        if not params["L"] > 0:
            raise SchemaError("kernel.parameters.L", "must be > 0")
    if kind == "custom-tabulated" and not isinstance(params.get("path"), str):
        raise SchemaError("kernel.parameters.path", "tabulated kernels need a matrix file path")
    cfg["kernel"] = {"kind": kind, "parameters": params}

    solver = _mapping(raw.get("solver"), "solver")
    _known(solver, _SOLVER_KEYS, "solver")
    s = {}
    if "damping" in solver:
        s["damping"] = number(solver["damping"], "solver.damping")
        if not 0 < s["damping"] <= 1:
            raise SchemaError("solver.damping", "must lie in (0, 1]")
    if "max_iterations" in solver:
        s["max_iterations"] = integer(solver["max_iterations"], "solver.max_iterations", 1)
    if "tolerance" in solver:
        s["tolerance"] = number(solver["tolerance"], "solver.tolerance")
        if not s["tolerance"] > 0:
            raise SchemaError("solver.tolerance", "must be > 0")
    if "init" in solver:
        if solver["init"] not in ("uniform", "perturbed", "tabulated"):
            raise SchemaError("solver.init", f"expected uniform, perturbed or tabulated, got {solver['init']!r}")
        s["init"] = solver["init"]
    if s.get("init") == "tabulated":
        if not isinstance(solver.get("init_path"), str):
            raise SchemaError("solver.init_path", "tabulated init needs a density file path")
        s["init_path"] = solver["init_path"]
    if "amplitude" in solver:
        s["amplitude"] = number(solver["amplitude"], "solver.amplitude")
    if "acceleration" in solver:
        if solver["acceleration"] not in ("none", "anderson"):
            raise SchemaError("solver.acceleration", "expected none or anderson")
        s["acceleration"] = solver["acceleration"]
    if "anderson_memory" in solver:
        s["anderson_memory"] = integer(solver["anderson_memory"], "solver.anderson_memory", 1)
    if "point_seeds" in solver:
        s["point_seeds"] = integer(solver["point_seeds"], "solver.point_seeds", 0)
    cfg["solver"] = s

    cfg["b_schedule"] = _schedule(raw.get("b_schedule", []), "b_schedule")

    an = _mapping(raw.get("analyses"), "analyses")
    _known(an, _ANALYSIS_KEYS, "analyses")
    a = {"validate_kernel": bool(an.get("validate_kernel", True))}
    if an.get("branches") is not None:
        br = _mapping(an["branches"], "analyses.branches")
        _known(br, {"example", "b_schedule", "scan_resolution", "L"}, "analyses.branches")
        ex = br.get("example")
        if ex not in (1, 2):
            raise SchemaError("analyses.branches.example", "expected 1 or 2")
        a["branches"] = {
            "example": ex,
            "b_schedule": _schedule(br.get("b_schedule", []), "analyses.branches.b_schedule"),
            "scan_resolution": integer(br.get("scan_resolution", 2001), "analyses.branches.scan_resolution", 3),
            "L": number(br.get("L", 1.0), "analyses.branches.L"),
        }
    if an.get("concentration") is not None:
        co = _mapping(an["concentration"], "analyses.concentration")
        _known(co, {"eps", "tau", "candidates", "bl"}, "analyses.concentration")
        eps = number(co.get("eps", 0.1), "analyses.concentration.eps")
        if not eps > 0:
            raise SchemaError("analyses.concentration.eps", "must be > 0")
        cands = co.get("candidates")
        if not isinstance(cands, list) or not cands:
            raise SchemaError("analyses.concentration.candidates", "expected a nonempty list")
        tau = co.get("tau")
        a["concentration"] = {
            "eps": eps,
            "tau": None if tau is None else number(tau, "analyses.concentration.tau"),
            "bl": bool(co.get("bl", True)),
            "candidates": [_candidate(c, f"analyses.concentration.candidates[{i}]") for i, c in enumerate(cands)],
        }
    if an.get("selection") is not None:
        sel = an["selection"]
        if not isinstance(sel, list):
            raise SchemaError("analyses.selection", "expected a list of selection specs")
        a["selection"] = [_selection(d, f"analyses.selection[{i}]", i) for i, d in enumerate(sel)]
    if an.get("zeroset") is not None:
        zs = _mapping(an["zeroset"], "analyses.zeroset")
        _known(zs, {"tau"}, "analyses.zeroset")
        tau = zs.get("tau")
        a["zeroset"] = {"tau": None if tau is None else number(tau, "analyses.zeroset.tau")}
    cfg["analyses"] = a
    return cfg


def load_config(path) -> dict:
    """Read and validate a YAML config file (or a built-in name)."""
    p = Path(path)
    if not p.exists() and str(path) in BUILTIN:
        return validate_config(copy.deepcopy(BUILTIN[str(path)]))
    try:
        raw = yaml.safe_load(p.read_text())
    except FileNotFoundError:
        raise SchemaError("<file>", f"no such config file or built-in experiment: {path}") from None
    except yaml.YAMLError as exc:
        raise SchemaError("<file>", f"not valid YAML: {exc}") from None
    return validate_config(raw)


def dump_config(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None)


BUILTIN = {
    "example1": {
        "version": 1,
        "name": "example1",
        "seed": 0,
        "space": {"axes": [{"kind": "periodic"}, {"kind": "periodic"}], "resolution": 256},
        "kernel": {"kind": "two_rod_area"},
        "solver": {"init": "perturbed", "amplitude": 0.1, "acceleration": "anderson"},
        "b_schedule": [1, 2, 5, 10, 20, 50, 100, 200],
        "analyses": {
            "validate_kernel": True,
            "branches": {"example": 1, "b_schedule": [1, 5, 10, 50, 100, 200, 1000]},
            "concentration": {
                "eps": 0.1,
                "candidates": [
                    {"label": "area 0", "level": 0},
                    {"label": "area 1/2 (+)", "level": 1},
                    {"label": "area 1/2 (-)", "level": -1},
                ],
            },
            "selection": [
                {"map": "two_rod", "c": 1.2, "eps": 0.3},
                {"map": "identity", "of": 0, "c": 1.5},
            ],
            "zeroset": {"tau": None},
        },
    },
    "example2": {
        "version": 1,
        "name": "example2",
        "seed": 0,
        "space": {
            "axes": [
                {"kind": "interval", "lo": 0, "hi": 1, "rule": "gauss"},
                {"kind": "interval", "lo": 0, "hi": 1, "rule": "gauss"},
                {"kind": "periodic"},
            ],
            "resolution": [64, 64, 256],
        },
        "kernel": {"kind": "sized_two_rod_area", "parameters": {"L": 1}},
        "solver": {"init": "perturbed", "amplitude": 0.1, "acceleration": "anderson"},
        "b_schedule": [1, 10, 50, 200, 1000],
        "analyses": {
            "validate_kernel": True,
            "branches": {"example": 2, "b_schedule": [10, 50, 200, 1000]},
            "concentration": {"eps": 0.05, "bl": False, "candidates": [{"label": "area 0", "level": 0}]},
        },
    },
    "example3": {
        "version": 1,
        "name": "example3",
        "seed": 0,
        "space": {"axes": [{"kind": "interval", "lo": 0, "hi": "pi/2"}], "resolution": 257},
        "kernel": {"kind": "rhombus_symdiff"},
        "solver": {"init": "uniform", "acceleration": "anderson", "point_seeds": 3},
        "b_schedule": [1, 2, 5, 10, 20, 50, 100, 200, 500, 1000],
        "analyses": {
            "validate_kernel": True,
            "concentration": {"eps": 0.1, "candidates": [{"label": "square", "point": ["pi/2"]}]},
            "selection": [
                {"map": "rhombus", "q": "pi/4", "eps": 0.03},
                {"map": "rhombus", "q": "3*pi/8", "eps": 0.03},
                {"map": "identity", "of": 0, "c": 1.5},
            ],
            "zeroset": {"tau": 1e-6},
        },
    },
}
