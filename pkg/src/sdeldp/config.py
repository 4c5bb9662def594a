"""Run configuration: TOML loading, overrides, validation, resolution.

A run file has a ``[run]`` section naming the experiment, a ``[model]``
section (built-in name or inline expression field), and one section per
experiment carrying its parameters.  ``resolve`` validates everything
before any computation starts and materializes defaults, producing a plain
nested dict of primitives; ``serialize`` turns that dict back into
canonical TOML so a run can be reproduced byte-for-byte from its embedded
resolved config.
"""

from __future__ import annotations

from typing import Any, Dict

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from . import expr as expr_mod
from .errors import ValidationError
from .fields import get_model, truncate

__all__ = ["load_config", "apply_overrides", "resolve", "serialize",
           "build_field", "EXPERIMENTS"]

EXPERIMENTS = ("check", "skeleton", "simulate", "rate", "ldp", "lemma1", "exit")


def load_config(path):
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ValidationError(f"config {path} does not parse: {e}") from None


def apply_overrides(cfg, pairs):
    """Apply ``--set section.key=value`` pairs; values parse as TOML literals."""
    out = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.items()}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"override {pair!r} must look like section.key=value")
        key, raw = pair.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ValidationError(f"override key {key!r} must be section.key")
        section, name = parts
        try:
            val = tomllib.loads(f"v = {raw}")["v"]
        except tomllib.TOMLDecodeError:
            val = raw  # bare string
        out.setdefault(section, {})
        out[section][name] = val
    return out


# ---------------------------------------------------------------------------
# schema helpers

class _Ctx:
    def __init__(self, section, data):
        self.section = section
        self.data = dict(data)
        self.resolved: Dict[str, Any] = {}

    def error(self, name, msg):
        raise ValidationError(f"field '{self.section}.{name}': {msg}")

    def take(self, name, kind, default=..., check=None):
        if name in self.data:
            v = self.data.pop(name)
        elif default is ...:
            self.error(name, "required")
        else:
            v = default
        v = _coerce(self, name, v, kind)
        if check is not None:
            err = check(v)
            if err:
                self.error(name, err)
        self.resolved[name] = v
        return v

    def finish(self):
        if self.data:
            bad = sorted(self.data)[0]
            self.error(bad, "unknown key")
        return self.resolved


def _coerce(ctx, name, v, kind):
    if kind == "int":
        if isinstance(v, bool) or not isinstance(v, int):
            ctx.error(name, f"must be an integer, got {v!r}")
        return v
    if kind == "float":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            ctx.error(name, f"must be a number, got {v!r}")
        return float(v)
    if kind == "str":
        if not isinstance(v, str):
            ctx.error(name, f"must be a string, got {v!r}")
        return v
    if kind == "bool":
        if not isinstance(v, bool):
            ctx.error(name, f"must be true/false, got {v!r}")
        return v
    if kind == "floatlist":
        if isinstance(v, (int, float)) and not isinstance(v, bool):
            v = [v]
        if not isinstance(v, list) or not v or any(
                isinstance(c, bool) or not isinstance(c, (int, float)) for c in v):
            ctx.error(name, f"must be a nonempty list of numbers, got {v!r}")
        return [float(c) for c in v]
    if kind == "intlist":
        if not isinstance(v, list) or not v or any(
                isinstance(c, bool) or not isinstance(c, int) for c in v):
            ctx.error(name, f"must be a nonempty list of integers, got {v!r}")
        return list(v)
    if kind == "strlist":
        if not isinstance(v, list) or not v or any(not isinstance(c, str) for c in v):
            ctx.error(name, f"must be a nonempty list of strings, got {v!r}")
        return list(v)
    if kind == "nested_floatlist":
        if not isinstance(v, list) or not v:
            ctx.error(name, f"must be a nonempty list, got {v!r}")
        rows = []
        for row in v:
            if isinstance(row, (int, float)) and not isinstance(row, bool):
                rows.append([float(row)])
            elif isinstance(row, list) and row and all(
                    isinstance(c, (int, float)) and not isinstance(c, bool) for c in row):
                rows.append([float(c) for c in row])
            else:
                ctx.error(name, f"rows must be numbers or number lists, got {row!r}")
        return rows
    if kind == "strgrid":
        if not isinstance(v, list) or not v:
            ctx.error(name, f"must be a nonempty list, got {v!r}")
        rows = []
        for row in v:
            if isinstance(row, str):
                rows.append([row])
            elif isinstance(row, list) and row and all(isinstance(c, str) for c in row):
                rows.append(list(row))
            else:
                ctx.error(name, f"rows must be strings or string lists, got {row!r}")
        return rows
    raise AssertionError(kind)


def _positive(v):
    return None if v > 0 else f"must be > 0, got {v}"


def _nonneg(v):
    return None if v >= 0 else f"must be >= 0, got {v}"


def _pos_int(v):
    return None if v >= 1 else f"must be >= 1, got {v}"


# ---------------------------------------------------------------------------
# model and experiment resolution

def _resolve_model(data):
    ctx = _Ctx("model", data)
    name = ctx.take("name", "str")
    if name == "custom":
        ctx.take("d", "int", check=_pos_int)
        ctx.take("m", "int", check=_pos_int)
        ctx.take("drift", "strlist")
        ctx.take("diffusion", "strgrid")
        ctx.take("label", "str", default="custom")
    ctx.take("truncate_radius", "float", default=0.0, check=_nonneg)
    ctx.take("truncate_points", "int", default=4096, check=_pos_int)
    return ctx.finish()


def build_field(model_cfg):
    """Instantiate the coefficient field a resolved model section names."""
    if model_cfg["name"] == "custom":
        d, m = model_cfg["d"], model_cfg["m"]
        drift = model_cfg["drift"]
        diffusion = model_cfg["diffusion"]
        if len(drift) != d:
            raise ValidationError(f"field 'model.drift': need {d} expressions, got {len(drift)}")
        if len(diffusion) != d or any(len(r) != m for r in diffusion):
            raise ValidationError(f"field 'model.diffusion': must be a {d}x{m} grid")
        try:
            field = expr_mod.expression_field(d, m, drift, diffusion,
                                              label=model_cfg["label"])
        except expr_mod.ExpressionError as e:
            raise ValidationError(f"field 'model.drift/diffusion': {e}") from None
    else:
        field = get_model(model_cfg["name"])
    if model_cfg["truncate_radius"] > 0:
        field = truncate(field, model_cfg["truncate_radius"],
                         points_per_dim=model_cfg["truncate_points"])
    return field


def _x0_check(field):
    def check(v):
        if len(v) != field.d:
            return f"needs {field.d} components for this model, got {len(v)}"
        return None
    return check


def _resolve_check(ctx, field):
    kind = ctx.take("kind", "str", check=lambda v: None if v in (
        "modulus", "localized", "growth", "bounded-integrability",
        "local-integrability") else f"unknown check kind {v!r}")
    ctx.take("count", "int", default=1024, check=_pos_int)
    ctx.take("time_count", "int", default=16, check=_pos_int)
    ctx.take("radius", "float", default=1.0, check=_positive)
    ctx.take("gap_min", "float", default=1e-9, check=_positive)
    ctx.take("gap_max", "float", default=0.5, check=_positive)
    ctx.take("rmax", "float", default=100.0, check=_positive)
    ctx.take("envelope", "str", default="1")
    if kind in ("modulus", "localized", "growth"):
        ctx.take("modulus", "str")
    if kind == "localized":
        ctx.take("R", "float", default=1.0, check=_positive)
        ctx.take("c0", "float", default=0.5,
                 check=lambda v: None if 0 < v < 1 else f"must lie in (0,1), got {v}")
        ctx.take("drop_diffusion_square", "bool", default=False)
    if kind == "growth":
        ctx.take("K", "float", default=1.0, check=_positive)
    if kind == "local-integrability":
        ctx.take("R", "float", default=1.0, check=_positive)
    for name in ("modulus", "envelope"):
        if name in ctx.resolved:
            var = "t" if name == "envelope" else "u"
            try:
                expr_mod.compile_scalar_expression(ctx.resolved[name], var)
            except expr_mod.ExpressionError as e:
                ctx.error(name, str(e))


def _resolve_skeleton(ctx, field):
    ctx.take("x0", "floatlist", check=_x0_check(field))
    mode = ctx.take("mode", "str", default="flow", check=lambda v: None if v in (
        "flow", "euler", "gap") else f"unknown mode {v!r}")
    ctx.take("control", "str", default="zero")
    ctx.take("control_grid", "floatlist", default=[0.0, 1.0])
    ctx.take("control_values", "nested_floatlist", default=[[0.0], [0.0]])
    if mode == "flow":
        ctx.take("substeps", "int", default=1000, check=_pos_int)
    if mode in ("euler", "gap"):
        ctx.take("n", "int", check=_pos_int)
    if mode == "gap":
        ctx.take("reference_substeps", "int", default=10000, check=_pos_int)


def _resolve_simulate(ctx, field):
    ctx.take("x0", "floatlist", check=_x0_check(field))
    ctx.take("epsilon", "float", check=_nonneg)
    ctx.take("n", "int", check=_pos_int)
    ctx.take("replica", "int", default=0, check=_nonneg)


def _resolve_rate(ctx, field):
    ctx.take("x0", "floatlist", check=_x0_check(field))
    targets = ctx.take("targets", "nested_floatlist")
    for y in targets:
        if len(y) != field.d:
            ctx.error("targets", f"every target needs {field.d} components, got {y}")
    ctx.take("N", "int", default=128, check=_pos_int)
    ctx.take("penalties", "floatlist",
             default=[10.0 ** j for j in range(7)],
             check=lambda v: None if all(c > 0 for c in v) and all(
                 b > a for a, b in zip(v, v[1:])) else "must be positive and strictly increasing")
    ctx.take("max_iter", "int", default=2000, check=_pos_int)
    ctx.take("gtol", "float", default=1e-9, check=_positive)
    ctx.take("method", "str", default="lbfgs", check=lambda v: None if v in (
        "lbfgs", "gd") else f"unknown optimizer {v!r}")


def _event_from(ctx, field):
    kind = ctx.take("event", "str", check=lambda v: None if v in (
        "terminal-halfspace", "terminal-outside-ball", "sup-exit",
        "coupled-gap") else f"unknown event kind {v!r}")
    if kind == "terminal-halfspace":
        ctx.take("a", "floatlist", check=_x0_check(field))
        ctx.take("c", "float", default=0.0)
    elif kind == "terminal-outside-ball":
        ctx.take("y0", "floatlist", check=_x0_check(field))
        ctx.take("r", "float", check=_nonneg)
    elif kind == "sup-exit":
        ctx.take("R", "float", check=_positive)
    else:
        ctx.take("delta0", "float", check=_positive)
        ctx.take("n_fine", "int", check=_pos_int)


def _resolve_ldp(ctx, field):
    ctx.take("x0", "floatlist", check=_x0_check(field))
    _event_from(ctx, field)
    ctx.take("epsilons", "floatlist", check=lambda v: None if all(
        c > 0 for c in v) and all(b < a for a, b in zip(v, v[1:]))
        else "must be positive and strictly decreasing")
    ctx.take("n", "int", check=_pos_int)
    ctx.take("replicas", "int", check=_pos_int)
    if "rate_bound" in ctx.data:
        ctx.take("rate_bound", "float")


def _resolve_lemma1(ctx, field):
    ctx.take("x0", "floatlist", check=_x0_check(field))
    ctx.take("epsilon", "float", check=_positive)
    ctx.take("delta0", "float", check=_positive)
    ns = ctx.take("ns", "intlist", check=lambda v: None if all(
        c >= 1 for c in v) else "entries must be >= 1")
    n_fine = ctx.take("n_fine", "int", check=_pos_int)
    for n in ns:
        if n_fine % n != 0:
            ctx.error("ns", f"every n must divide n_fine={n_fine}; {n} does not")
    ctx.take("replicas", "int", check=_pos_int)


def _resolve_exit(ctx, field):
    ctx.take("x0", "floatlist", check=_x0_check(field))
    ctx.take("epsilon", "float", check=_positive)
    ctx.take("n", "int", check=_pos_int)
    ctx.take("radii", "floatlist", check=lambda v: None if all(
        c > 0 for c in v) else "must be positive")
    ctx.take("replicas", "int", check=_pos_int)


_RESOLVERS = {
    "check": _resolve_check,
    "skeleton": _resolve_skeleton,
    "simulate": _resolve_simulate,
    "rate": _resolve_rate,
    "ldp": _resolve_ldp,
    "lemma1": _resolve_lemma1,
    "exit": _resolve_exit,
}


def resolve(cfg):
    """Validate a raw config dict and materialize defaults.

    Returns (resolved dict, field).  Resolution is idempotent: resolving
    the serialized resolved config yields the same dict.
    """
    if not isinstance(cfg, dict):
        raise ValidationError("config root must be a table")
    known = {"run", "model"} | set(EXPERIMENTS)
    for section in cfg:
        if section not in known:
            raise ValidationError(f"unknown config section [{section}]")
    run_ctx = _Ctx("run", cfg.get("run", {}))
    experiment = run_ctx.take("experiment", "str", check=lambda v: None if v in EXPERIMENTS
                              else f"must be one of {EXPERIMENTS}, got {v!r}")
    run_ctx.take("seed", "int", default=0, check=_nonneg)
    run_ctx.take("out", "str", default="results")
    run = run_ctx.finish()
    if "model" not in cfg:
        raise ValidationError("missing [model] section")
    model = _resolve_model(cfg["model"])
    field = build_field(model)
    for section in EXPERIMENTS:
        if section in cfg and section != experiment:
            raise ValidationError(
                f"config declares experiment '{experiment}' but carries section [{section}]")
    ctx = _Ctx(experiment, cfg.get(experiment, {}))
    _RESOLVERS[experiment](ctx, field)
    params = ctx.finish()
    return {"run": run, "model": model, experiment: params}, field


# ---------------------------------------------------------------------------
# canonical TOML serialization (only the types resolve() produces)

def _toml_value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(c) for c in v) + "]"
    if isinstance(v, np.ndarray):
        return _toml_value(v.tolist())
    raise ValidationError(f"cannot serialize {type(v).__name__} to TOML")


def serialize(resolved):
    lines = []
    for section, table in resolved.items():
        lines.append(f"[{section}]")
        for k, v in table.items():
            lines.append(f"{k} = {_toml_value(v)}")
        lines.append("")
    return "\n".join(lines)
