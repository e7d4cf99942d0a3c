"""Reading weight configs from YAML.

A config document looks like::

    K: 2
    p: 2
    lambda: {family: constant, value: 1}
    mu: {family: pow_level_of_k, exponent: -1}
    overrides:
      - anchor: {level: 1, index: 0}
        lambda: {family: constant, value: 1}
        mu: {family: constant, value: 1}

Profile families and their parameters:

    constant        value            c
    exp_level       rate             exp(-rate * j(t))
    pow_level_of_k  exponent         K**(exponent * j(t))
    per_level       values           one value per level 1, 2, ...; the last is held beyond
    sampled         t, values, tail  piecewise-linear samples; tail is "unknown" or a
                                     level family mapping with an extra from_level key

A bare number is shorthand for ``constant``.  Every error names the
offending field and the line it sits on.
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml

from .errors import ConfigError
from .tree import VertexId
from .weights import (
    Constant,
    ExpLevel,
    NumericSampled,
    Override,
    PerLevelTable,
    PowLevelOfK,
    RadialProfile,
    WeightConfig,
)

_TOP_KEYS = {"K", "p", "lambda", "mu", "overrides"}
_FAMILY_KEYS = {
    "constant": {"value"},
    "exp_level": {"rate"},
    "pow_level_of_k": {"exponent"},
    "per_level": {"values"},
    "sampled": {"t", "values", "tail"},
}


def _line(node: yaml.Node) -> int:
    return node.start_mark.line + 1


def _mapping(node: yaml.Node, where: str) -> dict[str, tuple[yaml.Node, yaml.Node]]:
    if not isinstance(node, yaml.MappingNode):
        raise ConfigError("expected a mapping", field=where, line=_line(node))
    out = {}
    for k, v in node.value:
        if not isinstance(k, yaml.ScalarNode):
            raise ConfigError("mapping keys must be plain names", field=where, line=_line(k))
        if k.value in out:
            raise ConfigError(f"duplicate key '{k.value}'", field=where, line=_line(k))
        out[k.value] = (k, v)
    return out


def _scalar(node: yaml.Node, where: str):
    if not isinstance(node, yaml.ScalarNode):
        raise ConfigError("expected a single value", field=where, line=_line(node))
    return yaml.safe_load(node.value) if node.style is None else node.value


def _number(node: yaml.Node, where: str) -> float:
    val = _scalar(node, where)
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"expected a number, got {node.value!r}", field=where, line=_line(node))
    if not math.isfinite(val):
        raise ConfigError("value must be finite", field=where, line=_line(node))
    return float(val)


def _integer(node: yaml.Node, where: str) -> int:
    val = _scalar(node, where)
    if isinstance(val, bool) or not isinstance(val, int):
        raise ConfigError(f"expected an integer, got {node.value!r}", field=where, line=_line(node))
    return val


def _numbers(node: yaml.Node, where: str) -> list[float]:
    if not isinstance(node, yaml.SequenceNode):
        raise ConfigError("expected a list of numbers", field=where, line=_line(node))
    return [_number(x, f"{where}[{i}]") for i, x in enumerate(node.value)]


def _check_keys(items: dict, allowed: set[str], where: str, node: yaml.Node) -> None:
    for key, (knode, _) in items.items():
        if key not in allowed:
            raise ConfigError(f"unknown key '{key}' (allowed: {', '.join(sorted(allowed))})",
                              field=where, line=_line(knode))


def _require(items: dict, key: str, where: str, node: yaml.Node) -> yaml.Node:
    if key not in items:
        raise ConfigError(f"missing '{key}'", field=where, line=_line(node))
    return items[key][1]


def _level_family(node: yaml.Node, where: str, extra: set[str] = frozenset()):
    """A level-constant family; returns ``(profile, remaining items)``."""
    items = _mapping(node, where)
    fam_node = _require(items, "family", where, node)
    family = _scalar(fam_node, f"{where}.family")
    if family not in _FAMILY_KEYS or family == "sampled":
        allowed = sorted(k for k in _FAMILY_KEYS if k != "sampled")
        raise ConfigError(f"unknown family {family!r} (expected one of {', '.join(allowed)})",
                          field=f"{where}.family", line=_line(fam_node))
    _check_keys(items, {"family"} | _FAMILY_KEYS[family] | set(extra), where, node)
    try:
        if family == "constant":
            v = _number(_require(items, "value", where, node), f"{where}.value")
            profile = Constant(v)
        elif family == "exp_level":
            profile = ExpLevel(_number(_require(items, "rate", where, node), f"{where}.rate"))
        elif family == "pow_level_of_k":
            profile = PowLevelOfK(_number(_require(items, "exponent", where, node), f"{where}.exponent"))
        else:
            profile = PerLevelTable(tuple(_numbers(_require(items, "values", where, node), f"{where}.values")))
    except ConfigError as exc:
        if exc.line is not None:
            raise
        raise ConfigError(exc.message, field=where, line=_line(node)) from None
    except ValueError as exc:
        raise ConfigError(str(exc), field=where, line=_line(node)) from None
    return profile, items


def _profile(node: yaml.Node, where: str) -> RadialProfile:
    if isinstance(node, yaml.ScalarNode):
        try:
            return Constant(_number(node, where))
        except ValueError as exc:
            raise ConfigError(getattr(exc, "message", str(exc)), field=where, line=_line(node)) from None
    items = _mapping(node, where)
    fam_node = _require(items, "family", where, node)
    if _scalar(fam_node, f"{where}.family") != "sampled":
        return _level_family(node, where)[0]
    _check_keys(items, {"family", "t", "values", "tail", "label"}, where, node)
    t = _numbers(_require(items, "t", where, node), f"{where}.t")
    values = _numbers(_require(items, "values", where, node), f"{where}.values")
    kwargs = {"label": where}
    if "tail" in items:
        tnode = items["tail"][1]
        if isinstance(tnode, yaml.ScalarNode) and _scalar(tnode, f"{where}.tail") == "unknown":
            pass
        else:
            tail, titems = _level_family(tnode, f"{where}.tail", extra={"from_level"})
            kwargs["tail"] = tail
            kwargs["tail_from"] = _integer(_require(titems, "from_level", f"{where}.tail", tnode),
                                           f"{where}.tail.from_level")
    try:
        return NumericSampled.from_samples(t, values, **kwargs)
    except ConfigError as exc:
        raise ConfigError(exc.message, field=where, line=_line(node)) from None


def _override(node: yaml.Node, where: str) -> Override:
    items = _mapping(node, where)
    _check_keys(items, {"anchor", "lambda", "mu"}, where, node)
    anode = _require(items, "anchor", where, node)
    aitems = _mapping(anode, f"{where}.anchor")
    _check_keys(aitems, {"level", "index"}, f"{where}.anchor", anode)
    anchor = VertexId(_integer(_require(aitems, "level", f"{where}.anchor", anode), f"{where}.anchor.level"),
                      _integer(_require(aitems, "index", f"{where}.anchor", anode), f"{where}.anchor.index"))
    lam = _profile(_require(items, "lambda", where, node), f"{where}.lambda")
    mu = _profile(_require(items, "mu", where, node), f"{where}.mu")
    return Override(anchor, lam, mu)


def parse_config(text: str) -> WeightConfig:
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ConfigError(f"not valid YAML: {exc.problem}",
                          line=mark.line + 1 if mark is not None else None) from None
    if root is None:
        raise ConfigError("config is empty", line=1)
    items = _mapping(root, "<document>")
    _check_keys(items, _TOP_KEYS, "<document>", root)
    K_node = _require(items, "K", "K", root)
    p_node = _require(items, "p", "p", root)
    K = _integer(K_node, "K")
    p = _number(p_node, "p")
    lam = _profile(_require(items, "lambda", "lambda", root), "lambda")
    mu = _profile(_require(items, "mu", "mu", root), "mu")
    overrides = []
    onode = None
    if "overrides" in items:
        onode = items["overrides"][1]
        if not (isinstance(onode, yaml.ScalarNode) and onode.value in ("", "null", "~")):
            if not isinstance(onode, yaml.SequenceNode):
                raise ConfigError("expected a list", field="overrides", line=_line(onode))
            overrides = [_override(x, f"overrides[{i}]") for i, x in enumerate(onode.value)]
    try:
        return WeightConfig(K, p, lam, mu, tuple(overrides))
    except ConfigError as exc:
        located = {"K": K_node, "p": p_node, "overrides": onode}
        node = located.get(exc.field)
        raise ConfigError(exc.message, field=exc.field,
                          line=_line(node) if node is not None else None) from None


def load_config(path) -> WeightConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", field=str(path)) from None
    return parse_config(text)
