"""Canonical wire serialization for the core types.

One stable spelling per field: the dataclass field names in gridforge.model
are the wire names. Sets serialize as sorted lists, enums as their values.
The same encoding is used over HTTP and at rest.
"""

from __future__ import annotations

import dataclasses
import enum
import types
import typing


def to_wire(obj):
    """Encode a core value (dataclass / enum / container) to JSON-safe data."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: to_wire(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, (set, frozenset)):
        return sorted(to_wire(v) for v in obj)
    if isinstance(obj, (list, tuple)):
        return [to_wire(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): to_wire(v) for k, v in obj.items()}
    return obj


def _strip_optional(tp):
    origin = typing.get_origin(tp)
    if origin in (typing.Union, types.UnionType):
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if len(args) == 1:
            return args[0]
    return tp


def _coerce(tp, value):
    if value is None:
        return None
    tp = _strip_optional(tp)
    origin = typing.get_origin(tp)
    if dataclasses.is_dataclass(tp):
        return from_wire(tp, value)
    if isinstance(tp, type) and issubclass(tp, enum.Enum):
        return tp(value)
    if origin in (set, frozenset):
        (item_tp,) = typing.get_args(tp) or (str,)
        return {_coerce(item_tp, v) for v in value}
    if origin is list:
        (item_tp,) = typing.get_args(tp) or (str,)
        return [_coerce(item_tp, v) for v in value]
    if origin is dict:
        key_tp, val_tp = typing.get_args(tp) or (str, str)
        return {_coerce(key_tp, k): _coerce(val_tp, v) for k, v in value.items()}
    if tp is float and isinstance(value, int):
        return float(value)
    return value


def from_wire(cls, data: dict):
    """Decode JSON data into a dataclass, coercing enums, sets, and nesting.

    Unknown keys are ignored so old readers tolerate new fields.
    """
    hints = typing.get_type_hints(cls)
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(hints[f.name], data[f.name])
    return cls(**kwargs)
