"""Flat ``key = value`` text format with ``#`` comments.

Order of keys is preserved.  Values stay strings; typing is the caller's job.
"""
from __future__ import annotations

from .errors import SchemaError


def parse(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise SchemaError(f"line {lineno}: empty key")
        if key in out:
            raise SchemaError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def dumps(items: dict[str, object]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in items.items())


def load(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


def fmt_float(x: float) -> str:
    # repr is the shortest string that round-trips exactly
    return repr(float(x))


def fmt_list(xs) -> str:
    return ", ".join(fmt_float(x) for x in xs)


def parse_list(value: str) -> list[float]:
    value = value.strip()
    if not value:
        return []
    return [float(v) for v in value.split(",")]
