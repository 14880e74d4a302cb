"""Flat key-value config files.

Accepts the flat subset of TOML: one "key = value" per line, # comments,
double- or single-quoted strings, integers, floats, booleans, and flat
lists of those. No sections, no nesting.
"""

from __future__ import annotations

__all__ = ["dumps_flat", "parse_flat"]


class ConfigSyntaxError(ValueError):
    pass


def _parse_scalar(token: str, where: str):
    token = token.strip()
    if not token:
        raise ConfigSyntaxError(f"{where}: empty value")
    if token.startswith('"') or token.startswith("'"):
        quote = token[0]
        if len(token) < 2 or not token.endswith(quote):
            raise ConfigSyntaxError(f"{where}: unterminated string {token!r}")
        return token[1:-1]
    low = token.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        raise ConfigSyntaxError(f"{where}: cannot parse value {token!r}") from None


def _split_list(body: str, where: str) -> list[str]:
    items, depth, current, in_str = [], 0, "", None
    for ch in body:
        if in_str:
            current += ch
            if ch == in_str:
                in_str = None
            continue
        if ch in "\"'":
            in_str = ch
            current += ch
        elif ch == "," and depth == 0:
            items.append(current)
            current = ""
        else:
            current += ch
    if in_str:
        raise ConfigSyntaxError(f"{where}: unterminated string in list")
    if current.strip():
        items.append(current)
    return items


def parse_flat(text: str, source: str = "<config>") -> dict:
    """Parse flat key-value text into a dict."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        where = f"{source}:{lineno}"
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            raise ConfigSyntaxError(f"{where}: sections are not supported")
        if "=" not in line:
            raise ConfigSyntaxError(f"{where}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        # strip a trailing comment unless it sits inside a string
        if "#" in value and not (value.startswith(('"', "'"))
                                 and value.rstrip().endswith(value[0])):
            in_str = None
            for pos, ch in enumerate(value):
                if in_str:
                    if ch == in_str:
                        in_str = None
                elif ch in "\"'":
                    in_str = ch
                elif ch == "#":
                    value = value[:pos].strip()
                    break
        if not key or not key.replace("_", "").replace("-", "").isalnum():
            raise ConfigSyntaxError(f"{where}: bad key {key!r}")
        if value.startswith("["):
            if not value.endswith("]"):
                raise ConfigSyntaxError(f"{where}: unterminated list")
            body = value[1:-1].strip()
            out[key] = ([] if not body else
                        [_parse_scalar(tok, where)
                         for tok in _split_list(body, where)])
        else:
            out[key] = _parse_scalar(value, where)
    return out


def _dump_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value + '"'
    return repr(value)


def dumps_flat(mapping: dict) -> str:
    """Render a dict back to flat key-value text (skips None values)."""
    lines = []
    for key, value in mapping.items():
        if value is None:
            continue
        if isinstance(value, (list, tuple)):
            body = ", ".join(_dump_scalar(v) for v in value)
            lines.append(f"{key} = [{body}]")
        else:
            lines.append(f"{key} = {_dump_scalar(value)}")
    return "\n".join(lines) + "\n"
