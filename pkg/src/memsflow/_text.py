"""Line tokenizer shared by the netlist, stack and ESM readers."""

import re

from .errors import ParseError

_TOKEN = re.compile(r'[^\s=]+=\([^)]*\)|[^\s=]+="[^"]*"|"[^"]*"|\S+')


def strip_comment(line):
    out = []
    quoted = False
    for ch in line:
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            break
        out.append(ch)
    return "".join(out).strip()


def logical_lines(text):
    """Yield ``(lineno, tokens)`` for every non-blank, comment-stripped line."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        body = strip_comment(raw)
        if body:
            yield lineno, _TOKEN.findall(body)


def split_args(tokens, lineno):
    """Split tokens into positional words and an ordered ``key -> value`` dict."""
    words, kv = [], {}
    for tok in tokens:
        if "=" in tok:
            key, _, value = tok.partition("=")
            if not key or not value:
                raise ParseError("malformed key=value", lineno, tok)
            if key in kv:
                raise ParseError(f"duplicate key {key!r}", lineno, tok)
            kv[key] = value
        else:
            if kv:
                raise ParseError("positional word after key=value arguments", lineno, tok)
            words.append(tok)
    return words, kv


def unquote(tok, lineno):
    if len(tok) >= 2 and tok[0] == tok[-1] == '"':
        return tok[1:-1]
    raise ParseError("expected a quoted name", lineno, tok)


def parse_tuple(value, lineno, token):
    if not (value.startswith("(") and value.endswith(")")):
        raise ParseError("expected a parenthesized list", lineno, token)
    inner = value[1:-1].strip()
    if not inner:
        return []
    return [item.strip() for item in inner.split(",")]


def parse_float(value, lineno, token):
    try:
        return float(value)
    except ValueError:
        raise ParseError("expected a number", lineno, token) from None
