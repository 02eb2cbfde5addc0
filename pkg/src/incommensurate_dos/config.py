"""Strict key-value run configuration.

Format::

    # comment
    [potential]
    A1 = 7.0
    [model]
    sigma = [0.4, 0.08]
    momentum.W = 40        # dotted keys work in any section

One assignment per line.  Values are numbers, booleans (``true`` /
``false``), bare words, quoted strings, ranges ``a:b`` or bracketed lists
of those.  A bare key outside a section is resolved to the unique section
that declares it.  Unknown keys, type mismatches and out-of-range values
raise :class:`ConfigParseError` naming the line and the key.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

from .errors import ConfigParseError


@dataclass(frozen=True)
class Field:
    kind: str            # float, int, bool, word, range
    default: object
    is_list: bool = False
    minimum: float | None = None
    exclusive_min: bool = False
    maximum: float | None = None
    choices: tuple = ()
    allow_auto: bool = False
    help: str = ""


def _pos(default, **kw):
    return Field("float", default, minimum=0.0, exclusive_min=True, **kw)


SCHEMA: dict[str, dict[str, Field]] = {
    "potential": {
        "A1": Field("float", 7.0, minimum=0.0, help="amplitude of the first well"),
        "A2": Field("float", 5.0, minimum=0.0, help="amplitude of the second well"),
        "sigma1": _pos(0.05, help="width of the first well"),
        "sigma2": _pos(0.05, help="width of the second well"),
    },
    "model": {
        "eps": Field("float", (0.001, 0.002, 0.003), is_list=True, minimum=0.0,
                     exclusive_min=True, help="incommensurability parameters"),
        "sigma": Field("float", (0.4,), is_list=True, minimum=0.0, exclusive_min=True,
                       help="Gaussian smearing widths"),
        "E_min": Field("float", -20.0),
        "E_max": Field("float", 20.0),
        "n_points": Field("int", 801, minimum=2),
    },
    "momentum": {
        "profile": Field("word", "reduced", choices=("reduced", "balanced"),
                         help="reduced: W=40, L=800, h=0.1; balanced: error-balanced defaults"),
        "W": _pos("auto", allow_auto=True),
        "L": _pos("auto", allow_auto=True),
        "h": _pos("auto", allow_auto=True),
        "moment_rule": Field("word", "adaptive", choices=("adaptive", "fixed")),
        "kernel": Field("word", "none", choices=("none", "jackson")),
        "tol": _pos(1e-13),
        "n_buckets": Field("int", 8, minimum=1),
        "symmetry": Field("bool", True),
    },
    "semiclassical": {
        "n_k": Field("int", 200, minimum=2),
        "n_X": Field("int", 500, minimum=2),
        "E_cut": _pos(2000.0),
        "band_margin": Field("float", 10.0, minimum=0.0),
    },
    "harmonic": {
        "bands": Field("int", (1, 2, 3), is_list=True, minimum=1),
        "window_half": _pos(2.0),
        "n_max": Field("int", "window", minimum=0, allow_auto=True,
                       help="'window' truncates levels by the energy window"),
        "seed_grid": Field("int", 256, minimum=3),
        "E_cut": _pos(2000.0),
        "level": Field("int", 0, minimum=0, maximum=10),
        "point": Field("int", 1, minimum=1, help="1-based index into the frequency-carrying records"),
        "band": Field("int", 2, minimum=1),
    },
    "compare": {
        "windows": Field("range", ((-20.0, 20.0), (9.0, 18.0), (-16.0, -10.0)), is_list=True),
        "fd": Field("bool", True, help="add finite-difference term estimates"),
    },
    "output": {
        "directory": Field("word", "out"),
        "precision": Field("int", 17, minimum=1, maximum=17),
    },
}

AUTO_WORDS = {"auto", "window"}


def _split_list(text):
    inner = text[1:-1].strip()
    return [] if not inner else [t.strip() for t in inner.split(",")]


def _scalar(token, f: Field, line, key):
    t = token.strip()
    if len(t) >= 2 and t[0] == t[-1] and t[0] in "\"'":
        t = t[1:-1]
    if f.allow_auto and t in AUTO_WORDS:
        return t
    try:
        if f.kind == "float":
            v = float(t)
            if not math.isfinite(v):
                raise ValueError
        elif f.kind == "int":
            v = int(t)
        elif f.kind == "bool":
            if t.lower() not in ("true", "false"):
                raise ValueError
            return t.lower() == "true"
        elif f.kind == "range":
            a, b = t.split(":")
            v = (float(a), float(b))
            if not v[1] > v[0]:
                raise ConfigParseError(f"empty range {t!r}", line, key)
            return v
        else:
            v = t
    except ConfigParseError:
        raise
    except ValueError:
        raise ConfigParseError(f"expected {f.kind}, got {token.strip()!r}", line, key) from None
    if f.choices and v not in f.choices:
        raise ConfigParseError(f"{v!r} not in {list(f.choices)}", line, key)
    if f.minimum is not None and (v < f.minimum or (f.exclusive_min and v == f.minimum)):
        op = ">" if f.exclusive_min else ">="
        raise ConfigParseError(f"value {v} out of range (must be {op} {f.minimum})", line, key)
    if f.maximum is not None and v > f.maximum:
        raise ConfigParseError(f"value {v} out of range (must be <= {f.maximum})", line, key)
    return v


def parse_value(text: str, f: Field, line=None, key=None):
    text = text.strip()
    if f.is_list:
        if text.startswith("[") and text.endswith("]"):
            items = _split_list(text)
        else:
            items = [text]
        if not items:
            raise ConfigParseError("empty list", line, key)
        return tuple(_scalar(t, f, line, key) for t in items)
    if text.startswith("["):
        raise ConfigParseError("a single value is expected, got a list", line, key)
    return _scalar(text, f, line, key)


def _resolve(section, key, line):
    if "." in key:
        section, key = key.split(".", 1)
    if section is None:
        owners = [s for s, fields in SCHEMA.items() if key in fields]
        if len(owners) != 1:
            what = "ambiguous" if owners else "unknown"
            raise ConfigParseError(f"{what} key", line, key)
        section = owners[0]
    if section not in SCHEMA:
        raise ConfigParseError(f"unknown section {section!r}", line, f"{section}.{key}")
    if key not in SCHEMA[section]:
        raise ConfigParseError("unknown key", line, f"{section}.{key}")
    return section, key


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration; ``values[section][key]`` plus provenance."""

    values: dict
    provenance: dict = field(default_factory=dict)

    def __getitem__(self, dotted: str):
        section, key = dotted.split(".", 1)
        return self.values[section][key]

    def with_overrides(self, overrides: dict, source: str = "cli") -> "RunConfig":
        """Copy with ``{"section.key": raw-or-parsed value}`` applied."""
        values = {s: dict(v) for s, v in self.values.items()}
        prov = dict(self.provenance)
        for dotted, raw in overrides.items():
            section, key = _resolve(None, dotted, None)
            f = SCHEMA[section][key]
            v = parse_value(raw, f, None, f"{section}.{key}") if isinstance(raw, str) else raw
            values[section][key] = v
            prov[f"{section}.{key}"] = source
        _cross_check(values, None)
        return RunConfig(values, prov)

    def items(self):
        for section in SCHEMA:
            for key in SCHEMA[section]:
                yield f"{section}.{key}", self.values[section][key]

    def canonical_text(self) -> str:
        """One ``section.key = value`` line per field, in schema order."""
        return "".join(f"{k} = {format_value(v, schema_field(k).kind)}\n" for k, v in self.items())

    def digest(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def format_value(v, kind: str | None = None) -> str:
    """Text that parses back to ``v``; ``kind="range"`` renders pairs as ``a:b``."""
    if kind == "range" and isinstance(v, tuple) and v and not isinstance(v[0], tuple):
        return f"{v[0]!r}:{v[1]!r}"
    if isinstance(v, tuple):
        return "[" + ", ".join(format_value(x, kind) for x in v) + "]"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def schema_field(dotted: str) -> Field:
    section, key = dotted.split(".", 1)
    return SCHEMA[section][key]


def _cross_check(values, line):
    m = values["model"]
    if not m["E_max"] > m["E_min"]:
        raise ConfigParseError(f"E_max ({m['E_max']}) must exceed E_min ({m['E_min']})", line,
                               "model.E_max")
    if len(set(m["eps"])) != len(m["eps"]):
        raise ConfigParseError("eps values must be distinct", line, "model.eps")


def parse_config(text: str) -> RunConfig:
    """Parse configuration text; an empty text yields all defaults."""
    values = {s: {k: f.default for k, f in fields.items()} for s, fields in SCHEMA.items()}
    prov = {f"{s}.{k}": "default" for s, fields in SCHEMA.items() for k in fields}
    seen = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigParseError(f"malformed section header {raw.strip()!r}", lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigParseError(f"unknown section {section!r}", lineno)
            continue
        if "=" not in line:
            raise ConfigParseError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, text_value = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ConfigParseError("missing key", lineno)
        s, k = _resolve(section, key, lineno)
        dotted = f"{s}.{k}"
        if dotted in seen:
            raise ConfigParseError(f"duplicate assignment (first on line {seen[dotted]})", lineno, dotted)
        seen[dotted] = lineno
        values[s][k] = parse_value(text_value, SCHEMA[s][k], lineno, dotted)
        prov[dotted] = "user"
    _cross_check(values, None)
    return RunConfig(values, prov)


def read_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
