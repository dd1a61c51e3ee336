"""Experiment config files: ``key = value`` lines under ``[section]`` headers.

Keys in ``[common]`` apply to every subcommand; a section named after the
subcommand (``simulate``, ``estimate``, ``compare``, ``bandwidth``,
``period``, ``diagnose-normality``) overrides them.  Command-line flags
override both.  Key names are the long flag names, with ``-`` or ``_``.
"""

from __future__ import annotations

import configparser
from typing import Dict, Iterable


class ConfigError(ValueError):
    pass


def read_config(path: str, section: str, known: Iterable[str]) -> Dict[str, str]:
    """Merged ``[common]`` + ``[section]`` keys, normalised to ``snake_case``."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh, source=path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None

    known = set(known)
    out: Dict[str, str] = {}
    for name in ("common", section):
        if not parser.has_section(name):
            continue
        for key, value in parser.items(name):
            norm = key.strip().replace("-", "_").lower()
            if norm not in known:
                raise ConfigError(f"{path}: unknown key {key!r} in [{name}] (line {_line_of(path, key)})")
            out[norm] = value.strip()
    return out


def _line_of(path: str, key: str) -> str:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if line.split("=", 1)[0].split(":", 1)[0].strip() == key:
                return str(n)
    return "?"
