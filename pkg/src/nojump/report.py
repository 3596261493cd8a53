"""Delimited output tables with a reproducibility preamble.

Every file starts with '#'-prefixed metadata lines echoing the command, the
effective seed and the full configuration, so a run can be reproduced from
its output alone.  Contents are byte-stable for identical (config, seed):
no timestamps appear inside files, and floats are written with a fixed
12-significant-digit format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class Section:
    """An auxiliary comment-prefixed block appended after the main rows."""

    title: str
    columns: tuple[str, ...]
    rows: list[tuple]


@dataclass
class SweepTable:
    command: str
    columns: tuple[str, ...]
    rows: list[tuple]
    metadata: dict
    sections: list[Section] = field(default_factory=list)


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def render_csv(table: SweepTable) -> str:
    lines = []
    for key, value in table.metadata.items():
        if isinstance(value, (dict, list)):
            value = json.dumps(value, sort_keys=True, separators=(",", ":"))
        lines.append(f"# {key} = {value}")
    lines.append(",".join(table.columns))
    for row in table.rows:
        lines.append(",".join(format_value(v) for v in row))
    for section in table.sections:
        lines.append(f"# --- {section.title} ---")
        lines.append("# " + ",".join(section.columns))
        for row in section.rows:
            lines.append("# " + ",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(table: SweepTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_csv(table))
