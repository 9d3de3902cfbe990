"""Text formatting and parsing helpers for CSV output and config files."""

import csv
import io
import math
from pathlib import Path
from typing import Dict, Iterable, List, Sequence

from hardedge.errors import ConfigError


def format_float(value: float) -> str:
    """Render a float with 17 significant digits (round-trip exact)."""

    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{float(value):.17g}"


def render_csv(
    header: Sequence[str],
    rows: Iterable[Sequence[object]],
    footer: Sequence[str] = (),
) -> str:
    """Build CSV text with ',' separators and LF line endings.

    Floats are formatted with format_float; other cells are written as str().
    Footer lines are appended verbatim, each prefixed with '# '.
    """

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_float(cell) if isinstance(cell, float) else cell for cell in row])
    for line in footer:
        buffer.write(f"# {line}\n")
    return buffer.getvalue()


def parse_csv(text: str) -> List[Dict[str, str]]:
    """Parse CSV text with a header row, skipping '#' comment lines."""

    lines = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    return list(csv.DictReader(lines))


def parse_config_file(path: Path) -> Dict[str, str]:
    """Read a flat ``key = value`` config file.

    Blank lines and lines starting with '#' are ignored; dashes in keys are
    normalized to underscores so keys may mirror flag names.

    Raises:
        ConfigError: The file is missing or a line has no '='.
    """

    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"Cannot read config file {path}: {exc.strerror}", path=str(path)) from exc
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'", path=str(path), line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key", path=str(path), line=lineno)
        values[key] = value
    return values
