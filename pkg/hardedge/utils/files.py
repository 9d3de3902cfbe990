"""File output helpers."""

from pathlib import Path
from typing import Optional

from hardedge.config import OUTPUT_DIR


def cleanup_files(*paths: Optional[Path]) -> None:
    """Delete temporary files if they exist.

    Args:
        *paths: File paths to remove.
    """

    for path in paths:
        if not path:
            continue
        try:
            path.unlink()
        except FileNotFoundError:
            continue


def resolve_output(path: Path) -> Path:
    """Anchor relative output paths at OUTPUT_DIR."""

    return path if path.is_absolute() else OUTPUT_DIR / path


def write_text_atomic(path: Path, text: str) -> Path:
    """Write text through a sibling temporary file and rename it into place.

    Args:
        path: Destination file.
        text: Full file contents; written with LF line endings.

    Returns:
        The resolved destination path.
    """

    target = resolve_output(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp_path = target.with_name(f".{target.name}.tmp")
    try:
        with tmp_path.open("w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        tmp_path.replace(target)
    except OSError:
        cleanup_files(tmp_path)
        raise
    return target


def sidecar_path(path: Path) -> Path:
    """JSON metadata file that accompanies a CSV output."""

    return resolve_output(path).with_suffix(".json")
