# src/utils/textio.py
import os
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

from src.utils.errors import ArtifactNotFoundError

PathLike = Union[str, Path]


def fmt(value: float) -> str:
    """Format a float with 17 significant digits so it reloads bit-exactly."""
    return format(float(value), '.17g')


def fmt_row(values: Iterable[float]) -> str:
    return " ".join(fmt(v) for v in values)


def require_file(path: PathLike) -> Path:
    """Return ``path`` as a Path, raising ArtifactNotFoundError when it is missing."""
    path = Path(path)
    if not path.is_file():
        raise ArtifactNotFoundError(f"Input file not found: {path}")
    return path


def ensure_parent(path: PathLike) -> Path:
    path = Path(path)
    if path.parent and not path.parent.exists():
        os.makedirs(path.parent, exist_ok=True)
    return path


def write_numeric_table(path: PathLike, header: str, rows: Sequence[Sequence[float]]) -> None:
    """Write a line-oriented numeric table with one ``#`` header line documenting the columns."""
    path = ensure_parent(path)
    with open(path, 'w', newline='\n') as f:
        f.write(f"# {header}\n")
        for row in rows:
            f.write(fmt_row(row) + "\n")


def read_numeric_table(path: PathLike) -> tuple:
    """Read a table written by :func:`write_numeric_table`.

    Returns:
        (header, rows) where rows is a 2D float array (0 rows allowed).
    """
    path = require_file(path)
    header = ""
    rows: List[List[float]] = []
    with open(path, 'r') as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith('#'):
                if not header:
                    header = line[1:].strip()
                continue
            rows.append([float(tok) for tok in line.split()])
    width = len(rows[0]) if rows else 0
    return header, np.asarray(rows, dtype=np.float64).reshape(len(rows), width)
