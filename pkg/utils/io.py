# utils/io.py
import io
import os
import json
import tempfile
from pathlib import Path

import numpy as np


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "model_dump"):
        return value.model_dump()
    raise TypeError(f"not JSON serialisable: {type(value).__name__}")


def dumps(payload, indent: int | None = None) -> str:
    return json.dumps(payload, default=_jsonable, sort_keys=True, indent=indent)


def atomic_write_text(path: str | Path, text: str) -> Path:
    """Write through a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_json(path: str | Path, payload: dict) -> Path:
    return atomic_write_text(path, dumps(payload, indent=2) + "\n")


def read_json(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as handle:
        return json.load(handle)


def write_table(path: str | Path, header: dict, columns: dict[str, np.ndarray]) -> Path:
    """CSV with a one-line JSON header (``# {...}``) and a column-name line."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[name], dtype=float) for name in names]) if names else np.empty((0, 0))
    buffer = io.StringIO()
    buffer.write("# " + dumps(header) + "\n")
    buffer.write(",".join(names) + "\n")
    if data.size:
        np.savetxt(buffer, data, fmt="%.17g", delimiter=",")
    return atomic_write_text(path, buffer.getvalue())


def read_table(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, encoding="utf-8") as handle:
        first = handle.readline()
        names = handle.readline().strip().split(",")
        if not first.startswith("# "):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(first[2:])
        data = np.loadtxt(handle, delimiter=",", ndmin=2)
    if data.size == 0:
        return header, {name: np.empty(0) for name in names}
    return header, {name: data[:, i] for i, name in enumerate(names)}
