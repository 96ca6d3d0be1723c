"""Small file helpers shared by the persistence code."""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Union

PathLike = Union[str, "os.PathLike[str]"]


def write_atomic(path: PathLike, payload: Union[bytes, str]) -> None:
    """Write ``payload`` to ``path`` via a temp file in the same directory and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj: Any, sort_keys: bool = True) -> str:
    """Canonical JSON text: two-space indent, trailing newline.

    Reports pass ``sort_keys=False`` so tables keep their row and column order.
    """
    return json.dumps(obj, sort_keys=sort_keys, indent=2) + "\n"
