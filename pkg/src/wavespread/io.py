"""File helpers: atomic writes and the ``id,selected`` sample format."""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path

import numpy as np

from .population import Population


def atomic_write(path, text: str) -> None:
    """Write text to path via a temporary file and rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sample_csv(pop: Population, indicator) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "selected"])
    for i, a in zip(pop.ids, np.asarray(indicator)):
        w.writerow([int(i), int(a)])
    return buf.getvalue()


def read_sample(path, pop: Population) -> np.ndarray:
    """Read an ``id,selected`` file into an indicator aligned with ``pop``."""
    pos = {int(i): k for k, i in enumerate(pop.ids)}
    a = np.zeros(pop.N, dtype=np.int8)
    seen = set()
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"id", "selected"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns id,selected")
        for lineno, row in enumerate(reader, start=2):
            try:
                uid, sel = int(row["id"]), int(row["selected"])
            except (TypeError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed row") from None
            if uid not in pos:
                raise ValueError(f"{path}:{lineno}: unknown id {uid}")
            if uid in seen:
                raise ValueError(f"{path}:{lineno}: duplicate id {uid}")
            if sel not in (0, 1):
                raise ValueError(f"{path}:{lineno}: selected must be 0 or 1")
            seen.add(uid)
            a[pos[uid]] = sel
    return a
