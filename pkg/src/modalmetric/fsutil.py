"""Small filesystem helpers shared by checkpointing and the CLI."""

import json
import os
import tempfile


def atomic_write_text(path, text):
    """Write text to path via a temp file + rename so readers never see a
    partially written artifact."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, obj):
    """Deterministic JSON dump: sorted keys, two-space indent, trailing
    newline, repr-precision floats."""
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
