from __future__ import annotations

import codecs
import csv
import io
import os
import tempfile
from contextlib import contextmanager
from logging import INFO, Logger, StreamHandler, getLogger
from pathlib import Path
from typing import IO, Dict, Iterator, List, Union

from kws.errors import DecodeError, StorageError, ValidationError


def get_logger(name: str) -> Logger:
    """INFO-level logger with its own stderr handler (no propagation)."""
    logger = getLogger(name)
    if not logger.handlers:
        handler = StreamHandler()
        handler.setLevel(INFO)
        logger.setLevel(INFO)
        logger.addHandler(handler)
        logger.propagate = False
    return logger


@contextmanager
def atomic_write(
    path: Union[str, Path], mode: str = "w", encoding: str | None = "utf-8"
) -> Iterator[IO]:
    """Write to a sibling temp file and rename it over ``path`` on success.

    A crash inside the block leaves any previous ``path`` untouched and no
    partial file behind.
    """
    path = Path(path)
    if "b" in mode:
        encoding = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as e:
        raise StorageError(f"cannot write {path}: {e}") from e

    newline = "" if "b" not in mode else None
    try:
        with os.fdopen(fd, mode, encoding=encoding, newline=newline) as f:
            yield f
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def read_csv_rows(path: Union[str, Path], what: str) -> List[Dict[str, str]]:
    """Rows of a UTF-8 CSV file with a header line (a leading BOM is dropped).

    Undecodable bytes raise :class:`DecodeError` with the file offset of the
    first bad byte; malformed CSV raises :class:`ValidationError` with its line.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise StorageError(f"cannot read {what} {path}: {e}") from e
    skip = len(codecs.BOM_UTF8) if data.startswith(codecs.BOM_UTF8) else 0
    try:
        text = data[skip:].decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(f"{what} {path} is not valid UTF-8", skip + e.start) from e
    reader = csv.DictReader(io.StringIO(text, newline=""))
    try:
        return list(reader)
    except csv.Error as e:
        raise ValidationError(f"{what} {path}: {e}", reader.line_num) from e
