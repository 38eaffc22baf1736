"""Exception hierarchy shared by all cumeval modules."""

from __future__ import annotations

from contextlib import contextmanager


class CumevalError(Exception):
    """Base class for all errors raised by cumeval.

    ``stage`` names the pipeline stage that failed, when known.
    """

    stage: str | None = None


class InputError(CumevalError):
    """A required input is missing, unreadable or invalid."""


class ParseError(InputError, ValueError):
    """An input file could not be parsed under its declared format."""


class AlignmentError(CumevalError, ValueError):
    """Two grids that must share a GridSpec do not."""


class InvariantError(CumevalError, RuntimeError):
    """An internal consistency check failed."""


@contextmanager
def stage(name: str):
    """Tag cumeval errors raised inside the block with a stage name.

    Missing files and bad parameter values are converted to :class:`InputError`.
    """
    try:
        yield
    except CumevalError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        err = InputError(f"{exc.filename or ''}: {exc.strerror or exc}".lstrip(": "))
        err.stage = name
        raise err from exc
    except ValueError as exc:
        err = InputError(str(exc))
        err.stage = name
        raise err from exc
