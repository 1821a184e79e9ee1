"""Versioned, gzip-compressed JSON documents used for model checkpoints"""
import gzip
import json
import os
import pathlib

from ..graph import FormatError

__all__ = ['load', 'save']

EXTENSION = '.json.gz'


def _normalize(file):
    """Convenience function to support path objects."""
    if 'Path' in type(file).__name__:
        return str(file)
    else:
        return file


def _add_extension(file):
    if not isinstance(file, str):
        return file

    path = pathlib.Path(file)
    if not path.suffix:
        return str(path) + EXTENSION
    else:
        return file


def save(document, file, add_extension=True):
    """Write a JSON document to a gzip-compressed file

    Floats are written with their shortest exact representation, so they load back
    bit for bit.

    Parameters
    ----------
    document : dict
        Must contain an integer 'version' entry.
    file : Union[str, pathlib.Path]
    add_extension : bool
        The '.json.gz' extension is added if file has none.

    Returns
    -------
    str
        The path which was written.
    """
    if 'version' not in document:
        raise RuntimeError("Checkpoint documents need a 'version' entry")
    file = _normalize(file)
    if add_extension:
        file = _add_extension(file)

    with gzip.open(file, 'wt', encoding='utf-8') as f:
        json.dump(document, f)
    return file


def load(file, version=None):
    """Read a document written by :func:`save`

    Parameters
    ----------
    file : Union[str, pathlib.Path]
        The '.json.gz' extension may be omitted.
    version : Optional[int]
        Required document version.
    """
    file = _normalize(file)
    file_ext = _add_extension(file)
    if isinstance(file, str) and not os.path.exists(file) and os.path.exists(file_ext):
        file = file_ext

    try:
        with gzip.open(file, 'rt', encoding='utf-8') as f:
            document = json.load(f)
    except (OSError, ValueError) as e:
        raise FormatError("{}: not a readable checkpoint ({})".format(file, e)) from None

    _check_version(document, version, file)
    return document


def _check_version(document, version, file):
    if not isinstance(document, dict):
        raise FormatError("{}: checkpoint must be a JSON object".format(file))
    if version is not None and document.get('version') != version:
        raise FormatError("{}: can't read checkpoint v{} with reader v{}".format(
            file, document.get('version'), version))
