"""Provenance record written next to the outputs of every artifact-producing command"""
import datetime
import hashlib
import json
import pathlib

from ..__about__ import __title__, __version__

__all__ = ['RunManifest', 'file_digest']

FILE_NAME = 'manifest.json'


def file_digest(path):
    """SHA-256 hex digest of a file's contents"""
    h = hashlib.sha256()
    with open(str(path), 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec='seconds')


class RunManifest:
    """Command, configuration, seeds, input digests and outputs of a single invocation

    Parameters
    ----------
    command : str
        Name of the CLI command.
    config : dict
        Full effective configuration, JSON serializable.
    seeds : Sequence[int]

    Examples
    --------
    >>> m = RunManifest('synth', {'nodes': 10}, seeds=[1])
    >>> m.to_dict()['seeds']
    [1]
    """
    def __init__(self, command, config=None, seeds=()):
        self.command = command
        self.config = dict(config or {})
        self.seeds = [int(s) for s in seeds]
        self.inputs = []
        self.outputs = []
        self.started = _now()
        self.finished = None

    def add_input(self, path):
        """Record an input file together with its digest"""
        path = pathlib.Path(path)
        self.inputs.append({'path': str(path), 'sha256': file_digest(path)})

    def add_output(self, path):
        """Record a written output file together with its digest"""
        path = pathlib.Path(path)
        self.outputs.append({'path': str(path), 'sha256': file_digest(path)})

    def to_dict(self):
        return {
            'tool': __title__,
            'version': __version__,
            'command': self.command,
            'config': self.config,
            'seeds': self.seeds,
            'inputs': self.inputs,
            'outputs': self.outputs,
            'started': self.started,
            'finished': self.finished,
        }

    def write(self, directory):
        """Stamp the finish time and write `manifest.json` into `directory`

        Returns
        -------
        pathlib.Path
        """
        self.finished = _now()
        path = pathlib.Path(directory) / FILE_NAME
        with path.open('w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    @staticmethod
    def load(path):
        """Read back a manifest as a plain dict"""
        with open(str(path), encoding='utf-8') as f:
            return json.load(f)

    def __repr__(self):
        return "RunManifest({!r}, inputs={}, outputs={})".format(
            self.command, len(self.inputs), len(self.outputs))
