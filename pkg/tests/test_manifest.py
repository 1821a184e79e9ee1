import pytest

import datetime
import hashlib

from gadguard.support.manifest import RunManifest, file_digest


def test_file_digest(tmp_path):
    data = b"gadguard" * 10000
    (tmp_path / "data.bin").write_bytes(data)
    assert file_digest(tmp_path / "data.bin") == hashlib.sha256(data).hexdigest()


def test_manifest(tmp_path):
    (tmp_path / "in.txt").write_text("input")
    (tmp_path / "out.txt").write_text("output")

    m = RunManifest('train', dict(epochs=5, backbone='gat'), seeds=[3])
    m.add_input(tmp_path / "in.txt")
    m.add_output(tmp_path / "out.txt")
    assert repr(m) == "RunManifest('train', inputs=1, outputs=1)"

    path = m.write(tmp_path)
    assert path == tmp_path / "manifest.json"
    document = RunManifest.load(path)
    assert document['tool'] == 'gadguard'
    assert document['command'] == 'train'
    assert document['config'] == dict(epochs=5, backbone='gat')
    assert document['seeds'] == [3]
    assert document['inputs'] == [dict(path=str(tmp_path / "in.txt"),
                                       sha256=hashlib.sha256(b"input").hexdigest())]
    assert document['outputs'][0]['sha256'] == hashlib.sha256(b"output").hexdigest()

    started = datetime.datetime.fromisoformat(document['started'])
    finished = datetime.datetime.fromisoformat(document['finished'])
    assert started.utcoffset() == datetime.timedelta(0)
    assert started <= finished


def test_missing_input(tmp_path):
    with pytest.raises(OSError):
        RunManifest('score').add_input(tmp_path / "missing.csv")
