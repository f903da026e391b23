import csv
import json

import numpy as np
import pytest

from utils.report_io import write_csv_atomic, write_json_atomic


def test_write_csv_atomic(tmp_path):
    path = tmp_path / "nested" / "curve.csv"
    count = write_csv_atomic(str(path), ("step", "value", "ok"), [(0, 0.5, True), (np.int64(1), np.float64(np.inf), False)])
    assert count == 2
    assert path.read_bytes() == b"step,value,ok\n0,0.5,true\n1,nan,false\n"
    assert not (tmp_path / "nested" / "curve.csv.tmp").exists()


def test_write_csv_atomic_keeps_old_file_on_error(tmp_path):
    path = tmp_path / "curve.csv"
    write_csv_atomic(str(path), ("a",), [(1,)])
    with pytest.raises(ValueError):
        write_csv_atomic(str(path), ("a", "b"), [(1, 2), (3,)])
    assert path.read_text(encoding="utf-8") == "a\n1\n"
    assert not (tmp_path / "curve.csv.tmp").exists()

    with open(path, newline="", encoding="utf-8") as f:
        assert list(csv.reader(f)) == [["a"], ["1"]]


def test_write_json_atomic_converts_numpy(tmp_path):
    path = tmp_path / "report.json"
    write_json_atomic(str(path), {"array": np.array([1.0, np.nan]), "flag": np.bool_(True), 3: np.int32(4), "имя": "значение"})
    data = json.loads(path.read_text(encoding="utf-8"))
    assert data == {"array": [1.0, None], "flag": True, "3": 4, "имя": "значение"}
    assert "значение" in path.read_text(encoding="utf-8")
