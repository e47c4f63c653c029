import numpy as np

from skelmax.cli import sha256_file, write_csv, write_json, write_scan_svg
from skelmax.normlab import ScanResult, ScanRow


def _scan():
    rows = [ScanRow(2.0 ** -j, "c", 0.1 * 1.05 ** j, "constant", True) for j in range(4, 8)]
    return ScanResult(2, 1, 1.0, "restricted", rows)


def test_json_sorted_and_numpy_safe(tmp_path):
    p = write_json(tmp_path / "a.json", {"b": np.float64(1.5), "a": [np.int64(2), np.bool_(True)],
                                         "c": float("inf")})
    text = p.read_text()
    assert text.index('"a"') < text.index('"b"')
    assert '"inf"' in text


def test_csv_floats_roundtrip(tmp_path):
    x = 0.1 + 0.2
    p = write_csv(tmp_path / "a.csv", ["v"], [(x,)])
    assert float(p.read_text().splitlines()[1]) == x


def test_svg_is_deterministic(tmp_path):
    a = write_scan_svg(tmp_path / "a.svg", _scan())
    b = write_scan_svg(tmp_path / "b.svg", _scan())
    assert sha256_file(a) == sha256_file(b)
    assert "<svg" in a.read_text()
