import json
import math

import numpy as np
import pytest
from openpyxl import load_workbook

from export_report import (
    ExportError,
    auto_adjust_columns,
    format_value,
    normalize_formats,
    write_csv,
    write_json,
    write_table,
    write_xlsx,
)


def test_normalize_formats():
    assert normalize_formats(None) == ("csv", "json")
    assert normalize_formats(["csv,xlsx", "CSV"]) == ("csv", "xlsx")
    with pytest.raises(ExportError):
        normalize_formats(["pdf"])


def test_format_value_is_locale_independent():
    assert format_value(0.0253303) == "0.0253303"
    assert format_value(np.float64(1.5)) == "1.5"
    assert format_value(np.int64(7)) == "7"
    assert format_value(math.nan) == "nan"
    assert format_value(-math.inf) == "-inf"
    assert format_value(True) == "true"
    assert format_value(None) == ""


def test_write_csv(tmp_path):
    path = write_csv(tmp_path / "out.csv", [{"n": 2.0, "m": 1, "value": 1e-3}], ["n", "m", "value"])
    assert path.read_text(encoding="utf-8") == "n,m,value\n2.0,1,0.001\n"


def test_write_json_sorted_and_nan_safe(tmp_path):
    path = write_json(tmp_path / "out.json", {"b": math.nan, "a": np.arange(3)})
    text = path.read_text(encoding="utf-8")
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {"a": [0, 1, 2], "b": None}


def test_write_xlsx_meta_sheet(tmp_path):
    rows = [{"name": "lemma55_identity", "m": 4, "passed": True}]
    path = write_xlsx(tmp_path / "out.xlsx", {"checks": (["name", "m", "passed"], rows)}, meta={"root_seed": 3})
    wb = load_workbook(path)
    assert wb.sheetnames == ["meta", "checks"]
    meta = wb["meta"]
    assert [meta["A1"].value, meta["B1"].value] == ["項目", "値"]
    assert meta["A2"].value == "root_seed"
    checks = wb["checks"]
    assert checks.freeze_panes == "A2"
    assert checks["A2"].value == "lemma55_identity"
    assert "tbl_1" in checks.tables
    assert checks.column_dimensions["A"].width == 18


def test_auto_adjust_columns_buckets():
    from openpyxl import Workbook

    ws = Workbook().active
    ws.append(["x" * 5, "x" * 15, "x" * 30, "x" * 50])
    auto_adjust_columns(ws)
    assert [ws.column_dimensions[c].width for c in "ABCD"] == [10, 18, 28, 40]


def test_write_table_formats(tmp_path):
    rows = [{"index": 0, "value": 0.5}]
    written = write_table(tmp_path, "limit", rows, ["index", "value"], formats=("csv", "json", "xlsx"), meta={})
    assert [p.suffix for p in written] == [".csv", ".json", ".xlsx"]
    assert all(p.exists() for p in written)
    assert json.loads((tmp_path / "limit.json").read_text(encoding="utf-8")) == rows
