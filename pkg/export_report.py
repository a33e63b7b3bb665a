"""Report writers: CSV / JSON / XLSX.

数値はロケール非依存（小数点は常に '.'）で書き出す。xlsx は先頭に meta シートを置き、
各シートを Excel テーブル化して列幅を調整する。
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, Sequence

from openpyxl import Workbook
from openpyxl.utils import get_column_letter
from openpyxl.worksheet.table import Table, TableStyleInfo

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = ("csv", "json", "xlsx")
DEFAULT_FORMATS = ("csv", "json")

_SHEET_INVALID_RE = re.compile(r"[\[\]:*?/\\]")


class ExportError(ValueError):
    pass


def normalize_formats(formats: Iterable[str] | None) -> tuple[str, ...]:
    if not formats:
        return DEFAULT_FORMATS
    chosen = []
    for item in formats:
        for token in str(item).split(","):
            token = token.strip().lower()
            if not token:
                continue
            if token not in SUPPORTED_FORMATS:
                raise ExportError(f"未対応の出力形式です: {token} (csv/json/xlsx)")
            if token not in chosen:
                chosen.append(token)
    return tuple(chosen) or DEFAULT_FORMATS


def format_value(value: Any) -> str:
    """Locale-independent text for a CSV cell."""

    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(float(value))
    if hasattr(value, "item"):
        # numpy スカラー
        return format_value(value.item())
    return str(value)


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if hasattr(value, "tolist"):
        return _jsonable(value.tolist())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_csv(path: Path, rows: Sequence[dict], columns: Sequence[str]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in columns])
    logger.info("wrote %s", path)
    return path


def write_json(path: Path, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(_jsonable(payload), ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def auto_adjust_columns(ws) -> None:
    """列幅を最大文字数に応じて 10/18/28/40 の 4 段階で調整する。"""

    for column_cells in ws.columns:
        values = [len(str(cell.value)) for cell in column_cells if cell.value is not None]
        if not values:
            continue
        letter = get_column_letter(column_cells[0].column)
        max_len = max(values)
        if max_len <= 8:
            width = 10
        elif max_len <= 20:
            width = 18
        elif max_len <= 40:
            width = 28
        else:
            width = 40
        ws.column_dimensions[letter].width = width


def _sheet_title(name: str, used: set[str]) -> str:
    base = _SHEET_INVALID_RE.sub("_", name.strip())[:31] or "sheet"
    title = base
    index = 2
    while title in used:
        suffix = f"_{index}"
        title = base[: 31 - len(suffix)] + suffix
        index += 1
    used.add(title)
    return title


def add_meta_sheet(wb: Workbook, *, meta: dict, sheet_names: list[str]) -> None:
    ws = wb.create_sheet(title="meta", index=0)
    ws.append(["項目", "値"])
    for key, value in meta.items():
        ws.append([key, format_value(value) if not isinstance(value, str) else value])
    ws.append(["生成日時", datetime.now().strftime("%Y-%m-%d %H:%M:%S")])
    ws.append(["シート数", len(sheet_names)])

    ws.append([])
    ws.append(["シートリンク", ""])
    for name in sheet_names:
        row = ws.max_row + 1
        cell = ws.cell(row=row, column=2)
        cell.value = name
        cell.hyperlink = f"#'{name}'!A1"
        cell.style = "Hyperlink"

    auto_adjust_columns(ws)


def _xlsx_cell(value: Any) -> Any:
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return format_value(value)
    if isinstance(value, (list, tuple, dict)):
        return json.dumps(_jsonable(value), ensure_ascii=False)
    return value


def write_xlsx(path: Path, sheets: dict[str, tuple[Sequence[str], Sequence[dict]]], *, meta: dict) -> Path:
    """``sheets``: name -> (columns, rows). 各シートを TableStyleMedium2 のテーブルにする。"""

    path = Path(path)
    wb = Workbook()
    wb.remove(wb.active)
    used: set[str] = {"meta"}
    for index, (name, (columns, rows)) in enumerate(sheets.items(), start=1):
        title = _sheet_title(name, used)
        ws = wb.create_sheet(title=title)
        ws.append(list(columns))
        for row in rows:
            ws.append([_xlsx_cell(row.get(column)) for column in columns])
        ws.freeze_panes = "A2"
        if rows and columns:
            ref = f"A1:{get_column_letter(len(columns))}{len(rows) + 1}"
            table = Table(
                displayName=f"tbl_{index}",
                ref=ref,
                tableStyleInfo=TableStyleInfo(
                    name="TableStyleMedium2",
                    showFirstColumn=False,
                    showLastColumn=False,
                    showRowStripes=True,
                    showColumnStripes=False,
                ),
            )
            ws.add_table(table)
        auto_adjust_columns(ws)

    add_meta_sheet(wb, meta=meta, sheet_names=[name for name in wb.sheetnames])
    path.parent.mkdir(parents=True, exist_ok=True)
    wb.save(path)
    logger.info("wrote %s", path)
    return path


def write_table(
    out_dir: Path,
    stem: str,
    rows: Sequence[dict],
    columns: Sequence[str],
    *,
    formats: Sequence[str],
    payload: Any = None,
    meta: dict | None = None,
) -> list[Path]:
    """Write one table in every requested format and return the written paths."""

    out_dir = Path(out_dir)
    written: list[Path] = []
    if "csv" in formats:
        written.append(write_csv(out_dir / f"{stem}.csv", rows, columns))
    if "json" in formats:
        written.append(write_json(out_dir / f"{stem}.json", payload if payload is not None else list(rows)))
    if "xlsx" in formats:
        written.append(write_xlsx(out_dir / f"{stem}.xlsx", {stem: (columns, rows)}, meta=meta or {}))
    return written


__all__ = [
    "DEFAULT_FORMATS",
    "ExportError",
    "SUPPORTED_FORMATS",
    "add_meta_sheet",
    "auto_adjust_columns",
    "format_value",
    "normalize_formats",
    "write_csv",
    "write_json",
    "write_table",
    "write_xlsx",
]
