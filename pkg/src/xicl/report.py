"""Aggregate per-item records into score matrices and render them.

A matrix has setting rows and grouping columns (languages, subjects, models,
or the language-class layout: English, target, and unseen-tier columns whose
cells are unweighted means over per-language means). Rendering is
deterministic; markdown carries bold/underline/asterisk marks, csv and json
carry them as fields.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, replace

from xicl.languages import LANGUAGES


class ReportError(ValueError):
    """Nothing to aggregate or malformed matrix operations."""


@dataclass(frozen=True)
class Cell:
    mean: float | None
    count: int
    significant: bool = False
    best: bool = False
    second: bool = False

    @property
    def absent(self) -> bool:
        return self.mean is None


_ABSENT = Cell(mean=None, count=0)


@dataclass(frozen=True)
class ScoreMatrix:
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    cells: tuple[tuple[Cell, ...], ...]
    percent_scale: bool = True
    column_marks: tuple[bool, ...] = ()

    def __post_init__(self) -> None:
        if len(self.cells) != len(self.rows):
            raise ReportError("cell grid does not match rows")
        for row in self.cells:
            if len(row) != len(self.columns):
                raise ReportError("cell grid does not match columns")

    def cell(self, row: str, column: str) -> Cell:
        return self.cells[self.rows.index(row)][self.columns.index(column)]

    def display(self, value: float) -> float:
        return value * 100 if self.percent_scale else value


def aggregate(records, group_by: list[str], row_order: list[str] | None = None,
              percent_scale: bool = True) -> ScoreMatrix:
    """Mean score per (setting row, grouping column)."""
    records = list(records)
    if not records:
        raise ReportError("nothing to aggregate")
    sums: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    rows: list[str] = []
    columns: list[str] = []
    for record in records:
        row = record.setting_id
        column = "/".join(str(_field(record, name)) for name in group_by)
        if row not in rows:
            rows.append(row)
        if column not in columns:
            columns.append(column)
        key = (row, column)
        sums[key] = sums.get(key, 0.0) + record.score
        counts[key] = counts.get(key, 0) + 1
    if row_order:
        rows = [r for r in row_order if r in rows] + [r for r in rows if r not in row_order]
    grid = tuple(
        tuple(
            Cell(mean=sums[(r, c)] / counts[(r, c)], count=counts[(r, c)])
            if (r, c) in sums else _ABSENT
            for c in columns
        )
        for r in rows
    )
    return ScoreMatrix(tuple(rows), tuple(columns), grid, percent_scale=percent_scale)


def _field(record, name: str):
    value = getattr(record, name)
    return value if value is not None else "(none)"


LANGUAGE_CLASS_COLUMNS = ("En", "Tgt.", "Unseen High", "Unseen Mid", "Unseen Low")


def language_class_of(language_code: str, target_code: str) -> str:
    if language_code == "en":
        return "En"
    if language_code == target_code:
        return "Tgt."
    tier = LANGUAGES[language_code].tier
    return {"high": "Unseen High", "mid": "Unseen Mid", "low": "Unseen Low"}[tier]


def language_class_matrix(records, target_code: str,
                          row_order: list[str] | None = None,
                          percent_scale: bool = True) -> ScoreMatrix:
    """The main table layout; unseen-tier cells average per-language means."""
    records = list(records)
    if not records:
        raise ReportError("nothing to aggregate")
    per_lang_sum: dict[tuple[str, str], float] = {}
    per_lang_count: dict[tuple[str, str], int] = {}
    rows: list[str] = []
    for record in records:
        if record.setting_id not in rows:
            rows.append(record.setting_id)
        key = (record.setting_id, record.language)
        per_lang_sum[key] = per_lang_sum.get(key, 0.0) + record.score
        per_lang_count[key] = per_lang_count.get(key, 0) + 1
    if row_order:
        rows = [r for r in row_order if r in rows] + [r for r in rows if r not in row_order]

    grid: list[tuple[Cell, ...]] = []
    for row in rows:
        cells: list[Cell] = []
        for column in LANGUAGE_CLASS_COLUMNS:
            lang_means = []
            total = 0
            for (setting, lang), count in sorted(per_lang_count.items()):
                if setting != row or language_class_of(lang, target_code) != column:
                    continue
                lang_means.append(per_lang_sum[(setting, lang)] / count)
                total += count
            if not lang_means:
                cells.append(_ABSENT)
            else:
                cells.append(Cell(mean=sum(lang_means) / len(lang_means), count=total))
        grid.append(tuple(cells))
    return ScoreMatrix(tuple(rows), LANGUAGE_CLASS_COLUMNS, tuple(grid),
                       percent_scale=percent_scale)


def mark_best(matrix: ScoreMatrix) -> ScoreMatrix:
    """Bold the per-column maximum, underline the runner-up; ties share the
    higher mark (a tied maximum leaves no underline)."""
    if len(matrix.rows) < 2:
        grid = tuple(
            tuple(replace(cell, best=not cell.absent) for cell in row)
            for row in matrix.cells
        )
        return replace(matrix, cells=grid)

    new_columns: list[list[Cell]] = [[] for _ in matrix.columns]
    for j in range(len(matrix.columns)):
        values = [row[j].mean for row in matrix.cells if not row[j].absent]
        distinct = sorted(set(values), reverse=True)
        top = distinct[0] if distinct else None
        top_count = values.count(top) if top is not None else 0
        second = distinct[1] if len(distinct) > 1 and top_count == 1 else None
        for i in range(len(matrix.rows)):
            cell = matrix.cells[i][j]
            if cell.absent:
                new_columns[j].append(cell)
                continue
            new_columns[j].append(replace(
                cell,
                best=cell.mean == top,
                second=second is not None and cell.mean == second,
            ))
    grid = tuple(
        tuple(new_columns[j][i] for j in range(len(matrix.columns)))
        for i in range(len(matrix.rows))
    )
    return replace(matrix, cells=grid)


def delta_vs_baseline(matrix: ScoreMatrix, baseline_row: str) -> ScoreMatrix:
    """Cellwise difference against one row; the baseline row maps to zeros."""
    if baseline_row not in matrix.rows:
        raise ReportError(f"baseline row {baseline_row!r} not present")
    base = matrix.cells[matrix.rows.index(baseline_row)]
    grid = []
    for row in matrix.cells:
        cells = []
        for cell, baseline in zip(row, base):
            if cell.absent or baseline.absent:
                cells.append(_ABSENT)
            else:
                cells.append(replace(cell, mean=cell.mean - baseline.mean,
                                     best=False, second=False))
        grid.append(tuple(cells))
    return replace(matrix, cells=tuple(grid))


def apply_column_significance(matrix: ScoreMatrix, marks: dict[str, bool],
                              method_row: str | None = None) -> ScoreMatrix:
    """Asterisk columns where the method beat every baseline significantly."""
    column_marks = tuple(bool(marks.get(column, False)) for column in matrix.columns)
    grid = matrix.cells
    if method_row is not None and method_row in matrix.rows:
        i = matrix.rows.index(method_row)
        grid = tuple(
            tuple(
                replace(cell, significant=column_marks[j]) if k == i else cell
                for j, cell in enumerate(row)
            )
            for k, row in enumerate(grid)
        )
    return replace(matrix, cells=grid, column_marks=column_marks)


# ---------------------------------------------------------------------------
# Rendering

def _format_value(matrix: ScoreMatrix, cell: Cell) -> str:
    if cell.absent:
        return "-"
    return f"{matrix.display(cell.mean):.1f}"


def render(matrix: ScoreMatrix, fmt: str = "markdown") -> str:
    if fmt == "markdown":
        return _render_markdown(matrix)
    if fmt == "csv":
        return _render_csv(matrix)
    if fmt == "json":
        return json.dumps(matrix_to_dict(matrix), sort_keys=True, indent=2,
                          ensure_ascii=False) + "\n"
    raise ReportError(f"unknown format {fmt!r}")


def _render_markdown(matrix: ScoreMatrix) -> str:
    marks = matrix.column_marks or (False,) * len(matrix.columns)
    header = ["Setting"] + [
        column + ("*" if mark else "") for column, mark in zip(matrix.columns, marks)
    ]
    lines = ["| " + " | ".join(header) + " |",
             "|" + "|".join("---" for _ in header) + "|"]
    for row_name, row in zip(matrix.rows, matrix.cells):
        rendered = [row_name]
        for cell in row:
            text = _format_value(matrix, cell)
            if cell.best:
                text = f"**{text}**"
            elif cell.second:
                text = f"<u>{text}</u>"
            rendered.append(text)
        lines.append("| " + " | ".join(rendered) + " |")
    return "\n".join(lines) + "\n"


def _render_csv(matrix: ScoreMatrix) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["setting", "column", "mean", "count", "best", "second", "significant"])
    for row_name, row in zip(matrix.rows, matrix.cells):
        for column, cell in zip(matrix.columns, row):
            writer.writerow([
                row_name, column,
                "" if cell.absent else f"{matrix.display(cell.mean):.6f}",
                cell.count, int(cell.best), int(cell.second), int(cell.significant),
            ])
    return buffer.getvalue()


def matrix_to_dict(matrix: ScoreMatrix) -> dict:
    return {
        "rows": list(matrix.rows),
        "columns": list(matrix.columns),
        "percent_scale": matrix.percent_scale,
        "column_marks": list(matrix.column_marks or (False,) * len(matrix.columns)),
        "cells": [
            [
                None if cell.absent else {
                    "mean": cell.mean,
                    "count": cell.count,
                    "significant": cell.significant,
                    "best": cell.best,
                    "second": cell.second,
                }
                for cell in row
            ]
            for row in matrix.cells
        ],
    }


def matrix_from_dict(payload: dict) -> ScoreMatrix:
    cells = tuple(
        tuple(
            _ABSENT if cell is None else Cell(
                mean=cell["mean"], count=cell["count"],
                significant=cell["significant"], best=cell["best"],
                second=cell["second"],
            )
            for cell in row
        )
        for row in payload["cells"]
    )
    return ScoreMatrix(
        rows=tuple(payload["rows"]), columns=tuple(payload["columns"]),
        cells=cells, percent_scale=payload["percent_scale"],
        column_marks=tuple(payload["column_marks"]),
    )
