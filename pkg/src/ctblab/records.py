"""Decision-file interchange format.

UTF-8 CSV with a fixed header; booleans as 0/1, the rate with six decimal
places and the near-day effort with three, so the simulator, the session
server, and the estimator exchange files bit-exactly.
"""

from __future__ import annotations

import io
import os
from pathlib import Path

from .simulate import DecisionRecord

CSV_HEADER = "subject_id,certain_rate,certain_day,decision_day,rate,e2,incentivized"


class RecordFileError(ValueError):
    """Malformed decision file; message carries the 1-based line number."""


def format_record(record: DecisionRecord) -> str:
    return (
        f"{record.subject_id},{int(record.certain_rate)},{int(record.certain_day)},"
        f"{record.decision_day},{record.rate:.6f},{record.e2:.3f},"
        f"{int(record.incentivized)}"
    )


def records_to_csv(records: list[DecisionRecord]) -> str:
    lines = [CSV_HEADER]
    lines.extend(format_record(r) for r in records)
    return "\n".join(lines) + "\n"


def write_records(records: list[DecisionRecord], path: str | os.PathLike) -> None:
    Path(path).write_text(records_to_csv(records), encoding="utf-8")


def _parse_bool(token: str, line_no: int, column: str) -> bool:
    if token == "0":
        return False
    if token == "1":
        return True
    raise RecordFileError(f"line {line_no}: column {column} must be 0 or 1, got {token!r}")


def _parse_line(line: str, line_no: int) -> DecisionRecord:
    parts = line.split(",")
    if len(parts) != 7:
        raise RecordFileError(f"line {line_no}: expected 7 fields, got {len(parts)}")
    try:
        subject_id = int(parts[0])
        decision_day = int(parts[3])
        rate = float(parts[4])
        e2 = float(parts[5])
    except ValueError as exc:
        raise RecordFileError(f"line {line_no}: {exc}") from exc
    if decision_day not in (0, 2):
        raise RecordFileError(f"line {line_no}: decision_day must be 0 or 2, got {decision_day}")
    if not rate > 0:
        raise RecordFileError(f"line {line_no}: rate must be positive, got {rate}")
    if e2 < 0:
        raise RecordFileError(f"line {line_no}: e2 must be non-negative, got {e2}")
    return DecisionRecord(
        subject_id=subject_id,
        certain_rate=_parse_bool(parts[1], line_no, "certain_rate"),
        certain_day=_parse_bool(parts[2], line_no, "certain_day"),
        decision_day=decision_day,
        rate=rate,
        e2=e2,
        incentivized=_parse_bool(parts[6], line_no, "incentivized"),
    )


def records_from_csv(text: str) -> list[DecisionRecord]:
    lines = io.StringIO(text).read().splitlines()
    if not lines:
        raise RecordFileError("line 1: empty file, expected header")
    if lines[0].strip() != CSV_HEADER:
        raise RecordFileError(f"line 1: bad header, expected {CSV_HEADER!r}")
    records = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        records.append(_parse_line(line.strip(), line_no))
    return records


def read_records(path: str | os.PathLike) -> list[DecisionRecord]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise RecordFileError(f"cannot read {path}: {exc}") from exc
    return records_from_csv(text)
