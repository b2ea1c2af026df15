import csv
import io
import typing as t
from dataclasses import dataclass, field
from pathlib import Path

TRACE_HEADER = ("k", "D", "gap", "dist2", "gamma", "primal_err2", "max_age", "seconds")


@dataclass(frozen=True, slots=True)
class TraceRow:
    k: int
    D: float
    gap: float
    dist2: float | None
    gamma: float | None
    primal_err2: float | None
    max_age: int
    seconds: float = 0.0


@dataclass(slots=True)
class Trace:
    """Recorded rows of one run plus flat run metadata."""

    rows: list[TraceRow] = field(default_factory=list)
    meta: dict[str, t.Any] = field(default_factory=dict)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.k <= self.rows[-1].k:
            raise ValueError(
                f"Trace rows must have increasing k: {row.k} after {self.rows[-1].k}."
            )
        self.rows.append(row)

    def column(self, name: str) -> list[t.Any]:
        if name not in TRACE_HEADER:
            raise KeyError(f"Unknown trace column {name!r}.")
        return [getattr(row, name) for row in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


# --------------------------------------------------------------------------
# CSV files
# --------------------------------------------------------------------------


def _cell(value: float | int | None) -> str:
    match value:
        case None:
            return ""
        case int():
            return str(value)
        case _:
            return f"{value:.17g}"


def format_trace_csv(trace: Trace) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    for row in trace.rows:
        writer.writerow(_cell(getattr(row, name)) for name in TRACE_HEADER)
    return out.getvalue()


def write_trace_csv(trace: Trace, path: Path) -> None:
    try:
        path.write_text(format_trace_csv(trace))
    except OSError as exc:
        raise OSError(f"Cannot write trace {path}: {exc}") from exc


def _optional(text: str) -> float | None:
    return float(text) if text else None


def parse_trace_csv(text: str) -> Trace:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(header) != TRACE_HEADER:
        raise ValueError(f"Trace header must be {','.join(TRACE_HEADER)}.")
    trace = Trace()
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != len(TRACE_HEADER):
            raise ValueError(f"Trace line {lineno} has {len(cells)} fields.")
        k, d, gap, dist2, gamma, err2, age, seconds = cells
        try:
            trace.append(
                TraceRow(
                    k=int(k),
                    D=float(d),
                    gap=float(gap),
                    dist2=_optional(dist2),
                    gamma=_optional(gamma),
                    primal_err2=_optional(err2),
                    max_age=int(age),
                    seconds=float(seconds),
                )
            )
        except ValueError as exc:
            raise ValueError(f"Trace line {lineno}: {exc}") from None
    return trace


def read_trace_csv(path: Path) -> Trace:
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"Cannot read trace {path}: {exc}") from exc
    trace = parse_trace_csv(text)
    trace.meta["source"] = str(path)
    return trace
