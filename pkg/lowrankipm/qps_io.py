"""
Reader and writer for QPS files: MPS with a quadratic objective section.

Both the fixed-column and the whitespace-delimited layouts are accepted.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Final

import numpy as np
import scipy.sparse as sp

from .problem import QpProblem, preprocess
from .types import BoundKind, QuadraticSection, RowSense
from .utils import configure_logger

logger = configure_logger(__name__)

_SECTIONS: Final[set[str]] = {
    "NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "QUADOBJ", "QMATRIX", "ENDATA",
}
_QUADRATIC_SECTIONS: Final[set[str]] = {"QUADOBJ", "QMATRIX"}
_VALUE_BOUNDS: Final[set[str]] = {"UP", "LO", "FX", "LI", "UI"}
_FLAG_BOUNDS: Final[set[str]] = {"FR", "MI", "PL", "BV"}
_VALID_ARITY: Final[dict[str, set[int]]] = {
    "ROWS": {2},
    "COLUMNS": {3, 5},
    "RHS": {2, 3, 4, 5},
    "RANGES": {2, 3, 4, 5},
    "BOUNDS": {2, 3, 4},
    "QUADOBJ": {3},
    "QMATRIX": {3},
}
# 0-based column slices of the six fixed-format fields
_FIXED_FIELDS: Final[tuple[tuple[int, int], ...]] = (
    (1, 3), (4, 12), (14, 22), (24, 36), (39, 47), (49, 61),
)


class QpsFormatError(Exception):
    """
    A located problem in a QPS file. `line_number` is 1-based, 0 when not tied to a line.
    """

    def __init__(self, message: str, line_number: int = 0):
        super().__init__(f"line {line_number}: {message}" if line_number else message)
        self.line_number = line_number


@dataclass(eq=False)
class RawQp:
    """
    The content of a QPS file, indexed by row and column position.

    `quadratic` holds one entry per symmetric pair, keyed `(i, j)` with `i >= j`.
    """
    name: str = ""
    objective_name: str = ""
    row_names: list[str] = field(default_factory=list)
    row_senses: list[RowSense] = field(default_factory=list)
    col_names: list[str] = field(default_factory=list)
    c: np.ndarray = field(default_factory=lambda: np.zeros(0))
    coefficients: dict[tuple[int, int], float] = field(default_factory=dict)
    rhs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_rhs: float = 0.0
    ranges: dict[int, float] = field(default_factory=dict)
    lower: np.ndarray = field(default_factory=lambda: np.zeros(0))
    upper: np.ndarray = field(default_factory=lambda: np.zeros(0))
    quadratic: dict[tuple[int, int], float] = field(default_factory=dict)
    quadratic_section: QuadraticSection | None = None

    @property
    def num_rows(self) -> int:
        return len(self.row_names)

    @property
    def num_cols(self) -> int:
        return len(self.col_names)

    @property
    def objective_constant(self) -> float:
        # the objective row's RHS carries the negated constant
        return -self.objective_rhs

    def constraint_matrix(self) -> sp.csr_matrix:
        shape = (self.num_rows, self.num_cols)
        if not self.coefficients:
            return sp.csr_matrix(shape)
        rows, cols = zip(*self.coefficients.keys())
        return sp.csr_matrix((list(self.coefficients.values()), (rows, cols)), shape=shape)

    def hessian(self) -> sp.csr_matrix:
        """
        The symmetric objective Hessian implied by the stored triangle.
        """
        n = self.num_cols
        rows: list[int] = []
        cols: list[int] = []
        values: list[float] = []
        for (i, j), value in self.quadratic.items():
            rows.append(i)
            cols.append(j)
            values.append(value)
            if i != j:
                rows.append(j)
                cols.append(i)
                values.append(value)
        return sp.csr_matrix((values, (rows, cols)), shape=(n, n))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RawQp):
            return NotImplemented
        return (
            self.name == other.name
            and self.objective_name == other.objective_name
            and self.row_names == other.row_names
            and self.row_senses == other.row_senses
            and self.col_names == other.col_names
            and np.array_equal(self.c, other.c)
            and self.coefficients == other.coefficients
            and np.array_equal(self.rhs, other.rhs)
            and self.objective_rhs == other.objective_rhs
            and self.ranges == other.ranges
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
            and self.quadratic == other.quadratic
            and self.quadratic_section == other.quadratic_section
        )


def _parse_number(text: str, line_number: int) -> float:
    # Fortran D-exponents, e.g. 1.0D+2
    normalized = text.replace("D", "E").replace("d", "e")
    try:
        value = float(normalized)
    except ValueError:
        raise QpsFormatError(f"malformed numeric field '{text}'", line_number) from None
    if np.isnan(value):
        raise QpsFormatError(f"malformed numeric field '{text}'", line_number)
    return value


def _fixed_fields(line: str) -> list[str]:
    padded = line.ljust(61)
    return [padded[start:end].strip() for start, end in _FIXED_FIELDS if padded[start:end].strip()]


class _QpsReader:
    """
    Line-by-line state machine over the sections of a QPS file.
    """

    def __init__(self, name: str | None):
        self.raw = RawQp(name=name or "")
        self.section: str | None = None
        self.row_index: dict[str, int] = {}
        self.col_index: dict[str, int] = {}
        self.current_col: str | None = None
        self.c: list[float] = []
        self.rhs: dict[int, float] = {}
        self.bounds: dict[int, tuple[float, float]] = {}
        self.quadratic_pairs: set[tuple[int, int]] = set()
        self.fixed = False      # set once a record only parses in fixed columns
        self.finished = False

    def read(self, text: str) -> RawQp:
        line_number = 0
        for line_number, line in enumerate(text.splitlines(), start=1):
            if self.finished:
                break
            stripped = line.strip()
            if not stripped or stripped.startswith("*"):
                continue
            try:
                self._read_line(line, line_number)
            except QpsFormatError:
                raise
            except (ValueError, IndexError, KeyError) as e:
                raise QpsFormatError(f"unreadable record: {e}", line_number) from e
        if not self.finished:
            raise QpsFormatError("missing ENDATA", line_number)
        return self._build()

    def _read_line(self, line: str, line_number: int):
        tokens = line.split()
        is_header = not line[0].isspace()
        if is_header and tokens[0] in _SECTIONS:
            self._start_section(tokens, line_number)
            return
        if self.section is None or (is_header and not self._valid(tokens)):
            raise QpsFormatError(f"unknown section '{tokens[0]}'", line_number)
        if self.fixed or not self._valid(tokens):
            tokens = _fixed_fields(line)
            if not self._valid(tokens):
                raise QpsFormatError(f"wrong number of fields in {self.section} record", line_number)
            self.fixed = True
        getattr(self, f"_read_{self.section.lower()}")(tokens, line_number)

    def _valid(self, tokens: list[str]) -> bool:
        if self.section == "COLUMNS" and len(tokens) >= 2 and tokens[1] == "'MARKER'":
            return True
        return self.section in _VALID_ARITY and len(tokens) in _VALID_ARITY[self.section]

    def _start_section(self, tokens: list[str], line_number: int):
        keyword = tokens[0]
        if keyword == "NAME":
            if len(tokens) > 1 and not self.raw.name:
                self.raw.name = " ".join(tokens[1:])
            self.section = None
            return
        if keyword == "ENDATA":
            self.finished = True
            return
        if keyword in _QUADRATIC_SECTIONS:
            if self.raw.quadratic_section is not None:
                raise QpsFormatError("more than one quadratic objective section", line_number)
            self.raw.quadratic_section = keyword  # type: ignore[assignment]
        self.section = keyword

    def _row(self, name: str, line_number: int) -> int:
        if name not in self.row_index:
            raise QpsFormatError(f"unresolved row name '{name}'", line_number)
        return self.row_index[name]

    def _col(self, name: str, line_number: int) -> int:
        if name not in self.col_index:
            raise QpsFormatError(f"unresolved column name '{name}'", line_number)
        return self.col_index[name]

    def _read_rows(self, tokens: list[str], line_number: int):
        sense, name = tokens[0].upper(), tokens[1]
        if name in self.row_index or name == self.raw.objective_name:
            raise QpsFormatError(f"duplicate row name '{name}'", line_number)
        if sense == "N":
            if not self.raw.objective_name:
                self.raw.objective_name = name
            else:
                logger.info(f"Dropping free row '{name}'.")
                self.row_index[name] = -1
            return
        if sense not in ("L", "E", "G"):
            raise QpsFormatError(f"unknown row sense '{tokens[0]}'", line_number)
        self.row_index[name] = len(self.raw.row_names)
        self.raw.row_names.append(name)
        self.raw.row_senses.append(sense)  # type: ignore[arg-type]

    def _read_columns(self, tokens: list[str], line_number: int):
        if tokens[1] == "'MARKER'":
            return
        name = tokens[0]
        if name != self.current_col:
            if name in self.col_index:
                raise QpsFormatError(f"duplicate column name '{name}'", line_number)
            self.col_index[name] = len(self.raw.col_names)
            self.raw.col_names.append(name)
            self.c.append(0.0)
            self.current_col = name
        j = self.col_index[name]
        for row_name, text in zip(tokens[1::2], tokens[2::2]):
            value = _parse_number(text, line_number)
            if row_name == self.raw.objective_name:
                self.c[j] = value
                continue
            i = self._row(row_name, line_number)
            if i < 0:
                continue
            if (i, j) in self.raw.coefficients:
                raise QpsFormatError(f"duplicate entry ({row_name}, {name})", line_number)
            self.raw.coefficients[(i, j)] = value

    def _pairs(self, tokens: list[str]) -> list[tuple[str, str]]:
        # an odd count means the record starts with a set name
        if len(tokens) % 2 == 1:
            tokens = tokens[1:]
        return list(zip(tokens[0::2], tokens[1::2]))

    def _read_rhs(self, tokens: list[str], line_number: int):
        for row_name, text in self._pairs(tokens):
            value = _parse_number(text, line_number)
            if row_name == self.raw.objective_name:
                logger.info(f"Objective row '{row_name}' appears in RHS; read as the objective constant.")
                self.raw.objective_rhs = value
                continue
            i = self._row(row_name, line_number)
            if i >= 0:
                self.rhs[i] = value

    def _read_ranges(self, tokens: list[str], line_number: int):
        for row_name, text in self._pairs(tokens):
            i = self._row(row_name, line_number)
            if i >= 0:
                self.raw.ranges[i] = _parse_number(text, line_number)

    def _read_bounds(self, tokens: list[str], line_number: int):
        kind = tokens[0].upper()
        if kind in _VALUE_BOUNDS:
            if len(tokens) < 3:
                raise QpsFormatError(f"bound {kind} needs a value", line_number)
            col_name, value = tokens[-2], _parse_number(tokens[-1], line_number)
        elif kind in _FLAG_BOUNDS:
            # an optional set name precedes the column; BV may carry a trailing value
            candidates = [token for token in tokens[1:3] if token in self.col_index]
            col_name = candidates[-1] if candidates else tokens[-1]
            value = 0.0
        else:
            raise QpsFormatError(f"unknown bound type '{tokens[0]}'", line_number)
        j = self._col(col_name, line_number)
        lower, upper = self.bounds.get(j, (0.0, np.inf))
        lower, upper = self._apply_bound(kind, value, lower, upper, col_name)  # type: ignore[arg-type]
        self.bounds[j] = (lower, upper)

    @staticmethod
    def _apply_bound(kind: BoundKind, value: float, lower: float, upper: float, col_name: str):
        if kind in ("UP", "UI"):
            if value < 0 and lower == 0.0:
                logger.warning(f"Negative upper bound on '{col_name}' with zero lower bound; lower bound set to -inf.")
                lower = -np.inf
            return lower, value
        if kind in ("LO", "LI"):
            return value, upper
        if kind == "FX":
            return value, value
        if kind == "FR":
            return -np.inf, np.inf
        if kind == "MI":
            return -np.inf, upper
        if kind == "PL":
            return lower, np.inf
        # BV
        return 0.0, 1.0

    def _read_quadobj(self, tokens: list[str], line_number: int):
        i = self._col(tokens[0], line_number)
        j = self._col(tokens[1], line_number)
        value = _parse_number(tokens[2], line_number)
        key = (max(i, j), min(i, j))
        if key in self.raw.quadratic:
            raise QpsFormatError(f"duplicate quadratic entry ({tokens[0]}, {tokens[1]})", line_number)
        self.raw.quadratic[key] = value

    def _read_qmatrix(self, tokens: list[str], line_number: int):
        i = self._col(tokens[0], line_number)
        j = self._col(tokens[1], line_number)
        value = _parse_number(tokens[2], line_number)
        if (i, j) in self.quadratic_pairs:
            raise QpsFormatError(f"duplicate quadratic entry ({tokens[0]}, {tokens[1]})", line_number)
        self.quadratic_pairs.add((i, j))
        key = (max(i, j), min(i, j))
        if key in self.raw.quadratic and self.raw.quadratic[key] != value:
            raise QpsFormatError(
                f"QMATRIX is not symmetric at ({tokens[0]}, {tokens[1]})", line_number
            )
        self.raw.quadratic[key] = value

    def _build(self) -> RawQp:
        raw = self.raw
        n, m = raw.num_cols, raw.num_rows
        raw.c = np.array(self.c, dtype=float)
        raw.rhs = np.zeros(m)
        for i, value in self.rhs.items():
            raw.rhs[i] = value
        raw.lower = np.zeros(n)
        raw.upper = np.full(n, np.inf)
        for j, (lower, upper) in self.bounds.items():
            raw.lower[j] = lower
            raw.upper[j] = upper
        return raw


def parse_qps(data: bytes | str, name: str | None = None) -> RawQp:
    """
    Parses QPS content into a `RawQp`.

    Any input yields either a `RawQp` or a `QpsFormatError` naming the offending line.
    """
    if isinstance(data, bytes):
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError:
            try:
                text = data.decode("latin-1")
            except UnicodeDecodeError as e:  # pragma: no cover - latin-1 decodes every byte
                raise QpsFormatError(f"undecodable input: {e}") from e
    else:
        text = data
    return _QpsReader(name).read(text)


def _format_number(value: float) -> str:
    return repr(float(value))


def _record(fixed: bool, kind: str, *fields: str) -> str:
    """
    One data record; in fixed layout each field starts at its column and must fit its width.
    """
    if not fixed:
        return f" {kind:<2} {'  '.join(fields)}"
    line = ""
    for (start, end), value in zip(_FIXED_FIELDS, (kind, *fields)):
        if len(value) > end - start:
            raise ValueError(f"'{value}' does not fit a {end - start} character fixed field.")
        line = line.ljust(start) + value
    return line.rstrip()


def write_qps(raw: RawQp) -> str:
    """
    Serializes `raw` so that parsing it gives back `raw`.

    The whitespace-delimited layout is used unless a name contains a blank, which
    needs the fixed-column layout.
    """
    objective_name = raw.objective_name or "OBJ"
    fixed = any(" " in name for name in [objective_name, *raw.row_names, *raw.col_names])
    lines: list[str] = [f"NAME          {raw.name}".rstrip(), "ROWS", _record(fixed, "N", objective_name)]
    for sense, row_name in zip(raw.row_senses, raw.row_names):
        lines.append(_record(fixed, sense, row_name))

    lines.append("COLUMNS")
    by_col: dict[int, list[tuple[int, float]]] = {}
    for (i, j), value in sorted(raw.coefficients.items(), key=lambda item: (item[0][1], item[0][0])):
        by_col.setdefault(j, []).append((i, value))
    for j, col_name in enumerate(raw.col_names):
        # every column is declared, even when it has no coefficient at all
        lines.append(_record(fixed, "", col_name, objective_name, _format_number(raw.c[j])))
        for i, value in by_col.get(j, []):
            lines.append(_record(fixed, "", col_name, raw.row_names[i], _format_number(value)))

    lines.append("RHS")
    if raw.objective_rhs != 0.0:
        lines.append(_record(fixed, "", "RHS", objective_name, _format_number(raw.objective_rhs)))
    for i, value in enumerate(raw.rhs):
        if value != 0.0:
            lines.append(_record(fixed, "", "RHS", raw.row_names[i], _format_number(value)))

    if raw.ranges:
        lines.append("RANGES")
        for i, value in sorted(raw.ranges.items()):
            lines.append(_record(fixed, "", "RNG", raw.row_names[i], _format_number(value)))

    bound_lines = _bound_lines(raw, fixed)
    if bound_lines:
        lines.append("BOUNDS")
        lines.extend(bound_lines)

    if raw.quadratic_section is not None:
        lines.append(raw.quadratic_section)
        for (i, j), value in sorted(raw.quadratic.items()):
            lines.append(_record(fixed, "", raw.col_names[i], raw.col_names[j], _format_number(value)))
            if raw.quadratic_section == "QMATRIX" and i != j:
                lines.append(_record(fixed, "", raw.col_names[j], raw.col_names[i], _format_number(value)))

    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def _bound_lines(raw: RawQp, fixed: bool) -> list[str]:
    lines: list[str] = []
    for j, col_name in enumerate(raw.col_names):
        lower, upper = raw.lower[j], raw.upper[j]
        if lower == upper:
            lines.append(_record(fixed, "FX", "BND", col_name, _format_number(lower)))
            continue
        if np.isneginf(lower) and np.isposinf(upper):
            lines.append(_record(fixed, "FR", "BND", col_name))
            continue
        if np.isneginf(lower):
            lines.append(_record(fixed, "MI", "BND", col_name))
        if np.isfinite(upper):
            lines.append(_record(fixed, "UP", "BND", col_name, _format_number(upper)))
        # UP < 0 with a zero lower bound would reset the lower bound, so LO follows UP
        if np.isfinite(lower) and (lower != 0.0 or (np.isfinite(upper) and upper < 0)):
            lines.append(_record(fixed, "LO", "BND", col_name, _format_number(lower)))
    return lines


def load_problem(path: str | Path, min_inequalities: int = 4) -> QpProblem:
    """
    Reads, parses and preprocesses the QPS file at `path` into a `QpProblem`.
    """
    path = Path(path)
    raw = parse_qps(path.read_bytes(), name=None)
    if not raw.name:
        raw.name = path.stem
    return preprocess(raw, min_inequalities=min_inequalities)
