"""Per-epoch CSV logs and CSV data grids.

Reals are written with 9 significant digits; a missing value (no eval this
epoch, no finished episode) is written as ``nan``.
"""

import csv
import logging
import math
from dataclasses import astuple
from dataclasses import dataclass
from dataclasses import fields
from pathlib import Path

from soliplex.safepolicy import SafePolicyError

logger = logging.getLogger(__name__)


class LogWriteError(SafePolicyError):
    pass


@dataclass(frozen=True)
class EpochLogRow:
    epoch: int
    env_steps: int
    train_return: float
    train_episode_cost: float
    eval_return: float
    eval_episode_cost: float
    lambda_: float
    score_loss: float
    q_loss: float
    qc_loss: float
    mean_ess: float


# "lambda" is a keyword; the attribute carries a trailing underscore
HEADER = [f.name.rstrip("_") for f in fields(EpochLogRow)]
_INT_FIELDS = frozenset({"epoch", "env_steps"})


def format_value(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, bool | int):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    return f"{value:.9g}"


def write_header(path: str | Path) -> Path:
    """Create (or truncate) *path* holding only the header line."""
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow(HEADER)
    except OSError as e:
        raise LogWriteError(f"Cannot write log file {p}: {e}") from e
    return p


def write_log_row(path: str | Path, row: EpochLogRow) -> None:
    """Append *row*, writing the header first if the file does not exist yet.

    Raises:
        LogWriteError: On any I/O failure.
    """
    p = Path(path)
    if not p.exists():
        write_header(p)
    try:
        with open(p, "a", newline="", encoding="utf-8") as f:
            csv.writer(f, lineterminator="\n").writerow([format_value(v) for v in astuple(row)])
            f.flush()
    except OSError as e:
        raise LogWriteError(f"Cannot append to log file {p}: {e}") from e


def read_log_rows(path: str | Path) -> list[EpochLogRow]:
    p = Path(path)
    with open(p, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != HEADER:
            raise LogWriteError(f"{p} does not carry the epoch-log header")
        rows = []
        for record in reader:
            values = [int(record[name]) if name in _INT_FIELDS else float(record[name]) for name in HEADER]
            rows.append(EpochLogRow(*values))
    return rows


def write_grid(path: str | Path, header: list[str], rows) -> Path:
    """Write a numeric table (landscape grids, check curves) with the same number format."""
    p = Path(path)
    try:
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
    except OSError as e:
        raise LogWriteError(f"Cannot write data file {p}: {e}") from e
    logger.debug("wrote %s", p)
    return p
