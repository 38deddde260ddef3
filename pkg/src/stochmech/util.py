"""Small shared helpers (CSV formatting)."""

import csv
import math
from pathlib import Path


def fmt_float(x: float) -> str:
    """Render a float with full round-trip precision, locale-independent."""
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    """Write rows of already-stringified cells under a header line."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def field_value_cell(value: float, diverged: bool) -> str:
    """CSV cell for a field value: 'inf'/'-inf' kept, bare NaN of a diverged
    node written as an empty cell."""
    if diverged and math.isnan(value):
        return ""
    return fmt_float(value)
