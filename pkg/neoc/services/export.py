import csv
import logging
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from pydantic import BaseModel

logger = logging.getLogger(__name__)


def _cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Header row plus one line per row; floats written with repr so reruns are byte-identical."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.info("Wrote %s", path)
    return path


def write_grid(path: Path, points: np.ndarray, columns: dict[str, np.ndarray]) -> Path:
    """Grid CSV: x1..xn followed by one column per named array (K,) or (K, p)."""
    n = points.shape[1]
    header = [f"x{i + 1}" for i in range(n)]
    data = [points[:, i] for i in range(n)]
    for name, values in columns.items():
        values = np.asarray(values, dtype=float).reshape(points.shape[0], -1)
        if values.shape[1] == 1:
            header.append(name)
            data.append(values[:, 0])
        else:
            header.extend(f"{name}_{j + 1}" for j in range(values.shape[1]))
            data.extend(values[:, j] for j in range(values.shape[1]))
    return write_csv(path, header, zip(*data))


def write_json(path: Path, model: BaseModel) -> Path:
    path = Path(path)
    path.write_text(model.model_dump_json(indent=2), encoding="utf-8")
    logger.info("Wrote %s", path)
    return path
