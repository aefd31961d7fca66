import csv
import json
import logging
from pathlib import Path
from typing import Dict, Tuple, Union

import numpy as np

from models.fields import ScalarField2
from models.grid import Grid2
from models.scenario import GridSpec, SolutionSnapshot

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def field_to_csv(field: ScalarField2, path: PathLike) -> Path:
    """Write x, y, value rows in C order"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    X, Y = field.grid.coordinates()
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x", "y", "value"])
        for x, y, value in zip(X.ravel(), Y.ravel(), field.values.ravel()):
            writer.writerow([repr(float(x)), repr(float(y)), repr(float(value))])
    logger.debug(f"Wrote field CSV {path}")
    return path


def field_from_csv(path: PathLike, grid: Grid2) -> ScalarField2:
    with Path(path).open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    if len(rows) != grid.n_nodes:
        raise ValueError(f"{path} has {len(rows)} rows, grid has {grid.n_nodes} nodes")
    values = np.array([float(row["value"]) for row in rows]).reshape(grid.shape)
    return ScalarField2(grid=grid, values=values)


def write_solution(path: PathLike, model: str, grid: GridSpec, fields: Dict[str, np.ndarray]) -> Path:
    """Schema-versioned JSON snapshot of a solution"""
    snapshot = SolutionSnapshot(
        model=model,
        grid=grid,
        fields={name: np.asarray(values, dtype=float).ravel().tolist() for name, values in fields.items()},
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(snapshot.model_dump_json(indent=2))
    logger.info(f"Wrote solution snapshot {path}")
    return path


def read_solution(path: PathLike) -> Tuple[SolutionSnapshot, Dict[str, np.ndarray]]:
    snapshot = SolutionSnapshot.model_validate(json.loads(Path(path).read_text()))
    fields = {name: np.asarray(values, dtype=float) for name, values in snapshot.fields.items()}
    return snapshot, fields
