import csv
import json
import logging
from pathlib import Path
from typing import List, Sequence, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from app.core.exceptions import OutputError

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

Cell = Union[int, float, str]


def format_cell(value: Cell) -> str:
    """17 significant digits for floats, so values survive a round trip"""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


class ResultStore:
    """Output directory holding the CSV tables and JSON documents of one run"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OutputError(f"cannot create output directory {self.out_dir}: {e}")

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Cell]]) -> Path:
        path = self.path(name)
        try:
            with path.open("w", newline="") as handle:
                writer = csv.writer(handle, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    if len(row) != len(header):
                        raise OutputError(f"{name}: row has {len(row)} cells, header has {len(header)}")
                    writer.writerow([format_cell(v) for v in row])
        except OSError as e:
            raise OutputError(f"cannot write {path}: {e}")
        logger.debug(f"Wrote {len(rows)} rows to {path}")
        return path

    def read_csv(self, name: str) -> List[dict]:
        path = self.path(name)
        try:
            with path.open(newline="") as handle:
                return list(csv.DictReader(handle))
        except OSError as e:
            raise OutputError(f"cannot read {path}: {e}")

    def write_json(self, name: str, document: Union[BaseModel, list, dict]) -> Path:
        path = self.path(name)
        if isinstance(document, BaseModel):
            text = document.model_dump_json(indent=2)
        else:
            text = json.dumps(document, indent=2, sort_keys=True)
        try:
            path.write_text(text + "\n")
        except OSError as e:
            raise OutputError(f"cannot write {path}: {e}")
        return path

    def read_json(self, name: str, model: Type[M]) -> M:
        path = self.path(name)
        try:
            return model.model_validate_json(path.read_text())
        except OSError as e:
            raise OutputError(f"cannot read {path}: {e}")
        except ValidationError as e:
            raise OutputError(f"{path} does not match {model.__name__}: {e}")
