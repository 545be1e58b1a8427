"""
Report Output Module

Deterministic output-directory layout and the JSON, JSON-lines and CSV
writers/readers for metrics, per-query ranks, histograms and training logs.
"""

import csv
import json
import logging
import threading
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

from .analysis import NegDistReport, Neighbor
from .evaluator import Direction, RankResult
from .exceptions import SphereKGEError

logger = logging.getLogger(__name__)

RANKS_HEADER = ("triple_index", "direction", "rank", "reciprocal_rank")
HISTOGRAM_HEADER = ("bin_lo", "bin_hi", "count")


class OutputDirectory:
    """Names every artifact a command writes under one run directory."""

    def __init__(self, base_output_dir):
        """
        Initialize the run directory.

        Args:
            base_output_dir: Directory for all artifacts of one run
        """
        self.base_output_dir = Path(base_output_dir)
        self.base_output_dir.mkdir(parents=True, exist_ok=True)

    @property
    def checkpoint(self) -> Path:
        return self.base_output_dir / "model.ckpt"

    @property
    def train_log(self) -> Path:
        return self.base_output_dir / "train.log.jsonl"

    @property
    def resolved_config(self) -> Path:
        return self.base_output_dir / "config.resolved"

    @property
    def metrics(self) -> Path:
        return self.base_output_dir / "metrics.json"

    @property
    def ranks(self) -> Path:
        return self.base_output_dir / "ranks.csv"

    @property
    def metrics_by_category(self) -> Path:
        return self.base_output_dir / "metrics_by_category.json"

    @property
    def negatives_histogram(self) -> Path:
        return self.base_output_dir / "negatives_histogram.csv"

    @property
    def negatives_moments(self) -> Path:
        return self.base_output_dir / "negatives_moments.json"

    @property
    def stats(self) -> Path:
        return self.base_output_dir / "stats.json"

    @property
    def grid(self) -> Path:
        return self.base_output_dir / "grid.jsonl"

    def command_config(self, command: str) -> Path:
        """Echo file of a command that does not own the run, e.g. ``config.analyze-knn.resolved``."""
        slug = "-".join(command.split())
        return self.base_output_dir / f"config.{slug}.resolved"

    def knn(self, label: str) -> Path:
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in label).strip("._") or "entity"
        return self.base_output_dir / f"knn_{safe[:100]}.csv"

    def subdirectory(self, name: str) -> "OutputDirectory":
        return OutputDirectory(self.base_output_dir / name)


def save_json(path, data: Dict) -> Path:
    """Write a JSON document with stable key order."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, ensure_ascii=False)
        f.write("\n")
    logger.debug(f"Saved {path}")
    return path


def load_json(path) -> Dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def save_ranks_csv(path, ranks: Sequence[RankResult]) -> Path:
    """Write triple_index, direction, rank, reciprocal_rank per query."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RANKS_HEADER)
        for result in ranks:
            writer.writerow((result.triple_index, Direction(result.direction).value,
                             repr(float(result.rank)), repr(result.reciprocal_rank)))
    logger.debug(f"Saved {len(ranks)} ranks to {path}")
    return path


def load_ranks_csv(path) -> List[RankResult]:
    """Read a file written by :func:`save_ranks_csv`."""
    path = Path(path)
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        missing = set(RANKS_HEADER[:3]) - set(reader.fieldnames or ())
        if missing:
            raise SphereKGEError(f"{path} is missing column(s): {', '.join(sorted(missing))}")
        return [
            RankResult(triple_index=int(row["triple_index"]), direction=Direction(row["direction"]),
                       rank=float(row["rank"]))
            for row in reader
        ]


def save_histogram_csv(path, report: NegDistReport) -> Path:
    """Write (bin_lo, bin_hi, count) rows of a negative-score histogram."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(HISTOGRAM_HEADER)
        for lo, hi, count in report.histogram_rows():
            writer.writerow((repr(lo), repr(hi), count))
    return path


def save_neighbors_csv(path, anchor: str, neighbors: Iterable[Neighbor]) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("anchor", "rank", "label", "name", "distance"))
        for position, neighbor in enumerate(neighbors, start=1):
            writer.writerow((anchor, position, neighbor.label, neighbor.name or "", repr(neighbor.distance)))
    return path


class JsonlLog:
    """Append-only JSON-lines log, one object per line."""

    def __init__(self, path, truncate: bool = True):
        """
        Initialize the log.

        Args:
            path: Log file
            truncate: Start from an empty file
        """
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        if truncate:
            self.path.write_text("", encoding="utf-8")

    def append(self, record: Dict) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_jsonl(path) -> List[Dict]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def write_flat_config(path, values: Dict[str, object], header: Optional[str] = None) -> Path:
    """Write ``KEY=value`` lines readable by the config loader."""
    path = Path(path)
    lines = []
    if header:
        lines.append(f"# {header}")
    for key, value in values.items():
        if value is None:
            text = ""
        elif isinstance(value, bool):
            text = "true" if value else "false"
        elif isinstance(value, float):
            text = repr(value)
        else:
            text = str(value)
        lines.append(f"{key.upper()}={text}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path
