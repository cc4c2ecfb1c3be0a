"""File formats: dataset CSV, run configuration JSON, chain JSON-lines,
summary tables.

All float serialization uses repr-precision JSON so that write followed by
read restores exact values; chains persist one record per line for
streaming-friendly post-hoc estimation.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ct import ChainRecord
from .data import Dataset
from .estimation import PosteriorSummary
from .priors import PriorConfig

ALGORITHMS = ("RJ-A", "RJ-B", "RJ-C", "CT-A", "CT-B", "CT-C")


@dataclass
class RunConfig:
    """One sampler run: variant, length, seeding, prior, parallelism."""

    algorithm: str = "CT-A"
    iterations: int = 20_000
    burnin: int = 1_000
    seed: int = 0
    alpha_mix: float = 0.5
    rotate_scheme: str = "exact"  # "exact" or "mixture"; see CtOptions
    init: str = "greedy"  # "greedy" (grown starting tree) or "root"
    prior: PriorConfig | None = None  # None: calibrate from the data
    min_node_size: int = 5
    threads: int | str = 1  # candidate-evaluation threads; "auto" allowed
    replications: int = 1
    update_sigma2: bool = True

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if not 0 <= self.burnin < self.iterations:
            raise ValueError("need 0 <= burnin < iterations")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 <= self.alpha_mix <= 1.0:
            raise ValueError("alpha_mix must lie in [0, 1]")
        if self.rotate_scheme not in ("exact", "mixture"):
            raise ValueError("rotate_scheme must be 'exact' or 'mixture'")
        if self.init not in ("greedy", "root"):
            raise ValueError("init must be 'greedy' or 'root'")

    def resolved_threads(self) -> int:
        if self.threads == "auto":
            import os

            return min(4, os.cpu_count() or 1)
        return max(1, int(self.threads))

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if self.prior is not None:
            out["prior"] = dataclasses.asdict(self.prior)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = dict(raw)
        prior = raw.get("prior")
        if isinstance(prior, dict):
            raw["prior"] = PriorConfig(**prior)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)


def read_config(path: str | Path) -> RunConfig:
    """Load a RunConfig from a JSON document."""
    with open(path) as fh:
        return RunConfig.from_dict(json.load(fh))


# -- dataset CSV ---------------------------------------------------------------


def load_dataset(
    path: str | Path,
    response: str = "y",
    grid_size: int = 100,
    min_node_size: int = 5,
) -> Dataset:
    """Read a CSV with a header; the named response column plus numeric
    feature columns.

    Features are min-max normalized onto [0, 1] with the affine map recorded
    on the dataset; constant columns are rejected by name.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        rows = list(reader)
    if response not in header:
        raise ValueError(f"{path}: missing response column {response!r}")
    y_col = header.index(response)
    feat_cols = [j for j in range(len(header)) if j != y_col]
    if not feat_cols:
        raise ValueError(f"{path}: no feature columns")
    try:
        values = np.array([[float(cell) for cell in row] for row in rows])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric cell ({exc})") from exc
    X = values[:, feat_cols]
    spans = X.max(axis=0) - X.min(axis=0)
    for j, span in enumerate(spans):
        if span <= 0:
            raise ValueError(f"{path}: feature column {header[feat_cols[j]]!r} is constant")
    already_unit = X.min() >= 0.0 and X.max() <= 1.0
    return Dataset.from_arrays(
        X,
        values[:, y_col],
        grid_size=grid_size,
        min_node_size=min_node_size,
        normalize=not already_unit,
    )


def write_dataset(data: Dataset, path: str | Path, response: str = "y") -> None:
    """Write features (denormalized back to raw units) plus the response."""
    raw = data.features * data.feature_scales + data.feature_offsets
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j + 1}" for j in range(data.d)] + [response])
        for i in range(data.n):
            writer.writerow(
                [repr(float(v)) for v in raw[i]] + [repr(float(data.response[i]))]
            )


# -- chain JSON-lines -----------------------------------------------------------


def write_chain(chain: list[ChainRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for rec in chain:
            fh.write(
                json.dumps(
                    {
                        "iteration": rec.iteration,
                        "tree": rec.tree,
                        "sigma2": rec.sigma2,
                        "waiting_time": rec.waiting_time,
                        "move": rec.move,
                    }
                )
            )
            fh.write("\n")


def read_chain(path: str | Path) -> list[ChainRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                out.append(
                    ChainRecord(
                        iteration=int(raw["iteration"]),
                        tree=str(raw["tree"]),
                        sigma2=float(raw["sigma2"]),
                        waiting_time=float(raw["waiting_time"]),
                        move=str(raw["move"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed record on line {lineno}: {exc}") from exc
    return out


# -- summary tables --------------------------------------------------------------


def _aggregate_rows(rows: list[dict]) -> list[dict]:
    """Mean row per algorithm across replications (numeric columns only)."""
    by_algo: dict[str, list[dict]] = {}
    for row in rows:
        by_algo.setdefault(row["algorithm"], []).append(row)
    out = []
    for algo, group in by_algo.items():
        agg = {"algorithm": algo, "replication": "mean", "seed": ""}
        for key in group[0]:
            if key in agg:
                continue
            vals = [row[key] for row in group if isinstance(row[key], (int, float))]
            agg[key] = float(np.mean(vals)) if vals else ""
        out.append(agg)
    return out


def write_summary(
    summaries: list[PosteriorSummary], path: str | Path, format: str = "csv"
) -> None:
    """One row per (algorithm, replication) plus a mean row per algorithm."""
    rows = [s.to_row() for s in summaries]
    aggregates = _aggregate_rows(rows)
    if format == "json":
        with open(path, "w") as fh:
            json.dump({"rows": rows, "aggregates": aggregates}, fh, indent=2)
            fh.write("\n")
    elif format == "csv":
        fields = list(rows[0].keys()) if rows else []
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in rows + aggregates:
                writer.writerow(row)
    else:
        raise ValueError("format must be 'csv' or 'json'")


def read_summary_rows(path: str | Path) -> list[dict]:
    """Read back the data rows of a summary file (either format)."""
    path = Path(path)
    if path.suffix == ".json":
        with open(path) as fh:
            return json.load(fh)["rows"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for raw in reader:
            if raw.get("replication") == "mean":
                continue
            row = {}
            for key, val in raw.items():
                if key in ("algorithm",):
                    row[key] = val
                else:
                    try:
                        row[key] = float(val)
                    except (TypeError, ValueError):
                        row[key] = val
            rows.append(row)
        return rows
