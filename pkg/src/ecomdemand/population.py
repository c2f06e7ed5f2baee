"""Household populations: CSV loading and synthetic generation."""

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List

import numpy as np

from .defaults import DEFAULT_POPULATION_SPEC
from .errors import PopulationError
from .model import HouseholdProfile


@dataclass
class Population:
    households: List[HouseholdProfile]
    provenance: str = "file"

    def __post_init__(self):
        if not self.households:
            raise PopulationError("population is empty")
        ids = [h.id for h in self.households]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise PopulationError(f"duplicate household ids: {dupes[:5]}")

    def __len__(self):
        return len(self.households)

    def sizes(self) -> np.ndarray:
        return np.array([h.size for h in self.households], dtype=np.int64)


def load_population(path) -> Population:
    """Read a `household_id,size` CSV; lines starting with '#' are skipped."""
    path = Path(path)
    households = []
    with path.open(newline="") as f:
        rows = [r for r in csv.reader(f) if r and not r[0].startswith("#")]
    if not rows:
        raise PopulationError(f"{path}: no rows")
    header = [c.strip() for c in rows[0]]
    if header[:2] != ["household_id", "size"]:
        raise PopulationError(
            f"{path}: expected header 'household_id,size', got {rows[0]!r}"
        )
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) < 2:
            raise PopulationError(f"{path}: row {lineno}: malformed row {row!r}")
        hid = row[0].strip()
        try:
            size = int(row[1])
        except ValueError:
            raise PopulationError(
                f"{path}: row {lineno}: size {row[1]!r} is not an integer"
            ) from None
        if size < 1:
            raise PopulationError(f"{path}: row {lineno}: size must be >= 1")
        households.append(HouseholdProfile(id=hid, size=size))
    try:
        return Population(households, provenance=f"file:{path.name}")
    except PopulationError as exc:
        raise PopulationError(f"{path}: {exc}") from None


def synthesize_population(count: int, masses: Dict[int, float], seed: int,
                          id_prefix: str = "h") -> Population:
    """Draw household sizes from a discrete distribution; reproducible."""
    if count < 1:
        raise PopulationError(f"count must be >= 1, got {count}")
    sizes = sorted(masses)
    if not sizes or any((not isinstance(s, (int, np.integer))) or s < 1 for s in sizes):
        raise PopulationError(f"size keys must be integers >= 1, got {sizes}")
    probs = np.array([masses[s] for s in sizes], dtype=np.float64)
    if np.any(probs < 0) or probs.sum() <= 0:
        raise PopulationError("size masses must be non-negative with positive sum")
    if abs(probs.sum() - 1.0) > 1e-6:
        raise PopulationError(f"size masses sum to {probs.sum():.6f}, expected 1")
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    draws = rng.choice(np.array(sizes, dtype=np.int64), size=count, p=probs)
    width = len(str(count))
    households = [
        HouseholdProfile(id=f"{id_prefix}{i + 1:0{width}d}", size=int(s))
        for i, s in enumerate(draws)
    ]
    return Population(households, provenance=f"synthetic(seed={seed})")


def default_population() -> Population:
    """The fixed 933-household synthetic population used by default."""
    spec = DEFAULT_POPULATION_SPEC
    return synthesize_population(spec["count"], spec["masses"], spec["seed"])


def write_population(population: Population, path, header_comment: str = None):
    path = Path(path)
    with path.open("w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["household_id", "size"])
        for h in population.households:
            w.writerow([h.id, h.size])
