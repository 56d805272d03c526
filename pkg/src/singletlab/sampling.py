"""Seedable random sources, sphere sampling, and the experiment runner.

Reproducibility contract: a (seed, config) pair fully determines the output.
Events are generated in fixed-size blocks; block ``j`` derives two RNG
substreams from the run seed via ``SeedSequence(seed, spawn_key=(j, s))``,
one for setting choices (s = 0) and one for hidden variables and outcome
randomness (s = 1).  Because settings and hidden variables never share a
stream, their independence holds by construction rather than asymptotically,
and because blocks own their substreams, running blocks in any grouping or
on any number of workers yields the same multiset of events.
"""

from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Iterator, Sequence, TextIO, Union

import numpy as np

from .geometry import UnitVector

if TYPE_CHECKING:  # pragma: no cover
    from .models import Model

#: Number of events per RNG block.  Fixed: changing it changes the streams.
BLOCK_SIZE = 65536

_SEED_MASK = (1 << 64) - 1


def sample_sphere(rng: np.random.Generator) -> UnitVector:
    """One draw from the uniform distribution on the unit 2-sphere."""
    return UnitVector.from_array(sample_sphere_batch(rng, 1)[0])


def sample_sphere_batch(rng: np.random.Generator, n: int) -> np.ndarray:
    """(n, 3) array of uniform sphere points via normalized Gaussian triples."""
    v = rng.normal(size=(n, 3))
    norms = np.linalg.norm(v, axis=1)
    bad = norms < 1e-12
    while bad.any():  # astronomically rare; keeps the map total
        idx = np.nonzero(bad)[0]
        v[idx] = rng.normal(size=(len(idx), 3))
        norms[idx] = np.linalg.norm(v[idx], axis=1)
        bad[idx] = norms[idx] < 1e-12
    return v / norms[:, None]


# ---------------------------------------------------------------------------
# Settings grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SettingsGrid:
    """Finite labeled measurement directions for the two wings."""

    wing_a: tuple[tuple[str, UnitVector], ...]
    wing_b: tuple[tuple[str, UnitVector], ...]

    def __post_init__(self) -> None:
        for name, wing in (("A", self.wing_a), ("B", self.wing_b)):
            if not wing:
                raise ValueError(f"wing {name} must be non-empty")
            labels = [label for label, _ in wing]
            if len(set(labels)) != len(labels):
                raise ValueError(f"wing {name} labels must be unique")

    @property
    def labels_a(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.wing_a)

    @property
    def labels_b(self) -> tuple[str, ...]:
        return tuple(label for label, _ in self.wing_b)

    def vectors_a(self) -> np.ndarray:
        return np.array([v.as_array() for _, v in self.wing_a])

    def vectors_b(self) -> np.ndarray:
        return np.array([v.as_array() for _, v in self.wing_b])


_ANGLE_RE = re.compile(
    r"^\s*(?P<sign>-)?\s*(?:(?P<coef>\d+(?:\.\d*)?|\.\d+)\s*\*?\s*)?"
    r"(?P<pi>pi)?\s*(?:/\s*(?P<den>\d+(?:\.\d*)?|\.\d+))?\s*$"
)


def parse_angle(text: Union[str, float, int]) -> float:
    """Parse an angle in radians, with ``pi`` literal arithmetic.

    Accepts plain numbers plus forms like ``pi``, ``3pi/4``, ``2*pi/3``,
    ``pi/2``, ``-pi`` and ``0.75``.  Using the ``pi`` literal avoids decimal
    drift in thresholds.
    """
    if isinstance(text, (int, float)):
        return float(text)
    m = _ANGLE_RE.match(text)
    if not m or (m.group("coef") is None and m.group("pi") is None):
        raise ValueError(f"cannot parse angle {text!r}")
    value = float(m.group("coef")) if m.group("coef") else 1.0
    if m.group("pi"):
        value *= math.pi
    if m.group("den"):
        den = float(m.group("den"))
        if den == 0.0:
            raise ValueError(f"zero denominator in angle {text!r}")
        value /= den
    return -value if m.group("sign") else value


def planar_grid(
    angles_a: Sequence[Union[str, float]],
    angles_b: Sequence[Union[str, float]],
    prefix_a: str = "a",
    prefix_b: str = "b",
) -> SettingsGrid:
    """Grid of xz-plane directions at the given angles from +z."""
    wing_a = tuple(
        (f"{prefix_a}{i}", UnitVector.from_polar_xz(parse_angle(t)))
        for i, t in enumerate(angles_a)
    )
    wing_b = tuple(
        (f"{prefix_b}{j}", UnitVector.from_polar_xz(parse_angle(t)))
        for j, t in enumerate(angles_b)
    )
    return SettingsGrid(wing_a, wing_b)


def _wing_from_json(entries: list, prefix: str) -> tuple[tuple[str, UnitVector], ...]:
    wing = []
    for i, entry in enumerate(entries):
        label = str(entry.get("label", f"{prefix}{i}"))
        if "vector" in entry:
            x, y, z = (float(c) for c in entry["vector"])
            norm = math.sqrt(x * x + y * y + z * z)
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"grid vector for {label!r} is not unit norm")
            wing.append((label, UnitVector(x / norm, y / norm, z / norm)))
        elif "angle" in entry:
            wing.append((label, UnitVector.from_polar_xz(parse_angle(entry["angle"]))))
        else:
            raise ValueError(f"grid entry {label!r} needs a 'vector' or an 'angle'")
    return tuple(wing)


def grid_from_dict(payload: dict) -> SettingsGrid:
    """Load a grid from its JSON form: {"wingA": [...], "wingB": [...]}."""
    try:
        wing_a = payload["wingA"]
        wing_b = payload["wingB"]
    except (KeyError, TypeError):
        raise ValueError("grid JSON must contain 'wingA' and 'wingB' lists")
    return SettingsGrid(_wing_from_json(wing_a, "a"), _wing_from_json(wing_b, "b"))


def grid_from_json(path: Union[str, Path]) -> SettingsGrid:
    with open(path, "r", encoding="utf-8") as fh:
        return grid_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Run configuration and results
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformIID:
    """Draw both setting indices independently and uniformly per event."""


@dataclass(frozen=True)
class Fixed:
    """Use one fixed settings pair for every event."""

    a_index: int
    b_index: int


SettingPolicy = Union[UniformIID, Fixed]


@dataclass(frozen=True)
class RunConfig:
    model: "Model"
    grid: SettingsGrid
    samples: int
    seed: int
    policy: SettingPolicy = field(default_factory=UniformIID)

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if isinstance(self.policy, Fixed):
            if not 0 <= self.policy.a_index < len(self.grid.wing_a):
                raise ValueError("fixed A index out of range")
            if not 0 <= self.policy.b_index < len(self.grid.wing_b):
                raise ValueError("fixed B index out of range")


@dataclass(frozen=True)
class EventRecord:
    """One simulated run: chosen settings, hidden vector, outcomes."""

    run_index: int
    a_label: str
    b_label: str
    lam: UnitVector
    x: int
    y: int


@dataclass
class RunResult:
    """Column-oriented event store for one experiment run."""

    grid: SettingsGrid
    a_idx: np.ndarray
    b_idx: np.ndarray
    lam: np.ndarray
    x: np.ndarray
    y: np.ndarray
    first_run_index: int = 0

    @property
    def samples(self) -> int:
        return len(self.x)

    def records(self) -> Iterator[EventRecord]:
        labels_a, labels_b = self.grid.labels_a, self.grid.labels_b
        for i in range(self.samples):
            yield EventRecord(
                run_index=self.first_run_index + i,
                a_label=labels_a[self.a_idx[i]],
                b_label=labels_b[self.b_idx[i]],
                lam=UnitVector.from_array(self.lam[i], normalize=True),
                x=int(self.x[i]),
                y=int(self.y[i]),
            )

    @staticmethod
    def concat(parts: Sequence["RunResult"]) -> "RunResult":
        if not parts:
            raise ValueError("nothing to concatenate")
        grid = parts[0].grid
        if any(p.grid != grid for p in parts):
            raise ValueError("cannot merge results from different grids")
        return RunResult(
            grid=grid,
            a_idx=np.concatenate([p.a_idx for p in parts]),
            b_idx=np.concatenate([p.b_idx for p in parts]),
            lam=np.concatenate([p.lam for p in parts]),
            x=np.concatenate([p.x for p in parts]),
            y=np.concatenate([p.y for p in parts]),
            first_run_index=parts[0].first_run_index,
        )


def _block_rngs(seed: int, block: int) -> tuple[np.random.Generator, np.random.Generator]:
    base = seed & _SEED_MASK
    settings = np.random.default_rng(np.random.SeedSequence(base, spawn_key=(block, 0)))
    hidden = np.random.default_rng(np.random.SeedSequence(base, spawn_key=(block, 1)))
    return settings, hidden


def _run_block(cfg: RunConfig, block: int) -> RunResult:
    start = block * BLOCK_SIZE
    n = min(BLOCK_SIZE, cfg.samples - start)
    rng_settings, rng_hidden = _block_rngs(cfg.seed, block)
    n_a, n_b = len(cfg.grid.wing_a), len(cfg.grid.wing_b)
    if isinstance(cfg.policy, Fixed):
        a_idx = np.full(n, cfg.policy.a_index, dtype=np.int64)
        b_idx = np.full(n, cfg.policy.b_index, dtype=np.int64)
    else:
        a_idx = rng_settings.integers(0, n_a, size=n)
        b_idx = rng_settings.integers(0, n_b, size=n)
    x, y, lam = cfg.model.joint_batch(cfg.grid, a_idx, b_idx, rng_hidden)
    return RunResult(cfg.grid, a_idx, b_idx, lam, x, y, first_run_index=start)


def block_count(samples: int) -> int:
    return (samples + BLOCK_SIZE - 1) // BLOCK_SIZE


def run_blocks(cfg: RunConfig, first: int, last: int, threads: int = 1) -> RunResult:
    """Run blocks [first, last) of a config; shards merge into the full run."""
    total = block_count(cfg.samples)
    if not 0 <= first < last <= total:
        raise ValueError(f"block range [{first}, {last}) invalid for {total} blocks")
    blocks = range(first, last)
    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda j: _run_block(cfg, j), blocks))
    else:
        parts = [_run_block(cfg, j) for j in blocks]
    return RunResult.concat(parts)


def run_experiment(cfg: RunConfig, threads: int = 1) -> RunResult:
    """Produce the full event set for a config; byte-for-byte reproducible."""
    return run_blocks(cfg, 0, block_count(cfg.samples), threads=threads)


# ---------------------------------------------------------------------------
# Event sinks
# ---------------------------------------------------------------------------

CSV_HEADER = "run,a,b,lx,ly,lz,x,y"
CSV_HEADER_HIDDEN = "run,a,b,x,y"


def write_events_csv(result: RunResult, out: TextIO, hide_lambda: bool = False) -> None:
    """Write events as CSV; ``hide_lambda`` suppresses the hidden-vector columns."""
    labels_a, labels_b = result.grid.labels_a, result.grid.labels_b
    out.write((CSV_HEADER_HIDDEN if hide_lambda else CSV_HEADER) + "\n")
    for i in range(result.samples):
        run = result.first_run_index + i
        a = labels_a[result.a_idx[i]]
        b = labels_b[result.b_idx[i]]
        if hide_lambda:
            out.write(f"{run},{a},{b},{int(result.x[i])},{int(result.y[i])}\n")
        else:
            lx, ly, lz = (float(c) for c in result.lam[i])
            out.write(
                f"{run},{a},{b},{lx!r},{ly!r},{lz!r},{int(result.x[i])},{int(result.y[i])}\n"
            )


def write_events_jsonl(result: RunResult, out: TextIO, hide_lambda: bool = False) -> None:
    """One JSON object per line, mirroring the CSV columns."""
    labels_a, labels_b = result.grid.labels_a, result.grid.labels_b
    for i in range(result.samples):
        rec = {
            "run": result.first_run_index + i,
            "a": labels_a[result.a_idx[i]],
            "b": labels_b[result.b_idx[i]],
            "x": int(result.x[i]),
            "y": int(result.y[i]),
        }
        if not hide_lambda:
            rec["lambda"] = [float(c) for c in result.lam[i]]
        out.write(json.dumps(rec) + "\n")
