"""Outcome-assignment models for the two-wing spin experiment.

Four families are provided:

* ``GrModel`` -- deterministic hidden-vector model whose joint-measurement
  axes are rotated symmetrically about the settings bisector.
* ``BellModel`` -- asymmetric reference variant that rotates only the
  first wing's axis (documented stand-in, not a faithful reconstruction of
  any particular historical construction).
* ``QmOracle`` -- samples outcomes from the analytic singlet statistics
  P(x, y | a, b) = (1 - x*y*cos omega) / 4.
* ``LocalDetMixture`` -- finite mixture of deterministic local response
  strategies, the positive-control family for the constraint checkers.

All models are immutable after construction and their outcome functions are
pure, so they are safe for unrestricted parallel evaluation.
"""

from __future__ import annotations

import enum
import itertools
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

import numpy as np

from .geometry import UnitVector, angle_between, effective_angle, rotate_pair, rotate_towards
from .sampling import SettingsGrid, sample_sphere_batch

if TYPE_CHECKING:  # pragma: no cover
    pass

#: Dot products with absolute value below this are treated as sign ties.
TIE_EPS = 1e-12


class SignUndefined(ValueError):
    """An outcome axis is orthogonal to the hidden vector within TIE_EPS."""


class TiePolicy(enum.Enum):
    """What to do when an outcome sign is undefined (measure-zero event)."""

    PLUS_ONE = "plus_one"  # deterministic default: treat sgn(0) as +1
    RESAMPLE = "resample"  # redraw the hidden vector (batch paths only)
    RAISE = "raise"


class Mode(enum.Enum):
    SINGLE_A = "single_a"
    SINGLE_B = "single_b"
    JOINT = "joint"


@dataclass(frozen=True)
class MeasurementContext:
    """Which wings measure, and along which settings.

    Joint mode requires both settings; single modes carry exactly one.
    """

    mode: Mode
    a: UnitVector | None = None
    b: UnitVector | None = None

    def __post_init__(self) -> None:
        if self.mode is Mode.JOINT:
            if self.a is None or self.b is None:
                raise ValueError("joint mode requires both settings")
        elif self.mode is Mode.SINGLE_A:
            if self.a is None or self.b is not None:
                raise ValueError("single-A mode carries exactly the a setting")
        else:
            if self.b is None or self.a is not None:
                raise ValueError("single-B mode carries exactly the b setting")


@dataclass(frozen=True)
class OutcomePair:
    """Wing outcomes in {-1, +1}; absent entries correspond to unmeasured wings."""

    x: int | None = None
    y: int | None = None

    def __post_init__(self) -> None:
        for v in (self.x, self.y):
            if v is not None and v not in (-1, 1):
                raise ValueError(f"outcome must be -1 or +1, got {v!r}")


def sign_value(value: float, tie: TiePolicy = TiePolicy.PLUS_ONE) -> int:
    """Sign of a dot product under a tie policy (ties default to +1)."""
    if abs(value) < TIE_EPS:
        if tie is TiePolicy.RAISE:
            raise SignUndefined(f"axis.lambda = {value!r} within {TIE_EPS}")
        if tie is TiePolicy.RESAMPLE:
            raise SignUndefined("resample policy is only available on batch paths")
        return 1
    return 1 if value > 0.0 else -1


def gr_outcome(
    ctx: MeasurementContext, lam: UnitVector, tie: TiePolicy = TiePolicy.PLUS_ONE
) -> OutcomePair:
    """Deterministic outcomes of the symmetric hidden-vector model.

    Single-wing measurements read the sign of the raw setting against the
    hidden vector (the second wing with a flipped sign).  Joint measurements
    use the symmetrically rotated axes instead, which is what couples each
    wing's outcome to the remote setting.
    """
    if ctx.mode is Mode.SINGLE_A:
        return OutcomePair(x=sign_value(ctx.a.dot(lam), tie))
    if ctx.mode is Mode.SINGLE_B:
        return OutcomePair(y=-sign_value(ctx.b.dot(lam), tie))
    a_rot, b_rot = rotate_pair(ctx.a, ctx.b)
    return OutcomePair(x=sign_value(a_rot.dot(lam), tie), y=-sign_value(b_rot.dot(lam), tie))


def one_sided_axis(a: UnitVector, b: UnitVector) -> UnitVector:
    """First-wing joint axis of the asymmetric variant.

    The axis lies in span(a, b) on a's side of b and makes the effective
    angle with b; the second wing keeps its raw setting.
    """
    omega = angle_between(a, b)
    target = effective_angle(omega)
    if omega <= 1e-9 or omega >= np.pi - 1e-9:
        # b is (anti)parallel to a; in both limits the rotated axis equals a.
        return a
    return rotate_towards(b, a, target)


def bell_outcome(
    ctx: MeasurementContext, lam: UnitVector, tie: TiePolicy = TiePolicy.PLUS_ONE
) -> OutcomePair:
    """Outcomes of the asymmetric reference variant (only wing A rotates)."""
    if ctx.mode is not Mode.JOINT:
        return gr_outcome(ctx, lam, tie)
    axis = one_sided_axis(ctx.a, ctx.b)
    return OutcomePair(x=sign_value(axis.dot(lam), tie), y=-sign_value(ctx.b.dot(lam), tie))


def qm_probability(ctx: MeasurementContext, outcome: OutcomePair) -> float:
    """Analytic singlet probability of an outcome in a measurement context.

    Joint contexts with both outcomes use (1 - x*y*cos omega) / 4; any
    single-wing outcome has probability 1/2.
    """
    if ctx.mode is Mode.JOINT:
        if outcome.x is not None and outcome.y is not None:
            c = ctx.a.dot(ctx.b)
            return (1.0 - outcome.x * outcome.y * c) / 4.0
        if outcome.x is None and outcome.y is None:
            raise ValueError("joint context needs at least one outcome")
        return 0.5
    if ctx.mode is Mode.SINGLE_A:
        if outcome.x is None:
            raise ValueError("single-A context needs an x outcome")
        return 0.5
    if outcome.y is None:
        raise ValueError("single-B context needs a y outcome")
    return 0.5


# ---------------------------------------------------------------------------
# Batch models (vectorized over events), used by the experiment runner.
# ---------------------------------------------------------------------------


class Model(ABC):
    """A source of joint-mode outcomes over a settings grid."""

    name: str = "model"
    is_deterministic: bool = False
    reproduces_singlet: bool = False

    @abstractmethod
    def joint_batch(
        self,
        grid: SettingsGrid,
        a_idx: np.ndarray,
        b_idx: np.ndarray,
        rng: np.random.Generator,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Produce (x, y, lam) arrays for one batch of joint measurements.

        ``x`` and ``y`` are int8 arrays of +-1, ``lam`` is the (n, 3) array of
        recorded hidden vectors.
        """

    def partition_axes(self, grid: SettingsGrid) -> list[tuple[str, UnitVector]] | None:
        """Axes whose sign cells make this model's outcomes constant per cell.

        Returns None when the model carries no outcome-relevant direction
        information in its recorded hidden vector (a trivial partition is
        then the natural choice).
        """
        return None


def _dedupe_axes(axes: Iterable[tuple[str, UnitVector]]) -> list[tuple[str, UnitVector]]:
    kept: list[tuple[str, UnitVector]] = []
    for label, vec in axes:
        if any(abs(vec.dot(v)) > 1.0 - 1e-10 for _, v in kept):
            continue
        kept.append((label, vec))
    return kept


@lru_cache(maxsize=128)
def _pair_axes(grid: SettingsGrid, one_sided: bool) -> tuple[np.ndarray, np.ndarray]:
    """Per settings-pair joint axes, stacked as (|A|*|B|, 3) arrays."""
    n_a, n_b = len(grid.wing_a), len(grid.wing_b)
    ax_a = np.empty((n_a * n_b, 3))
    ax_b = np.empty((n_a * n_b, 3))
    for i, (_, a_vec) in enumerate(grid.wing_a):
        for j, (_, b_vec) in enumerate(grid.wing_b):
            if one_sided:
                a_rot, b_rot = one_sided_axis(a_vec, b_vec), b_vec
            else:
                a_rot, b_rot = rotate_pair(a_vec, b_vec)
            ax_a[i * n_b + j] = a_rot.as_array()
            ax_b[i * n_b + j] = b_rot.as_array()
    return ax_a, ax_b


@lru_cache(maxsize=128)
def _pair_cosines(grid: SettingsGrid) -> np.ndarray:
    n_b = len(grid.wing_b)
    c = np.empty(len(grid.wing_a) * n_b)
    for i, (_, a_vec) in enumerate(grid.wing_a):
        for j, (_, b_vec) in enumerate(grid.wing_b):
            c[i * n_b + j] = a_vec.dot(b_vec)
    return c


class _HiddenVectorModel(Model):
    """Shared batch machinery for the deterministic hidden-vector models."""

    is_deterministic = True
    reproduces_singlet = True
    _one_sided = False

    def __init__(self, tie: TiePolicy = TiePolicy.PLUS_ONE) -> None:
        if tie not in TiePolicy:
            raise ValueError(f"unknown tie policy {tie!r}")
        self.tie = tie

    def joint_axes(self, a: UnitVector, b: UnitVector) -> tuple[UnitVector, UnitVector]:
        """Effective measurement axes used when both wings measure."""
        if self._one_sided:
            return one_sided_axis(a, b), b
        return rotate_pair(a, b)

    def joint_batch(self, grid, a_idx, b_idx, rng):
        ax_a, ax_b = _pair_axes(grid, self._one_sided)
        pair = a_idx * len(grid.wing_b) + b_idx
        ea, eb = ax_a[pair], ax_b[pair]
        n = len(pair)
        lam = sample_sphere_batch(rng, n)
        da = np.einsum("ij,ij->i", lam, ea)
        db = np.einsum("ij,ij->i", lam, eb)
        ties = (np.abs(da) < TIE_EPS) | (np.abs(db) < TIE_EPS)
        if ties.any():
            if self.tie is TiePolicy.RAISE:
                raise SignUndefined(f"{int(ties.sum())} tied events in batch")
            while self.tie is TiePolicy.RESAMPLE and ties.any():
                idx = np.nonzero(ties)[0]
                lam[idx] = sample_sphere_batch(rng, len(idx))
                da[idx] = np.einsum("ij,ij->i", lam[idx], ea[idx])
                db[idx] = np.einsum("ij,ij->i", lam[idx], eb[idx])
                ties[idx] = (np.abs(da[idx]) < TIE_EPS) | (np.abs(db[idx]) < TIE_EPS)
        x = np.where(da > -TIE_EPS, 1, -1).astype(np.int8)
        y = np.where(db > -TIE_EPS, -1, 1).astype(np.int8)
        return x, y, lam

    def partition_axes(self, grid):
        axes: list[tuple[str, UnitVector]] = []
        for label, vec in grid.wing_a:
            axes.append((f"a[{label}]", vec))
        for label, vec in grid.wing_b:
            axes.append((f"b[{label}]", vec))
        ax_a, ax_b = _pair_axes(grid, self._one_sided)
        n_b = len(grid.wing_b)
        for i, (la, _) in enumerate(grid.wing_a):
            for j, (lb, _) in enumerate(grid.wing_b):
                k = i * n_b + j
                axes.append((f"ahat[{la}|{lb}]", UnitVector.from_array(ax_a[k], normalize=True)))
                axes.append((f"bhat[{la}|{lb}]", UnitVector.from_array(ax_b[k], normalize=True)))
        return _dedupe_axes(axes)


class GrModel(_HiddenVectorModel):
    """Symmetric hidden-vector model (both joint axes rotated)."""

    name = "gr"
    _one_sided = False

    def outcome(self, ctx: MeasurementContext, lam: UnitVector) -> OutcomePair:
        return gr_outcome(ctx, lam, self.tie)


class BellModel(_HiddenVectorModel):
    """Asymmetric reference variant (only the first wing's axis rotated)."""

    name = "bell"
    _one_sided = True

    def outcome(self, ctx: MeasurementContext, lam: UnitVector) -> OutcomePair:
        return bell_outcome(ctx, lam, self.tie)


class QmOracle(Model):
    """Samples outcomes directly from the analytic singlet statistics.

    A hidden vector is still drawn and recorded per event, but it is
    independent of the outcomes: it exists only so that every model emits
    the same event schema.
    """

    name = "qm"
    is_deterministic = False
    reproduces_singlet = True

    def joint_batch(self, grid, a_idx, b_idx, rng):
        pair = a_idx * len(grid.wing_b) + b_idx
        c = _pair_cosines(grid)[pair]
        n = len(pair)
        lam = sample_sphere_batch(rng, n)  # drawn first; decoupled from outcomes
        u = rng.random(n)
        p_same = (1.0 - c) / 4.0
        p_diff = (1.0 + c) / 4.0
        t1 = p_same
        t2 = p_same + p_diff
        t3 = t2 + p_diff
        x = np.where(u < t2, 1, -1).astype(np.int8)
        y = np.where((u < t1) | ((u >= t2) & (u < t3)), 1, -1).astype(np.int8)
        return x, y, lam

    def partition_axes(self, grid):
        axes = [(f"a[{label}]", vec) for label, vec in grid.wing_a]
        axes += [(f"b[{label}]", vec) for label, vec in grid.wing_b]
        return _dedupe_axes(axes)


class LocalDetMixture(Model):
    """Finite mixture of deterministic local response strategies.

    Each strategy assigns an outcome to every setting label of each wing,
    independently of the remote wing's setting.  The recorded hidden vector
    encodes the drawn strategy index on the equatorial circle, and the
    natural audit partition is trivial.
    """

    name = "localdet"
    is_deterministic = True
    reproduces_singlet = False

    def __init__(
        self,
        strategies: Sequence[tuple[Mapping[str, int], Mapping[str, int]]],
        weights: Sequence[float],
    ) -> None:
        if not strategies:
            raise ValueError("mixture needs at least one strategy")
        if len(weights) != len(strategies):
            raise ValueError("one weight per strategy required")
        w = np.asarray(weights, dtype=float)
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"weights must sum to 1, got {total!r}")
        self.weights = w / total
        self.strategies = [
            (dict(resp_a), dict(resp_b)) for resp_a, resp_b in strategies
        ]
        for resp_a, resp_b in self.strategies:
            for resp in (resp_a, resp_b):
                for label, out in resp.items():
                    if out not in (-1, 1):
                        raise ValueError(f"response for {label!r} must be -1 or +1")
        k = len(self.strategies)
        phases = 2.0 * np.pi * np.arange(k) / k
        self._embedding = np.column_stack(
            [np.cos(phases), np.sin(phases), np.zeros(k)]
        )
        self._matrix_cache: dict[SettingsGrid, tuple[np.ndarray, np.ndarray]] = {}

    @classmethod
    def from_dict(cls, payload: Mapping) -> "LocalDetMixture":
        try:
            entries = payload["strategies"]
        except (KeyError, TypeError):
            raise ValueError("mixture JSON must contain a 'strategies' list")
        strategies, weights = [], []
        for entry in entries:
            strategies.append((entry["a"], entry["b"]))
            weights.append(float(entry["weight"]))
        return cls(strategies, weights)

    @classmethod
    def from_json(cls, path: str | Path) -> "LocalDetMixture":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "strategies": [
                {"weight": float(w), "a": dict(ra), "b": dict(rb)}
                for w, (ra, rb) in zip(self.weights, self.strategies)
            ]
        }

    def response_matrices(self, grid: SettingsGrid) -> tuple[np.ndarray, np.ndarray]:
        """Per-strategy outcome lookup tables aligned with a grid's wings."""
        cached = self._matrix_cache.get(grid)
        if cached is not None:
            return cached
        k = len(self.strategies)
        mat_a = np.empty((k, len(grid.wing_a)), dtype=np.int8)
        mat_b = np.empty((k, len(grid.wing_b)), dtype=np.int8)
        for s, (resp_a, resp_b) in enumerate(self.strategies):
            for i, (label, _) in enumerate(grid.wing_a):
                if label not in resp_a:
                    raise ValueError(f"strategy {s} has no response for A setting {label!r}")
                mat_a[s, i] = resp_a[label]
            for j, (label, _) in enumerate(grid.wing_b):
                if label not in resp_b:
                    raise ValueError(f"strategy {s} has no response for B setting {label!r}")
                mat_b[s, j] = resp_b[label]
        self._matrix_cache[grid] = (mat_a, mat_b)
        return mat_a, mat_b

    def joint_batch(self, grid, a_idx, b_idx, rng):
        mat_a, mat_b = self.response_matrices(grid)
        cum = np.cumsum(self.weights)
        cum[-1] = 1.0
        k = np.searchsorted(cum, rng.random(len(a_idx)), side="right")
        x = mat_a[k, a_idx]
        y = mat_b[k, b_idx]
        return x, y, self._embedding[k]

    def outcome_by_label(
        self, a_label: str, b_label: str, index: int, mode: Mode = Mode.JOINT
    ) -> OutcomePair:
        """Deterministic outcome of one strategy; local, so joint and single agree."""
        if not 0 <= index < len(self.strategies):
            raise IndexError(f"strategy index {index} out of range")
        resp_a, resp_b = self.strategies[index]
        if mode is Mode.SINGLE_A:
            return OutcomePair(x=resp_a[a_label])
        if mode is Mode.SINGLE_B:
            return OutcomePair(y=resp_b[b_label])
        return OutcomePair(x=resp_a[a_label], y=resp_b[b_label])


def localdet_outcome(
    mixture: LocalDetMixture,
    a_label: str,
    b_label: str,
    index: int,
    mode: Mode = Mode.JOINT,
) -> OutcomePair:
    """Outcome of strategy `index` of a mixture at the given setting labels."""
    return mixture.outcome_by_label(a_label, b_label, index, mode)


def all_response_functions(labels: Sequence[str]) -> list[dict[str, int]]:
    """Every deterministic response function over a list of setting labels."""
    out = []
    for values in itertools.product((-1, 1), repeat=len(labels)):
        out.append(dict(zip(labels, values)))
    return out


def random_product_mixture(
    labels_a: Sequence[str], labels_b: Sequence[str], rng: np.random.Generator
) -> LocalDetMixture:
    """Random mixture whose wings draw their strategies independently.

    The joint weight over (response_a, response_b) pairs is an outer product
    of per-wing Dirichlet weights, so the two wings' outcomes are independent
    given the settings.  This is the family used as a positive control: it
    satisfies every constraint in the checker suite.
    """
    funcs_a = all_response_functions(labels_a)
    funcs_b = all_response_functions(labels_b)
    w_a = rng.dirichlet(np.ones(len(funcs_a)))
    w_b = rng.dirichlet(np.ones(len(funcs_b)))
    strategies = []
    weights = []
    for fa, wa in zip(funcs_a, w_a):
        for fb, wb in zip(funcs_b, w_b):
            strategies.append((fa, fb))
            weights.append(float(wa * wb))
    return LocalDetMixture(strategies, weights)


def parse_model_spec(spec: str, base_dir: str | Path | None = None) -> Model:
    """Build a model from its CLI/config identifier.

    Accepted forms: ``gr``, ``bell``, ``qm`` and ``localdet:<file.json>``.
    """
    if spec == "gr":
        return GrModel()
    if spec == "bell":
        return BellModel()
    if spec == "qm":
        return QmOracle()
    if spec.startswith("localdet:"):
        path = Path(spec.split(":", 1)[1])
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        return LocalDetMixture.from_json(path)
    raise ValueError(f"unknown model spec {spec!r}")
