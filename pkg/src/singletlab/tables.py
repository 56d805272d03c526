"""Finite joint probability tables and the conditional-independence checkers.

The central object is a normalized joint distribution over the six labeled
variables (A, B, C, X, Y, Z): the two local settings, the third-party
setting, the two outcomes, and the discretized hidden-variable readout.
Continuous hidden vectors enter through a ``LambdaPartition`` that maps each
vector to a finite cell id; with the default sign-cell partition the
deterministic models' outcomes are constant within every cell, which turns
statements about the continuous hidden variable into exact finite checks.

Each checker tests one family of conditional identities and reports the
worst total-variation deviation over conditioning assignments together with
the witnessing assignment.  Tables built from samples are checked against a
loose 4-sigma style tolerance per conditioning event; analytically
constructed tables are checked in exact mode at 1e-9.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from .geometry import UnitVector
from .models import TIE_EPS, LocalDetMixture, Model
from .sampling import RunResult, SettingsGrid

VARIABLES = ("A", "B", "C", "X", "Y", "Z")

#: Deviation bound for exact-mode checks on analytic tables.
EXACT_TOL = 1e-9

#: Conditioning events with fewer samples than this are skipped (and counted).
FLOOR_COUNT = 10

Label = Union[str, int]


class ZeroConditioningEvent(ValueError):
    """The requested conditioning assignment has zero probability."""


class AllConditioningEventsEmpty(ValueError):
    """Every conditioning assignment of a check fell below the sample floor."""


class EmptyEventStream(ValueError):
    """A table was requested from a run with no events."""


# ---------------------------------------------------------------------------
# Joint tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class JointTable:
    """Normalized joint distribution over (A, B, C, X, Y, Z).

    ``alphabets`` maps each variable name to its ordered label tuple;
    ``p`` has one axis per variable, in ``VARIABLES`` order.  ``samples`` is
    the event count behind an empirical table, or None for analytic tables
    (which selects exact-mode checking).
    """

    alphabets: Mapping[str, tuple[Label, ...]]
    p: np.ndarray
    samples: int | None = None

    def __post_init__(self) -> None:
        if tuple(self.alphabets.keys()) != VARIABLES:
            raise ValueError(f"alphabets must cover {VARIABLES} in order")
        shape = tuple(len(self.alphabets[v]) for v in VARIABLES)
        if self.p.shape != shape:
            raise ValueError(f"probability array shape {self.p.shape} != {shape}")
        if (self.p < -1e-12).any():
            raise ValueError("negative probability entry")
        total = float(self.p.sum())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"table mass {total!r} not normalized")

    def axis(self, var: str) -> int:
        return VARIABLES.index(var)

    def label_index(self, var: str, label: Label) -> int:
        try:
            return self.alphabets[var].index(label)
        except ValueError:
            raise KeyError(f"label {label!r} not in alphabet of {var}")

    def joint(self, keep: Sequence[str]) -> np.ndarray:
        """Marginal over ``keep``, with all other axes kept at size 1."""
        drop = tuple(i for i, v in enumerate(VARIABLES) if v not in keep)
        return self.p.sum(axis=drop, keepdims=True)

    def marginal(self, keep: Sequence[str]) -> np.ndarray:
        """Marginal over ``keep`` with the dropped axes removed."""
        drop = tuple(i for i, v in enumerate(VARIABLES) if v not in keep)
        return self.p.sum(axis=drop)

    def to_dict(self) -> dict:
        return {
            "variables": list(VARIABLES),
            "alphabets": {v: list(self.alphabets[v]) for v in VARIABLES},
            "p": [float(v) for v in self.p.reshape(-1)],
            "samples": self.samples,
        }

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def from_dict(cls, payload: Mapping) -> "JointTable":
        alphabets = {
            v: tuple(payload["alphabets"][v]) for v in VARIABLES
        }
        shape = tuple(len(alphabets[v]) for v in VARIABLES)
        p = np.asarray(payload["p"], dtype=float).reshape(shape)
        return cls(alphabets=alphabets, p=p, samples=payload.get("samples"))

    @classmethod
    def from_json(cls, path: str | Path) -> "JointTable":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def make_table(
    p: np.ndarray,
    *,
    labels_a: Sequence[Label],
    labels_b: Sequence[Label],
    labels_c: Sequence[Label] = ("observe-lambda",),
    labels_z: Sequence[Label] = ("z0",),
    samples: int | None = None,
    normalize: bool = False,
) -> JointTable:
    """Assemble a JointTable with the standard outcome alphabets (-1, +1)."""
    if normalize:
        p = p / p.sum()
    return JointTable(
        alphabets={
            "A": tuple(labels_a),
            "B": tuple(labels_b),
            "C": tuple(labels_c),
            "X": (-1, 1),
            "Y": (-1, 1),
            "Z": tuple(labels_z),
        },
        p=p,
        samples=samples,
    )


# ---------------------------------------------------------------------------
# Hidden-variable partitions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrivialPartition:
    """Single cell covering the whole sphere."""

    def codes(self, lam: np.ndarray) -> np.ndarray:
        return np.zeros(len(lam), dtype=np.int64)

    def label_for(self, code: int) -> str:
        return "z0"


@dataclass(frozen=True)
class SignCellPartition:
    """Cells defined by the sign pattern of the hidden vector against axes.

    Every vector maps to exactly one cell; dot products within TIE_EPS of
    zero count as positive, matching the models' default tie convention so
    that deterministic outcomes stay constant per cell.
    """

    axes: tuple[tuple[str, UnitVector], ...]

    def __post_init__(self) -> None:
        if not self.axes:
            raise ValueError("sign-cell partition needs at least one axis")
        if len(self.axes) > 62:
            raise ValueError("too many axes for int64 sign codes")

    def _axis_matrix(self) -> np.ndarray:
        return np.array([vec.as_array() for _, vec in self.axes])

    def codes(self, lam: np.ndarray) -> np.ndarray:
        dots = np.asarray(lam) @ self._axis_matrix().T
        bits = (dots > -TIE_EPS).astype(np.int64)
        weights = np.int64(1) << np.arange(len(self.axes), dtype=np.int64)
        return bits @ weights

    def label_for(self, code: int) -> str:
        return "".join(
            "+" if (int(code) >> i) & 1 else "-" for i in range(len(self.axes))
        )


LambdaPartition = Union[TrivialPartition, SignCellPartition]


def default_partition(model: Model, grid: SettingsGrid) -> LambdaPartition:
    """The model's natural partition: sign cells over its effective axes,
    or the trivial partition when its hidden record carries no direction."""
    axes = model.partition_axes(grid)
    if axes is None:
        return TrivialPartition()
    return SignCellPartition(tuple(axes))


def build_table(
    result: RunResult,
    partition: LambdaPartition,
    *,
    c_label: str = "observe-lambda",
) -> JointTable:
    """Empirical joint table of one run, with Z = partition cell of lambda."""
    n = result.samples
    if n == 0:
        raise EmptyEventStream("no events to tabulate")
    codes = partition.codes(result.lam)
    uniq, z_idx = np.unique(codes, return_inverse=True)
    labels_z = tuple(partition.label_for(c) for c in uniq)
    n_a = len(result.grid.wing_a)
    n_b = len(result.grid.wing_b)
    shape = (n_a, n_b, 1, 2, 2, len(uniq))
    flat = np.ravel_multi_index(
        (
            result.a_idx,
            result.b_idx,
            np.zeros(n, dtype=np.int64),
            (result.x > 0).astype(np.int64),
            (result.y > 0).astype(np.int64),
            z_idx,
        ),
        shape,
    )
    counts = np.bincount(flat, minlength=int(np.prod(shape))).reshape(shape)
    return make_table(
        counts / n,
        labels_a=result.grid.labels_a,
        labels_b=result.grid.labels_b,
        labels_c=(c_label,),
        labels_z=labels_z,
        samples=n,
    )


# ---------------------------------------------------------------------------
# Conditionals
# ---------------------------------------------------------------------------


def conditional(
    table: JointTable,
    targets: Sequence[str],
    givens: Sequence[str],
    assignment: Mapping[str, Label],
) -> np.ndarray:
    """Normalized conditional distribution over ``targets``.

    The returned array has one axis per target variable, in table order.
    Raises ZeroConditioningEvent when the conditioning event has no mass.
    """
    targets = [v for v in VARIABLES if v in targets]
    givens_list = [v for v in VARIABLES if v in givens]
    missing = set(givens) - set(givens_list)
    if missing or set(assignment) != set(givens_list):
        raise KeyError("assignment must cover exactly the given variables")
    joint = table.marginal(targets + givens_list)
    kept = [v for v in VARIABLES if v in targets or v in givens_list]
    idx = []
    for v in kept:
        if v in assignment:
            idx.append(table.label_index(v, assignment[v]))
        else:
            idx.append(slice(None))
    sub = joint[tuple(idx)]
    mass = float(sub.sum())
    if mass <= 0.0:
        raise ZeroConditioningEvent(f"P({assignment!r}) = 0")
    return sub / mass


def statistical_tolerance(alphabet_size: float, n, c: float = 4.0):
    """Loose 4-sigma style bound c * sqrt(k / n) for an empirical conditional.

    ``n`` is the sample count of the conditioning event (scalar or array).
    """
    return c * np.sqrt(alphabet_size / np.asarray(n, dtype=float))


# ---------------------------------------------------------------------------
# Constraint checkers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstraintReport:
    constraint_id: str
    passed: bool
    max_deviation: float
    tolerance: float
    witness: dict | None
    skipped_cells: int

    def to_dict(self) -> dict:
        return {
            "id": self.constraint_id,
            "pass": self.passed,
            "max_deviation": self.max_deviation,
            "tolerance": self.tolerance,
            "witness": self.witness,
            "skipped_cells": self.skipped_cells,
        }


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape))
    np.divide(num, den, out=out, where=den > 0)
    return out


@dataclass(frozen=True)
class _Identity:
    """One conditional identity P(targets | givens) = P(targets | reduced)."""

    name: str
    targets: tuple[str, ...]
    givens: tuple[str, ...]
    reduced: tuple[str, ...]


def _identity_scan(table: JointTable, ident: _Identity, floor_mass: float):
    """Worst TV deviation of one identity over its conditioning assignments.

    Returns (tv, n_event, witness_index, evaluated_mask, skipped) where
    ``tv`` and ``n_event`` are arrays over the flattened given-assignment
    space restricted by nothing (masks carry validity).
    """
    p_tg = table.joint(ident.targets + ident.givens)
    p_g = table.joint(ident.givens)
    lhs = _safe_div(p_tg, p_g)
    p_tr = table.joint(ident.targets + ident.reduced)
    p_r = table.joint(ident.reduced)
    rhs = _safe_div(p_tr, p_r)
    target_axes = tuple(VARIABLES.index(v) for v in ident.targets)
    tv = 0.5 * np.abs(lhs - rhs).sum(axis=target_axes, keepdims=True)
    tv = np.broadcast_to(tv, p_g.shape)
    evaluated = p_g >= max(floor_mass, np.finfo(float).tiny)
    skipped = int(((p_g > 0) & ~evaluated).sum())
    return tv, p_g, evaluated, skipped


def _run_check(
    table: JointTable,
    check_id: str,
    identities: Iterable[_Identity],
    *,
    tolerance: float | None = None,
    floor_count: int = FLOOR_COUNT,
) -> ConstraintReport:
    exact = table.samples is None
    fixed_tol = tolerance if tolerance is not None else (EXACT_TOL if exact else None)
    n_total = table.samples if table.samples is not None else 0
    floor_mass = 0.0 if exact else floor_count / n_total
    best = None  # (significance, tv, tol, ident, flat_index, shape)
    skipped_total = 0
    any_evaluated = False
    for ident in identities:
        tv, p_g, evaluated, skipped = _identity_scan(table, ident, floor_mass)
        skipped_total += skipped
        if not evaluated.any():
            continue
        any_evaluated = True
        if fixed_tol is not None:
            tol = np.full(p_g.shape, fixed_tol)
        else:
            k = float(np.prod([len(table.alphabets[v]) for v in ident.targets]))
            tol = statistical_tolerance(k, np.maximum(n_total * p_g, 1e-300))
        significance = np.where(evaluated, tv / tol, -np.inf)
        flat = int(np.argmax(significance))
        sig = float(significance.reshape(-1)[flat])
        if best is None or sig > best[0]:
            best = (
                sig,
                float(tv.reshape(-1)[flat]),
                float(tol.reshape(-1)[flat]),
                ident,
                flat,
                p_g.shape,
            )
    if not any_evaluated:
        raise AllConditioningEventsEmpty(
            f"{check_id}: every conditioning event below floor of {floor_count} samples"
        )
    sig, dev, tol, ident, flat, shape = best
    witness = None
    if sig > 0:
        multi = np.unravel_index(flat, shape)
        witness = {
            v: table.alphabets[v][multi[VARIABLES.index(v)]] for v in ident.givens
        }
        witness["identity"] = ident.name
    return ConstraintReport(
        constraint_id=check_id,
        passed=sig <= 1.0,
        max_deviation=dev,
        tolerance=tol,
        witness=witness,
        skipped_cells=skipped_total,
    )


def check_fr(table: JointTable, **kw) -> ConstraintReport:
    """Free choice: each setting is independent of everything outside its wing,
    including the remote outcome and the hidden readout."""
    return _run_check(
        table,
        "FR",
        [
            _Identity("P(A|BCYZ)=P(A)", ("A",), ("B", "C", "Y", "Z"), ()),
            _Identity("P(B|ACXZ)=P(B)", ("B",), ("A", "C", "X", "Z"), ()),
            _Identity("P(C|ABXY)=P(C)", ("C",), ("A", "B", "X", "Y"), ()),
        ],
        **kw,
    )


def check_ns_full(table: JointTable, **kw) -> ConstraintReport:
    """Full no-signaling: outcome/readout pairs ignore the remote setting."""
    return _run_check(
        table,
        "NS_full",
        [
            _Identity("P(YZ|ABC)=P(YZ|BC)", ("Y", "Z"), ("A", "B", "C"), ("B", "C")),
            _Identity("P(XZ|ABC)=P(XZ|AC)", ("X", "Z"), ("A", "B", "C"), ("A", "C")),
            _Identity("P(XY|ABC)=P(XY|AB)", ("X", "Y"), ("A", "B", "C"), ("A", "B")),
        ],
        **kw,
    )


def check_fw(table: JointTable, **kw) -> ConstraintReport:
    """Free will: each wing's setting is independent of the other wing's
    setting and of the hidden readout (the table-level stand-in for the
    ontic state)."""
    return _run_check(
        table,
        "FW",
        [
            _Identity("P(A|BZ)=P(A)", ("A",), ("B", "Z"), ()),
            _Identity("P(B|AZ)=P(B)", ("B",), ("A", "Z"), ()),
        ],
        **kw,
    )


def check_st(table: JointTable, **kw) -> ConstraintReport:
    """Staticity: the hidden readout's statistics are unchanged by
    conditioning on settings and outcomes."""
    return _run_check(
        table,
        "ST",
        [_Identity("P(CZ|ABXY)=P(CZ)", ("C", "Z"), ("A", "B", "X", "Y"), ())],
        **kw,
    )


def check_ns_weak(table: JointTable, **kw) -> ConstraintReport:
    """Operational no-signaling: each wing's outcome ignores the remote setting."""
    return _run_check(
        table,
        "NS_weak",
        [
            _Identity("P(X|AB)=P(X|A)", ("X",), ("A", "B"), ("A",)),
            _Identity("P(Y|AB)=P(Y|B)", ("Y",), ("A", "B"), ("B",)),
        ],
        **kw,
    )


def check_pi(table: JointTable, **kw) -> ConstraintReport:
    """Parameter independence: given the hidden readout, each outcome
    ignores the remote setting."""
    return _run_check(
        table,
        "PI",
        [
            _Identity("P(X|ABZ)=P(X|AZ)", ("X",), ("A", "B", "Z"), ("A", "Z")),
            _Identity("P(Y|ABZ)=P(Y|BZ)", ("Y",), ("A", "B", "Z"), ("B", "Z")),
        ],
        **kw,
    )


def check_oi(table: JointTable, **kw) -> ConstraintReport:
    """Outcome independence: given settings and hidden readout, each outcome
    ignores the remote outcome."""
    return _run_check(
        table,
        "OI",
        [
            _Identity("P(X|ABYZ)=P(X|ABZ)", ("X",), ("A", "B", "Y", "Z"), ("A", "B", "Z")),
            _Identity("P(Y|ABXZ)=P(Y|ABZ)", ("Y",), ("A", "B", "X", "Z"), ("A", "B", "Z")),
        ],
        **kw,
    )


def check_bloc(
    table: JointTable,
    *,
    tolerance: float | None = None,
    floor_count: int = FLOOR_COUNT,
) -> ConstraintReport:
    """Factorization locality: P(XY|ABZ) = P(X|AZ) * P(Y|BZ)."""
    exact = table.samples is None
    fixed_tol = tolerance if tolerance is not None else (EXACT_TOL if exact else None)
    n_total = table.samples if table.samples is not None else 0
    floor_mass = 0.0 if exact else floor_count / n_total
    p_abz = table.joint(("A", "B", "Z"))
    lhs = _safe_div(table.joint(("A", "B", "Z", "X", "Y")), p_abz)
    px = _safe_div(table.joint(("A", "Z", "X")), table.joint(("A", "Z")))
    py = _safe_div(table.joint(("B", "Z", "Y")), table.joint(("B", "Z")))
    xy_axes = (VARIABLES.index("X"), VARIABLES.index("Y"))
    tv = 0.5 * np.abs(lhs - px * py).sum(axis=xy_axes, keepdims=True)
    tv = np.broadcast_to(tv, p_abz.shape)
    evaluated = p_abz >= max(floor_mass, np.finfo(float).tiny)
    skipped = int(((p_abz > 0) & ~evaluated).sum())
    if not evaluated.any():
        raise AllConditioningEventsEmpty("B-Loc: every conditioning event below floor")
    if fixed_tol is not None:
        tol = np.full(p_abz.shape, fixed_tol)
    else:
        tol = statistical_tolerance(4.0, np.maximum(n_total * p_abz, 1e-300))
    significance = np.where(evaluated, tv / tol, -np.inf)
    flat = int(np.argmax(significance))
    sig = float(significance.reshape(-1)[flat])
    witness = None
    if sig > 0:
        multi = np.unravel_index(flat, p_abz.shape)
        witness = {
            v: table.alphabets[v][multi[VARIABLES.index(v)]] for v in ("A", "B", "Z")
        }
        witness["identity"] = "P(XY|ABZ)=P(X|AZ)P(Y|BZ)"
    return ConstraintReport(
        constraint_id="B-Loc",
        passed=sig <= 1.0,
        max_deviation=float(tv.reshape(-1)[flat]),
        tolerance=float(tol.reshape(-1)[flat]),
        witness=witness,
        skipped_cells=skipped,
    )


ALL_CHECKS = (
    ("FR", check_fr),
    ("NS_full", check_ns_full),
    ("FW", check_fw),
    ("ST", check_st),
    ("NS_weak", check_ns_weak),
    ("PI", check_pi),
    ("OI", check_oi),
    ("B-Loc", check_bloc),
)


def run_all_checks(table: JointTable, **kw) -> list[ConstraintReport]:
    return [fn(table, **kw) for _, fn in ALL_CHECKS]


# ---------------------------------------------------------------------------
# Implication audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    constraints: tuple[ConstraintReport, ...]
    consistent: bool
    notes: tuple[str, ...]

    def report(self, constraint_id: str) -> ConstraintReport:
        for r in self.constraints:
            if r.constraint_id == constraint_id:
                return r
        raise KeyError(constraint_id)

    def to_dict(self) -> dict:
        return {
            "constraints": [r.to_dict() for r in self.constraints],
            "consistent": self.consistent,
            "notes": list(self.notes),
        }


def audit_implications(
    table: JointTable,
    *,
    deterministic: bool = False,
    reproduces_singlet: bool = False,
    checks: Sequence[ConstraintReport] | None = None,
    **kw,
) -> AuditReport:
    """Run every checker and cross-examine the implication structure.

    Two meta-checks are applied.  First, free will together with operational
    no-signaling and staticity entails free choice; a table where the three
    premises pass but FR fails beyond the combined tolerance is flagged
    INCONSISTENT.  Second, a model declared deterministic and matching the
    singlet statistics must show parameter dependence; if PI passes on its
    table, that is flagged INCONSISTENT as well.
    """
    reports = list(checks) if checks is not None else run_all_checks(table, **kw)
    by_id = {r.constraint_id: r for r in reports}
    fr, fw, ns, st = by_id["FR"], by_id["FW"], by_id["NS_weak"], by_id["ST"]
    notes: list[str] = []
    consistent = True
    if fw.passed and ns.passed and st.passed:
        combined = (
            fr.tolerance + fw.max_deviation + ns.max_deviation + st.max_deviation
        )
        if fr.passed:
            notes.append(
                "FW, NS_weak and ST hold and FR holds: implication verified positively"
            )
        elif fr.max_deviation > combined:
            consistent = False
            notes.append(
                "INCONSISTENT: FW, NS_weak and ST pass but FR fails beyond the "
                f"combined tolerance {combined:.3g} (deviation {fr.max_deviation:.3g})"
            )
        else:
            notes.append("FR deviation within combined premise tolerance")
    else:
        failing = [r.constraint_id for r in (fw, ns, st) if not r.passed]
        notes.append(
            "implication not binding: failing premise(s) " + ", ".join(failing)
        )
    if deterministic and reproduces_singlet:
        pi = by_id["PI"]
        if pi.passed:
            consistent = False
            notes.append(
                "INCONSISTENT: deterministic model matching singlet statistics "
                "must violate PI, but PI passed"
            )
        else:
            notes.append(
                "deterministic and singlet-matching: PI fails as required"
            )
    return AuditReport(tuple(reports), consistent, tuple(notes))


# ---------------------------------------------------------------------------
# Analytic table constructions
# ---------------------------------------------------------------------------


def _simplex(rng: np.random.Generator, n: int, low: float = 0.05) -> np.ndarray:
    """Random probability vector with entries bounded away from zero."""
    w = rng.dirichlet(np.ones(n))
    w = low + (1.0 - low * n) * w
    return w / w.sum()


def product_table(
    rng: np.random.Generator | None = None,
    sizes: tuple[int, int, int, int, int] = (2, 2, 1, 2, 3),
) -> JointTable:
    """Fully independent table P(A)P(B)P(C) x uniform over (X, Y, Z).

    Sizes are (|A|, |B|, |C|, |Z|) with outcomes fixed at two values; the
    outcome-and-readout block is uniform, so every checker identity holds
    with deviation exactly zero.
    """
    n_a, n_b, n_c, n_z = sizes[0], sizes[1], sizes[2], sizes[4]
    if rng is None:
        pa = np.full(n_a, 1.0 / n_a)
        pb = np.full(n_b, 1.0 / n_b)
        pc = np.full(n_c, 1.0 / n_c)
    else:
        pa, pb, pc = _simplex(rng, n_a), _simplex(rng, n_b), _simplex(rng, n_c)
    block = np.full((2, 2, n_z), 1.0 / (4 * n_z))
    p = np.einsum("a,b,c,xyz->abcxyz", pa, pb, pc, block)
    return make_table(
        p,
        labels_a=[f"a{i}" for i in range(n_a)],
        labels_b=[f"b{i}" for i in range(n_b)],
        labels_c=[f"c{i}" for i in range(n_c)],
        labels_z=[f"z{i}" for i in range(n_z)],
    )


def _settings_block(
    rng: np.random.Generator, n_a: int, n_b: int, n_c: int, n_z: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    return (
        _simplex(rng, n_a),
        _simplex(rng, n_b),
        _simplex(rng, n_c),
        _simplex(rng, n_z),
    )


def bloc_table(
    rng: np.random.Generator, n_a: int = 2, n_b: int = 2, n_z: int = 3
) -> JointTable:
    """Random table satisfying the locality factorization exactly:
    P = P(A)P(B)P(C)P(Z) * P(X|A,Z) * P(Y|B,Z)."""
    pa, pb, pc, pz = _settings_block(rng, n_a, n_b, 1, n_z)
    px = rng.uniform(0.05, 0.95, size=(n_a, n_z))  # P(X=+1|a,z)
    py = rng.uniform(0.05, 0.95, size=(n_b, n_z))
    px_full = np.stack([1.0 - px, px], axis=-1)  # (a, z, x)
    py_full = np.stack([1.0 - py, py], axis=-1)
    p = np.einsum("a,b,c,z,azx,bzy->abcxyz", pa, pb, pc, pz, px_full, py_full)
    return make_table(
        p,
        labels_a=[f"a{i}" for i in range(n_a)],
        labels_b=[f"b{i}" for i in range(n_b)],
        labels_z=[f"z{i}" for i in range(n_z)],
    )


def pi_only_table(
    rng: np.random.Generator, n_a: int = 2, n_b: int = 2, n_z: int = 2
) -> JointTable:
    """Table where PI holds but OI fails: per (a, b, z), outcomes are a
    correlated coin pair with uniform marginals, P(x, y) = (1 + x*y*rho)/4."""
    pa, pb, pc, pz = _settings_block(rng, n_a, n_b, 1, n_z)
    rho = rng.uniform(0.2, 0.9, size=(n_a, n_b, n_z)) * rng.choice(
        [-1.0, 1.0], size=(n_a, n_b, n_z)
    )
    signs = np.array([-1.0, 1.0])
    block = (1.0 + np.einsum("x,y,abz->abzxy", signs, signs, rho)) / 4.0
    p = np.einsum("a,b,c,z,abzxy->abcxyz", pa, pb, pc, pz, block)
    return make_table(
        p,
        labels_a=[f"a{i}" for i in range(n_a)],
        labels_b=[f"b{i}" for i in range(n_b)],
        labels_z=[f"z{i}" for i in range(n_z)],
    )


def oi_only_table(
    rng: np.random.Generator, n_a: int = 2, n_b: int = 2, n_z: int = 2
) -> JointTable:
    """Table where OI holds but PI fails: both outcomes are deterministic
    given (A, B, Z) and the first wing's response genuinely depends on B."""
    pa, pb, pc, pz = _settings_block(rng, n_a, n_b, 1, n_z)
    fx = rng.choice([-1, 1], size=(n_a, n_b, n_z))
    fx[:, 0, :] = 1
    fx[:, 1, :] = -1  # guarantee remote-setting dependence
    fy = rng.choice([-1, 1], size=(n_b, n_z))
    p = np.zeros((n_a, n_b, 1, 2, 2, n_z))
    for a in range(n_a):
        for b in range(n_b):
            for z in range(n_z):
                xi = int(fx[a, b, z] > 0)
                yi = int(fy[b, z] > 0)
                p[a, b, 0, xi, yi, z] = pa[a] * pb[b] * pz[z]
    return make_table(
        p,
        labels_a=[f"a{i}" for i in range(n_a)],
        labels_b=[f"b{i}" for i in range(n_b)],
        labels_z=[f"z{i}" for i in range(n_z)],
    )


def ns_coupling_table(
    rng: np.random.Generator, n_a: int = 2, n_b: int = 2, n_c: int = 2, n_z: int = 2
) -> JointTable:
    """Random table satisfying FW, NS_weak and ST exactly.

    (C, Z) is drawn independently of everything; settings are independent;
    outcomes have remote-setting-free marginals but an otherwise arbitrary
    within-pair coupling, so outcome independence generally fails.  Exists to
    exercise the free-choice implication positively on nondegenerate tables.
    """
    pa, pb, pc, pz = _settings_block(rng, n_a, n_b, n_c, n_z)
    px = rng.uniform(0.1, 0.9, size=n_a)  # P(X=+1|a)
    py = rng.uniform(0.1, 0.9, size=n_b)
    block = np.zeros((n_a, n_b, 2, 2))
    for a in range(n_a):
        for b in range(n_b):
            pxa, pyb = px[a], py[b]
            base = np.array(
                [
                    [(1 - pxa) * (1 - pyb), (1 - pxa) * pyb],
                    [pxa * (1 - pyb), pxa * pyb],
                ]
            )
            lo = -min(base[1, 1], base[0, 0])
            hi = min(base[1, 0], base[0, 1])
            d = rng.uniform(0.2, 0.9) * (hi if rng.random() < 0.5 else lo)
            base += np.array([[d, -d], [-d, d]])
            block[a, b] = base
    p = np.einsum("a,b,c,z,abxy->abcxyz", pa, pb, pc, pz, block)
    return make_table(
        p,
        labels_a=[f"a{i}" for i in range(n_a)],
        labels_b=[f"b{i}" for i in range(n_b)],
        labels_c=[f"c{i}" for i in range(n_c)],
        labels_z=[f"z{i}" for i in range(n_z)],
    )


def random_table(
    rng: np.random.Generator,
    sizes: tuple[int, int, int, int] = (2, 2, 1, 2),
) -> JointTable:
    """Fully random joint table (generically violates every constraint)."""
    n_a, n_b, n_c, n_z = sizes
    shape = (n_a, n_b, n_c, 2, 2, n_z)
    p = rng.dirichlet(np.ones(int(np.prod(shape)))).reshape(shape)
    return make_table(
        p,
        labels_a=[f"a{i}" for i in range(n_a)],
        labels_b=[f"b{i}" for i in range(n_b)],
        labels_c=[f"c{i}" for i in range(n_c)],
        labels_z=[f"z{i}" for i in range(n_z)],
    )


# -- exact tables for the shipped models ------------------------------------


def _planar_angle(vec: UnitVector) -> float:
    return math.atan2(vec.x, vec.z)


def exact_hidden_vector_table(grid: SettingsGrid, model: Model) -> JointTable:
    """Exact joint table of a deterministic hidden-vector model.

    Requires every grid direction to lie in the xz-plane.  For such grids
    the sign of each effective axis against a uniform hidden vector depends
    only on the azimuth of the vector's xz-projection, which is itself
    uniform on the circle, so sign cells are circular arcs whose exact
    measures are their widths over 2*pi.
    """
    axes = model.partition_axes(grid)
    if axes is None:
        raise ValueError("model has no effective axes; use an exact builder for it")
    for _, vec in list(grid.wing_a) + list(grid.wing_b):
        if abs(vec.y) > 1e-9:
            raise ValueError("exact construction requires a coplanar (xz-plane) grid")
    partition = SignCellPartition(tuple(axes))
    two_pi = 2.0 * math.pi
    bounds: list[float] = []
    for _, vec in axes:
        alpha = _planar_angle(vec)
        for boundary in ((alpha + math.pi / 2) % two_pi, (alpha - math.pi / 2) % two_pi):
            if not any(abs(boundary - bb) < 1e-12 for bb in bounds):
                bounds.append(boundary)
    bounds.sort()
    arcs = []  # (mid, width)
    for i, lo in enumerate(bounds):
        hi = bounds[(i + 1) % len(bounds)]
        width = (hi - lo) % two_pi
        if width < 1e-12:
            continue
        arcs.append((((lo + width / 2.0) % two_pi), width))
    reps = np.array([[math.sin(mid), 0.0, math.cos(mid)] for mid, _ in arcs])
    codes = partition.codes(reps)
    order = np.argsort(codes)
    arcs = [arcs[i] for i in order]
    reps = reps[order]
    codes = codes[order]
    labels_z = tuple(partition.label_for(c) for c in codes)
    n_a, n_b, n_z = len(grid.wing_a), len(grid.wing_b), len(arcs)
    p = np.zeros((n_a, n_b, 1, 2, 2, n_z))
    for i, (_, a_vec) in enumerate(grid.wing_a):
        for j, (_, b_vec) in enumerate(grid.wing_b):
            ax_a, ax_b = model.joint_axes(a_vec, b_vec)
            da = reps @ ax_a.as_array()
            db = reps @ ax_b.as_array()
            xi = (da > -TIE_EPS).astype(int)
            yi = (db <= -TIE_EPS).astype(int)  # y = -sign(axis_b . lambda)
            for z, (_, width) in enumerate(arcs):
                p[i, j, 0, xi[z], yi[z], z] = width / two_pi / (n_a * n_b)
    return make_table(
        p,
        labels_a=grid.labels_a,
        labels_b=grid.labels_b,
        labels_z=labels_z,
        normalize=True,
    )


def exact_localdet_table(mixture: LocalDetMixture, grid: SettingsGrid) -> JointTable:
    """Exact joint table of a local-deterministic mixture, with trivial Z.

    The strategy index is integrated out: the mixture's natural audit
    partition carries no hidden directional information.
    """
    mat_a, mat_b = mixture.response_matrices(grid)
    n_a, n_b = len(grid.wing_a), len(grid.wing_b)
    p = np.zeros((n_a, n_b, 1, 2, 2, 1))
    for k, w in enumerate(mixture.weights):
        for a in range(n_a):
            xi = int(mat_a[k, a] > 0)
            for b in range(n_b):
                yi = int(mat_b[k, b] > 0)
                p[a, b, 0, xi, yi, 0] += w / (n_a * n_b)
    return make_table(
        p, labels_a=grid.labels_a, labels_b=grid.labels_b, normalize=True
    )


def exact_qm_table(grid: SettingsGrid, n_z: int = 1) -> JointTable:
    """Exact singlet-statistics table with an uninformative hidden readout."""
    n_a, n_b = len(grid.wing_a), len(grid.wing_b)
    p = np.zeros((n_a, n_b, 1, 2, 2, n_z))
    signs = (-1, 1)
    for i, (_, a_vec) in enumerate(grid.wing_a):
        for j, (_, b_vec) in enumerate(grid.wing_b):
            c = a_vec.dot(b_vec)
            for xi, x in enumerate(signs):
                for yi, y in enumerate(signs):
                    p[i, j, 0, xi, yi, :] = (1.0 - x * y * c) / 4.0 / (n_a * n_b * n_z)
    return make_table(
        p,
        labels_a=grid.labels_a,
        labels_b=grid.labels_b,
        labels_z=[f"z{i}" for i in range(n_z)],
        normalize=True,
    )
