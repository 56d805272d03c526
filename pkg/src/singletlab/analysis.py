"""Physics-level results: correlation curves, CHSH, and the signaling region.

The deterministic hidden-vector model predicts E(omega) = -cos(omega) for
the joint-outcome correlator, identical to the analytic singlet statistics.
Where it departs from an uninformed-observer description is at the level of
individual hidden vectors: for pair angles above pi/2 the joint-measurement
axis rotates outward far enough that, for suitable hidden vectors, the
first wing's joint outcome differs from its single-measurement outcome.
The boundary of that region in the (pair angle, hidden-vector angle) plane
is the threshold theta* = (pi/2) cos^2(omega/2) + omega/2.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import UnitVector, angle_between, effective_angle, rotate_pair
from .models import TIE_EPS, LocalDetMixture, Model, SignUndefined, TiePolicy, sign_value
from .sampling import Fixed, RunConfig, SettingsGrid, run_experiment

#: Default planar CHSH settings (angles from +z in the xz-plane).
CHSH_DEFAULT_ANGLES = (0.0, math.pi / 2, math.pi / 4, 3 * math.pi / 4)


def _child_seed(seed: int, index: int) -> int:
    digest = hashlib.blake2b(f"{seed}:{index}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def correlation(
    model: Model,
    a: UnitVector,
    b: UnitVector,
    samples: int,
    seed: int,
    threads: int = 1,
) -> tuple[float, float]:
    """Monte-Carlo estimate of E[x*y] at one settings pair, with its stderr."""
    grid = SettingsGrid((("a0", a),), (("b0", b),))
    cfg = RunConfig(model=model, grid=grid, samples=samples, seed=seed, policy=Fixed(0, 0))
    result = run_experiment(cfg, threads=threads)
    prod = result.x.astype(np.float64) * result.y.astype(np.float64)
    estimate = float(prod.mean())
    stderr = math.sqrt(max(0.0, 1.0 - estimate * estimate) / samples)
    return estimate, stderr


@dataclass(frozen=True)
class CurvePoint:
    omega: float
    estimate: float
    analytic: float
    stderr: float
    samples: int


@dataclass(frozen=True)
class CorrelationCurve:
    points: tuple[CurvePoint, ...]

    def to_csv(self) -> str:
        lines = ["omega,E,E_analytic,stderr,N"]
        for pt in self.points:
            lines.append(
                f"{pt.omega!r},{pt.estimate!r},{pt.analytic!r},{pt.stderr!r},{pt.samples}"
            )
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "points": [
                {
                    "omega": pt.omega,
                    "E": pt.estimate,
                    "E_analytic": pt.analytic,
                    "stderr": pt.stderr,
                    "N": pt.samples,
                }
                for pt in self.points
            ]
        }


def correlation_curve(
    model: Model,
    omegas: Sequence[float],
    samples: int,
    seed: int,
    threads: int = 1,
) -> CorrelationCurve:
    """Correlator estimates over a list of pair angles, against -cos(omega).

    Each angle uses its own derived seed, so points are independent work
    items and the curve is reproducible point-by-point.
    """
    a = UnitVector.from_polar_xz(0.0)
    points = []
    for i, omega in enumerate(omegas):
        b = UnitVector.from_polar_xz(float(omega))
        est, se = correlation(model, a, b, samples, _child_seed(seed, i), threads)
        points.append(
            CurvePoint(
                omega=float(omega),
                estimate=est,
                analytic=-math.cos(float(omega)),
                stderr=se,
                samples=samples,
            )
        )
    return CorrelationCurve(tuple(points))


# ---------------------------------------------------------------------------
# CHSH
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChshResult:
    s_value: float
    stderr: float
    correlators: tuple[tuple[str, float, float], ...]  # (pair label, E, stderr)

    def to_dict(self) -> dict:
        return {
            "S": self.s_value,
            "stderr": self.stderr,
            "correlators": [
                {"pair": label, "E": e, "stderr": se}
                for label, e, se in self.correlators
            ],
        }


def chsh(
    model: Model,
    a: UnitVector,
    a_prime: UnitVector,
    b: UnitVector,
    b_prime: UnitVector,
    samples: int,
    seed: int,
    threads: int = 1,
) -> ChshResult:
    """S = |E(a,b) - E(a,b') + E(a',b) + E(a',b')| from four Monte-Carlo runs."""
    pairs = (("a,b", a, b), ("a,b'", a, b_prime), ("a',b", a_prime, b), ("a',b'", a_prime, b_prime))
    estimates = []
    for i, (label, u, v) in enumerate(pairs):
        e, se = correlation(model, u, v, samples, _child_seed(seed, i), threads)
        estimates.append((label, e, se))
    s = abs(estimates[0][1] - estimates[1][1] + estimates[2][1] + estimates[3][1])
    stderr = math.sqrt(sum(se * se for _, _, se in estimates))
    return ChshResult(s_value=s, stderr=stderr, correlators=tuple(estimates))


def chsh_from_angles(
    model: Model,
    angles: Sequence[float] = CHSH_DEFAULT_ANGLES,
    samples: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> ChshResult:
    """CHSH at planar settings given as (a, a', b, b') angles from +z."""
    if len(angles) != 4:
        raise ValueError("need exactly four angles: a, a', b, b'")
    vecs = [UnitVector.from_polar_xz(float(t)) for t in angles]
    return chsh(model, vecs[0], vecs[1], vecs[2], vecs[3], samples, seed, threads)


def chsh_analytic(angles: Sequence[float] = CHSH_DEFAULT_ANGLES) -> float:
    """CHSH value implied by E = -cos(omega) at planar settings."""
    a, ap, b, bp = (float(t) for t in angles)
    e = lambda u, v: -math.cos(u - v)
    return abs(e(a, b) - e(a, bp) + e(ap, b) + e(ap, bp))


def localdet_chsh(mixture: LocalDetMixture, grid: SettingsGrid) -> float:
    """Exact CHSH of a local-deterministic mixture on a 2x2 grid."""
    if len(grid.wing_a) != 2 or len(grid.wing_b) != 2:
        raise ValueError("CHSH needs a 2x2 settings grid")
    mat_a, mat_b = mixture.response_matrices(grid)
    w = mixture.weights
    e = np.einsum("k,ka,kb->ab", w, mat_a.astype(float), mat_b.astype(float))
    return float(abs(e[0, 0] - e[0, 1] + e[1, 0] + e[1, 1]))


# ---------------------------------------------------------------------------
# Signaling region
# ---------------------------------------------------------------------------


def signaling_threshold(omega: float) -> float:
    """Hidden-vector angle above which the joint A-outcome flips:
    theta* = (pi/2) cos^2(omega/2) + omega/2, for pair angles in (pi/2, pi).

    Strictly below pi/2 on the open interval, so a flip region always fits
    within hidden vectors at angle <= pi/2 from the first setting.
    """
    if not math.pi / 2 < omega < math.pi:
        raise ValueError(f"pair angle {omega!r} outside (pi/2, pi)")
    c = math.cos(0.5 * omega)
    return 0.5 * math.pi * c * c + 0.5 * omega


def signaling_witness(
    a: UnitVector,
    b: UnitVector,
    lam: UnitVector,
    tie: TiePolicy = TiePolicy.RAISE,
) -> bool:
    """True iff the joint-mode A-outcome differs from the single-mode one.

    This is the per-hidden-vector content of the statement that the pair
    (outcome, readout) distribution on wing A depends on wing B's setting.
    Raises SignUndefined on sign boundaries under the default policy.
    """
    a_rot, _ = rotate_pair(a, b)
    single = sign_value(a.dot(lam), tie)
    joint = sign_value(a_rot.dot(lam), tie)
    return single != joint


def analytic_flip(omega: float, theta: float) -> bool:
    """Analytic prediction of the witness in the coplanar reference layout.

    On the primary domain (omega in (pi/2, pi), theta in (0, pi/2]) this is
    the threshold comparison theta > theta*(omega).  Outside it -- kept for
    exploratory sweeps -- the prediction extrapolates via the signed axis
    rotation; such cells are labeled extrapolation by region_map.
    """
    half_pi = math.pi / 2
    if half_pi < omega < math.pi and 0.0 < theta <= half_pi + TIE_EPS:
        return theta > signaling_threshold(omega)
    shift = 0.5 * (effective_angle(omega) - omega)
    single = 1 if math.cos(theta) > -TIE_EPS else -1
    joint = 1 if math.cos(theta + shift) > -TIE_EPS else -1
    return single != joint


@dataclass(frozen=True)
class RegionMap:
    """Grid of analytic and Monte-Carlo flip flags over (omega, theta).

    The coplanar layout fixes the hidden vector along +z, the first setting
    at angle theta from it, and the second setting at theta - omega, i.e. on
    the far side of the hidden vector, which is the side where the outward
    axis rotation can cross the orthogonal plane.
    """

    omegas: np.ndarray
    thetas: np.ndarray
    analytic: np.ndarray  # (n_omega, n_theta) bool
    mc: np.ndarray
    extrapolated: np.ndarray
    tie_cells: int

    def to_csv(self) -> str:
        lines = ["omega,theta,analytic,mc"]
        for i, omega in enumerate(self.omegas):
            for j, theta in enumerate(self.thetas):
                lines.append(
                    f"{float(omega)!r},{float(theta)!r},"
                    f"{int(self.analytic[i, j])},{int(self.mc[i, j])}"
                )
        return "\n".join(lines) + "\n"


def region_map(
    n_omega: int = 50,
    n_theta: int = 50,
    omega_lo: float = math.pi / 2,
    omega_hi: float = math.pi,
    theta_lo: float = 0.0,
    theta_hi: float = math.pi / 2,
) -> RegionMap:
    """Evaluate analytic and witness flip flags on an (omega, theta) grid.

    Omega samples are cell centers of the open interval (omega_lo, omega_hi);
    theta samples are the right edges of n_theta equal cells, so theta_hi is
    included and theta_lo excluded.
    """
    if n_omega < 2 or n_theta < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    omegas = omega_lo + (np.arange(n_omega) + 0.5) * (omega_hi - omega_lo) / n_omega
    thetas = theta_lo + (np.arange(n_theta) + 1.0) * (theta_hi - theta_lo) / n_theta
    analytic = np.zeros((n_omega, n_theta), dtype=bool)
    mc = np.zeros((n_omega, n_theta), dtype=bool)
    extrapolated = np.zeros((n_omega, n_theta), dtype=bool)
    lam = UnitVector.from_polar_xz(0.0)
    half_pi = math.pi / 2
    ties = 0
    for i, omega in enumerate(omegas):
        for j, theta in enumerate(thetas):
            a = UnitVector.from_polar_xz(float(theta))
            b = UnitVector.from_polar_xz(float(theta - omega))
            analytic[i, j] = analytic_flip(float(omega), float(theta))
            extrapolated[i, j] = not (
                half_pi < omega < math.pi and 0.0 < theta <= half_pi + TIE_EPS
            )
            try:
                mc[i, j] = signaling_witness(a, b, lam, TiePolicy.RAISE)
            except SignUndefined:
                ties += 1
                mc[i, j] = signaling_witness(a, b, lam, TiePolicy.PLUS_ONE)
    return RegionMap(
        omegas=omegas,
        thetas=thetas,
        analytic=analytic,
        mc=mc,
        extrapolated=extrapolated,
        tie_cells=ties,
    )


def region_agreement(rm: RegionMap, boundary_margin: float = 1e-6) -> tuple[int, int]:
    """(checked, agreeing) cell counts, excluding the threshold boundary belt."""
    checked = 0
    agree = 0
    for i, omega in enumerate(rm.omegas):
        for j, theta in enumerate(rm.thetas):
            if not rm.extrapolated[i, j]:
                if abs(theta - signaling_threshold(float(omega))) <= boundary_margin:
                    continue
            checked += 1
            agree += int(rm.analytic[i, j] == rm.mc[i, j])
    return checked, agree


def region_svg(rm: RegionMap, cell_px: int = 9) -> str:
    """Static SVG heatmap of a region map (no interactive elements)."""
    n_o, n_t = len(rm.omegas), len(rm.thetas)
    margin = 40
    width = margin * 2 + n_o * cell_px
    height = margin * 2 + n_t * cell_px
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for i in range(n_o):
        for j in range(n_t):
            a_flag, m_flag = bool(rm.analytic[i, j]), bool(rm.mc[i, j])
            if a_flag != m_flag:
                color = "#d62728"
            elif a_flag:
                color = "#1f3b73" if not rm.extrapolated[i, j] else "#7f9ed1"
            else:
                color = "#e8eef7" if not rm.extrapolated[i, j] else "#f6f8fc"
            x = margin + i * cell_px
            y = margin + (n_t - 1 - j) * cell_px
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" fill="{color}"/>'
            )
    parts.append(
        f'<text x="{margin}" y="{height - 12}" font-size="12" font-family="monospace">'
        f"pair angle {rm.omegas[0]:.3f}..{rm.omegas[-1]:.3f} rad (x) / "
        f"hidden-vector angle {rm.thetas[0]:.3f}..{rm.thetas[-1]:.3f} rad (y)</text>"
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
