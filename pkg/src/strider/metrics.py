"""Motion-dynamics metrics: average joint angle update and a paired t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DegenerateInputError
from .skeleton import SkeletonSpec


@dataclass
class AngleUpdateReport:
    scenario: str
    full: float  # degrees/second
    arm: float
    leg: float
    frames: int
    fps: float

    def row(self) -> tuple:
        return (self.full, self.arm, self.leg)


def angle_update(rotations: np.ndarray, subset, fps: float) -> float:
    """Mean per-joint rotation change, reported in degrees per second.

    ``rotations`` is (frames, joints, 4) of unit quaternions (renormalized
    here); the mean runs over consecutive frame pairs and the subset joints.
    Quaternion sign flips contribute nothing (double cover).
    """
    subset = list(subset)
    if not subset:
        raise ContractError("joint subset must be nonempty")
    rot = np.asarray(rotations, dtype=np.float64)
    if rot.ndim != 3 or rot.shape[2] != 4 or rot.shape[0] < 2:
        raise ContractError("need (frames >= 2, joints, 4) rotations")
    sel = rot[:, subset, :]
    norms = np.linalg.norm(sel, axis=2, keepdims=True)
    if np.any(norms < 1e-12):
        raise ContractError("zero quaternion in rotation track")
    sel = sel / norms
    dots = np.abs(np.sum(sel[:-1] * sel[1:], axis=2))
    angles = 2.0 * np.arccos(np.clip(dots, 0.0, 1.0))  # radians/frame
    return float(angles.mean() * fps * 180.0 / math.pi)


def angle_update_series(rotations: np.ndarray, subset, fps: float) -> np.ndarray:
    """Per-frame-pair mean angle update (degrees/second), length frames-1."""
    subset = list(subset)
    rot = np.asarray(rotations, dtype=np.float64)
    sel = rot[:, subset, :]
    sel = sel / np.linalg.norm(sel, axis=2, keepdims=True)
    dots = np.abs(np.sum(sel[:-1] * sel[1:], axis=2))
    angles = 2.0 * np.arccos(np.clip(dots, 0.0, 1.0))
    return angles.mean(axis=1) * fps * 180.0 / math.pi


def angle_update_report(
    rotations: np.ndarray, skeleton: SkeletonSpec, fps: float, scenario: str = ""
) -> AngleUpdateReport:
    return AngleUpdateReport(
        scenario=scenario,
        full=angle_update(rotations, skeleton.subset("full"), fps),
        arm=angle_update(rotations, skeleton.subset("arm"), fps),
        leg=angle_update(rotations, skeleton.subset("leg"), fps),
        frames=rotations.shape[0],
        fps=fps,
    )


def autocorrelation(series: np.ndarray, max_lag: int) -> np.ndarray:
    """Unbiased normalized autocorrelation rho(0..max_lag) of a 1-D series."""
    h = np.asarray(series, dtype=np.float64)
    h = h - h.mean()
    n = h.shape[0]
    if n <= max_lag:
        raise ContractError(f"series of {n} too short for lag {max_lag}")
    var = float((h * h).mean())
    if var < 1e-300:
        raise DegenerateInputError("constant series has no autocorrelation")
    return np.array(
        [float((h[: n - l] * h[l:]).sum()) / ((n - l) * var) for l in range(max_lag + 1)]
    )


def periodicity_lag(series: np.ndarray, expected_period: int, spread: float = 0.34) -> int:
    """Lag of the autocorrelation peak in a window around an expected period."""
    lo = max(2, int(expected_period * (1.0 - spread)))
    hi = int(expected_period * (1.0 + spread))
    rho = autocorrelation(series, hi)
    return lo + int(np.argmax(rho[lo : hi + 1]))


# ---------------------------------------------------------------------------
# paired t-test


@dataclass
class TTestReport:
    mean_difference: float
    t_statistic: float
    degrees_of_freedom: int
    p_value: float  # two-tailed


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (Lentz's method)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-12:
            return h
    raise DegenerateInputError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b), accurate to well under 1e-8 absolute on the t-test domain."""
    if not 0.0 <= x <= 1.0:
        raise ContractError(f"x={x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_two_tailed_p(t: float, df: int) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    if df < 1:
        raise ContractError("degrees of freedom must be >= 1")
    x = df / (df + t * t)
    return regularized_incomplete_beta(df / 2.0, 0.5, x)


def paired_t_test(a, b) -> TTestReport:
    """Two-tailed paired-sample t-test with sample (n-1) standard deviation."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError("paired samples must be equal-length 1-D arrays")
    n = a.shape[0]
    if n < 2:
        raise ContractError("need at least two pairs")
    d = a - b
    sd = d.std(ddof=1)
    if sd < 1e-12:
        raise DegenerateInputError("paired differences have zero variance")
    mean = float(d.mean())
    t = mean / (float(sd) / math.sqrt(n))
    return TTestReport(
        mean_difference=mean,
        t_statistic=t,
        degrees_of_freedom=n - 1,
        p_value=t_two_tailed_p(t, n - 1),
    )


# ---------------------------------------------------------------------------
# report table


def angle_update_table(reports: list, label: str = "model") -> str:
    """Render scenario-grouped full/arm/leg columns plus their average."""
    scenarios = [r.scenario or f"run{i}" for i, r in enumerate(reports)]
    header1 = [""]
    for s in scenarios:
        header1 += [s.capitalize(), "", ""]
    if len(reports) > 1:
        header1 += ["Average", "", ""]
    header2 = ["Method"] + ["Full", "Arm", "Leg"] * (len(scenarios) + (1 if len(reports) > 1 else 0))
    row = [label]
    for r in reports:
        row += [f"{v:.1f}" for v in r.row()]
    if len(reports) > 1:
        avg = np.mean([r.row() for r in reports], axis=0)
        row += [f"{v:.1f}" for v in avg]
    widths = [max(len(h1), len(h2), len(c)) for h1, h2, c in zip(header1, header2, row)]
    fmt = "  ".join(f"{{:>{w}}}" for w in widths)
    lines = [fmt.format(*header1), fmt.format(*header2), fmt.format(*row)]
    return "\n".join(lines)
