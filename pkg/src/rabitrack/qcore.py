"""Qubit states, two-outcome weak measurements and Bloch rotations.

Everything in this module runs in machine double precision; only the
estimator's coefficient recursion (see :mod:`rabitrack.estimator`) needs
extended precision.  All types are immutable values and all operations are
pure functions, so they are safe to share between workers.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ZeroProbabilityOutcome

#: Tolerance for the state-normalization invariant.
NORM_TOL = 1e-12

#: Outcome probabilities below this floor count as impossible.
PROBABILITY_FLOOR = 1e-15

#: Slack allowed on the largest eigenvalue of an effect N^dag N.
EFFECT_TOL = 1e-9

_TWO_PI = 2.0 * math.pi


class Outcome(enum.Enum):
    """The two results of a single weak measurement."""

    PLUS = "+"
    MINUS = "-"

    def flipped(self) -> "Outcome":
        return Outcome.MINUS if self is Outcome.PLUS else Outcome.PLUS


@dataclass(frozen=True)
class QubitState:
    """Normalized amplitude pair (c0, c1) of a pure qubit state."""

    c0: complex
    c1: complex

    def __post_init__(self):
        norm_sq = abs(self.c0) ** 2 + abs(self.c1) ** 2
        if abs(norm_sq - 1.0) > 1e-6:
            raise ValueError(f"state not normalized: |c0|^2+|c1|^2 = {norm_sq!r}")

    @classmethod
    def excited(cls) -> "QubitState":
        return cls(0j, 1 + 0j)

    @classmethod
    def ground(cls) -> "QubitState":
        return cls(1 + 0j, 0j)

    @property
    def c1sq(self) -> float:
        """Excitation probability |c1|^2."""
        return abs(self.c1) ** 2

    @property
    def norm_sq(self) -> float:
        return abs(self.c0) ** 2 + abs(self.c1) ** 2

    def normalized(self) -> "QubitState":
        n = math.sqrt(self.norm_sq)
        return QubitState(self.c0 / n, self.c1 / n)

    def as_vector(self) -> np.ndarray:
        return np.array([self.c0, self.c1], dtype=complex)

    def relative_phase(self) -> float:
        """arg(c1 conj(c0)); global phase is deliberately not observable."""
        return cmath.phase(self.c1 * self.c0.conjugate())


@dataclass(frozen=True)
class MeasurementModel:
    """Two-outcome diagonal measurement defined by p0_plus and p1_plus.

    p_j_plus is the probability of outcome "+" on basis state |j>.  Both
    must lie strictly inside (0, 1): the weak-measurement regime excludes
    projective limits, and strictness keeps every outcome possible on
    every state.  The minus probabilities are the exact complements.
    """

    p0_plus: float
    p1_plus: float

    def __post_init__(self):
        for name, p in (("p0_plus", self.p0_plus), ("p1_plus", self.p1_plus)):
            if not 0.0 < p < 1.0:
                raise ValueError(f"{name} = {p!r} must lie strictly in (0, 1)")

    @classmethod
    def from_pbar_dp(cls, pbar: float, dp: float) -> "MeasurementModel":
        """Build from the mean probability pbar and the split dp."""
        return cls(pbar - dp / 2.0, pbar + dp / 2.0)

    @property
    def p0_minus(self) -> float:
        return 1.0 - self.p0_plus

    @property
    def p1_minus(self) -> float:
        return 1.0 - self.p1_plus

    @property
    def pbar(self) -> float:
        return (self.p0_plus + self.p1_plus) / 2.0

    @property
    def dp(self) -> float:
        return self.p1_plus - self.p0_plus

    def probabilities(self, m: Outcome) -> tuple[float, float]:
        """(p0, p1) for outcome m."""
        if m is Outcome.PLUS:
            return self.p0_plus, self.p1_plus
        return self.p0_minus, self.p1_minus


@dataclass(frozen=True)
class KrausOperator:
    """A general 2x2 measurement operator with a bounded positive effect."""

    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"Kraus operator must be 2x2, got shape {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        eigs = np.linalg.eigvalsh(self.effect())
        if eigs[0] < -EFFECT_TOL:
            raise ValueError(f"effect not positive: min eigenvalue {eigs[0]:g}")
        if eigs[-1] > 1.0 + EFFECT_TOL:
            raise ValueError(f"effect exceeds identity: max eigenvalue {eigs[-1]:g}")

    def effect(self) -> np.ndarray:
        """The positive operator N^dag N."""
        return self.matrix.conj().T @ self.matrix

    def is_diagonal_real(self, tol: float = 0.0) -> bool:
        m = self.matrix
        return (
            abs(m[0, 1]) <= tol
            and abs(m[1, 0]) <= tol
            and abs(m[0, 0].imag) <= tol
            and abs(m[1, 1].imag) <= tol
        )

    def level_swapped(self) -> "KrausOperator":
        """sigma_x N sigma_x: the operator with basis labels 0 and 1 exchanged."""
        m = self.matrix
        return KrausOperator(np.array([[m[1, 1], m[1, 0]], [m[0, 1], m[0, 0]]]))


@dataclass(frozen=True)
class RotationAngle:
    """Bloch-sphere rotation angle per step, reduced modulo 2*pi."""

    phi: float

    def __post_init__(self):
        object.__setattr__(self, "phi", self.phi % _TWO_PI)

    @classmethod
    def per_step(cls, tau_over_tr: float) -> "RotationAngle":
        """Angle accumulated between measurements: 2*pi * tau/T_R."""
        return cls(_TWO_PI * tau_over_tr)

    def __add__(self, other: "RotationAngle") -> "RotationAngle":
        return RotationAngle(self.phi + other.phi)


def make_unitary(phi: RotationAngle | float) -> np.ndarray:
    """Rotation exp(-i sigma_x phi/2) driving the Rabi oscillation."""
    half = (phi.phi if isinstance(phi, RotationAngle) else phi) / 2.0
    c = math.cos(half)
    s = math.sin(half)
    return np.array([[c, -1j * s], [-1j * s, c]])


def evolve(state: QubitState, phi: RotationAngle | float) -> QubitState:
    c0, c1 = make_unitary(phi) @ state.as_vector()
    return QubitState(c0, c1)


def kraus_of(model: MeasurementModel, m: Outcome) -> KrausOperator:
    """The diagonal Kraus operator diag(sqrt(p0), sqrt(p1)) for outcome m."""
    p0, p1 = model.probabilities(m)
    return KrausOperator(np.diag([math.sqrt(p0), math.sqrt(p1)]).astype(complex))


def outcome_probability(state: QubitState, model: MeasurementModel, m: Outcome) -> float:
    """p(m | state) = p0 + (p1 - p0) |c1|^2."""
    p0, p1 = model.probabilities(m)
    return p0 + (p1 - p0) * state.c1sq


def apply_measurement(state: QubitState, model: MeasurementModel, m: Outcome) -> QubitState:
    """Collapse: N_m |psi> / sqrt(p(m|psi)), renormalized.

    Renormalization after every application keeps the norm from drifting
    over thousands of steps.
    """
    p = outcome_probability(state, model, m)
    if p <= PROBABILITY_FLOOR:
        raise ZeroProbabilityOutcome(
            f"outcome {m.value} has probability {p:g} on this state"
        )
    p0, p1 = model.probabilities(m)
    c0 = math.sqrt(p0) * state.c0
    c1 = math.sqrt(p1) * state.c1
    n = math.sqrt(abs(c0) ** 2 + abs(c1) ** 2)
    return QubitState(c0 / n, c1 / n)
