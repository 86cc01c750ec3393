"""Stochastic simulation of a monitored Rabi oscillation, plus regime analytics.

The simulated loop per step: rotate the qubit by phi = 2*pi*tau/T_R, draw a
measurement outcome from the state, collapse, and refresh the Bayesian
estimate through the coefficient recursion.  An undisturbed reference state
is propagated alongside with the same rotation and no collapse, so the
closed-form Rabi cosine stays available as an independent check.

Randomness comes from numpy's PCG64 generator seeded with the 64-bit run
seed; identical configurations reproduce identical trajectories bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import estimator
from .exceptions import ConfigError, InvalidBounds, NoDecoherence, OracleMismatch
from .qcore import (
    MeasurementModel,
    Outcome,
    QubitState,
    RotationAngle,
    apply_measurement,
    evolve,
    kraus_of,
    outcome_probability,
)

#: Allowed recursion-vs-quadrature disagreement during in-run checks.
ORACLE_CHECK_TOL = 1e-8

_TWO_PI = 2.0 * math.pi

#: T_d/T_R at or above this counts as mode (i), at or below 0.2 as mode (iii).
MODE_I_RATIO = 5.0
MODE_III_RATIO = 0.2


@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one simulated measurement sequence."""

    pbar: float = 0.5
    dp: float = 0.1
    tau_over_tr: float = 1.0 / 16.0
    n_max: int = 2112
    seed: int = 0
    precision_bits: int = estimator.DEFAULT_PRECISION_BITS
    initial_state: str = "excited"
    oracle_check_every: int | None = None
    phi_range: tuple[float, float] | None = None

    def validate(self) -> None:
        p0 = self.pbar - self.dp / 2.0
        p1 = self.pbar + self.dp / 2.0
        if self.dp != 0.0 and not (0.0 < p1 < 1.0):
            raise ConfigError(f"p1_plus = pbar + dp/2 = {p1!r} must lie in (0, 1)")
        if self.dp != 0.0 and not (0.0 < p0 < 1.0):
            raise ConfigError(f"p0_plus = pbar - dp/2 = {p0!r} must lie in (0, 1)")
        if self.dp == 0.0 and not (0.0 < self.pbar < 1.0):
            raise ConfigError(f"pbar = {self.pbar!r} must lie in (0, 1)")
        if not self.tau_over_tr > 0.0:
            raise ConfigError(f"tau_over_tr = {self.tau_over_tr!r} must be > 0")
        if self.n_max < 1:
            raise ConfigError(f"n_max = {self.n_max!r} must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed = {self.seed!r} must be a 64-bit unsigned integer")
        if self.precision_bits < 64:
            raise ConfigError(f"precision_bits = {self.precision_bits!r} must be >= 64")
        if self.initial_state not in ("excited", "ground"):
            raise ConfigError(
                f"initial_state must be 'excited' or 'ground', got {self.initial_state!r}"
            )
        if self.oracle_check_every is not None and self.oracle_check_every < 1:
            raise ConfigError("oracle_check_every must be >= 1 when set")
        if self.phi_range is not None:
            lo, hi = self.phi_range
            if not (abs(lo) < 1e-12 and abs(hi - _TWO_PI) < 1e-12):
                # the recursion only knows the uniform prior on the full circle
                raise ConfigError(
                    "phi_range other than the full [0, 2*pi) is only supported by "
                    "estimate_oracle, not by simulation runs"
                )

    def model(self) -> MeasurementModel:
        if self.dp == 0.0:
            return MeasurementModel(self.pbar, self.pbar)
        return MeasurementModel.from_pbar_dp(self.pbar, self.dp)

    def state0(self) -> QubitState:
        return QubitState.excited() if self.initial_state == "excited" else QubitState.ground()

    @classmethod
    def with_cycles(cls, cycles: float, **kwargs) -> "RunConfig":
        """Convert a duration in Rabi periods into a step count."""
        tau_over_tr = kwargs.pop("tau_over_tr", cls.tau_over_tr)
        n_max = round(cycles / tau_over_tr)
        return cls(tau_over_tr=tau_over_tr, n_max=n_max, **kwargs)


@dataclass(frozen=True)
class TrajectoryPoint:
    """One completed measurement step of a simulation run."""

    step: int
    time: float  # in units of T_R
    outcome: Outcome
    c1sq_measured: float
    c1sq_free: float
    estimate: float


@dataclass(frozen=True)
class RegimeReport:
    """Decoherence time of a measurement sequence relative to the Rabi period."""

    t_d_over_tau: float
    t_d_over_tr: float
    mode: str

    def __post_init__(self):
        if not self.t_d_over_tau > 0.0:
            raise ValueError("decoherence time must be positive")


def run_simulation(config: RunConfig) -> list[TrajectoryPoint]:
    """Run the full measurement sequence described by ``config``.

    Returns one :class:`TrajectoryPoint` per step.  The estimate comes from
    the coefficient recursion; when ``oracle_check_every`` is set, the
    quadrature oracle is evaluated at those steps and any disagreement
    beyond ``ORACLE_CHECK_TOL`` raises :class:`OracleMismatch`.
    """
    config.validate()
    rng = np.random.Generator(np.random.PCG64(config.seed))
    model = config.model()
    phi = RotationAngle.per_step(config.tau_over_tr)
    state = config.state0()
    free = config.state0()
    table = estimator.CoefficientTable(config.precision_bits)
    projector = estimator.Observable.excited_projector()
    record = estimator.MeasurementRecord(())
    check_every = config.oracle_check_every
    points: list[TrajectoryPoint] = []
    for n in range(1, config.n_max + 1):
        state = evolve(state, phi)
        free = evolve(free, phi)
        p_plus = outcome_probability(state, model, Outcome.PLUS)
        outcome = Outcome.PLUS if rng.random() < p_plus else Outcome.MINUS
        state = apply_measurement(state, model, outcome)
        op = kraus_of(model, outcome)
        table = estimator.table_update(table, op)
        g = estimator.estimate_from_table(table, projector)
        if check_every is not None:
            record = record.appended(op)
            if n % check_every == 0:
                g_oracle = estimator.estimate_oracle(record, projector)
                if abs(g - g_oracle) > ORACLE_CHECK_TOL:
                    raise OracleMismatch(
                        f"step {n}: recursion {g!r} vs quadrature {g_oracle!r}"
                    )
        points.append(
            TrajectoryPoint(
                step=n,
                time=n * config.tau_over_tr,
                outcome=outcome,
                c1sq_measured=state.c1sq,
                c1sq_free=free.c1sq,
                estimate=g,
            )
        )
    return points


def _pbar_dp(model) -> tuple[float, float]:
    """Accept a MeasurementModel or a raw (pbar, dp) pair.

    The raw form admits the projective limit dp = 1, which MeasurementModel
    itself excludes but which is still meaningful for the time-scale formulas.
    """
    if isinstance(model, MeasurementModel):
        return model.pbar, model.dp
    pbar, dp = model
    return float(pbar), float(dp)


def decoherence_time(model, tau: float) -> float:
    """T_d = 8 tau pbar (1 - pbar) / dp^2, in the units of tau."""
    pbar, dp = _pbar_dp(model)
    if dp == 0.0:
        raise NoDecoherence("dp = 0: the measurement sequence never decoheres")
    return 8.0 * tau * pbar * (1.0 - pbar) / dp**2


def coherence_decay_factor(model) -> float:
    """Exact per-measurement multiplier of the off-diagonal density element.

    The outcome-averaged map sends <0|rho|1> to f <0|rho|1> with
    f = sqrt(p0+ p1+) + sqrt(p0- p1-); f = 1 means no decoherence and f = 0
    is the projective limit.
    """
    pbar, dp = _pbar_dp(model)
    p0p = pbar - dp / 2.0
    p1p = pbar + dp / 2.0
    return math.sqrt(p0p * p1p) + math.sqrt((1.0 - p0p) * (1.0 - p1p))


def classify_mode(t_d: float, t_r: float) -> str:
    """Regimes: 'i' when T_d >> T_R, 'iii' when T_d << T_R, else 'ii'.

    The crossovers are fixed at ratios 5 and 0.2.
    """
    if not (t_d > 0.0 and t_r > 0.0):
        raise ValueError("both durations must be positive")
    ratio = t_d / t_r
    if ratio >= MODE_I_RATIO:
        return "i"
    if ratio <= MODE_III_RATIO:
        return "iii"
    return "ii"


def regime_report(model, tau: float, t_r: float) -> RegimeReport:
    t_d = decoherence_time(model, tau)
    return RegimeReport(
        t_d_over_tau=t_d / tau,
        t_d_over_tr=t_d / t_r,
        mode=classify_mode(t_d, t_r),
    )


def tune_parameters(
    t_r_lower: float,
    t_r_upper: float,
    samples_per_period: int = 16,
    weakness: float = 10.0,
) -> tuple[float, MeasurementModel]:
    """Choose (tau, model) for a band of possible Rabi periods.

    tau resolves the fastest admissible oscillation with
    ``samples_per_period`` measurements per period; the measurement split dp
    is then set so the slowest admissible oscillation still beats the
    decoherence time by the factor ``weakness``.  pbar is fixed at 1/2,
    which maximizes the weak-measurement margin for a given dp.
    """
    if not 0.0 < t_r_lower < t_r_upper:
        raise InvalidBounds(
            f"need 0 < t_r_lower < t_r_upper, got ({t_r_lower!r}, {t_r_upper!r})"
        )
    if samples_per_period < 10:
        raise ValueError("samples_per_period below 10 cannot resolve the oscillation")
    if weakness < 1.0:
        raise ValueError("weakness must be >= 1")
    pbar = 0.5
    tau = t_r_lower / samples_per_period
    dp = math.sqrt(8.0 * pbar * (1.0 - pbar) * tau / (weakness * t_r_upper))
    # one ulp down so the decoherence margin is >= weakness despite rounding
    dp = math.nextafter(dp, 0.0)
    return tau, MeasurementModel.from_pbar_dp(pbar, dp)
