"""Unit tests for states, measurement models, Kraus operators and evolution."""

import math

import numpy as np
import pytest

from rabitrack.exceptions import ZeroProbabilityOutcome
from rabitrack.qcore import (
    KrausOperator,
    MeasurementModel,
    Outcome,
    QubitState,
    RotationAngle,
    apply_measurement,
    evolve,
    kraus_of,
    make_unitary,
    outcome_probability,
)


def equal_superposition():
    r = 1.0 / math.sqrt(2.0)
    return QubitState(r + 0j, r + 0j)


class TestQubitState:
    def test_excited_and_ground(self):
        assert QubitState.excited().c1sq == 1.0
        assert QubitState.ground().c1sq == 0.0

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="not normalized"):
            QubitState(1.0 + 0j, 1.0 + 0j)

    def test_normalized_restores_unit_norm(self):
        s = QubitState(0.6 + 0j, 0.8j).normalized()
        assert s.norm_sq == pytest.approx(1.0, abs=1e-15)

    def test_relative_phase_ignores_global_phase(self):
        s = equal_superposition()
        rotated = QubitState(s.c0 * 1j, s.c1 * 1j)
        assert s.relative_phase() == pytest.approx(rotated.relative_phase())


class TestMeasurementModel:
    def test_from_pbar_dp(self):
        model = MeasurementModel.from_pbar_dp(0.5, 0.1)
        assert model.p0_plus == pytest.approx(0.45)
        assert model.p1_plus == pytest.approx(0.55)
        assert model.pbar == pytest.approx(0.5)
        assert model.dp == pytest.approx(0.1)

    def test_complements_are_exact(self):
        model = MeasurementModel(0.3, 0.8)
        assert model.p0_plus + model.p0_minus == 1.0
        assert model.p1_plus + model.p1_minus == 1.0

    @pytest.mark.parametrize("p0,p1", [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0)])
    def test_rejects_boundary_probabilities(self, p0, p1):
        with pytest.raises(ValueError, match="strictly"):
            MeasurementModel(p0, p1)

    def test_outcome_probabilities(self):
        model = MeasurementModel.from_pbar_dp(0.5, 0.1)
        assert model.probabilities(Outcome.PLUS) == (model.p0_plus, model.p1_plus)
        assert model.probabilities(Outcome.MINUS) == (model.p0_minus, model.p1_minus)


class TestOutcome:
    def test_exactly_two_values(self):
        assert {m for m in Outcome} == {Outcome.PLUS, Outcome.MINUS}

    def test_flipped(self):
        assert Outcome.PLUS.flipped() is Outcome.MINUS
        assert Outcome.MINUS.flipped() is Outcome.PLUS


class TestRotationAngle:
    def test_reduced_modulo_two_pi(self):
        assert RotationAngle(5.0 * math.pi).phi == pytest.approx(math.pi)

    def test_per_step(self):
        assert RotationAngle.per_step(1.0 / 16.0).phi == pytest.approx(math.pi / 8.0)

    def test_addition(self):
        total = RotationAngle(1.5) + RotationAngle(2.0)
        assert total.phi == pytest.approx(3.5)


class TestMakeUnitary:
    def test_zero_angle_is_identity(self):
        np.testing.assert_allclose(make_unitary(0.0), np.eye(2), atol=1e-15)

    def test_pi_is_minus_i_sigma_x(self):
        expected = np.array([[0.0, -1j], [-1j, 0.0]])
        np.testing.assert_allclose(make_unitary(math.pi), expected, atol=1e-15)

    def test_half_pi(self):
        r = 1.0 / math.sqrt(2.0)
        expected = r * np.array([[1.0, -1j], [-1j, 1.0]])
        np.testing.assert_allclose(make_unitary(math.pi / 2.0), expected, atol=1e-15)

    def test_unitarity_for_random_angles(self, rng):
        for phi in rng.uniform(0.0, 2.0 * math.pi, size=100):
            u = make_unitary(float(phi))
            np.testing.assert_allclose(u @ u.conj().T, np.eye(2), atol=1e-14)


class TestEvolve:
    def test_zero_rotation_fixes_state(self):
        s = evolve(QubitState.excited(), 0.0)
        assert s.c1sq == pytest.approx(1.0)

    def test_full_flip(self):
        s = evolve(QubitState.excited(), math.pi)
        assert s.c1sq == pytest.approx(0.0, abs=1e-15)
        assert s.c0 == pytest.approx(-1j)

    def test_half_flip(self):
        s = evolve(QubitState.excited(), math.pi / 2.0)
        assert s.c1sq == pytest.approx(0.5)

    def test_composition_up_to_global_phase(self, rng):
        for _ in range(20):
            phi1, phi2 = rng.uniform(0.0, 2.0 * math.pi, size=2)
            s = equal_superposition()
            a = evolve(evolve(s, float(phi1)), float(phi2))
            b = evolve(s, float((phi1 + phi2) % (2.0 * math.pi)))
            assert a.c1sq == pytest.approx(b.c1sq, abs=1e-12)


class TestKrausOf:
    def test_plus_operator(self, weak_model):
        op = kraus_of(weak_model, Outcome.PLUS)
        np.testing.assert_allclose(
            op.matrix, np.diag([math.sqrt(0.45), math.sqrt(0.55)]), atol=1e-15
        )

    def test_minus_operator(self, weak_model):
        op = kraus_of(weak_model, Outcome.MINUS)
        np.testing.assert_allclose(
            op.matrix, np.diag([math.sqrt(0.55), math.sqrt(0.45)]), atol=1e-15
        )

    def test_zero_information_limit(self):
        model = MeasurementModel(0.5, 0.5)
        for m in Outcome:
            np.testing.assert_allclose(
                kraus_of(model, m).matrix, np.eye(2) / math.sqrt(2.0), atol=1e-15
            )

    def test_effects_decompose_identity(self, weak_model):
        total = sum(kraus_of(weak_model, m).effect() for m in Outcome)
        np.testing.assert_allclose(total, np.eye(2), atol=1e-15)

    def test_commutes_with_diagonal_matrices(self, rng, weak_model):
        op = kraus_of(weak_model, Outcome.PLUS).matrix
        for _ in range(20):
            d = np.diag(rng.normal(size=2) + 1j * rng.normal(size=2))
            assert np.max(np.abs(op @ d - d @ op)) < 1e-14


class TestKrausOperator:
    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="2x2"):
            KrausOperator(np.eye(3))

    def test_rejects_unbounded_effect(self):
        with pytest.raises(ValueError, match="exceeds identity"):
            KrausOperator(2.0 * np.eye(2))

    def test_is_diagonal_real(self, weak_model):
        assert kraus_of(weak_model, Outcome.PLUS).is_diagonal_real()
        assert not KrausOperator(make_unitary(0.3)).is_diagonal_real()

    def test_level_swapped(self, weak_model):
        op = kraus_of(weak_model, Outcome.PLUS)
        swapped = op.level_swapped()
        assert swapped.matrix[0, 0] == op.matrix[1, 1]
        assert swapped.matrix[1, 1] == op.matrix[0, 0]


class TestOutcomeProbability:
    def test_excited_state(self, weak_model):
        p = outcome_probability(QubitState.excited(), weak_model, Outcome.PLUS)
        assert p == pytest.approx(0.55)

    def test_ground_state(self, weak_model):
        p = outcome_probability(QubitState.ground(), weak_model, Outcome.PLUS)
        assert p == pytest.approx(0.45)

    def test_equal_superposition(self, weak_model):
        p = outcome_probability(equal_superposition(), weak_model, Outcome.PLUS)
        assert p == pytest.approx(0.5)

    def test_completeness(self, rng, weak_model):
        for _ in range(50):
            v = rng.normal(size=2) + 1j * rng.normal(size=2)
            v /= np.linalg.norm(v)
            s = QubitState(complex(v[0]), complex(v[1]))
            total = sum(outcome_probability(s, weak_model, m) for m in Outcome)
            assert total == pytest.approx(1.0, abs=1e-12)


class TestApplyMeasurement:
    def test_eigenstate_is_unchanged(self, weak_model):
        for m in Outcome:
            s = apply_measurement(QubitState.excited(), weak_model, m)
            assert s.c1sq == pytest.approx(1.0)

    def test_plus_on_equal_superposition(self, weak_model):
        s = apply_measurement(equal_superposition(), weak_model, Outcome.PLUS)
        assert s.c1sq == pytest.approx(0.55, abs=1e-12)

    def test_minus_on_equal_superposition(self, weak_model):
        s = apply_measurement(equal_superposition(), weak_model, Outcome.MINUS)
        assert s.c1sq == pytest.approx(0.45, abs=1e-12)

    def test_impossible_outcome_raises(self):
        model = MeasurementModel(1e-300, 1e-300)
        with pytest.raises(ZeroProbabilityOutcome):
            apply_measurement(QubitState.excited(), model, Outcome.PLUS)

    def test_norm_preserved_over_long_sequences(self, rng, weak_model):
        s = QubitState.excited()
        phi = RotationAngle.per_step(1.0 / 16.0)
        for _ in range(10_000):
            s = evolve(s, phi)
            m = Outcome.PLUS if rng.random() < 0.5 else Outcome.MINUS
            s = apply_measurement(s, weak_model, m)
        assert abs(s.norm_sq - 1.0) < 1e-12
