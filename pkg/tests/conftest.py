"""Shared fixtures and helpers for the test suite."""

import numpy as np
import pytest

from rabitrack.estimator import (
    CoefficientTable,
    MeasurementRecord,
    random_kraus_operator,
    table_update,
)
from rabitrack.qcore import MeasurementModel


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def weak_model():
    """The reference weak-measurement model: pbar = 0.5, dp = 0.1."""
    return MeasurementModel.from_pbar_dp(0.5, 0.1)


def random_record(rng, length, diagonal_fraction=0.5):
    """A MeasurementRecord of random operators, mixed diagonal/general."""
    ops = [
        random_kraus_operator(rng, diagonal=rng.random() < diagonal_fraction)
        for _ in range(length)
    ]
    return MeasurementRecord(ops)


def table_for(record, precision_bits=256):
    """Run the coefficient recursion over every operator of a record."""
    table = CoefficientTable(precision_bits)
    for op in record:
        table = table_update(table, op)
    return table
