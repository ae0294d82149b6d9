import numpy as np
import pytest

from pensplinem import LongData


def random_long_data(rng, n_subjects=12, m_low=5, m_high=10, curve=None, noise=0.3):
    """Random longitudinal records with uniform sampling times on [0, 1]."""
    if curve is None:
        curve = lambda t: np.sin(2 * np.pi * t)
    subjects, times, values = [], [], []
    for i in range(n_subjects):
        m = int(rng.integers(m_low, m_high + 1))
        ts = rng.uniform(0.0, 1.0, m)
        subjects.append(np.full(m, i))
        times.append(ts)
        values.append(curve(ts) + noise * rng.standard_normal(m))
    return LongData(
        np.concatenate(subjects), np.concatenate(times), np.concatenate(values)
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
