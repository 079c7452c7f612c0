import numpy as np
import pytest

import procopt.data as data
from procopt.records import dedup_max_pce
from procopt.space import ParameterSpace, ProcessVariable


@pytest.fixture(scope="session")
def space():
    return data.canonical_space()


@pytest.fixture(scope="session")
def refine_space():
    return data.final_round_space()


@pytest.fixture(scope="session")
def dataset():
    return data.load_dataset()


@pytest.fixture(scope="session")
def deduped(dataset):
    return dedup_max_pce(dataset)


@pytest.fixture(scope="session")
def teacher(dataset):
    from procopt.teacher import fit_teacher

    return fit_teacher(dataset)


def small_space(levels=(3, 4, 5)):
    """Tiny grid for exhaustive oracles."""
    return ParameterSpace(
        tuple(
            ProcessVariable(f"v{i}", "u", 0.0, float(m - 1), 1.0)
            for i, m in enumerate(levels)
        )
    )


@pytest.fixture
def tiny_space():
    return small_space()
