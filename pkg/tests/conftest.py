import numpy as np
import pytest

from eflfg.data import SplitPlan, SyntheticSpec, normalize_minmax, partition, synthetic_dataset
from eflfg.zoo import ModelSpec, build_catalog

SMALL_ZOO = [
    ModelSpec("gaussian-kernel", 1.0),
    ModelSpec("laplacian-kernel", 1.0),
    ModelSpec("polynomial-kernel", 1.0),
    ModelSpec("sigmoid-kernel", 1.0),
    ModelSpec("mlp", layers=(5,), epochs=50),
]


def small_problem(seed=0, rounds=60, clients=20, zoo=SMALL_ZOO, n=400):
    data = normalize_minmax(synthetic_dataset(SyntheticSpec(2, n, 0.05, "sine", 1.0), seed))
    pretrain, stream = partition(data, SplitPlan(0.25, seed, rounds, clients))
    return build_catalog(zoo, pretrain, seed), stream


@pytest.fixture(scope="session")
def small():
    return small_problem()
