import numpy as np
import pytest

from dselab.network import (
    Partition,
    build_measurement_model,
    chain_network,
    load_case,
    load_partition,
    make_area_views,
)

# 3-bus chain 1-2-3, x = 1, slack 1; DC power flow gives theta = [0, -0.1, -0.3]
TOY_INJECTIONS = [0.1, 0.1, -0.2]
TOY_Z = np.array([0.1, 0.2, 0.1, 0.1, -0.2])  # P12, P23, P1, P2, P3
TOY_A = np.array([[8.0, -4.0], [-4.0, 3.0]])
TOY_U = np.array([0.4, -0.5])
TOY_X = np.array([-0.1, -0.3])


@pytest.fixture(scope="session")
def toy_net():
    return chain_network(3, 1.0, TOY_INJECTIONS)


@pytest.fixture(scope="session")
def toy_model(toy_net):
    """R = I, which makes the gain the hand-computed [[8, -4], [-4, 3]]."""
    return build_measurement_model(toy_net, variance=1.0)


@pytest.fixture(scope="session")
def toy_model_sigma(toy_net):
    return build_measurement_model(toy_net)


@pytest.fixture(scope="session")
def toy_partition():
    return Partition(((1, 2), (3,)))


@pytest.fixture(scope="session")
def toy_views(toy_net, toy_model, toy_partition):
    return make_area_views(toy_net, toy_model, toy_partition)


@pytest.fixture(scope="session")
def ieee14():
    return load_case("ieee14.json")


@pytest.fixture(scope="session")
def ieee14_model(ieee14):
    return build_measurement_model(ieee14)


@pytest.fixture(scope="session")
def case1():
    return load_partition("case1.json")


@pytest.fixture(scope="session")
def case2():
    return load_partition("case2.json")


@pytest.fixture(scope="session")
def case1_views(ieee14, ieee14_model, case1):
    return make_area_views(ieee14, ieee14_model, case1)


@pytest.fixture(scope="session")
def case2_views(ieee14, ieee14_model, case2):
    return make_area_views(ieee14, ieee14_model, case2)


@pytest.fixture(scope="session")
def ieee118():
    return load_case("ieee118.json")


@pytest.fixture(scope="session")
def ieee118_model(ieee118):
    return build_measurement_model(ieee118)


@pytest.fixture(scope="session")
def ieee118_views(ieee118, ieee118_model):
    return make_area_views(ieee118, ieee118_model, load_partition("ieee118_areas6.json"))
