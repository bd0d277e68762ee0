import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)



@pytest.fixture(scope="session")
def desk10(tmp_path_factory):
    from pixle.deskdata import build_desk_assets

    return build_desk_assets(tmp_path_factory.mktemp("desk10"), classes=10, seed=0)


@pytest.fixture(scope="session")
def desk3(tmp_path_factory):
    from pixle.deskdata import build_desk_assets

    return build_desk_assets(tmp_path_factory.mktemp("desk3"), classes=3, seed=0)
