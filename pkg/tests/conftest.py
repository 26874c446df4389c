import pytest

from granubot.policy import PolicyBuildConfig
from granubot.registry import build_registry
from granubot.synth import SyntheticCatalogSpec, fixture_catalog, generate_catalog


@pytest.fixture(scope="session")
def fixture_cat():
    return fixture_catalog()


@pytest.fixture(scope="session")
def fixture_registry(fixture_cat):
    return build_registry(fixture_cat.table, PolicyBuildConfig(seed=1), n_override=8)


@pytest.fixture(scope="session")
def paper_catalog():
    return generate_catalog(SyntheticCatalogSpec(seed=1))
