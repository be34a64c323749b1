import pytest

from ehrqa.backends import MockBackend
from ehrqa.fixtures import build_dev_corpus, build_mini_corpus


@pytest.fixture(scope="session")
def dev_corpus():
    return build_dev_corpus()


@pytest.fixture(scope="session")
def mini_corpus():
    return build_mini_corpus()


@pytest.fixture()
def mock_backend():
    return MockBackend(default_response="OK")
