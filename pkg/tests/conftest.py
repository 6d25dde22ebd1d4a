import pytest
from hypothesis import settings

from helpers import MANIFOLD_IDS, MANIFOLDS

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(params=MANIFOLDS, ids=MANIFOLD_IDS)
def manifold(request):
    return request.param
