import pytest
from hypothesis import settings

settings.register_profile("herosim", deadline=None, max_examples=200)
settings.load_profile("herosim")


@pytest.fixture
def tmp_out(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    return out
