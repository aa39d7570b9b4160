import random

import pytest

from cdastack.transport.broker import Broker


@pytest.fixture
def broker():
    b = Broker(port=0).start()
    yield b
    b.stop()


@pytest.fixture
def rng():
    return random.Random(2024042)
