import random

import pytest

from tokenbed import blindsig


@pytest.fixture(scope="session")
def issuer_key():
    """One shared 2048-bit key for signature-flow tests (keygen is slow)."""
    return blindsig.keygen(0, 10_000, random.Random(1234))


@pytest.fixture(scope="session")
def second_key():
    return blindsig.keygen(0, 10_000, random.Random(5678))
