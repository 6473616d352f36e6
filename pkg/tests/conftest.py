import numpy as np
import pytest

from atmos_hijack.benchmark import benchmark_queries, build_benchmark_corpus
from atmos_hijack.encoders import ToyEncoder
from atmos_hijack.imaging import Image
from atmos_hijack.prng import SplitMix64


@pytest.fixture(scope="session")
def toy_encoder():
    return ToyEncoder()


@pytest.fixture(scope="session")
def bench_corpus(toy_encoder):
    return build_benchmark_corpus(toy_encoder)


@pytest.fixture(scope="session")
def bench_queries():
    return benchmark_queries(20)


def seeded_image(seed: int, h: int = 32, w: int = 32) -> Image:
    """Uniform-random RGB image on the 8-bit lattice."""
    rng = SplitMix64(seed)
    px = rng.floats(h * w * 3).reshape(h, w, 3)
    return Image(px).quantize8()


@pytest.fixture
def rand_image():
    return seeded_image
