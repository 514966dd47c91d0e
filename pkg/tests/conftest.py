import random

import pytest

from tooluse.domains import load_catalog, sample_scene
from tooluse.world import ObjectClass, ObjectInstance


@pytest.fixture(scope="session")
def mini_home():
    return load_catalog("mini-home")


@pytest.fixture(scope="session")
def mini_factory():
    return load_catalog("mini-factory")


@pytest.fixture()
def scene(mini_home):
    return sample_scene(mini_home, 0)


def make_instance(oid, token="cube", position=(0.0, 0.0, 0.0), extent=(1.0, 1.0, 1.0),
                  affordances=(), states=(), tier=0, predicates=()):
    cls = ObjectClass(token=token, affordances=frozenset(affordances),
                      default_extent=extent, supported_states=tuple(states))
    bits = tuple(False for _ in predicates)
    return ObjectInstance(id=oid, cls=cls, name="%s%d" % (token, oid),
                          position=position, yaw=0.0, extent=extent,
                          state_vector=bits, height_level=tier)


def random_scene(catalog, rng: random.Random):
    return sample_scene(catalog, rng.randrange(1 << 30))
