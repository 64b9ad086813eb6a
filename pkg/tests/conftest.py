import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from libreface_lab.bundle import new_bundle
from libreface_lab.synthetic import write_face_fixture
from libreface_lab.tensor import Dense, NetworkSpec, mlp

settings.register_profile("lab", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


def face_bundle(head="au_intensity", outputs=12, seed=0, res=8, hidden=16, **meta):
    """Small bundle consuming res x res x 3 face crops."""
    encoder = mlp([res * res * 3, hidden])
    classifier = NetworkSpec((Dense(hidden, outputs),), role="classifier")
    return new_bundle(encoder, classifier, seed, head=head, input_resolution=res, **meta)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def face_fixture(tmp_path_factory):
    """50 rendered frames on disk; frame 7 has no landmarks."""
    return write_face_fixture(tmp_path_factory.mktemp("faces"), n_frames=50, drop_landmarks=(7,))
