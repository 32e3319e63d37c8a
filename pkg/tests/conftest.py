import numpy as np
import pytest

from proganchor.data import DeskDataSpec, load_manifest, synth_desk_dataset


@pytest.fixture(scope="session")
def desk_dataset(tmp_path_factory):
    """A small procedural dataset shared across tests (24 quads, 64px)."""
    out = tmp_path_factory.mktemp("desk_data")
    spec = DeskDataSpec(n_identities=4, videos_per_identity=2, frames_per_video=4, image_size=64, seed=11)
    manifest = synth_desk_dataset(spec, out)
    return manifest, load_manifest(manifest)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
