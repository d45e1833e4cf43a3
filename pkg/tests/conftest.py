import numpy as np
import pytest

from lpcam import ClassifierWeights, DatasetManifest, SynthConfig, generate_synthetic


@pytest.fixture(scope="session")
def synth_dataset(tmp_path_factory):
    """Default synthetic benchmark, generated once per session."""
    out = tmp_path_factory.mktemp("synth")
    manifest_path = generate_synthetic(SynthConfig(), out)
    return manifest_path


@pytest.fixture(scope="session")
def synth_manifest(synth_dataset) -> DatasetManifest:
    return DatasetManifest.load(synth_dataset)


@pytest.fixture(scope="session")
def synth_weights(synth_dataset) -> ClassifierWeights:
    return ClassifierWeights.from_file(synth_dataset.parent / "weights.npy")


def write_block(path, values):
    from lpcam import FeatureBlock

    FeatureBlock(np.asarray(values, dtype=np.float32)).save(path)
