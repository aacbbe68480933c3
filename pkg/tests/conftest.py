import os
from pathlib import Path

import numpy as np
import pytest

from fedbackdoor import data, synth
from fedbackdoor.config import DATA_DIR_ENV

# Real MNIST IDX files are used when a directory containing them is supplied;
# otherwise the synthetic desk dataset is generated once per session.
MNIST_ENV = "FEDBACKDOOR_MNIST_DIR"

MNIST_FILES = {
    "train_images": "train-images-idx3-ubyte",
    "train_labels": "train-labels-idx1-ubyte",
    "test_images": "t10k-images-idx3-ubyte",
    "test_labels": "t10k-labels-idx1-ubyte",
}


def find_mnist() -> dict[str, str] | None:
    root = os.environ.get(MNIST_ENV)
    if not root:
        return None
    paths = {}
    for role, stem in MNIST_FILES.items():
        for candidate in (Path(root) / stem, Path(root) / (stem + ".gz")):
            if candidate.exists():
                paths[role] = str(candidate)
                break
        else:
            return None
    return paths


@pytest.fixture(scope="session")
def desk_data_dir(tmp_path_factory) -> Path:
    """Directory holding the desk-scale IDX dataset used by training tests."""
    out = tmp_path_factory.mktemp("desk-data")
    synth.write_dataset(out)
    return out


@pytest.fixture(scope="session")
def desk_env(desk_data_dir, monkeypatch_session):
    monkeypatch_session.setenv(DATA_DIR_ENV, str(desk_data_dir))
    return desk_data_dir


@pytest.fixture(scope="session")
def monkeypatch_session():
    from _pytest.monkeypatch import MonkeyPatch

    mp = MonkeyPatch()
    yield mp
    mp.undo()


@pytest.fixture(scope="session")
def desk_train(desk_data_dir) -> data.Dataset:
    return data.load_idx(desk_data_dir / synth.FILES["train_images"],
                         desk_data_dir / synth.FILES["train_labels"], name="desk-train")


@pytest.fixture(scope="session")
def desk_test(desk_data_dir) -> data.Dataset:
    return data.load_idx(desk_data_dir / synth.FILES["test_images"],
                         desk_data_dir / synth.FILES["test_labels"], name="desk-test")


@pytest.fixture(scope="session")
def mnist() -> dict[str, str]:
    paths = find_mnist()
    if paths is None:
        pytest.skip(f"real MNIST not available (set ${MNIST_ENV})")
    return paths


@pytest.fixture()
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
