import pytest

from adaptmask.config import from_flat
from adaptmask.data import make_synthetic_dataset

TINY = {
    "data.train_count": 40, "data.val_count": 16, "data.labels": 10,
    "train.batch_labeled": 8, "train.batch_unlabeled": 8,
    "model.stem_channels": 8, "model.stages": [[8, False], [16, True], [16, True]],
    "model.head_channels": 16, "mask.size_range": [4, 10],
}


def tiny_config(**overrides):
    flat = dict(TINY)
    flat.update({k.replace("__", "."): v for k, v in overrides.items()})
    return from_flat(flat)


@pytest.fixture(scope="session")
def tiny_data():
    return make_synthetic_dataset(40, 16, seed=0)
