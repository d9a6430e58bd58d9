"""
Desk-scale fixture network for the crossbar inference experiments.

Built deterministically from the 8x8 digit images that ship with scikit-learn:

    conv2d 3x3, 1 -> 8 (four edge detectors, four seeded random filters)
    relu -> mean_pool 2 -> dense 72 -> 64 (seeded random projection) -> relu
    dense 64 -> 10 with bias, fitted in closed form by ridge regression
    softmax_argmax

No gradient training is involved, so the same seed always gives the same weights. All
parameters are rounded to float32 before the baseline accuracy is recorded, which makes
the recorded value exactly what the MXW1 file reproduces.
"""

import logging
from pathlib import Path
from typing import Tuple

import numpy as np
from sklearn.datasets import load_digits
from sklearn.linear_model import Ridge
from sklearn.model_selection import train_test_split

from superres.net_eval import (
    Conv2D,
    Dataset,
    Dense,
    MeanPool,
    NetworkDef,
    ReLU,
    SoftmaxArgmax,
    accuracy_percent,
    float_scores,
    predict_float,
    read_dataset,
    read_weights,
    write_dataset,
    write_weights,
)
from superres.rng import FIXTURE_SEED, substream

logger = logging.getLogger(__name__)

TEST_SAMPLES = 300
HIDDEN = 64
RIDGE_ALPHA = 1.0

EDGE_FILTERS = np.array([
    [[-1, -1, -1], [0, 0, 0], [1, 1, 1]],
    [[-1, 0, 1], [-1, 0, 1], [-1, 0, 1]],
    [[0, 1, 1], [-1, 0, 1], [-1, -1, 0]],
    [[1, 1, 0], [1, 0, -1], [0, -1, -1]],
], dtype=float) / 3.0


def _f32(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float32).astype(float)


def load_digit_split(seed: int = FIXTURE_SEED) -> Tuple[Dataset, Dataset]:
    digits = load_digits()
    x = digits.data / 16.0
    x_train, x_test, y_train, y_test = train_test_split(
        x, digits.target, test_size=TEST_SAMPLES, random_state=seed % (2**32), stratify=digits.target
    )
    return Dataset(x_train, y_train), Dataset(x_test, y_test)


def build_fixture_network(seed: int = FIXTURE_SEED) -> Tuple[NetworkDef, Dataset]:
    """The fixture network and its held-out test set."""
    train, test = load_digit_split(seed)

    random_filters = substream(seed, "fixture_conv").normal(0.0, 1.0 / 3.0, (4, 3, 3))
    filters = np.concatenate([EDGE_FILTERS, random_filters])  # (8, kh, kw)
    conv = Conv2D(_f32(filters.transpose(1, 2, 0)[:, :, None, :]))
    projection = Dense(_f32(substream(seed, "fixture_dense").normal(0.0, 1.0 / np.sqrt(72), (72, HIDDEN))))

    features = NetworkDef((conv, ReLU(), MeanPool(2), projection, ReLU()), (8, 8, 1))
    hidden = float_scores(features, train.features)
    targets = np.eye(10)[train.labels]
    ridge = Ridge(alpha=RIDGE_ALPHA).fit(hidden, targets)
    readout = Dense(_f32(ridge.coef_.T), _f32(ridge.intercept_))

    layers = features.layers + (readout, SoftmaxArgmax())
    untagged = NetworkDef(layers, (8, 8, 1))
    baseline = accuracy_percent(predict_float(untagged, test.features), test.labels)
    logger.info("Fixture network: %d parameters, float accuracy %.2f%% on %d test digits",
                untagged.parameter_count, baseline, len(test))
    return NetworkDef(layers, (8, 8, 1), baseline), test


def ensure_fixture(weights_path, dataset_path, seed: int = FIXTURE_SEED) -> Tuple[NetworkDef, Dataset]:
    """Load the fixture files, building and writing them first when either is missing."""
    weights_path, dataset_path = Path(weights_path), Path(dataset_path)
    if not (weights_path.exists() and dataset_path.exists()):
        logger.info("Building fixture network into %s and %s", weights_path, dataset_path)
        net, test = build_fixture_network(seed)
        write_weights(net, weights_path)
        write_dataset(test, dataset_path)
    return read_weights(weights_path), read_dataset(dataset_path)
