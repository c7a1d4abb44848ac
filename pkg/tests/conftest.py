import numpy as np
import pytest

from netflow_ood import data_io, nn_core, training

BLOB_RADIUS = 30.0
BLOB_SIGMA = 0.5
DATA_SEED = 11
TRAIN_SEED = 3


def make_blob_spec(
    counts=(2000, 2000, 2000),
    ood_count=1000,
    tuning_count=300,
    radius=BLOB_RADIUS,
    sigma=BLOB_SIGMA,
    seed=DATA_SEED,
):
    """Three well-separated ID classes on the axes plus two far OOD clusters.

    The evaluation cluster sits at the origin (radius/sigma >= 10 sigma from
    every ID mean); the tuning cluster sits in the opposite orthant.
    """
    id_blobs = [
        data_io.Blob("benign", np.array([radius, 0.0, 0.0]), counts[0], sigma),
        data_io.Blob("dos", np.array([0.0, radius, 0.0]), counts[1], sigma),
        data_io.Blob("bot", np.array([0.0, 0.0, radius]), counts[2], sigma),
    ]
    ood_blobs = [
        data_io.Blob("origin_cluster", np.zeros(3), ood_count, sigma),
        data_io.Blob("tuning_cluster", np.array([-radius / 2] * 3), tuning_count, sigma),
    ]
    return data_io.SyntheticSpec(id_blobs=id_blobs, ood_blobs=ood_blobs, seed=seed, dim=20)


@pytest.fixture(scope="session")
def blob_world():
    """Generated data, shared split, and OOD pools for the synthetic suite."""
    spec = make_blob_spec()
    id_dataset, ood_dataset = data_io.generate_synthetic(spec)
    scenario = training.Scenario(benign="benign", attacks=["dos", "bot"], mode="multiclass")
    pools = data_io.assemble_scenario(id_dataset, scenario)
    train_idx, val_idx = training.stratified_split(pools.train_y, 0.7, TRAIN_SEED)
    names = ood_dataset.labels.astype(str)
    return {
        "spec": spec,
        "id_dataset": id_dataset,
        "pools": pools,
        "train_idx": train_idx,
        "val_idx": val_idx,
        "x_train": pools.train_x[train_idx],
        "y_train": pools.train_y[train_idx],
        "x_val": pools.train_x[val_idx],
        "y_val": pools.train_y[val_idx],
        "ood_eval": ood_dataset.x[names == "origin_cluster"],
        "ood_tuning": ood_dataset.x[names == "tuning_cluster"],
    }


@pytest.fixture(scope="session")
def trained_model(blob_world):
    """Cross-entropy multiclass model on the synthetic blobs."""
    config = training.TrainConfig(regime="multiclass", cl_enabled=False, seed=TRAIN_SEED)
    result = training.train(
        config,
        blob_world["x_train"],
        blob_world["y_train"],
        blob_world["x_val"],
        blob_world["y_val"],
        class_names=blob_world["pools"].class_names,
    )
    assert result.best_f1 >= 0.99
    return result.model


def projection_model(n_classes=2, classifier_weights=None, classifier_bias=None):
    """Encoder that copies input coords 0 and 1 into the embedding.

    Exact for non-negative inputs (LeakyReLU is identity there). The classifier
    defaults to zeros unless explicit weights are given.
    """
    widths = [nn_core.INPUT_DIM] + list(nn_core.ENCODER_WIDTHS)
    encoder = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        w = np.zeros((fan_out, fan_in))
        w[0, 0] = 1.0
        w[1, 1] = 1.0
        encoder.append(nn_core.LayerParams(w, np.zeros(fan_out)))
    cw = np.zeros((n_classes, 2)) if classifier_weights is None else np.asarray(classifier_weights, float)
    cb = np.zeros(n_classes) if classifier_bias is None else np.asarray(classifier_bias, float)
    return nn_core.FnnModel(encoder=encoder, classifier=nn_core.LayerParams(cw, cb))


def zero_model(n_classes=2):
    widths = [nn_core.INPUT_DIM] + list(nn_core.ENCODER_WIDTHS) + [n_classes]
    layers = [
        nn_core.LayerParams(np.zeros((o, i)), np.zeros(o))
        for i, o in zip(widths[:-1], widths[1:])
    ]
    return nn_core.FnnModel(encoder=layers[:-1], classifier=layers[-1])


def fd_gradient(fn, x, h=1e-5):
    """Central finite differences of a scalar function over a flat array."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = grad.ravel()
    for k in range(x.size):
        xp = x.copy().ravel()
        xm = x.copy().ravel()
        xp[k] += h
        xm[k] -= h
        flat[k] = (fn(xp.reshape(x.shape)) - fn(xm.reshape(x.shape))) / (2 * h)
    return grad


def rel_err(a, b, floor=1e-6):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return np.max(np.abs(a - b) / denom)
