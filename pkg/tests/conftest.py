import numpy as np
import pytest

from robustlab.dataio import gen_blobs, load_idx
from robustlab.training import TrainConfig, train

MNIST_DIR = "data/mnist10k"


@pytest.fixture(scope="session")
def blobs_dataset():
    return gen_blobs(classes=3, n_per_class=100, dim=12, separation=8.0, seed=3)


@pytest.fixture(scope="session")
def blobs_plain_model(blobs_dataset):
    cfg = TrainConfig(regime="plain", epochs=8, batch_size=30, n_classes=3,
                      plain_hidden=(24,), seed=5)
    model, _ = train(cfg, blobs_dataset)
    return model


@pytest.fixture(scope="session")
def mnist_train():
    return load_idx(f"{MNIST_DIR}/train-images-idx3-ubyte.gz",
                    f"{MNIST_DIR}/train-labels-idx1-ubyte.gz")


@pytest.fixture(scope="session")
def mnist_test():
    return load_idx(f"{MNIST_DIR}/test-images-idx3-ubyte.gz",
                    f"{MNIST_DIR}/test-labels-idx1-ubyte.gz")


def finite_difference_grad(f, arrays, h=1e-4):
    """Central finite differences of scalar f(arrays) w.r.t. every entry.

    Independent oracle for the reverse-mode gradients; never calls backward.
    """
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat = arr.ravel()
        gflat = g.ravel()
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + h
            up = f(arrays)
            flat[i] = saved - h
            down = f(arrays)
            flat[i] = saved
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads
