import numpy as np
import pytest

from svae.data import ensure_digits_idx, load_mnist_idx


@pytest.fixture(scope="session")
def digits_dir(tmp_path_factory):
    """IDX-format digit files shared by the whole session."""
    directory = tmp_path_factory.mktemp("digits-data")
    ensure_digits_idx(directory)
    return directory


@pytest.fixture(scope="session")
def digits_train(digits_dir):
    return load_mnist_idx(
        digits_dir / "train-images-idx3-ubyte",
        digits_dir / "train-labels-idx1-ubyte",
        name="digits",
        split="train",
    )


@pytest.fixture(scope="session")
def digits_test(digits_dir):
    return load_mnist_idx(
        digits_dir / "t10k-images-idx3-ubyte",
        digits_dir / "t10k-labels-idx1-ubyte",
        name="digits",
        split="test",
    )


def naive_conv2d(x, w, stride=1, padding=0):
    """Nested-loop direct convolution, the shared oracle for conv tests."""
    B, C, H, W = x.shape
    C2, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (H + 2 * padding - kh) // stride + 1
    wo = (W + 2 * padding - kw) // stride + 1
    out = np.zeros((B, C2, ho, wo))
    for b in range(B):
        for o in range(C2):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride : i * stride + kh, j * stride : j * stride + kw]
                    out[b, o, i, j] = (patch * w[o]).sum()
    return out
