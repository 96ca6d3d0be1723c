import numpy as np
import pytest

from raid import nn

# one line per acceptance criterion, printed at the end of the session
CRITERIA = {}


def record(number, name, passed, detail=""):
    CRITERIA[number] = (name, passed, detail)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        name, passed, detail = CRITERIA[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {number:2d}. {name}: {detail}")


def linear_net(W, b):
    """Single identity layer: logits = W x + b."""
    return nn.Network([nn.Layer(np.asarray(W, float), np.asarray(b, float), "identity")])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def blobs_net():
    from raid.datasets import make_blobs
    data = make_blobs(400, dim=2, classes=2, seed=3)
    net = nn.init_network([2, 8, 2], seed=0)
    net, _ = nn.train(net, data, nn.TrainConfig(epochs=20, learning_rate=0.1, seed=0))
    return net, data


@pytest.fixture(scope="session")
def digits_net():
    from raid.datasets import make_digits
    data = make_digits(1200, seed=11)
    net = nn.init_network([64, 32, 16, 10], seed=1)
    net, _ = nn.train(net, data, nn.TrainConfig(epochs=15, learning_rate=0.05, seed=1))
    return net, make_digits(300, seed=12)
