import numpy as np
import pytest

from amdnet.datasets import make_fundus_image
from amdnet.model import ModelSpec
from amdnet.preprocess import ImageU8, channel_extract, rgb_to_lab

# input 64 is the smallest size six 2x2 poolings allow
TINY_SPEC = ModelSpec(input_size=64, filters=(4, 4, 8, 8, 8, 8), lstm_units=16, fc_units=8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fundus_images():
    """Ten synthetic fundus RGB images, two or three per class."""
    labels = ["AMD", "Cataract", "Diabetes", "Normal", None]
    return [make_fundus_image(128, labels[i % 5], rng=100 + i) for i in range(10)]


@pytest.fixture(scope="session")
def natural_planes(fundus_images):
    """GRAY L-channel planes of the synthetic fundus fixtures."""
    return [channel_extract(rgb_to_lab(img), 0) for img in fundus_images]


def random_gray(rng, h, w, lo=0, hi=256):
    return ImageU8(rng.integers(lo, hi, (h, w)).astype(np.uint8), "GRAY")


def model_gradient_check(spec, n=2, seed=0, max_coords=2):
    """Backprop against central differences for a freshly built ``spec``.

    Dropout draws from a fixed seed on every call, so each perturbed
    forward pass sees the same mask.  Batch statistics are used throughout.
    Coordinates whose step straddles a ReLU or max-pool switch point are
    reported as kinks rather than scored.
    """
    from amdnet import kernels as K
    from amdnet import model as M

    state, _ = M.build_model(spec, seed)
    r = np.random.default_rng(seed + 1)
    x = r.uniform(0, 1, (n, spec.input_size, spec.input_size, spec.channels))
    y = np.eye(spec.n_classes)[r.integers(0, spec.n_classes, n)]
    loss, grads, _ = M.loss_and_grads(state, x, y, rng=99)

    last = []

    def f():
        logits, cache = M.forward(state, x, training=True, rng=99)
        masks = [pre > 0 for *_, pre in cache["convs"]] + [cache["fc_pre"] > 0]
        last[:] = [np.packbits(m).tobytes() for m in masks]
        last.extend(arg.tobytes() for _, _, arg, _ in cache["blocks"])
        return K.softmax_cross_entropy(logits, y)[0]

    names = sorted(state.params)
    return K.gradient_check(f, [state.params[k] for k in names], [grads[k] for k in names],
                            max_coords=max_coords, seed=seed, pattern=lambda: b"".join(last))


# ---------------------------------------------------------------------------
# acceptance report: one PASS/FAIL line per criterion in the terminal summary
# ---------------------------------------------------------------------------

ACCEPTANCE = {}


def register_criteria(names):
    for name in names:
        ACCEPTANCE.setdefault(name, "NOT RUN  {}: deselected or errored before reporting".format(name))


@pytest.fixture
def acceptance():
    def record(name, ok, detail):
        line = "{}  {}: {}".format("PASS" if ok else "FAIL", name, detail)
        ACCEPTANCE[name] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE.values():
            terminalreporter.write_line(line)
