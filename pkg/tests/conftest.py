import numpy as np
import pytest

from latentplan.numerics import set_default_dtype


@pytest.fixture
def f64():
    """Run a test in 64-bit mode and restore the default afterwards."""
    set_default_dtype("float64")
    yield
    set_default_dtype("float32")


def randomize_zero_init(params: dict, rng: np.random.Generator,
                        scale: float = 0.05) -> None:
    """Give zero-initialized parameters small random values.

    Several output heads and modulation layers start at exactly zero, which
    makes gradients vanish identically and gradient checks vacuous; tests
    perturb them first.
    """
    for p in params.values():
        if np.all(p.data == 0):
            p.data = (rng.standard_normal(p.shape) * scale).astype(p.data.dtype)
