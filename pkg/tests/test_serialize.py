import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_stack
from mlspec.model import build_sim41, noiseless_stack
from mlspec.serialize import (
    FormatError,
    model_from_json,
    model_to_json,
    read_stack,
    stack_from_bytes,
    stack_to_bytes,
    write_stack,
)


@given(st.integers(0, 2**32 - 1), st.integers(1, 13), st.integers(1, 4))
def test_stack_round_trip(seed, n, m):
    stack = random_stack(np.random.default_rng(seed), n, m, 0.5)
    back = stack_from_bytes(stack_to_bytes(stack))
    assert back.layers.tobytes() == stack.layers.tobytes()


def test_file_round_trip(tmp_path, rng):
    stack = random_stack(rng, 9, 3)
    write_stack(tmp_path / "s.mlstk", stack)
    np.testing.assert_array_equal(read_stack(tmp_path / "s.mlstk").layers, stack.layers)


def test_rejects_corruption(rng):
    data = stack_to_bytes(random_stack(rng, 5, 2))
    with pytest.raises(FormatError):
        stack_from_bytes(b"XXXXXX" + data[6:])
    with pytest.raises(FormatError):
        stack_from_bytes(data[:-1])
    with pytest.raises(FormatError):
        stack_from_bytes(data[:4])


def test_noiseless_not_serializable():
    with pytest.raises(FormatError):
        stack_to_bytes(noiseless_stack(build_sim41(6, 2, 0.8, 0.6, 0.5)))


def test_model_round_trip():
    model = build_sim41(8, 4, 0.8, 0.6, 0.5)
    back = model_from_json(model_to_json(model))
    np.testing.assert_array_equal(back.u, model.u)
    np.testing.assert_array_equal(back.scores, model.scores)
