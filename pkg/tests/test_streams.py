import numpy as np
from hypothesis import given, settings, strategies as st

from bandit_debias.streams import child_seed, stream_key, substream


def test_substream_reproducible():
    a = substream(7, 1, 2).standard_normal(16)
    b = substream(7, 1, 2).standard_normal(16)
    assert np.array_equal(a, b)


def test_paths_give_distinct_streams():
    base = substream(7).standard_normal(16)
    for path in [(0,), (1,), (0, 0), (0, 1), (1, 0)]:
        assert not np.array_equal(base, substream(7, *path).standard_normal(16))


def test_stream_key_distinguishes_nested_paths():
    keys = {
        stream_key(3),
        stream_key(3, 0),
        stream_key(3, 1),
        stream_key(3, 0, 0),
        stream_key(3, 0, 1),
        stream_key(4),
        stream_key(4, 0),
    }
    assert len(keys) == 7


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31), st.integers(0, 1000), st.integers(0, 1000))
def test_child_seed_stable_and_64bit(seed, a, b):
    s = child_seed(seed, a, b)
    assert s == child_seed(seed, a, b)
    assert 0 <= s < 2**64


def test_child_seed_differs_from_parent_stream():
    # a derived seed must not replicate its parent's stream
    parent = substream(11).standard_normal(8)
    derived = substream(child_seed(11, 0)).standard_normal(8)
    assert not np.array_equal(parent, derived)
