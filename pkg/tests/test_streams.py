import numpy as np
import pytest

from gemmed.streams import derive_seed, make_rng, stream_key


def test_stream_key_is_stable_across_calls():
    assert stream_key("gibbs", 55.0, 0.2) == stream_key("gibbs", 55.0, 0.2)
    assert stream_key("gibbs") != stream_key("train")


def test_named_streams_are_independent_of_order():
    a1 = make_rng(7, "a").random(3)
    make_rng(7, "b").random(100)
    a2 = make_rng(7, "a").random(3)
    np.testing.assert_array_equal(a1, a2)
    assert not np.array_equal(a1, make_rng(7, "b").random(3))


def test_coordinates_change_the_stream():
    assert make_rng(1, "cell", 15.0).random() != make_rng(1, "cell", 35.0).random()


@pytest.mark.parametrize("bad", [-1, 2**64])
def test_seed_range_checked(bad):
    with pytest.raises(ValueError):
        make_rng(bad, "x")
    with pytest.raises(ValueError):
        derive_seed(bad, "x")


def test_derive_seed_is_64_bit_and_deterministic():
    s = derive_seed(3, "train_data", 55.0, 0.2, 4)
    assert 0 <= s < 2**64
    assert s == derive_seed(3, "train_data", 55.0, 0.2, 4)
    assert s != derive_seed(3, "train_data", 55.0, 0.2, 5)
