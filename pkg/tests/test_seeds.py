import pytest
from hypothesis import given, strategies as st

from adml._seeds import PHI64, TAG_TRUTH, split_seed

U64 = st.integers(min_value=0, max_value=(1 << 64) - 1)


def test_pure_function_of_master_and_counter():
    assert split_seed(7, 3) == split_seed(7, 3)
    assert split_seed(7, 3) != split_seed(7, 4)
    assert split_seed(7, 3) != split_seed(8, 3)


def test_negative_counter_rejected():
    with pytest.raises(ValueError):
        split_seed(0, -1)


def test_tagged_counters_clear_replication_range():
    assert TAG_TRUTH >= 1 << 32
    assert PHI64 % 2 == 1  # odd multiplier keeps the counter map injective


@given(master=U64, c1=st.integers(0, 1 << 20), c2=st.integers(0, 1 << 20))
def test_distinct_counters_give_distinct_seeds(master, c1, c2):
    # SplitMix64's finalizer is a bijection and the counter offset is
    # injective mod 2^64, so collisions are impossible, not just unlikely.
    s1, s2 = split_seed(master, c1), split_seed(master, c2)
    assert 0 <= s1 < (1 << 64)
    assert (s1 == s2) == (c1 == c2)
