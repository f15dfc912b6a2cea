import numpy as np

from vladapt.rng import Stream, fnv1a64


def test_reference_values_frozen():
    # frozen outputs of the documented construction: state0 = fnv1a64(label) ^ seed
    s = Stream(0, "x")
    first = s.next_u64()
    s2 = Stream(0, "x")
    assert s2.next_u64() == first
    assert Stream(0, "x")._state == fnv1a64(b"x")


def test_scalar_and_array_paths_agree():
    a = Stream(123, "check")
    b = Stream(123, "check")
    scalars = [a.uniform() for _ in range(257)]
    array = b.uniform_array(257)
    assert np.array_equal(np.array(scalars), array)


def test_streams_differ_by_label_and_seed():
    assert Stream(1, "a").next_u64() != Stream(1, "b").next_u64()
    assert Stream(1, "a").next_u64() != Stream(2, "a").next_u64()


def test_uniform_in_unit_interval():
    u = Stream(7, "u").uniform_array(10_000)
    assert (u >= 0.0).all() and (u < 1.0).all()
    assert abs(u.mean() - 0.5) < 0.02


def test_normal_moments_and_determinism():
    g1 = Stream(11, "g").normal_array(20_000)
    g2 = Stream(11, "g").normal_array(20_000)
    assert np.array_equal(g1, g2)
    assert abs(g1.mean()) < 0.03
    assert abs(g1.std() - 1.0) < 0.03


def test_normal_array_shape_and_odd_count():
    g = Stream(3, "g").normal_array((3, 5))
    assert g.shape == (3, 5)
    # odd totals discard the trailing sine companion but match the prefix
    a = Stream(3, "g").normal_array(7)
    b = Stream(3, "g").normal_array(8)
    assert np.array_equal(a, b[:7])


def test_shuffle_is_permutation_and_deterministic():
    order1 = Stream(5, "perm").permutation(100)
    order2 = Stream(5, "perm").permutation(100)
    assert order1 == order2
    assert sorted(order1) == list(range(100))
    assert order1 != list(range(100))
