import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsolab.discretize import (
    GridSpec,
    bin_indices,
    decode,
    default_grid,
    encode_bins,
    parse_grid,
    state_index,
)
from rsolab.envs import Acrobot, CartPole, MountainCar, reset


def test_single_dim_bin():
    g = GridSpec(((0.0, 1.0, 4),))
    assert state_index(g, [0.3]) == 1


def test_clip_and_cap():
    g = GridSpec(((0.0, 1.0, 4),))
    assert state_index(g, [-5.0]) == 0
    assert state_index(g, [1.0]) == 3
    assert state_index(g, [7.0]) == 3


def test_row_major():
    g = GridSpec(((0.0, 4.0, 4), (0.0, 3.0, 3)))
    assert encode_bins(g, (2, 1)) == 7
    assert state_index(g, [2.5, 1.5]) == 7
    assert bin_indices(g, [2.5, 1.5]) == (2, 1)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        state_index(GridSpec(((0.0, 1.0, 2),)), [0.1, 0.2])


@pytest.mark.parametrize("dims", [((1.0, 1.0, 2),), ((0.0, 1.0, 0),), ()])
def test_invalid_grid(dims):
    with pytest.raises(ValueError):
        GridSpec(dims)


def test_parse_round_trip():
    g = parse_grid("-1.2:0.6:40,-0.07:0.07:40")
    assert g.bins == (40, 40)
    assert parse_grid(str(g)) == g
    with pytest.raises(ValueError):
        parse_grid("0:1")


def test_default_grids():
    assert default_grid(MountainCar()).n_states == 1600
    assert default_grid(CartPole()).n_states == 6400
    assert default_grid(CartPole()).bins == (8, 8, 10, 10)
    assert default_grid(Acrobot()).bins == (8, 8, 10, 10, 10, 10)
    assert default_grid(Acrobot()).n_states == 8 * 8 * 10**4


def test_accepts_continuous_state():
    env = MountainCar()
    s = reset(env, np.random.default_rng(0))
    g = default_grid(env)
    assert state_index(g, s) == state_index(g, s.values)


grids = st.lists(
    st.tuples(st.floats(-100, 100), st.floats(0.01, 50), st.integers(1, 12)), min_size=1, max_size=5
).map(lambda ds: GridSpec(tuple((lo, lo + w, b) for lo, w, b in ds)))


@settings(max_examples=200, deadline=None)
@given(grids, st.data())
def test_decode_encode_identity(grid, data):
    idx = data.draw(st.integers(0, grid.n_states - 1))
    assert encode_bins(grid, decode(grid, idx)) == idx


@settings(max_examples=200, deadline=None)
@given(grids, st.data())
def test_total_and_in_range(grid, data):
    v = [data.draw(st.floats(-1e6, 1e6)) for _ in range(grid.ndim)]
    assert 0 <= state_index(grid, v) < grid.n_states


@settings(max_examples=100, deadline=None)
@given(grids, st.data())
def test_bin_centres_hit_their_bin(grid, data):
    idx = data.draw(st.integers(0, grid.n_states - 1))
    bins = decode(grid, idx)
    centre = [lo + (b + 0.5) * (hi - lo) / n for (lo, hi, n), b in zip(grid.dims, bins)]
    assert state_index(grid, centre) == idx
