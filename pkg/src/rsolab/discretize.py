"""Equal-width binning of continuous observations into flat state indices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from .envs import ACROBOT, CARTPOLE, MOUNTAINCAR


@dataclass(frozen=True)
class GridSpec:
    """Per-dimension ``(lower, upper, bins)`` triplets."""

    dims: tuple

    def __post_init__(self):
        dims = tuple((float(lo), float(hi), int(b)) for lo, hi, b in self.dims)
        if not dims:
            raise ValueError("grid needs at least one dimension")
        for i, (lo, hi, b) in enumerate(dims):
            if not (math.isfinite(lo) and math.isfinite(hi)) or not lo < hi:
                raise ValueError(f"dimension {i}: need finite lower < upper, got [{lo}, {hi}]")
            if b < 1:
                raise ValueError(f"dimension {i}: bins must be >= 1, got {b}")
        object.__setattr__(self, "dims", dims)

    @property
    def ndim(self) -> int:
        return len(self.dims)

    @property
    def bins(self) -> tuple[int, ...]:
        return tuple(b for _, _, b in self.dims)

    @property
    def n_states(self) -> int:
        return math.prod(self.bins)

    def arrays(self):
        lo = np.array([d[0] for d in self.dims])
        hi = np.array([d[1] for d in self.dims])
        bins = np.array(self.bins, dtype=np.int64)
        return lo, hi, bins

    def __str__(self):
        return ",".join(f"{lo!r}:{hi!r}:{b}" for lo, hi, b in self.dims)


def parse_grid(text: str) -> GridSpec:
    """Parse ``lo:hi:bins`` triplets separated by commas or whitespace."""
    dims = []
    for item in text.replace(",", " ").split():
        try:
            lo, hi, b = item.split(":")
            dims.append((float(lo), float(hi), int(b)))
        except ValueError:
            raise ValueError(f"bad grid dimension {item!r}; expected lo:hi:bins") from None
    return GridSpec(tuple(dims))


@numba.njit(cache=True)
def encode(lo, hi, bins, v):
    idx = 0
    for d in range(v.shape[0]):
        x = min(max(v[d], lo[d]), hi[d])
        width = (hi[d] - lo[d]) / bins[d]
        b = int(math.floor((x - lo[d]) / width))
        if b < 0:
            b = 0
        elif b >= bins[d]:
            b = bins[d] - 1
        idx = idx * bins[d] + b
    return idx


def bin_indices(grid: GridSpec, s) -> tuple[int, ...]:
    """Per-dimension bin numbers of a state (before flattening)."""
    return decode(grid, state_index(grid, s))


def state_index(grid: GridSpec, s) -> int:
    """Flat row-major index of the bin containing ``s``.

    ``s`` is a :class:`~rsolab.envs.ContinuousState` or a plain vector.
    """
    v = np.asarray(getattr(s, "values", s), dtype=float)
    if v.shape != (grid.ndim,):
        raise ValueError(f"state has {v.size} components, grid has {grid.ndim}")
    lo, hi, bins = grid.arrays()
    return int(encode(lo, hi, bins, v))


def encode_bins(grid: GridSpec, bin_tuple) -> int:
    idx = 0
    for b, n in zip(bin_tuple, grid.bins):
        if not 0 <= b < n:
            raise ValueError(f"bin {b} out of range for dimension with {n} bins")
        idx = idx * n + int(b)
    return idx


def decode(grid: GridSpec, index: int) -> tuple[int, ...]:
    """Inverse of the mixed-radix encoding."""
    if not 0 <= index < grid.n_states:
        raise ValueError(f"index {index} out of range for {grid.n_states} states")
    out = []
    for n in reversed(grid.bins):
        index, b = divmod(index, n)
        out.append(b)
    return tuple(reversed(out))


def default_grid(env) -> GridSpec:
    """Bin layouts used for the experiments.

    Velocity ranges for CartPole are practical clip ranges; values outside
    them fall in the edge bins. Acrobot gives 8 bins to the first two
    observation components (cos and sin of the first joint) and 10 to the
    rest.
    """
    if env.code == MOUNTAINCAR:
        return GridSpec(((env.min_position, env.max_position, 40), (-env.max_speed, env.max_speed, 40)))
    if env.code == CARTPOLE:
        return GridSpec((
            (-env.x_threshold, env.x_threshold, 8),
            (-3.0, 3.0, 8),
            (-env.theta_threshold, env.theta_threshold, 10),
            (-3.5, 3.5, 10),
        ))
    if env.code == ACROBOT:
        return GridSpec((
            (-1.0, 1.0, 8),
            (-1.0, 1.0, 8),
            (-1.0, 1.0, 10),
            (-1.0, 1.0, 10),
            (-env.max_vel_1, env.max_vel_1, 10),
            (-env.max_vel_2, env.max_vel_2, 10),
        ))
    raise ValueError(f"no default grid for {env!r}")
