"""Time grids, seeded Brownian paths, and the Gaussian functional L.

Everything downstream (drift fields, SDE schemes, Monte Carlo batches) runs on
one uniform grid over the extended horizon ``[0, T1]``.  Paths are pure
functions of ``(grid, seed)``: the same inputs always reproduce the same
trajectory bit for bit, which is what makes common-random-number comparisons
and byte-identical experiment reruns possible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterator

import numpy as np

__all__ = [
    "CHUNK",
    "TimeGrid",
    "BrownianPath",
    "WeightFunction",
    "make_grid",
    "sample_brownian",
    "eval_L",
    "constant_weight",
    "as_weight",
    "chunk_rng",
    "iter_increment_chunks",
    "n_chunks",
]

# Fixed Monte Carlo chunk width.  Chunk c of a batch always covers path
# indices [c*CHUNK, (c+1)*CHUNK) and draws from its own RNG stream, so the
# noise seen by path i depends only on (seed, i), never on batch size or on
# how many workers processed the batch.
CHUNK = 1024

# Relative slack when matching a time to a grid node.
_NODE_RTOL = 1e-9


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_i = t_start + i*dt`` with ``dt = span/n_steps``."""

    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.t_end > self.t_start:
            raise ValueError(
                f"need t_end > t_start, got [{self.t_start}, {self.t_end}]"
            )

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        """Node times, endpoints exact."""
        return np.linspace(self.t_start, self.t_end, self.n_steps + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_steps + 1

    def index_of(self, t: float) -> int:
        """Index of the node at time ``t``.

        Raises ValueError when ``t`` does not sit on a node (within a small
        relative slack); every horizon used by the lab must be node-aligned.
        """
        i = int(round((t - self.t_start) / self.dt))
        if i < 0 or i > self.n_steps:
            raise ValueError(f"time {t} outside grid [{self.t_start}, {self.t_end}]")
        tol = _NODE_RTOL * max(1.0, abs(t))
        if abs(self.times[i] - t) > tol:
            raise ValueError(f"time {t} is not a grid node (nearest {self.times[i]})")
        return i

    def prefix(self, i_end: int) -> "TimeGrid":
        """Subgrid over the first ``i_end`` steps (same origin, same dt)."""
        if not 1 <= i_end <= self.n_steps:
            raise ValueError(f"prefix index {i_end} outside 1..{self.n_steps}")
        return TimeGrid(self.t_start, float(self.times[i_end]), i_end)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    """A sampled trajectory on a grid; ``values[i]`` is B at node i."""

    grid: TimeGrid
    values: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid with "
                f"{self.grid.n_nodes} nodes"
            )

    def restrict(self, t_end: float) -> "BrownianPath":
        """The same trajectory truncated at node time ``t_end``."""
        i = self.grid.index_of(t_end)
        if i == self.grid.n_steps:
            return self
        return BrownianPath(self.grid.prefix(i), self.values[: i + 1], self.seed)


@dataclass(frozen=True)
class WeightFunction:
    """Deterministic weight m(s) defining L = int_0^{T1} m dB.

    The integrand must stay away from zero somewhere on every tail [t, T1]
    (t <= T < T1), so the conditioning denominators int_t^{T1} m^2 ds never
    vanish where the drift is evaluated.  ``nodes`` evaluates m on an array of
    times, tolerating plain scalar callables.
    """

    fn: Callable[[float], float]
    label: str = "m"

    def __call__(self, t: float) -> float:
        return float(self.fn(t))

    def nodes(self, times: np.ndarray) -> np.ndarray:
        arr = np.asarray(times, dtype=float)
        try:
            out = self.fn(arr)
        except (TypeError, ValueError):
            out = None
        if out is not None and np.shape(out) == arr.shape:
            return np.asarray(out, dtype=float)
        # scalar-only callable: evaluate pointwise
        flat = np.array([float(self.fn(t)) for t in arr.ravel()], dtype=float)
        return flat.reshape(arr.shape)


def constant_weight(c: float, label: str | None = None) -> WeightFunction:
    return WeightFunction(lambda t: c + 0.0 * np.asarray(t), label or f"const({c})")


def as_weight(m: WeightFunction | Callable[[float], float] | float) -> WeightFunction:
    """Coerce a callable or constant to a WeightFunction."""
    if isinstance(m, WeightFunction):
        return m
    if callable(m):
        return WeightFunction(m)
    return constant_weight(float(m))


def make_grid(t_start: float, t_end: float, n_steps: int) -> TimeGrid:
    """Uniform grid on [t_start, t_end] with n_steps steps.

    Examples
    --------
    >>> make_grid(0.0, 1.0, 4).times
    array([0.  , 0.25, 0.5 , 0.75, 1.  ])
    """
    return TimeGrid(float(t_start), float(t_end), int(n_steps))


def sample_brownian(grid: TimeGrid, seed: int) -> BrownianPath:
    """Draw one Brownian trajectory on ``grid``, started at 0.

    Increments are iid Normal(0, dt) from ``numpy``'s PCG64 stream keyed by
    ``seed`` alone, so the call is reproducible and order-independent.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    db = rng.standard_normal(grid.n_steps) * math.sqrt(grid.dt)
    values = np.empty(grid.n_nodes)
    values[0] = 0.0
    np.cumsum(db, out=values[1:])
    return BrownianPath(grid, values, seed=seed)


def eval_L(m: WeightFunction | Callable | float, path: BrownianPath,
           t1: float | None = None) -> float:
    """Left-point Ito sum  L = sum_i m(t_i) (B_{i+1} - B_i)  over [0, T1].

    ``t1`` defaults to the path's own horizon; a path ending before ``t1``
    is rejected because L conditions on information up to T1.
    """
    m = as_weight(m)
    horizon = path.grid.t_end
    if t1 is not None and horizon < t1 * (1.0 - _NODE_RTOL):
        raise ValueError(f"path ends at {horizon}, before the horizon T1={t1}")
    mv = m.nodes(path.grid.times)
    return float(np.sum(mv[:-1] * np.diff(path.values)))


# ---------------------------------------------------------------------------
# Chunked batch sampling
# ---------------------------------------------------------------------------

def n_chunks(n_paths: int) -> int:
    return (n_paths + CHUNK - 1) // CHUNK


def chunk_rng(seed: int, chunk_index: int) -> np.random.Generator:
    """Independent stream for one chunk of a batch.

    Streams are derived from (seed, chunk_index) through SeedSequence spawn
    keys, so any subset of chunks can be generated in any order, on any
    worker, and still reproduce the same numbers.
    """
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(chunk_index,))
    )


def increment_chunk(
    grid: TimeGrid, seed: int, chunk_index: int, rows: int
) -> np.ndarray:
    """The (rows, n_steps) increment block of one chunk, Normal(0, dt) iid."""
    sqdt = math.sqrt(grid.dt)
    return chunk_rng(seed, chunk_index).standard_normal((rows, grid.n_steps)) * sqdt


def iter_increment_chunks(
    grid: TimeGrid, seed: int, n_paths: int
) -> Iterator[tuple[int, np.ndarray]]:
    """Yield ``(path_offset, dB)`` blocks of at most CHUNK rows.

    ``dB`` has shape (rows, n_steps) with iid Normal(0, dt) entries; row k of
    a block is path ``path_offset + k`` of the batch.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    for c in range(n_chunks(n_paths)):
        start = c * CHUNK
        rows = min(CHUNK, n_paths - start)
        yield start, increment_chunk(grid, seed, c, rows)
