"""Scalar diffusion coefficients, piecewise constant on a Cartesian grid.

Values are stored row-major starting from the lower-left cell: cell ``(i, j)``
covering ``[i s, (i+1) s) x [j s, (j+1) s)`` with ``s = 2**-grid_level`` sits at
index ``j * 2**grid_level + i``.

Random fields draw each cell log-uniformly on ``[lo, hi]`` from numpy's
``PCG64`` bit generator seeded with the given integer:
``value = exp(log(lo) + u * (log(hi) - log(lo)))`` with ``u = Generator(PCG64(seed)).random()``.
"""

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigParseError, ConfigurationError, DomainError

PRNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True, eq=False)
class CoeffField:
    grid_level: int
    values: np.ndarray

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.shape != (4 ** self.grid_level,):
            raise DomainError(
                f"expected {4 ** self.grid_level} values for grid level {self.grid_level}, "
                f"got {values.size}")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            raise DomainError("coefficient values must be finite and strictly positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def alpha(self):
        return float(self.values.min())

    @property
    def beta(self):
        return float(self.values.max())

    @property
    def contrast(self):
        return self.beta / self.alpha

    def digest(self):
        """Content hash used as a cache key."""
        h = hashlib.sha256()
        h.update(np.int64(self.grid_level).tobytes())
        h.update(self.values.tobytes())
        return h.hexdigest()

    def __mul__(self, c):
        return CoeffField(self.grid_level, self.values * float(c))

    __rmul__ = __mul__


def constant_field(value):
    if not value > 0:
        raise DomainError(f"coefficient value must be positive, got {value}")
    return CoeffField(0, np.array([float(value)]))


def random_field(grid_level, lo, hi, seed):
    if grid_level < 1:
        raise DomainError(f"grid level must be >= 1, got {grid_level}")
    if not 0 < lo < hi:
        raise DomainError(f"need 0 < lo < hi, got lo={lo}, hi={hi}")
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(4 ** grid_level)
    values = np.exp(np.log(lo) + u * (np.log(hi) - np.log(lo)))
    return CoeffField(grid_level, values)


def _cell_index(field, x, y):
    n = 2 ** field.grid_level
    i = np.minimum(np.floor(np.asarray(x) * n).astype(np.int64), n - 1)
    j = np.minimum(np.floor(np.asarray(y) * n).astype(np.int64), n - 1)
    return j * n + i


def value_at(field, point):
    x, y = point
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise DomainError(f"point {point} outside the unit square")
    return float(field.values[_cell_index(field, x, y)])


def element_values(field, mesh):
    """Coefficient value for every element of ``mesh``.

    Raises ConfigurationError when elements would straddle coefficient cells.
    """
    if mesh.level < field.grid_level:
        raise ConfigurationError(
            f"mesh level {mesh.level} is coarser than coefficient grid level {field.grid_level}")
    centroids = mesh.nodes[mesh.elements].mean(axis=1)
    return field.values[_cell_index(field, centroids[:, 0], centroids[:, 1])]


def save_field(field, path):
    with open(path, "w") as fh:
        fh.write(f"{field.grid_level}\n")
        n = 2 ** field.grid_level
        for row in field.values.reshape(n, n):
            fh.write(" ".join(repr(float(v)) for v in row))
            fh.write("\n")


def load_field(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ConfigParseError("empty coefficient file", path, 1)
    try:
        grid_level = int(lines[0].strip())
    except ValueError:
        raise ConfigParseError(f"bad grid level {lines[0]!r}", path, 1) from None
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        for tok in line.split():
            try:
                values.append(float(tok))
            except ValueError:
                raise ConfigParseError(f"bad value {tok!r}", path, lineno) from None
    try:
        return CoeffField(grid_level, np.array(values))
    except DomainError as exc:
        raise ConfigParseError(str(exc), path) from None
