"""Dense float64 linear algebra helpers and deterministic random streams.

Matrices are plain 2-D ``numpy.ndarray`` objects, float64, row-major
(C order), never implicitly transposed.  All public operations validate
shapes and reject non-finite results so downstream modules can assume
clean values.

Randomness comes from the counter-based Philox generator, so one seed
yields any number of independent, platform-stable streams (weight
initialization, data generation, shuffling) that never interfere.
"""

from __future__ import annotations

import zlib

import numpy as np

from .errors import DimensionError, NumericOverflowError, ParameterError

__all__ = ["Rng", "as_matrix", "matvec", "transpose", "sample_uniform"]


def as_matrix(data, rows: int | None = None, cols: int | None = None) -> np.ndarray:
    """Coerce ``data`` to a float64, C-order, finite 2-D array.

    If ``rows``/``cols`` are given the shape is checked against them.
    """
    m = np.ascontiguousarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if rows is not None and m.shape[0] != rows:
        raise DimensionError(f"expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise DimensionError(f"expected {cols} cols, got {m.shape[1]}")
    if not np.all(np.isfinite(m)):
        raise NumericOverflowError("matrix contains non-finite entries")
    return m


def matvec(m: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Matrix-vector product ``result[i] = sum_j m[i, j] * v[j]``."""
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if m.ndim != 2 or v.ndim != 1:
        raise DimensionError(
            f"matvec expects a matrix and a vector, got ndim {m.ndim} and {v.ndim}"
        )
    if m.shape[1] != v.shape[0]:
        raise DimensionError(
            f"matvec dimension mismatch: matrix is {m.shape[0]}x{m.shape[1]}, "
            f"vector has length {v.shape[0]}"
        )
    out = m @ v
    if not np.all(np.isfinite(out)):
        raise NumericOverflowError("matvec produced non-finite entries")
    return out


def transpose(m: np.ndarray) -> np.ndarray:
    """Explicit transpose; the only sanctioned way to flip a matrix."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"transpose expects a matrix, got ndim={m.ndim}")
    return np.ascontiguousarray(m.T)


class Rng:
    """Seeded, splittable random source.

    Wraps a Philox (counter-based) bit generator.  ``split`` derives an
    independent child stream from the same root seed, identified by an
    integer or a short string label; the same (seed, label) pair always
    produces the same stream, regardless of call order elsewhere.
    """

    def __init__(self, seed: int, _spawn_key: tuple[int, ...] = ()):
        if not isinstance(seed, (int, np.integer)) or seed < 0:
            raise ParameterError(f"seed must be a nonnegative integer, got {seed!r}")
        self.seed = int(seed)
        self._spawn_key = _spawn_key
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=_spawn_key)
        self._gen = np.random.Generator(np.random.Philox(seq))

    def split(self, label: int | str) -> "Rng":
        """Return an independent stream derived from this one."""
        if isinstance(label, str):
            index = zlib.crc32(label.encode("utf-8"))
        else:
            index = int(label)
        if index < 0:
            raise ParameterError("stream label must be nonnegative")
        return Rng(self.seed, self._spawn_key + (index,))

    def uniform(self, lo: float, hi: float, n: int) -> np.ndarray:
        """``n`` float64 draws from [lo, hi)."""
        if not lo < hi:
            raise ParameterError(f"uniform requires lo < hi, got lo={lo}, hi={hi}")
        if n < 0:
            raise ParameterError(f"sample count must be nonnegative, got {n}")
        return self._gen.uniform(lo, hi, size=n)

    def normal(self, n: int, scale: float = 1.0) -> np.ndarray:
        """``n`` float64 draws from a centered normal with std ``scale``."""
        if n < 0:
            raise ParameterError(f"sample count must be nonnegative, got {n}")
        return self._gen.normal(0.0, scale, size=n)

    def permutation(self, n: int) -> np.ndarray:
        """A random permutation of ``range(n)``."""
        return self._gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, spawn_key={self._spawn_key})"


def sample_uniform(rng: Rng, lo: float, hi: float, n: int) -> np.ndarray:
    """Draw ``n`` values in [lo, hi) from ``rng``, advancing its state."""
    return rng.uniform(lo, hi, n)
