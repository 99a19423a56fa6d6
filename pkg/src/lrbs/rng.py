"""Counter-keyed random numbers.

Every random number in the package is a pure function of an integer key
``(seed, stream, t, site, k)``.  There is no generator state, so a step can
be evaluated in any site order or on any number of threads and still give
bit-identical output.

Key mixing (frozen; changing it changes every stored trajectory)::

    sm(z)  = splitmix64 output for state z
           = fin(z + 0x9E3779B97F4A7C15)
    fin(z) : z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
             z ^= z >> 27; z *= 0x94D049BB133111EB
             z ^= z >> 31
    h      = sm(sm(sm(sm(sm(seed) ^ stream) ^ t) ^ site) ^ k)
    u      = ((h >> 11) + 0.5) * 2**-53          # uniform on (0, 1)

All arithmetic is modulo 2**64.  ``site`` is the row-major index of the
torus coordinate; ``k`` is the draw index inside one Poisson sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0

# Inversion below this mean, transformed rejection (PTRS) at and above it.
INVERSION_LIMIT = 10.0


@numba.njit(cache=True, inline="always")
def splitmix(z):
    z = z + GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@numba.njit(cache=True, inline="always")
def _to_unit(h):
    return (np.float64(h >> _S11) + 0.5) * _INV53


@numba.njit(cache=True)
def site_base(seed, stream, t, site):
    h = splitmix(np.uint64(seed))
    h = splitmix(h ^ np.uint64(stream))
    h = splitmix(h ^ np.uint64(t))
    return splitmix(h ^ np.uint64(site))


@numba.njit(cache=True, inline="always")
def _uniform_from_base(base, k):
    return _to_unit(splitmix(base ^ np.uint64(k)))


@numba.njit(cache=True)
def _poisson_from_base(mean, base):
    if mean <= 0.0:
        return 0
    if mean < INVERSION_LIMIT:
        u = _uniform_from_base(base, 0)
        p = math.exp(-mean)
        s = p
        x = 0
        while u > s and x < 1000:
            x += 1
            p *= mean / x
            s += p
        return x
    # Hoermann (1993) PTRS; two uniforms per attempt, draw indices 1, 2, 3, ...
    slam = math.sqrt(mean)
    loglam = math.log(mean)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    k = 1
    while True:
        U = _uniform_from_base(base, k) - 0.5
        V = _uniform_from_base(base, k + 1)
        k += 2
        us = 0.5 - abs(U)
        n = math.floor((2.0 * a / us + b) * U + mean + 0.43)
        if us >= 0.07 and V <= vr:
            return np.int64(n)
        if n < 0 or (us < 0.013 and V > us):
            continue
        if (math.log(V) + math.log(invalpha) - math.log(a / (us * us) + b)) <= (
            -mean + n * loglam - math.lgamma(n + 1.0)
        ):
            return np.int64(n)


@numba.njit(cache=True)
def key_uniform(seed, stream, t, site, k):
    return _uniform_from_base(site_base(seed, stream, t, site), k)


@numba.njit(cache=True)
def key_poisson(mean, seed, stream, t, site):
    return _poisson_from_base(mean, site_base(seed, stream, t, site))


@numba.njit(cache=True, nogil=True)
def poisson_many(means, seed, stream, t, sites, out):
    for i in range(means.shape[0]):
        out[i] = _poisson_from_base(means[i], site_base(seed, stream, t, sites[i]))


@numba.njit(cache=True, nogil=True)
def uniform_many(seed, stream, t, sites, k, out):
    for i in range(sites.shape[0]):
        out[i] = _uniform_from_base(site_base(seed, stream, t, sites[i]), k)


def replica_seed(seed: int, replica: int) -> int:
    """Master seed for replica ``replica`` of a run seeded with ``seed``."""
    return int(splitmix(splitmix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)) ^ np.uint64(replica)))


@dataclass(frozen=True)
class RngKeyStream:
    """A stateless random source bound to a master seed.

    ``stream`` separates independent families of draws that share the same
    (time, site) coordinates, e.g. the three Poisson processes of the coupling.
    """

    master_seed: int

    def uniform(self, stream: int, t: int, site: int, k: int = 0) -> float:
        return float(key_uniform(np.uint64(self.master_seed), stream, t, site, k))

    def poisson(self, mean: float, stream: int, t: int, site: int) -> int:
        return int(key_poisson(float(mean), np.uint64(self.master_seed), stream, t, site))

    def poisson_array(self, means, stream: int, t: int, sites) -> np.ndarray:
        """Poisson draws for a whole field.

        ``means`` and ``sites`` have the same shape; ``sites`` holds the
        integer site keys.
        """
        means = np.asarray(means, dtype=np.float64)
        flat = np.ascontiguousarray(means.ravel())
        keys = np.ascontiguousarray(np.asarray(sites, dtype=np.uint64).ravel())
        out = np.empty(flat.shape, dtype=np.int64)
        poisson_many(flat, np.uint64(self.master_seed), stream, t, keys, out)
        return out.reshape(means.shape)

    def uniform_array(self, stream: int, t: int, sites, k: int = 0) -> np.ndarray:
        sites = np.asarray(sites, dtype=np.uint64)
        keys = np.ascontiguousarray(sites.ravel())
        out = np.empty(keys.shape, dtype=np.float64)
        uniform_many(np.uint64(self.master_seed), stream, t, keys, k, out)
        return out.reshape(sites.shape)

    def for_replica(self, replica: int) -> "RngKeyStream":
        return RngKeyStream(replica_seed(self.master_seed, replica))
