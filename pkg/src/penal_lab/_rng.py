"""Counter-keyed per-path random streams.

Each simulated path owns an independent xoshiro256** generator whose state
is derived with splitmix64 from (seed, global path index).  Streams are
therefore a pure function of (seed, path index): chunking, worker count and
backend cannot change them.  Normals come from the uniform stream through
Wichura's PPND16 inverse-CDF rational approximation (abs error < 1e-15 in
the quantile), keeping the draw count per step fixed at one uniform per
normal.

Scalar (numba) and vectorized (numpy) implementations sit side by side and
must be kept in lockstep; tests assert stream equality between them.
"""

from __future__ import annotations

import numpy as np

from .backend import HAVE_NUMBA

if HAVE_NUMBA:
    from numba import njit
else:  # pragma: no cover

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_M1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_M2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / 9007199254740992.0  # 2**-53

# PPND16 coefficients (Wichura, AS 241).
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


@njit(cache=True, inline="always")
def _splitmix64(s):
    s = (s + _SM_GAMMA) & _MASK
    z = s
    z = ((z ^ (z >> np.uint64(30))) * _SM_M1) & _MASK
    z = ((z ^ (z >> np.uint64(27))) * _SM_M2) & _MASK
    z = z ^ (z >> np.uint64(31))
    return s, z


@njit(cache=True)
def path_state(seed, path_index):
    """Derive the 4-word xoshiro256** state for one path."""
    s = (np.uint64(seed) ^ ((np.uint64(path_index) + np.uint64(1)) * _SM_GAMMA)) & _MASK
    s, s0 = _splitmix64(s)
    s, s1 = _splitmix64(s)
    s, s2 = _splitmix64(s)
    s, s3 = _splitmix64(s)
    if s0 == 0 and s1 == 0 and s2 == 0 and s3 == 0:
        s0 = _SM_GAMMA
    return s0, s1, s2, s3


@njit(cache=True, inline="always")
def _rotl(x, k):
    return ((x << k) | (x >> (np.uint64(64) - k))) & _MASK


@njit(cache=True, inline="always")
def next_u64(s0, s1, s2, s3):
    result = (_rotl((s1 * np.uint64(5)) & _MASK, np.uint64(7)) * np.uint64(9)) & _MASK
    t = (s1 << np.uint64(17)) & _MASK
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = _rotl(s3, np.uint64(45))
    return result, s0, s1, s2, s3


@njit(cache=True, inline="always")
def next_uniform(s0, s1, s2, s3):
    """Uniform on the open interval (0, 1)."""
    x, s0, s1, s2, s3 = next_u64(s0, s1, s2, s3)
    return (float(x >> np.uint64(11)) + 0.5) * _U53, s0, s1, s2, s3


@njit(cache=True, inline="always")
def ppnd16(p):
    """Inverse standard-normal CDF, Wichura's PPND16."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = ((((((_A[7] * r + _A[6]) * r + _A[5]) * r + _A[4]) * r + _A[3]) * r + _A[2]) * r + _A[1]) * r + _A[0]
        den = ((((((_B[7] * r + _B[6]) * r + _B[5]) * r + _B[4]) * r + _B[3]) * r + _B[2]) * r + _B[1]) * r + _B[0]
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = np.sqrt(-np.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = ((((((_C[7] * r + _C[6]) * r + _C[5]) * r + _C[4]) * r + _C[3]) * r + _C[2]) * r + _C[1]) * r + _C[0]
        den = ((((((_D[7] * r + _D[6]) * r + _D[5]) * r + _D[4]) * r + _D[3]) * r + _D[2]) * r + _D[1]) * r + _D[0]
    else:
        r = r - 5.0
        num = ((((((_E[7] * r + _E[6]) * r + _E[5]) * r + _E[4]) * r + _E[3]) * r + _E[2]) * r + _E[1]) * r + _E[0]
        den = ((((((_F[7] * r + _F[6]) * r + _F[5]) * r + _F[4]) * r + _F[3]) * r + _F[2]) * r + _F[1]) * r + _F[0]
    val = num / den
    return -val if q < 0.0 else val


@njit(cache=True, inline="always")
def next_normal(s0, s1, s2, s3):
    u, s0, s1, s2, s3 = next_uniform(s0, s1, s2, s3)
    return ppnd16(u), s0, s1, s2, s3


@njit(cache=True)
def uniform_block(seed, path_index, n):
    """n uniforms from one path stream; jitted end to end (type stable)."""
    out = np.empty(n, dtype=np.float64)
    s0, s1, s2, s3 = path_state(np.uint64(seed), np.uint64(path_index))
    for i in range(n):
        u, s0, s1, s2, s3 = next_uniform(s0, s1, s2, s3)
        out[i] = u
    return out


# ---------------------------------------------------------------------------
# Vectorized numpy twins (operate on uint64 state arrays, one row per path).


def path_state_vec(seed, path_indices):
    idx = np.asarray(path_indices, dtype=np.uint64)
    s = (np.uint64(seed) ^ ((idx + np.uint64(1)) * _SM_GAMMA)) & _MASK
    words = []
    for _ in range(4):
        s = (s + _SM_GAMMA) & _MASK
        z = s.copy()
        z = ((z ^ (z >> np.uint64(30))) * _SM_M1) & _MASK
        z = ((z ^ (z >> np.uint64(27))) * _SM_M2) & _MASK
        z = z ^ (z >> np.uint64(31))
        words.append(z)
    state = np.stack(words, axis=0)
    dead = (state == 0).all(axis=0)
    if dead.any():
        state[0, dead] = _SM_GAMMA
    return state


def _rotl_vec(x, k):
    return ((x << np.uint64(k)) | (x >> np.uint64(64 - k))) & _MASK


def next_u64_vec(state):
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    result = (_rotl_vec((s1 * np.uint64(5)) & _MASK, 7) * np.uint64(9)) & _MASK
    t = (s1 << np.uint64(17)) & _MASK
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    state[3] = _rotl_vec(s3, 45)
    state[0], state[1], state[2] = s0, s1, s2
    return result


def next_uniform_vec(state):
    x = next_u64_vec(state)
    return ((x >> np.uint64(11)).astype(np.float64) + 0.5) * _U53


def ppnd16_vec(p):
    p = np.asarray(p, dtype=np.float64)
    q = p - 0.5
    out = np.empty_like(p)

    central = np.abs(q) <= 0.425
    r = 0.180625 - q[central] * q[central]
    num = ((((((_A[7] * r + _A[6]) * r + _A[5]) * r + _A[4]) * r + _A[3]) * r + _A[2]) * r + _A[1]) * r + _A[0]
    den = ((((((_B[7] * r + _B[6]) * r + _B[5]) * r + _B[4]) * r + _B[3]) * r + _B[2]) * r + _B[1]) * r + _B[0]
    out[central] = q[central] * num / den

    tail = ~central
    if tail.any():
        pt = p[tail]
        qt = q[tail]
        r = np.where(qt < 0.0, pt, 1.0 - pt)
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)

        rn = r[near] - 1.6
        num = ((((((_C[7] * rn + _C[6]) * rn + _C[5]) * rn + _C[4]) * rn + _C[3]) * rn + _C[2]) * rn + _C[1]) * rn + _C[0]
        den = ((((((_D[7] * rn + _D[6]) * rn + _D[5]) * rn + _D[4]) * rn + _D[3]) * rn + _D[2]) * rn + _D[1]) * rn + _D[0]
        val[near] = num / den

        far = ~near
        rf = r[far] - 5.0
        num = ((((((_E[7] * rf + _E[6]) * rf + _E[5]) * rf + _E[4]) * rf + _E[3]) * rf + _E[2]) * rf + _E[1]) * rf + _E[0]
        den = ((((((_F[7] * rf + _F[6]) * rf + _F[5]) * rf + _F[4]) * rf + _F[3]) * rf + _F[2]) * rf + _F[1]) * rf + _F[0]
        val[far] = num / den

        out[tail] = np.where(qt < 0.0, -val, val)
    return out


def next_normal_vec(state):
    return ppnd16_vec(next_uniform_vec(state))
