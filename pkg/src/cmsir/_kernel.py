"""Compiled event loop for the half-edge SIR dynamics.

Free half-edges live in three swap-remove pools, one per type (0=S, 1=I,
2=R), stored as rows of ``pools`` with fill levels ``sizes``. ``pos[h]`` is
the slot of half-edge ``h`` in its pool and ``htype[h]`` its type, or -1 once
paired. Infective vertices have their own swap-remove pool for recoveries.
"""
import numba
import numpy as np

PAIR = 1
RECOVER = 2


@numba.njit(cache=True)
def _remove(h, pools, sizes, pos, htype):
    t = htype[h]
    p = pos[h]
    last = pools[t, sizes[t] - 1]
    pools[t, p] = last
    pos[last] = p
    sizes[t] -= 1
    htype[h] = -1


@numba.njit(cache=True)
def _add(h, t, pools, sizes, pos, htype):
    pools[t, sizes[t]] = h
    pos[h] = sizes[t]
    sizes[t] += 1
    htype[h] = t


@numba.njit(cache=True)
def _retype_vertex(v, src, dst, offsets, pools, sizes, pos, htype):
    for h in range(offsets[v], offsets[v + 1]):
        if htype[h] == src:
            _remove(h, pools, sizes, pos, htype)
            _add(h, dst, pools, sizes, pos, htype)


@numba.njit(cache=True)
def _recover_one(rng, vstate, ipool, ipos, n_inf, offsets, pools, sizes, pos, htype):
    j = rng.integers(0, n_inf)
    v = ipool[j]
    last = ipool[n_inf - 1]
    ipool[j] = last
    ipos[last] = j
    ipos[v] = -1
    vstate[v] = 2
    _retype_vertex(v, 1, 2, offsets, pools, sizes, pos, htype)


@numba.njit(cache=True)
def run_kernel(rng, degrees, states, beta, rho, decay):
    """Simulate until no free infective half-edge remains.

    Returns the event log (times, kinds, S, I, R, X_S, X_I, X_R; row 0 is the
    initial state), the index of the last pre-stop row, the dynamically
    formed edges as half-edge id pairs, and the final pool state.
    After the stop, if ``decay`` and rho > 0, the remaining infectives
    recover one by one and those recoveries are appended to the log.
    """
    n = degrees.size
    offsets = np.zeros(n + 1, np.int64)
    for v in range(n):
        offsets[v + 1] = offsets[v] + degrees[v]
    m = offsets[n]

    owner = np.empty(m, np.int64)
    pools = np.empty((3, m), np.int64)
    sizes = np.zeros(3, np.int64)
    pos = np.empty(m, np.int64)
    htype = np.empty(m, np.int8)
    vstate = states.copy()
    ipool = np.empty(n, np.int64)
    ipos = np.full(n, -1, np.int64)
    n_inf = 0
    counts = np.zeros(3, np.int64)
    for v in range(n):
        s = vstate[v]
        counts[s] += 1
        if s == 1:
            ipool[n_inf] = v
            ipos[v] = n_inf
            n_inf += 1
        for h in range(offsets[v], offsets[v + 1]):
            owner[h] = v
            _add(h, s, pools, sizes, pos, htype)

    cap = m // 2 + 2 * n + 1
    times = np.empty(cap, np.float64)
    kinds = np.empty(cap, np.int8)
    log = np.empty((cap, 6), np.int64)
    edges = np.empty((m // 2, 2), np.int64)
    n_edges = 0

    times[0] = 0.0
    kinds[0] = 0
    for c in range(3):
        log[0, c] = counts[c]
        log[0, 3 + c] = sizes[c]
    row = 1
    t = 0.0

    while sizes[1] > 0:
        rate_pair = beta * sizes[1]
        total = rate_pair + rho * n_inf
        t += rng.standard_exponential() / total
        if rng.random() * total < rate_pair:
            h = pools[1, rng.integers(0, sizes[1])]
            x = sizes[0] + sizes[1] + sizes[2]
            while True:
                u = rng.integers(0, x)
                if u < sizes[0]:
                    h2 = pools[0, u]
                elif u < sizes[0] + sizes[1]:
                    h2 = pools[1, u - sizes[0]]
                else:
                    h2 = pools[2, u - sizes[0] - sizes[1]]
                if h2 != h:
                    break
            t2 = htype[h2]
            _remove(h, pools, sizes, pos, htype)
            _remove(h2, pools, sizes, pos, htype)
            edges[n_edges, 0] = h
            edges[n_edges, 1] = h2
            n_edges += 1
            if t2 == 0:
                v = owner[h2]
                vstate[v] = 1
                counts[0] -= 1
                counts[1] += 1
                ipool[n_inf] = v
                ipos[v] = n_inf
                n_inf += 1
                _retype_vertex(v, 0, 1, offsets, pools, sizes, pos, htype)
            kinds[row] = PAIR
        else:
            _recover_one(rng, vstate, ipool, ipos, n_inf, offsets, pools, sizes, pos, htype)
            n_inf -= 1
            counts[1] -= 1
            counts[2] += 1
            kinds[row] = RECOVER
        times[row] = t
        for c in range(3):
            log[row, c] = counts[c]
            log[row, 3 + c] = sizes[c]
        row += 1

    stop_row = row - 1
    if decay and rho > 0:
        while n_inf > 0:
            t += rng.standard_exponential() / (rho * n_inf)
            _recover_one(rng, vstate, ipool, ipos, n_inf, offsets, pools, sizes, pos, htype)
            n_inf -= 1
            counts[1] -= 1
            counts[2] += 1
            kinds[row] = RECOVER
            times[row] = t
            for c in range(3):
                log[row, c] = counts[c]
                log[row, 3 + c] = sizes[c]
            row += 1

    return (times[:row], kinds[:row], log[:row], stop_row, edges[:n_edges],
            owner, pools, sizes, pos, htype)
