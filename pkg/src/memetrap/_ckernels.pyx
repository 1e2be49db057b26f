# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``; outputs must match exactly."""

import numpy as np

from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc, qsort
from libc.string cimport memcpy

BACKEND = "cython"

cdef extern from *:
    """
    typedef __int128 mt_i128;
    """
    # declared as long long for Cython's type checker; C sees a 128-bit integer
    ctypedef long long mt_i128


def cascade_walk(const int64_t[::1] indptr, const int64_t[::1] indices, int64_t n,
                 const double[:, ::1] uniforms, double p, int64_t seed_user=-1):
    cdef Py_ssize_t E = uniforms.shape[0]
    users = np.empty(E, dtype=np.int64)
    infector = np.full(E, -1, dtype=np.int64)
    infected_arr = np.zeros(n, dtype=np.uint8)
    eligible_arr = np.empty(max(n, 1), dtype=np.int64)
    cdef int64_t[::1] us = users
    cdef int64_t[::1] inf = infector
    cdef unsigned char[::1] infected = infected_arr
    cdef int64_t[::1] eligible = eligible_arr
    cdef int64_t n_elig = 0
    cdef Py_ssize_t i
    cdef int64_t v, x, lo, deg, src
    with nogil:
        for i in range(E):
            if i == 0:
                if seed_user >= 0:
                    v = seed_user
                else:
                    v = <int64_t>(uniforms[i, 1] * n)
                src = -1
            elif uniforms[i, 0] < p and n_elig > 0:
                x = eligible[<int64_t>(uniforms[i, 1] * n_elig)]
                lo = indptr[x]
                deg = indptr[x + 1] - lo
                v = indices[lo + <int64_t>(uniforms[i, 2] * deg)]
                src = x
            else:
                v = <int64_t>(uniforms[i, 1] * n)
                src = -1
            us[i] = v
            inf[i] = src
            if not infected[v]:
                infected[v] = 1
                if indptr[v + 1] > indptr[v]:
                    eligible[n_elig] = v
                    n_elig += 1
    return users, infector


def cascade_argmax(const int64_t[::1] indptr, const int64_t[::1] indices, int64_t n,
                   const double[:, ::1] uniforms, double p, int64_t seed_user=-1):
    cdef Py_ssize_t E = uniforms.shape[0]
    users = np.empty(E, dtype=np.int64)
    infector = np.full(E, -1, dtype=np.int64)
    infected_arr = np.zeros(n, dtype=np.uint8)
    count_arr = np.zeros(n, dtype=np.int64)
    cdef int64_t[::1] us = users
    cdef int64_t[::1] inf = infector
    cdef unsigned char[::1] infected = infected_arr
    cdef int64_t[::1] count = count_arr
    cdef Py_ssize_t i
    cdef int64_t v, src, best, bestc, k, j
    with nogil:
        for i in range(E):
            v = -1
            src = -1
            if i == 0:
                if seed_user >= 0:
                    v = seed_user
                else:
                    v = <int64_t>(uniforms[i, 1] * n)
            elif uniforms[i, 0] < p:
                best = 0
                bestc = count[0]
                for k in range(1, n):
                    if count[k] > bestc:
                        bestc = count[k]
                        best = k
                if bestc > 0:
                    v = best
                    for j in range(indptr[v], indptr[v + 1]):
                        if infected[indices[j]]:
                            src = indices[j]
                            break
            if v < 0:
                v = <int64_t>(uniforms[i, 1] * n)
            us[i] = v
            inf[i] = src
            if not infected[v]:
                infected[v] = 1
                for j in range(indptr[v], indptr[v + 1]):
                    count[indices[j]] += 1
    return users, infector


cdef struct Pair:
    double v
    int64_t i


cdef int _cmp_pair(const void* a, const void* b) noexcept nogil:
    cdef double da = (<Pair*>a).v
    cdef double db = (<Pair*>b).v
    if da < db:
        return -1
    if da > db:
        return 1
    cdef int64_t ia = (<Pair*>a).i
    cdef int64_t ib = (<Pair*>b).i
    return (ia > ib) - (ia < ib)


cdef inline uint64_t _splitmix64(uint64_t* state) noexcept nogil:
    state[0] += 0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def fit_tree(X, y, w, features, int64_t mtry=0, uint64_t rng_seed=0):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const int64_t[::1] yv = np.ascontiguousarray(y, dtype=np.int64)
    cdef const int64_t[::1] wv = np.ascontiguousarray(w, dtype=np.int64)
    feats_arr = np.ascontiguousarray(features, dtype=np.int64)
    cdef const int64_t[::1] feats = feats_arr
    cdef int64_t F = feats.shape[0]
    cdef Py_ssize_t n = Xv.shape[0]

    idx_arr = np.flatnonzero(np.asarray(wv) > 0).astype(np.int64)
    cdef int64_t ns = idx_arr.shape[0]
    cdef int64_t cap = 2 * ns + 1
    feat_out = np.full(cap, -1, dtype=np.int64)
    thr_out = np.zeros(cap, dtype=np.float64)
    left_out = np.full(cap, -1, dtype=np.int64)
    right_out = np.full(cap, -1, dtype=np.int64)
    value_out = np.zeros(cap, dtype=np.float64)
    cdef int64_t[::1] idx = idx_arr
    cdef int64_t[::1] o_feat = feat_out
    cdef double[::1] o_thr = thr_out
    cdef int64_t[::1] o_left = left_out
    cdef int64_t[::1] o_right = right_out
    cdef double[::1] o_val = value_out

    cdef Pair* pairs = <Pair*>malloc((ns + 1) * sizeof(Pair))
    cdef int64_t* tmp = <int64_t*>malloc((ns + 1) * sizeof(int64_t))
    cdef int64_t* stack = <int64_t*>malloc(3 * (cap + 1) * sizeof(int64_t))
    cdef int64_t* pool = <int64_t*>malloc((F + 1) * sizeof(int64_t))
    cdef int64_t* cand = <int64_t*>malloc((F + 1) * sizeof(int64_t))
    if pairs == NULL or tmp == NULL or stack == NULL or pool == NULL or cand == NULL:
        free(pairs); free(tmp); free(stack); free(pool); free(cand)
        raise MemoryError()

    cdef uint64_t state = rng_seed
    cdef int64_t n_nodes = 1, sp = 0
    cdef int64_t node, start, end, k, j, f, fi, nc, W0, W1, L0, L1, R0, R1, nL, nR, wk, r, a, b
    cdef int64_t best_f, best_pos, nleft, nright
    cdef mt_i128 num, den, best_num, best_den
    cdef double best_thr, lo, hi, t
    cdef uint64_t z

    with nogil:
        stack[0] = 0
        stack[1] = 0
        stack[2] = ns
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[3 * sp]
            start = stack[3 * sp + 1]
            end = stack[3 * sp + 2]
            W0 = 0
            W1 = 0
            for k in range(start, end):
                if yv[idx[k]] == 1:
                    W1 += wv[idx[k]]
                else:
                    W0 += wv[idx[k]]
            o_val[node] = <double>W1 / <double>(W0 + W1)
            if W0 == 0 or W1 == 0:
                continue
            if 0 < mtry < F:
                for k in range(F):
                    pool[k] = feats[k]
                for k in range(mtry):
                    z = _splitmix64(&state)
                    j = k + <int64_t>(z % <uint64_t>(F - k))
                    r = pool[k]
                    pool[k] = pool[j]
                    pool[j] = r
                # insertion sort of the chosen subset
                for k in range(mtry):
                    cand[k] = pool[k]
                for k in range(1, mtry):
                    r = cand[k]
                    j = k - 1
                    while j >= 0 and cand[j] > r:
                        cand[j + 1] = cand[j]
                        j -= 1
                    cand[j + 1] = r
                nc = mtry
            else:
                for k in range(F):
                    cand[k] = feats[k]
                nc = F
            best_f = -1
            best_num = -1
            best_den = 1
            best_thr = 0.0
            for fi in range(nc):
                f = cand[fi]
                for k in range(start, end):
                    pairs[k - start].v = Xv[idx[k], f]
                    pairs[k - start].i = idx[k]
                qsort(pairs, end - start, sizeof(Pair), _cmp_pair)
                L0 = 0
                L1 = 0
                for k in range(end - start - 1):
                    wk = wv[pairs[k].i]
                    if yv[pairs[k].i] == 1:
                        L1 += wk
                    else:
                        L0 += wk
                    if not (pairs[k].v < pairs[k + 1].v):
                        continue
                    R0 = W0 - L0
                    R1 = W1 - L1
                    nL = L0 + L1
                    nR = R0 + R1
                    num = (<mt_i128>(L0 * L0 + L1 * L1)) * nR + (<mt_i128>(R0 * R0 + R1 * R1)) * nL
                    den = (<mt_i128>nL) * nR
                    if num * best_den > best_num * den:
                        best_num = num
                        best_den = den
                        best_f = f
                        lo = pairs[k].v
                        hi = pairs[k + 1].v
                        t = 0.5 * (lo + hi)
                        if t >= hi:
                            t = lo
                        best_thr = t
            if best_f < 0:
                continue
            # stable partition of idx[start:end]
            nleft = 0
            for k in range(start, end):
                if Xv[idx[k], best_f] <= best_thr:
                    tmp[nleft] = idx[k]
                    nleft += 1
            nright = nleft
            for k in range(start, end):
                if not (Xv[idx[k], best_f] <= best_thr):
                    tmp[nright] = idx[k]
                    nright += 1
            for k in range(start, end):
                idx[k] = tmp[k - start]
            o_feat[node] = best_f
            o_thr[node] = best_thr
            o_left[node] = n_nodes
            o_right[node] = n_nodes + 1
            # right child first so the left child is processed next
            stack[3 * sp] = n_nodes + 1
            stack[3 * sp + 1] = start + nleft
            stack[3 * sp + 2] = end
            sp += 1
            stack[3 * sp] = n_nodes
            stack[3 * sp + 1] = start
            stack[3 * sp + 2] = start + nleft
            sp += 1
            n_nodes += 2
    free(pairs)
    free(tmp)
    free(stack)
    free(pool)
    free(cand)
    return (
        feat_out[:n_nodes].copy(),
        thr_out[:n_nodes].copy(),
        left_out[:n_nodes].copy(),
        right_out[:n_nodes].copy(),
        value_out[:n_nodes].copy(),
    )


def predict_tree(X, const int64_t[::1] feature, const double[::1] threshold,
                 const int64_t[::1] left, const int64_t[::1] right, const double[::1] value):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    out_arr = np.empty(Xv.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t r
    cdef int64_t node
    with nogil:
        for r in range(Xv.shape[0]):
            node = 0
            while feature[node] >= 0:
                if Xv[r, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] = value[node]
    return out_arr
