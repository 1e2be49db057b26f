"""Pure-Python reference kernels.

Every function here has a twin in ``_ckernels.pyx`` that must return identical
arrays for identical inputs. Randomness never happens inside a kernel: callers
pass pre-drawn uniforms (cascades) or a splitmix64 seed (per-split features).
"""

import numpy as np

BACKEND = "python"

_MASK = (1 << 64) - 1


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def cascade_walk(indptr, indices, n, uniforms, p, seed_user=-1):
    """Restarting random cascade: infected node picked uniformly, then a uniform neighbor.

    Row ``i`` of ``uniforms`` drives event ``i``: column 0 decides restart vs.
    spread, column 1 picks the seed (restart) or the infected node, column 2
    picks the neighbor. Infected nodes without neighbors are never picked; if
    none are pickable the step restarts.
    """
    E = uniforms.shape[0]
    users = np.empty(E, dtype=np.int64)
    infector = np.full(E, -1, dtype=np.int64)
    infected = np.zeros(n, dtype=bool)
    eligible = []
    for i in range(E):
        u0, u1, u2 = uniforms[i]
        if i == 0:
            v = seed_user if seed_user >= 0 else int(u1 * n)
            src = -1
        elif u0 < p and eligible:
            x = eligible[int(u1 * len(eligible))]
            lo = indptr[x]
            deg = indptr[x + 1] - lo
            v = int(indices[lo + int(u2 * deg)])
            src = x
        else:
            v = int(u1 * n)
            src = -1
        users[i] = v
        infector[i] = src
        if not infected[v]:
            infected[v] = True
            if indptr[v + 1] > indptr[v]:
                eligible.append(v)
    return users, infector


def cascade_argmax(indptr, indices, n, uniforms, p, seed_user=-1):
    """Reinforcement cascade: the user with most infected neighbors tweets next.

    Candidates include already-infected users; ties go to the lowest id. With
    no candidate (nobody has an infected neighbor) the step restarts.
    """
    E = uniforms.shape[0]
    users = np.empty(E, dtype=np.int64)
    infector = np.full(E, -1, dtype=np.int64)
    infected = np.zeros(n, dtype=bool)
    count = np.zeros(n, dtype=np.int64)
    for i in range(E):
        u0, u1, _ = uniforms[i]
        v = -1
        src = -1
        if i == 0:
            v = seed_user if seed_user >= 0 else int(u1 * n)
        elif u0 < p:
            best = int(np.argmax(count))
            if count[best] > 0:
                v = best
                nb = indices[indptr[v] : indptr[v + 1]]
                src = int(nb[np.argmax(infected[nb])])
        if v < 0:
            v = int(u1 * n)
        users[i] = v
        infector[i] = src
        if not infected[v]:
            infected[v] = True
            count[indices[indptr[v] : indptr[v + 1]]] += 1
    return users, infector


def _best_split_for_feature(xs, ws, ys, W0, W1):
    order = np.argsort(xs, kind="stable")
    xs = xs[order]
    c1 = np.cumsum(ws[order] * ys[order])
    c0 = np.cumsum(ws[order] * (1 - ys[order]))
    pos = np.flatnonzero(xs[:-1] < xs[1:])
    if len(pos) == 0:
        return None
    L0, L1 = c0[pos], c1[pos]
    R0, R1 = W0 - L0, W1 - L1
    nL, nR = L0 + L1, R0 + R1
    num = (L0 * L0 + L1 * L1) * nR + (R0 * R0 + R1 * R1) * nL
    den = nL * nR
    score = num / den
    top = np.flatnonzero(score >= score.max() * (1 - 1e-9))
    bj, bn, bd = -1, -1, 1
    for j in top:
        a, b = int(num[j]), int(den[j])
        if a * bd > bn * b:
            bj, bn, bd = j, a, b
    j = pos[bj]
    lo, hi = float(xs[j]), float(xs[j + 1])
    thr = 0.5 * (lo + hi)
    if thr >= hi:
        thr = lo
    return bn, bd, thr


def fit_tree(X, y, w, features, mtry=0, rng_seed=0):
    """Grow an unpruned CART classification tree with exact Gini split choice.

    ``w`` holds integer bootstrap multiplicities (0 = out of bag). ``features``
    lists the columns this tree may use; with ``mtry > 0`` each node draws
    ``mtry`` of them via splitmix64 instead of using all.
    Returns ``(feature, threshold, left, right, value)`` node arrays in creation
    order; ``feature == -1`` marks a leaf and ``value`` is the positive share.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    features = [int(f) for f in features]
    state = int(rng_seed) & _MASK
    feat, thr, left, right, value = [-1], [0.0], [-1], [-1], [0.0]
    stack = [(0, np.flatnonzero(w > 0))]
    while stack:
        node, idx = stack.pop()
        wi, yi = w[idx], y[idx]
        W1 = int((wi * yi).sum())
        W0 = int(wi.sum()) - W1
        value[node] = W1 / (W0 + W1)
        if W0 == 0 or W1 == 0:
            continue
        if 0 < mtry < len(features):
            pool = list(features)
            for i in range(mtry):
                state, z = _splitmix64(state)
                j = i + z % (len(pool) - i)
                pool[i], pool[j] = pool[j], pool[i]
            cand = sorted(pool[:mtry])
        else:
            cand = features
        best = None
        for f in cand:
            res = _best_split_for_feature(X[idx, f], wi, yi, W0, W1)
            if res is None:
                continue
            if best is None or res[0] * best[1] > best[0] * res[1]:
                best = (res[0], res[1], f, res[2])
        if best is None:
            continue
        _, _, f, t = best
        go_left = X[idx, f] <= t
        lid = len(feat)
        for _ in range(2):
            feat.append(-1)
            thr.append(0.0)
            left.append(-1)
            right.append(-1)
            value.append(0.0)
        feat[node], thr[node], left[node], right[node] = f, t, lid, lid + 1
        stack.append((lid + 1, idx[~go_left]))
        stack.append((lid, idx[go_left]))
    return (
        np.asarray(feat, dtype=np.int64),
        np.asarray(thr, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
    )


def predict_tree(X, feature, threshold, left, right, value):
    X = np.ascontiguousarray(X, dtype=np.float64)
    out = np.empty(X.shape[0], dtype=np.float64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            node = left[node] if X[r, feature[node]] <= threshold[node] else right[node]
        out[r] = value[node]
    return out
