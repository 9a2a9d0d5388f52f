"""Numba kernels for tree growing, application, and per-leaf path statistics.

Hot loops only.  All observable behaviour (tie rules, thresholds, pattern
codes) is defined and tested at the cart/forest wrapper level.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange

U64 = np.uint64
_SM_GAMMA = U64(0x9E3779B97F4A7C15)
_SM_MUL1 = U64(0xBF58476D1CE4E5B9)
_SM_MUL2 = U64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _splitmix64(state):
    # returns (advanced state, pseudo-random uint64)
    s = state + _SM_GAMMA
    z = s
    z = (z ^ (z >> U64(30))) * _SM_MUL1
    z = (z ^ (z >> U64(27))) * _SM_MUL2
    z = z ^ (z >> U64(31))
    return s, z


@njit(cache=True)
def _grow_tree(X, y, boot, max_features, seed,
               feature, threshold, left, right, count0, count1):
    """Grow one Gini CART tree on rows ``boot`` (bootstrap indices) of X.

    Nodes split to purity; a node becomes a leaf when pure, smaller than two
    samples, or when every feature is constant across its samples.  At each
    node features are visited in random order until ``max_features``
    non-constant ones have been evaluated (constant features do not count).
    Thresholds are midpoints of consecutive distinct sorted values; samples
    with value <= threshold go left.  Impurity-decrease ties break toward the
    lower feature index, then the lower threshold.

    Output arrays are preallocated buffers (capacity >= 2 * len(boot));
    returns the number of nodes written.  ``feature`` is -1 at leaves.
    """
    n = boot.shape[0]
    p = X.shape[1]
    samples = boot.copy()
    rbuf = np.empty(n, boot.dtype)
    vals = np.empty(n, np.float64)
    perm = np.empty(p, np.int64)
    # stack of pending node ranges: start, end, parent, is_left
    cap = 2 * n + 2
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_parent = np.empty(cap, np.int64)
    st_isleft = np.empty(cap, np.int64)
    sp = 0
    st_start[sp], st_end[sp], st_parent[sp], st_isleft[sp] = 0, n, -1, 0
    sp += 1
    rng = seed
    n_nodes = 0

    while sp > 0:
        sp -= 1
        start, end = st_start[sp], st_end[sp]
        parent, is_left = st_parent[sp], st_isleft[sp]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node
        m = end - start
        c1 = 0
        for i in range(start, end):
            c1 += y[samples[i]]
        c0 = m - c1
        count0[node] = c0
        count1[node] = c1
        feature[node] = -1
        threshold[node] = 0.0
        left[node] = -1
        right[node] = -1
        if c0 == 0 or c1 == 0 or m < 2:
            continue

        best_proxy = -np.inf
        best_f = -1
        best_thr = 0.0
        best_nl = 0
        for j in range(p):
            perm[j] = j
        visited = 0
        evaluated = 0
        while visited < p and evaluated < max_features:
            rng, draw = _splitmix64(rng)
            pick = visited + int(draw % U64(p - visited))
            f = perm[pick]
            perm[pick] = perm[visited]
            perm[visited] = f
            visited += 1

            vmin = X[samples[start], f]
            vmax = vmin
            for i in range(m):
                v = X[samples[start + i], f]
                vals[i] = v
                if v < vmin:
                    vmin = v
                elif v > vmax:
                    vmax = v
            if vmin == vmax:
                continue  # constant here; does not count toward max_features
            evaluated += 1

            order = np.argsort(vals[:m])
            l0 = 0
            l1 = 0
            for i in range(m - 1):
                yi = y[samples[start + order[i]]]
                l1 += yi
                l0 += 1 - yi
                vi = vals[order[i]]
                vnext = vals[order[i + 1]]
                if vnext <= vi:
                    continue
                nl = i + 1
                nr = m - nl
                r0 = c0 - l0
                r1 = c1 - l1
                proxy = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr
                thr = 0.5 * (vi + vnext)
                if thr >= vnext:
                    thr = vi
                take = proxy > best_proxy
                if not take and proxy == best_proxy:
                    take = f < best_f or (f == best_f and thr < best_thr)
                if take:
                    best_proxy = proxy
                    best_f = f
                    best_thr = thr
                    best_nl = nl
        if best_f < 0:
            continue  # nothing splittable: all features constant on this node

        nl = 0
        nr = 0
        for i in range(start, end):
            s = samples[i]
            if X[s, best_f] <= best_thr:
                samples[start + nl] = s
                nl += 1
            else:
                rbuf[nr] = s
                nr += 1
        for i in range(nr):
            samples[start + nl + i] = rbuf[i]
        feature[node] = best_f
        threshold[node] = best_thr
        # push right then left so the left child is expanded (numbered) first
        st_start[sp], st_end[sp], st_parent[sp], st_isleft[sp] = start + nl, end, node, 0
        sp += 1
        st_start[sp], st_end[sp], st_parent[sp], st_isleft[sp] = start, start + nl, node, 1
        sp += 1
    return n_nodes


@njit(cache=True, parallel=True)
def _grow_forest(X, y, boot, max_features, seeds,
                 feature, threshold, left, right, count0, count1, n_nodes):
    for t in prange(boot.shape[0]):
        n_nodes[t] = _grow_tree(
            X, y, boot[t], max_features, seeds[t],
            feature[t], threshold[t], left[t], right[t], count0[t], count1[t],
        )


@njit(cache=True)
def _path_stats_tree(feature, left, right, count0, count1, n_nodes,
                     majority, depth, kflips, first_flip, last_flip, n_rev):
    """One depth-first traversal filling per-node majority/depth and, at each
    leaf, the flip statistics of its root-to-leaf majority-label path.

    Flip depths are recorded as integer node depths; -1 marks non-leaf rows
    in ``kflips``.
    """
    for i in range(n_nodes):
        majority[i] = 1 if count1[i] > count0[i] else 0
        kflips[i] = -1
    path = np.empty(n_nodes + 1, np.int8)
    st_node = np.empty(n_nodes + 1, np.int32)
    st_depth = np.empty(n_nodes + 1, np.int32)
    sp = 0
    st_node[sp] = 0
    st_depth[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        node = st_node[sp]
        d = st_depth[sp]
        depth[node] = d
        path[d] = majority[node]
        if feature[node] < 0:
            k = 0
            fi = 0
            li = 0
            rev = 0
            lastdir = 0
            for j in range(1, d + 1):
                if path[j] != path[j - 1]:
                    dirn = 1 if path[j] > path[j - 1] else -1
                    if k > 0 and dirn != lastdir:
                        rev += 1
                    lastdir = dirn
                    k += 1
                    if k == 1:
                        fi = j
                    li = j
            kflips[node] = k
            first_flip[node] = fi
            last_flip[node] = li
            n_rev[node] = rev
        else:
            st_node[sp] = right[node]
            st_depth[sp] = d + 1
            sp += 1
            st_node[sp] = left[node]
            st_depth[sp] = d + 1
            sp += 1


@njit(cache=True, parallel=True)
def _path_stats_forest(feature, left, right, count0, count1, n_nodes,
                       majority, depth, kflips, first_flip, last_flip, n_rev):
    for t in prange(feature.shape[0]):
        _path_stats_tree(
            feature[t], left[t], right[t], count0[t], count1[t], n_nodes[t],
            majority[t], depth[t], kflips[t], first_flip[t], last_flip[t], n_rev[t],
        )


@njit(cache=True, parallel=True)
def _apply_forest(feature, threshold, left, right, X, out):
    """Route every row of X through every tree; writes leaf ids to out (T, n)."""
    T = feature.shape[0]
    n = X.shape[0]
    for t in prange(T):
        for i in range(n):
            node = 0
            f = feature[t, node]
            while f >= 0:
                if X[i, f] <= threshold[t, node]:
                    node = left[t, node]
                else:
                    node = right[t, node]
                f = feature[t, node]
            out[t, i] = node


@njit(cache=True)
def _apply_tree(feature, threshold, left, right, X, out):
    for i in range(X.shape[0]):
        node = 0
        f = feature[node]
        while f >= 0:
            if X[i, f] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
            f = feature[node]
        out[i] = node
