"""Compiled tree-induction and traversal kernels.

Everything here is numba-jitted and operates on flat arrays so that a full
750-tree forest fits in the experiment time budget on one core.  The random
generator is the same splitmix64-seeded xoshiro256** as
:mod:`creditaudit.rng`, re-implemented on uint64 (tests cross-check the two
implementations draw for draw).  Draw order inside one tree build is fixed:
n bootstrap draws first, then mtry feature-sampling draws per visited node
in depth-first order (left child before right).

Trees are stored as parallel arrays indexed by node id: ``feat[i] < 0``
marks a leaf; otherwise ``is_cat[i]`` selects the test (value == thresh for
categorical levels, value < thresh for numeric midpoint thresholds).  A
candidate split must beat the running best strictly, with features scanned
in ascending index order and thresholds/levels in ascending value order, so
ties resolve to the lowest feature and lowest threshold.  A split is kept
only if its impurity decrease exceeds a small positive floor; otherwise the
node becomes a leaf.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

_DEC_FLOOR = 1e-12


@njit(cache=True, nogil=True)
def _sm64(state):
    state = state + U64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)
    z = z ^ (z >> U64(31))
    return state, z


@njit(cache=True, nogil=True)
def _rotl(x, k):
    return (x << U64(k)) | (x >> U64(64 - k))


@njit(cache=True, nogil=True)
def _xo_init(seed):
    s = np.empty(4, dtype=np.uint64)
    st = seed
    for i in range(4):
        st, out = _sm64(st)
        s[i] = out
    return s


@njit(cache=True, nogil=True)
def _xo_next(s):
    result = _rotl(s[1] * U64(5), 7) * U64(9)
    t = s[1] << U64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, nogil=True)
def _xo_uniform(s):
    return (_xo_next(s) >> U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def rng_uniforms(seed, count):
    """Test hook: the first ``count`` uniforms at ``seed``."""
    s = _xo_init(seed)
    out = np.empty(count, dtype=np.float64)
    for i in range(count):
        out[i] = _xo_uniform(s)
    return out


@njit(cache=True, nogil=True)
def build_tree_cls(X, kinds, y, n_classes, mtry, min_size, max_depth, seed):
    """Grow one classification tree on a fresh bootstrap of X's rows.

    Returns (n_nodes, feat, thresh, is_cat, left, right, dec, counts, inbag)
    with arrays sized to capacity 2n+1; the caller trims to n_nodes.
    """
    n, p = X.shape
    rng = _xo_init(seed)
    idx = np.empty(n, dtype=np.int32)
    inbag = np.zeros(n, dtype=np.int32)
    for i in range(n):
        r = int(_xo_uniform(rng) * n)
        idx[i] = r
        inbag[r] += 1
    cap = 2 * n + 1
    feat = np.full(cap, -1, dtype=np.int32)
    thresh = np.zeros(cap, dtype=np.float64)
    is_cat = np.zeros(cap, dtype=np.int8)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    dec = np.zeros(cap, dtype=np.float64)
    counts = np.zeros((cap, n_classes), dtype=np.int32)
    stack_node = np.empty(cap, dtype=np.int32)
    stack_lo = np.empty(cap, dtype=np.int32)
    stack_hi = np.empty(cap, dtype=np.int32)
    stack_depth = np.empty(cap, dtype=np.int32)
    n_nodes = 1
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    sp = 1
    featbuf = np.empty(p, dtype=np.int32)
    vals = np.empty(n, dtype=np.float64)
    cls_left = np.empty(n_classes, dtype=np.int64)
    cls_right = np.empty(n_classes, dtype=np.int64)
    cls_node = np.empty(n_classes, dtype=np.int64)
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        m = hi - lo
        for c in range(n_classes):
            cls_node[c] = 0
        for i in range(lo, hi):
            cls_node[int(y[idx[i]])] += 1
        for c in range(n_classes):
            counts[node, c] = cls_node[c]
        n_present = 0
        for c in range(n_classes):
            if cls_node[c] > 0:
                n_present += 1
        if m <= min_size or n_present <= 1 or (max_depth >= 0 and depth >= max_depth):
            continue
        g_parent = 1.0
        for c in range(n_classes):
            f = cls_node[c] / m
            g_parent -= f * f
        for j in range(p):
            featbuf[j] = j
        for j in range(mtry):
            r = j + int(_xo_uniform(rng) * (p - j))
            tmp = featbuf[j]
            featbuf[j] = featbuf[r]
            featbuf[r] = tmp
        featbuf[:mtry].sort()
        best_dec = _DEC_FLOOR
        best_f = -1
        best_t = 0.0
        best_cat = 0
        for jj in range(mtry):
            f_id = featbuf[jj]
            if kinds[f_id] == 0:
                for i in range(m):
                    vals[i] = X[idx[lo + i], f_id]
                order = np.argsort(vals[:m], kind="mergesort")
                for c in range(n_classes):
                    cls_left[c] = 0
                    cls_right[c] = cls_node[c]
                nl = 0
                for i in range(m - 1):
                    row = idx[lo + order[i]]
                    cc = int(y[row])
                    cls_left[cc] += 1
                    cls_right[cc] -= 1
                    nl += 1
                    v0 = vals[order[i]]
                    v1 = vals[order[i + 1]]
                    if v1 <= v0:
                        continue
                    nr = m - nl
                    gl = 1.0
                    gr = 1.0
                    for c in range(n_classes):
                        fl = cls_left[c] / nl
                        fr = cls_right[c] / nr
                        gl -= fl * fl
                        gr -= fr * fr
                    d = g_parent - (nl * gl + nr * gr) / m
                    if d > best_dec:
                        best_dec = d
                        best_f = f_id
                        best_t = 0.5 * (v0 + v1)
                        best_cat = 0
            else:
                max_lv = 0
                for i in range(lo, hi):
                    v = int(X[idx[i], f_id])
                    if v > max_lv:
                        max_lv = v
                for lv in range(max_lv + 1):
                    for c in range(n_classes):
                        cls_left[c] = 0
                        cls_right[c] = cls_node[c]
                    nl = 0
                    for i in range(lo, hi):
                        row = idx[i]
                        if int(X[row, f_id]) == lv:
                            cc = int(y[row])
                            cls_left[cc] += 1
                            cls_right[cc] -= 1
                            nl += 1
                    if nl == 0 or nl == m:
                        continue
                    nr = m - nl
                    gl = 1.0
                    gr = 1.0
                    for c in range(n_classes):
                        fl = cls_left[c] / nl
                        fr = cls_right[c] / nr
                        gl -= fl * fl
                        gr -= fr * fr
                    d = g_parent - (nl * gl + nr * gr) / m
                    if d > best_dec:
                        best_dec = d
                        best_f = f_id
                        best_t = float(lv)
                        best_cat = 1
        if best_f < 0:
            continue
        i = lo
        j = hi - 1
        while i <= j:
            v = X[idx[i], best_f]
            if best_cat == 1:
                go_left = v == best_t
            else:
                go_left = v < best_t
            if go_left:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i
        feat[node] = best_f
        thresh[node] = best_t
        is_cat[node] = best_cat
        dec[node] = best_dec
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack_node[sp] = rid
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lid
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1
    return n_nodes, feat, thresh, is_cat, left, right, dec, counts, inbag


@njit(cache=True, nogil=True)
def build_tree_reg(X, kinds, y, mtry, min_size, max_depth, seed):
    """Grow one regression tree (variance impurity) on a bootstrap sample.

    Returns (n_nodes, feat, thresh, is_cat, left, right, dec, node_mean,
    node_n, inbag).  The decrease floor scales with the parent variance so
    the positive-decrease rule is unit-independent.
    """
    n, p = X.shape
    rng = _xo_init(seed)
    idx = np.empty(n, dtype=np.int32)
    inbag = np.zeros(n, dtype=np.int32)
    for i in range(n):
        r = int(_xo_uniform(rng) * n)
        idx[i] = r
        inbag[r] += 1
    cap = 2 * n + 1
    feat = np.full(cap, -1, dtype=np.int32)
    thresh = np.zeros(cap, dtype=np.float64)
    is_cat = np.zeros(cap, dtype=np.int8)
    left = np.full(cap, -1, dtype=np.int32)
    right = np.full(cap, -1, dtype=np.int32)
    dec = np.zeros(cap, dtype=np.float64)
    node_mean = np.zeros(cap, dtype=np.float64)
    node_n = np.zeros(cap, dtype=np.int32)
    stack_node = np.empty(cap, dtype=np.int32)
    stack_lo = np.empty(cap, dtype=np.int32)
    stack_hi = np.empty(cap, dtype=np.int32)
    stack_depth = np.empty(cap, dtype=np.int32)
    n_nodes = 1
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    sp = 1
    featbuf = np.empty(p, dtype=np.int32)
    vals = np.empty(n, dtype=np.float64)
    while sp > 0:
        sp -= 1
        node = stack_node[sp]
        lo = stack_lo[sp]
        hi = stack_hi[sp]
        depth = stack_depth[sp]
        m = hi - lo
        s1 = 0.0
        s2 = 0.0
        for i in range(lo, hi):
            v = y[idx[i]]
            s1 += v
            s2 += v * v
        mean = s1 / m
        var_parent = s2 / m - mean * mean
        if var_parent < 0.0:
            var_parent = 0.0
        node_mean[node] = mean
        node_n[node] = m
        if (
            m <= min_size
            or var_parent <= 0.0
            or (max_depth >= 0 and depth >= max_depth)
        ):
            continue
        for j in range(p):
            featbuf[j] = j
        for j in range(mtry):
            r = j + int(_xo_uniform(rng) * (p - j))
            tmp = featbuf[j]
            featbuf[j] = featbuf[r]
            featbuf[r] = tmp
        featbuf[:mtry].sort()
        best_dec = _DEC_FLOOR * (1.0 + var_parent)
        best_f = -1
        best_t = 0.0
        best_cat = 0
        for jj in range(mtry):
            f_id = featbuf[jj]
            if kinds[f_id] == 0:
                for i in range(m):
                    vals[i] = X[idx[lo + i], f_id]
                order = np.argsort(vals[:m], kind="mergesort")
                ls1 = 0.0
                ls2 = 0.0
                nl = 0
                for i in range(m - 1):
                    row = idx[lo + order[i]]
                    yv = y[row]
                    ls1 += yv
                    ls2 += yv * yv
                    nl += 1
                    v0 = vals[order[i]]
                    v1 = vals[order[i + 1]]
                    if v1 <= v0:
                        continue
                    nr = m - nl
                    rs1 = s1 - ls1
                    rs2 = s2 - ls2
                    lm = ls1 / nl
                    rm = rs1 / nr
                    vl = ls2 / nl - lm * lm
                    vr = rs2 / nr - rm * rm
                    if vl < 0.0:
                        vl = 0.0
                    if vr < 0.0:
                        vr = 0.0
                    d = var_parent - (nl * vl + nr * vr) / m
                    if d > best_dec:
                        best_dec = d
                        best_f = f_id
                        best_t = 0.5 * (v0 + v1)
                        best_cat = 0
            else:
                max_lv = 0
                for i in range(lo, hi):
                    v = int(X[idx[i], f_id])
                    if v > max_lv:
                        max_lv = v
                for lv in range(max_lv + 1):
                    ls1 = 0.0
                    ls2 = 0.0
                    nl = 0
                    for i in range(lo, hi):
                        row = idx[i]
                        if int(X[row, f_id]) == lv:
                            yv = y[row]
                            ls1 += yv
                            ls2 += yv * yv
                            nl += 1
                    if nl == 0 or nl == m:
                        continue
                    nr = m - nl
                    rs1 = s1 - ls1
                    rs2 = s2 - ls2
                    lm = ls1 / nl
                    rm = rs1 / nr
                    vl = ls2 / nl - lm * lm
                    vr = rs2 / nr - rm * rm
                    if vl < 0.0:
                        vl = 0.0
                    if vr < 0.0:
                        vr = 0.0
                    d = var_parent - (nl * vl + nr * vr) / m
                    if d > best_dec:
                        best_dec = d
                        best_f = f_id
                        best_t = float(lv)
                        best_cat = 1
        if best_f < 0:
            continue
        i = lo
        j = hi - 1
        while i <= j:
            v = X[idx[i], best_f]
            if best_cat == 1:
                go_left = v == best_t
            else:
                go_left = v < best_t
            if go_left:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i
        feat[node] = best_f
        thresh[node] = best_t
        is_cat[node] = best_cat
        dec[node] = best_dec
        lid = n_nodes
        rid = n_nodes + 1
        n_nodes += 2
        left[node] = lid
        right[node] = rid
        stack_node[sp] = rid
        stack_lo[sp] = mid
        stack_hi[sp] = hi
        stack_depth[sp] = depth + 1
        sp += 1
        stack_node[sp] = lid
        stack_lo[sp] = lo
        stack_hi[sp] = mid
        stack_depth[sp] = depth + 1
        sp += 1
    return n_nodes, feat, thresh, is_cat, left, right, dec, node_mean, node_n, inbag


@njit(cache=True, nogil=True)
def _descend(Xq, i, base, feat, thresh, is_cat, left, right):
    node = 0
    while feat[base + node] >= 0:
        v = Xq[i, feat[base + node]]
        if is_cat[base + node] == 1:
            go_left = v == thresh[base + node]
        else:
            go_left = v < thresh[base + node]
        if go_left:
            node = left[base + node]
        else:
            node = right[base + node]
    return base + node


@njit(cache=True, nogil=True)
def forest_votes(Xq, offsets, feat, thresh, is_cat, left, right, leaf_label, n_classes):
    """Per-row vote counts over all trees; leaf_label holds each node's
    majority class."""
    nq = Xq.shape[0]
    votes = np.zeros((nq, n_classes), dtype=np.int32)
    for t in range(len(offsets) - 1):
        base = offsets[t]
        for i in range(nq):
            leaf = _descend(Xq, i, base, feat, thresh, is_cat, left, right)
            votes[i, leaf_label[leaf]] += 1
    return votes


@njit(cache=True, nogil=True)
def forest_means(Xq, offsets, feat, thresh, is_cat, left, right, node_mean):
    """Mean over trees of the reached leaf means."""
    nq = Xq.shape[0]
    out = np.zeros(nq, dtype=np.float64)
    n_trees = len(offsets) - 1
    for t in range(n_trees):
        base = offsets[t]
        for i in range(nq):
            leaf = _descend(Xq, i, base, feat, thresh, is_cat, left, right)
            out[i] += node_mean[leaf]
    return out / n_trees


@njit(cache=True, nogil=True)
def oob_votes(X, offsets, feat, thresh, is_cat, left, right, leaf_label, inbag, n_classes):
    """Votes restricted to trees whose bootstrap missed the row."""
    n = X.shape[0]
    votes = np.zeros((n, n_classes), dtype=np.int32)
    for t in range(len(offsets) - 1):
        base = offsets[t]
        for i in range(n):
            if inbag[t, i] == 0:
                leaf = _descend(X, i, base, feat, thresh, is_cat, left, right)
                votes[i, leaf_label[leaf]] += 1
    return votes


@njit(cache=True, nogil=True)
def oob_means(X, offsets, feat, thresh, is_cat, left, right, node_mean, inbag):
    """Per-row (sum, count) of leaf means over out-of-bag trees."""
    n = X.shape[0]
    sums = np.zeros(n, dtype=np.float64)
    hits = np.zeros(n, dtype=np.int32)
    for t in range(len(offsets) - 1):
        base = offsets[t]
        for i in range(n):
            if inbag[t, i] == 0:
                leaf = _descend(X, i, base, feat, thresh, is_cat, left, right)
                sums[i] += node_mean[leaf]
                hits[i] += 1
    return sums, hits
