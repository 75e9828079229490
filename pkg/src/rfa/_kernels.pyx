# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernels.

Mirrors ``rfa._fallback`` function by function; see that module for the
node layout and the random draw order, which both backends share.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer
from libc.math cimport fabs, floor, isnan
from libc.stdlib cimport free, malloc
from libc.string cimport memcpy
from numpy.random cimport bitgen_t

cnp.import_array()

ctypedef cnp.int64_t i64

BACKEND = "compiled"


cdef inline bitgen_t* _bitgen(object bg) except NULL:
    return <bitgen_t*> PyCapsule_GetPointer(bg.capsule, "BitGenerator")


cdef inline double _u(bitgen_t* r) noexcept nogil:
    return r.next_double(r.state)


cdef inline Py_ssize_t _dim(double u, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t j = <Py_ssize_t>(u * d)
    if j < d:
        return j
    return d - 1


cdef inline Py_ssize_t _rank(double q_n, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t ell = <Py_ssize_t>floor(q_n * n) + 1
    while ell > 1 and (ell - 1) / <double>n > q_n:
        ell -= 1
    while ell < n and ell / <double>n <= q_n:
        ell += 1
    return ell


cdef inline double _level(Py_ssize_t n, double q, double fixed, double u) noexcept nogil:
    cdef double lo = 1.0 - q
    cdef double hi = q
    if 1.0 / n > lo:
        lo = 1.0 / n
    if 1.0 - 1.0 / n < hi:
        hi = 1.0 - 1.0 / n
    if lo > hi:
        return 0.5
    if isnan(fixed):
        return lo + u * (hi - lo)
    if fixed < lo:
        return lo
    if fixed > hi:
        return hi
    return fixed


def quantile_rank(double q_n, Py_ssize_t n_points):
    return _rank(q_n, n_points)


def quantile_level(Py_ssize_t n_points, double q, double fixed, double u):
    return _level(n_points, q, fixed, u)


# ---------------------------------------------------------------- uniform

cdef void _uniform_fill(bitgen_t* r, Py_ssize_t d, Py_ssize_t k, i64* feature,
                        double* threshold, double* lo, double* hi) noexcept nogil:
    cdef Py_ssize_t n_internal = (1 << k) - 1
    cdef Py_ssize_t n_nodes = (1 << (k + 1)) - 1
    cdef Py_ssize_t i, j, m, c1, c2
    cdef double a, b, t
    for m in range(d):
        lo[m] = 0.0
        hi[m] = 1.0
    for i in range(n_internal):
        j = _dim(_u(r), d)
        a = lo[i * d + j]
        b = hi[i * d + j]
        t = a + _u(r) * (b - a)
        feature[i] = j
        threshold[i] = t
        c1 = 2 * i + 1
        c2 = 2 * i + 2
        for m in range(d):
            lo[c1 * d + m] = lo[i * d + m]
            hi[c1 * d + m] = hi[i * d + m]
            lo[c2 * d + m] = lo[i * d + m]
            hi[c2 * d + m] = hi[i * d + m]
        hi[c1 * d + j] = t
        lo[c2 * d + j] = t
    for i in range(n_internal, n_nodes):
        feature[i] = -1
        threshold[i] = 0.0


def build_uniform(Py_ssize_t d, Py_ssize_t k, unsigned long long seed):
    cdef Py_ssize_t n_nodes = (1 << (k + 1)) - 1
    cdef Py_ssize_t i
    bg = np.random.Philox(key=seed)
    cdef bitgen_t* r = _bitgen(bg)
    feature = np.empty(n_nodes, dtype=np.int64)
    threshold = np.empty(n_nodes, dtype=np.float64)
    cdef i64[::1] f = feature
    cdef double[::1] th = threshold
    cdef double* lo = <double*> malloc(n_nodes * d * sizeof(double))
    cdef double* hi = <double*> malloc(n_nodes * d * sizeof(double))
    if lo == NULL or hi == NULL:
        free(lo)
        free(hi)
        raise MemoryError()
    with nogil:
        _uniform_fill(r, d, k, &f[0], &th[0], lo, hi)
    free(lo)
    free(hi)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    n_internal = (1 << k) - 1
    idx = np.arange(n_internal, dtype=np.int64)
    left[:n_internal] = 2 * idx + 1
    right[:n_internal] = 2 * idx + 2
    return feature, threshold, left, right


cdef void _uniform_predict_one(bitgen_t* r, const double[:, ::1] X, const double[::1] Y,
                               Py_ssize_t k, const double[:, ::1] Q, double* out,
                               i64* feature, double* threshold, double* lo, double* hi,
                               double* sums, i64* counts) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t n_nodes = (1 << (k + 1)) - 1
    cdef Py_ssize_t i, node
    _uniform_fill(r, d, k, feature, threshold, lo, hi)
    for i in range(n_nodes):
        sums[i] = 0.0
        counts[i] = 0
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] < threshold[node]:
                node = 2 * node + 1
            else:
                node = 2 * node + 2
        sums[node] += Y[i]
        counts[node] += 1
    for i in range(Q.shape[0]):
        node = 0
        while feature[node] >= 0:
            if Q[i, feature[node]] < threshold[node]:
                node = 2 * node + 1
            else:
                node = 2 * node + 2
        if counts[node] > 0:
            out[i] = sums[node] / counts[node]
        else:
            out[i] = 0.0


def uniform_predictions(X, Y, Py_ssize_t k, seeds, Q):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef Py_ssize_t d = Xv.shape[1]
    cdef Py_ssize_t n_nodes = (1 << (k + 1)) - 1
    cdef Py_ssize_t T = len(seeds)
    result = np.empty((T, Qv.shape[0]), dtype=np.float64)
    cdef double[:, ::1] out = result
    cdef i64* feature = <i64*> malloc(n_nodes * sizeof(i64))
    cdef double* threshold = <double*> malloc(n_nodes * sizeof(double))
    cdef double* lo = <double*> malloc(n_nodes * d * sizeof(double))
    cdef double* hi = <double*> malloc(n_nodes * d * sizeof(double))
    cdef double* sums = <double*> malloc(n_nodes * sizeof(double))
    cdef i64* counts = <i64*> malloc(n_nodes * sizeof(i64))
    cdef bitgen_t* r
    cdef Py_ssize_t t
    try:
        if (feature == NULL or threshold == NULL or lo == NULL or hi == NULL
                or sums == NULL or counts == NULL):
            raise MemoryError()
        for t in range(T):
            bg = np.random.Philox(key=int(seeds[t]))
            r = _bitgen(bg)
            with nogil:
                _uniform_predict_one(r, Xv, Yv, k, Qv, &out[t, 0] if Qv.shape[0] else NULL,
                                     feature, threshold, lo, hi, sums, counts)
    finally:
        free(feature)
        free(threshold)
        free(lo)
        free(hi)
        free(sums)
        free(counts)
    return result


# --------------------------------------------------------------- quantile

cdef inline bint _less(double va, i64 ia, double vb, i64 ib) noexcept nogil:
    return va < vb or (va == vb and ia < ib)


cdef i64 _select(double* v, i64* ids, Py_ssize_t n, Py_ssize_t kth) noexcept nogil:
    """Return the id of the ``kth`` (0-based) smallest ``(value, id)`` key."""
    cdef Py_ssize_t lo = 0
    cdef Py_ssize_t hi = n - 1
    cdef Py_ssize_t i, j, mid
    cdef double pv, tv
    cdef i64 pid, ti
    while lo < hi:
        mid = lo + (hi - lo) // 2
        pv = v[mid]
        pid = ids[mid]
        i = lo
        j = hi
        while i <= j:
            while _less(v[i], ids[i], pv, pid):
                i += 1
            while _less(pv, pid, v[j], ids[j]):
                j -= 1
            if i <= j:
                tv = v[i]
                v[i] = v[j]
                v[j] = tv
                ti = ids[i]
                ids[i] = ids[j]
                ids[j] = ti
                i += 1
                j -= 1
        if kth <= j:
            hi = j
        elif kth >= i:
            lo = i
        else:
            return ids[kth]
    return ids[kth]


cdef struct QTree:
    Py_ssize_t cap
    Py_ssize_t n_nodes
    i64* feature
    double* threshold
    i64* left
    i64* right
    i64* excluded
    i64* start      # segment start in ``work`` for leaves
    i64* count
    i64* perm       # size n
    i64* work       # size a_n, retained points, leaf segments live here
    i64* tmp        # size a_n
    double* vals    # size a_n
    i64* ids        # size a_n
    i64* stack      # 3 * cap entries: node, begin, end


cdef int _qtree_alloc(QTree* T, Py_ssize_t n, Py_ssize_t a_n) noexcept nogil:
    T.cap = 4 * a_n + 3
    T.n_nodes = 0
    T.feature = <i64*> malloc(T.cap * sizeof(i64))
    T.threshold = <double*> malloc(T.cap * sizeof(double))
    T.left = <i64*> malloc(T.cap * sizeof(i64))
    T.right = <i64*> malloc(T.cap * sizeof(i64))
    T.excluded = <i64*> malloc(T.cap * sizeof(i64))
    T.start = <i64*> malloc(T.cap * sizeof(i64))
    T.count = <i64*> malloc(T.cap * sizeof(i64))
    T.perm = <i64*> malloc((n + 1) * sizeof(i64))
    T.work = <i64*> malloc((a_n + 1) * sizeof(i64))
    T.tmp = <i64*> malloc((a_n + 1) * sizeof(i64))
    T.vals = <double*> malloc((a_n + 1) * sizeof(double))
    T.ids = <i64*> malloc((a_n + 1) * sizeof(i64))
    T.stack = <i64*> malloc(3 * T.cap * sizeof(i64))
    if (T.feature == NULL or T.threshold == NULL or T.left == NULL or T.right == NULL
            or T.excluded == NULL or T.start == NULL or T.count == NULL or T.perm == NULL
            or T.work == NULL or T.tmp == NULL or T.vals == NULL or T.ids == NULL
            or T.stack == NULL):
        return -1
    return 0


cdef void _qtree_free(QTree* T) noexcept nogil:
    free(T.feature)
    free(T.threshold)
    free(T.left)
    free(T.right)
    free(T.excluded)
    free(T.start)
    free(T.count)
    free(T.perm)
    free(T.work)
    free(T.tmp)
    free(T.vals)
    free(T.ids)
    free(T.stack)


cdef inline Py_ssize_t _new_node(QTree* T) noexcept nogil:
    cdef Py_ssize_t v = T.n_nodes
    T.feature[v] = -1
    T.threshold[v] = 0.0
    T.left[v] = -1
    T.right[v] = -1
    T.excluded[v] = -1
    T.start[v] = 0
    T.count[v] = 0
    T.n_nodes += 1
    return v


cdef Py_ssize_t _pick_dim(const double[:, ::1] X, QTree* T, Py_ssize_t b, Py_ssize_t e,
                          bitgen_t* r) noexcept nogil:
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t attempt, j, s
    cdef double mn, mx, c
    for attempt in range(d):
        j = _dim(_u(r), d)
        mn = X[T.work[b], j]
        mx = mn
        for s in range(b + 1, e):
            c = X[T.work[s], j]
            if c < mn:
                mn = c
            if c > mx:
                mx = c
        if mx > mn:
            return j
    return -1


cdef void _qtree_build(QTree* T, const double[:, ::1] X, Py_ssize_t a_n, double q,
                       double fixed_qn, bitgen_t* r) noexcept nogil:
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t i, j, s, top, v, b, e, N, ell, nl, nr, lid
    cdef i64 tmp_i, ex
    cdef double u, q_n, t, c
    for i in range(n):
        T.perm[i] = i
    for i in range(a_n):
        j = i + <Py_ssize_t>(_u(r) * (n - i))
        if j >= n:
            j = n - 1
        tmp_i = T.perm[i]
        T.perm[i] = T.perm[j]
        T.perm[j] = tmp_i
    for i in range(a_n):
        T.work[i] = T.perm[i]
    T.n_nodes = 0
    _new_node(T)
    T.stack[0] = 0
    T.stack[1] = 0
    T.stack[2] = a_n
    top = 1
    while top > 0:
        top -= 1
        v = T.stack[3 * top]
        b = T.stack[3 * top + 1]
        e = T.stack[3 * top + 2]
        N = e - b
        if N >= 2:
            j = _pick_dim(X, T, b, e, r)
        else:
            j = -1
        if j < 0:
            T.start[v] = b
            T.count[v] = N
            continue
        if N >= 3:
            if isnan(fixed_qn):
                u = _u(r)
            else:
                u = 0.0
            q_n = _level(N, q, fixed_qn, u)
            ell = _rank(q_n, N)
            if ell < 2:
                ell = 2
            if ell > N - 1:
                ell = N - 1
            for s in range(N):
                T.vals[s] = X[T.work[b + s], j]
                T.ids[s] = T.work[b + s]
            ex = _select(T.vals, T.ids, N, ell - 1)
            t = X[ex, j]
        else:
            ex = -1
            t = 0.5 * (X[T.work[b], j] + X[T.work[b + 1], j])
        nl = 0
        for s in range(b, e):
            if X[T.work[s], j] < t:
                T.tmp[nl] = T.work[s]
                nl += 1
        nr = 0
        for s in range(b, e):
            c = X[T.work[s], j]
            if c >= t and T.work[s] != ex:
                T.tmp[nl + nr] = T.work[s]
                nr += 1
        memcpy(&T.work[b], T.tmp, (nl + nr) * sizeof(i64))
        lid = _new_node(T)
        _new_node(T)
        T.feature[v] = j
        T.threshold[v] = t
        T.left[v] = lid
        T.right[v] = lid + 1
        T.excluded[v] = ex
        T.stack[3 * top] = lid + 1
        T.stack[3 * top + 1] = b + nl
        T.stack[3 * top + 2] = b + nl + nr
        top += 1
        T.stack[3 * top] = lid
        T.stack[3 * top + 1] = b
        T.stack[3 * top + 2] = b + nl
        top += 1


cdef inline Py_ssize_t _descend(QTree* T, const double[:, ::1] Q, Py_ssize_t i) noexcept nogil:
    cdef Py_ssize_t node = 0
    while T.feature[node] >= 0:
        if Q[i, T.feature[node]] < T.threshold[node]:
            node = T.left[node]
        else:
            node = T.right[node]
    return node


def build_quantile(X, Py_ssize_t a_n, double q, double fixed_qn, unsigned long long seed):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef QTree T
    cdef Py_ssize_t v, s, pos
    bg = np.random.Philox(key=seed)
    cdef bitgen_t* r = _bitgen(bg)
    if _qtree_alloc(&T, n, a_n) != 0:
        _qtree_free(&T)
        raise MemoryError()
    try:
        with nogil:
            _qtree_build(&T, Xv, a_n, q, fixed_qn, r)
        nn = T.n_nodes
        feature = np.empty(nn, dtype=np.int64)
        threshold = np.empty(nn, dtype=np.float64)
        left = np.empty(nn, dtype=np.int64)
        right = np.empty(nn, dtype=np.int64)
        excluded = np.empty(nn, dtype=np.int64)
        start = np.zeros(nn, dtype=np.int64)
        count = np.zeros(nn, dtype=np.int64)
        total = 0
        for v in range(nn):
            if T.feature[v] < 0:
                total += T.count[v]
        members = np.empty(total, dtype=np.int64)
        pos = 0
        for v in range(nn):
            feature[v] = T.feature[v]
            threshold[v] = T.threshold[v]
            left[v] = T.left[v]
            right[v] = T.right[v]
            excluded[v] = T.excluded[v]
            if T.feature[v] < 0:
                start[v] = pos
                count[v] = T.count[v]
                for s in range(T.count[v]):
                    members[pos] = T.work[T.start[v] + s]
                    pos += 1
    finally:
        _qtree_free(&T)
    return feature, threshold, left, right, excluded, start, count, members


def quantile_predictions(X, Y, Py_ssize_t a_n, double q, double fixed_qn, seeds, Q):
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0]
    cdef Py_ssize_t T_count = len(seeds)
    cdef Py_ssize_t nq = Qv.shape[0]
    result = np.empty((T_count, nq), dtype=np.float64)
    cdef double[:, ::1] out = result
    cdef QTree T
    cdef bitgen_t* r
    cdef Py_ssize_t t, i, s, leaf
    cdef double acc
    if _qtree_alloc(&T, n, a_n) != 0:
        _qtree_free(&T)
        raise MemoryError()
    try:
        for t in range(T_count):
            bg = np.random.Philox(key=int(seeds[t]))
            r = _bitgen(bg)
            with nogil:
                _qtree_build(&T, Xv, a_n, q, fixed_qn, r)
                for i in range(nq):
                    leaf = _descend(&T, Qv, i)
                    if T.count[leaf] > 0:
                        acc = 0.0
                        for s in range(T.count[leaf]):
                            acc = acc + Yv[T.work[T.start[leaf] + s]]
                        out[t, i] = acc / T.count[leaf]
                    else:
                        out[t, i] = 0.0
    finally:
        _qtree_free(&T)
    return result


# ------------------------------------------------------------------ shared

def apply(feature, threshold, left, right, Q):
    cdef const i64[::1] f = np.ascontiguousarray(feature, dtype=np.int64)
    cdef const double[::1] th = np.ascontiguousarray(threshold, dtype=np.float64)
    cdef const i64[::1] lf = np.ascontiguousarray(left, dtype=np.int64)
    cdef const i64[::1] rt = np.ascontiguousarray(right, dtype=np.int64)
    cdef const double[:, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    leaves = np.empty(Qv.shape[0], dtype=np.int64)
    cdef i64[::1] out = leaves
    cdef Py_ssize_t i, node
    with nogil:
        for i in range(Qv.shape[0]):
            node = 0
            while f[node] >= 0:
                if Qv[i, f[node]] < th[node]:
                    node = lf[node]
                else:
                    node = rt[node]
            out[i] = node
    return leaves


def attach(feature, threshold, left, right, X):
    leaf = apply(feature, threshold, left, right, X)
    cdef Py_ssize_t n_nodes = len(feature)
    count = np.bincount(leaf, minlength=n_nodes).astype(np.int64)
    offsets = np.concatenate(([0], np.cumsum(count)[:-1])).astype(np.int64)
    start = np.where(count > 0, offsets, 0)
    members = np.argsort(leaf, kind="stable").astype(np.int64)
    return start, count, members


def leaf_values(start, count, members, Y):
    cdef const i64[::1] st = np.ascontiguousarray(start, dtype=np.int64)
    cdef const i64[::1] ct = np.ascontiguousarray(count, dtype=np.int64)
    cdef const i64[::1] mb = np.ascontiguousarray(members, dtype=np.int64)
    cdef const double[::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)
    values = np.zeros(st.shape[0], dtype=np.float64)
    cdef double[::1] out = values
    cdef Py_ssize_t v, s
    cdef double acc
    with nogil:
        for v in range(st.shape[0]):
            if ct[v] > 0:
                acc = 0.0
                for s in range(ct[v]):
                    acc = acc + Yv[mb[st[v] + s]]
                out[v] = acc / ct[v]
    return values


def neumaier_rows(block, double[::1] s, double[::1] c):
    cdef const double[:, ::1] B = np.ascontiguousarray(block, dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double x, t
    with nogil:
        for i in range(B.shape[0]):
            for j in range(B.shape[1]):
                x = B[i, j]
                t = s[j] + x
                if fabs(s[j]) >= fabs(x):
                    c[j] += (s[j] - t) + x
                else:
                    c[j] += (x - t) + s[j]
                s[j] = t
