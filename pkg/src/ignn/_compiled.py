"""Compiled push loop.

Same queue discipline and the same floating-point operations, in the same
order, as the pure-Python loop in ``propagation``; results are bit-identical.
Imported lazily so that numba stays optional.
"""
import numba
import numpy as np


@numba.njit(cache=True, nogil=True)
def push_column(start, length, indices, inv_pb, inv_p1, thr, alpha, est, res, seeds):
    n = start.shape[0]
    keep = 1.0 - alpha
    inq = np.zeros(n, dtype=np.uint8)
    # ring buffer: the in-queue flag keeps every node in it at most once
    queue = np.empty(n, dtype=np.int64)
    head = 0
    size = 0
    for s in seeds:
        if not inq[s]:
            inq[s] = 1
            queue[(head + size) % n] = s
            size += 1
    pushes = 0
    touched = 0
    while size:
        s = queue[head]
        head += 1
        if head == n:
            head = 0
        size -= 1
        inq[s] = 0
        rs = res[s]
        lim = thr[s]
        if -lim <= rs <= lim:
            continue
        est[s] += alpha * rs
        res[s] = 0.0
        share = keep * rs * inv_p1[s]
        b = start[s]
        k = length[s]
        for j in range(b, b + k):
            t = indices[j]
            rt = res[t] + share * inv_pb[t]
            res[t] = rt
            if not inq[t]:
                lim = thr[t]
                if rt > lim or rt < -lim:
                    inq[t] = 1
                    queue[(head + size) % n] = t
                    size += 1
        pushes += 1
        touched += k
    return pushes, touched
