"""Compiled inner loops: binary heap, fast marching, stencil Dijkstra.

All arrays are flat row-major views of d-dimensional grids.
"""

import math

import numba
import numpy as np

FMM_OK = 0
FMM_CAUSALITY = 1


@numba.njit(cache=True)
def _push(hv, hi, n, val, idx):
    if n >= hv.shape[0]:
        nv = np.empty(hv.shape[0] * 2)
        ni = np.empty(hv.shape[0] * 2, np.int64)
        nv[:n] = hv[:n]
        ni[:n] = hi[:n]
        hv, hi = nv, ni
    j = n
    hv[j] = val
    hi[j] = idx
    while j > 0:
        p = (j - 1) // 2
        if hv[p] <= hv[j]:
            break
        hv[p], hv[j] = hv[j], hv[p]
        hi[p], hi[j] = hi[j], hi[p]
        j = p
    return hv, hi, n + 1


@numba.njit(cache=True)
def _pop(hv, hi, n):
    val = hv[0]
    idx = hi[0]
    n -= 1
    hv[0] = hv[n]
    hi[0] = hi[n]
    j = 0
    while True:
        c = 2 * j + 1
        if c >= n:
            break
        if c + 1 < n and hv[c + 1] < hv[c]:
            c += 1
        if hv[j] <= hv[c]:
            break
        hv[c], hv[j] = hv[j], hv[c]
        hi[c], hi[j] = hi[j], hi[c]
        j = c
    return val, idx, n


@numba.njit(cache=True)
def _strides(shape):
    d = shape.shape[0]
    st = np.empty(d, np.int64)
    s = 1
    for k in range(d - 1, -1, -1):
        st[k] = s
        s *= shape[k]
    return st


@numba.njit(cache=True)
def fast_march(f, shape, h, init_u, fixed):
    """First-order Godunov fast marching for |∇u| = f.

    Nodes with ``fixed`` set start known-valued at ``init_u`` and are never
    updated. The slowness used in an update is the mean of f over the node
    and the upwind neighbours entering that update.
    Returns (u, status, n_accepted).
    """
    d = shape.shape[0]
    N = f.shape[0]
    st = _strides(shape)
    u = np.full(N, np.inf)
    state = np.zeros(N, np.int8)  # 0 far, 1 trial, 2 accepted
    hv = np.empty(4096)
    hi = np.empty(4096, np.int64)
    n = 0
    for i in range(N):
        if fixed[i]:
            u[i] = init_u[i]
            state[i] = 1
            hv, hi, n = _push(hv, hi, n, u[i], i)
    a = np.empty(d)
    ia = np.empty(d, np.int64)
    hh = np.empty(d)
    coord = np.empty(d, np.int64)
    last = -np.inf
    accepted = 0
    status = FMM_OK
    while n > 0:
        val, i, n = _pop(hv, hi, n)
        if state[i] == 2 or val > u[i]:
            continue
        if val < last - 1e-12 * max(1.0, abs(last)):
            status = FMM_CAUSALITY
        last = max(last, val)
        state[i] = 2
        accepted += 1
        rem = i
        for k in range(d):
            coord[k] = rem // st[k]
            rem -= coord[k] * st[k]
        for k in range(d):
            for sg in (-1, 1):
                c = coord[k] + sg
                if c < 0 or c >= shape[k]:
                    continue
                j = i + sg * st[k]
                if state[j] == 2 or fixed[j]:
                    continue
                m = 0
                rj = j
                for q in range(d):
                    cq = rj // st[q]
                    rj -= cq * st[q]
                    best = np.inf
                    bi = -1
                    if cq > 0:
                        jj = j - st[q]
                        if state[jj] == 2 and u[jj] < best:
                            best = u[jj]
                            bi = jj
                    if cq < shape[q] - 1:
                        jj = j + st[q]
                        if state[jj] == 2 and u[jj] < best:
                            best = u[jj]
                            bi = jj
                    if bi >= 0:
                        a[m] = best
                        ia[m] = bi
                        hh[m] = h[q]
                        m += 1
                for p in range(1, m):
                    x = a[p]
                    xi = ia[p]
                    xh = hh[p]
                    r = p - 1
                    while r >= 0 and a[r] > x:
                        a[r + 1] = a[r]
                        ia[r + 1] = ia[r]
                        hh[r + 1] = hh[r]
                        r -= 1
                    a[r + 1] = x
                    ia[r + 1] = xi
                    hh[r + 1] = xh
                unew = np.inf
                for kk in range(1, m + 1):
                    fs = f[j]
                    for p in range(kk):
                        fs += f[ia[p]]
                    fs /= kk + 1
                    A = 0.0
                    B = 0.0
                    C = -fs * fs
                    for p in range(kk):
                        w = 1.0 / (hh[p] * hh[p])
                        A += w
                        B += w * a[p]
                        C += w * a[p] * a[p]
                    disc = B * B - A * C
                    if disc < 0:
                        break
                    cand = (B + math.sqrt(disc)) / A
                    if cand < a[kk - 1]:
                        break
                    unew = cand
                    if kk == m or cand <= a[kk]:
                        break
                if unew < u[j]:
                    u[j] = unew
                    state[j] = 1
                    hv, hi, n = _push(hv, hi, n, unew, j)
    return u, status, accepted


@numba.njit(cache=True)
def stencil_dijkstra(V, shape, h, src, offs, corners, ncorn):
    """Dijkstra on the implicit graph with edges ``offs`` from every node.

    Edge weight: √(2·V(midpoint))·|edge|, V at the midpoint by multilinear
    interpolation (the average over ``corners``).
    """
    d = shape.shape[0]
    N = V.shape[0]
    st = _strides(shape)
    u = np.full(N, np.inf)
    done = np.zeros(N, np.bool_)
    hv = np.empty(4096)
    hi = np.empty(4096, np.int64)
    n = 0
    u[src] = 0.0
    hv, hi, n = _push(hv, hi, n, 0.0, src)
    coord = np.empty(d, np.int64)
    ne = offs.shape[0]
    lens = np.empty(ne)
    for e in range(ne):
        t = 0.0
        for k in range(d):
            t += (offs[e, k] * h[k]) ** 2
        lens[e] = math.sqrt(t)
    while n > 0:
        val, i, n = _pop(hv, hi, n)
        if done[i]:
            continue
        done[i] = True
        rem = i
        for k in range(d):
            coord[k] = rem // st[k]
            rem -= coord[k] * st[k]
        for e in range(ne):
            j = i
            ok = True
            for k in range(d):
                c = coord[k] + offs[e, k]
                if c < 0 or c >= shape[k]:
                    ok = False
                    break
                j += offs[e, k] * st[k]
            if not ok or done[j]:
                continue
            vm = 0.0
            for c in range(ncorn[e]):
                jj = i
                for k in range(d):
                    jj += corners[e, c, k] * st[k]
                vm += V[jj]
            vm /= ncorn[e]
            cand = val + math.sqrt(2.0 * vm) * lens[e]
            if cand < u[j]:
                u[j] = cand
                hv, hi, n = _push(hv, hi, n, cand, j)
    return u
