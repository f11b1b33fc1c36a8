"""Hot numeric kernels.

Every kernel has a numba path and a plain numpy path.  Which one runs is
decided by ``dgfrac._jit`` (environment flag ``DGFRAC_DISABLE_NUMBA``).
Kernels written as scalar loops are simply left un-jitted on the fallback
path; the two geometric kernels also have a vectorized numpy twin, because a
pure-Python loop over every (edge, crack-piece) pair is needlessly slow.
"""
import numpy as np

from ._jit import USING_NUMBA, jit

__all__ = [
    "USING_NUMBA",
    "union_labels",
    "covered_lengths",
    "clip_segment_triangles",
    "box_qp",
    "enumerate_bulk",
]


@jit
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@jit
def _union(parent, i, j):
    ri = _find(parent, i)
    rj = _find(parent, j)
    if ri == rj:
        return
    if ri < rj:
        parent[rj] = ri
    else:
        parent[ri] = rj


@jit
def union_labels(n, a, b):
    """Merge ``a[k]`` with ``b[k]`` for all k; return compact labels.

    Labels are numbered in order of first appearance of each class, which
    makes the output independent of the merge order.
    """
    parent = np.arange(n)
    for k in range(a.shape[0]):
        _union(parent, a[k], b[k])
    labels = -np.ones(n, dtype=np.int64)
    root_label = -np.ones(n, dtype=np.int64)
    count = 0
    for i in range(n):
        r = _find(parent, i)
        if root_label[r] < 0:
            root_label[r] = count
            count += 1
        labels[i] = root_label[r]
    return labels, count


# ---------------------------------------------------------------------------
# collinear coverage
# ---------------------------------------------------------------------------


@jit
def _covered_lengths_loop(edges, gamma, tol):
    m = edges.shape[0]
    k = gamma.shape[0]
    out = np.zeros(m)
    starts = np.empty(k)
    ends = np.empty(k)
    for i in range(m):
        x1, y1, x2, y2 = edges[i, 0], edges[i, 1], edges[i, 2], edges[i, 3]
        dx = x2 - x1
        dy = y2 - y1
        length = np.sqrt(dx * dx + dy * dy)
        if length == 0.0:
            continue
        ux = dx / length
        uy = dy / length
        cnt = 0
        for j in range(k):
            gx1, gy1, gx2, gy2 = gamma[j, 0], gamma[j, 1], gamma[j, 2], gamma[j, 3]
            d1 = abs((gx1 - x1) * uy - (gy1 - y1) * ux)
            d2 = abs((gx2 - x1) * uy - (gy2 - y1) * ux)
            col = d1 <= tol and d2 <= tol
            if not col:
                gdx = gx2 - gx1
                gdy = gy2 - gy1
                gl = np.sqrt(gdx * gdx + gdy * gdy)
                if gl > 0.0:
                    e1 = abs((x1 - gx1) * gdy - (y1 - gy1) * gdx) / gl
                    e2 = abs((x2 - gx1) * gdy - (y2 - gy1) * gdx) / gl
                    col = e1 <= tol and e2 <= tol
            if not col:
                continue
            s1 = (gx1 - x1) * ux + (gy1 - y1) * uy
            s2 = (gx2 - x1) * ux + (gy2 - y1) * uy
            lo = max(min(s1, s2), 0.0)
            hi = min(max(s1, s2), length)
            if hi > lo:
                starts[cnt] = lo
                ends[cnt] = hi
                cnt += 1
        if cnt == 0:
            continue
        order = np.argsort(starts[:cnt])
        total = 0.0
        reach = 0.0
        for jj in range(cnt):
            s = starts[order[jj]]
            e = ends[order[jj]]
            if e > reach:
                total += e - max(s, reach)
                reach = e
        out[i] = total
    return out


def _covered_lengths_numpy(edges, gamma, tol):
    m = edges.shape[0]
    if m == 0 or gamma.shape[0] == 0:
        return np.zeros(m)
    p = edges[:, None, 0:2]
    d = edges[:, None, 2:4] - p
    length = np.hypot(d[..., 0], d[..., 1])
    safe = np.where(length > 0, length, 1.0)
    u = d / safe[..., None]
    g1 = gamma[None, :, 0:2]
    g2 = gamma[None, :, 2:4]

    def _dist_to_edge_line(pt):
        w = pt - p
        return np.abs(w[..., 0] * u[..., 1] - w[..., 1] * u[..., 0])

    col = (_dist_to_edge_line(g1) <= tol) & (_dist_to_edge_line(g2) <= tol)
    gd = g2 - g1
    gl = np.hypot(gd[..., 0], gd[..., 1])
    gls = np.where(gl > 0, gl, 1.0)
    e_a = edges[:, None, 0:2] - g1
    e_b = edges[:, None, 2:4] - g1
    ea = np.abs(e_a[..., 0] * gd[..., 1] - e_a[..., 1] * gd[..., 0]) / gls
    eb = np.abs(e_b[..., 0] * gd[..., 1] - e_b[..., 1] * gd[..., 0]) / gls
    col |= (gl > 0) & (ea <= tol) & (eb <= tol)

    s1 = ((g1 - p) * u).sum(-1)
    s2 = ((g2 - p) * u).sum(-1)
    lo = np.maximum(np.minimum(s1, s2), 0.0)
    hi = np.minimum(np.maximum(s1, s2), length)
    ok = col & (hi > lo) & (length > 0)
    lo = np.where(ok, lo, np.inf)
    hi = np.where(ok, hi, -np.inf)
    order = np.argsort(lo, axis=1)
    lo = np.take_along_axis(lo, order, axis=1)
    hi = np.take_along_axis(hi, order, axis=1)
    reach = np.maximum.accumulate(hi, axis=1)
    prev = np.concatenate([np.full((m, 1), -np.inf), reach[:, :-1]], axis=1)
    contrib = hi - np.maximum(lo, prev)
    contrib = np.where(np.isfinite(lo) & (contrib > 0), contrib, 0.0)
    return contrib.sum(axis=1)


def covered_lengths(edges, gamma, tol):
    """Length of each edge covered by collinear pieces of ``gamma``.

    ``edges`` is (m, 4) and ``gamma`` is (k, 4), rows ``x1, y1, x2, y2``.
    A crack piece counts for an edge when both endpoints of one of them lie
    within ``tol`` of the other's supporting line.
    """
    edges = np.ascontiguousarray(edges, dtype=np.float64).reshape(-1, 4)
    gamma = np.ascontiguousarray(gamma, dtype=np.float64).reshape(-1, 4)
    if USING_NUMBA:
        return _covered_lengths_loop(edges, gamma, float(tol))
    return _covered_lengths_numpy(edges, gamma, float(tol))


# ---------------------------------------------------------------------------
# segment / triangle clipping
# ---------------------------------------------------------------------------


@jit
def _clip_loop(p, q, tris, tol):
    m = tris.shape[0]
    lam0 = np.zeros(m)
    lam1 = np.ones(m)
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    for k in range(m):
        lo = 0.0
        hi = 1.0
        for r in range(3):
            ax = tris[k, r, 0]
            ay = tris[k, r, 1]
            bx = tris[k, (r + 1) % 3, 0]
            by = tris[k, (r + 1) % 3, 1]
            ex = bx - ax
            ey = by - ay
            el = np.sqrt(ex * ex + ey * ey)
            # signed distance to edge line, positive inside (CCW triangles)
            f0 = (ex * (p[1] - ay) - ey * (p[0] - ax)) / el + tol
            df = (ex * dy - ey * dx) / el
            if abs(df) < 1e-300:
                if f0 < 0.0:
                    lo = 1.0
                    hi = 0.0
                continue
            s = -f0 / df
            if df > 0.0:
                if s > lo:
                    lo = s
            else:
                if s < hi:
                    hi = s
        lam0[k] = lo
        lam1[k] = hi
    return lam0, lam1


def _clip_numpy(p, q, tris, tol):
    a = tris
    b = np.roll(tris, -1, axis=1)
    e = b - a
    el = np.hypot(e[..., 0], e[..., 1])
    d = q - p
    f0 = (e[..., 0] * (p[1] - a[..., 1]) - e[..., 1] * (p[0] - a[..., 0])) / el + tol
    df = (e[..., 0] * d[1] - e[..., 1] * d[0]) / el
    with np.errstate(divide="ignore", invalid="ignore"):
        s = -f0 / df
    flat = np.abs(df) < 1e-300
    lo_c = np.where((df > 0) & ~flat, s, -np.inf)
    hi_c = np.where((df < 0) & ~flat, s, np.inf)
    lo = np.maximum(lo_c.max(axis=1), 0.0)
    hi = np.minimum(hi_c.min(axis=1), 1.0)
    outside = (flat & (f0 < 0)).any(axis=1)
    lo = np.where(outside, 1.0, lo)
    hi = np.where(outside, 0.0, hi)
    return lo, hi


def clip_segment_triangles(p, q, tris, tol=0.0):
    """Parameter interval of segment ``p -> q`` inside each CCW triangle.

    Returns ``(lam0, lam1)``; the piece is empty when ``lam1 < lam0``.
    ``tol`` inflates each triangle by that distance, so touching counts.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    if USING_NUMBA:
        return _clip_loop(p, q, tris, float(tol))
    return _clip_numpy(p, q, tris, float(tol))


# ---------------------------------------------------------------------------
# small dense box-constrained QP
# ---------------------------------------------------------------------------


@jit
def _solve_subset(H, rhs, idx):
    n = idx.shape[0]
    A = np.empty((n, n))
    b = np.empty(n)
    for i in range(n):
        b[i] = rhs[i]
        for j in range(n):
            A[i, j] = H[idx[i], idx[j]]
    return np.linalg.solve(A, b)


@jit
def box_qp(H, f, lo, hi):
    """Minimize ``x.H.x / 2 + f.x`` subject to ``lo <= x <= hi``.

    Primal active-set method; ``H`` must be symmetric positive definite.
    Returns the minimizer (exact up to round-off, finite termination).
    """
    n = f.shape[0]
    if n == 0:
        return np.zeros(0)
    x = np.linalg.solve(H, -f)
    feasible = True
    for i in range(n):
        if x[i] < lo[i] or x[i] > hi[i]:
            feasible = False
            break
    if feasible:
        return x
    state = np.zeros(n, dtype=np.int64)
    for i in range(n):
        if x[i] <= lo[i]:
            x[i] = lo[i]
            state[i] = -1
        elif x[i] >= hi[i]:
            x[i] = hi[i]
            state[i] = 1
    scale = 1.0
    for i in range(n):
        scale = max(scale, abs(f[i]))
    mtol = 1e-13 * scale
    for _ in range(20 * n + 50):
        nfree = 0
        for i in range(n):
            if state[i] == 0:
                nfree += 1
        moved = False
        if nfree > 0:
            free = np.empty(nfree, dtype=np.int64)
            c = 0
            for i in range(n):
                if state[i] == 0:
                    free[c] = i
                    c += 1
            rhs = np.empty(nfree)
            for a in range(nfree):
                i = free[a]
                s = -f[i]
                for j in range(n):
                    if state[j] != 0:
                        s -= H[i, j] * x[j]
                rhs[a] = s
            target = _solve_subset(H, rhs, free)
            alpha = 1.0
            block = -1
            for a in range(nfree):
                i = free[a]
                step = target[a] - x[i]
                if step < 0.0 and target[a] < lo[i]:
                    r = (lo[i] - x[i]) / step
                    if r < alpha:
                        alpha = r
                        block = i
                elif step > 0.0 and target[a] > hi[i]:
                    r = (hi[i] - x[i]) / step
                    if r < alpha:
                        alpha = r
                        block = i
            for a in range(nfree):
                i = free[a]
                x[i] = x[i] + alpha * (target[a] - x[i])
            if block >= 0:
                if target[np.searchsorted(free, block)] < lo[block]:
                    x[block] = lo[block]
                    state[block] = -1
                else:
                    x[block] = hi[block]
                    state[block] = 1
                moved = True
        if moved:
            continue
        worst = mtol
        idx = -1
        for i in range(n):
            if state[i] == 0:
                continue
            g = f[i]
            for j in range(n):
                g += H[i, j] * x[j]
            viol = -g if state[i] == -1 else g
            if viol > worst:
                worst = viol
                idx = i
        if idx < 0:
            break
        state[idx] = 0
    for i in range(n):
        x[i] = min(max(x[i], lo[i]), hi[i])
    return x


# ---------------------------------------------------------------------------
# exhaustive enumeration of broken-edge masks (oracle)
# ---------------------------------------------------------------------------


@jit
def _bulk_for_mask(mask, stiff, gflat, ie_dofs, dh_dofs, dh_parent, n_int, bound):
    nsub = stiff.shape[0]
    ndof = 3 * nsub
    parent = np.arange(ndof)
    for k in range(ie_dofs.shape[0]):
        if (mask >> k) & 1:
            continue
        _union(parent, ie_dofs[k, 0], ie_dofs[k, 1])
        _union(parent, ie_dofs[k, 2], ie_dofs[k, 3])
    label = -np.ones(ndof, dtype=np.int64)
    root_label = -np.ones(ndof, dtype=np.int64)
    ncls = 0
    for i in range(ndof):
        r = _find(parent, i)
        if root_label[r] < 0:
            root_label[r] = ncls
            ncls += 1
        label[i] = root_label[r]
    fixed = np.zeros(ncls, dtype=np.bool_)
    value = np.zeros(ncls)
    for d in range(dh_dofs.shape[0]):
        if (mask >> (n_int + dh_parent[d])) & 1:
            continue
        for r in range(2):
            dof = dh_dofs[d, r]
            c = label[dof]
            if fixed[c]:
                if abs(value[c] - gflat[dof]) > 1e-9 * (1.0 + abs(gflat[dof])):
                    return np.nan
            else:
                fixed[c] = True
                value[c] = gflat[dof]
    # floating components of the class graph are pinned at zero
    cpar = np.arange(ncls)
    for k in range(nsub):
        c0 = label[3 * k]
        _union(cpar, c0, label[3 * k + 1])
        _union(cpar, c0, label[3 * k + 2])
    comp_fixed = np.zeros(ncls, dtype=np.bool_)
    for c in range(ncls):
        if fixed[c]:
            comp_fixed[_find(cpar, c)] = True
    for c in range(ncls):
        r = _find(cpar, c)
        if not comp_fixed[r]:
            comp_fixed[r] = True
            fixed[c] = True
            value[c] = 0.0
    free_idx = -np.ones(ncls, dtype=np.int64)
    nf = 0
    for c in range(ncls):
        if not fixed[c]:
            free_idx[c] = nf
            nf += 1
    if nf > 0:
        H = np.zeros((nf, nf))
        f = np.zeros(nf)
        for k in range(nsub):
            for i in range(3):
                ci = label[3 * k + i]
                fi = free_idx[ci]
                if fi < 0:
                    continue
                for j in range(3):
                    cj = label[3 * k + j]
                    fj = free_idx[cj]
                    if fj >= 0:
                        H[fi, fj] += stiff[k, i, j]
                    else:
                        f[fi] += stiff[k, i, j] * value[cj]
        if bound >= 0.0:
            lo = np.full(nf, -bound)
            hi = np.full(nf, bound)
            x = box_qp(H, f, lo, hi)
        else:
            x = np.linalg.solve(H, -f)
        for c in range(ncls):
            if free_idx[c] >= 0:
                value[c] = x[free_idx[c]]
    bulk = 0.0
    for k in range(nsub):
        for i in range(3):
            ui = value[label[3 * k + i]]
            for j in range(3):
                bulk += ui * stiff[k, i, j] * value[label[3 * k + j]]
    return bulk


@jit
def enumerate_bulk(masks, stiff, gvals, ie_dofs, dh_dofs, dh_parent, n_int, bound):
    """Bulk energy of the elastic solve for every broken-edge bit mask.

    Bit ``k < n_int`` breaks interior sub-edge ``k``; bit ``n_int + d``
    releases the trace constraint on Dirichlet edge ``d``.  ``bound < 0``
    disables the box constraint ``|u| <= bound``.
    """
    gflat = gvals.ravel()
    out = np.empty(masks.shape[0])
    for m in range(masks.shape[0]):
        out[m] = _bulk_for_mask(
            masks[m], stiff, gflat, ie_dofs, dh_dofs, dh_parent, n_int, bound
        )
    return out
