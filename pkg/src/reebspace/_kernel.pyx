# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled slicing kernel.

Mirror of ``reebspace._kernel_py`` (see that module for the algorithm and
the shared numeric conventions).  Arithmetic is performed in the same
order as the pure-Python code so both kernels produce identical bits; the
parity tests rely on this.  Pair emission order may differ between the
two kernels (callers sort), fragment order may not.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, fabs, floor, sqrt
from libc.string cimport memcpy, memset
from libcpp.vector cimport vector

cnp.import_array()

DEF R_MAX = 8
DEF VDIM = 11  # 3 coordinates + R_MAX values
DEF MAXV = 48
DEF MAXF = 26
DEF MAXFV = 160  # total face-vertex slots
DEF MAXCROSS = 48

cdef double ON_EPS_REL = 1e-13
cdef double VOL_TOL_REL = 1e-13
cdef double AREA_TOL_REL = 1e-12
cdef double CONST_TOL_REL = 1e-9

R_MAX_FIELDS = R_MAX


cdef struct Piece:
    double verts[MAXV * VDIM]
    int nverts
    int nfaces
    int fv_used
    long long tup[R_MAX]
    int tag_kind[MAXF]
    int tag_a[MAXF]
    long long tag_b[MAXF]
    int fstart[MAXF]
    int fcount[MAXF]
    int fv[MAXFV]


cdef struct Poly2:
    double verts[MAXV * VDIM]
    int nverts
    long long tup[R_MAX]
    int tag_kind[MAXV]
    int tag_a[MAXV]
    long long tag_b[MAXV]


cdef struct CutFacet:
    int frag
    int field
    long long level
    int side
    double area
    double span_lo[R_MAX]
    double span_hi[R_MAX]


cdef inline long long _quantize(double value, double width, double base) nogil:
    cdef double u = (value - base) / width
    if u >= 0.0:
        return <long long> floor(u + 0.5)
    return -(<long long> floor(-u + 0.5))


cdef inline double _dot3(double ax, double ay, double az,
                         double bx, double by, double bz) nogil:
    return ax * bx + ay * by + az * bz


cdef int _gradient3(double* v0, double* v1, double* v2, double* v3,
                    int col, double* g) nogil:
    cdef double ax = v1[0] - v0[0]
    cdef double ay = v1[1] - v0[1]
    cdef double az = v1[2] - v0[2]
    cdef double bx = v2[0] - v0[0]
    cdef double by = v2[1] - v0[1]
    cdef double bz = v2[2] - v0[2]
    cdef double cx = v3[0] - v0[0]
    cdef double cy = v3[1] - v0[1]
    cdef double cz = v3[2] - v0[2]
    cdef double d0 = v1[col] - v0[col]
    cdef double d1 = v2[col] - v0[col]
    cdef double d2 = v3[col] - v0[col]
    cdef double det = (ax * (by * cz - bz * cy)
                       - ay * (bx * cz - bz * cx)
                       + az * (bx * cy - by * cx))
    if det == 0.0:
        g[0] = 0.0
        g[1] = 0.0
        g[2] = 0.0
        return 0
    g[0] = (d0 * (by * cz - bz * cy)
            - ay * (d1 * cz - bz * d2)
            + az * (d1 * cy - by * d2)) / det
    g[1] = (ax * (d1 * cz - d2 * bz)
            - d0 * (bx * cz - bz * cx)
            + az * (bx * d2 - d1 * cx)) / det
    g[2] = (ax * (by * d2 - cy * d1)
            - ay * (bx * d2 - d1 * cx)
            + d0 * (bx * cy - by * cx)) / det
    return 1


cdef void _plane_axes(double gx, double gy, double gz, double* axes) nogil:
    """axes[0:3] = u, axes[3:6] = w; mirrors _kernel_py._plane_axes."""
    cdef double norm = sqrt(gx * gx + gy * gy + gz * gz)
    cdef double nx, ny, nz, ex, ey, ez, ux, uy, uz, un
    if norm == 0.0:
        axes[0] = 1.0; axes[1] = 0.0; axes[2] = 0.0
        axes[3] = 0.0; axes[4] = 1.0; axes[5] = 0.0
        return
    nx = gx / norm; ny = gy / norm; nz = gz / norm
    cdef double aax = fabs(nx)
    cdef double aay = fabs(ny)
    cdef double aaz = fabs(nz)
    if aax <= aay and aax <= aaz:
        ex = 1.0; ey = 0.0; ez = 0.0
    elif aay <= aaz:
        ex = 0.0; ey = 1.0; ez = 0.0
    else:
        ex = 0.0; ey = 0.0; ez = 1.0
    ux = ny * ez - nz * ey
    uy = nz * ex - nx * ez
    uz = nx * ey - ny * ex
    un = sqrt(ux * ux + uy * uy + uz * uz)
    ux = ux / un; uy = uy / un; uz = uz / un
    axes[0] = ux; axes[1] = uy; axes[2] = uz
    axes[3] = ny * uz - nz * uy
    axes[4] = nz * ux - nx * uz
    axes[5] = nx * uy - ny * ux


cdef double _poly_volume3(Piece* p) nogil:
    cdef double cx = 0.0, cy = 0.0, cz = 0.0
    cdef int i, f, t
    cdef double m = <double> p.nverts
    for i in range(p.nverts):
        cx += p.verts[i * VDIM + 0]
        cy += p.verts[i * VDIM + 1]
        cz += p.verts[i * VDIM + 2]
    cx /= m; cy /= m; cz /= m
    cdef double vol = 0.0
    cdef double x0, y0, z0, x1, y1, z1, x2, y2, z2
    cdef int v0, vt, vn
    for f in range(p.nfaces):
        v0 = p.fv[p.fstart[f]]
        x0 = p.verts[v0 * VDIM + 0] - cx
        y0 = p.verts[v0 * VDIM + 1] - cy
        z0 = p.verts[v0 * VDIM + 2] - cz
        for t in range(1, p.fcount[f] - 1):
            vt = p.fv[p.fstart[f] + t]
            vn = p.fv[p.fstart[f] + t + 1]
            x1 = p.verts[vt * VDIM + 0] - cx
            y1 = p.verts[vt * VDIM + 1] - cy
            z1 = p.verts[vt * VDIM + 2] - cz
            x2 = p.verts[vn * VDIM + 0] - cx
            y2 = p.verts[vn * VDIM + 1] - cy
            z2 = p.verts[vn * VDIM + 2] - cz
            vol += fabs(x0 * (y1 * z2 - z1 * y2)
                        - y0 * (x1 * z2 - z1 * x2)
                        + z0 * (x1 * y2 - y1 * x2))
    return vol / 6.0


cdef double _face_area3(Piece* p, int f) nogil:
    cdef int v0 = p.fv[p.fstart[f]]
    cdef double x0 = p.verts[v0 * VDIM + 0]
    cdef double y0 = p.verts[v0 * VDIM + 1]
    cdef double z0 = p.verts[v0 * VDIM + 2]
    cdef double area = 0.0
    cdef double ax, ay, az, bx, by, bz, qx, qy, qz
    cdef int t, vt, vn
    for t in range(1, p.fcount[f] - 1):
        vt = p.fv[p.fstart[f] + t]
        vn = p.fv[p.fstart[f] + t + 1]
        ax = p.verts[vt * VDIM + 0] - x0
        ay = p.verts[vt * VDIM + 1] - y0
        az = p.verts[vt * VDIM + 2] - z0
        bx = p.verts[vn * VDIM + 0] - x0
        by = p.verts[vn * VDIM + 1] - y0
        bz = p.verts[vn * VDIM + 2] - z0
        qx = ay * bz - az * by
        qy = az * bx - ax * bz
        qz = ax * by - ay * bx
        area += sqrt(qx * qx + qy * qy + qz * qz)
    return area / 2.0


cdef double _poly_area2(Poly2* p) nogil:
    cdef double area = 0.0
    cdef int i, j
    for i in range(p.nverts):
        j = (i + 1) % p.nverts
        area += (p.verts[i * VDIM + 0] * p.verts[j * VDIM + 1]
                 - p.verts[j * VDIM + 0] * p.verts[i * VDIM + 1])
    return fabs(area) / 2.0


cdef double _edge_length(double* va, double* vb) nogil:
    cdef double dx = vb[0] - va[0]
    cdef double dy = vb[1] - va[1]
    cdef double dz = vb[2] - va[2]
    return sqrt(dx * dx + dy * dy + dz * dz)


cdef int _split3(Piece* src, int col, double cutval, double eps, double* axes,
                 int tag_kind, int tag_a, long long tag_b,
                 Piece* lower, Piece* upper) nogil:
    """Returns -1 (all lower: use src), -2 (all upper: use src), -3 on
    capacity overflow, or a bitmask of valid outputs (1 = lower, 2 = upper)."""
    cdef double d[MAXV]
    cdef int i, f, idx, a, b, n, vid, side, want_lower, result
    cdef bint has_below = False, has_above = False
    for i in range(src.nverts):
        d[i] = src.verts[i * VDIM + col] - cutval
        if d[i] < -eps:
            has_below = True
        elif d[i] > eps:
            has_above = True
    if not has_above:
        return -1
    if not has_below:
        return -2

    # crossing-point cache shared by both sides
    cdef short cross_id[MAXV][MAXV]
    cdef double cross_pt[MAXCROSS * VDIM]
    cdef int ncross = 0
    memset(&cross_id[0][0], 0xff, sizeof(cross_id))

    cdef double da, db, t
    cdef int lo_i, hi_i, m
    cdef Piece* out
    cdef int vmap[MAXV]
    cdef int cmap[MAXCROSS]
    cdef bint von[MAXV]  # side-vertex on-plane flag
    cdef int cap[MAXV]
    cdef int ncap
    cdef double angles[MAXV]
    cdef double cx, cy, cz, px, py, pz, ang
    cdef int j, kk, key_a, key_b
    cdef int ids[MAXV]
    cdef int nids

    result = 0
    for side in range(2):
        want_lower = 1 if side == 0 else 0
        out = lower if side == 0 else upper
        out.nverts = 0
        out.nfaces = 0
        out.fv_used = 0
        for i in range(src.nverts):
            vmap[i] = -1
        for i in range(MAXCROSS):
            cmap[i] = -1
        for f in range(src.nfaces):
            nids = 0
            n = src.fcount[f]
            for idx in range(n):
                a = src.fv[src.fstart[f] + idx]
                b = src.fv[src.fstart[f] + (idx + 1) % n]
                da = d[a]
                db = d[b]
                if (-eps <= da <= eps) or ((da < 0.0) == (want_lower == 1)):
                    vid = vmap[a]
                    if vid < 0:
                        vid = out.nverts
                        if vid >= MAXV:
                            return -3
                        vmap[a] = vid
                        memcpy(&out.verts[vid * VDIM], &src.verts[a * VDIM],
                               VDIM * sizeof(double))
                        von[vid] = (-eps <= da <= eps)
                        out.nverts += 1
                    if nids == 0 or ids[nids - 1] != vid:
                        ids[nids] = vid
                        nids += 1
                if (not (-eps <= da <= eps)) and (not (-eps <= db <= eps)) \
                        and ((da < 0.0) != (db < 0.0)):
                    key_a = a if a < b else b
                    key_b = b if a < b else a
                    kk = cross_id[key_a][key_b]
                    if kk < 0:
                        kk = ncross
                        if kk >= MAXCROSS:
                            return -3
                        cross_id[key_a][key_b] = <short> kk
                        t = da / (da - db)
                        for m in range(VDIM):
                            cross_pt[kk * VDIM + m] = (
                                src.verts[a * VDIM + m]
                                + t * (src.verts[b * VDIM + m]
                                       - src.verts[a * VDIM + m]))
                        cross_pt[kk * VDIM + col] = cutval
                        ncross += 1
                    vid = cmap[kk]
                    if vid < 0:
                        vid = out.nverts
                        if vid >= MAXV:
                            return -3
                        cmap[kk] = vid
                        memcpy(&out.verts[vid * VDIM], &cross_pt[kk * VDIM],
                               VDIM * sizeof(double))
                        von[vid] = True
                        out.nverts += 1
                    if nids == 0 or ids[nids - 1] != vid:
                        ids[nids] = vid
                        nids += 1
            while nids >= 2 and ids[0] == ids[nids - 1]:
                nids -= 1
            if nids >= 3:
                if out.nfaces >= MAXF or out.fv_used + nids > MAXFV:
                    return -3
                out.tag_kind[out.nfaces] = src.tag_kind[f]
                out.tag_a[out.nfaces] = src.tag_a[f]
                out.tag_b[out.nfaces] = src.tag_b[f]
                out.fstart[out.nfaces] = out.fv_used
                out.fcount[out.nfaces] = nids
                for idx in range(nids):
                    out.fv[out.fv_used + idx] = ids[idx]
                out.fv_used += nids
                out.nfaces += 1

        # cap polygon: on-plane vertices in insertion order, angle sorted
        ncap = 0
        for i in range(out.nverts):
            if von[i]:
                cap[ncap] = i
                ncap += 1
        if ncap >= 3:
            if out.nfaces >= MAXF or out.fv_used + ncap > MAXFV:
                return -3
            cx = 0.0; cy = 0.0; cz = 0.0
            for i in range(ncap):
                cx += out.verts[cap[i] * VDIM + 0]
                cy += out.verts[cap[i] * VDIM + 1]
                cz += out.verts[cap[i] * VDIM + 2]
            cx /= <double> ncap
            cy /= <double> ncap
            cz /= <double> ncap
            for i in range(ncap):
                px = out.verts[cap[i] * VDIM + 0] - cx
                py = out.verts[cap[i] * VDIM + 1] - cy
                pz = out.verts[cap[i] * VDIM + 2] - cz
                angles[i] = atan2(
                    _dot3(px, py, pz, axes[3], axes[4], axes[5]),
                    _dot3(px, py, pz, axes[0], axes[1], axes[2]))
            # insertion sort by (angle, vertex id)
            for i in range(1, ncap):
                ang = angles[i]
                vid = cap[i]
                j = i - 1
                while j >= 0 and (angles[j] > ang or (angles[j] == ang and cap[j] > vid)):
                    angles[j + 1] = angles[j]
                    cap[j + 1] = cap[j]
                    j -= 1
                angles[j + 1] = ang
                cap[j + 1] = vid
            out.tag_kind[out.nfaces] = tag_kind
            out.tag_a[out.nfaces] = tag_a
            out.tag_b[out.nfaces] = tag_b
            out.fstart[out.nfaces] = out.fv_used
            out.fcount[out.nfaces] = ncap
            for idx in range(ncap):
                out.fv[out.fv_used + idx] = cap[idx]
            out.fv_used += ncap
            out.nfaces += 1
        if out.nfaces >= 4:
            result |= (1 if side == 0 else 2)
    return result


cdef int _split2(Poly2* src, int col, double cutval, double eps,
                 int tag_kind, int tag_a, long long tag_b,
                 Poly2* lower, Poly2* upper) nogil:
    cdef double d[MAXV]
    cdef int i, idx, a, b, m, side, nout
    cdef bint has_below = False, has_above = False
    cdef int n = src.nverts
    for i in range(n):
        d[i] = src.verts[i * VDIM + col] - cutval
        if d[i] < -eps:
            has_below = True
        elif d[i] > eps:
            has_above = True
    if not has_above:
        return -1
    if not has_below:
        return -2

    cdef short cross_id[MAXV][MAXV]
    cdef double cross_pt[MAXCROSS * VDIM]
    cdef int ncross = 0
    memset(&cross_id[0][0], 0xff, sizeof(cross_id))

    # chain entries: key (>=0 original vertex, <0 crossing ~kk), tag index
    cdef int ckey[2 * MAXV]
    cdef double cpt[2 * MAXV * VDIM]
    cdef int ck_kind[2 * MAXV]
    cdef int ck_a[2 * MAXV]
    cdef long long ck_b[2 * MAXV]
    cdef int nchain, kk, key_a, key_b
    cdef double da, db, t
    cdef bint a_on, b_on, a_in, b_in, leaving_here
    cdef Poly2* out
    cdef int result = 0
    cdef int want_lower

    for side in range(2):
        want_lower = 1 if side == 0 else 0
        out = lower if side == 0 else upper
        nchain = 0
        for idx in range(n):
            a = idx
            b = (idx + 1) % n
            da = d[a]
            db = d[b]
            a_on = -eps <= da <= eps
            b_on = -eps <= db <= eps
            a_in = a_on or ((da < 0.0) == (want_lower == 1))
            b_in = b_on or ((db < 0.0) == (want_lower == 1))
            if a_in:
                leaving_here = a_on and not b_in
                ckey[nchain] = a
                memcpy(&cpt[nchain * VDIM], &src.verts[a * VDIM],
                       VDIM * sizeof(double))
                if leaving_here:
                    ck_kind[nchain] = tag_kind
                    ck_a[nchain] = tag_a
                    ck_b[nchain] = tag_b
                else:
                    ck_kind[nchain] = src.tag_kind[idx]
                    ck_a[nchain] = src.tag_a[idx]
                    ck_b[nchain] = src.tag_b[idx]
                nchain += 1
                if (not a_on) and (not b_on) and (not b_in):
                    key_a = a if a < b else b
                    key_b = b if a < b else a
                    kk = cross_id[key_a][key_b]
                    if kk < 0:
                        kk = ncross
                        if kk >= MAXCROSS:
                            return -3
                        cross_id[key_a][key_b] = <short> kk
                        t = da / (da - db)
                        for m in range(VDIM):
                            cross_pt[kk * VDIM + m] = (
                                src.verts[a * VDIM + m]
                                + t * (src.verts[b * VDIM + m]
                                       - src.verts[a * VDIM + m]))
                        cross_pt[kk * VDIM + col] = cutval
                        ncross += 1
                    ckey[nchain] = -1 - kk
                    memcpy(&cpt[nchain * VDIM], &cross_pt[kk * VDIM],
                           VDIM * sizeof(double))
                    ck_kind[nchain] = tag_kind
                    ck_a[nchain] = tag_a
                    ck_b[nchain] = tag_b
                    nchain += 1
            elif (not b_on) and b_in:
                key_a = a if a < b else b
                key_b = b if a < b else a
                kk = cross_id[key_a][key_b]
                if kk < 0:
                    kk = ncross
                    if kk >= MAXCROSS:
                        return -3
                    cross_id[key_a][key_b] = <short> kk
                    t = da / (da - db)
                    for m in range(VDIM):
                        cross_pt[kk * VDIM + m] = (
                            src.verts[a * VDIM + m]
                            + t * (src.verts[b * VDIM + m]
                                   - src.verts[a * VDIM + m]))
                    cross_pt[kk * VDIM + col] = cutval
                    ncross += 1
                ckey[nchain] = -1 - kk
                memcpy(&cpt[nchain * VDIM], &cross_pt[kk * VDIM],
                       VDIM * sizeof(double))
                ck_kind[nchain] = src.tag_kind[idx]
                ck_a[nchain] = src.tag_a[idx]
                ck_b[nchain] = src.tag_b[idx]
                nchain += 1

        # drop zero-length edges (consecutive duplicate keys keep later tag)
        nout = 0
        for idx in range(nchain):
            if nout > 0 and ckey[nout - 1] == ckey[idx]:
                memcpy(&cpt[(nout - 1) * VDIM], &cpt[idx * VDIM],
                       VDIM * sizeof(double))
                ck_kind[nout - 1] = ck_kind[idx]
                ck_a[nout - 1] = ck_a[idx]
                ck_b[nout - 1] = ck_b[idx]
                ckey[nout - 1] = ckey[idx]
            else:
                if nout != idx:
                    ckey[nout] = ckey[idx]
                    memcpy(&cpt[nout * VDIM], &cpt[idx * VDIM],
                           VDIM * sizeof(double))
                    ck_kind[nout] = ck_kind[idx]
                    ck_a[nout] = ck_a[idx]
                    ck_b[nout] = ck_b[idx]
                nout += 1
        while nout >= 2 and ckey[0] == ckey[nout - 1]:
            # wrap duplicate: drop the head, its tag moves to the tail
            ck_kind[nout - 1] = ck_kind[0]
            ck_a[nout - 1] = ck_a[0]
            ck_b[nout - 1] = ck_b[0]
            for idx in range(1, nout):
                ckey[idx - 1] = ckey[idx]
                memcpy(&cpt[(idx - 1) * VDIM], &cpt[idx * VDIM],
                       VDIM * sizeof(double))
                ck_kind[idx - 1] = ck_kind[idx]
                ck_a[idx - 1] = ck_a[idx]
                ck_b[idx - 1] = ck_b[idx]
            nout -= 1
        if nout >= 3:
            if nout > MAXV:
                return -3
            out.nverts = nout
            for idx in range(nout):
                memcpy(&out.verts[idx * VDIM], &cpt[idx * VDIM],
                       VDIM * sizeof(double))
                out.tag_kind[idx] = ck_kind[idx]
                out.tag_a[idx] = ck_a[idx]
                out.tag_b[idx] = ck_b[idx]
            result |= (1 if side == 0 else 2)
    return result


cdef void _facet_spans(double* verts, int* loop, int nloop, int r,
                       double* span_lo, double* span_hi) nogil:
    cdef int j, t
    cdef double v
    for j in range(r):
        span_lo[j] = verts[loop[0] * VDIM + 3 + j]
        span_hi[j] = span_lo[j]
        for t in range(1, nloop):
            v = verts[loop[t] * VDIM + 3 + j]
            if v < span_lo[j]:
                span_lo[j] = v
            if v > span_hi[j]:
                span_hi[j] = v


cdef bint _degenerate_match(long long* ta, long long* tb, int skip_field, int r,
                            CutFacet* ea, CutFacet* eb,
                            double* widths, double* bases) nogil:
    cdef int j
    cdef double cut, tol
    cdef long long lo_idx
    for j in range(r):
        if j == skip_field or ta[j] == tb[j]:
            continue
        if ta[j] - tb[j] != 1 and tb[j] - ta[j] != 1:
            return False
        lo_idx = ta[j] if ta[j] < tb[j] else tb[j]
        cut = bases[j] + (<double> lo_idx + 0.5) * widths[j]
        tol = CONST_TOL_REL * widths[j]
        if fabs(ea.span_lo[j] - cut) > tol or fabs(ea.span_hi[j] - cut) > tol:
            return False
        if fabs(eb.span_lo[j] - cut) > tol or fabs(eb.span_hi[j] - cut) > tol:
            return False
    return True


def slice_batch(coords_in, values_in, widths_in, bases_in, int dim):
    """Compiled mirror of ``_kernel_py.slice_batch``; same contract."""
    cdef cnp.ndarray[cnp.float64_t, ndim=3] coords = np.ascontiguousarray(
        coords_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=3] values = np.ascontiguousarray(
        values_in, dtype=np.float64)
    cdef int r = values.shape[2]
    if r > R_MAX:
        raise ValueError(f"compiled kernel supports at most {R_MAX} fields, got {r}")
    if dim not in (2, 3):
        raise ValueError(f"dim must be 2 or 3, got {dim}")
    cdef int nv = dim + 1
    if coords.shape[1] != nv or values.shape[1] != nv:
        raise ValueError("coords/values vertex counts do not match dim")
    if coords.shape[0] != values.shape[0]:
        raise ValueError("coords and values batch sizes differ")

    cdef Py_ssize_t ns = coords.shape[0]
    cdef double widths[R_MAX]
    cdef double bases[R_MAX]
    cdef int i
    for i in range(r):
        widths[i] = float(widths_in[i])
        bases[i] = float(bases_in[i])
        if widths[i] <= 0.0:
            raise ValueError("slab widths must be positive")

    cdef vector[long long] frag_offsets
    cdef vector[long long] frag_tuples
    cdef vector[double] frag_volumes
    cdef vector[long long] pair_a, pair_b
    cdef vector[signed char] pair_field
    cdef vector[double] pair_area
    cdef vector[long long] facet_frag
    cdef vector[signed char] facet_face
    cdef vector[double] facet_area

    frag_offsets.push_back(0)
    cdef long long total = 0
    with nogil:
        if dim == 3:
            total = _run3(&coords[0, 0, 0], &values[0, 0, 0], ns, r,
                          widths, bases,
                          &frag_offsets, &frag_tuples, &frag_volumes,
                          &pair_a, &pair_b, &pair_field, &pair_area,
                          &facet_frag, &facet_face, &facet_area)
        else:
            total = _run2(&coords[0, 0, 0], &values[0, 0, 0], ns, r,
                          widths, bases,
                          &frag_offsets, &frag_tuples, &frag_volumes,
                          &pair_a, &pair_b, &pair_field, &pair_area,
                          &facet_frag, &facet_face, &facet_area)
    if total < 0:
        raise RuntimeError("slicing produced a polytope beyond kernel capacity")

    return {
        "frag_offsets": _as_array_i64(frag_offsets),
        "frag_tuples": _as_array_i64(frag_tuples).reshape(total, r),
        "frag_volumes": _as_array_f64(frag_volumes),
        "pair_a": _as_array_i64(pair_a),
        "pair_b": _as_array_i64(pair_b),
        "pair_field": _as_array_i8(pair_field),
        "pair_area": _as_array_f64(pair_area),
        "facet_frag": _as_array_i64(facet_frag),
        "facet_face": _as_array_i8(facet_face),
        "facet_area": _as_array_f64(facet_area),
    }


cdef cnp.ndarray _as_array_i64(vector[long long]& v):
    cdef cnp.ndarray out = np.empty(v.size(), dtype=np.int64)
    if v.size() > 0:
        memcpy(cnp.PyArray_DATA(out), v.data(), v.size() * sizeof(long long))
    return out


cdef cnp.ndarray _as_array_f64(vector[double]& v):
    cdef cnp.ndarray out = np.empty(v.size(), dtype=np.float64)
    if v.size() > 0:
        memcpy(cnp.PyArray_DATA(out), v.data(), v.size() * sizeof(double))
    return out


cdef cnp.ndarray _as_array_i8(vector[signed char]& v):
    cdef cnp.ndarray out = np.empty(v.size(), dtype=np.int8)
    if v.size() > 0:
        memcpy(cnp.PyArray_DATA(out), v.data(), v.size() * sizeof(signed char))
    return out


cdef double _simplex_scale3(double* c) nogil:
    cdef double total = 0.0
    cdef int skip, j, n
    cdef double tri[3][3]
    cdef double ax, ay, az, bx, by, bz, qx, qy, qz
    for skip in range(4):
        n = 0
        for j in range(4):
            if j != skip:
                tri[n][0] = c[j * 3 + 0]
                tri[n][1] = c[j * 3 + 1]
                tri[n][2] = c[j * 3 + 2]
                n += 1
        ax = tri[1][0] - tri[0][0]
        ay = tri[1][1] - tri[0][1]
        az = tri[1][2] - tri[0][2]
        bx = tri[2][0] - tri[0][0]
        by = tri[2][1] - tri[0][1]
        bz = tri[2][2] - tri[0][2]
        qx = ay * bz - az * by
        qy = az * bx - ax * bz
        qz = ax * by - ay * bx
        total += sqrt(qx * qx + qy * qy + qz * qz) / 2.0
    return total / 4.0


cdef double _simplex_scale2(double* c) nogil:
    cdef double total = 0.0
    cdef double dx, dy, dz
    cdef int j, k
    for j in range(3):
        k = (j + 1) % 3
        dx = c[k * 3 + 0] - c[j * 3 + 0]
        dy = c[k * 3 + 1] - c[j * 3 + 1]
        dz = c[k * 3 + 2] - c[j * 3 + 2]
        total += sqrt(dx * dx + dy * dy + dz * dz)
    return total / 3.0


cdef void _match_and_emit(vector[CutFacet]& entries, long long* tuples_flat,
                          long long frag_base, int r,
                          double* widths, double* bases,
                          vector[long long]* pair_a, vector[long long]* pair_b,
                          vector[signed char]* pair_field,
                          vector[double]* pair_area) nogil:
    """Pair lower/upper cut facets within one simplex.

    ``tuples_flat`` holds this simplex's fragment tuples (frag-local).
    Exact rest-tuple matches first, then the coincident-plane fallback.
    """
    cdef size_t ne = entries.size()
    if ne == 0:
        return
    cdef size_t ei, ej
    cdef int gi
    # group by (field, level) via per-field level offsets
    cdef long long lev_lo[R_MAX]
    cdef long long lev_hi[R_MAX]
    cdef bint seen[R_MAX]
    cdef int j
    for j in range(r):
        seen[j] = False
        lev_lo[j] = 0
        lev_hi[j] = 0
    for ei in range(ne):
        j = entries[ei].field
        if not seen[j]:
            lev_lo[j] = entries[ei].level
            lev_hi[j] = entries[ei].level
            seen[j] = True
        else:
            if entries[ei].level < lev_lo[j]:
                lev_lo[j] = entries[ei].level
            if entries[ei].level > lev_hi[j]:
                lev_hi[j] = entries[ei].level
    cdef int group_base[R_MAX + 1]
    group_base[0] = 0
    for j in range(r):
        group_base[j + 1] = group_base[j] + (
            <int> (lev_hi[j] - lev_lo[j] + 1) if seen[j] else 0)
    cdef int ngroups = group_base[r]
    cdef vector[int] glo
    cdef vector[int] ghi
    cdef vector[int] gcount_lo
    cdef vector[int] gcount_hi
    gcount_lo.resize(ngroups, 0)
    gcount_hi.resize(ngroups, 0)
    for ei in range(ne):
        j = entries[ei].field
        gi = group_base[j] + <int> (entries[ei].level - lev_lo[j])
        if entries[ei].side == 0:
            gcount_lo[gi] += 1
        else:
            gcount_hi[gi] += 1
    cdef vector[int] gstart_lo
    cdef vector[int] gstart_hi
    gstart_lo.resize(ngroups + 1, 0)
    gstart_hi.resize(ngroups + 1, 0)
    for gi in range(ngroups):
        gstart_lo[gi + 1] = gstart_lo[gi] + gcount_lo[gi]
        gstart_hi[gi + 1] = gstart_hi[gi] + gcount_hi[gi]
    glo.resize(gstart_lo[ngroups])
    ghi.resize(gstart_hi[ngroups])
    cdef vector[int] fill_lo
    cdef vector[int] fill_hi
    fill_lo.assign(gstart_lo.begin(), gstart_lo.end())
    fill_hi.assign(gstart_hi.begin(), gstart_hi.end())
    for ei in range(ne):
        j = entries[ei].field
        gi = group_base[j] + <int> (entries[ei].level - lev_lo[j])
        if entries[ei].side == 0:
            glo[fill_lo[gi]] = <int> ei
            fill_lo[gi] += 1
        else:
            ghi[fill_hi[gi]] = <int> ei
            fill_hi[gi] += 1

    cdef int li, hi_j, fa, fb, fld
    cdef long long* ta
    cdef long long* tb
    cdef bint equal_rest
    cdef vector[signed char] hi_used
    cdef vector[signed char] lo_used
    cdef CutFacet* edata = entries.data()
    for gi in range(ngroups):
        hi_used.assign(gstart_hi[gi + 1] - gstart_hi[gi], 0)
        lo_used.assign(gstart_lo[gi + 1] - gstart_lo[gi], 0)
        # pass 1: exact rest-tuple matches
        for li in range(gstart_lo[gi], gstart_lo[gi + 1]):
            ei = <size_t> glo[li]
            fld = edata[ei].field
            fa = edata[ei].frag
            ta = &tuples_flat[fa * r]
            for hi_j in range(gstart_hi[gi], gstart_hi[gi + 1]):
                if hi_used[hi_j - gstart_hi[gi]]:
                    continue
                ej = <size_t> ghi[hi_j]
                fb = edata[ej].frag
                tb = &tuples_flat[fb * r]
                equal_rest = True
                for j in range(r):
                    if j != fld and ta[j] != tb[j]:
                        equal_rest = False
                        break
                if equal_rest:
                    pair_a.push_back(frag_base + fa)
                    pair_b.push_back(frag_base + fb)
                    pair_field.push_back(<signed char> fld)
                    pair_area.push_back(
                        0.5 * (edata[ei].area + edata[ej].area))
                    hi_used[hi_j - gstart_hi[gi]] = 1
                    lo_used[li - gstart_lo[gi]] = 1
                    break
        # pass 2: coincident-plane fallback for the leftovers
        for li in range(gstart_lo[gi], gstart_lo[gi + 1]):
            if lo_used[li - gstart_lo[gi]]:
                continue
            ei = <size_t> glo[li]
            fld = edata[ei].field
            fa = edata[ei].frag
            ta = &tuples_flat[fa * r]
            for hi_j in range(gstart_hi[gi], gstart_hi[gi + 1]):
                if hi_used[hi_j - gstart_hi[gi]]:
                    continue
                ej = <size_t> ghi[hi_j]
                fb = edata[ej].frag
                tb = &tuples_flat[fb * r]
                if _degenerate_match(ta, tb, fld, r,
                                     &edata[ei], &edata[ej],
                                     widths, bases):
                    pair_a.push_back(frag_base + fa)
                    pair_b.push_back(frag_base + fb)
                    pair_field.push_back(<signed char> fld)
                    pair_area.push_back(
                        0.5 * (edata[ei].area + edata[ej].area))
                    hi_used[hi_j - gstart_hi[gi]] = 1
                    break


cdef long long _run3(double* coords, double* values, Py_ssize_t ns, int r,
                     double* widths, double* bases,
                     vector[long long]* frag_offsets,
                     vector[long long]* frag_tuples,
                     vector[double]* frag_volumes,
                     vector[long long]* pair_a, vector[long long]* pair_b,
                     vector[signed char]* pair_field, vector[double]* pair_area,
                     vector[long long]* facet_frag,
                     vector[signed char]* facet_face,
                     vector[double]* facet_area) nogil:
    cdef long long total = 0
    cdef Py_ssize_t s
    cdef int i, j, f, k_idx
    cdef vector[Piece] pieces
    cdef vector[Piece] nxt
    cdef Piece init
    cdef Piece work
    cdef Piece lower_buf
    cdef Piece upper_buf
    cdef double g[3]
    cdef double axes[6]
    cdef double lo, hi, cutval, eps, simplex_vol, vol, vol_tol, area_tol, area
    cdef long long k_lo, k_hi, k
    cdef int rc, col
    cdef size_t pi
    cdef vector[CutFacet] cut_entries
    cdef vector[long long] local_tuples
    cdef CutFacet entry
    cdef int nlocal
    cdef bint have_rem
    cdef Piece* pp

    # fixed tetrahedron faces (face j opposite vertex j)
    cdef int face_def[12]
    face_def[0] = 1; face_def[1] = 2; face_def[2] = 3
    face_def[3] = 0; face_def[4] = 2; face_def[5] = 3
    face_def[6] = 0; face_def[7] = 1; face_def[8] = 3
    face_def[9] = 0; face_def[10] = 1; face_def[11] = 2

    for s in range(ns):
        pieces.clear()
        init.nverts = 4
        init.nfaces = 4
        init.fv_used = 12
        for j in range(4):
            for i in range(3):
                init.verts[j * VDIM + i] = coords[(s * 4 + j) * 3 + i]
            for i in range(r):
                init.verts[j * VDIM + 3 + i] = values[(s * 4 + j) * r + i]
        for f in range(4):
            init.tag_kind[f] = 0
            init.tag_a[f] = f
            init.tag_b[f] = 0
            init.fstart[f] = 3 * f
            init.fcount[f] = 3
        for i in range(12):
            init.fv[i] = face_def[i]
        simplex_vol = _poly_volume3(&init)
        pieces.push_back(init)

        for i in range(r):
            col = 3 + i
            eps = ON_EPS_REL * widths[i]
            _gradient3(&init.verts[0], &init.verts[VDIM],
                       &init.verts[2 * VDIM], &init.verts[3 * VDIM], col, g)
            _plane_axes(g[0], g[1], g[2], axes)
            nxt.clear()
            for pi in range(pieces.size()):
                work = pieces.data()[pi]
                lo = work.verts[col]
                hi = lo
                for j in range(1, work.nverts):
                    if work.verts[j * VDIM + col] < lo:
                        lo = work.verts[j * VDIM + col]
                    if work.verts[j * VDIM + col] > hi:
                        hi = work.verts[j * VDIM + col]
                k_lo = _quantize(lo, widths[i], bases[i])
                k_hi = _quantize(hi, widths[i], bases[i])
                if k_lo == k_hi:
                    work.tup[i] = k_lo
                    nxt.push_back(work)
                    continue
                have_rem = True
                for k in range(k_lo, k_hi):
                    cutval = bases[i] + (<double> k + 0.5) * widths[i]
                    rc = _split3(&work, col, cutval, eps, axes, 1, i, k,
                                 &lower_buf, &upper_buf)
                    if rc == -3:
                        return -1
                    if rc == -1:
                        work.tup[i] = k
                        nxt.push_back(work)
                        have_rem = False
                        break
                    elif rc == -2:
                        continue
                    else:
                        if rc & 1:
                            lower_buf.tup[i] = k
                            for j in range(i):
                                lower_buf.tup[j] = work.tup[j]
                            nxt.push_back(lower_buf)
                        if rc & 2:
                            for j in range(i):
                                upper_buf.tup[j] = work.tup[j]
                            work = upper_buf
                        else:
                            have_rem = False
                            break
                if have_rem:
                    work.tup[i] = k_hi
                    nxt.push_back(work)
            pieces.swap(nxt)

        vol_tol = VOL_TOL_REL * simplex_vol
        area_tol = AREA_TOL_REL * _simplex_scale3(coords + s * 12)
        cut_entries.clear()
        local_tuples.clear()
        nlocal = 0
        for pi in range(pieces.size()):
            pp = pieces.data() + pi
            vol = _poly_volume3(pp)
            if vol <= vol_tol:
                continue
            for j in range(r):
                local_tuples.push_back(pp.tup[j])
            frag_volumes.push_back(vol)
            for f in range(pp.nfaces):
                area = _face_area3(pp, f)
                if area <= area_tol:
                    continue
                if pp.tag_kind[f] == 0:
                    facet_frag.push_back(total + nlocal)
                    facet_face.push_back(<signed char> pp.tag_a[f])
                    facet_area.push_back(area)
                else:
                    entry.frag = nlocal
                    entry.field = pp.tag_a[f]
                    entry.level = pp.tag_b[f]
                    entry.side = 0 if pp.tup[entry.field] == entry.level else 1
                    entry.area = area
                    _facet_spans(pp.verts, &pp.fv[pp.fstart[f]],
                                 pp.fcount[f], r,
                                 entry.span_lo, entry.span_hi)
                    cut_entries.push_back(entry)
            nlocal += 1
        _match_and_emit(cut_entries, local_tuples.data(), total, r,
                        widths, bases, pair_a, pair_b, pair_field, pair_area)
        for j in range(nlocal * r):
            frag_tuples.push_back(local_tuples[j])
        total += nlocal
        frag_offsets.push_back(total)
    return total


cdef long long _run2(double* coords, double* values, Py_ssize_t ns, int r,
                     double* widths, double* bases,
                     vector[long long]* frag_offsets,
                     vector[long long]* frag_tuples,
                     vector[double]* frag_volumes,
                     vector[long long]* pair_a, vector[long long]* pair_b,
                     vector[signed char]* pair_field, vector[double]* pair_area,
                     vector[long long]* facet_frag,
                     vector[signed char]* facet_face,
                     vector[double]* facet_area) nogil:
    cdef long long total = 0
    cdef Py_ssize_t s
    cdef int i, j, f, col, rc, nlocal, e
    cdef vector[Poly2] pieces
    cdef vector[Poly2] nxt
    cdef Poly2 init
    cdef Poly2 work
    cdef Poly2 lower_buf
    cdef Poly2 upper_buf
    cdef double lo, hi, cutval, eps, simplex_area, vol, vol_tol, area_tol, area
    cdef long long k_lo, k_hi, k
    cdef size_t pi
    cdef vector[CutFacet] cut_entries
    cdef vector[long long] local_tuples
    cdef CutFacet entry
    cdef bint have_rem
    cdef int loop2[2]
    cdef Poly2* p2

    for s in range(ns):
        pieces.clear()
        init.nverts = 3
        for j in range(3):
            for i in range(3):
                init.verts[j * VDIM + i] = coords[(s * 3 + j) * 3 + i]
            for i in range(r):
                init.verts[j * VDIM + 3 + i] = values[(s * 3 + j) * r + i]
        # edge j runs vertex j -> j+1 and is opposite vertex (j+2)%3
        init.tag_kind[0] = 0; init.tag_a[0] = 2; init.tag_b[0] = 0
        init.tag_kind[1] = 0; init.tag_a[1] = 0; init.tag_b[1] = 0
        init.tag_kind[2] = 0; init.tag_a[2] = 1; init.tag_b[2] = 0
        simplex_area = _poly_area2(&init)
        pieces.push_back(init)

        for i in range(r):
            col = 3 + i
            eps = ON_EPS_REL * widths[i]
            nxt.clear()
            for pi in range(pieces.size()):
                work = pieces.data()[pi]
                lo = work.verts[col]
                hi = lo
                for j in range(1, work.nverts):
                    if work.verts[j * VDIM + col] < lo:
                        lo = work.verts[j * VDIM + col]
                    if work.verts[j * VDIM + col] > hi:
                        hi = work.verts[j * VDIM + col]
                k_lo = _quantize(lo, widths[i], bases[i])
                k_hi = _quantize(hi, widths[i], bases[i])
                if k_lo == k_hi:
                    work.tup[i] = k_lo
                    nxt.push_back(work)
                    continue
                have_rem = True
                for k in range(k_lo, k_hi):
                    cutval = bases[i] + (<double> k + 0.5) * widths[i]
                    rc = _split2(&work, col, cutval, eps, 1, i, k,
                                 &lower_buf, &upper_buf)
                    if rc == -3:
                        return -1
                    if rc == -1:
                        work.tup[i] = k
                        nxt.push_back(work)
                        have_rem = False
                        break
                    elif rc == -2:
                        continue
                    else:
                        if rc & 1:
                            lower_buf.tup[i] = k
                            for j in range(i):
                                lower_buf.tup[j] = work.tup[j]
                            nxt.push_back(lower_buf)
                        if rc & 2:
                            for j in range(i):
                                upper_buf.tup[j] = work.tup[j]
                            work = upper_buf
                        else:
                            have_rem = False
                            break
                if have_rem:
                    work.tup[i] = k_hi
                    nxt.push_back(work)
            pieces.swap(nxt)

        vol_tol = VOL_TOL_REL * simplex_area
        area_tol = AREA_TOL_REL * _simplex_scale2(coords + s * 9)
        cut_entries.clear()
        local_tuples.clear()
        nlocal = 0
        for pi in range(pieces.size()):
            p2 = pieces.data() + pi
            vol = _poly_area2(p2)
            if vol <= vol_tol:
                continue
            for j in range(r):
                local_tuples.push_back(p2.tup[j])
            frag_volumes.push_back(vol)
            for e in range(p2.nverts):
                f = (e + 1) % p2.nverts
                area = _edge_length(&p2.verts[e * VDIM],
                                    &p2.verts[f * VDIM])
                if area <= area_tol:
                    continue
                if p2.tag_kind[e] == 0:
                    facet_frag.push_back(total + nlocal)
                    facet_face.push_back(<signed char> p2.tag_a[e])
                    facet_area.push_back(area)
                else:
                    entry.frag = nlocal
                    entry.field = p2.tag_a[e]
                    entry.level = p2.tag_b[e]
                    entry.side = 0 if p2.tup[entry.field] == entry.level else 1
                    entry.area = area
                    loop2[0] = e
                    loop2[1] = f
                    _facet_spans(p2.verts, loop2, 2, r,
                                 entry.span_lo, entry.span_hi)
                    cut_entries.push_back(entry)
            nlocal += 1
        _match_and_emit(cut_entries, local_tuples.data(), total, r,
                        widths, bases, pair_a, pair_b, pair_field, pair_area)
        for j in range(nlocal * r):
            frag_tuples.push_back(local_tuples[j])
        total += nlocal
        frag_offsets.push_back(total)
    return total
