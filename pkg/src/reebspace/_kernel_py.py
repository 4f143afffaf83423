"""Pure-Python slicing kernel.

Slices each simplex of a mesh by every slab boundary of every field,
producing convex fragments that each carry one quantized index tuple.
This module is the reference implementation; ``reebspace._kernel`` is a
compiled mirror of the same algorithm, and the two must produce identical
output (the parity tests assert it).

Conventions shared by both kernels:

* fields are processed in index order, cut levels in ascending order;
* a vertex within ``1e-13 * width`` of a cut plane counts as lying on it;
* fragments with volume below ``1e-13`` of the simplex measure and facets
  with area below ``1e-12`` of the simplex facet scale are discarded;
* every facet is tagged with its origin: a local simplex face, or the
  generating cut plane (field index, level), so adjacency is resolved by
  tags, never by matching facet geometry;
* two fragments of one simplex separated by a cut plane are adjacent when
  their rest-tuples agree, or, for rank-deficient value maps where several
  cut planes coincide, when every disagreeing field is constant on both
  facets at exactly the boundary between the two indices.
"""

from __future__ import annotations

import math

import numpy as np

ON_EPS_REL = 1e-13  # on-plane band, relative to the field's slab width
VOL_TOL_REL = 1e-13  # fragment volume floor, relative to simplex measure
AREA_TOL_REL = 1e-12  # facet area floor, relative to simplex facet scale
CONST_TOL_REL = 1e-9  # facet-constant-at-cut tolerance, relative to width

FACE_TAG = 0
CUT_TAG = 1


def _quantize(value: float, width: float, base: float) -> int:
    u = (value - base) / width
    if u >= 0.0:
        return int(math.floor(u + 0.5))
    return -int(math.floor(-u + 0.5))


def _gradient3(coords, vals):
    """Spatial gradient of one linear field on a tetrahedron (Cramer)."""
    ax = coords[1][0] - coords[0][0]
    ay = coords[1][1] - coords[0][1]
    az = coords[1][2] - coords[0][2]
    bx = coords[2][0] - coords[0][0]
    by = coords[2][1] - coords[0][1]
    bz = coords[2][2] - coords[0][2]
    cx = coords[3][0] - coords[0][0]
    cy = coords[3][1] - coords[0][1]
    cz = coords[3][2] - coords[0][2]
    d0 = vals[1] - vals[0]
    d1 = vals[2] - vals[0]
    d2 = vals[3] - vals[0]
    det = (
        ax * (by * cz - bz * cy)
        - ay * (bx * cz - bz * cx)
        + az * (bx * cy - by * cx)
    )
    if det == 0.0:
        return (0.0, 0.0, 0.0)
    gx = (
        d0 * (by * cz - bz * cy)
        - ay * (d1 * cz - bz * d2)
        + az * (d1 * cy - by * d2)
    ) / det
    gy = (
        ax * (d1 * cz - d2 * bz)
        - d0 * (bx * cz - bz * cx)
        + az * (bx * d2 - d1 * cx)
    ) / det
    gz = (
        ax * (by * d2 - cy * d1)
        - ay * (bx * d2 - d1 * cx)
        + d0 * (bx * cy - by * cx)
    ) / det
    return (gx, gy, gz)


def _plane_axes(g):
    """Deterministic orthonormal in-plane basis for a plane with normal g."""
    nx, ny, nz = g
    norm = math.sqrt(nx * nx + ny * ny + nz * nz)
    if norm == 0.0:
        return (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)
    nx, ny, nz = nx / norm, ny / norm, nz / norm
    aax, aay, aaz = abs(nx), abs(ny), abs(nz)
    if aax <= aay and aax <= aaz:
        ex, ey, ez = 1.0, 0.0, 0.0
    elif aay <= aaz:
        ex, ey, ez = 0.0, 1.0, 0.0
    else:
        ex, ey, ez = 0.0, 0.0, 1.0
    ux = ny * ez - nz * ey
    uy = nz * ex - nx * ez
    uz = nx * ey - ny * ex
    un = math.sqrt(ux * ux + uy * uy + uz * uz)
    ux, uy, uz = ux / un, uy / un, uz / un
    wx = ny * uz - nz * uy
    wy = nz * ux - nx * uz
    wz = nx * uy - ny * ux
    return (ux, uy, uz), (wx, wy, wz)


def _split3(verts, faces, col, cutval, eps, axes, cut_tag):
    """Split a convex polyhedron along ``vertex[col] == cutval``.

    Returns (lower, upper); either side may be None.  Both sides receive a
    copy of the cap polygon tagged ``cut_tag``.
    """
    d = [v[col] - cutval for v in verts]
    has_below = False
    has_above = False
    for x in d:
        if x < -eps:
            has_below = True
        elif x > eps:
            has_above = True
    if not has_above:
        return (verts, faces), None
    if not has_below:
        return None, (verts, faces)

    cut_points: dict = {}
    sides = []
    for want_lower in (True, False):
        side_verts: list = []
        side_map: dict = {}
        side_faces: list = []

        def add_vertex(key, coords):
            vid = side_map.get(key)
            if vid is None:
                vid = len(side_verts)
                side_map[key] = vid
                side_verts.append(coords)
            return vid

        for tag, loop in faces:
            ids: list = []
            n = len(loop)
            for idx in range(n):
                a = loop[idx]
                b = loop[(idx + 1) % n]
                da = d[a]
                db = d[b]
                a_on = -eps <= da <= eps
                b_on = -eps <= db <= eps
                if a_on or ((da < 0.0) == want_lower):
                    vid = add_vertex(("v", a), verts[a])
                    if not ids or ids[-1] != vid:
                        ids.append(vid)
                if (not a_on) and (not b_on) and ((da < 0.0) != (db < 0.0)):
                    key = (a, b) if a < b else (b, a)
                    pt = cut_points.get(key)
                    if pt is None:
                        va = verts[a]
                        vb = verts[b]
                        t = da / (da - db)
                        pt = [va[m] + t * (vb[m] - va[m]) for m in range(len(va))]
                        pt[col] = cutval
                        cut_points[key] = pt
                    vid = add_vertex(("e", key), pt)
                    if not ids or ids[-1] != vid:
                        ids.append(vid)
            while len(ids) >= 2 and ids[0] == ids[-1]:
                ids.pop()
            if len(ids) >= 3:
                side_faces.append((tag, ids))

        cap = []
        for key, vid in side_map.items():
            if key[0] == "e" or (-eps <= d[key[1]] <= eps):
                cap.append(vid)
        if len(cap) >= 3:
            m = float(len(cap))
            cx = sum(side_verts[v][0] for v in cap) / m
            cy = sum(side_verts[v][1] for v in cap) / m
            cz = sum(side_verts[v][2] for v in cap) / m
            (ux, uy, uz), (wx, wy, wz) = axes

            def angle_key(vid):
                p = side_verts[vid]
                px, py, pz = p[0] - cx, p[1] - cy, p[2] - cz
                return (
                    math.atan2(
                        px * wx + py * wy + pz * wz,
                        px * ux + py * uy + pz * uz,
                    ),
                    vid,
                )

            cap.sort(key=angle_key)
            side_faces.append((cut_tag, cap))
        sides.append((side_verts, side_faces) if len(side_faces) >= 4 else None)
    return sides[0], sides[1]


def _split2(verts, tags, col, cutval, eps, cut_tag):
    """Split a convex polygon along ``vertex[col] == cutval``.

    Polygons keep their cyclic vertex order; ``tags[j]`` describes the edge
    from vertex j to vertex j+1.  The chord created by the split is tagged
    ``cut_tag`` on both sides.
    """
    d = [v[col] - cutval for v in verts]
    has_below = False
    has_above = False
    for x in d:
        if x < -eps:
            has_below = True
        elif x > eps:
            has_above = True
    if not has_above:
        return (verts, tags), None
    if not has_below:
        return None, (verts, tags)

    cut_points: dict = {}
    n = len(verts)
    sides = []
    for want_lower in (True, False):
        chain: list = []  # (key, coords, outgoing tag)
        for idx in range(n):
            a = idx
            b = (idx + 1) % n
            da = d[a]
            db = d[b]
            a_on = -eps <= da <= eps
            b_on = -eps <= db <= eps
            a_in = a_on or ((da < 0.0) == want_lower)
            b_in = b_on or ((db < 0.0) == want_lower)
            tag = tags[idx]
            if a_in:
                # the chord tag belongs to the edge leaving the exit point;
                # a strictly interior vertex keeps its original edge tag up
                # to the crossing
                leaving_here = a_on and not b_in
                chain.append((("v", a), verts[a], cut_tag if leaving_here else tag))
                if (not a_on) and (not b_on) and (not b_in):
                    key = (a, b) if a < b else (b, a)
                    pt = cut_points.get(key)
                    if pt is None:
                        va = verts[a]
                        vb = verts[b]
                        t = da / (da - db)
                        pt = [va[m] + t * (vb[m] - va[m]) for m in range(len(va))]
                        pt[col] = cutval
                        cut_points[key] = pt
                    chain.append((("e", key), pt, cut_tag))
            elif (not b_on) and b_in:
                key = (a, b) if a < b else (b, a)
                pt = cut_points.get(key)
                if pt is None:
                    va = verts[a]
                    vb = verts[b]
                    t = da / (da - db)
                    pt = [va[m] + t * (vb[m] - va[m]) for m in range(len(va))]
                    pt[col] = cutval
                    cut_points[key] = pt
                chain.append((("e", key), pt, tag))
        # drop zero-length edges (consecutive duplicates, wrap included),
        # keeping the later outgoing tag
        cleaned: list = []
        for key, coords, tag in chain:
            if cleaned and cleaned[-1][0] == key:
                cleaned[-1] = (key, coords, tag)
            else:
                cleaned.append((key, coords, tag))
        while len(cleaned) >= 2 and cleaned[0][0] == cleaned[-1][0]:
            first = cleaned.pop(0)
            cleaned[-1] = (cleaned[-1][0], cleaned[-1][1], first[2])
        if len(cleaned) >= 3:
            sides.append(([c[1] for c in cleaned], [c[2] for c in cleaned]))
        else:
            sides.append(None)
    return sides[0], sides[1]


def _poly_volume3(verts, faces):
    m = float(len(verts))
    cx = sum(v[0] for v in verts) / m
    cy = sum(v[1] for v in verts) / m
    cz = sum(v[2] for v in verts) / m
    vol = 0.0
    for _tag, loop in faces:
        x0 = verts[loop[0]][0] - cx
        y0 = verts[loop[0]][1] - cy
        z0 = verts[loop[0]][2] - cz
        for t in range(1, len(loop) - 1):
            x1 = verts[loop[t]][0] - cx
            y1 = verts[loop[t]][1] - cy
            z1 = verts[loop[t]][2] - cz
            x2 = verts[loop[t + 1]][0] - cx
            y2 = verts[loop[t + 1]][1] - cy
            z2 = verts[loop[t + 1]][2] - cz
            vol += abs(
                x0 * (y1 * z2 - z1 * y2)
                - y0 * (x1 * z2 - z1 * x2)
                + z0 * (x1 * y2 - y1 * x2)
            )
    return vol / 6.0


def _face_area3(verts, loop):
    x0, y0, z0 = verts[loop[0]][0], verts[loop[0]][1], verts[loop[0]][2]
    area = 0.0
    for t in range(1, len(loop) - 1):
        ax = verts[loop[t]][0] - x0
        ay = verts[loop[t]][1] - y0
        az = verts[loop[t]][2] - z0
        bx = verts[loop[t + 1]][0] - x0
        by = verts[loop[t + 1]][1] - y0
        bz = verts[loop[t + 1]][2] - z0
        qx = ay * bz - az * by
        qy = az * bx - ax * bz
        qz = ax * by - ay * bx
        area += math.sqrt(qx * qx + qy * qy + qz * qz)
    return area / 2.0


def _poly_area2(verts):
    area = 0.0
    n = len(verts)
    for i in range(n):
        j = (i + 1) % n
        area += verts[i][0] * verts[j][1] - verts[j][0] * verts[i][1]
    return abs(area) / 2.0


def _edge_length(va, vb):
    dx = vb[0] - va[0]
    dy = vb[1] - va[1]
    dz = vb[2] - va[2]
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def slice_one_simplex(coords, values, widths, bases, dim):
    """Slice one simplex into fragments.

    coords: (d+1, 3) vertex coordinates; values: (d+1, r) field values
    (already deduplicated against exact cut hits by the caller).
    Returns a list of fragment dicts with keys ``tuple``, ``verts``,
    ``faces`` (3D: ``(tag, loop)`` list) or ``tags`` (2D: per-edge), and
    ``volume``.
    """
    r = len(widths)
    nv = dim + 1
    verts0 = [
        [float(coords[j][0]), float(coords[j][1]), float(coords[j][2])]
        + [float(values[j][i]) for i in range(r)]
        for j in range(nv)
    ]
    if dim == 3:
        faces0 = [
            ((FACE_TAG, 0, 0), [1, 2, 3]),
            ((FACE_TAG, 1, 0), [0, 2, 3]),
            ((FACE_TAG, 2, 0), [0, 1, 3]),
            ((FACE_TAG, 3, 0), [0, 1, 2]),
        ]
        pieces = [(verts0, faces0, ())]
        simplex_measure = _poly_volume3(verts0, faces0)
    else:
        # edge j runs from vertex j to j+1; the edge opposite vertex v is
        # tagged v so that tags align with the 3D face convention
        tags0 = [(FACE_TAG, 2, 0), (FACE_TAG, 0, 0), (FACE_TAG, 1, 0)]
        pieces = [(verts0, tags0, ())]
        simplex_measure = _poly_area2(verts0)

    for i in range(r):
        col = 3 + i
        width = widths[i]
        base = bases[i]
        eps = ON_EPS_REL * width
        if dim == 3:
            axes = _plane_axes(
                _gradient3(verts0, [verts0[j][col] for j in range(4)])
            )
        out = []
        for piece in pieces:
            pverts, pstruct, tup = piece
            lo = min(v[col] for v in pverts)
            hi = max(v[col] for v in pverts)
            k_lo = _quantize(lo, width, base)
            k_hi = _quantize(hi, width, base)
            if k_lo == k_hi:
                out.append((pverts, pstruct, tup + (k_lo,)))
                continue
            rem = (pverts, pstruct)
            for k in range(k_lo, k_hi):
                cutval = base + (k + 0.5) * width
                tag = (CUT_TAG, i, k)
                if dim == 3:
                    lower, upper = _split3(rem[0], rem[1], col, cutval, eps, axes, tag)
                else:
                    lower, upper = _split2(rem[0], rem[1], col, cutval, eps, tag)
                if lower is not None:
                    out.append((lower[0], lower[1], tup + (k,)))
                rem = upper
                if rem is None:
                    break
            if rem is not None:
                out.append((rem[0], rem[1], tup + (k_hi,)))
        pieces = out

    vol_tol = VOL_TOL_REL * simplex_measure
    frags = []
    for pverts, pstruct, tup in pieces:
        vol = _poly_volume3(pverts, pstruct) if dim == 3 else _poly_area2(pverts)
        if vol > vol_tol:
            frags.append(
                {
                    "tuple": tup,
                    "verts": pverts,
                    ("faces" if dim == 3 else "tags"): pstruct,
                    "volume": vol,
                }
            )
    return frags, simplex_measure


def _facet_entries(frag, dim):
    """Yield (tag, area, vertex index list) for each facet of a fragment."""
    if dim == 3:
        for tag, loop in frag["faces"]:
            yield tag, _face_area3(frag["verts"], loop), loop
    else:
        verts = frag["verts"]
        n = len(verts)
        for j in range(n):
            yield frag["tags"][j], _edge_length(verts[j], verts[(j + 1) % n]), [j, (j + 1) % n]


def match_simplex_pairs(frags, widths, bases, dim, area_tol):
    """In-simplex adjacency across cut planes.

    Returns (pairs, face_records): pairs are (lower_idx, upper_idx, field,
    interface measure); face_records are (frag_idx, local_face, measure)
    for facets on the simplex boundary.
    """
    r = len(widths)
    cut_facets: dict = {}
    face_records = []
    for fi, frag in enumerate(frags):
        for tag, area, loop in _facet_entries(frag, dim):
            if area <= area_tol:
                continue
            if tag[0] == FACE_TAG:
                face_records.append((fi, tag[1], area))
                continue
            _, i, k = tag
            side = 0 if frag["tuple"][i] == k else 1
            spans = []
            verts = frag["verts"]
            for j in range(r):
                vmin = min(verts[v][3 + j] for v in loop)
                vmax = max(verts[v][3 + j] for v in loop)
                spans.append((vmin, vmax))
            rest = tuple(t for j, t in enumerate(frag["tuple"]) if j != i)
            cut_facets.setdefault((i, k), ({}, {}))[side][rest] = (fi, area, spans)

    pairs = []
    for (i, k) in sorted(cut_facets):
        lo, hi = cut_facets[(i, k)]
        leftovers_lo = []
        for rest in sorted(lo):
            if rest in hi:
                fa, aa, _ = lo[rest]
                fb, ab, _ = hi[rest]
                pairs.append((fa, fb, i, 0.5 * (aa + ab)))
            else:
                leftovers_lo.append(rest)
        leftovers_hi = [rest for rest in sorted(hi) if rest not in lo]
        if not leftovers_lo or not leftovers_hi:
            continue
        used_hi: set = set()
        for rest_a in leftovers_lo:
            fa, aa, spans_a = lo[rest_a]
            ta = frags[fa]["tuple"]
            for rest_b in leftovers_hi:
                if rest_b in used_hi:
                    continue
                fb, ab, spans_b = hi[rest_b]
                tb = frags[fb]["tuple"]
                if _degenerate_match(ta, tb, i, spans_a, spans_b, widths, bases):
                    pairs.append((fa, fb, i, 0.5 * (aa + ab)))
                    used_hi.add(rest_b)
                    break
    return pairs, face_records


def _degenerate_match(ta, tb, skip_field, spans_a, spans_b, widths, bases):
    """Facet-overlap test for fragments whose rest-tuples disagree.

    Valid only when every disagreeing field is constant on both facets at
    exactly the boundary between the two indices (coincident cut planes).
    """
    for j in range(len(widths)):
        if j == skip_field or ta[j] == tb[j]:
            continue
        if abs(ta[j] - tb[j]) != 1:
            return False
        cut = bases[j] + (min(ta[j], tb[j]) + 0.5) * widths[j]
        tol = CONST_TOL_REL * widths[j]
        for vmin, vmax in (spans_a[j], spans_b[j]):
            if abs(vmin - cut) > tol or abs(vmax - cut) > tol:
                return False
    return True


def _simplex_scales(coords, dim):
    """(facet area scale) for threshold purposes."""
    if dim == 3:
        total = 0.0
        for skip in range(4):
            tri = [coords[j] for j in range(4) if j != skip]
            ax = tri[1][0] - tri[0][0]
            ay = tri[1][1] - tri[0][1]
            az = tri[1][2] - tri[0][2]
            bx = tri[2][0] - tri[0][0]
            by = tri[2][1] - tri[0][1]
            bz = tri[2][2] - tri[0][2]
            qx = ay * bz - az * by
            qy = az * bx - ax * bz
            qz = ax * by - ay * bx
            total += math.sqrt(qx * qx + qy * qy + qz * qz) / 2.0
        return total / 4.0
    total = 0.0
    for j in range(3):
        total += _edge_length(coords[j], coords[(j + 1) % 3])
    return total / 3.0


def slice_batch(coords, values, widths, bases, dim):
    """Slice a batch of simplices; compact array output.

    coords: (ns, d+1, 3) float64; values: (ns, d+1, r) float64.
    Returns a dict of numpy arrays:
      frag_offsets (ns+1,), frag_tuples (nf, r), frag_volumes (nf,),
      pair_a, pair_b, pair_field, pair_area (in-simplex adjacency),
      facet_frag, facet_face, facet_area (simplex-boundary facets).
    Fragment indices are batch-local and dense.
    """
    coords = np.asarray(coords, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    ns = coords.shape[0]
    r = len(widths)
    widths = [float(w) for w in widths]
    bases = [float(b) for b in bases]

    frag_offsets = np.zeros(ns + 1, dtype=np.int64)
    tuples_out: list = []
    volumes_out: list = []
    pair_a: list = []
    pair_b: list = []
    pair_field: list = []
    pair_area: list = []
    facet_frag: list = []
    facet_face: list = []
    facet_area: list = []

    total = 0
    for s in range(ns):
        cs = coords[s]
        frags, _measure = slice_one_simplex(cs, values[s], widths, bases, dim)
        area_tol = AREA_TOL_REL * _simplex_scales(cs, dim)
        pairs, faces = match_simplex_pairs(frags, widths, bases, dim, area_tol)
        for frag in frags:
            tuples_out.append(frag["tuple"])
            volumes_out.append(frag["volume"])
        for a, b, i, area in pairs:
            pair_a.append(total + a)
            pair_b.append(total + b)
            pair_field.append(i)
            pair_area.append(area)
        for fi, face, area in faces:
            facet_frag.append(total + fi)
            facet_face.append(face)
            facet_area.append(area)
        total += len(frags)
        frag_offsets[s + 1] = total

    return {
        "frag_offsets": frag_offsets,
        "frag_tuples": np.array(tuples_out, dtype=np.int64).reshape(total, r),
        "frag_volumes": np.array(volumes_out, dtype=np.float64),
        "pair_a": np.array(pair_a, dtype=np.int64),
        "pair_b": np.array(pair_b, dtype=np.int64),
        "pair_field": np.array(pair_field, dtype=np.int8),
        "pair_area": np.array(pair_area, dtype=np.float64),
        "facet_frag": np.array(facet_frag, dtype=np.int64),
        "facet_face": np.array(facet_face, dtype=np.int8),
        "facet_area": np.array(facet_area, dtype=np.float64),
    }
