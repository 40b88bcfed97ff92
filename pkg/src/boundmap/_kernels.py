"""Compiled inner loops.

Voxel keys travel through the kernels packed into one int64: three 21-bit
fields biased by 2**20, ``i`` in the high bits. Sorting packed keys is
lexicographic (i, j, k) order, so a z-column is a contiguous key range.

The DDA and the slab test compute every plane crossing with the same
expression ``(idx * d - o) / D`` along the unnormalized segment direction
``D = end - origin``. Both routes therefore agree bit for bit on where a ray
enters each voxel, which the truncated caster relies on to resume the
classical traversal mid-ray.
"""

import math

import numpy as np
from numba import njit

BIAS = 1 << 20
FIELD = (1 << 21) - 1
COL_SHIFT = 21

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

NOT_BOUNDARY = 0
INTERIOR = 1
EXTERIOR_UNKNOWN = 2
EXTERIOR_OCCUPIED = 3

# Packed-key deltas in six_neighbors order (-x, +x, -y, +y, -z, +z).
NEIGHBOR_DELTAS = np.array([-(1 << 42), 1 << 42, -(1 << 21), 1 << 21, -1, 1], dtype=np.int64)

CLASS_STATE = np.array([-1, FREE, UNKNOWN, OCCUPIED], dtype=np.int8)

# Returned by column queries when the run markers do not alternate.
CORRUPT = -1

END_SLACK = 1e-9


@njit(cache=True, nogil=True)
def pack(i, j, k):
    return ((np.int64(i) + BIAS) << 42) | ((np.int64(j) + BIAS) << 21) | (np.int64(k) + BIAS)


@njit(cache=True, nogil=True)
def unpack(key):
    return (key >> 42) - BIAS, ((key >> 21) & FIELD) - BIAS, (key & FIELD) - BIAS


@njit(cache=True)
def pack_array(keys):
    out = np.empty(keys.shape[0], dtype=np.int64)
    for n in range(keys.shape[0]):
        out[n] = pack(keys[n, 0], keys[n, 1], keys[n, 2])
    return out


@njit(cache=True)
def unpack_array(packed):
    out = np.empty((packed.shape[0], 3), dtype=np.int64)
    for n in range(packed.shape[0]):
        i, j, k = unpack(packed[n])
        out[n, 0] = i
        out[n, 1] = j
        out[n, 2] = k
    return out


@njit(cache=True, nogil=True)
def to_map_key(key, axis):
    """Reorder a world key so the projection axis occupies the low field."""
    if axis == 2:
        return key
    i, j, k = unpack(key)
    if axis == 0:
        return pack(j, k, i)
    return pack(i, k, j)


@njit(cache=True, nogil=True)
def from_map_key(mkey, axis):
    if axis == 2:
        return mkey
    a, b, c = unpack(mkey)
    if axis == 0:
        return pack(c, a, b)
    return pack(a, c, b)


@njit(cache=True)
def to_map_keys(keys, axis):
    out = np.empty_like(keys)
    for n in range(keys.shape[0]):
        out[n] = to_map_key(keys[n], axis)
    return out


@njit(cache=True)
def from_map_keys(mkeys, axis):
    out = np.empty_like(mkeys)
    for n in range(mkeys.shape[0]):
        out[n] = from_map_key(mkeys[n], axis)
    return out


@njit(cache=True, nogil=True)
def floor_div(x, d):
    return np.int64(math.floor(x / d))


# --------------------------------------------------------------------------
# Boundary status


@njit(cache=True, nogil=True)
def boundary_status(state, nb):
    """Class and non-free mask for a voxel given its six neighbor states."""
    mask = 0
    has_free = False
    for n in range(6):
        if nb[n] == FREE:
            has_free = True
        else:
            mask |= 1 << n
    if state == OCCUPIED:
        return EXTERIOR_OCCUPIED, mask
    if state == FREE:
        if mask != 0:
            return INTERIOR, mask
        return NOT_BOUNDARY, 0
    if has_free:
        return EXTERIOR_UNKNOWN, mask
    return NOT_BOUNDARY, 0


# --------------------------------------------------------------------------
# Column queries


@njit(cache=True, nogil=True)
def query_column(mkeys, cls, mask, lo, hi, target, lo_bit, hi_bit):
    """State of ``target`` from the records ``lo:hi`` of its column.

    Interior records with the lower-face bit open a free run and those with
    the upper-face bit close it. Returns CORRUPT if the markers seen before
    ``target`` break the start/end alternation.
    """
    inside = False
    for r in range(lo, hi):
        key = mkeys[r]
        if key == target:
            return CLASS_STATE[cls[r]]
        if key > target:
            return FREE if inside else UNKNOWN
        if cls[r] == INTERIOR:
            m = mask[r]
            starts = (m & lo_bit) != 0
            ends = (m & hi_bit) != 0
            if starts:
                if inside:
                    return CORRUPT
                if not ends:
                    inside = True
            elif ends:
                if not inside:
                    return CORRUPT
                inside = False
    # A run still open past the last record has no end marker.
    if inside:
        return CORRUPT
    return UNKNOWN


@njit(cache=True, nogil=True)
def column_range(mkeys, mkey):
    col = mkey >> COL_SHIFT
    lo = np.searchsorted(mkeys, col << COL_SHIFT)
    hi = np.searchsorted(mkeys, (col + 1) << COL_SHIFT)
    return lo, hi


@njit(cache=True, nogil=True)
def query_one(mkeys, cls, mask, key, axis):
    mkey = to_map_key(key, axis)
    lo, hi = column_range(mkeys, mkey)
    return query_column(mkeys, cls, mask, lo, hi, mkey, 1 << (2 * axis), 1 << (2 * axis + 1))


@njit(cache=True, nogil=True)
def is_sorted(a):
    for n in range(1, a.shape[0]):
        if a[n] < a[n - 1]:
            return False
    return True


@njit(cache=True, nogil=True)
def query_sweep(mkeys, cls, mask, targets, lo_bit, hi_bit):
    """States of ascending map keys ``targets`` in one merged pass over the records.

    Agrees with ``query_column`` target by target.
    """
    n_rec = mkeys.shape[0]
    out = np.empty(targets.shape[0], dtype=np.int8)
    r = 0
    col = np.int64(-1)
    inside = False
    bad = False
    for t in range(targets.shape[0]):
        target = targets[t]
        c = target >> COL_SHIFT
        if c != col:
            col = c
            r = np.searchsorted(mkeys, col << COL_SHIFT)
            inside = False
            bad = False
        while r < n_rec and mkeys[r] < target:
            if cls[r] == INTERIOR:
                m = mask[r]
                starts = (m & lo_bit) != 0
                ends = (m & hi_bit) != 0
                if starts:
                    if inside:
                        bad = True
                    if not ends:
                        inside = True
                elif ends:
                    if not inside:
                        bad = True
                    inside = False
            r += 1
        if bad:
            out[t] = CORRUPT
        elif r < n_rec and mkeys[r] == target:
            out[t] = CLASS_STATE[cls[r]]
        elif inside and (r == n_rec or (mkeys[r] >> COL_SHIFT) != col):
            out[t] = CORRUPT
        else:
            out[t] = FREE if inside else UNKNOWN
    return out


@njit(cache=True, nogil=True)
def query_many(mkeys, cls, mask, keys, axis):
    """States of arbitrary packed world keys."""
    mk = to_map_keys(keys, axis)
    if axis == 2 and is_sorted(mk):
        return query_sweep(mkeys, cls, mask, mk, 1 << 4, 1 << 5)
    order = np.argsort(mk)
    res = query_sweep(mkeys, cls, mask, mk[order], 1 << (2 * axis), 1 << (2 * axis + 1))
    out = np.empty(keys.shape[0], dtype=np.int8)
    for n in range(order.shape[0]):
        out[order[n]] = res[n]
    return out


@njit(cache=True)
def check_columns(mkeys, cls, mask, columns, axis):
    """Index of the first column in ``columns`` whose markers do not alternate, else -1."""
    lo_bit = 1 << (2 * axis)
    hi_bit = 1 << (2 * axis + 1)
    for c in range(columns.shape[0]):
        lo = np.searchsorted(mkeys, columns[c] << COL_SHIFT)
        hi = np.searchsorted(mkeys, (columns[c] + 1) << COL_SHIFT)
        inside = False
        for r in range(lo, hi):
            if cls[r] != INTERIOR:
                continue
            starts = (mask[r] & lo_bit) != 0
            ends = (mask[r] & hi_bit) != 0
            if starts:
                if inside:
                    return c
                if not ends:
                    inside = True
            elif ends:
                if not inside:
                    return c
                inside = False
        if inside:
            return c
    return -1


# --------------------------------------------------------------------------
# Ray geometry


@njit(cache=True, nogil=True)
def _axis_interval(o, D, idx, d):
    lo = idx * d
    hi = (idx + 1) * d
    if D == 0.0:
        if o < lo or o >= hi:
            return np.inf, -np.inf
        return -np.inf, np.inf
    t1 = (lo - o) / D
    t2 = (hi - o) / D
    if t1 > t2:
        return t2, t1
    return t1, t2


@njit(cache=True, nogil=True)
def voxel_slab(o0, o1, o2, D0, D1, D2, i, j, k, d):
    """Entry and exit parameters of the line ``o + t D`` through voxel (i, j, k)."""
    a0, b0 = _axis_interval(o0, D0, i, d)
    a1, b1 = _axis_interval(o1, D1, j, d)
    a2, b2 = _axis_interval(o2, D2, k, d)
    return max(a0, a1, a2), min(b0, b1, b2)


@njit(cache=True, nogil=True)
def _exit_t(o, D, c, d):
    if D > 0.0:
        return ((c + 1) * d - o) / D
    if D < 0.0:
        return (c * d - o) / D
    return np.inf


@njit(cache=True, nogil=True)
def _grow(buf, need):
    size = buf.shape[0]
    if need <= size:
        return buf
    new_size = max(need, 2 * size, 64)
    out = np.empty(new_size, dtype=buf.dtype)
    out[:size] = buf
    return out


@njit(cache=True, nogil=True)
def dda_walk(o0, o1, o2, D0, D1, D2, d, ci, cj, ck, ei, ej, ek, stop_key, t_limit, out, pos):
    """Walk voxels from (ci, cj, ck) toward the end voxel (ei, ej, ek).

    Every visited voxel except the end voxel is appended to ``out`` at
    ``pos``. The walk stops before entering ``stop_key`` (excluded), at the
    end voxel (counted but not appended), or when the next crossing lies
    beyond ``t_limit``. Ties step x before y before z.

    Returns (buffer, new pos, visited count, reached_end).
    """
    sx = 1 if D0 > 0.0 else (-1 if D0 < 0.0 else 0)
    sy = 1 if D1 > 0.0 else (-1 if D1 < 0.0 else 0)
    sz = 1 if D2 > 0.0 else (-1 if D2 < 0.0 else 0)
    budget = abs(ei - ci) + abs(ej - cj) + abs(ek - ck) + 1
    out = _grow(out, pos + budget)
    visited = 0
    while True:
        key = pack(ci, cj, ck)
        if key == stop_key:
            return out, pos, visited, False
        visited += 1
        if ci == ei and cj == ej and ck == ek:
            return out, pos, visited, True
        if pos >= out.shape[0]:
            out = _grow(out, pos + 64)
        out[pos] = key
        pos += 1
        tx = _exit_t(o0, D0, ci, d)
        ty = _exit_t(o1, D1, cj, d)
        tz = _exit_t(o2, D2, ck, d)
        if tx <= ty and tx <= tz:
            if tx > t_limit:
                return out, pos, visited, False
            ci += sx
        elif ty <= tz:
            if ty > t_limit:
                return out, pos, visited, False
            cj += sy
        else:
            if tz > t_limit:
                return out, pos, visited, False
            ck += sz


@njit(cache=True, nogil=True)
def classical_rays(origin, ends, d, r0, r1):
    """Full traversal of rays ``r0:r1``.

    Returns (free keys, end keys, per-ray visited counts). Free keys exclude
    each ray's own end voxel.
    """
    o0, o1, o2 = origin[0], origin[1], origin[2]
    oi = floor_div(o0, d)
    oj = floor_div(o1, d)
    ok = floor_div(o2, d)
    out = np.empty(1024, dtype=np.int64)
    pos = 0
    n = r1 - r0
    end_keys = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.int64)
    for r in range(r0, r1):
        p0, p1, p2 = ends[r, 0], ends[r, 1], ends[r, 2]
        ei = floor_div(p0, d)
        ej = floor_div(p1, d)
        ek = floor_div(p2, d)
        end_keys[r - r0] = pack(ei, ej, ek)
        out, pos, v, _ = dda_walk(
            o0, o1, o2, p0 - o0, p1 - o1, p2 - o2, d, oi, oj, ok, ei, ej, ek, -1, 1.0 + END_SLACK, out, pos
        )
        visited[r - r0] = v
    return out[:pos], end_keys, visited


# --------------------------------------------------------------------------
# Truncated casting


@njit(cache=True, nogil=True)
def refine_candidates(o0, o1, o2, D0, D1, D2, d, t_end_entry, cand, rec_keys, rec_cls):
    """Keep candidates the segment actually pierces, sorted by entry parameter.

    ``cand`` indexes rows of ``rec_keys``/``rec_cls`` and is expected in
    ascending key order, so the stable sort breaks entry ties by key.
    Returns (entry params, record indices) in traversal order.
    """
    m = cand.shape[0]
    ts = np.empty(m, dtype=np.float64)
    idx = np.empty(m, dtype=np.int64)
    n = 0
    for c in range(m):
        r = cand[c]
        tin, tout = voxel_slab(o0, o1, o2, D0, D1, D2, rec_keys[r, 0], rec_keys[r, 1], rec_keys[r, 2], d)
        if tin <= tout and tout >= 0.0 and tin <= t_end_entry:
            ts[n] = tin
            idx[n] = r
            n += 1
    ts = ts[:n]
    idx = idx[:n]
    order = np.argsort(ts, kind="mergesort")
    return ts[order], idx[order]


@njit(cache=True, nogil=True)
def walk_exterior(o0, o1, o2, p0, p1, p2, d, origin_free, seq_t, seq_keys, seq_cls, out, pos):
    """Interior/exterior state machine along one ray.

    ``seq_*`` are the refined boundary voxels in traversal order. Exterior
    stretches start at an exterior voxel (inclusive) and stop before the next
    interior voxel, or run to the end voxel. When the origin is not known to
    be free the ray starts outside, at the origin voxel.

    Returns (buffer, new pos, visited count, exterior segment count).
    """
    D0 = p0 - o0
    D1 = p1 - o1
    D2 = p2 - o2
    ei = floor_div(p0, d)
    ej = floor_div(p1, d)
    ek = floor_div(p2, d)
    exterior = not origin_free
    si = floor_div(o0, d)
    sj = floor_div(o1, d)
    sk = floor_div(o2, d)
    visited = 0
    segments = 1 if exterior else 0
    for n in range(seq_t.shape[0]):
        c = seq_cls[n]
        if not exterior:
            if c != INTERIOR:
                exterior = True
                segments += 1
                si = seq_keys[n, 0]
                sj = seq_keys[n, 1]
                sk = seq_keys[n, 2]
        elif c == INTERIOR:
            stop = pack(seq_keys[n, 0], seq_keys[n, 1], seq_keys[n, 2])
            out, pos, v, _ = dda_walk(o0, o1, o2, D0, D1, D2, d, si, sj, sk, ei, ej, ek, stop, seq_t[n], out, pos)
            visited += v
            exterior = False
    if exterior:
        out, pos, v, _ = dda_walk(o0, o1, o2, D0, D1, D2, d, si, sj, sk, ei, ej, ek, -1, 1.0 + END_SLACK, out, pos)
        visited += v
    return out, pos, visited, segments


@njit(cache=True, nogil=True)
def truncated_rays(origin, ends, ray_pixels, cand_off, cand_idx, rec_keys, rec_cls, d, origin_free, r0, r1):
    """Truncated traversal of rays ``r0:r1``.

    Ray ``r`` reads its candidate list from pixel ``ray_pixels[r]`` of the
    CSR arrays ``cand_off``/``cand_idx``. Returns the same triple as
    ``classical_rays``.
    """
    o0, o1, o2 = origin[0], origin[1], origin[2]
    out = np.empty(1024, dtype=np.int64)
    pos = 0
    n = r1 - r0
    end_keys = np.empty(n, dtype=np.int64)
    visited = np.zeros(n, dtype=np.int64)
    for r in range(r0, r1):
        p0, p1, p2 = ends[r, 0], ends[r, 1], ends[r, 2]
        D0 = p0 - o0
        D1 = p1 - o1
        D2 = p2 - o2
        ei = floor_div(p0, d)
        ej = floor_div(p1, d)
        ek = floor_div(p2, d)
        end_keys[r - r0] = pack(ei, ej, ek)
        t_end, _ = voxel_slab(o0, o1, o2, D0, D1, D2, ei, ej, ek, d)
        px = ray_pixels[r]
        cand = cand_idx[cand_off[px] : cand_off[px + 1]]
        ts, idx = refine_candidates(o0, o1, o2, D0, D1, D2, d, t_end, cand, rec_keys, rec_cls)
        seq_keys = np.empty((idx.shape[0], 3), dtype=np.int64)
        seq_cls = np.empty(idx.shape[0], dtype=np.uint8)
        for q in range(idx.shape[0]):
            seq_keys[q, 0] = rec_keys[idx[q], 0]
            seq_keys[q, 1] = rec_keys[idx[q], 1]
            seq_keys[q, 2] = rec_keys[idx[q], 2]
            seq_cls[q] = rec_cls[idx[q]]
        out, pos, v, _ = walk_exterior(o0, o1, o2, p0, p1, p2, d, origin_free, ts, seq_keys, seq_cls, out, pos)
        visited[r - r0] = v
    return out[:pos], end_keys, visited


# --------------------------------------------------------------------------
# Depth image


@njit(cache=True, nogil=True)
def pixel_of(x, y, z, psi, width, height):
    r = math.sqrt(x * x + y * y + z * z)
    theta = math.atan2(y, x)
    if theta >= math.pi:
        theta -= 2.0 * math.pi
    s = z / r
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    phi = math.asin(s)
    u = np.int64(math.floor((theta + math.pi) / psi))
    v = np.int64(math.floor((phi + 0.5 * math.pi) / psi))
    u = min(max(u, 0), width - 1)
    v = min(max(v, 0), height - 1)
    return r, u, v


@njit(cache=True)
def rasterize_points(points, origin, psi, width, height):
    """Nearest return per pixel. Returns (depth, point index) flat arrays."""
    npix = width * height
    depth = np.full(npix, np.inf)
    index = np.full(npix, -1, dtype=np.int64)
    for n in range(points.shape[0]):
        x = points[n, 0] - origin[0]
        y = points[n, 1] - origin[1]
        z = points[n, 2] - origin[2]
        r, u, v = pixel_of(x, y, z, psi, width, height)
        px = v * width + u
        if r < depth[px]:
            depth[px] = r
            index[px] = n
    return depth, index


@njit(cache=True, nogil=True)
def footprint(cx, cy, cz, radius, psi, width, height, exact_cap):
    """Pixel rectangle covering a ball of ``radius`` centered at (cx, cy, cz).

    Returns (v0, v1, u0, u1, u2, u3): rows v0..v1 and the column ranges
    u0..u1 and u2..u3 (the second is empty, u2 > u3, unless the footprint
    wraps across the azimuth seam). Ranges are inclusive and hold every
    pixel whose half-open interval meets the angular extent. With
    ``exact_cap`` the bound is the true
    angular extent of the ball, widened in azimuth by 1/cos(elevation);
    otherwise the same arctan half-angle is applied to both axes.
    """
    r = math.sqrt(cx * cx + cy * cy + cz * cz)
    full_w = width - 1
    full_h = height - 1
    if r <= radius:
        return 0, full_h, 0, full_w, 1, 0
    theta = math.atan2(cy, cx)
    if theta >= math.pi:
        theta -= 2.0 * math.pi
    s = cz / r
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    phi = math.asin(s)
    if exact_cap:
        alpha = math.asin(radius / r)
    else:
        alpha = math.atan(radius / r)
    half_pi = 0.5 * math.pi
    v0 = np.int64(math.floor((phi - alpha + half_pi) / psi))
    v1 = np.int64(math.floor((phi + alpha + half_pi) / psi))
    v0 = min(max(v0, 0), full_h)
    v1 = min(max(v1, 0), full_h)
    if exact_cap:
        if abs(phi) + alpha >= half_pi:
            return v0, v1, 0, full_w, 1, 0
        beta = math.asin(min(1.0, math.sin(alpha) / math.cos(phi)))
    else:
        beta = alpha
    two_pi = 2.0 * math.pi
    if 2.0 * beta >= two_pi:
        return v0, v1, 0, full_w, 1, 0
    lo = theta - beta + math.pi
    hi = theta + beta + math.pi
    if lo < 0.0:
        u0 = np.int64(math.floor((lo + two_pi) / psi))
        u3 = np.int64(math.floor(hi / psi))
        u0 = min(max(u0, 0), full_w)
        u3 = min(max(u3, 0), full_w)
        if u3 >= u0:
            return v0, v1, 0, full_w, 1, 0
        return v0, v1, u0, full_w, 0, u3
    if hi >= two_pi:
        u0 = np.int64(math.floor(lo / psi))
        u3 = np.int64(math.floor((hi - two_pi) / psi))
        u0 = min(max(u0, 0), full_w)
        u3 = min(max(u3, 0), full_w)
        if u3 >= u0:
            return v0, v1, 0, full_w, 1, 0
        return v0, v1, u0, full_w, 0, u3
    u0 = min(max(np.int64(math.floor(lo / psi)), 0), full_w)
    u1 = min(max(np.int64(math.floor(hi / psi)), 0), full_w)
    return v0, v1, u0, u1, 1, 0


@njit(cache=True)
def build_candidates(rec_keys, origin, d, psi, width, height, depth, radius, margin, exact_cap):
    """CSR pixel -> candidate record indices.

    A record lands in every non-empty pixel of its footprint whose return is
    farther than the voxel center minus ``margin``. Within a pixel the
    candidates keep the order of ``rec_keys``.
    """
    npix = width * height
    # Occlusion limit per pixel; empty pixels get a limit nothing can pass.
    limit = np.empty(npix, dtype=np.float64)
    for px in range(npix):
        limit[px] = depth[px] + margin if depth[px] < np.inf else -1.0
    counts = np.zeros(npix + 1, dtype=np.int64)
    n = rec_keys.shape[0]
    ranges = np.empty((n, 6), dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    for q in range(n):
        cx = (rec_keys[q, 0] + 0.5) * d - origin[0]
        cy = (rec_keys[q, 1] + 0.5) * d - origin[1]
        cz = (rec_keys[q, 2] + 0.5) * d - origin[2]
        rc = math.sqrt(cx * cx + cy * cy + cz * cz)
        dist[q] = rc
        v0, v1, u0, u1, u2, u3 = footprint(cx, cy, cz, radius, psi, width, height, exact_cap)
        ranges[q, 0] = v0
        ranges[q, 1] = v1
        ranges[q, 2] = u0
        ranges[q, 3] = u1
        ranges[q, 4] = u2
        ranges[q, 5] = u3
        for v in range(v0, v1 + 1):
            base = v * width
            for u in range(u0, u1 + 1):
                if rc < limit[base + u]:
                    counts[base + u + 1] += 1
            for u in range(u2, u3 + 1):
                if rc < limit[base + u]:
                    counts[base + u + 1] += 1
    off = np.cumsum(counts)
    fill = off[:-1].copy()
    idx = np.empty(off[-1], dtype=np.int64)
    for q in range(n):
        rc = dist[q]
        for v in range(ranges[q, 0], ranges[q, 1] + 1):
            base = v * width
            for u in range(ranges[q, 2], ranges[q, 3] + 1):
                if rc < limit[base + u]:
                    idx[fill[base + u]] = q
                    fill[base + u] += 1
            for u in range(ranges[q, 4], ranges[q, 5] + 1):
                if rc < limit[base + u]:
                    idx[fill[base + u]] = q
                    fill[base + u] += 1
    return off, idx


# --------------------------------------------------------------------------
# Merging update verdicts


@njit(cache=True)
def merge_verdicts(free_keys, end_keys):
    """Deduplicate traversal results with occupied winning over free.

    Returns sorted unique keys and their states.
    """
    fk = np.unique(free_keys)
    ek = np.unique(end_keys)
    out_k = np.empty(fk.shape[0] + ek.shape[0], dtype=np.int64)
    out_s = np.empty(out_k.shape[0], dtype=np.int8)
    a = 0
    b = 0
    m = 0
    while a < fk.shape[0] or b < ek.shape[0]:
        if b == ek.shape[0] or (a < fk.shape[0] and fk[a] < ek[b]):
            out_k[m] = fk[a]
            out_s[m] = FREE
            a += 1
        else:
            if a < fk.shape[0] and fk[a] == ek[b]:
                a += 1
            out_k[m] = ek[b]
            out_s[m] = OCCUPIED
            b += 1
        m += 1
    return out_k[:m], out_s[:m]


# --------------------------------------------------------------------------
# Boundary map update


@njit(cache=True, nogil=True)
def _lookup_sorted(keys, key):
    n = np.searchsorted(keys, key)
    if n < keys.shape[0] and keys[n] == key:
        return n
    return -1


@njit(cache=True)
def effective_updates(l_keys, l_states, mkeys, cls, mask, axis):
    """Drop update entries that leave a voxel's state unchanged.

    Returns (keys, states, corrupt flag).
    """
    pre = query_many(mkeys, cls, mask, l_keys, axis)
    keep = np.zeros(l_keys.shape[0], dtype=np.bool_)
    corrupt = False
    for n in range(l_keys.shape[0]):
        if pre[n] == CORRUPT:
            corrupt = True
        keep[n] = pre[n] != l_states[n]
    return l_keys[keep], l_states[keep], corrupt


@njit(cache=True)
def inflate(keys):
    """Sorted unique ``keys`` (ascending, unique) plus their six neighbors.

    Each shifted copy ``keys + delta`` is ascending, so a 7-way merge
    produces the union without sorting.
    """
    n = keys.shape[0]
    deltas = np.zeros(7, dtype=np.int64)
    deltas[1:] = NEIGHBOR_DELTAS
    heads = np.zeros(7, dtype=np.int64)
    out = np.empty(7 * n, dtype=np.int64)
    m = 0
    big = np.int64(np.iinfo(np.int64).max)
    while True:
        best = big
        for a in range(7):
            if heads[a] < n:
                v = keys[heads[a]] + deltas[a]
                if v < best:
                    best = v
        if best == big:
            break
        out[m] = best
        m += 1
        for a in range(7):
            if heads[a] < n and keys[heads[a]] + deltas[a] == best:
                heads[a] += 1
    return out[:m]


@njit(cache=True)
def recompute_status(f_keys, l_keys, l_states, mkeys, cls, mask, axis):
    """Boundary status of every voxel in ``f_keys`` after applying the update.

    States come from the update set when present, else from the map as it was
    before the update. The whole snapshot over F and its neighbors is taken
    before any status is computed. Returns (record keys, classes, masks,
    corrupt flag) for the voxels that are boundary voxels.
    """
    domain = inflate(f_keys)
    snap = query_many(mkeys, cls, mask, domain, axis)
    corrupt = False
    q = 0
    for n in range(domain.shape[0]):
        while q < l_keys.shape[0] and l_keys[q] < domain[n]:
            q += 1
        if q < l_keys.shape[0] and l_keys[q] == domain[n]:
            snap[n] = l_states[q]
        elif snap[n] == CORRUPT:
            corrupt = True
    n = f_keys.shape[0]
    out_k = np.empty(n, dtype=np.int64)
    out_c = np.empty(n, dtype=np.uint8)
    out_m = np.empty(n, dtype=np.uint8)
    nb = np.empty(6, dtype=np.int8)
    # f_keys + delta is ascending for each offset, so one forward merge per
    # offset locates every neighbor in the domain.
    pos = np.empty((7, n), dtype=np.int64)
    for a in range(7):
        delta = 0 if a == 6 else NEIGHBOR_DELTAS[a]
        p = 0
        for q in range(n):
            target = f_keys[q] + delta
            while domain[p] < target:
                p += 1
            pos[a, q] = p
    m = 0
    for q in range(n):
        key = f_keys[q]
        s = snap[pos[6, q]]
        for a in range(6):
            nb[a] = snap[pos[a, q]]
        c, bits = boundary_status(s, nb)
        if c != NOT_BOUNDARY:
            out_k[m] = key
            out_c[m] = c
            out_m[m] = bits
            m += 1
    return out_k[:m], out_c[:m], out_m[:m], corrupt


@njit(cache=True)
def sorted_member(haystack, needles):
    """Boolean mask of ``needles`` found in the sorted array ``haystack``."""
    out = np.zeros(needles.shape[0], dtype=np.bool_)
    if is_sorted(needles):
        p = 0
        for n in range(needles.shape[0]):
            while p < haystack.shape[0] and haystack[p] < needles[n]:
                p += 1
            out[n] = p < haystack.shape[0] and haystack[p] == needles[n]
        return out
    for n in range(needles.shape[0]):
        out[n] = _lookup_sorted(haystack, needles[n]) >= 0
    return out


# --------------------------------------------------------------------------
# Dense grid


@njit(cache=True)
def dense_apply(store, keys, states):
    for n in range(keys.shape[0]):
        store[keys[n]] = states[n]


@njit(cache=True)
def dense_lookup(store, keys):
    out = np.zeros(keys.shape[0], dtype=np.int8)
    for n in range(keys.shape[0]):
        key = keys[n]
        if key in store:
            out[n] = store[key]
    return out


@njit(cache=True)
def dense_items(store):
    n = len(store)
    keys = np.empty(n, dtype=np.int64)
    states = np.empty(n, dtype=np.int8)
    m = 0
    for key, s in store.items():
        keys[m] = key
        states[m] = s
        m += 1
    order = np.argsort(keys)
    return keys[order], states[order]


@njit(cache=True)
def _merge_states(keys, states, queries):
    """States of ascending ``queries`` looked up in ascending ``keys``."""
    out = np.empty(queries.shape[0], dtype=np.int8)
    r = 0
    for n in range(queries.shape[0]):
        q = queries[n]
        while r < keys.shape[0] and keys[r] < q:
            r += 1
        out[n] = states[r] if r < keys.shape[0] and keys[r] == q else UNKNOWN
    return out


@njit(cache=True)
def dense_audit(store):
    """Brute-force boundary classification of a dense grid.

    Every stored voxel and every unstored neighbor of a Free voxel is
    classified from its six neighbor states. Returns sorted (keys, classes, masks).
    """
    stored, states = dense_items(store)
    free = stored[states == FREE]
    extra = np.empty(free.shape[0] * 6, dtype=np.int64)
    m = 0
    for a in range(6):
        shifted = free + NEIGHBOR_DELTAS[a]
        present = _merge_states(stored, np.ones(stored.shape[0], dtype=np.int8), shifted)
        for n in range(shifted.shape[0]):
            if present[n] == 0:
                extra[m] = shifted[n]
                m += 1
    cand = np.unique(np.concatenate((stored, extra[:m])))
    own = _merge_states(stored, states, cand)
    nbs = np.empty((6, cand.shape[0]), dtype=np.int8)
    for a in range(6):
        nbs[a] = _merge_states(stored, states, cand + NEIGHBOR_DELTAS[a])
    out_k = np.empty(cand.shape[0], dtype=np.int64)
    out_c = np.empty(cand.shape[0], dtype=np.uint8)
    out_m = np.empty(cand.shape[0], dtype=np.uint8)
    nb = np.empty(6, dtype=np.int8)
    q = 0
    for n in range(cand.shape[0]):
        for a in range(6):
            nb[a] = nbs[a, n]
        c, bits = boundary_status(own[n], nb)
        if c != NOT_BOUNDARY:
            out_k[q] = cand[n]
            out_c[q] = c
            out_m[q] = bits
            q += 1
    return out_k[:q], out_c[:q], out_m[:q]


@njit(cache=True)
def box_keys(lo, hi):
    """Packed keys of every voxel in the inclusive index box lo..hi."""
    ni = hi[0] - lo[0] + 1
    nj = hi[1] - lo[1] + 1
    nk = hi[2] - lo[2] + 1
    out = np.empty(ni * nj * nk, dtype=np.int64)
    m = 0
    for i in range(lo[0], hi[0] + 1):
        for j in range(lo[1], hi[1] + 1):
            for k in range(lo[2], hi[2] + 1):
                out[m] = pack(i, j, k)
                m += 1
    return out
