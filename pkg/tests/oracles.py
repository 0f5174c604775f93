"""Slow, independent reference implementations used to check the package.

Nothing here imports from sgloop, so a bug in a package routine cannot
leak into its oracle. Inputs are plain tuples or duck-typed vertices.
"""

import itertools
import math

import numpy as np


def weighted_centroid(parts):
    """parts: [(point_count, (x, y, z))]"""
    total = sum(n for n, _ in parts)
    return tuple(sum(n * p[axis] for n, p in parts) / total for axis in range(3))


def edges(vertices, obj_obj=2.0, perp=0.5, wall_dist=3.0, wall_angle=45.0):
    """Pairwise rule check, one pair at a time. ``vertices`` are InstanceVertex values."""
    out = set()
    for a, b in itertools.combinations(sorted(vertices, key=lambda v: v.id), 2):
        ka, kb = a.kind.value, b.kind.value
        if "floor" in (ka, kb):
            # xy footprints overlap strictly on both axes
            ok = all(
                abs(a.centroid[axis] - b.centroid[axis]) < (a.bbox[axis] + b.bbox[axis]) / 2 for axis in (0, 1)
            )
        elif ka == "object" and kb == "object":
            ok = math.dist(a.centroid, b.centroid) < obj_obj
        elif ka == "wall" and kb == "wall":
            cos = abs(sum(x * y for x, y in zip(a.normal, b.normal)))
            angle = math.degrees(math.acos(min(1.0, cos)))
            ok = math.dist(a.centroid, b.centroid) < wall_dist and angle > wall_angle
        else:
            w, o = (a, b) if ka == "wall" else (b, a)
            d = sum(n * (po - pw) for n, po, pw in zip(w.normal, o.centroid, w.centroid))
            ok = abs(d) < perp
        if ok:
            out.add((a.id, b.id))
    return out


def simple_paths(adjacency, labels, blocked, start, k):
    """All label rows of simple paths with k vertices from ``start``, by brute-force permutation."""
    if start in blocked:
        return []
    others = [v for v in adjacency if v != start and v not in blocked]
    rows = []
    for tail in itertools.permutations(others, k - 1):
        path = (start,) + tail
        if all(path[n + 1] in adjacency[path[n]] for n in range(k - 1)):
            rows.append(tuple(labels[v] for v in path))
    return sorted(rows)


def multiset_overlap(rows_i, rows_j):
    pool = list(rows_j)
    hits = 0
    for r in rows_i:
        if r in pool:
            pool.remove(r)
            hits += 1
    return hits


def box_diagonal(b):
    return math.sqrt(b[0] ** 2 + b[1] ** 2 + b[2] ** 2)


def volume_similarity(b_i, b_j):
    li, lj = box_diagonal(b_i), box_diagonal(b_j)
    return 1.0 - abs(li - lj) / max(li, lj)


def combined_score(s_r, s_n, s_v, lr=1.0, ln=0.5, lv=0.6):
    return (lr * s_r + ln * s_n + lv * s_v) / (lr + ln + lv)


def mutual_max(S, tau, rtol=1e-9):
    S = [list(map(float, row)) for row in S]
    picks = set()
    for i, row in enumerate(S):
        for j, x in enumerate(row):
            col = [S[r][j] for r in range(len(S))]
            row_rivals = [y for jj, y in enumerate(row) if jj != j]
            col_rivals = [y for ii, y in enumerate(col) if ii != i]
            strict = all(x - y > rtol * abs(x) for y in row_rivals + col_rivals)
            if strict and x > tau:
                picks.add((i, j, x))
    return picks


def verified_walls(pairs, adj_a, adj_i, is_wall):
    """Smallest set of wall pairs closed under "supported by a kept pair", by subset search.

    ``pairs`` are (active, inactive) tuples; non-wall pairs are always kept.
    """
    base = {p for p in pairs if not is_wall(p)}
    walls = sorted(p for p in pairs if is_wall(p))

    def supported(p, kept):
        return any((u, w) in kept for u in adj_a[p[0]] for w in adj_i[p[1]])

    closed = []
    for size in range(len(walls) + 1):
        for subset in itertools.combinations(walls, size):
            kept = base | set(subset)
            rest = [p for p in walls if p not in subset]
            # closed: no wall pair left outside is supported by what is kept
            if any(supported(p, kept) for p in rest):
                continue
            closed.append(set(subset))
    # closed sets are intersection-stable, so the smallest one is the least fixed point
    return base | min(closed, key=len)


def kabsch_yaw(a, b):
    """Yaw and translation taking b onto a, via SVD of the xy cross-covariance."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    ca, cb = a.mean(0), b.mean(0)
    H = (b[:, :2] - cb[:2]).T @ (a[:, :2] - ca[:2])
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R2 = Vt.T @ D @ U.T
    yaw = math.atan2(R2[1, 0], R2[0, 0])
    R = np.array([[math.cos(yaw), -math.sin(yaw), 0], [math.sin(yaw), math.cos(yaw), 0], [0, 0, 1]])
    return yaw, ca - R @ cb


def neighbor_rows(owner_xy, neighbors, q, gap_max):
    """neighbors: [(label, (x, y))]; cyclic windows in anticlockwise order, hand-rolled."""
    if not neighbors:
        return []
    ang = []
    for label, (x, y) in neighbors:
        t = math.degrees(math.atan2(y - owner_xy[1], x - owner_xy[0]))
        ang.append((t, math.hypot(x - owner_xy[0], y - owner_xy[1]), label))
    ang.sort()
    m = len(ang)
    L = min(q, m)
    rows = []
    for s in range(m):
        window = [ang[(s + t) % m] for t in range(L)]
        gaps = []
        for t in range(L - 1):
            d = window[t + 1][0] - window[t][0]
            gaps.append(d + 360.0 if d < 0 else d)
        if all(g <= gap_max for g in gaps):
            rows.append(tuple(w[2] for w in window))
    return sorted(rows)
