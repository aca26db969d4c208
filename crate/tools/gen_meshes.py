#!/usr/bin/env python3
"""Generate the committed MSH 2.2 mesh fixtures.

Unstructured triangulations come from a force-based point relaxation
(DistMesh style) followed by a Delaunay triangulation. Initial points are
drawn from a fixed seed, so rerunning with the same numpy/scipy produces the
same files.

    python3 tools/gen_meshes.py [output_dir]

Boundary tags:
    1 bottom, 2 right, 3 top, 4 left, 5 inflow slots on the left side,
    6 obstacle circles.
"""

import sys
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay

SEED = 20240611

# obstacle channel
WIDTH, HEIGHT = 8.0, 4.5
RADIUS = 0.25
ONE_CYLINDER = [(2.25, 2.25)]
THREE_CYLINDERS = [(2.25, 2.25), (4.0, 1.25), (4.0, 3.25)]
SLOTS = [(1.5, 2.0), (2.5, 3.0)]


def drectangle(p, x0, x1, y0, y1):
    return -np.minimum(np.minimum(np.minimum(-y0 + p[:, 1], y1 - p[:, 1]), -x0 + p[:, 0]), x1 - p[:, 0])


def dcircle(p, cx, cy, r):
    return np.hypot(p[:, 0] - cx, p[:, 1] - cy) - r


def distmesh(fd, fh, h0, bbox, pfix, seed, max_iter=2000):
    dptol, ttol, fscale, deltat = 1e-3, 0.1, 1.2, 0.2
    geps = 1e-3 * h0
    deps = np.sqrt(np.finfo(float).eps) * h0
    (xmin, ymin), (xmax, ymax) = bbox
    xs = np.arange(xmin, xmax + 1e-12, h0)
    ys = np.arange(ymin, ymax + 1e-12, h0 * np.sqrt(3) / 2)
    x, y = np.meshgrid(xs, ys)
    x[1::2, :] += h0 / 2
    p = np.column_stack([x.ravel(), y.ravel()])
    p = p[fd(p) < -geps]
    r0 = 1.0 / fh(p) ** 2
    rng = np.random.default_rng(seed)
    p = p[rng.random(len(p)) < r0 / r0.max()]
    pfix = np.asarray(pfix, dtype=float)
    if len(pfix):
        keep = np.min(np.hypot(p[:, None, 0] - pfix[None, :, 0], p[:, None, 1] - pfix[None, :, 1]), axis=1) > 0.5 * h0
        p = np.vstack([pfix, p[keep]])
    nfix = len(pfix)
    pold = np.full_like(p, np.inf)
    bars = None
    for _ in range(max_iter):
        if np.max(np.hypot(*(p - pold).T)) / h0 > ttol:
            pold = p.copy()
            t = Delaunay(p).simplices
            centroid = p[t].mean(axis=1)
            t = t[fd(centroid) < -geps]
            bars = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [0, 2]]])
            bars = np.unique(np.sort(bars, axis=1), axis=0)
        barvec = p[bars[:, 0]] - p[bars[:, 1]]
        length = np.hypot(barvec[:, 0], barvec[:, 1])
        hbars = fh((p[bars[:, 0]] + p[bars[:, 1]]) / 2)
        l0 = hbars * fscale * np.sqrt(np.sum(length**2) / np.sum(hbars**2))
        force = np.maximum(l0 - length, 0)
        fvec = (force / length)[:, None] * barvec
        ftot = np.zeros_like(p)
        np.add.at(ftot, bars[:, 0], fvec)
        np.add.at(ftot, bars[:, 1], -fvec)
        ftot[:nfix] = 0
        p = p + deltat * ftot
        d = fd(p)
        out = d > 0
        if np.any(out):
            q = p[out]
            gx = (fd(q + [deps, 0]) - d[out]) / deps
            gy = (fd(q + [0, deps]) - d[out]) / deps
            p[out] -= np.column_stack([d[out] * gx, d[out] * gy])
        inside = d < -geps
        if np.max(np.hypot(*(deltat * ftot[inside]).T)) / h0 < dptol:
            break
    t = Delaunay(p).simplices
    t = t[fd(p[t].mean(axis=1)) < -geps]
    used = np.unique(t)
    remap = -np.ones(len(p), dtype=int)
    remap[used] = np.arange(len(used))
    p, t = p[used], remap[t]
    # counter-clockwise
    a, b, c = p[t[:, 0]], p[t[:, 1]], p[t[:, 2]]
    cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    t[cross < 0] = t[cross < 0][:, [0, 2, 1]]
    return p, t


def boundary_edges(t):
    edges = np.sort(np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]]), axis=1)
    uniq, counts = np.unique(edges, axis=0, return_counts=True)
    return uniq[counts == 1]


def min_angle_deg(p, t):
    worst = 180.0
    for i in range(3):
        a, b, c = p[t[:, i]], p[t[:, (i + 1) % 3]], p[t[:, (i + 2) % 3]]
        u, v = b - a, c - a
        cos = np.sum(u * v, axis=1) / (np.hypot(*u.T) * np.hypot(*v.T))
        worst = min(worst, np.degrees(np.arccos(np.clip(cos, -1, 1))).min())
    return worst


def write_msh(path, p, t, tagged_edges):
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(len(p))]
    lines += [f"{i + 1} {x:.16e} {y:.16e} 0" for i, (x, y) in enumerate(p)]
    lines += ["$EndNodes", "$Elements", str(len(tagged_edges) + len(t))]
    eid = 1
    for (a, b), tag in tagged_edges:
        lines.append(f"{eid} 1 2 {tag} {tag} {a + 1} {b + 1}")
        eid += 1
    for a, b, c in t:
        lines.append(f"{eid} 2 2 100 100 {a + 1} {b + 1} {c + 1}")
        eid += 1
    lines.append("$EndElements")
    Path(path).write_text("\n".join(lines) + "\n")


def tag_box_edges(p, edges, width, height, classify_left, obstacle_tag=None):
    tol = 1e-9
    tagged = []
    for a, b in edges:
        mx, my = (p[a] + p[b]) / 2
        if abs(p[a][1]) < tol and abs(p[b][1]) < tol:
            tag = 1
        elif abs(p[a][0] - width) < tol and abs(p[b][0] - width) < tol:
            tag = 2
        elif abs(p[a][1] - height) < tol and abs(p[b][1] - height) < tol:
            tag = 3
        elif abs(p[a][0]) < tol and abs(p[b][0]) < tol:
            tag = classify_left(my)
        elif obstacle_tag is not None:
            tag = obstacle_tag
        else:
            raise ValueError(f"edge at ({mx}, {my}) is not on the boundary")
        tagged.append(((a, b), tag))
    return tagged


def unit_square(n, seed):
    h0 = 1.0 / n
    fd = lambda q: drectangle(q, 0, 1, 0, 1)
    fh = lambda q: np.ones(len(q))
    p, t = distmesh(fd, fh, h0, ((0, 0), (1, 1)), [(0, 0), (1, 0), (0, 1), (1, 1)], seed)
    return p, t, tag_box_edges(p, boundary_edges(t), 1.0, 1.0, lambda y: 4)


def obstacle_channel(centers, slots, seed, h_near=0.05, h_far=0.2, grading=0.25):
    def fd(q):
        d = drectangle(q, 0, WIDTH, 0, HEIGHT)
        for cx, cy in centers:
            d = np.maximum(d, -dcircle(q, cx, cy, RADIUS))
        return d

    def fh(q):
        dist = np.min([dcircle(q, cx, cy, RADIUS) for cx, cy in centers], axis=0)
        return np.minimum(h_near + grading * np.maximum(dist, 0), h_far)

    pfix = [(0, 0), (WIDTH, 0), (WIDTH, HEIGHT), (0, HEIGHT)]
    pfix += [(0, y) for lo, hi in slots for y in (lo, hi)]
    p, t = distmesh(fd, fh, h_near, ((0, 0), (WIDTH, HEIGHT)), pfix, seed)

    def left(y):
        return 5 if any(lo < y < hi for lo, hi in slots) else 4

    return p, t, tag_box_edges(p, boundary_edges(t), WIDTH, HEIGHT, left, obstacle_tag=6)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parent.parent / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    jobs = [(f"square_h{n}.msh", lambda n=n: unit_square(n, SEED + n)) for n in (10, 20, 40, 80)]
    jobs.append(("cylinder1.msh", lambda: obstacle_channel(ONE_CYLINDER, [], SEED + 1)))
    jobs.append(("cylinder3.msh", lambda: obstacle_channel(THREE_CYLINDERS, SLOTS, SEED + 3)))
    for name, make in jobs:
        p, t, tagged = make()
        write_msh(out / name, p, t, tagged)
        print(f"{name}: {len(p)} nodes, {len(t)} triangles, min angle {min_angle_deg(p, t):.1f} deg")


if __name__ == "__main__":
    main()
