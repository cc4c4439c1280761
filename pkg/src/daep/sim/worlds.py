"""Procedurally generated benchmark worlds.

Each builder approximates one benchmark world by bounding volume and walker
count; geometry is a stand-in, not a copy of the original meshes. All solid
coordinates are multiples of 0.2 m so solids align with the map grid.
Builders are deterministic: the layout RNG is seeded per world.
"""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from .scenario import ObstaclePath, Scenario

# name -> (target volume m^3, walker count)
TABLE = {
    "cafe": (510, 2),
    "maze": (865, 5),
    "apartment": (1627, 12),
    "tunnel": (1100, 2),
    "field": (1440, 8),
    "auditorium": (798, 3),
    "exhibition": (450, 22),
    "crosswalks": (450, 4),
    "patrol": (800, 8),
    "village": (40057, 15),
}


def _q(v: float) -> float:
    """Snap to the 0.2 m lattice."""
    return round(round(v / 0.2) * 0.2, 6)


class _Builder:
    def __init__(self, name: str, size, layout_seed: int):
        self.name = name
        self.size = tuple(float(s) for s in size)
        self.boxes: list[tuple] = []
        self.paths: list[ObstaclePath] = []
        self.starts: list[tuple] = []
        self.rng = np.random.default_rng(layout_seed)

    def box(self, x0, y0, z0, x1, y1, z1):
        b = tuple(_q(v) for v in (x0, y0, z0, x1, y1, z1))
        if b[3] > b[0] and b[4] > b[1] and b[5] > b[2]:
            self.boxes.append(b)

    def outer_walls(self, t=0.2):
        X, Y, Z = self.size
        self.box(0, 0, 0, X, t, Z)
        self.box(0, Y - t, 0, X, Y, Z)
        self.box(0, 0, 0, t, Y, Z)
        self.box(X - t, 0, 0, X, Y, Z)

    def walker(self, waypoints, mode="back-and-forth", speed=0.35):
        self.paths.append(ObstaclePath([(x, y, 0.0) for x, y in waypoints], mode=mode, speed=speed))

    def start(self, x, y, z=0.2):
        self.starts.append((x, y, z))

    def blocked(self, x, y, clearance=0.5) -> bool:
        for b in self.boxes:
            if b[0] - clearance < x < b[3] + clearance and b[1] - clearance < y < b[4] + clearance and b[2] < 2.0:
                return True
        return False

    def build(self) -> Scenario:
        sc = Scenario(self.name, (0.0, 0.0, 0.0), self.size, 0.2, np.asarray(self.boxes).reshape(-1, 6),
                      self.paths, self.starts, seed=0)
        sc.validate()
        return sc


def empty_box() -> Scenario:
    b = _Builder("empty-box", (8.0, 8.0, 3.0), 0)
    for x, y in [(4.0, 4.0), (2.0, 2.0), (6.0, 2.0), (2.0, 6.0), (6.0, 6.0)]:
        b.start(x, y)
    return b.build()


def cafe() -> Scenario:
    b = _Builder("cafe", (15.0, 14.2, 2.4), 11)
    b.outer_walls()
    # counter along the north wall and a 3x3 block of tables
    b.box(2.0, 12.2, 0, 11.0, 13.0, 1.0)
    for i in range(3):
        for j in range(3):
            x, y = 2.6 + 4.0 * i, 2.6 + 3.2 * j
            b.box(x, y, 0, x + 1.2, y + 1.2, 0.8)
    b.walker([(1.2, 1.4), (13.8, 1.4), (13.8, 11.4), (1.2, 11.4)], mode="loop")
    b.walker([(5.0, 1.4), (5.0, 11.4)])
    for x, y in [(1.4, 6.0), (12.4, 5.6), (8.0, 11.0), (12.8, 12.6), (3.2, 12.4 - 1.4)]:
        b.start(x, y)
    return b.build()


def maze() -> Scenario:
    cw, ch, cols, rows = 3.0, 4.0, 6, 5
    b = _Builder("maze", (cw * cols, ch * rows, 2.4), 7)
    Z = 2.4
    b.outer_walls()
    # carve a spanning tree, then open a few extra passages for loops
    open_links = set()
    seen = {(0, 0)}
    stack = [(0, 0)]
    while stack:
        c = stack[-1]
        nbrs = [(c[0] + dx, c[1] + dy) for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1))]
        nbrs = [n for n in nbrs if 0 <= n[0] < cols and 0 <= n[1] < rows and n not in seen]
        if not nbrs:
            stack.pop()
            continue
        n = nbrs[int(b.rng.integers(len(nbrs)))]
        open_links.add(frozenset((c, n)))
        seen.add(n)
        stack.append(n)
    for i in range(cols):
        for j in range(rows):
            for n in ((i + 1, j), (i, j + 1)):
                if n[0] < cols and n[1] < rows and b.rng.random() < 0.3:
                    open_links.add(frozenset(((i, j), n)))
    for i in range(cols - 1):
        for j in range(rows):
            if frozenset(((i, j), (i + 1, j))) not in open_links:
                x = (i + 1) * cw
                b.box(x, j * ch, 0, x + 0.2, (j + 1) * ch + 0.2, Z)
    for i in range(cols):
        for j in range(rows - 1):
            if frozenset(((i, j), (i, j + 1))) not in open_links:
                y = (j + 1) * ch
                b.box(i * cw, y, 0, (i + 1) * cw + 0.2, y + 0.2, Z)

    def center(c):
        return (c[0] * cw + 1.6, c[1] * ch + 2.1)

    def walk(start, steps):
        path = [start]
        prev = None
        for _ in range(steps):
            c = path[-1]
            nbrs = [n for n in ((c[0] + 1, c[1]), (c[0] - 1, c[1]), (c[0], c[1] + 1), (c[0], c[1] - 1))
                    if frozenset((c, n)) in open_links and n != prev and n not in path]
            if not nbrs:
                break
            prev = c
            path.append(nbrs[int(b.rng.integers(len(nbrs)))])
        return path

    used = set()
    for s in [(1, 1), (4, 1), (2, 3), (5, 4), (0, 4)]:
        cells = walk(s, 5)
        used.update(cells)
        b.walker([center(c) for c in cells])
    free_cells = [(i, j) for i in range(cols) for j in range(rows) if (i, j) not in used]
    free_cells += sorted(used)
    for c in free_cells[:5]:
        x, y = center(c)
        b.start(x + 0.6, y + 0.6)
    return b.build()


def apartment() -> Scenario:
    X = Y = 26.0
    Z = 2.4
    b = _Builder("apartment", (X, Y, Z), 3)
    b.outer_walls()
    walls = [8.6, 17.2]
    centers = [4.4, 13.0, 21.6]
    for w in walls:
        for k, c in enumerate(centers):
            lo = 0.0 if k == 0 else walls[k - 1]
            hi = Y if k == 2 else walls[k]
            # wall along y at x=w with a 1.6 m door centred on the room
            b.box(w, lo, 0, w + 0.2, c - 0.8, Z)
            b.box(w, c + 0.8, 0, w + 0.2, hi, Z)
            b.box(lo, w, 0, c - 0.8, w + 0.2, Z)
            b.box(c + 0.8, w, 0, hi, w + 0.2, Z)
    rooms_lo = [0.2, 8.8, 17.4]
    rooms_hi = [8.6, 17.2, 25.8]
    for i in range(3):
        for j in range(3):
            x0, x1, y0, y1 = rooms_lo[i], rooms_hi[i], rooms_lo[j], rooms_hi[j]
            b.box(x0 + 0.4, y0 + 0.4, 0, x0 + 2.0, y0 + 1.4, 0.8)
            b.box(x1 - 1.4, y1 - 2.4, 0, x1 - 0.4, y1 - 0.4, 1.8)
    k = 0
    for j in range(3):
        for i in range(2):
            off = 0.4 if k % 2 else -0.4
            y = centers[j] + off
            b.walker([(centers[i] - 1.0, y), (centers[i + 1] + 1.0, y)])
            k += 1
    for i in range(3):
        for j in range(2):
            off = 0.4 if k % 2 else -0.4
            x = centers[i] + off
            b.walker([(x, centers[j] - 1.0), (x, centers[j + 1] + 1.0)])
            k += 1
    for x, y in [(2.6, 6.4), (15.4, 6.4), (6.2, 15.0), (19.4, 15.0), (10.6, 23.6)]:
        b.start(x, y)
    return b.build()


def tunnel() -> Scenario:
    X, Y, Z = 50.0, 8.4, 2.6
    b = _Builder("tunnel", (X, Y, Z), 5)
    b.outer_walls()
    for k in range(6):
        x = 5.0 + 7.6 * k
        if k % 2:
            b.box(x, 0.2, 0, x + 1.6, 3.0, Z)
        else:
            b.box(x, 5.4, 0, x + 1.6, 8.2, Z)
    b.walker([(2.0, 4.2), (48.0, 4.2)])
    b.walker([(30.0, 4.6), (45.0, 4.6)])
    for x, y in [(2.0, 2.0), (12.0, 6.4), (24.4, 2.0), (35.0, 6.4), (47.0, 2.2)]:
        b.start(x, y)
    return b.build()


def field() -> Scenario:
    X, Y, Z = 30.0, 24.0, 2.0
    b = _Builder("field", (X, Y, Z), 13)
    lanes_y = [3.0, 9.0, 15.0, 21.0]
    lanes_x = [5.0, 15.0, 25.0]
    n = 0
    while n < 18:
        x = float(b.rng.uniform(1.0, X - 3.0))
        y = float(b.rng.uniform(1.0, Y - 3.0))
        w, d = 1.2 + 0.4 * int(b.rng.integers(3)), 1.2 + 0.4 * int(b.rng.integers(3))
        if any(abs(y + d / 2 - ly) < d / 2 + 1.0 for ly in lanes_y):
            continue
        if any(abs(x + w / 2 - lx) < w / 2 + 1.0 for lx in lanes_x):
            continue
        b.box(x, y, 0, x + w, y + d, 1.2)
        n += 1
    for ly in lanes_y:
        b.walker([(1.0, ly), (29.0, ly)])
    for lx in lanes_x:
        b.walker([(lx, 1.0), (lx, 23.0)])
    b.walker([(5.0, 3.0), (25.0, 3.0), (25.0, 21.0), (5.0, 21.0)], mode="loop")
    for x, y in [(10.0, 12.0), (20.0, 6.0), (2.0, 18.0), (28.0, 12.0), (10.0, 6.0)]:
        b.start(x, y)
    _clear_starts(b)
    return b.build()


def auditorium() -> Scenario:
    X, Y, Z = 19.0, 14.0, 3.0
    b = _Builder("auditorium", (X, Y, Z), 17)
    b.outer_walls()
    b.box(1.0, 11.6, 0, 18.0, 13.8, 1.0)  # stage
    for r in range(5):
        y = 2.0 + 1.8 * r
        h = 0.6 + 0.2 * r
        b.box(2.4, y, 0, 8.2, y + 0.6, h)
        b.box(10.8, y, 0, 16.6, y + 0.6, h)
    b.walker([(9.5, 1.0), (9.5, 10.8)])
    b.walker([(1.2, 1.0), (1.2, 10.8), (17.8, 10.8), (17.8, 1.0)], mode="loop")
    b.walker([(3.0, 10.8), (16.0, 10.8)])
    for x, y in [(9.0, 5.0), (4.0, 1.0), (15.0, 1.0), (5.0, 10.4), (14.0, 10.4)]:
        b.start(x, y)
    return b.build()


def exhibition() -> Scenario:
    X, Y, Z = 15.0, 12.4, 2.4
    b = _Builder("exhibition", (X, Y, Z), 19)
    b.outer_walls()
    b.box(5.0, 4.0, 0, 10.0, 4.2, 2.0)
    b.box(5.0, 8.2, 0, 10.0, 8.4, 2.0)
    # visitors pacing along the walls at poster distance
    spots = []
    for k in range(6):
        spots.append(((1.0 + 2.2 * k, 0.8), (2.6 + 2.2 * k, 0.8)))
        spots.append(((1.0 + 2.2 * k, 11.6), (2.6 + 2.2 * k, 11.6)))
    for k in range(4):
        spots.append(((0.8, 1.8 + 2.4 * k), (0.8, 3.2 + 2.4 * k)))
        spots.append(((14.2, 1.8 + 2.4 * k), (14.2, 3.2 + 2.4 * k)))
    spots.append(((5.4, 3.4), (9.6, 3.4)))
    spots.append(((5.4, 9.0), (9.6, 9.0)))
    for a, c in spots:
        b.walker([a, c])
    for x, y in [(7.4, 6.2), (3.0, 6.2), (12.0, 6.2), (7.4, 2.2), (7.4, 10.2)]:
        b.start(x, y)
    return b.build()


def crosswalks() -> Scenario:
    X, Y, Z = 15.0, 15.0, 2.0
    b = _Builder("crosswalks", (X, Y, Z), 23)
    for x0, y0 in [(1.0, 1.0), (10.0, 1.0), (1.0, 10.0), (10.0, 10.0)]:
        b.box(x0, y0, 0, x0 + 4.0, y0 + 4.0, 2.0)
    b.walker([(6.2, 0.8), (6.2, 14.2)])
    b.walker([(8.8, 0.8), (8.8, 14.2)])
    b.walker([(0.8, 6.2), (14.2, 6.2)])
    b.walker([(0.8, 8.8), (14.2, 8.8)])
    for x, y in [(7.5, 7.5), (7.4, 2.4), (2.6, 7.4), (12.4, 7.6), (7.6, 12.6)]:
        b.start(x, y)
    return b.build()


def patrol() -> Scenario:
    X, Y, Z = 20.0, 16.6, 2.4
    b = _Builder("patrol", (X, Y, Z), 29)
    b.outer_walls()
    for i in range(3):
        for j in range(2):
            x, y = 4.0 + 5.6 * i, 4.4 + 6.0 * j
            b.box(x, y, 0, x + 1.2, y + 1.2, Z)
    for i in range(3):
        for j in range(2):
            x, y = 4.6 + 5.6 * i, 5.0 + 6.0 * j
            if (i + j) % 2 == 0:
                b.walker([(x - 1.6, y - 1.6), (x + 1.6, y - 1.6), (x + 1.6, y + 1.6), (x - 1.6, y + 1.6)],
                         mode="loop")
            else:
                b.walker([(x - 1.6, y + 1.6), (x + 1.6, y + 1.6), (x + 1.6, y - 1.6), (x - 1.6, y - 1.6)],
                         mode="loop")
    b.walker([(1.0, 8.2), (19.0, 8.2)])
    b.walker([(1.0, 15.6), (19.0, 15.6), (19.0, 1.0), (1.0, 1.0)], mode="loop")
    for x, y in [(2.0, 4.0), (17.6, 4.0), (7.8, 12.8), (13.4, 2.2), (2.2, 12.8)]:
        b.start(x, y)
    return b.build()


def village() -> Scenario:
    X, Y, Z = 76.0, 44.0, 12.0
    b = _Builder("village", (X, Y, Z), 31)
    roads_x = [2.0, 20.0, 38.0, 56.0, 74.0]
    roads_y = [2.0, 22.0, 42.0]
    # houses in the blocks between roads
    for i in range(len(roads_x) - 1):
        for j in range(len(roads_y) - 1):
            x0, x1 = roads_x[i] + 2.0, roads_x[i + 1] - 2.0
            y0, y1 = roads_y[j] + 2.0, roads_y[j + 1] - 2.0
            kind = (i + 2 * j) % 4
            if kind == 3:
                # parking lot: rows of cars
                for cx in np.arange(x0 + 1.0, x1 - 2.0, 3.0):
                    for cy in (y0 + 2.0, y1 - 6.0):
                        b.box(cx, cy, 0, cx + 2.0, cy + 4.2, 1.6)
                continue
            if kind == 2:
                # exhibition area: free-standing panels
                for px in np.arange(x0 + 2.0, x1 - 1.0, 4.0):
                    b.box(px, y0 + 3.0, 0, px + 0.2, y1 - 3.0, 2.4)
                continue
            w = float(b.rng.uniform(7.0, 10.0))
            d = float(b.rng.uniform(6.0, 9.0))
            h = float(b.rng.uniform(4.0, 8.0))
            hx = x0 + 1.0
            hy = y0 + 1.0
            b.box(hx, hy, 0, hx + w, hy + d, h)
            b.box(hx + w / 4, hy + d / 4, h, hx + 3 * w / 4, hy + 3 * d / 4, h + 1.6)  # roof
            # a few trees: trunk plus crown
            for _ in range(3):
                tx = float(b.rng.uniform(x0 + 0.5, x1 - 1.5))
                ty = float(b.rng.uniform(y0 + 0.5, y1 - 1.5))
                if hx - 1.5 < tx < hx + w + 1.0 and hy - 1.5 < ty < hy + d + 1.0:
                    continue
                b.box(tx, ty, 0, tx + 0.4, ty + 0.4, 4.0)
                b.box(tx - 1.0, ty - 1.0, 4.0, tx + 1.4, ty + 1.4, 6.4)
    # walkers on the road network
    for ry in roads_y:
        b.walker([(1.0, ry), (75.0, ry)])
    for rx in roads_x:
        b.walker([(rx, 1.0), (rx, 43.0)])
    for k in range(len(roads_x) - 1):
        x0, x1 = roads_x[k], roads_x[k + 1]
        b.walker([(x0 + 0.6, roads_y[0] + 0.6), (x1 - 0.6, roads_y[0] + 0.6),
                  (x1 - 0.6, roads_y[1] - 0.6), (x0 + 0.6, roads_y[1] - 0.6)], mode="loop")
    b.walker([(roads_x[1] + 0.6, roads_y[1] + 0.6), (roads_x[3] - 0.6, roads_y[1] + 0.6),
              (roads_x[3] - 0.6, roads_y[2] - 0.6), (roads_x[1] + 0.6, roads_y[2] - 0.6)], mode="loop")
    b.walker([(roads_x[0] + 0.6, roads_y[2] - 1.0), (roads_x[4] - 0.6, roads_y[2] - 1.0)])
    b.walker([(roads_x[2] - 1.0, 3.0), (roads_x[2] - 1.0, 41.0)])
    for x, y in [(11.0, 12.0), (29.0, 20.0), (47.0, 12.0), (65.0, 32.0), (11.0, 32.0)]:
        b.start(x, y)
    _clear_starts(b)
    return b.build()


def _clear_starts(b: _Builder) -> None:
    """Nudge start poses off any solid they landed on."""
    fixed = []
    for x, y, z in b.starts:
        k = 0
        while b.blocked(x, y, 0.6) and k < 200:
            x = _q(x + 0.4 * ((k % 3) - 1))
            y = _q(y + 0.4)
            k += 1
        fixed.append((x, y, z))
    b.starts = fixed


BUILDERS = {
    "empty-box": empty_box,
    "cafe": cafe,
    "maze": maze,
    "apartment": apartment,
    "tunnel": tunnel,
    "field": field,
    "auditorium": auditorium,
    "exhibition": exhibition,
    "crosswalks": crosswalks,
    "patrol": patrol,
    "village": village,
}

_CACHE: dict[str, Scenario] = {}


def scenario_names() -> list[str]:
    return list(BUILDERS)


def get_scenario(name: str) -> Scenario:
    if name not in BUILDERS:
        raise ConfigError(f"unknown scenario {name!r}; known: {', '.join(BUILDERS)}")
    if name not in _CACHE:
        _CACHE[name] = BUILDERS[name]()
    return _CACHE[name]
