"""A small dynamic R-tree over lat/lon rectangles.

Guttman insertion with quadratic split; enough for coverage entries and
station points at the scales this engine plans over.  Query results are
payload ids of every stored rectangle intersecting (or touching) the
probe rectangle.
"""

from __future__ import annotations

from .geometry import BBox

MAX_ENTRIES = 8
MIN_ENTRIES = 3


def _touches(a: BBox, b: BBox) -> bool:
    return (a.lat_min <= b.lat_max and b.lat_min <= a.lat_max
            and a.lon_min <= b.lon_max and b.lon_min <= a.lon_max)


def _extend(a: BBox, b: BBox) -> BBox:
    return BBox(min(a.lat_min, b.lat_min), max(a.lat_max, b.lat_max),
                min(a.lon_min, b.lon_min), max(a.lon_max, b.lon_max))


def _enlargement(a: BBox, b: BBox) -> float:
    return _extend(a, b).area_deg2 - a.area_deg2


class _Node:
    __slots__ = ("leaf", "entries", "bbox")

    def __init__(self, leaf: bool):
        self.leaf = leaf
        self.entries: list[tuple[BBox, object]] = []  # payload id or child _Node
        self.bbox: BBox | None = None

    def recompute(self):
        box = self.entries[0][0]
        for b, _ in self.entries[1:]:
            box = _extend(box, b)
        self.bbox = box


class RTree:
    def __init__(self):
        self._root = _Node(leaf=True)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def insert(self, bbox: BBox, payload) -> None:
        split = self._insert(self._root, bbox, payload)
        if split is not None:
            old_root = self._root
            self._root = _Node(leaf=False)
            self._root.entries = [(old_root.bbox, old_root), (split.bbox, split)]
            self._root.recompute()
        self._size += 1

    def search(self, bbox: BBox) -> list:
        out: list = []
        if self._root.bbox is None:
            return out
        stack = [self._root]
        while stack:
            node = stack.pop()
            for b, item in node.entries:
                if _touches(b, bbox):
                    if node.leaf:
                        out.append(item)
                    else:
                        stack.append(item)
        return out

    def items(self) -> list[tuple[BBox, object]]:
        out: list[tuple[BBox, object]] = []
        stack = [self._root]
        while stack:
            node = stack.pop()
            for b, item in node.entries:
                if node.leaf:
                    out.append((b, item))
                else:
                    stack.append(item)
        return out

    # -- internals --------------------------------------------------------

    def _insert(self, node: _Node, bbox: BBox, payload) -> "_Node | None":
        if node.leaf:
            node.entries.append((bbox, payload))
        else:
            best_i = min(range(len(node.entries)),
                         key=lambda i: (_enlargement(node.entries[i][0], bbox),
                                        node.entries[i][0].area_deg2))
            child_box, child = node.entries[best_i]
            split = self._insert(child, bbox, payload)
            node.entries[best_i] = (child.bbox, child)
            if split is not None:
                node.entries.append((split.bbox, split))
        if len(node.entries) > MAX_ENTRIES:
            return self._split(node)
        node.recompute()
        return None

    def _split(self, node: _Node) -> _Node:
        entries = node.entries
        # quadratic seed pick: the pair wasting the most area together
        worst, seeds = -1.0, (0, 1)
        for i in range(len(entries)):
            for j in range(i + 1, len(entries)):
                waste = (_extend(entries[i][0], entries[j][0]).area_deg2
                         - entries[i][0].area_deg2 - entries[j][0].area_deg2)
                if waste > worst:
                    worst, seeds = waste, (i, j)
        i, j = seeds
        group_a = [entries[i]]
        group_b = [entries[j]]
        box_a, box_b = entries[i][0], entries[j][0]
        rest = [e for k, e in enumerate(entries) if k not in (i, j)]
        for idx, e in enumerate(rest):
            remaining = len(rest) - idx  # unassigned entries, including this one
            if len(group_a) + remaining <= MIN_ENTRIES:
                group_a.append(e); box_a = _extend(box_a, e[0]); continue
            if len(group_b) + remaining <= MIN_ENTRIES:
                group_b.append(e); box_b = _extend(box_b, e[0]); continue
            da, db = _enlargement(box_a, e[0]), _enlargement(box_b, e[0])
            if da < db or (da == db and box_a.area_deg2 <= box_b.area_deg2):
                group_a.append(e); box_a = _extend(box_a, e[0])
            else:
                group_b.append(e); box_b = _extend(box_b, e[0])
        node.entries = group_a
        node.recompute()
        sibling = _Node(leaf=node.leaf)
        sibling.entries = group_b
        sibling.recompute()
        return sibling
