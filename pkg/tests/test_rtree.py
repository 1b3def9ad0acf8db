import numpy as np

from genie.gridstore import BBox, RTree


def _random_box(rng) -> BBox:
    la = np.sort(rng.uniform(-10, 10, 2))
    lo = np.sort(rng.uniform(-10, 10, 2))
    return BBox(la[0], la[1] + 0.01, lo[0], lo[1] + 0.01)


def _touches(a: BBox, b: BBox) -> bool:
    return (a.lat_min <= b.lat_max and b.lat_min <= a.lat_max
            and a.lon_min <= b.lon_max and b.lon_min <= a.lon_max)


def test_query_equals_linear_scan_on_random_sets():
    rng = np.random.default_rng(42)
    for trial in range(1000):
        n = int(rng.integers(1, 30))
        boxes = [_random_box(rng) for _ in range(n)]
        tree = RTree()
        for i, b in enumerate(boxes):
            tree.insert(b, i)
        assert len(tree) == n
        for _ in range(3):
            probe = _random_box(rng)
            got = sorted(tree.search(probe))
            want = sorted(i for i, b in enumerate(boxes) if _touches(b, probe))
            assert got == want


def test_point_rectangles_supported():
    tree = RTree()
    tree.insert(BBox(1.0, 1.0, 2.0, 2.0), "p")
    assert tree.search(BBox(0.5, 1.5, 1.5, 2.5)) == ["p"]
    assert tree.search(BBox(3.0, 4.0, 3.0, 4.0)) == []
