"""Output traversal order and task dealing shared by the cost model and the simulator."""

from __future__ import annotations

# shift directions; "up" is the row transition (window contents move up one PE row)
FRONT, RIGHT, LEFT, UP = "front", "right", "left", "up"


def schedule_ring(out_h: int, out_w: int) -> list[tuple[int, int, str]]:
    """Serpentine order over the output map.

    Row 0 runs left to right with front shifts; every later row is entered by an
    up shift at the column where the previous row ended and then runs in the
    opposite direction. The first entry carries the shift that brings the first
    window in (front).
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("output dims must be >= 1")
    order = []
    for y in range(out_h):
        cols = range(out_w) if y % 2 == 0 else range(out_w - 1, -1, -1)
        for i, x in enumerate(cols):
            if y == 0:
                shift = FRONT
            elif i == 0:
                shift = UP
            else:
                shift = RIGHT if y % 2 == 0 else LEFT
            order.append((y, x, shift))
    return order


def decompose_channels(n_channels: int, segments: int, columns: int) -> list[list[tuple[int, int]]]:
    """Deal (channel, segment) tasks round-robin over PEA columns, channel-major."""
    if min(n_channels, segments, columns) < 1:
        raise ValueError("all arguments must be >= 1")
    lists = [[] for _ in range(columns)]
    k = 0
    for ch in range(n_channels):
        for seg in range(segments):
            lists[k % columns].append((ch, seg))
            k += 1
    return lists


def split_rows(n_rows: int, parts: int) -> list[tuple[int, int]]:
    """Split n_rows into `parts` contiguous (start, count) ranges, larger ones first."""
    parts = max(1, min(parts, n_rows))
    base, rem = divmod(n_rows, parts)
    out, start = [], 0
    for i in range(parts):
        cnt = base + (1 if i < rem else 0)
        out.append((start, cnt))
        start += cnt
    return out
