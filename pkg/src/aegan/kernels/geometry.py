"""Shared 'same'-padding geometry for both kernel backends."""

from __future__ import annotations


def out_extent(n: int, stride: int) -> int:
    """Output spatial extent: ceil(n / stride)."""
    return -(-n // stride)


def same_pad(n: int, k: int, stride: int) -> tuple[int, int]:
    """(before, after) padding so that output extent is ceil(n / stride)."""
    no = out_extent(n, stride)
    total = max((no - 1) * stride + k - n, 0)
    before = total // 2
    return before, total - before
