"""Windowed coincidence counting on picosecond time-tag streams.

Pairing convention: each tag takes part in at most one coincidence, tags are
paired greedily earliest-first, and ``|t_a - t_b| <= window`` (closed interval)
counts as coincident.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .errors import InputError, OrderingError, ParameterError

TAG_MAGIC = b"TTG1"
_HEADER = struct.Struct("<4sIQ")


@dataclass(frozen=True)
class TagStream:
    """Sorted picosecond timestamps from one detector channel."""

    tags: np.ndarray
    channel: int = 0

    def __post_init__(self):
        tags = np.ascontiguousarray(self.tags, dtype=np.int64)
        check_sorted(tags)
        object.__setattr__(self, "tags", tags)

    def __len__(self):
        return self.tags.size


def check_sorted(tags):
    tags = np.asarray(tags)
    if tags.size > 1:
        bad = np.flatnonzero(np.diff(tags) < 0)
        if bad.size:
            i = int(bad[0]) + 1
            raise OrderingError(f"tag stream not sorted at index {i} ({tags[i - 1]} > {tags[i]})", index=i)


def _tags(stream):
    if isinstance(stream, TagStream):
        return stream.tags
    tags = np.ascontiguousarray(stream, dtype=np.int64)
    check_sorted(tags)
    return tags


@numba.njit(cache=True)
def _greedy_count(a, b, window):
    i = 0
    j = 0
    n = 0
    while i < a.size and j < b.size:
        d = b[j] - a[i]
        if -window <= d <= window:
            n += 1
            i += 1
            j += 1
        elif d < 0:
            j += 1
        else:
            i += 1
    return n


def count_coincidences(a, b, window):
    """Number of single-use coincident pairs between two sorted streams."""
    if not window > 0:
        raise ParameterError(f"window must be > 0 ps, got {window}")
    return int(_greedy_count(_tags(a), _tags(b), np.int64(window)))


def count_coincidences_bruteforce(a, b, window):
    """O(n^2) reference matcher: each ``a`` tag in time order takes the earliest
    unused ``b`` tag within the window."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    used = np.zeros(b.size, dtype=bool)
    n = 0
    for t in a:
        hits = np.flatnonzero(~used & (np.abs(b - t) <= window))
        if hits.size:
            used[hits[0]] = True
            n += 1
    return n


@dataclass(frozen=True)
class DelayHistogram:
    centers: np.ndarray  # ps
    counts: np.ndarray

    @property
    def total(self):
        return int(self.counts.sum())


def coincidence_histogram(a, b, bin, span):
    """Histogram of every ``t_b - t_a`` with ``|t_b - t_a| <= span``.

    Bins have width ``bin`` and are centred on integer multiples of ``bin`` so
    that zero delay falls in the middle of the central bin.
    """
    if not bin > 0:
        raise ParameterError(f"bin must be > 0, got {bin}")
    if span < bin:
        raise ParameterError(f"span ({span}) must be >= bin ({bin})")
    a, b = _tags(a), _tags(b)
    lo = np.searchsorted(b, a - span, side="left")
    hi = np.searchsorted(b, a + span, side="right")
    counts_per = hi - lo
    m = int(span // bin)
    edges = (np.arange(-m, m + 2) - 0.5) * bin
    hist = np.zeros(edges.size - 1, dtype=np.int64)
    # chunk over a so the pair list stays bounded
    chunk = 1 << 16
    for s in range(0, a.size, chunk):
        c = counts_per[s : s + chunk]
        total = int(c.sum())
        if total == 0:
            continue
        owner = np.repeat(np.arange(c.size), c)
        offs = np.arange(total) - np.repeat(np.cumsum(c) - c, c)
        delays = b[lo[s : s + chunk][owner] + offs] - a[s : s + chunk][owner]
        delays = delays[np.abs(delays) <= span]
        hist += np.histogram(delays, bins=edges)[0]
    return DelayHistogram(centers=np.arange(-m, m + 1) * float(bin), counts=hist)


def write_tags(path, stream: TagStream):
    """Binary tag file: 16-byte header (magic, channel, count) + uint64 LE tags."""
    tags = stream.tags
    if tags.size and tags[0] < 0:
        raise InputError("binary tag files hold unsigned timestamps; stream has negative tags")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(TAG_MAGIC, int(stream.channel), int(tags.size)))
        fh.write(tags.astype("<u8").tobytes())


def write_tags_csv(path, stream: TagStream):
    np.savetxt(path, stream.tags, fmt="%d")


def read_tags(path, channel=0):
    """Read a binary tag file, or a one-integer-per-line CSV fallback."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if head[:4] == TAG_MAGIC:
            if len(head) < _HEADER.size:
                raise InputError(f"{path}: truncated header")
            _, chan, count = _HEADER.unpack(head)
            body = fh.read()
            if len(body) != 8 * count:
                raise InputError(f"{path}: header announces {count} tags, file holds {len(body) // 8}")
            tags = np.frombuffer(body, dtype="<u8").astype(np.int64)
            return TagStream(tags, channel=int(chan))
    try:
        tags = np.loadtxt(path, dtype=np.int64, ndmin=1, comments="#")
    except ValueError as exc:
        raise InputError(f"{path}: not a tag file ({exc})") from None
    return TagStream(tags, channel=channel)
