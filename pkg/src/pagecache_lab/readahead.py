"""Linux-style readahead.

A miss anywhere inside an aligned window of ``window_pages`` pages pulls the
whole window (clamped to the file end) into the page cache.  Because windows
are aligned, placing one monitored page per window is exactly enough to keep
monitored pages from dragging each other in.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class ReadaheadConfig:
    window_pages: int = 32
    enabled: bool = True

    def __post_init__(self):
        if self.window_pages < 1:
            raise ValueError(f"window_pages must be >= 1, got {self.window_pages}")


def window_bounds(cfg, index, num_pages):
    """Half-open page range fetched by a miss at ``index``."""
    if not cfg.enabled:
        return index, index + 1
    start = (index // cfg.window_pages) * cfg.window_pages
    return start, min(start + cfg.window_pages, num_pages)


def same_window(cfg, a, b):
    return a // cfg.window_pages == b // cfg.window_pages


def min_safe_stride(cfg):
    """Smallest spacing between monitored pages of one file that keeps a
    readahead triggered by one of them from fetching another."""
    return cfg.window_pages


def on_miss(system, file_id, index):
    """Bring the readahead window around a miss at (file_id, index) into the
    cache.  Returns the PageIds actually inserted, demand page included.

    Fetched pages go through normal replacement and land on the inactive list
    unreferenced.
    """
    return system.fetch_window(file_id, index)
