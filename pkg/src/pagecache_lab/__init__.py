"""Deterministic page-cache side-channel laboratory."""

from .attacks import (
    CandidateSet, EventTemplate, KeystrokeTrace, Monitor, StandInPasswordGenerator, StrcmpVictim,
    bench_eviction, build_lab, keystroke_monitor, length_oracle_attack, recover_prng_passwords,
    template_scan, watch_event,
)
from .cache import (
    PAGE_SIZE, SHARE_COUNT_CAP, WS_DEFAULT_MAX_PAGES, WS_DEFAULT_MIN_PAGES, WS_FLOOR_PAGES,
    CacheEntry, CostModel, FileObject, Integrity, PageCacheState, PageId, Process, Regime, System,
)
from .config import Scenario, build_system, load_scenario, parse_scenario
from .covert_local import (
    ChannelFrame, LocalChannel, LocalChannelConfig, TransmissionStats, build_frame, frame_capacity,
    run_duplex_session,
)
from .covert_remote import (
    LatencyModel, RemoteChannelConfig, TimingSample, remote_fetch, run_remote_session,
)
from .errors import (
    ChannelError, ConfigError, EvictionSetError, InvariantViolation, LabError, PermissionDenied,
)
from .eviction import (
    EvictionReport, EvictionSetBundle, evict_page_linux, evict_page_windows, evict_pages_linux,
    survey_cache,
)
from .probe import (
    ProbePolicy, ResidencyVector, WorkingSetRecord, madvise_dontneed, mincore,
    posix_fadvise_dontneed, query_working_set, virtual_unlock,
)
from .readahead import ReadaheadConfig, min_safe_stride

__version__ = "0.1.0"

__all__ = [
    "PAGE_SIZE", "SHARE_COUNT_CAP", "WS_DEFAULT_MAX_PAGES", "WS_DEFAULT_MIN_PAGES", "WS_FLOOR_PAGES",
    "CacheEntry", "CandidateSet", "ChannelError", "ChannelFrame", "ConfigError", "CostModel",
    "EventTemplate", "EvictionReport", "EvictionSetBundle", "EvictionSetError", "FileObject",
    "Integrity", "InvariantViolation", "KeystrokeTrace", "LabError", "LatencyModel",
    "LocalChannel", "LocalChannelConfig", "Monitor", "PageCacheState", "PageId",
    "PermissionDenied", "ProbePolicy", "Process", "ReadaheadConfig", "Regime",
    "RemoteChannelConfig", "ResidencyVector", "Scenario", "StandInPasswordGenerator",
    "StrcmpVictim", "System", "TimingSample", "TransmissionStats", "WorkingSetRecord",
    "bench_eviction", "build_frame", "build_lab", "build_system", "evict_page_linux", "evict_page_windows",
    "evict_pages_linux", "frame_capacity", "keystroke_monitor", "length_oracle_attack",
    "load_scenario", "madvise_dontneed", "min_safe_stride", "mincore", "parse_scenario",
    "posix_fadvise_dontneed", "query_working_set", "recover_prng_passwords", "remote_fetch",
    "run_duplex_session", "run_remote_session", "survey_cache", "template_scan",
    "virtual_unlock", "watch_event",
]
