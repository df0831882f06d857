"""Scenario files.

A scenario is one YAML mapping: the machine (regime, cache size, costs,
files, processes, an optional warm-up) plus one experiment with its
parameters.  Every validation error names the offending field and the line
it sits on.
"""

import dataclasses
import typing
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .cache import (
    DEFAULT_CAPACITY_PAGES, WS_DEFAULT_MAX_PAGES, WS_DEFAULT_MIN_PAGES, CostModel, Integrity,
    PageId, Regime, System,
)
from .errors import ConfigError
from .probe import ProbePolicy
from .readahead import ReadaheadConfig

EXPERIMENTS = ("covert-local", "covert-remote", "keystrokes", "oracle", "eviction-bench")


@dataclass(frozen=True)
class CacheBlock:
    capacity_pages: int = DEFAULT_CAPACITY_PAGES
    ghost_capacity: typing.Optional[int] = None


@dataclass(frozen=True)
class FileSpec:
    id: str
    pages: int
    label: str = ""
    readable: bool = True
    owner: typing.Optional[str] = None


@dataclass(frozen=True)
class ProcessSpec:
    id: str
    user: str = "user"
    integrity: str = "SAME_USER"
    ws_min_pages: int = WS_DEFAULT_MIN_PAGES
    ws_max_pages: int = WS_DEFAULT_MAX_PAGES


@dataclass(frozen=True)
class WarmupSpec:
    process: str
    files: typing.List[str]
    touches: int = 0


@dataclass(frozen=True)
class PageRef:
    file: str
    index: int


@dataclass(frozen=True)
class CovertLocalParams:
    sender: str
    receiver: str
    frame_files: typing.List[str]
    filler_files: typing.List[str] = field(default_factory=list)
    bits: int = 100_000
    payload_seed: int = 0
    set3_fraction: float = 0.0
    max_bits: typing.Optional[int] = None
    level_bits: int = 1
    noise_rate_per_s: float = 0.0


@dataclass(frozen=True)
class CovertRemoteParams:
    profile: str = "hdd"
    bits: int = 4000
    payload_seed: int = 0
    sender: str = "sender"
    server: str = "httpd"
    data_file: str = "data.jpg"
    control_file: str = "control.jpg"
    threshold_ms: typing.Optional[float] = None


@dataclass(frozen=True)
class MonitorParams:
    """Shared by the keystroke and eviction-bench experiments."""

    attacker: str
    victim: str
    target: PageRef
    eviction_files: typing.List[str] = field(default_factory=list)
    set3_fraction: float = 0.0
    max_rearm: int = 3


@dataclass(frozen=True)
class KeystrokeParams(MonitorParams):
    keys_per_s: float = 6.0
    duration_s: float = 60.0
    key_times_s: typing.Optional[typing.List[float]] = None
    idle_s: float = 0.0  # length of a parallel keypress-free trace


@dataclass(frozen=True)
class BenchParams(MonitorParams):
    period_s: float = 1.0
    events: int = 60


@dataclass(frozen=True)
class OracleParams:
    attacker: str = "attacker"
    victim: str = "victim"
    exchange_file: str = "exchange.bin"
    alphabet: str = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-"
    max_len: int = 32
    secrets: typing.Optional[typing.List[str]] = None
    random_secrets: int = 0
    secret_seed: typing.Optional[int] = None  # None: follow the scenario seed


PARAMS = {
    "covert-local": CovertLocalParams,
    "covert-remote": CovertRemoteParams,
    "keystrokes": KeystrokeParams,
    "oracle": OracleParams,
    "eviction-bench": BenchParams,
}


@dataclass(frozen=True)
class Scenario:
    name: str
    experiment: str
    params: object
    regime: str = Regime.LINUX.value
    seed: int = 0
    description: str = ""
    cache: CacheBlock = CacheBlock()
    readahead: ReadaheadConfig = ReadaheadConfig()
    costs: CostModel = CostModel()
    policy: ProbePolicy = ProbePolicy()
    files: typing.List[FileSpec] = field(default_factory=list)
    processes: typing.List[ProcessSpec] = field(default_factory=list)
    warmup: typing.Optional[WarmupSpec] = None
    source: str = ""

    def with_seed(self, seed):
        return dataclasses.replace(self, seed=seed)


# -- YAML with positions ------------------------------------------------------


class _Doc:
    """Plain python values plus a path -> line map built from the YAML node
    tree."""

    def __init__(self, text, source):
        self.source = source
        self.lines = {}
        try:
            node = yaml.compose(text)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            line = mark.line + 1 if mark else None
            raise ConfigError(f"YAML syntax error: {getattr(e, 'problem', e)}",
                              line=line, source=source) from None
        if node is None:
            raise ConfigError("empty scenario file", source=source)
        self.data = self._walk(node, "")

    def _walk(self, node, path):
        self.lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            out = {}
            for k, v in node.value:
                if not isinstance(k, yaml.ScalarNode):
                    raise ConfigError("mapping keys must be plain strings",
                                      line=k.start_mark.line + 1, source=self.source)
                key = k.value
                sub = f"{path}.{key}" if path else key
                if key in out:
                    raise ConfigError("duplicate key", field=sub,
                                      line=k.start_mark.line + 1, source=self.source)
                out[key] = self._walk(v, sub)
            return out
        if isinstance(node, yaml.SequenceNode):
            return [self._walk(v, f"{path}[{i}]") for i, v in enumerate(node.value)]
        return yaml.safe_load(yaml.serialize(node))

    def line(self, path):
        while path not in self.lines and path:
            path = path.rpartition(".")[0] if "." in path else ""
        return self.lines.get(path)

    def error(self, path, message):
        return ConfigError(message, field=path or None, line=self.line(path), source=self.source)


def _type_name(tp):
    return getattr(tp, "__name__", None) or str(tp).replace("typing.", "")


def _convert(doc, tp, value, path):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _convert(doc, args[0], value, path)
    if origin in (list, typing.List):
        (inner,) = typing.get_args(tp)
        if not isinstance(value, list):
            raise doc.error(path, f"expected a list, got {type(value).__name__}")
        return [_convert(doc, inner, v, f"{path}[{i}]") for i, v in enumerate(value)]
    if dataclasses.is_dataclass(tp):
        return _build(doc, tp, value, path)
    if tp is bool:
        if not isinstance(value, bool):
            raise doc.error(path, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise doc.error(path, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise doc.error(path, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, (str, int, float)) or isinstance(value, bool):
            raise doc.error(path, f"expected a string, got {value!r}")
        return str(value)
    return value


def _build(doc, cls, value, path):
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise doc.error(path, f"expected a mapping for {cls.__name__}")
    hints = typing.get_type_hints(cls)
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    for key in value:
        if key not in fields:
            sub = f"{path}.{key}" if path else key
            raise doc.error(sub, f"unknown field (allowed: {', '.join(sorted(fields))})")
    kwargs = {}
    for name, f in fields.items():
        sub = f"{path}.{name}" if path else name
        if name in value:
            kwargs[name] = _convert(doc, hints[name], value[name], sub)
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise doc.error(path, f"missing required field {name!r}")
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as e:
        raise doc.error(path, str(e)) from None


# -- loading --------------------------------------------------------------------

_TOP = ("name", "description", "experiment", "regime", "seed", "cache", "readahead", "costs",
        "policy", "files", "processes", "warmup", "params")


def parse_scenario(text, source="<string>"):
    doc = _Doc(text, source)
    data = doc.data
    if not isinstance(data, dict):
        raise doc.error("", "a scenario must be a mapping")
    for key in data:
        if key not in _TOP:
            raise doc.error(key, f"unknown section (allowed: {', '.join(_TOP)})")
    for key in ("name", "experiment"):
        if key not in data:
            raise doc.error("", f"missing required field {key!r}")
    name = _convert(doc, str, data["name"], "name")
    kind = _convert(doc, str, data["experiment"], "experiment")
    if kind not in EXPERIMENTS:
        raise doc.error("experiment", f"unknown experiment {kind!r} (have: {', '.join(EXPERIMENTS)})")
    regime = _convert(doc, str, data.get("regime", Regime.LINUX.value), "regime")
    if regime not in {r.value for r in Regime}:
        raise doc.error("regime", f"unknown regime {regime!r}")
    seed = _convert(doc, int, data.get("seed", 0), "seed")
    sc = Scenario(
        name=name,
        experiment=kind,
        params=_build(doc, PARAMS[kind], data.get("params"), "params"),
        regime=regime,
        seed=seed,
        description=_convert(doc, str, data.get("description", ""), "description"),
        cache=_build(doc, CacheBlock, data.get("cache"), "cache"),
        readahead=_build(doc, ReadaheadConfig, data.get("readahead"), "readahead"),
        costs=_build(doc, CostModel, data.get("costs"), "costs"),
        policy=_build(doc, ProbePolicy, data.get("policy"), "policy"),
        files=_convert(doc, typing.List[FileSpec], data.get("files", []), "files"),
        processes=_convert(doc, typing.List[ProcessSpec], data.get("processes", []), "processes"),
        warmup=_convert(doc, typing.Optional[WarmupSpec], data.get("warmup"), "warmup"),
        source=source,
    )
    _check_references(doc, sc)
    return sc


def _check_references(doc, sc):
    if sc.cache.capacity_pages < 1:
        raise doc.error("cache.capacity_pages", "must be >= 1")
    files, procs = {}, {}
    for i, f in enumerate(sc.files):
        path = f"files[{i}]"
        if f.id in files:
            raise doc.error(f"{path}.id", f"file {f.id!r} declared twice")
        if f.pages < 1:
            raise doc.error(f"{path}.pages", "must be >= 1")
        files[f.id] = path
    for i, p in enumerate(sc.processes):
        path = f"processes[{i}]"
        if p.id in procs:
            raise doc.error(f"{path}.id", f"process {p.id!r} declared twice")
        if p.integrity not in Integrity.__members__:
            raise doc.error(f"{path}.integrity",
                            f"unknown integrity {p.integrity!r} (have: {', '.join(Integrity.__members__)})")
        procs[p.id] = path
    for i, f in enumerate(sc.files):
        if f.owner is not None and f.owner not in procs:
            raise doc.error(f"files[{i}].owner", f"undeclared process {f.owner!r}")

    def need_file(fid, path):
        if fid not in files:
            raise doc.error(path, f"undeclared file {fid!r}")

    def need_proc(pid, path):
        if pid not in procs:
            raise doc.error(path, f"undeclared process {pid!r}")

    if sc.warmup is not None:
        need_proc(sc.warmup.process, "warmup.process")
        for i, fid in enumerate(sc.warmup.files):
            need_file(fid, f"warmup.files[{i}]")
    p = sc.params
    kind = sc.experiment
    if kind == "covert-local":
        need_proc(p.sender, "params.sender")
        need_proc(p.receiver, "params.receiver")
        for key in ("frame_files", "filler_files"):
            for i, fid in enumerate(getattr(p, key)):
                need_file(fid, f"params.{key}[{i}]")
        if not p.frame_files:
            raise doc.error("params.frame_files", "at least one frame file is needed")
        if sc.regime == Regime.LINUX.value and not p.filler_files:
            raise doc.error("params.filler_files", "the page-cache regime needs filler files to evict with")
    elif kind == "covert-remote":
        from .covert_remote import PROFILES

        if p.profile not in PROFILES:
            raise doc.error("params.profile", f"unknown profile {p.profile!r} (have: {', '.join(PROFILES)})")
        need_proc(p.sender, "params.sender")
        need_proc(p.server, "params.server")
        need_file(p.data_file, "params.data_file")
        need_file(p.control_file, "params.control_file")
        if sc.regime != Regime.LINUX.value:
            raise doc.error("regime", "the remote channel runs on the page-cache regime")
    elif kind in ("keystrokes", "eviction-bench"):
        need_proc(p.attacker, "params.attacker")
        need_proc(p.victim, "params.victim")
        need_file(p.target.file, "params.target.file")
        spec = next(f for f in sc.files if f.id == p.target.file)
        if not 0 <= p.target.index < spec.pages:
            raise doc.error("params.target.index", f"outside {spec.id!r} ({spec.pages} pages)")
        for i, fid in enumerate(p.eviction_files):
            need_file(fid, f"params.eviction_files[{i}]")
        if sc.regime == Regime.LINUX.value and not p.eviction_files:
            raise doc.error("params.eviction_files", "the page-cache regime needs files to evict with")
    elif kind == "oracle":
        need_proc(p.attacker, "params.attacker")
        need_proc(p.victim, "params.victim")
        need_file(p.exchange_file, "params.exchange_file")
        if not p.alphabet:
            raise doc.error("params.alphabet", "must not be empty")
        if not p.secrets and p.random_secrets < 1:
            raise doc.error("params", "give secrets or random_secrets")


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read scenario: {e.strerror}", source=str(path)) from None
    return parse_scenario(text, str(path))


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    root = resources.files("pagecache_lab") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_bundled(name):
    root = resources.files("pagecache_lab") / "scenarios"
    res = root / f"{name}.yaml"
    if not res.is_file():
        raise ConfigError(f"no bundled scenario {name!r} (have: {', '.join(bundled_scenarios())})")
    return parse_scenario(res.read_text(), f"{name}.yaml")


def resolve_scenario(ref):
    """A path to a YAML file, or the name of a bundled scenario."""
    if Path(ref).suffix in (".yaml", ".yml") or Path(ref).exists():
        return load_scenario(ref)
    return load_bundled(ref)


def build_system(sc):
    """The machine a scenario describes, warmed up if it asks for it."""
    s = System(sc.regime, sc.cache.capacity_pages, costs=sc.costs, readahead=sc.readahead,
               policy=sc.policy, seed=sc.seed, ghost_capacity=sc.cache.ghost_capacity)
    for p in sc.processes:
        s.add_process(p.id, integrity=Integrity[p.integrity], user=p.user,
                      ws_min_pages=p.ws_min_pages, ws_max_pages=p.ws_max_pages)
    for f in sc.files:
        s.add_file(f.id, f.pages, label=f.label, attacker_readable=f.readable, owner=f.owner)
    w = sc.warmup
    if w is not None and w.touches:
        rng = s.rng("warmup")
        for fid in w.files:
            s.map_file(w.process, fid)
        sizes = {fid: s.file(fid).num_pages for fid in w.files}
        for _ in range(w.touches):
            fid = rng.choice(w.files)
            s.access_page(w.process, PageId(fid, rng.randrange(sizes[fid])))
    return s
