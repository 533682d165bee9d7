"""
Experiment configuration: a flat, sectioned ``key = value`` text format.

::

    # comments start with '#' or ';'
    [modem]
    m = 16                  # vector size M
    n = 64                  # bins N
    cp_len = 16             # multiple of m
    constellation = qpsk    # bpsk | qpsk | 16qam
    equalizer = mmse        # zf | mmse | ml

    [channel]
    model = taps            # taps | blockfading
    taps = 0:1:0, 2:0.5-0.1j:0.01    # delay:gain:doppler triples, or ...
    delays = 0,1,2,3        # ... delays plus a profile
    gains = 1,1,1,1         # fixed gains, or per-tap amplitudes when fading = rayleigh
    fading = fixed          # fixed | rayleigh (new i.i.d. gains every frame)
    profile = linear        # static | constant | linear | pertap
    omega0 = 0.01           # constant profile, rad/sample
    slope = 0.0002          # linear profile, rad/sample per sample of delay
    dopplers = 0,0.01       # pertap profile

    [coding]
    scheme = none           # none | ssd | unitary | alamouti
    rotation_angle = 0.5535743588970452
    stride = 32
    unitary_mode = mmse     # mmse | ml

    [sim]
    snr_db = 0, 5, 10, inf
    max_frames = 1000
    target_bit_errors = 200
    blocks_per_frame = 4096
    seed = 1

Unknown sections or keys are errors, reported with their line number.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..channel import Constant, DelayDopplerChannel, Linear, PerTap, Tap
from ..numerics import constellation as lookup_constellation
from ..stcode import SSD_ANGLE

__all__ = [
    "ConfigError",
    "ModemSpec",
    "ChannelSpec",
    "CodingSpec",
    "ExperimentSpec",
    "parse_config_text",
    "load_config",
    "spec_from_sections",
    "parse_snr_range",
    "canonical_json",
    "config_digest",
]

SCHEMA: dict[str, set[str]] = {
    "modem": {"m", "n", "cp_len", "constellation", "equalizer"},
    "channel": {"model", "taps", "delays", "gains", "fading", "profile", "omega0", "slope",
                "dopplers"},
    "coding": {"scheme", "rotation_angle", "stride", "unitary_mode"},
    "sim": {"snr_db", "max_frames", "target_bit_errors", "blocks_per_frame", "seed"},
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending line where there is one."""


@dataclass(frozen=True)
class ModemSpec:
    m: int = 1
    n: int = 64
    cp_len: int = 16
    constellation: str = "qpsk"
    equalizer: str = "zf"


@dataclass(frozen=True)
class ChannelSpec:
    model: str = "taps"
    delays: tuple[int, ...] = (0,)
    gains: tuple[complex, ...] = (1.0,)
    dopplers: tuple[float, ...] = (0.0,)
    fading: str = "fixed"

    def __post_init__(self):
        # normalized types so equal channels serialize (and hash) identically
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        object.__setattr__(self, "gains", tuple(complex(g) for g in self.gains))
        object.__setattr__(self, "dopplers", tuple(float(w) for w in self.dopplers))

    def base_channel(self) -> DelayDopplerChannel:
        return DelayDopplerChannel(tuple(Tap(d, g, w) for d, g, w in
                                         zip(self.delays, self.gains, self.dopplers)))


@dataclass(frozen=True)
class CodingSpec:
    scheme: str = "none"
    rotation_angle: float = SSD_ANGLE
    stride: int | None = None
    unitary_mode: str = "mmse"


@dataclass(frozen=True)
class ExperimentSpec:
    experiment: str = "ber"
    modem: ModemSpec = field(default_factory=ModemSpec)
    channel: ChannelSpec = field(default_factory=ChannelSpec)
    coding: CodingSpec = field(default_factory=CodingSpec)
    snr_db: tuple[float, ...] = (10.0,)
    max_frames: int = 1000
    target_bit_errors: int = 200
    master_seed: int = 1
    blocks_per_frame: int = 4096

    def __post_init__(self):
        if not self.snr_db:
            raise ConfigError("snr_db list is empty")
        if self.target_bit_errors < 100:
            raise ConfigError("target_bit_errors must be >= 100 for a meaningful interval")
        if self.max_frames < 1:
            raise ConfigError("max_frames must be >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


@dataclass
class _Entry:
    value: str
    line: int


def parse_config_text(text: str, source: str = "<config>") -> dict[str, dict[str, _Entry]]:
    """Split text into ``{section: {key: entry}}``, validating names against the schema."""
    sections: dict[str, dict[str, _Entry]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].split(";", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{source}:{lineno}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip().lower()
            if current not in SCHEMA:
                raise ConfigError(f"{source}:{lineno}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{source}:{lineno}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigError(f"{source}:{lineno}: key outside of any section")
        key, value = (p.strip() for p in line.split("=", 1))
        key = key.lower()
        if key not in SCHEMA[current]:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r} in [{current}]")
        if key in sections[current]:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        sections[current][key] = _Entry(value, lineno)
    return sections


def _conv(entry: _Entry, kind, source: str, what: str):
    try:
        return kind(entry.value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{source}:{entry.line}: bad {what} {entry.value!r} ({exc})") from None


def _list(entry: _Entry, kind, source: str, what: str) -> tuple:
    parts = [p.strip() for p in entry.value.split(",") if p.strip()]
    if not parts:
        raise ConfigError(f"{source}:{entry.line}: empty list for {what}")
    return tuple(_conv(_Entry(p, entry.line), kind, source, what) for p in parts)


def _choice(entry: _Entry, choices: set[str], source: str, what: str) -> str:
    v = entry.value.lower()
    if v not in choices:
        raise ConfigError(f"{source}:{entry.line}: {what} must be one of {sorted(choices)}, got {v!r}")
    return v


def _snr(v: str) -> float:
    if v.lower() in ("inf", "+inf", "noiseless"):
        return math.inf
    return float(v)


def _parse_taps(entry: _Entry, source: str):
    delays, gains, dops = [], [], []
    for part in entry.value.split(","):
        fields_ = part.strip().split(":")
        if len(fields_) != 3:
            raise ConfigError(f"{source}:{entry.line}: tap {part.strip()!r} is not delay:gain:doppler")
        d, g, w = fields_
        delays.append(_conv(_Entry(d, entry.line), int, source, "tap delay"))
        gains.append(_conv(_Entry(g.replace(" ", ""), entry.line), complex, source, "tap gain"))
        dops.append(_conv(_Entry(w, entry.line), float, source, "tap doppler"))
    return tuple(delays), tuple(gains), tuple(dops)


def _channel(sec: dict[str, _Entry], source: str) -> ChannelSpec:
    model = _choice(sec["model"], {"taps", "blockfading"}, source, "model") if "model" in sec else "taps"
    fading = _choice(sec["fading"], {"fixed", "rayleigh"}, source, "fading") if "fading" in sec else "fixed"
    if model == "blockfading":
        extra = set(sec) - {"model", "fading"}
        if extra:
            k = sorted(extra, key=lambda k: sec[k].line)[0]
            raise ConfigError(f"{source}:{sec[k].line}: key {k!r} does not apply to blockfading")
        return ChannelSpec(model="blockfading", fading="rayleigh")
    if "taps" in sec:
        clash = {"delays", "gains", "profile", "omega0", "slope", "dopplers"} & set(sec)
        if clash:
            k = min(clash, key=lambda k: sec[k].line)
            raise ConfigError(f"{source}:{sec[k].line}: {k!r} cannot be combined with 'taps'")
        delays, gains, dops = _parse_taps(sec["taps"], source)
    else:
        if "delays" not in sec:
            raise ConfigError(f"{source}: [channel] needs 'taps' or 'delays'")
        delays = _list(sec["delays"], int, source, "delay")
        gains = (_list(sec["gains"], lambda v: complex(v.replace(" ", "")), source, "gain")
                 if "gains" in sec else (1.0,) * len(delays))
        if len(gains) != len(delays):
            raise ConfigError(f"{source}:{sec['gains'].line}: {len(gains)} gains for {len(delays)} delays")
        profile = _choice(sec["profile"], {"static", "constant", "linear", "pertap"}, source,
                          "profile") if "profile" in sec else "static"
        need = {"constant": "omega0", "linear": "slope", "pertap": "dopplers"}.get(profile)
        if need and need not in sec:
            raise ConfigError(f"{source}:{sec['profile'].line}: profile {profile} needs {need!r}")
        if profile == "constant":
            prof = Constant(_conv(sec["omega0"], float, source, "omega0"))
        elif profile == "linear":
            prof = Linear(_conv(sec["slope"], float, source, "slope"))
        elif profile == "pertap":
            prof = PerTap(_list(sec["dopplers"], float, source, "doppler"))
        else:
            prof = None
        try:
            dops = tuple(float(w) for w in (prof.dopplers(delays) if prof else [0.0] * len(delays)))
        except ValueError as exc:
            raise ConfigError(f"{source}:{sec['profile'].line}: {exc}") from None
    try:
        spec = ChannelSpec("taps", tuple(delays), tuple(complex(g) for g in gains), dops, fading)
        spec.base_channel()
    except ValueError as exc:
        line = (sec.get("taps") or sec.get("delays")).line
        raise ConfigError(f"{source}:{line}: {exc}") from None
    return spec


def spec_from_sections(sections: dict[str, dict[str, _Entry]], experiment: str = "ber",
                       source: str = "<config>", base: ExperimentSpec | None = None) -> ExperimentSpec:
    """Overlay parsed sections on ``base`` (defaults if omitted)."""
    spec = base or ExperimentSpec(experiment=experiment)
    spec = replace(spec, experiment=experiment)
    if "modem" in sections:
        sec = sections["modem"]
        m = spec.modem
        kw = {}
        for key in ("m", "n", "cp_len"):
            if key in sec:
                kw[key] = _conv(sec[key], int, source, key)
        if "constellation" in sec:
            try:
                lookup_constellation(sec["constellation"].value)
            except ValueError as exc:
                raise ConfigError(f"{source}:{sec['constellation'].line}: {exc}") from None
            kw["constellation"] = sec["constellation"].value.lower()
        if "equalizer" in sec:
            kw["equalizer"] = _choice(sec["equalizer"], {"zf", "mmse", "ml"}, source, "equalizer")
        m = replace(m, **kw)
        if m.m < 1 or m.n < 1 or m.cp_len < 0 or m.cp_len % m.m:
            line = min(e.line for e in sec.values())
            raise ConfigError(f"{source}:{line}: need m, n >= 1 and cp_len a non-negative multiple of m")
        spec = replace(spec, modem=m)
    if "channel" in sections:
        spec = replace(spec, channel=_channel(sections["channel"], source))
    if "coding" in sections:
        sec = sections["coding"]
        kw = {}
        if "scheme" in sec:
            kw["scheme"] = _choice(sec["scheme"], {"none", "ssd", "unitary", "alamouti"}, source, "scheme")
        if "rotation_angle" in sec:
            kw["rotation_angle"] = _conv(sec["rotation_angle"], float, source, "rotation_angle")
        if "stride" in sec:
            kw["stride"] = _conv(sec["stride"], int, source, "stride")
        if "unitary_mode" in sec:
            kw["unitary_mode"] = _choice(sec["unitary_mode"], {"mmse", "ml"}, source, "unitary_mode")
        spec = replace(spec, coding=replace(spec.coding, **kw))
    if "sim" in sections:
        sec = sections["sim"]
        kw = {}
        if "snr_db" in sec:
            kw["snr_db"] = _list(sec["snr_db"], _snr, source, "snr_db")
        for key, dest in (("max_frames", "max_frames"), ("target_bit_errors", "target_bit_errors"),
                          ("blocks_per_frame", "blocks_per_frame"), ("seed", "master_seed")):
            if key in sec:
                kw[dest] = _conv(sec[key], int, source, key)
        try:
            spec = replace(spec, **kw)
        except ConfigError as exc:
            line = min(e.line for e in sec.values())
            raise ConfigError(f"{source}:{line}: {exc}") from None
    _cross_check(spec, sections, source)
    return spec


def _cross_check(spec: ExperimentSpec, sections, source: str) -> None:
    def where(sec: str) -> str:
        entries = sections.get(sec)
        return f"{source}:{min(e.line for e in entries.values())}" if entries else source

    scheme = spec.coding.scheme
    if spec.channel.model == "blockfading" and scheme not in ("none", "alamouti"):
        raise ConfigError(f"{where('coding')}: blockfading supports scheme none or alamouti")
    if spec.channel.model == "taps":
        if scheme == "alamouti":
            raise ConfigError(f"{where('coding')}: alamouti runs on model = blockfading")
        if scheme in ("ssd", "unitary") and spec.modem.m != 1:
            raise ConfigError(f"{where('coding')}: {scheme} coding needs an OFDM modem (m = 1)")
        if spec.channel.model == "taps" and max(spec.channel.delays) > spec.modem.cp_len:
            raise ConfigError(f"{where('channel')}: channel order {max(spec.channel.delays)} "
                              f"exceeds cp_len {spec.modem.cp_len}")


def load_config(path, experiment: str = "ber", base: ExperimentSpec | None = None) -> ExperimentSpec:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return spec_from_sections(parse_config_text(text, str(path)), experiment, str(path), base)


def parse_snr_range(text: str) -> tuple[float, ...]:
    """``start:step:stop`` (inclusive) or a single value."""
    parts = text.split(":")
    try:
        nums = [float(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--snr expects start:step:stop, got {text!r}") from None
    if len(nums) == 1:
        return (nums[0],)
    if len(nums) != 3 or nums[1] <= 0 or nums[2] < nums[0]:
        raise ConfigError(f"--snr expects start:step:stop with step > 0, got {text!r}")
    start, step, stop = nums
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))


# ---------------------------------------------------------------------------
# Canonical form
# ---------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def canonical_json(spec: ExperimentSpec) -> str:
    """Sorted-key JSON of the fully-resolved spec; equal specs give equal text."""
    return json.dumps(_jsonable(asdict(spec)), sort_keys=True, separators=(",", ":"))


def config_digest(spec: ExperimentSpec) -> str:
    return hashlib.sha256(canonical_json(spec).encode()).hexdigest()
