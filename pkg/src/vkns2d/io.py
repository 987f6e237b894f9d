"""Configuration files, binary snapshots and checkpoints, CSV and manifests.

Snapshot layout (all little-endian)::

    b"VKNS2D\\0\\0"  uint32 version  uint32 n  float64 t
    rho, u1, u2 as n*n float64 each, row-major

A checkpoint is a snapshot followed by a Params block (mu, beta, gamma), a
StepControl block (cfl, dt_max, t_end, output_interval, rho_floor), an
extension block and a CRC-32 of everything before it. The extension carries the momentum
``m1, m2`` (``rho * u`` does not round-trip ``m`` bit-exactly) and the
running quantities of the diagnostics monitor, so a resumed run continues
the same record series.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import struct
import sys
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from .diagnostics import DiagnosticsRecord, ExponentSchedule, search_schedule
from .dynamics import StepControl
from .fluid import FluidState, InitConfig, Params
from .inequalities import LabConfig, LabResult
from .spectral import Grid
from .verification import Assertion, ScenarioResult, ScenarioSpec

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "Checkpoint",
    "ConfigError",
    "FORMAT_VERSION",
    "MAGIC",
    "RunConfig",
    "SnapshotError",
    "csv_header",
    "csv_row",
    "load_config",
    "read_checkpoint",
    "read_snapshot",
    "write_atomic",
    "write_checkpoint",
    "write_manifest",
    "write_snapshot",
]

MAGIC = b"VKNS2D\0\0"
FORMAT_VERSION = 1
_HEAD = struct.Struct("<8sIId")
_PARAMS = struct.Struct("<3d")
_CONTROL = struct.Struct("<5d")
_EXT_TAG = b"EXT1"
_EXT_SCALARS = struct.Struct("<7d")
_CRC = struct.Struct("<I")
_LE = np.dtype("<f8")


class ConfigError(ValueError):
    """Unreadable or invalid configuration."""


class SnapshotError(ValueError):
    """A snapshot or checkpoint file is truncated, corrupted or of another format."""


# -- files ---------------------------------------------------------------------------


def write_atomic(path: str | os.PathLike, data: bytes) -> None:
    """Write ``data`` to a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fields(state: FluidState) -> bytes:
    u = state.u
    return b"".join(np.ascontiguousarray(a, dtype=_LE).tobytes() for a in (state.rho, u[0], u[1]))


def _snapshot_bytes(state: FluidState) -> bytes:
    n = state.grid.n
    return _HEAD.pack(MAGIC, FORMAT_VERSION, n, state.t) + _fields(state)


def write_snapshot(path: str | os.PathLike, state: FluidState) -> None:
    write_atomic(path, _snapshot_bytes(state))


def _parse_head(buf: bytes) -> tuple[int, float, int]:
    if len(buf) < _HEAD.size:
        raise SnapshotError("file too short for a snapshot header")
    magic, version, n, t = _HEAD.unpack_from(buf)
    if magic != MAGIC:
        raise SnapshotError(f"bad magic bytes {magic!r}")
    if version != FORMAT_VERSION:
        raise SnapshotError(f"unsupported format version {version}")
    if n < 8 or n % 2:
        raise SnapshotError(f"invalid grid size {n}")
    return n, t, _HEAD.size


def _arrays(buf: bytes, offset: int, n: int, count: int) -> tuple[list[np.ndarray], int]:
    size = n * n * 8
    end = offset + count * size
    if len(buf) < end:
        raise SnapshotError("file truncated inside field data")
    out = [
        np.frombuffer(buf, dtype=_LE, count=n * n, offset=offset + i * size).reshape(n, n).astype(float)
        for i in range(count)
    ]
    return out, end


def _state(n: int, t: float, rho: np.ndarray, m: np.ndarray) -> FluidState:
    try:
        return FluidState(Grid(n), t, rho, m)
    except ValueError as exc:
        raise SnapshotError(f"stored state is invalid: {exc}") from exc


def read_snapshot(path: str | os.PathLike) -> FluidState:
    """Load a snapshot; the momentum is rebuilt as ``rho * u``."""
    buf = Path(path).read_bytes()
    n, t, off = _parse_head(buf)
    (rho, u1, u2), end = _arrays(buf, off, n, 3)
    if end != len(buf):
        raise SnapshotError(f"{len(buf) - end} trailing bytes after snapshot data")
    return _state(n, t, rho, np.stack([rho * u1, rho * u2]))


@dataclass(frozen=True)
class Checkpoint:
    """Everything needed to continue a run bit-for-bit."""

    state: FluidState
    params: Params
    control: StepControl
    dissipation: float = 0.0
    rho_hat: float = 0.0
    int_PP: float = 0.0
    int_XY: float = 0.0
    prev: tuple[float, float, float] | None = None


def write_checkpoint(path: str | os.PathLike, ck: Checkpoint) -> None:
    s = ck.state
    p = ck.params
    c = ck.control
    prev = ck.prev if ck.prev is not None else (math.nan,) * 3
    body = b"".join(
        [
            _snapshot_bytes(s),
            _PARAMS.pack(p.mu, p.beta, p.gamma),
            _CONTROL.pack(c.cfl, c.dt_max, c.t_end, c.output_interval, c.rho_floor),
            _EXT_TAG,
            np.ascontiguousarray(s.m, dtype=_LE).tobytes(),
            _EXT_SCALARS.pack(ck.dissipation, ck.rho_hat, ck.int_PP, ck.int_XY, *prev),
        ]
    )
    write_atomic(path, body + _CRC.pack(zlib.crc32(body)))


def read_checkpoint(path: str | os.PathLike) -> Checkpoint:
    """Load a checkpoint, validating every block before building anything."""
    buf = Path(path).read_bytes()
    n, t, off = _parse_head(buf)
    _, off = _arrays(buf, off, n, 3)
    need = off + _PARAMS.size + _CONTROL.size + len(_EXT_TAG) + 2 * n * n * 8 + _EXT_SCALARS.size + _CRC.size
    if len(buf) != need:
        raise SnapshotError(f"checkpoint has {len(buf)} bytes, expected {need}")
    (crc,) = _CRC.unpack_from(buf, len(buf) - _CRC.size)
    if zlib.crc32(buf[: -_CRC.size]) != crc:
        raise SnapshotError("checksum mismatch")
    mu, beta, gamma = _PARAMS.unpack_from(buf, off)
    off += _PARAMS.size
    cfl, dt_max, t_end, oi, floor = _CONTROL.unpack_from(buf, off)
    off += _CONTROL.size
    if buf[off : off + len(_EXT_TAG)] != _EXT_TAG:
        raise SnapshotError("missing extension block")
    off += len(_EXT_TAG)
    (rho,), _ = _arrays(buf, _HEAD.size, n, 1)
    (m1, m2), off = _arrays(buf, off, n, 2)
    diss, rho_hat, ipp, ixy, *prev = _EXT_SCALARS.unpack_from(buf, off)
    try:
        params = Params(mu=mu, beta=beta, gamma=gamma)
        control = StepControl(cfl=cfl, dt_max=dt_max, t_end=t_end, output_interval=oi, rho_floor=floor)
    except ValueError as exc:
        raise SnapshotError(f"stored parameters are invalid: {exc}") from exc
    state = _state(n, t, rho, np.stack([m1, m2]))
    return Checkpoint(
        state, params, control, diss, rho_hat, ipp, ixy,
        None if math.isnan(prev[0]) else tuple(prev),
    )


# -- CSV ---------------------------------------------------------------------------------

BASE_COLUMNS = (
    "t", "mass", "mom_x", "mom_y", "energy", "D2", "Y2", "X2", "rho_min", "rho_max",
    "rho_hat", "grad_u_L2", "B_L2", "B_bar", "P_bar", "G_Linf", "theta_min",
    "u_mean_x", "u_mean_y", "ratio_logY", "ratio_G",
)
TRAILING_COLUMNS = ("dissipation", "int_PP", "int_XY")


def csv_header(q_list: Sequence[float] = (), p_list: Sequence[float] = ()) -> str:
    cols = list(BASE_COLUMNS)
    cols += [f"grad_u_L{q:g}" for q in q_list]
    cols += [f"rho_L{p:g}" for p in p_list]
    cols += TRAILING_COLUMNS
    return ",".join(cols) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def csv_row(r: DiagnosticsRecord, q_list: Sequence[float] = (), p_list: Sequence[float] = ()) -> str:
    vals = [
        r.t, r.mass, *r.momentum, r.E, r.D2, r.Y2, r.X2, r.rho_min, r.rho_max, r.rho_hat,
        r.grad_u_L2, r.B_L2, r.B_bar, r.P_bar, r.G_Linf, r.theta_min, *r.u_mean,
        r.ratio_logY, r.ratio_G,
    ]
    vals += [r.grad_u_Lq[q] for q in q_list]
    vals += [r.rho_Lp[p] for p in p_list]
    vals += [r.dissipation, r.int_PP, r.int_XY]
    return ",".join(_fmt(v) for v in vals) + "\n"


def write_series(path: str | os.PathLike, records: Iterable[DiagnosticsRecord], q_list=(), p_list=()) -> None:
    text = csv_header(q_list, p_list) + "".join(csv_row(r, q_list, p_list) for r in records)
    write_atomic(path, text.encode())


def write_outcomes(path: str | os.PathLike, results: Sequence[ScenarioResult]) -> None:
    lines = ["scenario,status,functional,value,comparator,threshold,mode,holds\n"]
    for res in results:
        for o in res.outcomes:
            a = o.assertion
            lines.append(
                f"{res.name},{res.status},{a.functional},{_fmt(o.value)},{a.comparator},"
                f"{_fmt(a.threshold)},{a.mode},{int(o.holds)}\n"
            )
    write_atomic(path, "".join(lines).encode())


def write_lab(path: str | os.PathLike, res: LabResult) -> None:
    lines = ["name,params,samples,sup,mean,argmax_seed,sup_half,drift,finite\n"]
    for r in res.reports:
        params = ";".join(f"{k}={v}" for k, v in sorted(r.params.items()))
        lines.append(
            f"{r.name},{params},{r.samples},{_fmt(r.sup)},{_fmt(r.mean)},{r.argmax_seed},"
            f"{_fmt(r.sup_half)},{_fmt(r.drift)},{int(r.finite)}\n"
        )
    write_atomic(path, "".join(lines).encode())


def write_manifest(path: str | os.PathLike, manifest: dict) -> None:
    """Atomically write the run manifest; every named output must exist."""
    base = Path(path).parent
    missing = [f for f in manifest.get("outputs", []) if not (base / f).exists()]
    if missing:
        raise FileNotFoundError(f"manifest names missing outputs: {missing}")
    write_atomic(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


# -- configuration -----------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """A parsed configuration file."""

    n: int
    params: Params
    init: InitConfig
    control: StepControl
    q_list: tuple[float, ...] = ()
    p_list: tuple[float, ...] = ()
    schedule: ExponentSchedule | None = None
    snapshot_every: int = 0
    scenarios: dict[str, ScenarioSpec] = field(default_factory=dict)
    lab: LabConfig = field(default_factory=LabConfig)
    raw: dict = field(default_factory=dict, repr=False, compare=False)


_SECTIONS = {"grid", "params", "init", "time", "output", "schedule", "scenario", "lab"}
_SCENARIO_KEYS = {
    "runner", "assertions", "grid", "params", "init", "time", "min_horizon", "plateau_window",
    "energy_slack", "widths", "ladder_floor",
}


def _build(cls, table: dict, where: str, **fixed):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in table:
            v = table[f.name]
            kw[f.name] = tuple(v) if isinstance(v, list) else v
    kw.update(fixed)
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    out.update(over)
    return out


def _schedule(table: dict, params: Params) -> ExponentSchedule | None:
    if not table:
        return None
    allowed = {"epsilon", "q", "nu0", "epsilons", "qs"}
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [schedule]: {', '.join(sorted(unknown))}")
    nu0 = table.get("nu0", 0.5)
    try:
        if "epsilon" in table or "q" in table:
            return ExponentSchedule(params.beta, params.gamma, table.get("epsilon", 0.2), table.get("q", 5.0), nu0)
        kw = {k: tuple(table[k]) for k in ("epsilons", "qs") if k in table}
        return search_schedule(params.beta, params.gamma, nu0=nu0, **kw)[0]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[schedule]: {exc}") from exc


def parse_config(doc: dict[str, Any]) -> RunConfig:
    """Validate a TOML document and build the run objects."""
    unknown = set(doc) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
    grid = doc.get("grid", {})
    if set(grid) - {"n"}:
        raise ConfigError(f"unknown key(s) in [grid]: {', '.join(sorted(set(grid) - {'n'}))}")
    n = grid.get("n", 64)
    if not isinstance(n, int) or isinstance(n, bool) or n < 8 or n % 2:
        raise ConfigError(f"[grid] n must be an even integer >= 8, got {n!r}")
    params = _build(Params, doc.get("params", {}), "params")
    init = _build(InitConfig, doc.get("init", {}), "init")
    control = _build(StepControl, doc.get("time", {}), "time")
    output = doc.get("output", {})
    if set(output) - {"q_list", "p_list", "snapshot_every"}:
        raise ConfigError(f"unknown key(s) in [output]: {', '.join(sorted(set(output) - {'q_list', 'p_list', 'snapshot_every'}))}")
    q_list = tuple(float(q) for q in output.get("q_list", ()))
    p_list = tuple(float(p) for p in output.get("p_list", ()))
    snap = output.get("snapshot_every", 0)
    if not isinstance(snap, int) or snap < 0:
        raise ConfigError("[output] snapshot_every must be a non-negative integer")
    sched = _schedule(doc.get("schedule", {}), params)
    scenarios = {}
    for name, tab in doc.get("scenario", {}).items():
        where = f"scenario.{name}"
        unknown = set(tab) - _SCENARIO_KEYS
        if unknown:
            raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
        if "runner" not in tab:
            raise ConfigError(f"[{where}] needs a runner")
        s_params = _build(Params, _merge(doc.get("params", {}), tab.get("params", {})), f"{where}.params")
        s_init = _build(InitConfig, _merge(doc.get("init", {}), tab.get("init", {})), f"{where}.init")
        s_control = _build(StepControl, _merge(doc.get("time", {}), tab.get("time", {})), f"{where}.time")
        s_n = tab.get("grid", {}).get("n", n)
        assertions = tuple(_build(Assertion, a, f"{where}.assertions") for a in tab.get("assertions", ()))
        extra = {k: (tuple(tab[k]) if isinstance(tab[k], list) else tab[k])
                 for k in ("min_horizon", "plateau_window", "energy_slack", "widths", "ladder_floor") if k in tab}
        s_sched = sched if s_params == params else _schedule(doc.get("schedule", {}), s_params)
        try:
            scenarios[name] = ScenarioSpec(
                name, tab["runner"], s_params, s_init, s_control, s_n, assertions,
                q_list, p_list, s_sched, **extra,
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{where}]: {exc}") from exc
    lab = _build(LabConfig, doc.get("lab", {}), "lab")
    return RunConfig(n, params, init, control, q_list, p_list, sched, snap, scenarios, lab, doc)


def _coerce(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(doc: dict, overrides: Sequence[str]) -> dict:
    """Apply ``section.key=value`` overrides (values parsed as TOML)."""
    doc = json.loads(json.dumps(doc))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) < 2:
            raise ConfigError(f"override key {key!r} needs a section, e.g. time.t_end")
        node = doc
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} does not name a table entry")
        node[parts[-1]] = _coerce(value.strip())
    return doc


def read_toml(path: str | os.PathLike) -> dict:
    p = Path(path)
    try:
        with p.open("rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {p}") from exc
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read config {p}: {exc}") from exc


def load_config(path: str | os.PathLike, overrides: Sequence[str] = ()) -> RunConfig:
    return parse_config(apply_overrides(read_toml(path), overrides))


def dump_toml(doc: dict) -> str:
    """Serialise the plain tables a config file may contain."""
    lines: list[str] = []

    def value(v: Any) -> str:
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, (int, float)):
            if isinstance(v, float) and not math.isfinite(v):
                return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
            return repr(v)
        if isinstance(v, str):
            return json.dumps(v)
        if isinstance(v, (list, tuple)):
            return "[" + ", ".join(value(x) for x in v) + "]"
        if isinstance(v, dict):
            return "{" + ", ".join(f"{k} = {value(x)}" for k, x in v.items()) + "}"
        raise TypeError(f"cannot serialise {type(v).__name__}")

    def table(prefix: str, tab: dict) -> None:
        scalars = {k: v for k, v in tab.items() if not isinstance(v, dict)}
        subs = {k: v for k, v in tab.items() if isinstance(v, dict)}
        if scalars or not subs:
            lines.append(f"[{prefix}]")
            lines.extend(f"{k} = {value(v)}" for k, v in scalars.items())
            lines.append("")
        for k, v in subs.items():
            table(f"{prefix}.{k}", v)

    for name, tab in doc.items():
        table(name, tab)
    return "\n".join(lines)
