"""Command-line entry point: ``vkns2d simulate|verify|ineq-lab|resume``.

Exit codes: 0 success, 1 configuration error, 2 run aborted (vacuum,
non-finite state or step-size collapse), 3 checks failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

from . import io
from ._version import __version__
from .diagnostics import Monitor
from .dynamics import STATUS_COMPLETED, simulate
from .fluid import initial_state
from .inequalities import LabConfig, run_lab
from .spectral import Grid
from .verification import ScenarioResult, ScenarioSpec, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_FAILED = 0, 1, 2, 3

SERIES = "series.csv"
CHECKPOINT = "checkpoint.bin"
MANIFEST = "manifest.json"
CONFIG_COPY = "config.toml"


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _doc_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True, default=repr).encode()).hexdigest()


def _out_dir(args) -> Path:
    root = args.out_dir or os.environ.get("VKNS2D_OUT_DIR") or "vkns2d-out"
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load(args) -> tuple[dict, io.RunConfig]:
    overrides = list(args.set or ())
    if getattr(args, "seed", None) is not None:
        overrides.append(f"init.seed={args.seed}")
    if getattr(args, "snapshot_every", None) is not None:
        overrides.append(f"output.snapshot_every={args.snapshot_every}")
    doc = io.apply_overrides(io.read_toml(args.config), overrides)
    return doc, io.parse_config(doc)


class _SeriesWriter:
    """Streams CSV rows and takes snapshots and checkpoints at samples."""

    def __init__(self, out: Path, cfg: io.RunConfig, mon: Monitor, *, append: bool = False, skip_first: bool = False):
        self.out = out
        self.cfg = cfg
        self.mon = mon
        self.skip = skip_first
        self.count = 0
        self.snapshots: list[str] = []
        self.checkpoint: io.Checkpoint | None = None
        self.fh = (out / SERIES).open("a" if append else "w", newline="")
        if not append:
            self.fh.write(io.csv_header(cfg.q_list, cfg.p_list))

    def __call__(self, rec, sample) -> None:
        self.checkpoint = io.Checkpoint(
            sample.state, self.cfg.params, self.cfg.control, sample.dissipation,
            self.mon.rho_hat, self.mon.int_PP, self.mon.int_XY, self.mon._prev,
        )
        if self.skip:
            self.skip = False
            return
        self.fh.write(io.csv_row(rec, self.cfg.q_list, self.cfg.p_list))
        self.fh.flush()
        self.count += 1
        every = self.cfg.snapshot_every
        if every and self.count % every == 0:
            name = f"snapshots/snap_{self.count:06d}.bin"
            (self.out / "snapshots").mkdir(exist_ok=True)
            io.write_snapshot(self.out / name, sample.state)
            io.write_checkpoint(self.out / CHECKPOINT, self.checkpoint)
            self.snapshots.append(name)

    def close(self) -> list[str]:
        self.fh.close()
        outputs = [SERIES, *self.snapshots]
        if self.checkpoint is not None:
            io.write_checkpoint(self.out / CHECKPOINT, self.checkpoint)
            outputs.append(CHECKPOINT)
        return outputs


def _run(cfg: io.RunConfig, state, mon: Monitor, writer: _SeriesWriter, dissipation: float = 0.0):
    res = simulate(state, cfg.params, cfg.control, mon, dissipation=dissipation)
    outputs = writer.close()
    return res, outputs


def _finish(out: Path, doc: dict, cfg: io.RunConfig, started: str, outputs: list[str], res, command: str) -> int:
    status = res.status
    manifest = {
        "command": command,
        "config_hash": _doc_hash(doc),
        "version": __version__,
        "seed": cfg.init.seed,
        "start": started,
        "end": _now(),
        "outputs": [CONFIG_COPY, *outputs],
        "status": status,
        "reason": res.reason,
        "steps": res.steps,
        "samples": res.samples,
        "t": res.state.t,
    }
    io.write_manifest(out / MANIFEST, manifest)
    print(f"{command}: {status}" + (f" ({res.reason})" if res.reason else "") + f", t={res.state.t:.6g}")
    return EXIT_OK if status == STATUS_COMPLETED else EXIT_ABORT


def cmd_simulate(args) -> int:
    started = _now()
    doc, cfg = _load(args)
    out = _out_dir(args)
    io.write_atomic(out / CONFIG_COPY, io.dump_toml(doc).encode())
    try:
        state = initial_state(Grid(cfg.n), cfg.init)
    except ValueError as exc:
        raise io.ConfigError(f"[init]: {exc}") from exc
    mon = Monitor(cfg.params, cfg.schedule, cfg.q_list, cfg.p_list)
    writer = _SeriesWriter(out, cfg, mon)
    mon.callback = writer
    res, outputs = _run(cfg, state, mon, writer)
    return _finish(out, doc, cfg, started, outputs, res, "simulate")


def _truncate_series(path: Path, t_max: float) -> None:
    lines = path.read_text().splitlines(keepends=True)
    keep = [lines[0]] + [ln for ln in lines[1:] if float(ln.split(",", 1)[0]) <= t_max]
    io.write_atomic(path, "".join(keep).encode())


def cmd_resume(args) -> int:
    started = _now()
    out = _out_dir(args)
    doc = io.read_toml(out / CONFIG_COPY)
    overrides = list(args.set or ())
    if args.t_end is not None:
        overrides.append(f"time.t_end={args.t_end!r}")
    if args.snapshot_every is not None:
        overrides.append(f"output.snapshot_every={args.snapshot_every}")
    doc = io.apply_overrides(doc, overrides)
    cfg = io.parse_config(doc)
    ck_path = Path(args.checkpoint) if args.checkpoint else out / CHECKPOINT
    try:
        ck = io.read_checkpoint(ck_path)
    except FileNotFoundError as exc:
        raise io.ConfigError(f"checkpoint not found: {ck_path}") from exc
    if ck.params != cfg.params:
        raise io.ConfigError("checkpoint parameters differ from the run configuration")
    cfg = dataclasses.replace(cfg, control=dataclasses.replace(ck.control, t_end=cfg.control.t_end))
    io.write_atomic(out / CONFIG_COPY, io.dump_toml(doc).encode())
    _truncate_series(out / SERIES, ck.state.t + 1e-12)
    mon = Monitor(
        cfg.params, cfg.schedule, cfg.q_list, cfg.p_list,
        rho_hat=ck.rho_hat, int_PP=ck.int_PP, int_XY=ck.int_XY, prev=ck.prev,
    )
    writer = _SeriesWriter(out, cfg, mon, append=True, skip_first=True)
    mon.callback = writer
    res, outputs = _run(cfg, ck.state, mon, writer, ck.dissipation)
    return _finish(out, doc, cfg, started, outputs, res, "resume")


def _run_one(spec: ScenarioSpec) -> ScenarioResult:
    return run_scenario(spec)


def cmd_verify(args) -> int:
    started = _now()
    doc, cfg = _load(args)
    specs = list(cfg.scenarios.values())
    if args.only:
        missing = set(args.only) - set(cfg.scenarios)
        if missing:
            raise io.ConfigError(f"unknown scenario(s): {', '.join(sorted(missing))}")
        specs = [cfg.scenarios[name] for name in args.only]
    if not specs:
        raise io.ConfigError("no [scenario.*] sections in config")
    if args.seed is not None:
        specs = [dataclasses.replace(s, init=dataclasses.replace(s.init, seed=args.seed)) for s in specs]
    out = _out_dir(args)
    io.write_atomic(out / CONFIG_COPY, io.dump_toml(doc).encode())
    if args.jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(specs))) as ex:
            results = list(ex.map(_run_one, specs))
    else:
        results = [_run_one(s) for s in specs]
    outputs = []
    for res, spec in zip(results, specs):
        print(res.table())
        name = f"{res.name}.csv"
        io.write_series(out / name, res.records, spec.q_list, spec.p_list)
        outputs.append(name)
    io.write_outcomes(out / "outcomes.csv", results)
    outputs.append("outcomes.csv")
    statuses = {r.name: r.status for r in results}
    manifest = {
        "command": "verify",
        "config_hash": _doc_hash(doc),
        "version": __version__,
        "seed": [s.init.seed for s in specs],
        "start": started,
        "end": _now(),
        "outputs": [CONFIG_COPY, *outputs],
        "status": "pass" if all(r.passed for r in results) else "fail",
        "scenarios": statuses,
        "provenance": {r.name: r.provenance for r in results},
    }
    io.write_manifest(out / MANIFEST, manifest)
    if all(r.passed for r in results):
        return EXIT_OK
    return EXIT_ABORT if any(r.status == "aborted" for r in results) else EXIT_FAILED


def cmd_ineq_lab(args) -> int:
    started = _now()
    if args.config:
        doc, cfg = _load(args)
        lab = cfg.lab
    else:
        doc = {}
        lab = LabConfig()
    if args.seed is not None:
        lab = dataclasses.replace(lab, seed0=args.seed)
    if args.jobs > 1:
        lab = dataclasses.replace(lab, jobs=args.jobs)
    out = _out_dir(args)
    t0 = time.perf_counter()
    res = run_lab(lab)
    io.write_lab(out / "lab.csv", res)
    lines = ["check,passed\n"] + [f"{k},{int(v)}\n" for k, v in res.checks.items()]
    io.write_atomic(out / "checks.csv", "".join(lines).encode())
    for k, v in res.checks.items():
        print(f"{'ok  ' if v else 'FAIL'} {k}")
    if res.trudinger_c1 is not None:
        print(f"trudinger: c1={res.trudinger_c1:.6g} c2={res.trudinger_c2:.6g}")
    print(f"lab: {len(res.reports)} ratios, {2 * lab.seeds} seeds, {time.perf_counter() - t0:.1f}s")
    manifest = {
        "command": "ineq-lab",
        "config_hash": _doc_hash(doc),
        "version": __version__,
        "seed": lab.seed0,
        "start": started,
        "end": _now(),
        "outputs": ["lab.csv", "checks.csv"],
        "status": "pass" if res.passed else "fail",
        "lab": dataclasses.asdict(lab),
    }
    io.write_manifest(out / MANIFEST, manifest)
    return EXIT_OK if res.passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vkns2d", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"vkns2d {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
        p.add_argument("--config", required=config_required, help="TOML configuration file")
        p.add_argument("--out-dir", help="output directory (default: $VKNS2D_OUT_DIR or ./vkns2d-out)")
        p.add_argument("--seed", type=int, help="override the random seed")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")

    p = sub.add_parser("simulate", help="run one trajectory and write its diagnostics")
    common(p)
    p.add_argument("--snapshot-every", type=int, help="snapshot and checkpoint every N output samples")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run [scenario.*] checks")
    common(p)
    p.add_argument("--only", nargs="+", metavar="NAME", help="run only these scenarios")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("ineq-lab", help="empirical sweeps of the functional inequalities")
    common(p, config_required=False)
    p.set_defaults(func=cmd_ineq_lab)

    p = sub.add_parser("resume", help="continue a simulate run from its checkpoint")
    p.add_argument("--out-dir", help="run directory written by simulate")
    p.add_argument("--checkpoint", help="checkpoint file (default: <out-dir>/checkpoint.bin)")
    p.add_argument("--t-end", type=float, help="new final time")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("--snapshot-every", type=int, help="snapshot and checkpoint every N output samples")
    p.set_defaults(func=cmd_resume)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (io.ConfigError, io.SnapshotError) as exc:
        print(f"vkns2d: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
