"""On-disk formats: scan CSV + JSON sidecar, run configuration, reports.

Scan CSV: one header row ``i1,j1,i2,j2,x1_um,y1_um,x2_um,y2_um,s1,s2,cc,dwell_s``
followed by one row per grid point in ``i1, j1, i2, j2`` row-major order.  The
sidecar (same stem, ``.json``) carries the mode, seed and every parameter object.
"""
from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import InputError, ParameterError
from .model import SourceParams
from .optics import LensConfig, Mode
from .scansim import NoiseModel, ScanDataset, ScanGrid, reference_setup

CSV_COLUMNS = ("i1", "j1", "i2", "j2", "x1_um", "y1_um", "x2_um", "y2_um", "s1", "s2", "cc", "dwell_s")
SIDECAR_FORMAT = "eprscan-scan/1"
_FMT = ["%d"] * 4 + ["%.10g"] * 4 + ["%d"] * 3 + ["%.10g"]


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


def _asdict(obj):
    if obj is None:
        return None
    d = dataclasses.asdict(obj)
    for k, v in d.items():
        if isinstance(v, Mode):
            d[k] = v.value
        elif isinstance(v, tuple):
            d[k] = list(v)
    return d


def scan_metadata(ds: ScanDataset):
    return {
        "format": SIDECAR_FORMAT,
        "mode": ds.mode.value,
        "seed": ds.seed,
        "dwell_s": ds.dwell,
        "grid": _asdict(ds.grid),
        "source": _asdict(ds.source),
        "lens": _asdict(ds.lens),
        "noise": _asdict(ds.noise),
    }


def write_scan(path, ds: ScanDataset):
    """Write the CSV and its JSON sidecar; returns the two paths."""
    path = Path(path)
    n = ds.grid.n_steps
    idx = np.indices((n, n, n, n)).reshape(4, -1).T
    pos = np.column_stack([
        ds.axis(1, 0)[idx[:, 0]], ds.axis(1, 1)[idx[:, 1]],
        ds.axis(2, 0)[idx[:, 2]], ds.axis(2, 1)[idx[:, 3]],
    ])
    table = np.column_stack([
        idx, pos, ds.s1.reshape(-1), ds.s2.reshape(-1), ds.cc.reshape(-1), np.full(idx.shape[0], ds.dwell),
    ])
    np.savetxt(path, table, fmt=_FMT, delimiter=",", header=",".join(CSV_COLUMNS), comments="")
    side = sidecar_path(path)
    side.write_text(json.dumps(scan_metadata(ds), indent=2, sort_keys=True) + "\n")
    return path, side


def _build(cls, data, where):
    if data is None:
        return None
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InputError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (ParameterError, TypeError) as exc:
        raise InputError(f"{where}: {exc}") from None


def read_scan(path):
    """Read a scan CSV and its sidecar back into a :class:`ScanDataset`."""
    path = Path(path)
    side = sidecar_path(path)
    if not path.is_file():
        raise InputError(f"{path}: no such scan file")
    if not side.is_file():
        raise InputError(f"{path}: missing sidecar {side.name} (mode and parameters live there)")
    try:
        meta = json.loads(side.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{side}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if meta.get("format") != SIDECAR_FORMAT:
        raise InputError(f"{side}: unsupported format {meta.get('format')!r}")
    with open(path) as fh:
        header = fh.readline().strip()
    if tuple(header.split(",")) != CSV_COLUMNS:
        raise InputError(f"{path}: header {header!r} does not match {','.join(CSV_COLUMNS)}")
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: {exc}") from None
    grid = _build(ScanGrid, meta["grid"], f"{side}:grid")
    n = grid.n_steps
    if table.shape != (n**4, len(CSV_COLUMNS)):
        raise InputError(f"{path}: expected {n**4} rows of {len(CSV_COLUMNS)} columns, got {table.shape}")
    idx = table[:, :4].astype(np.int64)
    if not np.array_equal(idx, np.indices((n, n, n, n)).reshape(4, -1).T):
        raise InputError(f"{path}: rows are not in i1,j1,i2,j2 order")
    shape = (n, n, n, n)
    counts = [np.rint(table[:, c]).astype(np.int64).reshape(shape) for c in (8, 9, 10)]
    return ScanDataset(
        grid=grid,
        mode=Mode.parse(meta["mode"]),
        s1=counts[0],
        s2=counts[1],
        cc=counts[2],
        dwell=float(meta["dwell_s"]),
        source=_build(SourceParams, meta.get("source"), f"{side}:source"),
        lens=_build(LensConfig, meta.get("lens"), f"{side}:lens"),
        noise=_build(NoiseModel, meta.get("noise"), f"{side}:noise"),
        seed=meta.get("seed"),
    )


def write_grid_csv(path, x, y, values, corner="y_um\\x_um"):
    """2D grid as CSV: header row of x positions, one row per y position."""
    values = np.asarray(values)
    with open(path, "w") as fh:
        fh.write(corner + "," + ",".join(f"{v:.10g}" for v in x) + "\n")
        for j, yv in enumerate(y):
            fh.write(f"{yv:.10g}," + ",".join(f"{v:.10g}" for v in values[:, j]) + "\n")


# ---------------------------------------------------------------- run config

_SECTIONS = {"source": SourceParams, "lens": LensConfig, "grid": ScanGrid, "noise": NoiseModel}
_MODE_SECTIONS = {"near_field": Mode.NEAR_FIELD, "far_field": Mode.FAR_FIELD}
_TOP_KEYS = {"seed", "output", *_SECTIONS, *_MODE_SECTIONS}


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Parameters for a pair of near-/far-field runs.

    ``near_field`` and ``far_field`` hold per-mode overrides of the ``source`` and
    ``noise`` sections (pair rate and coupling efficiencies differ between the
    two runs).  The lens section applies to both arms, whose primed lenses are
    identical.
    """

    source: dict
    lens: dict
    grid: dict
    noise: dict
    near_field: dict
    far_field: dict
    seed: int = 1
    output: str = "."

    def setup(self, mode):
        """Validated ``(source, lens, grid, noise)`` for one mode."""
        mode = Mode.parse(mode)
        over = self.near_field if mode is Mode.NEAR_FIELD else self.far_field
        key = "near_field" if mode is Mode.NEAR_FIELD else "far_field"
        source = _build(SourceParams, {**self.source, **over.get("source", {})}, f"{key}.source")
        lens = _build(LensConfig, {**self.lens, "mode": mode.value}, "lens")
        grid = _build(ScanGrid, self.grid, "grid")
        noise = _build(NoiseModel, {**self.noise, **over.get("noise", {})}, f"{key}.noise")
        return source, lens, grid, noise

    def to_dict(self):
        return dataclasses.asdict(self)


def default_config():
    """Configuration reproducing the reference count rates in both modes."""
    over = {}
    for key, mode in _MODE_SECTIONS.items():
        source, _, _, noise = reference_setup(mode)
        over[key] = {
            "source": {"pair_rate": source.pair_rate},
            "noise": {"efficiency1": noise.efficiency1, "efficiency2": noise.efficiency2},
        }
    return RunConfig(source={}, lens={}, grid={}, noise={}, **over)


def parse_config(text, where="<config>"):
    """Parse and validate a JSON run configuration; unknown keys are rejected."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{where}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise InputError(f"{where}: top level must be an object")
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        raise InputError(f"{where}: unknown key(s) {', '.join(unknown)}")
    base = default_config()
    sections = {}
    for name, cls in _SECTIONS.items():
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            raise InputError(f"{where}: section '{name}' must be an object")
        allowed = {f.name for f in dataclasses.fields(cls)} - ({"mode"} if name == "lens" else set())
        bad = sorted(set(sec) - allowed)
        if bad:
            raise InputError(f"{where}: unknown key(s) in '{name}': {', '.join(bad)}")
        sections[name] = {**getattr(base, name), **sec}
    for name in _MODE_SECTIONS:
        sec = data.get(name, {})
        if not isinstance(sec, dict) or set(sec) - {"source", "noise"}:
            raise InputError(f"{where}: '{name}' may only hold 'source' and 'noise' overrides")
        merged = {}
        for sub, cls in (("source", SourceParams), ("noise", NoiseModel)):
            over = sec.get(sub, {})
            bad = sorted(set(over) - {f.name for f in dataclasses.fields(cls)})
            if bad:
                raise InputError(f"{where}: unknown key(s) in '{name}.{sub}': {', '.join(bad)}")
            merged[sub] = {**getattr(base, name).get(sub, {}), **over}
        sections[name] = merged
    seed = data.get("seed", base.seed)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise InputError(f"{where}: 'seed' must be a non-negative integer")
    cfg = RunConfig(seed=seed, output=str(data.get("output", base.output)), **sections)
    for mode in Mode:
        cfg.setup(mode)  # re-validate every parameter object now, not at first use
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    return parse_config(text, where=str(path))
