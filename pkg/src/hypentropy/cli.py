"""Command-line harness: ``hypentropy <kind> --config exp.yaml [--seed S] [--out DIR]``.

Config files are YAML mappings::

    schema_version: 1
    kind: entropy            # optional when given as the subcommand
    group: genus2-octagon    # preset name or path to a group file
    seed: 0
    params:                  # overrides of experiments.DEFAULTS[kind]
      R_max: 12

Seeds for each module are derived from the root seed by
:func:`hypentropy.experiments.derive_seed`.  Every run writes one CSV per
table, ``manifest.json`` and (when anything failed) ``failures.json``; the
exit status is 0 only if every invariant check passed, 1 if some failed and
2 if the configuration was rejected.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from . import experiments as ex
from . import lattice as lat

SCHEMA_VERSION = 1
TOP_KEYS = {"schema_version", "kind", "group", "seed", "params", "out", "threads"}


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        super().__init__("\n".join(diagnostics))
        self.diagnostics = diagnostics


def _lines(node):
    """Map top-level and ``params`` keys to 1-based source lines."""
    top, params = {}, {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            top[k.value] = k.start_mark.line + 1
            if k.value == "params" and isinstance(v, yaml.MappingNode):
                for pk, _ in v.value:
                    params[pk.value] = pk.start_mark.line + 1
    return top, params


def load_config(path, kind=None):
    """Parse and validate a config; returns ``(config, diagnostics)``.

    ``config`` holds ``kind``, ``group`` (a LatticeGroup or None), ``seed``,
    ``params`` (merged with defaults), ``out`` and ``text``.
    """
    path = Path(path)
    diags = []

    def diag(line, msg):
        diags.append(f"{path}:{line}: {msg}" if line else f"{path}: {msg}")

    if not path.exists():
        return None, [f"{path}: config file not found"]
    text = path.read_text()
    try:
        node = yaml.compose(text)
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        return None, [f"{path}:{mark.line + 1 if mark else 0}: YAML syntax error: {exc}"]
    if not isinstance(doc, dict):
        return None, [f"{path}: top level must be a mapping"]
    top, plines = _lines(node)
    for k in doc:
        if k not in TOP_KEYS:
            diag(top.get(k), f"unknown key {k!r} (allowed: {sorted(TOP_KEYS)})")
    if doc.get("schema_version") != SCHEMA_VERSION:
        diag(top.get("schema_version"), f"schema_version must be {SCHEMA_VERSION}")
    k = doc.get("kind", kind)
    if kind is not None and "kind" in doc and doc["kind"] != kind:
        diag(top.get("kind"), f"config kind {doc['kind']!r} does not match subcommand {kind!r}")
    if k not in ex.KINDS:
        diag(top.get("kind"), f"kind must be one of {list(ex.KINDS)}")
        return None, diags
    seed = doc.get("seed", 0)
    if not (isinstance(seed, int) and 0 <= seed < 2**64):
        diag(top.get("seed"), "seed must be an unsigned 64-bit integer")
    raw = doc.get("params") or {}
    if not isinstance(raw, dict):
        diag(top.get("params"), "params must be a mapping")
        raw = {}
    defaults = ex.DEFAULTS[k]
    for key, val in raw.items():
        if key not in defaults:
            diag(plines.get(key), f"unknown parameter {key!r} for {k}")
        elif not _type_ok(defaults[key], val):
            diag(plines.get(key), f"parameter {key!r} has the wrong type ({type(val).__name__})")
    params = ex.resolve_params(k, {key: v for key, v in raw.items() if key in defaults})
    gname = doc.get("group", params.get("group"))
    G = None
    if not isinstance(gname, str):
        diag(top.get("group"), "group must be a preset name or a file path")
    else:
        gpath = (path.parent / gname) if not Path(gname).is_absolute() else Path(gname)
        looks_like_file = "/" in gname or Path(gname).suffix != ""
        try:
            if looks_like_file:
                if not gpath.exists():
                    raise FileNotFoundError(f"group file not found: {gpath}")
                G = lat.load_group_file(gpath)
            else:
                G = lat.preset(gname)
        except (FileNotFoundError, KeyError, ValueError) as exc:
            diag(top.get("group"), str(exc).strip("'\""))
    if not diags:
        for key, msg in ex.check_params(k, params):
            diag(plines.get(key), msg)
        if G is not None:
            for key, msg in ex.check_group_params(k, params, G):
                diag(plines.get(key, top.get(key)), msg)
    cfg = {"kind": k, "group": G, "group_name": gname, "seed": seed, "params": params,
           "out": doc.get("out"), "threads": doc.get("threads", 1), "text": text}
    return cfg, diags


def _type_ok(default, val):
    if default is None:
        return True
    if isinstance(default, bool):
        return isinstance(val, bool)
    if isinstance(default, (int, float)):
        return isinstance(val, (int, float)) and not isinstance(val, bool)
    if isinstance(default, list):
        return isinstance(val, list)
    return isinstance(val, type(default))


def validate(path, kind=None):
    """Diagnostics for a config file (empty when valid)."""
    return load_config(path, kind)[1]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (np.floating, np.integer)):
        return repr(v.item())
    return str(v)


def write_table(rows, path):
    cols = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in cols])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, float) and not np.isfinite(obj):
        return repr(obj)
    return obj


def execute(cfg, seed=None, out=None, threads=None):
    """Run a validated config and write its report bundle; returns ``(report, out_dir)``."""
    kind = cfg["kind"]
    seed = cfg["seed"] if seed is None else seed
    threads = cfg["threads"] if threads is None else threads
    out = Path(out or cfg["out"] or f"out-{kind}")
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rep = ex.run(kind, cfg["params"], cfg["group"], seed, threads)
    wall = time.perf_counter() - t0
    files = []
    for name, rows in rep.tables.items():
        f = out / f"{kind}-{name}.csv"
        write_table(rows, f)
        files.append(f.name)
    for name, obj in rep.dumps.items():
        f = out / f"{kind}-{name}.json"
        f.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
        files.append(f.name)
    failed = [k for k, v in rep.checks.items() if not v]
    if rep.failures or failed:
        f = out / "failures.json"
        f.write_text(json.dumps(_jsonable({"failed_checks": failed, "failures": rep.failures}),
                                indent=2, sort_keys=True) + "\n")
        files.append(f.name)
    manifest = {
        "schema_version": SCHEMA_VERSION, "kind": kind, "group": cfg["group_name"], "seed": int(seed),
        "derived_seed_rule": "SeedSequence(root, spawn_key=(crc32(stream name),))",
        "params": cfg["params"], "config_text": cfg["text"], "threads": threads,
        "versions": {"hypentropy": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
        "wall_time_s": wall, "summary": rep.summary, "checks": rep.checks,
        "status": "pass" if not failed else "fail", "outputs": files,
    }
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return rep, out


def build_parser():
    ap = argparse.ArgumentParser(prog="hypentropy", description="Volume entropy and barycenter experiments")
    sub = ap.add_subparsers(dest="command", required=True)
    for kind in ex.KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", required=True)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out")
        sp.add_argument("--threads", type=int)
    sp = sub.add_parser("validate", help="check a config without running it")
    sp.add_argument("config_path", nargs="?")
    sp.add_argument("--config")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        path = args.config or args.config_path
        if path is None:
            print("validate: a config path is required", file=sys.stderr)
            return 2
        diags = validate(path)
        for d in diags:
            print(d)
        return 1 if diags else 0
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("--seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 2
    cfg, diags = load_config(args.config, args.command)
    if diags:
        for d in diags:
            print(d, file=sys.stderr)
        return 2
    rep, out = execute(cfg, args.seed, args.out, args.threads)
    for name, ok in rep.checks.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"report written to {out}")
    return 0 if rep.ok else 1


if __name__ == "__main__":
    sys.exit(main())
