"""CSV tables and run manifests."""
import csv
import hashlib
import json
import platform
import sys

import numpy as np

from . import __version__


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_rows(path, rows, columns=None):
    """Write a list of dicts; ``columns`` fixes the order (default: first row's keys)."""
    rows = list(rows)
    columns = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def write_solution_paths(path, sol, max_paths=None):
    """Path-level export: ``path_id, t, Y, U, V, K1, K2`` (first output component).

    ``U`` and ``V`` of the cell ``(t_i, t_{i+1}]`` are reported at ``t_i``;
    the terminal row carries zeros.
    """
    n = sol.Y.shape[0] if max_paths is None else min(max_paths, sol.Y.shape[0])
    N = sol.U.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t", "Y", "U", "V", "K1", "K2"])
        for j in range(n):
            for i, t in enumerate(sol.times):
                u = sol.U[j, i, 0] if i < N else 0.0
                v = sol.V[j, i, 0] if i < N else 0.0
                w.writerow([j, _fmt(t), _fmt(sol.Y[j, i, 0]), _fmt(u), _fmt(v),
                            _fmt(sol.K1[j, i, 0]), _fmt(sol.K2[j, i, 0])])


def write_forward_paths(path, ens, max_paths=None):
    """``path_id, t, x0..x{d-1}, A`` for the first ``max_paths`` paths."""
    n = ens.n_paths if max_paths is None else min(max_paths, ens.n_paths)
    d = ens.X.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t"] + [f"x{k}" for k in range(d)] + ["A"])
        for j in range(n):
            for i, t in enumerate(ens.times):
                w.writerow([j, _fmt(t)] + [_fmt(v) for v in ens.X[j, i]] + [_fmt(ens.A[j, i])])


def write_modulus(path, report):
    """Continuity table with a trailing summary row of fitted exponents."""
    columns = ["n", "dt", "dx", "gap", "se", "fitted_exponent"]
    rows = [dict(r, fitted_exponent="") for r in report["rows"]]
    rows.append({"n": "fit", "dt": "", "dx": "", "gap": "", "se": "",
                 "fitted_exponent": f"x={report['exponent_x']!r};t={report['exponent_t']!r}"})
    write_rows(path, rows, columns)


def file_digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def versions():
    out = {"reflekt": __version__, "python": platform.python_version(), "numpy": np.__version__}
    for name in ("scipy", "numba"):
        mod = sys.modules.get(name)
        if mod is None:
            try:
                mod = __import__(name)
            except ImportError:
                continue
        out[name] = getattr(mod, "__version__", "unknown")
    return out


def write_manifest(path, *, command, config_text, seed, files, wall_time, extra=None):
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "config": config_text,
        "seed": seed,
        "versions": versions(),
        "wall_time_s": wall_time,
        "files": {name: file_digest(p) for name, p in sorted(files.items())},
    }
    if extra:
        manifest["result"] = extra
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return manifest


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


def dump_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
