"""On-disk dataset format and result files.

A dataset directory holds

* ``manifest.json``: format version, ``d``, ``F``, ``freqs`` and one entry
  per domain (``id``, ``n_recordings``, ``mean_age``, ``payload``,
  ``metadata``);
* one binary payload per domain: a 16-byte header (8-byte magic
  ``b"GOPSASPD"``, little-endian uint32 version, uint32 reserved) followed by
  row-major little-endian float64 matrices in (recording, frequency, row,
  col) order;
* one CSV sidecar per domain with columns ``subject_id,domain,age`` (empty
  age for unlabeled recordings).

Cross-spectral tensors for the ``preprocess`` command use the same manifest
layout with ``"kind": "cross-spectra"`` and complex128 ``.npy`` payloads of
shape (n_recordings, F, d, d).
"""

import csv
import json
import math
import struct
from collections import defaultdict
from pathlib import Path

import numpy as np

from .dataset import RecordingSet, check_compatible
from .exceptions import InvalidInput, MissingFile, ShapeMismatch
from .regression import METRICS
from .spd import shrink

FORMAT_VERSION = 1
MAGIC = b"GOPSASPD"
HEADER = struct.Struct("<8sII")
MANIFEST = "manifest.json"
TENSOR_MANIFEST = "tensors.json"


def _manifest_path(path, default=MANIFEST):
    path = Path(path)
    if path.is_dir():
        path = path / default
    if not path.exists():
        raise MissingFile(f"manifest not found: {path}")
    return path


def write_payload(path, covs):
    covs = np.ascontiguousarray(covs, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, 0))
        fh.write(covs.tobytes(order="C"))


def read_payload(path, shape):
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"payload not found: {path}")
    raw = path.read_bytes()
    if len(raw) < HEADER.size:
        raise ShapeMismatch(f"{path}: truncated header")
    magic, version, _ = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ShapeMismatch(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise ShapeMismatch(f"{path}: unsupported payload version {version}")
    expected = int(np.prod(shape)) * 8
    if len(raw) - HEADER.size != expected:
        raise ShapeMismatch(
            f"{path}: payload holds {len(raw) - HEADER.size} bytes, manifest shape "
            f"{tuple(shape)} needs {expected}")
    return np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(shape).astype(np.float64)


def _write_metadata(path, dom):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject_id", "domain", "age"])
        for i, sid in enumerate(dom.subject_ids):
            age = "" if dom.ages is None else repr(float(dom.ages[i]))
            writer.writerow([sid, dom.domain_id, age])


def _read_metadata(path):
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"metadata not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    ids = [r["subject_id"] for r in rows]
    ages = [r.get("age", "") for r in rows]
    if all(a == "" for a in ages):
        return ids, None
    if any(a == "" for a in ages):
        raise InvalidInput(f"{path}: ages must be all present or all missing")
    return ids, np.array([float(a) for a in ages])


def save_dataset(domains, path, freqs=None):
    """Write domains to ``path`` (a directory) in the manifest format."""
    domains = list(domains)
    d, F = check_compatible(domains)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    if freqs is None:
        freqs = domains[0].freqs if domains[0].freqs is not None else np.arange(F, dtype=float)
    entries = []
    for dom in domains:
        payload = f"{dom.domain_id}.bin"
        metadata = f"{dom.domain_id}.csv"
        write_payload(path / payload, dom.covs)
        _write_metadata(path / metadata, dom)
        entries.append({
            "id": dom.domain_id,
            "n_recordings": dom.n_recordings,
            "mean_age": dom.mean_age,
            "payload": payload,
            "metadata": metadata,
        })
    manifest = {
        "format_version": FORMAT_VERSION,
        "d": d,
        "F": F,
        "freqs": [float(f) for f in freqs],
        "domains": entries,
    }
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2))
    return path / MANIFEST


def load_dataset(path, shrinkage=None, validate=True):
    """Load every domain listed in a manifest.

    Domains are returned sorted by id and recordings sorted by subject id.

    Parameters
    ----------
    path : str or Path
        Dataset directory or manifest file.
    shrinkage : float, optional
        Apply :func:`gopsa.spd.shrink` with this coefficient on load.
    validate : bool
        Check that every matrix is SPD.

    Raises
    ------
    MissingFile, ShapeMismatch, NotPositiveDefinite
    """
    mpath = _manifest_path(path)
    manifest = json.loads(mpath.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ShapeMismatch(f"{mpath}: unsupported format_version "
                            f"{manifest.get('format_version')}")
    d, F = int(manifest["d"]), int(manifest["F"])
    freqs = np.asarray(manifest.get("freqs", np.arange(F)), dtype=float)
    if freqs.shape[0] != F:
        raise ShapeMismatch(f"{mpath}: {freqs.shape[0]} freqs for F={F}")
    domains = []
    for entry in sorted(manifest["domains"], key=lambda e: str(e["id"])):
        n = int(entry["n_recordings"])
        ids, ages = _read_metadata(mpath.parent / entry["metadata"])
        if len(ids) != n:
            raise ShapeMismatch(f"{entry['metadata']}: {len(ids)} rows, manifest says {n}")
        covs = read_payload(mpath.parent / entry["payload"], (n, F, d, d))
        if shrinkage is not None:
            covs = shrink(covs, shrinkage)
        order = sorted(range(n), key=lambda i: ids[i])
        dom = RecordingSet(str(entry["id"]), covs[order],
                           None if ages is None else ages[order],
                           [ids[i] for i in order], freqs)
        if validate:
            dom.validate_spd()
        domains.append(dom)
    return domains


def load_tensors(path):
    """Load a cross-spectral tensor dataset.

    Returns
    -------
    list of (domain_id, subject_ids, ages or None, data, freqs)
        ``data`` has shape (n_recordings, F, d, d), complex.
    """
    mpath = _manifest_path(path, TENSOR_MANIFEST)
    manifest = json.loads(mpath.read_text())
    d, F = int(manifest["d"]), int(manifest["F"])
    freqs = np.asarray(manifest["freqs"], dtype=float)
    out = []
    for entry in sorted(manifest["domains"], key=lambda e: str(e["id"])):
        payload = mpath.parent / entry["payload"]
        if not payload.exists():
            raise MissingFile(f"payload not found: {payload}")
        data = np.load(payload)
        ids, ages = _read_metadata(mpath.parent / entry["metadata"])
        if data.shape != (len(ids), F, d, d):
            raise ShapeMismatch(f"{payload}: shape {data.shape}, expected "
                                f"{(len(ids), F, d, d)}")
        out.append((str(entry["id"]), ids, ages, data, freqs))
    return out


def save_tensors(items, path):
    """Write cross-spectral tensors; inverse of :func:`load_tensors`."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    d = F = None
    freqs = None
    for domain_id, ids, ages, data, fr in items:
        data = np.asarray(data, dtype=np.complex128)
        F, d = data.shape[1], data.shape[2]
        freqs = fr
        np.save(path / f"{domain_id}.npy", data)
        dom = RecordingSet(domain_id, np.zeros((len(ids), F, 1, 1)), ages, ids)
        _write_metadata(path / f"{domain_id}.csv", dom)
        entries.append({"id": domain_id, "n_recordings": len(ids),
                        "payload": f"{domain_id}.npy", "metadata": f"{domain_id}.csv"})
    manifest = {"format_version": FORMAT_VERSION, "kind": "cross-spectra", "d": d, "F": F,
                "freqs": [float(f) for f in freqs], "domains": entries}
    (path / TENSOR_MANIFEST).write_text(json.dumps(manifest, indent=2))


RESULT_COLUMNS = ["combination_id", "split_id", "method", "metric", "value"]


def _record_rows(records):
    rows = []
    for r in records:
        for metric in METRICS:
            rows.append([r.combination_id, r.split_id, r.method, metric, getattr(r, metric)])
    rows.sort(key=lambda row: (row[0], row[1], row[2], METRICS.index(row[3])))
    return rows


def summarize(records):
    """Mean and standard deviation across splits.

    Returns a dict with one entry per combination and a ``"Mean"`` entry that
    averages per-combination means and standard deviations. Standard
    deviations are across splits (``ddof=0``); undefined values are skipped.
    """
    groups = defaultdict(list)
    for r in records:
        groups[(r.combination_id, r.method)].append(r)
    combos = defaultdict(dict)
    for (combo, method), recs in sorted(groups.items()):
        stats_ = {}
        for metric in METRICS:
            vals = np.array([getattr(r, metric) for r in recs], dtype=float)
            vals = vals[np.isfinite(vals)]
            stats_[metric] = {
                "mean": float(vals.mean()) if vals.size else None,
                "std": float(vals.std()) if vals.size else None,
                "n_splits": int(vals.size),
            }
        combos[combo][method] = stats_
    overall = defaultdict(dict)
    methods = sorted({m for c in combos.values() for m in c})
    for method in methods:
        for metric in METRICS:
            cells = [combos[c][method][metric] for c in combos
                     if method in combos[c] and combos[c][method][metric]["mean"] is not None]
            if cells:
                overall[method][metric] = {
                    "mean": float(np.mean([c["mean"] for c in cells])),
                    "std": float(np.mean([c["std"] for c in cells])),
                }
    return {
        "std_definition": "standard deviation across splits (ddof=0); the Mean row "
                          "averages per-combination means and standard deviations",
        "combinations": dict(combos),
        "Mean": dict(overall),
    }


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not serializable: {type(obj)}")


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clean(v) for v in obj]
    return obj


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def save_results(report, path):
    """Write per-split metrics as long-format CSV plus a JSON summary.

    Parameters
    ----------
    report : BenchmarkReport or list of MetricRecord
    path : str or Path
        Output directory; ``results.csv`` and ``summary.json`` are written.
    """
    records = getattr(report, "records", report)
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    write_csv(path / "results.csv", RESULT_COLUMNS, _record_rows(records))
    summary = _clean(summarize(records))
    (path / "summary.json").write_text(json.dumps(summary, indent=2, default=_json_default))
    return path / "results.csv", path / "summary.json"
