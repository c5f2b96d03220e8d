"""File formats: MFNS binary snapshots, key=value configs, diagnostics CSV.

MFNS layout (all little-endian)::

    offset  type     content
    0       4 bytes  magic b"MFNS"
    4       uint32   format version (1)
    8       uint32   dimension (2)
    12      uint32   truncation K
    16      float64  time
    24      float64  coefficients: for k1 = -K..K, for k2 = -K..K,
                     for component 0, 1: (re, im)
"""

from __future__ import annotations

import csv
import math
import struct
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError
from .meanfield import CSV_HEADER, SimConfig
from .spectral import SpectralVectorField

MAGIC = b"MFNS"
VERSION = 1
_HEADER = struct.Struct("<4sIIId")


def snapshot_bytes(t, f):
    # (2, n, n) -> (n, n, 2) so components are innermost
    c = np.ascontiguousarray(np.moveaxis(f.coeffs, 0, -1))
    body = c.astype("<c16").tobytes()
    return _HEADER.pack(MAGIC, VERSION, 2, f.K, float(t)) + body


def write_snapshot(path, t, f):
    Path(path).write_bytes(snapshot_bytes(t, f))


def parse_snapshot(data, name="<bytes>"):
    if len(data) < _HEADER.size:
        raise DataError(f"{name}: truncated MFNS header ({len(data)} bytes)")
    magic, version, dim, K, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{name}: bad magic {magic!r}, not an MFNS snapshot")
    if version != VERSION:
        raise DataError(f"{name}: unsupported MFNS version {version}")
    if dim != 2:
        raise DataError(f"{name}: dimension {dim} not supported")
    n = 2 * K + 1
    expected = _HEADER.size + n * n * 2 * 16
    if len(data) != expected:
        raise DataError(f"{name}: expected {expected} bytes for K={K}, found {len(data)}")
    c = np.frombuffer(data, dtype="<c16", offset=_HEADER.size).reshape(n, n, 2)
    c = np.moveaxis(c, -1, 0).astype(complex)
    if not (math.isfinite(t) and np.all(np.isfinite(c))):
        raise DataError(f"{name}: non-finite values in snapshot")
    f = SpectralVectorField(c, check=False)
    scale = max(float(np.max(np.abs(c), initial=0.0)), 1.0)
    if f.hermitian_defect() > 1e-12 * scale:
        raise DataError(f"{name}: coefficients are not Hermitian-symmetric")
    return t, f


def read_snapshot(path):
    """Return ``(t, field)`` from an MFNS file."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except FileNotFoundError:
        raise ConfigurationError(f"snapshot file not found: {path}") from None
    return parse_snapshot(data, str(path))


# ---- configuration files ----

_CONVERTERS = {
    "eta": float,
    "dt": float,
    "T": float,
    "N": int,
    "k_field": int,
    "k_noise": int,
    "scheme": str,
    "seed": int,
    "ic": str,
    "nu_override": float,
}


def parse_config_text(text, name="<config>"):
    """Parse ``key = value`` lines into a dict of typed values.

    Blank lines and ``#`` comments are ignored; unknown or repeated keys are
    errors.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigurationError(f"{name}:{lineno}: expected key=value, got {raw!r}")
        if key not in _CONVERTERS:
            raise ConfigurationError(f"{name}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigurationError(f"{name}:{lineno}: duplicate key {key!r}")
        values[key] = convert_value(key, val, f"{name}:{lineno}")
    return values


def convert_value(key, val, where=""):
    if key == "nu_override" and val.lower() in ("", "none"):
        return None
    try:
        return _CONVERTERS[key](val)
    except ValueError:
        raise ConfigurationError(f"{where}: bad value {val!r} for {key}") from None


def load_config(path, overrides=None):
    """Read a config file and apply ``overrides`` (flags win)."""
    p = Path(path)
    try:
        text = p.read_text()
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    values = parse_config_text(text, str(path))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return SimConfig(**values)


def config_text(config):
    lines = []
    for key in SimConfig.keys():
        v = getattr(config, key)
        if v is None:
            continue
        lines.append(f"{key} = {v!r}" if isinstance(v, float) else f"{key} = {v}")
    return "\n".join(lines) + "\n"


def write_config(path, config):
    Path(path).write_text(config_text(config))


# ---- CSV ----


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def write_diagnostics(path, records):
    write_csv(path, CSV_HEADER, [r.row() for r in records])


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
