"""Little-endian binary containers for training samples and field snapshots."""

import struct

import numpy as np

__all__ = ["FormatError", "write_samples", "read_samples", "write_snapshot", "read_snapshot"]


class FormatError(ValueError):
    """File does not follow the expected binary layout."""


_NNFE = struct.Struct("<4sIiiiiiqi")
_SIFE = struct.Struct("<4sIidi")


def write_samples(path, X, Y, N_M, S, normalized=False):
    """Store rows [inputs | targets] with an NNFE header."""
    X = np.asarray(X, dtype="<f8")
    Y = np.asarray(Y, dtype="<f8")
    if X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y need the same number of rows")
    n_M = Y.shape[1] // 2
    with open(path, "wb") as fh:
        fh.write(_NNFE.pack(b"NNFE", 1, N_M, S, n_M, X.shape[1], Y.shape[1], X.shape[0],
                            int(normalized)))
        fh.write(np.ascontiguousarray(np.hstack([X, Y])).tobytes())


def read_samples(path):
    """Return (X, Y, header dict)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _NNFE.size:
        raise FormatError(f"{path}: truncated header")
    magic, ver, nm, s, n_M, n_in, n_out, count, norm = _NNFE.unpack_from(raw)
    if magic != b"NNFE" or ver != 1:
        raise FormatError(f"{path}: not a sample file")
    need = count * (n_in + n_out) * 8
    if len(raw) - _NNFE.size != need:
        raise FormatError(f"{path}: expected {need} payload bytes, found {len(raw) - _NNFE.size}")
    data = np.frombuffer(raw, dtype="<f8", offset=_NNFE.size).reshape(count, n_in + n_out)
    hdr = dict(N_M=nm, S=s, n_M=n_M, N_in=n_in, N_out=n_out, sample_count=count,
               normalized=bool(norm))
    return data[:, :n_in].copy(), data[:, n_in:].copy(), hdr


def write_snapshot(path, level, time, fields):
    """``fields`` maps names to 1-D float arrays."""
    with open(path, "wb") as fh:
        fh.write(_SIFE.pack(b"SIFE", 1, level, time, len(fields)))
        for name, arr in fields.items():
            b = name.encode()
            fh.write(struct.pack("<H", len(b)) + b + struct.pack("<q", np.size(arr)))
        for arr in fields.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").ravel().tobytes())


def read_snapshot(path):
    """Return (level, time, {name: array})."""
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        magic, ver, level, time, nf = _SIFE.unpack_from(raw)
        if magic != b"SIFE" or ver != 1:
            raise FormatError(f"{path}: not a snapshot file")
        off = _SIFE.size
        spec = []
        for _ in range(nf):
            (ln,) = struct.unpack_from("<H", raw, off)
            name = raw[off + 2:off + 2 + ln].decode()
            (cnt,) = struct.unpack_from("<q", raw, off + 2 + ln)
            spec.append((name, cnt))
            off += 2 + ln + 8
        out = {}
        for name, cnt in spec:
            if off + cnt * 8 > len(raw):
                raise FormatError(f"{path}: truncated field {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8", count=cnt, offset=off).copy()
            off += cnt * 8
    except struct.error as exc:
        raise FormatError(f"{path}: truncated header") from exc
    return level, time, out
