"""Binary containers and CSV exports.

Field container layout (little endian)::

    magic  b"ALF1"
    uint32 n_per_dim
    uint8  real flag
    16s    role tag, ASCII, NUL padded
    complex64[n*n] coefficients, row-major in FFT order

Spectral container layout::

    magic  b"ALS1"
    uint32 M, float64 K, float64 mass, float64 epsilon, uint32 k_max, uint32 grid n
    int32[M*2] basis, float64[M] eigenvalues, complex128[M*M] eigenvectors (row-major)

Ensembles of fields are stored as concatenated field containers.
"""

from __future__ import annotations

import csv
import io
import struct
from pathlib import Path

import numpy as np

from .anderson_operator import SpectralData
from .spectral_core import Mollifier, SpectralField, TorusGrid

FIELD_MAGIC = b"ALF1"
SPECTRAL_MAGIC = b"ALS1"
_FIELD_HEADER = struct.Struct("<4sIB16s")
_SPECTRAL_HEADER = struct.Struct("<4sIdddII")


def field_to_bytes(f: SpectralField) -> bytes:
    tag = f.role.encode("ascii", "replace")[:16]
    head = _FIELD_HEADER.pack(FIELD_MAGIC, f.grid.n, int(f.real), tag)
    return head + np.ascontiguousarray(f.coeffs, dtype="<c8").tobytes()


def fields_from_bytes(data: bytes) -> list[SpectralField]:
    out = []
    pos = 0
    while pos < len(data):
        magic, n, real, tag = _FIELD_HEADER.unpack_from(data, pos)
        if magic != FIELD_MAGIC:
            raise ValueError("not a field container")
        pos += _FIELD_HEADER.size
        count = n * n
        c = np.frombuffer(data, dtype="<c8", count=count, offset=pos).reshape(n, n)
        pos += 8 * count
        out.append(SpectralField(TorusGrid(n), c.astype(complex), bool(real),
                                 tag.rstrip(b"\0").decode("ascii")))
    return out


def write_fields(path, fields) -> Path:
    path = Path(path)
    path.write_bytes(b"".join(field_to_bytes(f) for f in fields))
    return path


def read_fields(path) -> list[SpectralField]:
    return fields_from_bytes(Path(path).read_bytes())


def spectral_to_bytes(s: SpectralData) -> bytes:
    m = s.size
    head = _SPECTRAL_HEADER.pack(SPECTRAL_MAGIC, m, s.shift_K, s.mass, s.mollifier.epsilon,
                                 s.k_max, s.grid.n)
    return b"".join([
        head,
        np.ascontiguousarray(s.basis, dtype="<i4").tobytes(),
        np.ascontiguousarray(s.eigenvalues, dtype="<f8").tobytes(),
        np.ascontiguousarray(s.eigenvectors, dtype="<c16").tobytes(),
    ])


def spectral_from_bytes(data: bytes, kind: str = "gaussian") -> SpectralData:
    magic, m, K, mass, eps, k_max, n = _SPECTRAL_HEADER.unpack_from(data, 0)
    if magic != SPECTRAL_MAGIC:
        raise ValueError("not a spectral container")
    pos = _SPECTRAL_HEADER.size
    basis = np.frombuffer(data, "<i4", 2 * m, pos).reshape(m, 2).astype(np.int64)
    pos += 8 * m
    lam = np.frombuffer(data, "<f8", m, pos).copy()
    pos += 8 * m
    vecs = np.frombuffer(data, "<c16", m * m, pos).reshape(m, m).copy()
    from .anderson_operator import basis_counterterm
    moll = Mollifier(eps, kind)
    return SpectralData(basis, lam, vecs, K, TorusGrid(n), k_max, moll,
                        basis_counterterm(moll, k_max), mass)


def write_spectral(path, s: SpectralData) -> Path:
    path = Path(path)
    path.write_bytes(spectral_to_bytes(s))
    return path


def read_spectral(path) -> SpectralData:
    return spectral_from_bytes(Path(path).read_bytes())


# --------------------------------------------------------------------------
# CSV


def csv_text(header, rows) -> str:
    """Comma-separated text with a header row; floats use ``repr``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path


def field_rows(f: SpectralField):
    """Rows ``(k1, k2, re, im)`` over resolved modes."""
    k1, k2 = f.grid.wavenumbers
    mask = f.grid.resolved
    for a, b, c in zip(k1[mask], k2[mask], f.coeffs[mask]):
        yield int(a), int(b), float(c.real), float(c.imag)


def write_field_csv(path, f: SpectralField) -> Path:
    return write_csv(path, ["k1", "k2", "re", "im"], field_rows(f))


def write_spectrum_csv(path, s: SpectralData) -> Path:
    return write_csv(path, ["n", "lambda_n"], ((i + 1, lam) for i, lam in enumerate(s.eigenvalues)))
