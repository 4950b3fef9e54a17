"""Plain-text matrix format and CSV exports.

Matrix files hold one matrix row per line as ``re im`` pairs, row-major,
whitespace separated; ``#`` starts a comment. Channels and superoperators
are written in their column-stacking representation.

CSV files are comma separated with a header row. Lines starting with ``#``
above the header carry provenance.
"""
from __future__ import annotations

import csv
from typing import Iterable, Mapping, Optional

import numpy as np

from .lindblad import Channel, Superoperator

__all__ = ["MatrixFormatError", "read_matrix", "write_matrix", "save_superoperator",
           "load_superoperator", "load_channel", "write_csv", "write_pulse_csv",
           "write_determinant_csv", "write_population_csv", "read_csv"]


class MatrixFormatError(ValueError):
    pass


def read_matrix(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].replace(",", " ").strip()
            if not line:
                continue
            try:
                vals = [float(x) for x in line.split()]
            except ValueError as exc:
                raise MatrixFormatError(f"{path}:{lineno}: {exc}") from None
            if len(vals) % 2:
                raise MatrixFormatError(
                    f"{path}:{lineno}: odd number of values, expected re/im pairs")
            rows.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    if not rows:
        raise MatrixFormatError(f"{path}: no matrix rows")
    if any(len(r) != len(rows[0]) for r in rows):
        raise MatrixFormatError(f"{path}: rows of unequal length")
    return np.array(rows)


def write_matrix(path, M, header: Optional[str] = None) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    with open(path, "w") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for row in M:
            fh.write(" ".join(f"{z.real:.17g} {z.imag:.17g}" for z in row) + "\n")


def save_superoperator(path, op: Superoperator | Channel, provenance=None) -> None:
    kind = "channel" if isinstance(op, Channel) else "superoperator"
    header = [f"{kind}, column-stacking vectorization"]
    header += [f"{k}: {v}" for k, v in (provenance or {}).items()]
    write_matrix(path, op.data, header="\n".join(header))


def load_superoperator(path) -> Superoperator:
    return Superoperator(_square(read_matrix(path), path))


def load_channel(path) -> Channel:
    return Channel(_square(read_matrix(path), path))


def _square(M, path):
    n = M.shape[0]
    d = int(round(np.sqrt(n)))
    if M.shape[1] != n or d * d != n:
        raise MatrixFormatError(f"{path}: expected a d^2 x d^2 matrix, got {M.shape}")
    return M


# -- CSV ---------------------------------------------------------------------


def write_csv(path, header: Iterable[str], rows: Iterable[Iterable],
              provenance: Optional[Mapping[str, object]] = None) -> None:
    with open(path, "w", newline="") as fh:
        for k, v in (provenance or {}).items():
            fh.write(f"# {k}: {v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return x


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]


def write_pulse_csv(path, control, convention: str = "ordinary", provenance=None) -> None:
    """Slice start times and amplitudes, ``t_ns, delta_mhz``."""
    from .model import angular_to_mhz

    mhz = angular_to_mhz(np.asarray(control.values), convention)
    write_csv(path, ["t_ns", "delta_mhz"], zip(control.times[:-1], mhz), provenance)


def write_determinant_csv(path, trace, provenance=None) -> None:
    write_csv(path, ["t_ns", "det_abs"], zip(trace.times, trace.det_abs), provenance)


def write_population_csv(path, times, rhos, provenance=None) -> None:
    """Populations ``p<k>`` and coherence magnitudes ``c<k><l>`` (k < l) of a
    series of density matrices."""
    rhos = [np.asarray(r) for r in rhos]
    n = rhos[0].shape[0]
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
    header = ["t_ns"] + [f"p{k}" for k in range(n)] + [f"c{k}{l}" for k, l in pairs]
    rows = ([t] + list(np.real(np.diag(r))) + [abs(r[k, l]) for k, l in pairs]
            for t, r in zip(times, rhos))
    write_csv(path, header, rows, provenance)
