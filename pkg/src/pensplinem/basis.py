"""B-spline spaces on [0, 1]: knot vectors, basis evaluation, design matrices,
longitudinal data containers, and the finite-sample solvability check.

The spline space of order ``p`` (degree ``p - 1``) with ``K`` interior knots
has dimension ``K + p``.  Boundary knots 0 and 1 carry multiplicity ``p``
(clamped/open knot vector), so the basis is right-continuous on [0, 1) and
takes its left limit at t = 1; in particular the last basis function equals
one at t = 1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import sparse

__all__ = [
    "KnotVector",
    "SplineFunction",
    "LongData",
    "ExistenceCheck",
    "DataFormatError",
    "make_knots",
    "eval_bsplines",
    "design_matrix",
    "check_existence",
]


class DataFormatError(ValueError):
    """Raised for malformed input data (bad CSV, out-of-range sampling times)."""


@dataclass(frozen=True)
class KnotVector:
    """Clamped knot sequence on [0, 1] for splines of order ``order``.

    ``knots`` has length ``interior_count + 2 * order``: the first and last
    ``order`` entries equal 0 and 1, the middle ``interior_count`` entries are
    strictly increasing inside (0, 1).
    """

    order: int
    knots: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        kn = np.array(self.knots, dtype=float, copy=True)
        kn.setflags(write=False)
        object.__setattr__(self, "knots", kn)
        p = self.order
        if p < 1:
            raise ValueError(f"spline order must be >= 1, got {p}")
        if kn.size < 2 * p:
            raise ValueError("knot sequence shorter than 2 * order")
        if np.any(kn[:p] != 0.0) or np.any(kn[-p:] != 1.0):
            raise ValueError("boundary knots must be 0 and 1 with multiplicity = order")
        interior = kn[p:-p]
        if interior.size and (
            np.any(np.diff(interior) <= 0)
            or interior[0] <= 0.0
            or interior[-1] >= 1.0
        ):
            raise ValueError("interior knots must be strictly increasing inside (0, 1)")

    @property
    def interior_count(self) -> int:
        return self.knots.size - 2 * self.order

    @property
    def interior(self) -> np.ndarray:
        return self.knots[self.order : self.knots.size - self.order]

    @property
    def dim(self) -> int:
        """Dimension of the spanned spline space (number of basis functions)."""
        return self.knots.size - self.order

    @property
    def max_spacing(self) -> float:
        """Largest gap between consecutive knots."""
        return float(np.max(np.diff(self.knots)))

    def span_breakpoints(self) -> np.ndarray:
        """Distinct breakpoints 0 = b_0 < b_1 < ... < b_M = 1 of the piecewise
        polynomial structure."""
        return np.unique(self.knots)


def make_knots(order: int, interior_count: int, interior="equidistant") -> KnotVector:
    """Build the clamped knot vector with the given interior knots.

    ``interior`` is either the string ``"equidistant"``, which places interior
    knot j at j / (interior_count + 1), or an explicit strictly increasing
    sequence of length ``interior_count`` inside (0, 1).
    """
    if order < 1:
        raise ValueError(f"spline order must be >= 1, got {order}")
    if interior_count < 0:
        raise ValueError(f"interior knot count must be >= 0, got {interior_count}")
    if isinstance(interior, str):
        if interior != "equidistant":
            raise ValueError(f"unknown interior knot rule {interior!r}")
        inner = np.arange(1, interior_count + 1) / (interior_count + 1)
    else:
        inner = np.asarray(interior, dtype=float)
        if inner.shape != (interior_count,):
            raise ValueError(
                f"expected {interior_count} interior knots, got {inner.size}"
            )
    knots = np.concatenate([np.zeros(order), inner, np.ones(order)])
    return KnotVector(order=order, knots=knots)


def _find_spans(knots: np.ndarray, order: int, ts: np.ndarray) -> np.ndarray:
    """Index i of the knot span [knots[i], knots[i+1]) containing each t.

    Half-open convention; the last nonempty span is closed so t = 1 is valid.
    """
    n_basis = knots.size - order
    spans = np.searchsorted(knots, ts, side="right") - 1
    return np.clip(spans, order - 1, n_basis - 1)


def _local_basis(
    knots: np.ndarray, order: int, ts: np.ndarray, deriv: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero basis (or derivative) values at each evaluation point.

    Returns ``(first, vals)`` where ``vals[q, a]`` is the value of basis
    function ``first[q] + a`` at ``ts[q]``, for a = 0..order-1.  Values are
    produced by the Cox-de Boor recursion with explicit zero-width guards
    (0/0 = 0); derivatives by the order-reduction recurrence, exact for
    splines.
    """
    p = order
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if deriv < 0 or deriv >= p:
        raise ValueError(f"derivative order must satisfy 0 <= deriv < {p}, got {deriv}")
    if ts.size and (ts.min() < 0.0 or ts.max() > 1.0):
        bad = ts[(ts < 0.0) | (ts > 1.0)][0]
        raise ValueError(f"evaluation point {bad} outside [0, 1]")
    spans = _find_spans(knots, p, ts)
    vals = np.zeros((ts.size, p))
    vals[:, 0] = 1.0

    def ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
        ok = den > 0.0
        return np.where(ok, num / np.where(ok, den, 1.0), 0.0)

    # Value recursion: raise the order from 1 up to p - deriv.
    for q in range(1, p - deriv):
        for a in range(q, -1, -1):
            j = spans - q + a
            acc = 0.0
            if a >= 1:
                acc = ratio(ts - knots[j], knots[j + q] - knots[j]) * vals[:, a - 1]
            if a <= q - 1:
                acc = acc + ratio(
                    knots[j + q + 1] - ts, knots[j + q + 1] - knots[j + 1]
                ) * vals[:, a]
            vals[:, a] = acc
    # Derivative recursion: each step raises the order by one while
    # differentiating once.
    one = np.ones(ts.size)
    for q in range(p - deriv, p):
        for a in range(q, -1, -1):
            j = spans - q + a
            acc = 0.0
            if a >= 1:
                acc = ratio(one, knots[j + q] - knots[j]) * vals[:, a - 1]
            if a <= q - 1:
                acc = acc - ratio(one, knots[j + q + 1] - knots[j + 1]) * vals[:, a]
            vals[:, a] = q * acc
    return spans - (p - 1), vals


def eval_bsplines(kv: KnotVector, t: float, deriv: int = 0) -> np.ndarray:
    """All ``K + p`` basis function values (or ``deriv``-th derivatives) at t."""
    first, vals = _local_basis(kv.knots, kv.order, np.asarray([t], dtype=float), deriv)
    out = np.zeros(kv.dim)
    out[first[0] : first[0] + kv.order] = vals[0]
    return out


@dataclass(frozen=True)
class SplineFunction:
    """A spline expressed in the B-spline basis of ``basis``."""

    basis: KnotVector
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        coef = np.array(self.coefficients, dtype=float, copy=True)
        if coef.shape != (self.basis.dim,):
            raise ValueError(
                f"expected {self.basis.dim} coefficients, got {coef.shape}"
            )
        coef.setflags(write=False)
        object.__setattr__(self, "coefficients", coef)

    def __call__(self, t, deriv: int = 0):
        ts = np.asarray(t, dtype=float)
        scalar = ts.ndim == 0
        first, vals = _local_basis(self.basis.knots, self.basis.order, ts.ravel(), deriv)
        idx = first[:, None] + np.arange(self.basis.order)
        out = np.sum(vals * self.coefficients[idx], axis=1)
        if scalar:
            return float(out[0])
        return out.reshape(ts.shape)


class LongData:
    """Longitudinal observations (subject, time, value) on [0, 1].

    Subjects may appear in any order; per-subject counts m_i, the total count
    N and the harmonic mean of the m_i are derived on construction.  The
    observation weight attached to record (i, j) is 1 / (n * m_i).
    """

    def __init__(self, subjects, times, values) -> None:
        subjects = np.array(subjects, copy=True)
        times = np.array(times, dtype=float, copy=True)
        values = np.array(values, dtype=float, copy=True)
        if not (subjects.shape == times.shape == values.shape) or times.ndim != 1:
            raise DataFormatError("subjects, times and values must be equal-length 1-d")
        if times.size == 0:
            raise DataFormatError("no observations")
        if np.any((times < 0.0) | (times > 1.0)):
            bad = int(np.flatnonzero((times < 0.0) | (times > 1.0))[0])
            raise DataFormatError(
                f"record {bad}: t={times[bad]} outside [0, 1]"
            )
        if not np.all(np.isfinite(values)):
            raise DataFormatError("non-finite observation values")
        uniq, inverse, counts = np.unique(subjects, return_inverse=True, return_counts=True)
        self.subjects = subjects
        self.times = times
        self.values = values
        self.subject_ids = uniq
        self.subject_index = inverse
        self.counts = counts
        for arr in (self.subjects, self.times, self.values):
            arr.setflags(write=False)

    @property
    def n_subjects(self) -> int:
        return int(self.subject_ids.size)

    @property
    def total(self) -> int:
        """Total number of observations N."""
        return int(self.times.size)

    @property
    def harmonic_mean_m(self) -> float:
        """n / sum(1 / m_i), the density measure of the sampling design."""
        return float(self.n_subjects / np.sum(1.0 / self.counts))

    @property
    def obs_weights(self) -> np.ndarray:
        """Per-record weights 1 / (n * m_i); they sum to one."""
        return 1.0 / (self.n_subjects * self.counts[self.subject_index])

    @classmethod
    def from_csv(cls, path) -> "LongData":
        """Read records from a CSV file with header ``id,t,y``.

        Uses '.' as the decimal separator; any row with t outside [0, 1] or a
        non-numeric field is rejected with its line number.
        """
        subjects: list[int] = []
        times: list[float] = []
        values: list[float] = []
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataFormatError(f"{path}: empty file")
            if [c.strip() for c in header] != ["id", "t", "y"]:
                raise DataFormatError(
                    f"{path}: expected header 'id,t,y', got {','.join(header)!r}"
                )
            for lineno, row in enumerate(reader, start=2):
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 3:
                    raise DataFormatError(f"{path}: line {lineno}: expected 3 fields")
                try:
                    sid = int(row[0])
                    t = float(row[1])
                    y = float(row[2])
                except ValueError as exc:
                    raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
                if not 0.0 <= t <= 1.0:
                    raise DataFormatError(
                        f"{path}: line {lineno}: t={t} outside [0, 1]"
                    )
                subjects.append(sid)
                times.append(t)
                values.append(y)
        if not times:
            raise DataFormatError(f"{path}: no data rows")
        return cls(np.asarray(subjects), np.asarray(times), np.asarray(values))


def design_matrix(kv: KnotVector, data, deriv: int = 0) -> sparse.csr_matrix:
    """Sparse N x (K + p) matrix of basis values at the observation times.

    ``data`` is a LongData or a plain array of times.  Each row holds the at
    most ``order`` nonzero (consecutive) basis values for one observation.
    """
    ts = data.times if isinstance(data, LongData) else np.asarray(data, dtype=float)
    if ts.size == 0:
        raise ValueError("empty design")
    first, vals = _local_basis(kv.knots, kv.order, ts, deriv)
    p = kv.order
    indices = (first[:, None] + np.arange(p)).ravel()
    indptr = np.arange(0, ts.size * p + 1, p)
    return sparse.csr_matrix((vals.ravel(), indices, indptr), shape=(ts.size, kv.dim))


class ExistenceCheck(NamedTuple):
    """Outcome of the solvability check: either a witness sequence of sampling
    times (one inside each basis support) or the first basis index that could
    not be matched."""

    ok: bool
    witness: np.ndarray | None
    failed_index: int | None


def _support_flags(kv: KnotVector, j: int, t: float) -> bool:
    """True iff basis function j is strictly positive at t (B_0(0) = 1 and
    B_{dim-1}(1) = 1 at the boundaries)."""
    lo = kv.knots[j]
    hi = kv.knots[j + kv.order]
    left_ok = t > lo or (j == 0 and t == 0.0)
    right_ok = t < hi or (j == kv.dim - 1 and t == 1.0)
    return left_ok and right_ok


def check_existence(kv: KnotVector, data) -> ExistenceCheck:
    """Decide whether the penalized fit at lambda = 0 has a unique minimizer.

    Searches for dim-many distinct sampling times, the j-th strictly inside
    the support of basis function j (the collocation-interlacing condition
    that makes the design matrix full column rank).  Supports are intervals
    ordered in both endpoints, so a greedy scan over the sorted distinct
    times assigning the smallest unused feasible time is exact.

    Coincident sampling times are deduplicated before the scan.
    """
    ts = data.times if isinstance(data, LongData) else np.asarray(data, dtype=float)
    times = np.unique(ts)
    dim = kv.dim
    witness = np.empty(dim)
    ptr = 0
    for j in range(dim):
        lo = kv.knots[j]
        hi = kv.knots[j + kv.order]
        assigned = False
        while ptr < times.size:
            t = times[ptr]
            left_ok = t > lo or (j == 0 and t == 0.0)
            if not left_ok:
                # Too small for this support; later supports start no earlier,
                # so the time can never be used again.
                ptr += 1
                continue
            right_ok = t < hi or (j == dim - 1 and t == 1.0)
            if not right_ok:
                # Smallest unused time already beyond the support.
                return ExistenceCheck(False, None, j)
            witness[j] = t
            ptr += 1
            assigned = True
            break
        if not assigned:
            return ExistenceCheck(False, None, j)
    return ExistenceCheck(True, witness, None)
