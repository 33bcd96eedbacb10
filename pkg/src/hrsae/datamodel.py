"""Population and domain containers, CSV ingestion and exact population sums."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, DegenerateError, ParseError, UnavailableOracleError

__all__ = [
    "Population",
    "Domain",
    "ModelXi",
    "load_population",
    "load_domain_ids",
    "domain_total",
    "finite_pop_corr",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Population:
    """Finite population with units renumbered so that ``z`` is nondecreasing.

    Position ``k`` in every vector refers to the ``k``-th smallest ``z``.
    ``ids`` holds the original unit id of each position; ties in ``z`` are
    broken by that id.  ``y`` is ``None`` when the study variable is not
    known for the whole population (estimation mode).
    """

    z: np.ndarray
    x: np.ndarray
    y: np.ndarray | None = None
    ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if z.ndim != 1 or x.shape != z.shape:
            raise DataError("z and x must be 1-d vectors of equal length")
        if z.size < 2:
            raise DataError(f"population needs at least 2 units, got {z.size}")
        if np.any(np.diff(z) < 0):
            raise DataError("z must be nondecreasing; use Population.from_arrays to sort")
        ids = np.arange(1, z.size + 1) if self.ids is None else np.asarray(self.ids)
        if ids.shape != z.shape:
            raise DataError("ids must have the same length as z")
        object.__setattr__(self, "z", _frozen(z.copy()))
        object.__setattr__(self, "x", _frozen(x.copy()))
        object.__setattr__(self, "ids", _frozen(ids.copy()))
        if self.y is not None:
            y = np.asarray(self.y, dtype=float)
            if y.shape != z.shape:
                raise DataError("y must have the same length as z")
            object.__setattr__(self, "y", _frozen(y.copy()))

    @classmethod
    def from_arrays(cls, z, x, y=None, ids=None) -> Population:
        """Build a population from vectors in arbitrary order, sorting by ``z``."""
        z = np.asarray(z, dtype=float)
        x = np.asarray(x, dtype=float)
        if ids is None:
            ids = np.arange(1, z.size + 1)
        ids = np.asarray(ids)
        if z.ndim != 1 or x.shape != z.shape or ids.shape != z.shape:
            raise DataError("z, x and ids must be 1-d vectors of equal length")
        # lexsort: last key is primary
        order = np.lexsort((ids, z))
        y_sorted = None if y is None else np.asarray(y, dtype=float)[order]
        return cls(z=z[order], x=x[order], y=y_sorted, ids=ids[order])

    @property
    def n_units(self) -> int:
        return int(self.z.size)

    @property
    def permutation(self) -> np.ndarray:
        """Original ids in sorted order; ``permutation[k]`` is the id at position ``k``."""
        return self.ids

    def file_order(self) -> np.ndarray:
        """Positions that restore the input order: ``pop.z[pop.file_order()]``."""
        return np.argsort(self.ids, kind="stable")

    def positions_of(self, ids: Iterable) -> np.ndarray:
        """Map original unit ids to 0-based positions in the sorted population."""
        lookup = {_id_key(v): k for k, v in enumerate(self.ids.tolist())}
        out = []
        for v in ids:
            try:
                out.append(lookup[_id_key(v)])
            except KeyError:
                raise DataError(f"unknown unit id {v!r}") from None
        return np.asarray(out, dtype=np.int64)

    def with_y(self, y) -> Population:
        """Copy with the study variable attached (given in sorted order)."""
        return Population(z=self.z, x=self.x, y=y, ids=self.ids)


def _id_key(v):
    # ids read from text compare equal to integer ids
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, str):
        s = v.strip()
        try:
            return int(s)
        except ValueError:
            return s
    return v


@dataclass(frozen=True, eq=False)
class Domain:
    """Domain of interest as 0-based positions into a sorted :class:`Population`."""

    members: np.ndarray
    n_units: int

    def __post_init__(self):
        members = np.asarray(self.members, dtype=np.int64).ravel()
        if members.size < 1:
            raise DataError("domain must contain at least one unit")
        if np.unique(members).size != members.size:
            raise DataError("domain members must be unique")
        if members.min() < 0 or members.max() >= self.n_units:
            raise DataError("domain members out of range")
        object.__setattr__(self, "members", _frozen(np.sort(members)))

    @classmethod
    def from_ids(cls, pop: Population, ids: Iterable) -> Domain:
        return cls(pop.positions_of(ids), pop.n_units)

    @classmethod
    def from_mask(cls, mask) -> Domain:
        mask = np.asarray(mask, dtype=bool)
        return cls(np.flatnonzero(mask), mask.size)

    @classmethod
    def whole(cls, n_units: int) -> Domain:
        return cls(np.arange(n_units), n_units)

    @property
    def size_m(self) -> int:
        return int(self.members.size)

    @property
    def mask(self) -> np.ndarray:
        out = np.zeros(self.n_units, dtype=bool)
        out[self.members] = True
        return out

    def complement(self) -> Domain:
        return Domain.from_mask(~self.mask)


@dataclass(frozen=True)
class ModelXi:
    """Fitted linear model of ``y`` on ``x`` (intercept, slope, residual variance)."""

    beta1: float
    beta2: float
    sigma2: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.sigma2) < 0):
            raise DataError("sigma2 must be nonnegative")


def _parse_float(cell: str, column: str, line: int) -> float:
    if cell is None or cell.strip() == "":
        raise ParseError(f"blank value in column {column!r}", line)
    try:
        return float(cell)
    except ValueError:
        raise ParseError(f"non-numeric value {cell!r} in column {column!r}", line) from None


def load_population(csv_path, column_map: Mapping[str, str] | None = None) -> Population:
    """Read a population CSV.

    Required columns are ``z`` and ``x``; ``y`` and ``id`` are optional.
    ``column_map`` maps those logical names to the header names actually
    used in the file.  A ``y`` column whose cells are all blank is treated
    as absent.
    """
    cmap = {"z": "z", "x": "x", "y": "y", "id": "id"}
    if column_map:
        cmap.update(column_map)
    path = Path(csv_path)
    if not path.exists():
        raise DataError(f"population file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("empty file", 1) from None
        for key in ("z", "x"):
            if cmap[key] not in header:
                raise ParseError(f"missing required column {cmap[key]!r}", 1)
        col = {k: header.index(v) for k, v in cmap.items() if v in header}
        z, x, y_cells, ids = [], [], [], []
        for row in reader:
            line = reader.line_num
            if not row or all(c.strip() == "" for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", line)
            z.append(_parse_float(row[col["z"]], cmap["z"], line))
            x.append(_parse_float(row[col["x"]], cmap["x"], line))
            if "y" in col:
                y_cells.append((row[col["y"]], line))
            ids.append(_id_key(row[col["id"]]) if "id" in col else len(ids) + 1)
    if len(z) < 2:
        raise DataError(f"population needs at least 2 units, got {len(z)}")
    if len(set(ids)) != len(ids):
        raise DataError("duplicate unit ids")
    y = None
    if y_cells and any(c.strip() for c, _ in y_cells):
        y = [_parse_float(c, cmap["y"], ln) for c, ln in y_cells]
    id_arr = np.asarray(ids) if all(isinstance(i, int) for i in ids) else np.asarray(ids, dtype=object)
    return Population.from_arrays(z, x, y, id_arr)


def load_domain_ids(source) -> list:
    """Read domain ids: a path to a one-id-per-line file, or an inline comma list."""
    if isinstance(source, (list, tuple)):
        return [_id_key(v) for v in source]
    path = Path(str(source))
    if path.exists():
        text = path.read_text(encoding="utf-8")
        tokens = [ln.strip() for ln in text.splitlines()]
    else:
        tokens = [t.strip() for t in str(source).split(",")]
    out = [_id_key(t) for t in tokens if t and not t.startswith("#")]
    if not out:
        raise DataError(f"no domain ids in {source!r}")
    return out


def domain_total(pop: Population, D: Domain) -> float:
    """Exact domain total of ``y``."""
    if pop.y is None:
        raise UnavailableOracleError("domain_total needs y for the whole population")
    return float(pop.y[D.members].sum())


def finite_pop_corr(u, v) -> float:
    """Pearson correlation computed over all units."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise DataError("finite_pop_corr needs two vectors of equal length >= 2")
    du = u - u.mean()
    dv = v - v.mean()
    su = np.sqrt(du @ du)
    sv = np.sqrt(dv @ dv)
    if su == 0 or sv == 0:
        raise DegenerateError("zero variance in correlation input")
    return float(np.clip((du @ dv) / (su * sv), -1.0, 1.0))
