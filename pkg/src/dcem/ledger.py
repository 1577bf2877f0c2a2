"""Energy ledger: kWh/year cells keyed by year, region, space type, category, class."""

import csv
import math
import os
from collections import defaultdict
from typing import NamedTuple

from .errors import MalformedRow, MissingFile, MissingYear, ValidationError

SPACE_TYPES = ("traditional", "cloud_nonhyperscale", "hyperscale")
CATEGORIES = ("server", "storage", "network")
REGIONS = ("north_america", "western_europe", "asia_pacific",
           "central_eastern_europe", "latin_america", "middle_east_africa")

LEDGER_HEADER = ("year", "region", "space_type", "category", "class_id", "quantity", "kwh")


class CellKey(NamedTuple):
    year: int
    region: str
    space_type: str
    category: str
    class_id: str


def check_key(key, regions=REGIONS):
    if key.space_type not in SPACE_TYPES:
        raise ValidationError(f"unknown space_type {key.space_type!r}")
    if key.category not in CATEGORIES:
        raise ValidationError(f"unknown category {key.category!r}")
    if key.region not in regions:
        raise ValidationError(f"unknown region {key.region!r}")


class EnergyLedger:
    """Annual electricity use per cell, plus the optional device quantity behind it.

    Adding a cell that already exists accumulates into it.
    """

    def __init__(self, cells=None, quantities=None, regions=REGIONS):
        self.regions = tuple(regions)
        self._kwh = {}
        self._qty = {}
        for key, kwh in (cells or {}).items():
            self.add(key, kwh, (quantities or {}).get(key))

    def add(self, key, kwh, quantity=None):
        key = CellKey(int(key[0]), *key[1:])
        check_key(key, self.regions)
        kwh = float(kwh)
        if not math.isfinite(kwh) or kwh < 0:
            raise ValidationError(f"kWh must be finite and >= 0, got {kwh} for {key}")
        self._kwh[key] = self._kwh.get(key, 0.0) + kwh
        if quantity is not None:
            self._qty[key] = self._qty.get(key, 0.0) + float(quantity)

    def __len__(self):
        return len(self._kwh)

    def __iter__(self):
        return iter(sorted(self._kwh))

    def __getitem__(self, key):
        return self._kwh[CellKey(*key)]

    def items(self):
        return [(k, self._kwh[k]) for k in sorted(self._kwh)]

    def quantity(self, key):
        return self._qty.get(CellKey(*key))

    @property
    def years(self):
        return sorted({k.year for k in self._kwh})

    def slice(self, year):
        if year not in self.years:
            raise MissingYear(year)
        return self.filter(lambda k: k.year == year)

    def filter(self, predicate):
        out = EnergyLedger(regions=self.regions)
        for k, v in self.items():
            if predicate(k):
                out.add(k, v, self._qty.get(k))
        return out

    def total(self, year=None):
        return math.fsum(v for k, v in self.items() if year is None or k.year == year)

    def group(self, *fields):
        """Sum kWh over all cells sharing the named key fields."""
        out = defaultdict(float)
        for k, v in self.items():
            out[tuple(getattr(k, f) for f in fields)] += v
        return dict(sorted(out.items()))

    def map_values(self, fn):
        """New ledger with ``kwh -> fn(key, kwh)`` applied to every cell."""
        out = EnergyLedger(regions=self.regions)
        for k, v in self.items():
            out.add(k, fn(k, v), self._qty.get(k))
        return out

    def merged(self, other):
        out = self.map_values(lambda k, v: v)
        for k, v in other.items():
            out.add(k, v, other.quantity(k))
        return out

    def to_csv(self, path):
        with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEDGER_HEADER)
            for k, v in self.items():
                q = self._qty.get(k)
                w.writerow([*k, "" if q is None else repr(q), repr(v)])

    @classmethod
    def from_csv(cls, path, regions=REGIONS):
        path = os.fspath(path)
        if not os.path.isfile(path):
            raise MissingFile(f"ledger file not found: {path}")
        out = cls(regions=regions)
        with open(path, newline="", encoding="utf-8-sig") as fh:
            reader = csv.reader(fh)
            header = tuple(h.strip() for h in next(reader, ()))
            if header != LEDGER_HEADER:
                raise MalformedRow(1, f"header must be {','.join(LEDGER_HEADER)}")
            for line, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != len(LEDGER_HEADER):
                    raise MalformedRow(line, f"expected {len(LEDGER_HEADER)} fields")
                try:
                    key = CellKey(int(row[0]), *(c.strip() for c in row[1:5]))
                    qty = float(row[5]) if row[5].strip() else None
                    out.add(key, float(row[6]), qty)
                except ValueError as exc:
                    raise MalformedRow(line, str(exc)) from None
        return out
