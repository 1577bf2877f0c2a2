"""Power and annual energy of servers, external storage and network gear.

Servers follow an idle-to-peak utilization curve (linear, or piecewise linear
through 11 knots at 0.0, 0.1, ..., 1.0). Storage draws a fixed W per TB and
network gear a fixed W per port. Devices run 8760 h/year.
"""

import csv
import math
import os
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_consistent_length, check_is_fitted

from .errors import (MalformedRow, MissingFile, MissingYear, UnknownClass,
                     UtilizationOutOfRange, ValidationError)
from .ledger import CATEGORIES, REGIONS, SPACE_TYPES, CellKey, EnergyLedger, check_key
from .validation import check_nonnegative

HOURS_PER_YEAR = 8760
CURVE_UTILIZATION = np.linspace(0.0, 1.0, 11)


@dataclass(frozen=True)
class ServerClass:
    class_id: str
    cores: int
    p_idle: float
    p_max: float
    avg_utilization: dict = field(default_factory=dict)
    utilization_curve: tuple | None = None
    # stand-in for chip cooling / interface-material effects, scales p_max
    thermal_multiplier: float = 1.0

    def __post_init__(self):
        if not 0 <= self.p_idle <= self.p_max:
            raise ValidationError(f"{self.class_id}: need 0 <= p_idle <= p_max")
        check_nonnegative(self.thermal_multiplier, "thermal_multiplier")
        if self.p_max * self.thermal_multiplier < self.p_idle:
            raise ValidationError(f"{self.class_id}: thermal_multiplier pushes p_max below p_idle")
        for st, u in self.avg_utilization.items():
            if st not in SPACE_TYPES:
                raise ValidationError(f"{self.class_id}: unknown space type {st!r}")
            if not 0 <= u <= 1:
                raise ValidationError(f"{self.class_id}: utilization {u} outside [0, 1]")
        if self.utilization_curve is not None:
            curve = tuple(float(w) for w in self.utilization_curve)
            if len(curve) != 11:
                raise ValidationError(f"{self.class_id}: curve needs 11 values")
            if not (math.isclose(curve[0], self.p_idle) and math.isclose(curve[-1], self.p_max)):
                raise ValidationError(f"{self.class_id}: curve endpoints must equal p_idle, p_max")
            if any(b < a for a, b in zip(curve, curve[1:])):
                raise ValidationError(f"{self.class_id}: curve must be nondecreasing")
            object.__setattr__(self, "utilization_curve", curve)


@dataclass(frozen=True)
class StorageClass:
    class_id: str
    drive_type: str
    watts_per_tb: float

    def __post_init__(self):
        if self.drive_type not in ("HDD", "SSD"):
            raise ValidationError(f"{self.class_id}: drive_type must be HDD or SSD")
        check_nonnegative(self.watts_per_tb, "watts_per_tb")


@dataclass(frozen=True)
class NetworkClass:
    class_id: str
    watts_per_port: float

    def __post_init__(self):
        check_nonnegative(self.watts_per_port, "watts_per_port")


def server_power(server, utilization):
    """Power draw in W of one server at ``utilization`` in [0, 1].

    A ``thermal_multiplier`` other than 1 moves the peak to
    ``thermal_multiplier * p_max`` and rescales the curve above idle to match.
    """
    if not 0.0 <= utilization <= 1.0:
        raise UtilizationOutOfRange(f"utilization {utilization} outside [0, 1]")
    if server.utilization_curve is not None:
        p = float(np.interp(utilization, CURVE_UTILIZATION, server.utilization_curve))
    else:
        p = server.p_idle + (server.p_max - server.p_idle) * utilization
    m = server.thermal_multiplier
    if m != 1.0:
        # stretch the dynamic range so the peak lands on m * p_max
        if server.p_max > server.p_idle:
            p = server.p_idle + (p - server.p_idle) * (m * server.p_max - server.p_idle) / (
                server.p_max - server.p_idle)
        else:
            p = server.p_idle + (m * server.p_max - server.p_idle) * utilization
    return p


@dataclass
class ClassRegistry:
    servers: dict = field(default_factory=dict)
    storage: dict = field(default_factory=dict)
    network: dict = field(default_factory=dict)

    def lookup(self, category, class_id):
        table = {"server": self.servers, "storage": self.storage,
                 "network": self.network}[category]
        try:
            return table[class_id]
        except KeyError:
            raise UnknownClass(class_id) from None

    def unit_power(self, category, class_id, space_type):
        """W per unit (server, TB or port) for one class in one space type."""
        cls = self.lookup(category, class_id)
        if category == "server":
            try:
                u = cls.avg_utilization[space_type]
            except KeyError:
                raise ValidationError(
                    f"{class_id}: no average utilization for {space_type}") from None
            return server_power(cls, u)
        if category == "storage":
            return cls.watts_per_tb
        return cls.watts_per_port


class BaseEntry(NamedTuple):
    year: int
    region: str
    space_type: str
    category: str
    class_id: str
    quantity: float


class InstalledBase:
    """Operating stock per (year, region, space type, category, class).

    Quantities are server counts, TB of external storage, or network ports.
    Entries are kept as given; repeated keys simply add up downstream.
    """

    HEADER = ("year", "region", "space_type", "category", "class_id", "quantity")

    def __init__(self, entries=(), regions=REGIONS):
        self.regions = tuple(regions)
        self.entries = []
        for e in entries:
            self.add(*e)

    def add(self, year, region, space_type, category, class_id, quantity):
        entry = BaseEntry(int(year), region, space_type, category, class_id, float(quantity))
        check_key(CellKey(*entry[:5]), self.regions)
        if not math.isfinite(entry.quantity) or entry.quantity < 0:
            raise ValidationError(f"quantity must be >= 0, got {quantity}")
        self.entries.append(entry)

    def __len__(self):
        return len(self.entries)

    @property
    def years(self):
        return sorted({e.year for e in self.entries})

    def scaled(self, factor):
        return InstalledBase([(*e[:5], e.quantity * factor) for e in self.entries],
                             self.regions)

    @classmethod
    def from_csv(cls, path, regions=REGIONS):
        rows = _read_table(path, cls.HEADER)
        base = cls(regions=regions)
        for line, row in rows:
            try:
                base.add(int(row["year"]), row["region"], row["space_type"],
                         row["category"], row["class_id"], float(row["quantity"]))
            except ValueError as exc:
                raise MalformedRow(line, str(exc)) from None
        return base

    def to_csv(self, path):
        with open(os.fspath(path), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.HEADER)
            for e in self.entries:
                w.writerow([*e[:5], repr(e.quantity)])


def fleet_annual_energy(base, classes, year):
    """kWh/year for every installed-base entry of ``year``.

    An empty installed base yields an empty ledger; a non-empty base without
    entries for ``year`` raises ``MissingYear``.
    """
    if base.entries and year not in base.years:
        raise MissingYear(year)
    ledger = EnergyLedger(regions=base.regions)
    for e in base.entries:
        if e.year != year:
            continue
        watts = classes.unit_power(e.category, e.class_id, e.space_type)
        ledger.add(e[:5], watts * e.quantity * HOURS_PER_YEAR / 1000.0, e.quantity)
    return ledger


def _read_table(path, header):
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise MissingFile(f"file not found: {path}")
    with open(path, newline="", encoding="utf-8-sig") as fh:
        reader = csv.reader(fh)
        got = tuple(h.strip() for h in next(reader, ()))
        if got != tuple(header):
            raise MalformedRow(1, f"header must be {','.join(header)}")
        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedRow(line, f"expected {len(header)} fields, got {len(row)}")
            rows.append((line, dict(zip(header, (c.strip() for c in row)))))
    return rows


SERVER_HEADER = ("class_id", "cores", "p_idle_w", "p_max_w", "util_traditional",
                 "util_cloud_nonhyperscale", "util_hyperscale", "curve_w",
                 "thermal_multiplier")
STORAGE_HEADER = ("class_id", "drive_type", "watts_per_tb")
NETWORK_HEADER = ("class_id", "watts_per_port")


def load_class_registry(server_path, storage_path, network_path):
    """Read the three class tables.

    ``curve_w`` holds 11 semicolon-separated watt values or is left blank;
    a blank ``thermal_multiplier`` means 1.0.
    """
    reg = ClassRegistry()
    for line, row in _read_table(server_path, SERVER_HEADER):
        try:
            util = {st: float(row[f"util_{st}"]) for st in SPACE_TYPES if row[f"util_{st}"]}
            curve = (tuple(float(w) for w in row["curve_w"].split(";"))
                     if row["curve_w"] else None)
            reg.servers[row["class_id"]] = ServerClass(
                row["class_id"], int(row["cores"]), float(row["p_idle_w"]),
                float(row["p_max_w"]), util, curve,
                float(row["thermal_multiplier"] or 1.0))
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
    for line, row in _read_table(storage_path, STORAGE_HEADER):
        try:
            reg.storage[row["class_id"]] = StorageClass(
                row["class_id"], row["drive_type"], float(row["watts_per_tb"]))
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
    for line, row in _read_table(network_path, NETWORK_HEADER):
        try:
            reg.network[row["class_id"]] = NetworkClass(row["class_id"],
                                                        float(row["watts_per_port"]))
        except ValueError as exc:
            raise MalformedRow(line, str(exc)) from None
    return reg


def write_class_registry(reg, server_path, storage_path, network_path):
    with open(server_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERVER_HEADER)
        for cid in sorted(reg.servers):
            s = reg.servers[cid]
            curve = ";".join(repr(x) for x in s.utilization_curve) if s.utilization_curve else ""
            w.writerow([cid, s.cores, repr(s.p_idle), repr(s.p_max),
                        *[repr(s.avg_utilization[st]) if st in s.avg_utilization else ""
                          for st in SPACE_TYPES],
                        curve, repr(s.thermal_multiplier)])
    with open(storage_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STORAGE_HEADER)
        for cid in sorted(reg.storage):
            s = reg.storage[cid]
            w.writerow([cid, s.drive_type, repr(s.watts_per_tb)])
    with open(network_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(NETWORK_HEADER)
        for cid in sorted(reg.network):
            w.writerow([cid, repr(reg.network[cid].watts_per_port)])


class ServerPowerModel(RegressorMixin, BaseEstimator):
    """Linear idle/peak server power model fitted to (utilization, watts) data.

    Least squares on ``P = p_idle + (p_max - p_idle) * u``, with the fitted
    coefficients projected onto ``0 <= p_idle <= p_max``.
    """

    def __init__(self, thermal_multiplier=1.0):
        self.thermal_multiplier = thermal_multiplier

    def fit(self, X, y):
        u = check_array(X, ensure_2d=False, dtype=np.float64).reshape(-1)
        y = np.asarray(y, dtype=np.float64).reshape(-1)
        check_consistent_length(u, y)
        if np.any((u < 0) | (u > 1)):
            raise UtilizationOutOfRange("utilization values must lie in [0, 1]")
        A = np.column_stack([np.ones_like(u), u])
        (idle, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
        idle = max(idle, 0.0)
        peak = max(idle + slope, idle)
        self.p_idle_ = float(idle)
        self.p_max_ = float(peak)
        self.server_class_ = ServerClass("fitted", 0, self.p_idle_, self.p_max_,
                                         thermal_multiplier=self.thermal_multiplier)
        return self

    def predict(self, X):
        check_is_fitted(self, "server_class_")
        u = check_array(X, ensure_2d=False, dtype=np.float64).reshape(-1)
        return np.array([server_power(self.server_class_, float(v)) for v in u])


__all__ = ["ServerClass", "StorageClass", "NetworkClass", "ClassRegistry", "InstalledBase",
           "ServerPowerModel", "server_power", "fleet_annual_energy",
           "load_class_registry", "write_class_registry", "CATEGORIES", "HOURS_PER_YEAR"]
