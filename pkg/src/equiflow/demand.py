"""Regions, budgets, and O-D commuting demands split into bike-capable classes.

Daily user counts from demand files are converted to steady-state rates in
users/min over a configurable operating window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Mapping

from .errors import PartitionError, SchemaError
from .netmodel import Layer, Network


@dataclass(frozen=True)
class Region:
    id: int
    population: float  # persons
    budget: float  # currency per trip


@dataclass(frozen=True)
class Demand:
    id: int
    origin: int  # origin-layer node id
    destination: int  # destination-layer node id
    rate: float  # users/min, > 0
    region: int
    bike_capable: bool


@dataclass(frozen=True)
class DemandSet:
    regions: tuple[Region, ...]
    demands: tuple[Demand, ...]
    operating_window_min: float

    @cached_property
    def region_by_id(self) -> dict[int, Region]:
        return {r.id: r for r in self.regions}

    @cached_property
    def demands_by_region(self) -> dict[int, tuple[Demand, ...]]:
        grouped: dict[int, list[Demand]] = {r.id: [] for r in self.regions}
        for d in self.demands:
            grouped.setdefault(d.region, []).append(d)
        return {k: tuple(v) for k, v in grouped.items()}

    @cached_property
    def total_rate(self) -> float:
        return sum(d.rate for d in self.demands)

    @cached_property
    def total_population(self) -> float:
        return sum(r.population for r in self.regions)


_TOP_KEYS = {"operating_window_min", "regions", "demands", "n_pop"}
_REGION_KEYS = {"id", "population", "budget"}
_DEMAND_KEYS = {"origin", "destination", "daily_users", "region", "bike_capable"}


def demand_set_from_doc(doc: Mapping) -> DemandSet:
    if not isinstance(doc, Mapping):
        raise SchemaError("demand document must be a JSON object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SchemaError(f"demand document: unknown fields {sorted(unknown)}")
    for key in ("operating_window_min", "regions", "demands"):
        if key not in doc:
            raise SchemaError(f"demand document: missing field '{key}'")

    window = doc["operating_window_min"]
    if isinstance(window, bool) or not isinstance(window, (int, float)) or window <= 0:
        raise SchemaError(f"operating_window_min must be a positive number, got {window!r}")
    window = float(window)

    regions: list[Region] = []
    seen_regions: set[int] = set()
    for i, rd in enumerate(doc["regions"]):
        where = f"regions[{i}]"
        if not isinstance(rd, Mapping) or set(rd) != _REGION_KEYS:
            raise SchemaError(f"{where}: must be an object with fields {sorted(_REGION_KEYS)}")
        rid = rd["id"]
        if isinstance(rid, bool) or not isinstance(rid, int):
            raise SchemaError(f"{where}: 'id' must be an integer")
        if rid in seen_regions:
            raise SchemaError(f"{where}: duplicate region id {rid}")
        seen_regions.add(rid)
        pop = rd["population"]
        budget = rd["budget"]
        for name, v in (("population", pop), ("budget", budget)):
            if isinstance(v, bool) or not isinstance(v, (int, float)) or v < 0:
                raise SchemaError(f"{where}: '{name}' must be a nonnegative number")
        regions.append(Region(id=rid, population=float(pop), budget=float(budget)))

    if "n_pop" in doc:
        declared = doc["n_pop"]
        total = sum(r.population for r in regions)
        if isinstance(declared, bool) or not isinstance(declared, (int, float)):
            raise SchemaError("n_pop must be a number")
        if abs(float(declared) - total) > 1e-9 * max(1.0, total):
            raise SchemaError(
                f"declared n_pop {declared} does not equal the region population sum {total}"
            )

    demands: list[Demand] = []
    seen_class: set[tuple[int, int, int, bool]] = set()
    next_id = 0
    for i, dd in enumerate(doc["demands"]):
        where = f"demands[{i}]"
        if not isinstance(dd, Mapping) or set(dd) != _DEMAND_KEYS:
            raise SchemaError(f"{where}: must be an object with fields {sorted(_DEMAND_KEYS)}")
        daily = dd["daily_users"]
        if isinstance(daily, bool) or not isinstance(daily, (int, float)) or daily < 0:
            raise SchemaError(f"{where}: 'daily_users' must be a nonnegative number")
        region = dd["region"]
        if isinstance(region, bool) or not isinstance(region, int):
            raise SchemaError(f"{where}: 'region' must be an integer")
        if region not in seen_regions:
            raise SchemaError(f"{where}: unknown region {region}")
        capable = dd["bike_capable"]
        if not isinstance(capable, bool):
            raise SchemaError(f"{where}: 'bike_capable' must be a boolean")
        for name in ("origin", "destination"):
            v = dd[name]
            if isinstance(v, bool) or not isinstance(v, int):
                raise SchemaError(f"{where}: '{name}' must be an integer node id")
        key = (region, dd["origin"], dd["destination"], capable)
        if key in seen_class:
            raise PartitionError(
                f"{where}: duplicate demand class entry for region {region}, "
                f"O-D ({dd['origin']}, {dd['destination']}), bike_capable={capable}"
            )
        seen_class.add(key)
        if daily == 0:
            continue  # zero-rate demands are dropped (objectives divide by the rate)
        demands.append(
            Demand(
                id=next_id,
                origin=dd["origin"],
                destination=dd["destination"],
                rate=float(daily) / window,
                region=region,
                bike_capable=capable,
            )
        )
        next_id += 1

    return DemandSet(regions=tuple(regions), demands=tuple(demands), operating_window_min=window)


def demand_set_to_doc(dem: DemandSet) -> dict:
    return {
        "operating_window_min": dem.operating_window_min,
        "regions": [
            {"id": r.id, "population": r.population, "budget": r.budget} for r in dem.regions
        ],
        "demands": [
            {
                "origin": d.origin,
                "destination": d.destination,
                "daily_users": d.rate * dem.operating_window_min,
                "region": d.region,
                "bike_capable": d.bike_capable,
            }
            for d in dem.demands
        ],
    }


def load_demand(path) -> DemandSet:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read demand file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"demand file {path} is not valid JSON: {exc}") from exc
    return demand_set_from_doc(doc)


def save_demand(dem: DemandSet, path) -> None:
    from . import _json

    _json.dump_path(demand_set_to_doc(dem), path)


def split_by_bike_share(dem: DemandSet, share_incapable) -> DemandSet:
    """Split every demand into a bike-capable and a bike-incapable part.

    ``share_incapable`` is either one fraction for all regions or a mapping
    region id -> fraction. Input class flags are discarded: each demand's rate
    is treated as the total for its O-D pair and reassigned, so the total rate
    is preserved exactly. Zero-rate halves are dropped.
    """
    if isinstance(share_incapable, Mapping):
        shares = dict(share_incapable)
        missing = {d.region for d in dem.demands} - set(shares)
        if missing:
            raise SchemaError(f"split_by_bike_share: no share given for regions {sorted(missing)}")
    else:
        shares = {r.id: float(share_incapable) for r in dem.regions}
    for rid, s in shares.items():
        if not (0.0 <= s <= 1.0):
            raise SchemaError(f"split_by_bike_share: share {s} for region {rid} outside [0, 1]")

    out: list[Demand] = []
    next_id = 0
    for d in dem.demands:
        s = shares[d.region]
        incapable = d.rate * s
        capable = d.rate - incapable
        if capable > 0.0:
            out.append(replace(d, id=next_id, rate=capable, bike_capable=True))
            next_id += 1
        if incapable > 0.0:
            out.append(replace(d, id=next_id, rate=incapable, bike_capable=False))
            next_id += 1
    return replace(dem, demands=tuple(out))


def cross_validate(net: Network, dem: DemandSet) -> list[str]:
    """Check demand references against a network (origins, destinations, regions)."""
    violations: list[str] = []
    by_id = net.node_by_id
    for d in dem.demands:
        o = by_id.get(d.origin)
        if o is None or o.layer is not Layer.ORIGIN:
            violations.append(f"demand {d.id}: origin {d.origin} is not an origin-layer node")
        elif o.region != d.region:
            violations.append(
                f"demand {d.id}: origin node region {o.region} does not match demand region {d.region}"
            )
        t = by_id.get(d.destination)
        if t is None or t.layer is not Layer.DESTINATION:
            violations.append(
                f"demand {d.id}: destination {d.destination} is not a destination-layer node"
            )
        if d.region not in dem.region_by_id:
            violations.append(f"demand {d.id}: unknown region {d.region}")
        if not (d.rate > 0.0):
            violations.append(f"demand {d.id}: nonpositive rate {d.rate}")
    return violations
