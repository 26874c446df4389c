"""Deterministic synthetic service catalogs with planted granule structure.

Values for each attribute come from small per-mode pools; the seed only
shuffles who gets which value, never the multiset drawn, so entity, triple,
and relation counts are fixed by the spec alone. Latent dimensions shared by
attribute pairs (education with service area, age with experience, hours with
certification) plant the multi-attribute structure the granular strategy
exploits.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .kg import CatalogRecord, CatalogTable

PAPER_PROVIDERS = 827
PAPER_TYPES = 16
THIRD_AREA_COUNT = 381  # with two areas each, lands the triple total on the nose

TYPE_NAMES = [
    "housekeeping",
    "nursery_teacher",
    "cooking",
    "gardening",
    "driving",
    "tutoring",
    "nursing",
    "plumbing",
    "electrics",
    "painting",
    "carpentry",
    "moving",
    "security",
    "pet_care",
    "massage",
    "translation",
]


@dataclass
class AttributeSpec:
    """One catalog column: per-mode value pools driven by a latent dimension."""

    name: str
    latent: str
    pools: list[list]
    ordered: bool = False
    extra_values: bool = False  # secondary values appended to the cell
    clone_value: object = None  # dedicated value for the duplicate block


@dataclass
class SyntheticCatalogSpec:
    seed: int = 1
    providers: int = PAPER_PROVIDERS
    type_names: list[str] = field(default_factory=lambda: list(TYPE_NAMES))
    type_sizes: list[int] | None = None
    attributes: list[AttributeSpec] = field(default_factory=lambda: default_attributes())
    latent_masses: dict[str, list[float]] = field(default_factory=lambda: default_masses())
    third_extra_count: int = THIRD_AREA_COUNT
    # leading providers of each type are exact duplicates: a block bigger than
    # the leaf threshold that no strategy can split (the no-attributes-left case)
    clone_block: int = 10

    @property
    def service_types(self) -> int:
        return len(self.type_names)


def default_attributes() -> list[AttributeSpec]:
    # star structure per latent dimension: a majority core shares one atomic
    # value on every attribute of the group, and each minority mode deviates
    # along exactly one attribute. Single columns then look like an atom plus
    # a small band (slow to peel one at a time), while the joint space shows
    # the whole group's granules at once.
    def frange(start, count, step):
        return [float(start + i * step) for i in range(count)]

    price_band = frange(3000, 31, 50)
    age_band = frange(21, 22, 1)
    exp_band = frange(5, 13, 1)
    hours_band = frange(28, 11, 2)
    areas = sorted([
        "downtown", "east", "gardens", "harbor", "hillside", "lakeside", "midtown",
        "north", "oldtown", "parkside", "riverside", "south", "uptown", "west",
    ])
    # weighted area pools: one dominant area per side plus a rare fringe, so a
    # single split cannot flatten the column
    area_west = [areas[0]] * 8 + areas[1:7]
    area_east = [areas[7]] * 8 + areas[8:]
    # cores are near-value pairs: invisible next to the petal separation, but
    # still granular once the petals are consumed. The duplicate block sits
    # inside the core pair: unique values, yet nothing a single cut can peel.
    return [
        AttributeSpec("price", "z_value", [[2250.0, 2350.0], price_band,
                                           [2250.0, 2350.0], [2250.0, 2350.0]],
                      clone_value=2300.0),
        AttributeSpec("rating", "z_value", [[2.0, 3.0], [2.0, 3.0], [4.0, 5.0], [2.0, 3.0]],
                      clone_value=2.5),
        AttributeSpec("certification", "z_value", [
            ["basic"], ["basic"], ["basic"], ["advanced"],
        ], ordered=True, clone_value="none"),
        AttributeSpec("age", "z_person", [[48.0, 50.0], age_band, [48.0, 50.0], [48.0, 50.0]],
                      clone_value=49.0),
        AttributeSpec("experience", "z_person", [[2.0, 3.0], [2.0, 3.0], exp_band, [2.0, 3.0]],
                      clone_value=2.5),
        AttributeSpec("education", "z_person", [
            ["college"], ["college"], ["college"], ["bachelor", "master"],
        ], ordered=True, clone_value="highschool"),
        AttributeSpec("hours", "z_place", [[20.0, 22.0], hours_band], clone_value=21.0),
        AttributeSpec("service_area", "z_place", [area_west, area_east], extra_values=True),
        AttributeSpec("gender", "z_gender", [["man"], ["woman"]]),
    ]


def default_masses() -> dict[str, list[float]]:
    return {
        "z_value": [0.67, 0.12, 0.11, 0.10],
        "z_person": [0.67, 0.12, 0.11, 0.10],
        "z_place": [0.78, 0.22],
        "z_gender": [0.75, 0.25],
    }


ORDERED_CATEGORIES = {
    "education": ["highschool", "college", "bachelor", "master"],
    "certification": ["none", "basic", "advanced"],
}


@dataclass
class GeneratedCatalog:
    table: CatalogTable
    truth: dict[str, dict[str, int]]  # provider id -> latent dim -> mode

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
        header = ["provider_id", "service_type"] + self.table.attributes
        buf.write(",".join(header) + "\n")
        for rec in self.table.records:
            row: list = [rec.provider_id, rec.service_type]
            for attr in self.table.attributes:
                value = rec.attributes[attr]
                row.append(";".join(value) if isinstance(value, tuple) else value)
            writer.writerow(row)
        return buf.getvalue()

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(), encoding="utf-8")
        return path


def apportion(masses: list[float], n: int) -> list[int]:
    """Largest-remainder allocation of n items to the mass vector."""
    total = sum(masses)
    quotas = [m / total * n for m in masses]
    counts = [math.floor(q) for q in quotas]
    leftovers = sorted(
        range(len(masses)), key=lambda i: (-(quotas[i] - counts[i]), i)
    )
    for i in leftovers[: n - sum(counts)]:
        counts[i] += 1
    return counts


def generate_catalog(spec: SyntheticCatalogSpec) -> GeneratedCatalog:
    """Emit the catalog rows plus the planted mode assignments."""
    if spec.providers < 1:
        raise ConfigError("need at least one provider")
    sizes = spec.type_sizes or apportion([1.0] * spec.service_types, spec.providers)
    if len(sizes) != spec.service_types or sum(sizes) != spec.providers:
        raise ConfigError("type sizes must cover every provider")
    for latent, masses in spec.latent_masses.items():
        active = sum(1 for m in masses if m > 0)
        if any(active > n for n in sizes):
            raise ConfigError(f"latent {latent!r} has more modes than some type has providers")

    rng = np.random.default_rng(spec.seed)

    provider_ids: list[str] = []
    provider_type: list[str] = []
    for tname, size in zip(spec.type_names, sizes):
        for i in range(size):
            provider_ids.append(f"{tname}_{i:04d}")
            provider_type.append(tname)
    n = len(provider_ids)

    block = min(spec.clone_block, min(sizes) - 1) if spec.clone_block else 0
    block = max(block, 0)
    clone_rows: set[int] = set()
    offset = 0
    for size in sizes:
        clone_rows.update(range(offset, offset + block))
        offset += size

    # latent mode per provider: clones pinned to mode 0, exact per-type counts
    # for the rest, seeded shuffle inside the type
    latent_modes: dict[str, np.ndarray] = {}
    for latent, masses in sorted(spec.latent_masses.items()):
        assignment = np.empty(n, dtype=int)
        offset = 0
        for size in sizes:
            counts = apportion(masses, size - block)
            free = np.repeat(np.arange(len(masses)), counts)
            rng.shuffle(free)
            assignment[offset : offset + block] = 0
            assignment[offset + block : offset + size] = free
            offset += size
        latent_modes[latent] = assignment

    # primary value per attribute: clones take the first core value, everyone
    # else cycles the mode pool globally with a seeded shuffle of who gets what
    cells: dict[str, list] = {}
    for attr in spec.attributes:
        modes = latent_modes[attr.latent]
        values: list = [None] * n
        clone_value = attr.clone_value if attr.clone_value is not None else attr.pools[0][0]
        for row in clone_rows:
            values[row] = clone_value
        for mode, pool in enumerate(attr.pools):
            rows = np.flatnonzero(modes == mode)
            rows = rows[[r not in clone_rows for r in rows]]
            if len(rows) == 0:
                continue
            # cycling covers every pool value as long as the mode has at least
            # as many providers as the pool; tiny custom specs may not
            multiset = [pool[i % len(pool)] for i in range(len(rows))]
            order = rng.permutation(len(rows))
            for slot, row in zip(order, rows):
                values[row] = multiset[slot]
        cells[attr.name] = values

    # secondary values: one from the opposite mode pool for everyone, plus a
    # third from the provider's own pool for a fixed number of providers
    for attr in spec.attributes:
        if not attr.extra_values:
            continue
        if len(attr.pools) != 2:
            raise ConfigError("extra values need exactly two mode pools")
        modes = latent_modes[attr.latent]
        second: list = [None] * n
        for mode, pool in enumerate(attr.pools):
            opposite = attr.pools[1 - mode]
            rows = np.flatnonzero(modes == mode)
            multiset = [opposite[i % len(opposite)] for i in range(len(rows))]
            order = rng.permutation(len(rows))
            for slot, row in zip(order, rows):
                second[row] = multiset[slot]
        third_rows = set()
        if spec.third_extra_count:
            if spec.third_extra_count > n:
                raise ConfigError("third-value count exceeds provider count")
            third_rows = set(rng.choice(n, size=spec.third_extra_count, replace=False).tolist())
        merged: list = []
        for row in range(n):
            cell = [cells[attr.name][row], second[row]]
            if row in third_rows:
                pool = attr.pools[modes[row]]
                base = pool.index(cell[0])
                for step in range(1, len(pool)):
                    extra = pool[(base + step) % len(pool)]
                    if extra != cell[0]:
                        cell.append(extra)
                        break
            merged.append(tuple(cell))
        cells[attr.name] = merged

    records = []
    truth: dict[str, dict[str, int]] = {}
    for row in range(n):
        attrs = {attr.name: cells[attr.name][row] for attr in spec.attributes}
        records.append(CatalogRecord(provider_ids[row], provider_type[row], attrs))
        truth[provider_ids[row]] = {
            latent: int(latent_modes[latent][row]) for latent in sorted(spec.latent_masses)
        }
    table = CatalogTable([a.name for a in spec.attributes], records)
    return GeneratedCatalog(table, truth)


def planted_price_spec(seed: int = 0, providers: int = 60, modes: int = 2) -> SyntheticCatalogSpec:
    """Minimal spec with one multi-modal price attribute, for recovery tests."""
    pools = [
        [float(1000 + 2500 * m + 50 * j) for j in range(4)] for m in range(modes)
    ]
    return SyntheticCatalogSpec(
        seed=seed,
        providers=providers,
        type_names=["demo"],
        type_sizes=[providers],
        attributes=[AttributeSpec("price", "z_price", pools)],
        latent_masses={"z_price": [1.0 / modes] * modes},
        third_extra_count=0,
    )


FIXTURE_ATTRIBUTES = [
    "price", "gender", "age", "experience", "hours", "rating",
    "education", "service_area", "certification",
]


def fixture_catalog() -> GeneratedCatalog:
    """Hand-shaped two-type catalog used by the worked-example tests.

    The housekeeping type layers price, gender, and age above a weaker
    experience split so an opener that already fixes the first three gets an
    experience question next. The nursery-teacher type chains six tiers so
    its longest elicitation spans seven rounds and bottoms out on a block of
    nine identical offers.
    """
    records = [_housekeeping_record(i) for i in range(128)]
    records += _nursery_records()
    truth: dict[str, dict[str, int]] = {rec.provider_id: {} for rec in records}
    return GeneratedCatalog(CatalogTable(list(FIXTURE_ATTRIBUTES), records), truth)


def _housekeeping_record(i: int) -> CatalogRecord:
    rep = i % 8
    cell = i // 8  # 16 balanced cells over price x gender x age x experience
    price_hi = cell & 1
    woman = (cell >> 1) & 1
    old = (cell >> 2) & 1
    exp_hi = (cell >> 3) & 1
    # experience bands overlap so the opening round cannot consume the
    # attribute together with the crisp price/gender/age tiers
    exp_band = [5.0, 7.0, 8.0, 10.0] if exp_hi else [1.0, 3.0, 4.0, 6.0]
    return CatalogRecord(
        f"housekeeping_{i:04d}",
        "housekeeping",
        {
            "price": (4200.0 if price_hi else 1500.0) + 40.0 * rep,
            "gender": "woman" if woman else "man",
            "age": (48.0 if old else 23.0) + float(rep % 5),
            "experience": exp_band[rep % 4],
            "hours": 30.0,
            "rating": 3.0,
            "education": "college",
            "service_area": "north",
            "certification": "basic",
        },
    )


def _nursery_records(low_mass: float = 0.74, seed: int = 20240501) -> list[CatalogRecord]:
    # eight structured dimensions with graded blur: the tree consumes them over
    # six question rounds, and a block of nine identical offers rides the heavy
    # branch until nothing is left to ask
    rng = np.random.default_rng(seed)
    records = []
    clone_attrs = {
        "price": 1800.0, "gender": "man", "age": 24.0, "experience": 2.0,
        "hours": 20.0, "rating": 4.0, "education": "college",
        "service_area": "downtown", "certification": "basic",
    }
    for i in range(9):
        records.append(
            CatalogRecord(f"nursery_teacher_{i:04d}", "nursery_teacher", dict(clone_attrs))
        )
    dims = ["gender", "price", "age", "experience", "hours", "rating",
            "education", "service_area"]
    for i in range(9, 120):
        z = {d: int(rng.random() > low_mass) for d in dims}
        r = {d: rng.random() for d in ["price", "age", "experience", "hours", "rating"]}

        def num(d, center, gap, width):
            return round(center + z[d] * gap + (r[d] - 0.5) * width, 1)

        attrs = {
            "gender": "woman" if z["gender"] else "man",
            "price": num("price", 2000.0, 1600.0, 700.0),
            "age": num("age", 25.0, 14.0, 6.0),
            "experience": num("experience", 4.0, 5.0, 8.0),
            "hours": num("hours", 22.0, 8.0, 16.0),
            "rating": round(3.2 + z["rating"] * 1.3 + (r["rating"] - 0.5) * 1.4, 1),
            "education": (["college", "bachelor", "master"][int(rng.integers(0, 3))]
                          if z["education"] else
                          ["highschool", "college"][int(rng.integers(0, 2))]),
            "service_area": (["north", "south", "uptown"][int(rng.integers(0, 3))]
                             if z["service_area"] else
                             ["downtown", "east", "north"][int(rng.integers(0, 3))]),
            "certification": "basic",
        }
        records.append(CatalogRecord(f"nursery_teacher_{i:04d}", "nursery_teacher", attrs))
    return records
