"""Exhaustive dialog simulation and strategy comparison.

Every catalog service plays the user's single best target once; a path's
round count is its leaf depth and its hit rate is the chance the target
appears among the recommended items drawn from that leaf.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .policy import PolicyTree


def hit_rate(l: int, n: int) -> float:
    """Probability that the one target service appears in n picks from l.

    Computed through the binomial form C(l-1, n-1) / C(l, n); algebraically
    this is n/l and the two are cross-checked at build time by the tests.
    """
    if n < 1 or n > l:
        raise ConfigError(f"recommendation count {n} outside [1, {l}]")
    return math.comb(l - 1, n - 1) / math.comb(l, n)


@dataclass
class TypeStats:
    """Simulation outcome for one service type."""

    service_type: str
    cases: int  # r: one test case per catalog service
    round_histogram: dict[int, int]
    leaf_sizes: list[int]
    avg_rounds: float
    avg_hit: float
    hit_by_round: dict[int, float]


@dataclass
class SimulationReport:
    strategy: str
    types: dict[str, TypeStats] = field(default_factory=dict)
    fingerprint: str = ""

    @property
    def total_cases(self) -> int:
        return sum(t.cases for t in self.types.values())

    @property
    def avg_rounds(self) -> float:
        return sum(t.avg_rounds * t.cases for t in self.types.values()) / self.total_cases

    @property
    def avg_hit(self) -> float:
        return sum(t.avg_hit * t.cases for t in self.types.values()) / self.total_cases

    @property
    def max_round(self) -> int:
        return max(max(t.round_histogram) for t in self.types.values())

    def pooled_histogram(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for t in self.types.values():
            for rounds, count in t.round_histogram.items():
                out[rounds] = out.get(rounds, 0) + count
        return dict(sorted(out.items()))

    def pooled_hit_by_round(self) -> dict[int, float]:
        weight: dict[int, int] = {}
        total: dict[int, float] = {}
        for t in self.types.values():
            for rounds, count in t.round_histogram.items():
                weight[rounds] = weight.get(rounds, 0) + count
                total[rounds] = total.get(rounds, 0.0) + t.hit_by_round[rounds] * count
        return {r: total[r] / weight[r] for r in sorted(weight)}


def catalog_fingerprint(trees: list[PolicyTree]) -> str:
    blob = "|".join(
        f"{t.service_type}:{','.join(sorted(t.root.candidates))}"
        for t in sorted(trees, key=lambda t: t.service_type)
    )
    return hashlib.sha1(blob.encode("utf-8")).hexdigest()[:16]


def simulate_all_paths(tree: PolicyTree) -> SimulationReport:
    """Enumerate every root-to-leaf path once per target service in its leaf."""
    histogram: dict[int, int] = {}
    hit_total: dict[int, float] = {}
    sizes: list[int] = []
    rounds_sum = 0.0
    hit_sum = 0.0
    cases = 0
    for leaf in tree.leaves():
        l = len(leaf.candidates)
        if l == 0:
            continue
        n_rec = min(tree.n_threshold, l)
        hit = hit_rate(l, n_rec)
        sizes.append(l)
        histogram[leaf.depth] = histogram.get(leaf.depth, 0) + l
        hit_total[leaf.depth] = hit_total.get(leaf.depth, 0.0) + hit * l
        rounds_sum += leaf.depth * l
        hit_sum += hit * l
        cases += l
    stats = TypeStats(
        service_type=tree.service_type,
        cases=cases,
        round_histogram=dict(sorted(histogram.items())),
        leaf_sizes=sorted(sizes),
        avg_rounds=rounds_sum / cases,
        avg_hit=hit_sum / cases,
        hit_by_round={r: hit_total[r] / histogram[r] for r in sorted(histogram)},
    )
    report = SimulationReport(tree.strategy, {tree.service_type: stats})
    report.fingerprint = catalog_fingerprint([tree])
    return report


def merge_reports(reports: list[SimulationReport], fingerprint: str = "") -> SimulationReport:
    """Combine single-type reports of one strategy into a catalog-level report."""
    if not reports:
        raise ConfigError("nothing to merge")
    strategies = {r.strategy for r in reports}
    if len(strategies) != 1:
        raise ConfigError(f"cannot merge mixed strategies {strategies}")
    merged = SimulationReport(reports[0].strategy, fingerprint=fingerprint)
    for rep in reports:
        for name, stats in rep.types.items():
            if name in merged.types:
                raise ConfigError(f"duplicate service type {name!r}")
            merged.types[name] = stats
    return merged


@dataclass
class Comparison:
    """Side-by-side numbers for the granular and baseline strategies."""

    grc_avg_rounds: float
    km_avg_rounds: float
    grc_avg_hit: float
    km_avg_hit: float
    round_reduction: float  # (km - grc) / km
    round_delta: float  # km - grc
    hit_gap: float  # |grc - km| in percentage points
    grc_curve: dict[int, float]  # round -> cumulative completion share
    km_curve: dict[int, float]
    grc_hit_by_round: dict[int, float]
    km_hit_by_round: dict[int, float]
    per_type: dict[str, dict[str, float]]

    def to_text(self) -> str:
        lines = [
            "strategy comparison",
            f"  avg rounds   grc={self.grc_avg_rounds:.3f}  kmeans={self.km_avg_rounds:.3f}",
            f"  avg hit rate grc={100 * self.grc_avg_hit:.2f}%  kmeans={100 * self.km_avg_hit:.2f}%",
            f"  round reduction (kmeans baseline): {100 * self.round_reduction:.1f}%",
            f"  hit-rate gap: {self.hit_gap:.2f} points",
            "",
            "per-type blocks",
        ]
        for name in sorted(self.per_type):
            row = self.per_type[name]
            lines.append(
                f"  [{name}] rounds {row['grc_rounds']:.3f} vs {row['km_rounds']:.3f}"
                f" | hit {100 * row['grc_hit']:.2f}% vs {100 * row['km_hit']:.2f}%"
                f" | cases {int(row['cases'])}"
            )
        lines.append("")
        lines.append("cumulative completion by round (grc / kmeans)")
        for r in sorted(set(self.grc_curve) | set(self.km_curve)):
            g = 100 * self.grc_curve.get(r, 1.0)
            k = 100 * self.km_curve.get(r, 1.0)
            lines.append(f"  round {r}: {g:6.2f}% / {k:6.2f}%")
        return "\n".join(lines) + "\n"


def _cumulative_curve(report: SimulationReport) -> dict[int, float]:
    hist = report.pooled_histogram()
    total = report.total_cases
    out: dict[int, float] = {}
    acc = 0
    for r in range(1, max(hist) + 1):
        acc += hist.get(r, 0)
        out[r] = acc / total
    return out


def compare(grc: SimulationReport, km: SimulationReport) -> Comparison:
    """Contrast the two strategies over the same catalog."""
    if set(grc.types) != set(km.types):
        raise ConfigError("reports cover different service types")
    if grc.fingerprint != km.fingerprint:
        raise ConfigError("reports were built over different catalogs")
    for name in grc.types:
        if grc.types[name].cases != km.types[name].cases:
            raise ConfigError(f"case counts differ for {name!r}")
    per_type = {
        name: {
            "grc_rounds": grc.types[name].avg_rounds,
            "km_rounds": km.types[name].avg_rounds,
            "grc_hit": grc.types[name].avg_hit,
            "km_hit": km.types[name].avg_hit,
            "cases": float(grc.types[name].cases),
        }
        for name in grc.types
    }
    return Comparison(
        grc_avg_rounds=grc.avg_rounds,
        km_avg_rounds=km.avg_rounds,
        grc_avg_hit=grc.avg_hit,
        km_avg_hit=km.avg_hit,
        round_reduction=(km.avg_rounds - grc.avg_rounds) / km.avg_rounds,
        round_delta=km.avg_rounds - grc.avg_rounds,
        hit_gap=abs(grc.avg_hit - km.avg_hit) * 100.0,
        grc_curve=_cumulative_curve(grc),
        km_curve=_cumulative_curve(km),
        grc_hit_by_round=grc.pooled_hit_by_round(),
        km_hit_by_round=km.pooled_hit_by_round(),
        per_type=per_type,
    )


def write_report(report: SimulationReport, path) -> None:
    lines = [f"strategy: {report.strategy}", f"fingerprint: {report.fingerprint}", ""]
    for name in sorted(report.types):
        t = report.types[name]
        lines.append(f"[{name}]")
        lines.append(f"  cases: {t.cases}")
        lines.append(f"  avg_rounds: {t.avg_rounds!r}")
        lines.append(f"  avg_hit: {t.avg_hit!r}")
        lines.append(
            "  round_histogram: "
            + " ".join(f"{r}:{c}" for r, c in t.round_histogram.items())
        )
        lines.append("  leaf_sizes: " + " ".join(map(str, t.leaf_sizes)))
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def write_curves(comparison: Comparison, prefix) -> list[Path]:
    """Emit two-column curve files and a static plot next to them."""
    prefix = Path(prefix)
    written = []
    for name, curve in (("grc", comparison.grc_curve), ("kmeans", comparison.km_curve)):
        path = prefix.with_name(prefix.name + f".{name}.curve.tsv")
        rows = [f"{r}\t{100 * share:.4f}" for r, share in sorted(curve.items())]
        path.write_text("round\tcumulative_percent\n" + "\n".join(rows) + "\n", encoding="utf-8")
        written.append(path)
    png = prefix.with_name(prefix.name + ".curves.png")
    _plot_curves(comparison, png)
    written.append(png)
    return written


def _plot_curves(comparison: Comparison, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in (("GrC", comparison.grc_curve), ("k-means", comparison.km_curve)):
        rounds = sorted(curve)
        ax.plot(rounds, [100 * curve[r] for r in rounds], marker="o", label=label)
    ax.set_xlabel("round")
    ax.set_ylabel("dialogs completed (%)")
    ax.set_title("Cumulative completion by round")
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
