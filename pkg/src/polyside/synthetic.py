"""Planted-rule synthetic knowledge graphs in the Decagon file layout.

Side-effect edges are planted on drug pairs that satisfy an interacting-targets
rule: drug a targets p, drug b targets q, and p interacts with q, for a small
set of rule protein pairs chosen per side effect.  Random noise edges are added
on top.  Target annotations are sparse and concentrated on a pool of hub
proteins so that rule instances are frequent enough to survive pruning.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import DataPaths, Schema


@dataclass(frozen=True)
class PlantedRuleConfig:
    n_drugs: int = 200
    n_proteins: int = 300
    n_side_effects: int = 15
    n_hubs: int = 40
    min_targets: int = 1
    max_targets: int = 3
    hub_target_prob: float = 0.9
    n_ppi: int = 1200
    rules_per_side_effect: int = 10
    rule_edge_prob: float = 0.3
    noise_fraction: float = 0.1
    n_mono: int = 50
    mono_per_drug: int = 4
    # Share of drugs that carry target annotations at all.
    target_coverage: float = 1.0
    seed: int = 0


@dataclass
class SyntheticData:
    ppi: list[tuple[str, str]]
    targets: list[tuple[str, str]]
    combo: list[tuple[str, str, str, str]]
    mono: list[tuple[str, str, str]]
    rules: dict[str, list[tuple[str, str]]]


def _drug(i):
    return f"CID{i:09d}"


def _prot(i):
    return f"P{i:05d}"


def generate(cfg: PlantedRuleConfig = PlantedRuleConfig()) -> SyntheticData:
    rng = np.random.default_rng(cfg.seed)
    n_d, n_p = cfg.n_drugs, cfg.n_proteins
    hubs = np.arange(cfg.n_hubs)

    ppi = set()
    while len(ppi) < cfg.n_ppi:
        p, q = rng.integers(n_p, size=2)
        if p != q:
            ppi.add((min(p, q), max(p, q)))

    targets = {}
    covered = rng.random(n_d) < cfg.target_coverage
    for d in range(n_d):
        if not covered[d]:
            targets[d] = set()
            continue
        k = rng.integers(cfg.min_targets, cfg.max_targets + 1)
        chosen = set()
        while len(chosen) < k:
            if rng.random() < cfg.hub_target_prob:
                chosen.add(int(rng.choice(hubs)))
            else:
                chosen.add(int(rng.integers(n_p)))
        targets[d] = chosen

    by_protein = {}
    for d, ps in targets.items():
        for p in ps:
            by_protein.setdefault(p, []).append(d)

    combo, rules = [], {}
    all_pairs = n_d * (n_d - 1) // 2
    for s in range(cfg.n_side_effects):
        code = f"C{s:07d}"
        chosen_rules = set()
        attempts = 0
        while len(chosen_rules) < cfg.rules_per_side_effect and attempts < 10000:
            attempts += 1
            p, q = (int(x) for x in rng.choice(hubs, size=2, replace=False))
            if p in by_protein and q in by_protein:
                chosen_rules.add((min(p, q), max(p, q)))
        chosen_rules = sorted(chosen_rules)
        ppi.update(chosen_rules)
        rules[code] = [(_prot(p), _prot(q)) for p, q in chosen_rules]
        edges = set()
        for p, q in chosen_rules:
            for a in by_protein[p]:
                for b in by_protein[q]:
                    if a != b and rng.random() < cfg.rule_edge_prob:
                        edges.add((min(a, b), max(a, b)))
        n_noise = int(round(cfg.noise_fraction * len(edges)))
        n_noise = min(n_noise, all_pairs // 2 - len(edges))
        while n_noise > 0:
            a, b = rng.integers(n_d, size=2)
            if a != b and (min(a, b), max(a, b)) not in edges:
                edges.add((int(min(a, b)), int(max(a, b))))
                n_noise -= 1
        for a, b in sorted(edges):
            combo.append((_drug(a), _drug(b), code, f"effect {s}"))

    mono = []
    for d in range(n_d):
        for m in sorted(set(rng.integers(cfg.n_mono, size=cfg.mono_per_drug).tolist())):
            mono.append((_drug(d), f"M{m:07d}", f"mono {m}"))

    return SyntheticData(
        ppi=[(_prot(p), _prot(q)) for p, q in sorted(ppi)],
        targets=[(_drug(d), _prot(p)) for d in range(n_d) for p in sorted(targets[d])],
        combo=combo,
        mono=mono,
        rules=rules,
    )


def write_files(data: SyntheticData, directory, schema: Schema = Schema()) -> DataPaths:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = DataPaths(
        ppi=directory / "ppi.csv",
        targets=directory / "targets.csv",
        combo=directory / "combo.csv",
        mono=directory / "mono.csv",
    )
    specs = [
        (paths.ppi, [schema.ppi_protein_a, schema.ppi_protein_b], data.ppi),
        (paths.targets, [schema.targets_drug, schema.targets_protein], data.targets),
        (paths.combo, [schema.combo_drug_a, schema.combo_drug_b, schema.combo_code, schema.combo_name], data.combo),
        (paths.mono, [schema.mono_drug, schema.mono_code, schema.mono_name], data.mono),
    ]
    for path, header, rows in specs:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    return paths
