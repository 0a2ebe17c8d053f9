"""Parse the four Decagon-style source files into a frozen KnowledgeGraph."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ParseError, SchemaViolation
from .kg import (
    HAS_TARGET_KEY,
    INTERACTS_WITH_KEY,
    MONO_KEY,
    EntityKind,
    KnowledgeGraph,
    RelationKind,
)


@dataclass(frozen=True)
class Schema:
    """Column mapping for the source files.  Defaults follow the public Decagon release."""

    delimiter: str = ","
    ppi_protein_a: str = "Gene 1"
    ppi_protein_b: str = "Gene 2"
    targets_drug: str = "STITCH"
    targets_protein: str = "Gene"
    combo_drug_a: str = "STITCH 1"
    combo_drug_b: str = "STITCH 2"
    combo_code: str = "Polypharmacy Side Effect"
    combo_name: str = "Side Effect Name"
    mono_drug: str = "STITCH"
    mono_code: str = "Individual Side Effect"
    mono_name: str = "Side Effect Name"
    # Only keep target / mono rows whose drug appears in the combo file.
    restrict_to_combo_drugs: bool = True


@dataclass(frozen=True)
class DataPaths:
    ppi: Path
    targets: Path
    combo: Path
    mono: Path

    def __iter__(self):
        return iter((self.ppi, self.targets, self.combo, self.mono))


@dataclass(frozen=True)
class GraphStats:
    n_proteins: int
    n_drugs: int
    n_ppi: int
    n_drug_drug: int
    n_drug_target: int
    n_mono_assoc: int
    n_distinct_mono: int
    n_distinct_poly: int


# Reference counts for the full public Decagon release.
PUBLISHED_STATS = GraphStats(
    n_proteins=19089,
    n_drugs=645,
    n_ppi=715612,
    n_drug_drug=4649441,
    n_drug_target=11501,
    n_mono_assoc=174977,
    n_distinct_mono=10184,
    n_distinct_poly=963,
)


@dataclass(frozen=True)
class Mismatch:
    field: str
    expected: int
    actual: int


def _rows(path: Path, delimiter: str, columns: list[str]):
    """Yield (line number, values) for the requested columns; header is required."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "missing header row") from None
        header = [h.strip() for h in header]
        try:
            idx = [header.index(c) for c in columns]
        except ValueError:
            missing = [c for c in columns if c not in header]
            raise ParseError(path, 1, f"missing columns {missing}; header is {header}") from None
        width = max(idx) + 1
        for row in reader:
            line = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < width:
                raise ParseError(path, line, f"expected at least {width} fields, got {len(row)}")
            values = [row[i].strip() for i in idx]
            if any(not v for v in values):
                raise ParseError(path, line, "empty field")
            yield line, values


def _add(g, path, line, h, r, t):
    try:
        g.add_triple(h, r, t)
    except SchemaViolation as exc:
        raise SchemaViolation(f"{path}:{line}: {exc}") from None


def ingest_dataset(paths: DataPaths, schema: Schema = Schema()) -> tuple[KnowledgeGraph, GraphStats]:
    """Build the graph from combo, ppi, targets and mono files (interned in that order)."""
    g = KnowledgeGraph()
    delim = schema.delimiter
    DRUG, PROT, MONO = EntityKind.DRUG, EntityKind.PROTEIN, EntityKind.MONO_EFFECT

    for line, (a, b, code, name) in _rows(
        paths.combo, delim,
        [schema.combo_drug_a, schema.combo_drug_b, schema.combo_code, schema.combo_name],
    ):
        ha = g.intern_entity(a, DRUG)
        hb = g.intern_entity(b, DRUG)
        r = g.intern_relation(code, RelationKind.POLYPHARMACY, name)
        _add(g, paths.combo, line, ha, r, hb)
    combo_drugs = {g.entity_key(d) for d in g.entities_of_kind(DRUG)}

    interacts = g.intern_relation(INTERACTS_WITH_KEY, RelationKind.INTERACTS_WITH)
    for line, (p, q) in _rows(paths.ppi, delim, [schema.ppi_protein_a, schema.ppi_protein_b]):
        _add(g, paths.ppi, line, g.intern_entity(p, PROT), interacts, g.intern_entity(q, PROT))

    has_target = g.intern_relation(HAS_TARGET_KEY, RelationKind.HAS_TARGET)
    for line, (d, p) in _rows(paths.targets, delim, [schema.targets_drug, schema.targets_protein]):
        if schema.restrict_to_combo_drugs and d not in combo_drugs:
            continue
        _add(g, paths.targets, line, g.intern_entity(d, DRUG), has_target, g.intern_entity(p, PROT))

    mono = g.intern_relation(MONO_KEY, RelationKind.MONO_SIDE_EFFECT)
    for line, (d, code, name) in _rows(
        paths.mono, delim, [schema.mono_drug, schema.mono_code, schema.mono_name]
    ):
        if schema.restrict_to_combo_drugs and d not in combo_drugs:
            continue
        e = g.intern_entity(code, MONO)
        g.entity_names.setdefault(e, name)
        _add(g, paths.mono, line, g.intern_entity(d, DRUG), mono, e)

    g.freeze()
    return g, compute_stats(g)


def compute_stats(g: KnowledgeGraph) -> GraphStats:
    poly = g.relations_of_kind(RelationKind.POLYPHARMACY)

    def single(kind):
        r = g.relation_of_kind(kind)
        return 0 if r is None else g.count(r)

    return GraphStats(
        n_proteins=len(g.entities_of_kind(EntityKind.PROTEIN)),
        n_drugs=len(g.entities_of_kind(EntityKind.DRUG)),
        n_ppi=single(RelationKind.INTERACTS_WITH),
        n_drug_drug=sum(g.count(r) for r in poly),
        n_drug_target=single(RelationKind.HAS_TARGET),
        n_mono_assoc=single(RelationKind.MONO_SIDE_EFFECT),
        n_distinct_mono=len(g.entities_of_kind(EntityKind.MONO_EFFECT)),
        n_distinct_poly=len(poly),
    )


def validate_stats(actual: GraphStats, expected: GraphStats = PUBLISHED_STATS) -> list[Mismatch]:
    out = []
    for f in fields(GraphStats):
        a, e = getattr(actual, f.name), getattr(expected, f.name)
        if a != e:
            out.append(Mismatch(f.name, e, a))
    return out


def format_stats_report(actual: GraphStats, expected: GraphStats = PUBLISHED_STATS) -> str:
    """One ``name expected actual`` line per field, then a status line."""
    lines = [f"{name} {getattr(expected, name)} {value}" for name, value in asdict(actual).items()]
    bad = validate_stats(actual, expected)
    lines.append("status OK" if not bad else "status MISMATCH " + ",".join(m.field for m in bad))
    return "\n".join(lines) + "\n"


def hash_files(paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            for chunk in iter(lambda: fh.read(1 << 20), b""):
                h.update(chunk)
    return h.hexdigest()
