"""Flat, typed run configuration read from a YAML mapping of scalars."""

from __future__ import annotations

import hashlib
import json
from dataclasses import MISSING, asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .dataset import Regime, SplitSpec
from .errors import ConfigError
from .ingest import DataPaths, Schema
from .model import Mode
from .trainer import Optimizer, TrainConfig


def _opt(default, doc):
    return field(default=default, metadata={"doc": doc})


_SCHEMA_DEFAULTS = Schema()


@dataclass
class RunConfig:
    ppi_path: str = _opt("data/bio-decagon-ppi.csv", "protein-protein interaction file")
    targets_path: str = _opt("data/bio-decagon-targets.csv", "drug-target file")
    combo_path: str = _opt("data/bio-decagon-combo.csv", "drug-drug side-effect file")
    mono_path: str = _opt("data/bio-decagon-mono.csv", "mono side-effect file")
    delimiter: str = _opt(_SCHEMA_DEFAULTS.delimiter, "field delimiter of all four files")
    ppi_protein_a: str = _opt(_SCHEMA_DEFAULTS.ppi_protein_a, "ppi column: first protein")
    ppi_protein_b: str = _opt(_SCHEMA_DEFAULTS.ppi_protein_b, "ppi column: second protein")
    targets_drug: str = _opt(_SCHEMA_DEFAULTS.targets_drug, "targets column: drug")
    targets_protein: str = _opt(_SCHEMA_DEFAULTS.targets_protein, "targets column: protein")
    combo_drug_a: str = _opt(_SCHEMA_DEFAULTS.combo_drug_a, "combo column: first drug")
    combo_drug_b: str = _opt(_SCHEMA_DEFAULTS.combo_drug_b, "combo column: second drug")
    combo_code: str = _opt(_SCHEMA_DEFAULTS.combo_code, "combo column: side-effect code")
    combo_name: str = _opt(_SCHEMA_DEFAULTS.combo_name, "combo column: side-effect name")
    mono_drug: str = _opt(_SCHEMA_DEFAULTS.mono_drug, "mono column: drug")
    mono_code: str = _opt(_SCHEMA_DEFAULTS.mono_code, "mono column: side-effect code")
    mono_name: str = _opt(_SCHEMA_DEFAULTS.mono_name, "mono column: side-effect name")
    restrict_to_combo_drugs: bool = _opt(True, "drop target/mono rows for drugs absent from combo")
    train_fraction: float = _opt(0.8, "share of each (side effect, label) stratum for training")
    valid_fraction: float = _opt(0.1, "share for validation (floored)")
    test_fraction: float = _opt(0.1, "share for test (floored)")
    seed: int = _opt(20190601, "seed for negatives, splits, initialisation and batches")
    regime: str = _opt(Regime.FULL.value, "full | drug_drug_only | targeted_drugs_only")
    min_support: int = _opt(10, "minimum support of a relational feature template")
    model: str = _opt("kblrn", "baseline | distmult | kblrn")
    dim: int = _opt(100, "embedding dimension k")
    negatives_per_positive: int = _opt(10, "corruptions per positive triple")
    batch_size: int = _opt(512, "positives per minibatch")
    learning_rate: float = _opt(0.1, "optimizer step size")
    optimizer: str = _opt(Optimizer.ADAGRAD.value, "adagrad | sgd")
    max_epochs: int = _opt(100, "epoch budget")
    patience: int = _opt(5, "epochs without validation AuPR gain before stopping")
    l2: float = _opt(0.0, "L2 coefficient on touched parameters")
    output_dir: str = _opt("runs/default", "directory for all artifacts")
    deterministic: bool = _opt(True, "omit wall-clock values; requires threads = 1")
    threads: int = _opt(1, "worker threads for per-side-effect evaluation")

    # -- derived views -------------------------------------------------------

    def schema(self) -> Schema:
        return Schema(**{f.name: getattr(self, f.name) for f in fields(Schema)})

    def paths(self) -> DataPaths:
        return DataPaths(Path(self.ppi_path), Path(self.targets_path),
                         Path(self.combo_path), Path(self.mono_path))

    def split_spec(self) -> SplitSpec:
        return SplitSpec((self.train_fraction, self.valid_fraction, self.test_fraction), self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            dim=self.dim, negatives_per_positive=self.negatives_per_positive,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            optimizer=self.optimizer, max_epochs=self.max_epochs, patience=self.patience,
            seed=self.seed, mode=Mode.EMBEDDING_ONLY, l2=self.l2,
        )

    def validate(self) -> "RunConfig":
        try:
            self.split_spec()
            self.train_config()
            Regime(self.regime)
            Optimizer(self.optimizer)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.model not in ("baseline", "distmult", "kblrn"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.min_support < 1 or self.threads < 1:
            raise ConfigError("min_support and threads must be >= 1")
        if self.deterministic and self.threads != 1:
            raise ConfigError("deterministic mode requires threads = 1")
        return self

    # -- serialisation ---------------------------------------------------------

    def to_yaml(self, with_docs: bool = False) -> str:
        lines = []
        for f in fields(self):
            value = yaml.safe_dump({f.name: getattr(self, f.name)}, default_flow_style=False,
                                   allow_unicode=True).strip()
            if with_docs:
                lines.append(f"# {f.metadata['doc']}")
            lines.append(value)
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()


def _coerce(name, typ, value):
    if typ == "bool":
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{name}: expected true/false, got {value!r}")
    if typ == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
        return value
    if typ == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{name}: expected a number, got {value!r}")
        return float(value)
    if not isinstance(value, str):
        raise ConfigError(f"{name}: expected a string, got {value!r}")
    return value


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Defaults, then the YAML file, then overrides.  Relative paths resolve against the file."""
    data = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        try:
            loaded = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"{path}: config must be a flat mapping")
        data.update(loaded)
        base = path.parent
    data.update(overrides or {})
    known = {f.name: f for f in fields(RunConfig)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    values = {}
    for name, f in known.items():
        if name in data:
            values[name] = _coerce(name, f.type, data[name])
        elif f.default is MISSING:
            raise ConfigError(f"missing required key {name}")
    cfg = RunConfig(**values)
    for name in ("ppi_path", "targets_path", "combo_path", "mono_path", "output_dir"):
        p = Path(getattr(cfg, name))
        if not p.is_absolute():
            setattr(cfg, name, str((base / p).resolve()))
    return cfg.validate()
