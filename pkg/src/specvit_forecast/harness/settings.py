"""Experiment configuration loaded from a TOML file.

Every hyperparameter the pipeline uses is resolved here into frozen
dataclasses, so a resolved `ExperimentConfig` fully determines a run.
"""

import logging
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, replace
from typing import Any, Iterable, Mapping

from .. import config as app_config
from ..baselines import ALPHA_GRID, BASELINES
from ..datagen import DEFAULT_SCHEMA, DatasetSpec, SplitCounts
from ..exceptions import ConfigError
from ..imaging import IMAGE_SIZE, MorletConfig
from ..metrics import SignConfig
from ..nn.optim import TrainSchedule
from ..utils import stable_hash
from ..vit import VARIANTS, VitConfig

logger = logging.getLogger(__name__)

METHODS = VARIANTS + BASELINES

_SECTIONS = {"experiment", "vit", "train", "morlet", "sign", "ema", "datasets"}
_EXPERIMENT_KEYS = {"name", "seed", "methods", "out_dir"}
_VIT_KEYS = {"patch", "embed_dim", "depth", "heads", "mlp_ratio", "zero_init_head"}
_TRAIN_KEYS = {
    "base_lr", "warmup_epochs", "max_epochs", "patience", "batch_size",
    "min_lr_ratio", "early_stopping", "weight_decay",
}
_MORLET_KEYS = {"w", "n_scales", "scale_min", "scale_max"}
_SIGN_KEYS = {"threshold_fraction"}
_EMA_KEYS = {"alpha_grid"}
_DATASET_KEYS = {
    "name", "source", "path", "schema", "input_len", "horizon", "train", "val", "test",
    "boundary", "learning_rate", "threshold_fraction",
}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    datasets: tuple[DatasetSpec, ...]
    methods: tuple[str, ...] = METHODS
    vit: VitConfig = VitConfig()
    schedule: TrainSchedule = TrainSchedule()
    weight_decay: float = 0.05
    morlet: MorletConfig = MorletConfig()
    sign: SignConfig = SignConfig()
    ema_grid: tuple[float, ...] = ALPHA_GRID
    seed: int = 42
    out_dir: str = "runs"

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"Unknown methods {unknown}; expected a subset of {list(METHODS)}.")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError(f"Duplicate methods in {list(self.methods)}.")
        if not self.datasets:
            raise ConfigError("At least one [[datasets]] entry is required.")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"Dataset names must be unique, got {names}.")
        if not self.ema_grid or not all(0 < a <= 1 for a in self.ema_grid):
            raise ConfigError(f"EMA alpha grid must be non-empty values in (0, 1], got {self.ema_grid}.")

    @property
    def vit_methods(self) -> tuple[str, ...]:
        return tuple(m for m in self.methods if m in VARIANTS)

    @property
    def baseline_methods(self) -> tuple[str, ...]:
        return tuple(m for m in self.methods if m in BASELINES)

    def dataset(self, name: str) -> DatasetSpec:
        for spec in self.datasets:
            if spec.name == name:
                return spec
        raise ConfigError(f"No dataset named '{name}'.")

    def vit_config_for(self, dataset: DatasetSpec, variant: str) -> VitConfig:
        return replace(self.vit, horizon=dataset.horizon).for_variant(variant)

    def schedule_for(self, dataset: DatasetSpec) -> TrainSchedule:
        if dataset.learning_rate is None:
            return self.schedule
        return replace(self.schedule, base_lr=dataset.learning_rate)

    def sign_for(self, dataset: DatasetSpec) -> SignConfig:
        if dataset.threshold_fraction is None:
            return self.sign
        return SignConfig(dataset.threshold_fraction)

    def to_dict(self) -> dict:
        """JSON-serializable view of every resolved setting."""
        return {
            "name": self.name,
            "seed": self.seed,
            "methods": list(self.methods),
            "vit": asdict(self.vit),
            "schedule": asdict(self.schedule),
            "weight_decay": self.weight_decay,
            "morlet": asdict(self.morlet),
            "sign": asdict(self.sign),
            "ema_grid": list(self.ema_grid),
            "datasets": [asdict(d) for d in self.datasets],
        }


def config_hash(cfg: ExperimentConfig) -> str:
    """Hash of the resolved configuration; the output directory is not part of it."""
    return stable_hash(cfg.to_dict())


def architecture_hash(vit_cfg: VitConfig) -> str:
    return stable_hash(asdict(vit_cfg))


_DATA_FIELDS = ("source", "path", "schema", "input_len", "horizon", "counts", "seed", "boundary")


def dataset_hash(spec: DatasetSpec) -> str:
    """Hash of the fields that decide which series and windows a dataset yields."""
    fields = asdict(spec)
    return stable_hash({key: fields[key] for key in _DATA_FIELDS})


# --- Parsing ---

def _section(raw: Mapping[str, Any], name: str, allowed: set[str]) -> dict:
    table = raw.get(name, {})
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table.")
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"Unknown key(s) in [{name}]: {', '.join(unknown)}.")
    return dict(table)


def _build(kind, where: str, **kwargs):
    try:
        return kind(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid values in {where}: {e}", e)


def _resolve_path(path: str | None, base_dir: str) -> str | None:
    if path is None or os.path.isabs(path) or os.path.exists(path):
        return path
    candidate = os.path.join(base_dir, path)
    return candidate if os.path.exists(candidate) else path


def _parse_dataset(entry: Mapping[str, Any], index: int, seed: int, base_dir: str) -> DatasetSpec:
    where = f"[[datasets]] #{index + 1}"
    unknown = sorted(set(entry) - _DATASET_KEYS)
    if unknown:
        raise ConfigError(f"Unknown key(s) in {where}: {', '.join(unknown)}.")
    for key in ("name", "source", "input_len", "horizon"):
        if key not in entry:
            raise ConfigError(f"{where} is missing required key '{key}'.")
    counts = _build(
        SplitCounts, where, train=entry.get("train", 0), val=entry.get("val", 0), test=entry.get("test", 0)
    )
    return _build(
        DatasetSpec,
        where,
        name=str(entry["name"]),
        source=entry["source"],
        input_len=int(entry["input_len"]),
        horizon=int(entry["horizon"]),
        counts=counts,
        seed=seed,
        path=_resolve_path(entry.get("path"), base_dir),
        boundary=entry.get("boundary"),
        learning_rate=entry.get("learning_rate"),
        threshold_fraction=entry.get("threshold_fraction"),
        schema=tuple(entry.get("schema", DEFAULT_SCHEMA)),
    )


def parse_config(raw: Mapping[str, Any], **options) -> ExperimentConfig:
    """Builds an ExperimentConfig from parsed TOML plus CLI overrides.

    Args:
        raw: The parsed TOML document.
        **options: `base_dir` for relative dataset paths, and the `seed`,
            `out_dir` and `methods` overrides.

    Raises:
        ConfigError: Naming the offending section or key.
    """
    try:
        return _parse_config(raw, **options)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid configuration value: {e}", e)


def _parse_config(
    raw: Mapping[str, Any],
    *,
    base_dir: str = ".",
    seed: int | None = None,
    out_dir: str | None = None,
    methods: Iterable[str] | None = None,
) -> ExperimentConfig:
    unknown = sorted(set(raw) - _SECTIONS)
    if unknown:
        raise ConfigError(f"Unknown section(s): {', '.join(unknown)}.")
    experiment = _section(raw, "experiment", _EXPERIMENT_KEYS)
    vit = _section(raw, "vit", _VIT_KEYS)
    train = _section(raw, "train", _TRAIN_KEYS)
    morlet = _section(raw, "morlet", _MORLET_KEYS)
    sign = _section(raw, "sign", _SIGN_KEYS)
    ema = _section(raw, "ema", _EMA_KEYS)
    datasets = raw.get("datasets", [])
    if not isinstance(datasets, list):
        raise ConfigError("[[datasets]] must be an array of tables.")

    resolved_seed = int(seed if seed is not None else experiment.get("seed", 42))
    weight_decay = float(train.pop("weight_decay", 0.05))
    return _build(
        ExperimentConfig,
        "[experiment]",
        name=str(experiment.get("name", "experiment")),
        datasets=tuple(_parse_dataset(d, i, resolved_seed, base_dir) for i, d in enumerate(datasets)),
        methods=tuple(methods if methods is not None else experiment.get("methods", METHODS)),
        vit=_build(VitConfig, "[vit]", image_h=IMAGE_SIZE, image_w=IMAGE_SIZE, **vit),
        schedule=_build(TrainSchedule, "[train]", **train),
        weight_decay=weight_decay,
        morlet=_build(MorletConfig, "[morlet]", **morlet),
        sign=_build(SignConfig, "[sign]", **sign),
        ema_grid=tuple(float(a) for a in ema.get("alpha_grid", ALPHA_GRID)),
        seed=resolved_seed,
        out_dir=str(out_dir if out_dir is not None else experiment.get("out_dir", app_config.DEFAULT_OUT_DIR)),
    )


def load_config(path: str | os.PathLike, **overrides) -> ExperimentConfig:
    """Reads and validates a TOML experiment file.

    Args:
        path: The TOML file.
        **overrides: `seed`, `out_dir` and `methods` overrides from the CLI.

    Raises:
        ConfigError: If the file is missing, malformed or invalid.
    """
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}", e)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"Malformed TOML in {path}: {e}", e)
    cfg = parse_config(raw, base_dir=os.path.dirname(os.path.abspath(path)), **overrides)
    logger.info("Loaded experiment '%s' from %s (seed %d, methods %s).", cfg.name, path, cfg.seed, ",".join(cfg.methods))
    return cfg
