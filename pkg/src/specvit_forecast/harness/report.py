"""Evaluation report: one record per (dataset, method), serialized as CSV, JSON and markdown."""

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..exceptions import DataError
from ..metrics import Aggregate
from ..utils import format_data_payload

logger = logging.getLogger(__name__)

DISPLAY_NAMES = {
    "num-spec": "ViT-num-spec",
    "lineplot": "ViT-lineplot",
    "num": "ViT-num",
    "naive": "Naive",
    "ema": "EMA",
    "arima": "ARIMA",
}


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.12g}"


@dataclass
class MethodRecord:
    dataset: str
    method: str
    status: str = "ok"
    n_tasks: int = 0
    smape: Aggregate | None = None
    mase: Aggregate | None = None
    sign_strict: float | None = None
    sign_thresholded: float | None = None
    threshold_fraction: float = 0.0
    details: dict = field(default_factory=dict)
    error: str | None = None
    seconds: float | None = None

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def to_row(self, config_hash: str) -> dict:
        """Flat CSV row; timings are left out so the file is reproducible."""
        smape = self.smape or Aggregate(None, None, 0)
        mase = self.mase or Aggregate(None, None, 0)
        return {
            "dataset": self.dataset,
            "method": self.method,
            "status": self.status,
            "n_tasks": self.n_tasks,
            "smape_mean": _fmt(smape.mean),
            "smape_std": _fmt(smape.std),
            "mase_mean": _fmt(mase.mean),
            "mase_std": _fmt(mase.std),
            "mase_count": mase.count,
            "mase_excluded": mase.excluded,
            "sign_acc_strict": _fmt(self.sign_strict),
            "sign_acc_thresholded": _fmt(self.sign_thresholded),
            "threshold_fraction": _fmt(self.threshold_fraction),
            "error": self.error or "",
            "config_hash": config_hash,
        }

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MethodRecord":
        data = dict(data)
        for key in ("smape", "mase"):
            if data.get(key) is not None:
                data[key] = Aggregate(**data[key])
        return cls(**data)


@dataclass
class EvalReport:
    config_hash: str
    datasets: tuple[str, ...]
    methods: tuple[str, ...]
    records: list[MethodRecord] = field(default_factory=list)

    def add(self, record: MethodRecord) -> None:
        if self.find(record.dataset, record.method) is not None:
            raise ValueError(f"Duplicate report record for {record.dataset}/{record.method}.")
        self.records.append(record)

    def find(self, dataset: str, method: str) -> MethodRecord | None:
        return next((r for r in self.records if r.dataset == dataset and r.method == method), None)

    def ordered(self) -> list[MethodRecord]:
        """Records in configuration order: datasets, then methods."""
        rank = {(d, m): (i, j) for i, d in enumerate(self.datasets) for j, m in enumerate(self.methods)}
        return sorted(self.records, key=lambda r: rank.get((r.dataset, r.method), (len(rank), 0)))

    def to_csv(self) -> str:
        return format_data_payload([r.to_row(self.config_hash) for r in self.ordered()], "csv")

    def to_json(self) -> str:
        payload = {
            "config_hash": self.config_hash,
            "datasets": list(self.datasets),
            "methods": list(self.methods),
            "records": [r.to_dict() for r in self.ordered()],
        }
        return json.dumps(payload, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        try:
            payload = json.loads(text)
            return cls(
                payload["config_hash"],
                tuple(payload["datasets"]),
                tuple(payload["methods"]),
                [MethodRecord.from_dict(r) for r in payload["records"]],
            )
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise DataError(f"Malformed report JSON: {e}", e)

    def to_markdown(self) -> str:
        """Table with metric blocks, one row per dataset and one column per method."""
        header = "| Metric | Dataset | " + " | ".join(DISPLAY_NAMES.get(m, m) for m in self.methods) + " |"
        rule = "|" + "---|" * (len(self.methods) + 2)
        lines = [f"Config hash: `{self.config_hash}`", "", header, rule]
        for metric in ("SMAPE", "MASE", "Sign accuracy"):
            for dataset in self.datasets:
                cells = [_markdown_cell(self.find(dataset, m), metric) for m in self.methods]
                lines.append(f"| {metric} | {dataset} | " + " | ".join(cells) + " |")
        failures = [r for r in self.ordered() if r.failed]
        if failures:
            lines += ["", "Failed methods:", ""]
            lines += [f"- {r.dataset} / {DISPLAY_NAMES.get(r.method, r.method)}: {r.error}" for r in failures]
        return "\n".join(lines) + "\n"


def _markdown_cell(record: MethodRecord | None, metric: str) -> str:
    if record is None:
        return "-"
    if record.failed:
        return "failed"
    if metric == "SMAPE":
        return record.smape.format() if record.smape else "-"
    if metric == "MASE":
        return record.mase.format() if record.mase else "-"
    strict = f"{100 * record.sign_strict:.1f}%" if record.sign_strict is not None else "-"
    if record.threshold_fraction > 0 and record.sign_thresholded is not None:
        return f"{strict} / {100 * record.sign_thresholded:.1f}%"
    return strict


def write_reports(report: EvalReport, out_dir: str | os.PathLike) -> dict[str, Path]:
    """Writes report.csv, report.json and report.md under `out_dir`."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / "report.csv",
        "json": out / "report.json",
        "md": out / "report.md",
    }
    paths["csv"].write_text(report.to_csv(), encoding="utf-8", newline="")
    paths["json"].write_text(report.to_json(), encoding="utf-8")
    paths["md"].write_text(report.to_markdown(), encoding="utf-8")
    logger.info("Wrote report (%d records) to %s", len(report.records), out)
    return paths


def read_report(out_dir: str | os.PathLike) -> EvalReport:
    path = Path(out_dir) / "report.json"
    if not path.exists():
        raise DataError(f"No report at {path}; run `eval` first.")
    return EvalReport.from_json(path.read_text(encoding="utf-8"))
