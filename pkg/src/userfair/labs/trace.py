"""Experiment traces and their CSV/JSON exports."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from userfair.common import decode_value, encode_value, format_value


@dataclass
class TracePoint:
    x: float
    entries: dict
    label: str = ""


@dataclass
class ExperimentTrace:
    protocol: str
    points: list[TracePoint]
    seed: int
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.x)
        keys = [tuple(p.entries) for p in self.points]
        if keys and any(k != keys[0] for k in keys):
            raise ValueError("every trace point must carry the same measure keys")

    def measures(self) -> list[str]:
        return list(self.points[0].entries) if self.points else []

    def series(self, measure: str) -> list:
        return [p.entries[measure] for p in self.points]

    def xs(self) -> list[float]:
        return [p.x for p in self.points]

    def config_hash(self) -> str:
        blob = json.dumps({"protocol": self.protocol, "seed": self.seed, "config": self.config}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:10]

    def filename(self, ext: str = "csv") -> str:
        return f"{self.protocol}_seed{self.seed}_{self.config_hash()}.{ext}"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "label", *self.measures()])
        for p in self.points:
            w.writerow([format_value(p.x), p.label, *(format_value(v) for v in p.entries.values())])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "seed": self.seed,
            "config": self.config,
            "points": [
                {"x": p.x, "label": p.label, "entries": {k: encode_value(v) for k, v in p.entries.items()}}
                for p in self.points
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentTrace":
        pts = [
            TracePoint(float(p["x"]), {k: decode_value(v) for k, v in p["entries"].items()}, p.get("label", ""))
            for p in d["points"]
        ]
        return cls(d["protocol"], pts, int(d["seed"]), dict(d.get("config", {})))

    def save(self, out_dir: str | Path) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        csv_path = out_dir / self.filename("csv")
        json_path = out_dir / self.filename("json")
        csv_path.write_text(self.to_csv())
        json_path.write_text(self.to_json())
        return csv_path, json_path
