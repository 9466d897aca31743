"""Pipeline configuration: one YAML/JSON file, overridable from the command line."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import yaml

from .errors import ConfigError

DEFAULTS: dict[str, Any] = {
    "family": "Cerber",
    "seed": 0,
    "paths": {
        "zone_dir": None,
        "tld": "top",
        "blacklist_feeds": [],
        "benign_domains": None,
        "whois_fixtures": None,
        "whois_cache": None,
        "later_feed": None,
        "detections_series": None,
        "exog_series": None,
        "out_dir": "out",
    },
    "classifier": {
        "l2": 1e-2,
        "max_iters": 5000,
        "tolerance": 1e-10,
        "step1_threshold": 0.5,
        "step2_threshold": 0.5,
        "benign_ratio": 1.0,
        "whois_budget": 1000,
    },
    "forecast": {
        "train_fraction": 0.6,
        "horizon": 7,
        "window": "sliding",
        "baserate_window": 7,
        "models": ["baserate", "hmm", "arima", "arimax"],
        "grid": {"max_p": 7, "max_d": 2, "max_q": 7},
        "arima_order": None,
        "hmm": {"n_states": 2, "family": "poisson", "restarts": 3, "max_iters": 500, "tolerance": 1e-6},
        "max_lag": 14,
        "exog_lag": None,
        "series_start": None,
        "series_end": None,
        "n_jobs": 1,
    },
}

# keys whose values are paths that must exist when set
INPUT_PATHS = ("zone_dir", "benign_domains", "whois_fixtures", "later_feed", "detections_series", "exog_series")


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key not in ("hmm",):
            out[key] = _merge(base[key], value, f"{where}{key}.")
        elif isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = {**base[key], **value}
        else:
            out[key] = value
    return out


def derive_seed(seed: int, label: str) -> int:
    """Stable per-component seed from the top-level seed and a label."""
    digest = hashlib.sha256(f"{seed}/{label}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass
class PipelineConfig:
    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: Optional[str], overrides: Optional[dict] = None) -> "PipelineConfig":
        raw: dict = {}
        base_dir = Path.cwd()
        if path:
            p = Path(path)
            if not p.exists():
                raise ConfigError(f"config file {p} does not exist")
            text = p.read_text(encoding="utf-8")
            raw = json.loads(text) if p.suffix == ".json" else (yaml.safe_load(text) or {})
            base_dir = p.resolve().parent
        data = _merge(DEFAULTS, raw)
        for dotted, value in (overrides or {}).items():
            if value is None:
                continue
            node = data
            *parents, leaf = dotted.split(".")
            for key in parents:
                node = node[key]
            node[leaf] = value
        cfg = cls(data, base_dir)
        cfg.validate()
        return cfg

    def __getitem__(self, key):
        return self.data[key]

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def family(self) -> str:
        return str(self.data["family"])

    def path(self, key: str) -> Optional[Path]:
        value = self.data["paths"].get(key)
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def out_dir(self) -> Path:
        return self.path("out_dir")

    def feeds(self) -> list:
        out = []
        for item in self.data["paths"]["blacklist_feeds"]:
            if isinstance(item, str):
                item = {"path": item}
            p = Path(item["path"])
            out.append({
                "path": p if p.is_absolute() else self.base_dir / p,
                "source": item.get("source", p.stem),
                "columns": item.get("columns"),
            })
        return out

    def validate(self) -> None:
        for key in INPUT_PATHS:
            p = self.path(key)
            if p is not None and not p.exists():
                raise ConfigError(f"paths.{key}: {p} does not exist")
        for feed in self.feeds():
            if not feed["path"].exists():
                raise ConfigError(f"blacklist feed {feed['path']} does not exist")
        c = self.data["classifier"]
        for key in ("step1_threshold", "step2_threshold"):
            if not 0.0 < float(c[key]) < 1.0:
                raise ConfigError(f"classifier.{key} must lie in (0, 1)")
        if float(c["l2"]) < 0 or int(c["max_iters"]) < 1 or float(c["benign_ratio"]) <= 0:
            raise ConfigError("classifier.l2 >= 0, max_iters >= 1 and benign_ratio > 0 are required")
        if int(c["whois_budget"]) < 0:
            raise ConfigError("classifier.whois_budget must be >= 0")
        f = self.data["forecast"]
        if not 0.0 < float(f["train_fraction"]) < 1.0:
            raise ConfigError("forecast.train_fraction must lie in (0, 1)")
        if int(f["horizon"]) < 1 or int(f["baserate_window"]) < 1 or int(f["max_lag"]) < 0:
            raise ConfigError("forecast.horizon and baserate_window must be >= 1, max_lag >= 0")
        if min(int(v) for v in f["grid"].values()) < 0:
            raise ConfigError("forecast.grid bounds must be >= 0")
        if int(f["hmm"]["n_states"]) < 1:
            raise ConfigError("forecast.hmm.n_states must be >= 1")
