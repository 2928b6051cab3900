"""Campaign state machine and persistence.

A campaign wraps one `SequentialLearner` plus an append-only event log.
Every accepted label is fsynced to the log before it mutates memory, so a
crash between steps can never lose it; replaying the log (create + labels)
rebuilds the exact same state because every refit is seeded by (campaign
seed, step).  A snapshot is written after each mutation as a fast-load
path; the event log remains the source of truth.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gpal import metrics
from gpal.data import Schema, SchemaError, StandardizeTransform, load_csv, standardize
from gpal.gp import Hyperparameters
from gpal.selectors import Pool, SelectorConfig, SequentialLearner

__all__ = ["ApiError", "ServiceConfig", "Campaign", "CampaignStore"]

ACTIVE = "active"
BUDGET_EXHAUSTED = "budget_exhausted"
CLOSED = "closed"


class ApiError(Exception):
    """Service-level failure carrying an HTTP status and a stable code."""

    def __init__(self, status: int, code: str, message: str, details=None):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.details = details or {}


@dataclass(frozen=True)
class ServiceConfig:
    port: int = 8000
    data_dir: str = "campaign-data"
    workers: int = 4
    ui_dir: str | None = None

    @classmethod
    def load(cls, path=None, env=None) -> "ServiceConfig":
        """Config file (JSON) with environment overrides."""
        env = os.environ if env is None else env
        raw = {}
        if path:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        if "GPAL_PORT" in env:
            raw["port"] = int(env["GPAL_PORT"])
        if "GPAL_DATA_DIR" in env:
            raw["data_dir"] = env["GPAL_DATA_DIR"]
        if "GPAL_WORKERS" in env:
            raw["workers"] = int(env["GPAL_WORKERS"])
        if "GPAL_UI_DIR" in env:
            raw["ui_dir"] = env["GPAL_UI_DIR"]
        return cls(**raw)


def _now() -> float:
    return time.time()


def _detect_display(feature_names, raw_features, std_features):
    """Scatter coordinates: lon/lat columns when present, else the first
    two standardized features."""
    lowered = [n.lower() for n in feature_names]

    def find(*candidates):
        for cand in candidates:
            if cand in lowered:
                return lowered.index(cand)
        return None

    lon = find("lon", "longitude", "lng")
    lat = find("lat", "latitude")
    if lon is not None and lat is not None:
        coords = np.column_stack([raw_features[:, lon], raw_features[:, lat]])
        return coords, feature_names[lon], feature_names[lat]
    if std_features.shape[1] == 1:
        coords = np.column_stack([std_features[:, 0], np.zeros(std_features.shape[0])])
        return coords, f"{feature_names[0]} (standardized)", ""
    coords = std_features[:, :2]
    return (
        coords,
        f"{feature_names[0]} (standardized)",
        f"{feature_names[1]} (standardized)",
    )


class Campaign:
    """One interactive inspection session."""

    def __init__(
        self,
        campaign_id: str,
        config: SelectorConfig,
        pool: Pool,
        reference_labels: np.ndarray | None,
        feature_names,
        raw_features: np.ndarray,
        directory: Path,
    ):
        self.id = campaign_id
        self.config = config
        self.directory = directory
        self.learner = SequentialLearner(pool, config)
        self.reference_labels = reference_labels
        self.feature_names = tuple(feature_names)
        self.raw_features = raw_features
        self.status = ACTIVE if config.budget > 0 else BUDGET_EXHAUSTED
        self.steps: list[dict] = []
        self.lock = threading.Lock()
        self.created_at = _now()
        coords, self.x_label, self.y_label = _detect_display(
            self.feature_names, raw_features, pool.features
        )
        self.display_coords = coords

    # -- queries ---------------------------------------------------------

    def pending_recommendation(self) -> dict | None:
        if self.status != ACTIVE:
            return None
        index, score = self.learner.recommend()
        post = self.learner.predictions()
        return {
            "point_id": self.learner.pool.ids[index],
            "index": index,
            "features": [float(v) for v in self.raw_features[index]],
            "score": None if math.isnan(score) else float(score),
            "mean": float(post.mean[index]),
            "sd": float(math.sqrt(post.variance[index])),
        }

    def recommendation_payload(self) -> dict:
        if self.status != ACTIVE:
            raise ApiError(
                409,
                "campaign_not_active",
                f"campaign is {self.status}; no further recommendations",
                {"status": self.status},
            )
        return self.pending_recommendation()

    def predictions_payload(self) -> dict:
        post = self.learner.predictions()
        observed = self.learner.observed
        points = []
        for i, pid in enumerate(self.learner.pool.ids):
            if i in observed:
                points.append(
                    {"point_id": pid, "mean": observed[i], "sd": 0.0, "observed": True}
                )
            else:
                points.append(
                    {
                        "point_id": pid,
                        "mean": float(post.mean[i]),
                        "sd": float(math.sqrt(post.variance[i])),
                        "observed": False,
                    }
                )
        return {"campaign_id": self.id, "status": self.status, "points": points}

    def metrics_payload(self) -> dict:
        return {
            "campaign_id": self.id,
            "status": self.status,
            "budget": self.config.budget,
            "observed_count": len(self.learner.observed),
            "steps": self.steps,
        }

    def summary(self) -> dict:
        pending = self.pending_recommendation()
        return {
            "campaign_id": self.id,
            "status": self.status,
            "budget": self.config.budget,
            "observed_count": len(self.learner.observed),
            "config": {
                "strategy": self.config.strategy,
                "epsilon": self.config.epsilon,
                "d": self.config.d,
                "budget": self.config.budget,
                "seed": self.config.seed,
            },
            "pool_size": self.learner.pool.size,
            "has_reference_labels": self.reference_labels is not None,
            "display": {
                "x_label": self.x_label,
                "y_label": self.y_label,
                "coords": [[float(a), float(b)] for a, b in self.display_coords],
            },
            "recommendation": pending,
        }

    # -- mutations -------------------------------------------------------

    def _event_path(self) -> Path:
        return self.directory / "events.jsonl"

    def _append_event(self, event: dict) -> None:
        line = json.dumps(event, separators=(",", ":"))
        with open(self._event_path(), "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _write_snapshot(self) -> None:
        observed = [
            [int(i), self.learner.observed[i]] for i in self.learner.observed
        ]
        snap = {
            "status": self.status,
            "observed": observed,
            "theta": self.learner.theta.as_dict(),
            "steps": self.steps,
        }
        path = self.directory / "snapshot.json"
        tmp = path.with_suffix(".json.tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(snap, fh)
        tmp.replace(path)

    def apply_label(self, point_id: str, value: float, override: bool, persist: bool = True) -> dict:
        """Validate, persist, and apply one label; returns the step summary."""
        if self.status == CLOSED:
            raise ApiError(409, "campaign_closed", "campaign is closed")
        if self.status == BUDGET_EXHAUSTED:
            raise ApiError(
                409, "budget_exhausted", f"budget of {self.config.budget} labels is spent"
            )
        try:
            index = self.learner.pool.index_of(point_id)
        except KeyError:
            raise ApiError(404, "unknown_point", f"no point with id {point_id!r}") from None
        if index in self.learner.observed:
            raise ApiError(409, "duplicate_label", f"point {point_id!r} already has a label")
        if value is None or not math.isfinite(value):
            raise ApiError(422, "invalid_label", "label value must be a finite number")
        pending_index, pending_score = self.learner.recommend()
        if index != pending_index and not override:
            raise ApiError(
                409,
                "off_recommendation",
                "point is not the pending recommendation; set override=true to "
                "record an opportunistic label",
                {"recommended_point_id": self.learner.pool.ids[pending_index]},
            )

        if persist:
            self._append_event(
                {
                    "type": "label",
                    "point_id": point_id,
                    "value": float(value),
                    "override": bool(override),
                    "ts": _now(),
                }
            )
        t0 = time.perf_counter()
        score = float(pending_score) if index == pending_index and math.isfinite(pending_score) else None
        self.learner.observe(index, float(value))
        step = len(self.learner.observed)
        if step >= self.config.budget:
            self.status = BUDGET_EXHAUSTED
        wall = time.perf_counter() - t0

        entry = {
            "step": step,
            "point_id": point_id,
            "value": float(value),
            "override": bool(override),
            "score": score,
            "wall_time": wall,
            "theta": self.learner.theta.as_dict(),
        }
        if self.reference_labels is not None and step >= 2:
            post = self.learner.predictions()
            scored = post.mean.copy()
            obs_idx = self.learner.a_indices
            scored[obs_idx] = self.reference_labels[obs_idx]
            try:
                entry["smse"] = metrics.smse(scored, self.reference_labels)
                entry["cc"] = metrics.cc(scored, self.reference_labels)
            except ValueError:
                pass
        self.steps.append(entry)
        if persist:
            self._write_snapshot()
        return {
            "campaign_id": self.id,
            "status": self.status,
            "step": entry,
            "theta": entry["theta"],
            "recommendation": self.pending_recommendation(),
        }

    def what_if(self, point_id: str, value: float) -> dict:
        """Projected effect of a hypothetical label; never mutates state."""
        try:
            index = self.learner.pool.index_of(point_id)
        except KeyError:
            raise ApiError(404, "unknown_point", f"no point with id {point_id!r}") from None
        if index in self.learner.observed:
            raise ApiError(409, "point_observed", f"point {point_id!r} already has a label")
        if value is None or not math.isfinite(value):
            raise ApiError(422, "invalid_label", "label value must be a finite number")

        before = self.learner.predictions()
        clone = self.learner.clone()
        clone.observe(index, float(value), refit=False)  # theta deliberately not refit
        after = clone.predictions()
        projected = None
        if clone.budget_left > 0:
            nxt, score = clone.recommend()
            projected = {
                "point_id": self.learner.pool.ids[nxt],
                "score": None if math.isnan(score) else float(score),
            }
        sd_before = np.sqrt(before.variance)
        sd_after = np.sqrt(after.variance)
        sd_after[index] = 0.0  # the hypothetical point counts as observed
        points = [
            {
                "point_id": pid,
                "mean": float(after.mean[i]),
                "sd": float(sd_after[i]),
                "sd_reduction": float(sd_before[i] - sd_after[i]),
            }
            for i, pid in enumerate(self.learner.pool.ids)
        ]
        return {
            "campaign_id": self.id,
            "hypothetical": {"point_id": point_id, "value": float(value)},
            "projected_recommendation": projected,
            "points": points,
            "total_sd_reduction": float(np.sum(sd_before) - np.sum(sd_after)),
        }

    def close(self) -> None:
        if self.status == CLOSED:
            return
        self._append_event({"type": "closed", "ts": _now()})
        self.status = CLOSED
        self._write_snapshot()


def _config_from_dict(raw: dict) -> SelectorConfig:
    try:
        return SelectorConfig(
            strategy=raw.get("strategy", "mi-alk"),
            budget=int(raw["budget"]),
            seed=int(raw.get("seed", 0)),
            epsilon=float(raw.get("epsilon", 0.95)),
            d=raw.get("d"),
            refit=bool(raw.get("refit", True)),
            refit_restarts=int(raw.get("refit_restarts", 1)),
            refit_max_iters=int(raw.get("refit_max_iters", 50)),
            restart_every=int(raw.get("restart_every", 1)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ApiError(422, "invalid_config", f"bad selector config: {exc}") from exc


class CampaignStore:
    """All campaigns under one data directory."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.root = Path(config.data_dir)
        (self.root / "campaigns").mkdir(parents=True, exist_ok=True)
        self.campaigns: dict[str, Campaign] = {}
        self._lock = threading.Lock()
        self._refit_gate = threading.BoundedSemaphore(max(1, config.workers))
        for path in sorted((self.root / "campaigns").iterdir()):
            if (path / "events.jsonl").exists():
                campaign = self._load(path)
                self.campaigns[campaign.id] = campaign

    # -- creation and loading -------------------------------------------

    def create(self, csv_text: str | None, csv_path: str | None, schema_raw, label, config_raw) -> Campaign:
        if (csv_text is None) == (csv_path is None):
            raise ApiError(422, "invalid_dataset", "provide exactly one of csv_text or csv_path")
        if csv_path is not None:
            try:
                csv_text = Path(csv_path).read_text(encoding="utf-8")
            except OSError as exc:
                raise ApiError(422, "invalid_dataset", f"cannot read {csv_path}: {exc}") from exc

        campaign_id = uuid.uuid4().hex[:12]
        directory = self.root / "campaigns" / campaign_id
        directory.mkdir(parents=True)
        (directory / "pool.csv").write_text(csv_text, encoding="utf-8")

        created = {
            "type": "created",
            "schema": schema_raw,
            "label": label,
            "config": config_raw,
            "csv_sha256": hashlib.sha256(csv_text.encode()).hexdigest(),
            "ts": _now(),
        }
        campaign = self._build(campaign_id, directory, schema_raw, label, config_raw)
        campaign._append_event(created)
        campaign._write_snapshot()
        with self._lock:
            self.campaigns[campaign_id] = campaign
        return campaign

    def _build(self, campaign_id, directory, schema_raw, label, config_raw) -> Campaign:
        from gpal.data import SDOF_SCHEMA

        if schema_raw:
            try:
                schema = Schema(
                    numeric=tuple(schema_raw.get("numeric", ())),
                    categorical=tuple(schema_raw.get("categorical", ())),
                    labels=tuple(schema_raw.get("labels", ())),
                    id_column=schema_raw.get("id"),
                    categories={
                        k: tuple(v) for k, v in schema_raw.get("categories", {}).items()
                    },
                )
            except SchemaError as exc:
                raise ApiError(422, "invalid_schema", str(exc)) from exc
        else:
            schema = SDOF_SCHEMA
        try:
            dataset = load_csv(directory / "pool.csv", schema)
            label_col = label or (schema.labels[0] if len(schema.labels) == 1 else None)
            if label_col is None:
                raise ApiError(
                    422, "invalid_schema", f"pick one label column of {list(schema.labels)}"
                )
            raw_pool = dataset.pool(label_col)
        except SchemaError as exc:
            raise ApiError(422, "invalid_dataset", str(exc)) from exc
        except KeyError as exc:
            raise ApiError(422, "invalid_schema", str(exc)) from exc

        std_pool, _ = standardize(raw_pool)
        config = _config_from_dict(config_raw or {})
        if config.budget >= std_pool.size:
            raise ApiError(
                422, "invalid_config", "budget must be smaller than the pool size"
            )
        learner_pool = Pool(features=std_pool.features, labels=None, ids=std_pool.ids)
        return Campaign(
            campaign_id=campaign_id,
            config=config,
            pool=learner_pool,
            reference_labels=np.asarray(raw_pool.labels, dtype=float),
            feature_names=dataset.feature_names,
            raw_features=raw_pool.features,
            directory=directory,
        )

    def _load(self, directory: Path) -> Campaign:
        events = [
            json.loads(line)
            for line in (directory / "events.jsonl").read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        if not events or events[0]["type"] != "created":
            raise ApiError(500, "corrupt_log", f"{directory}: event log lacks a created event")
        head = events[0]
        campaign = self._build(
            directory.name, directory, head.get("schema"), head.get("label"), head.get("config")
        )
        for event in events[1:]:
            if event["type"] == "label":
                campaign.apply_label(
                    event["point_id"], event["value"], event.get("override", False), persist=False
                )
            elif event["type"] == "closed":
                campaign.status = CLOSED
        return campaign

    def replay(self, campaign_id: str) -> Campaign:
        """Rebuild a campaign purely from its event log (consistency check)."""
        return self._load(self.root / "campaigns" / campaign_id)

    # -- access ----------------------------------------------------------

    def get(self, campaign_id: str) -> Campaign:
        campaign = self.campaigns.get(campaign_id)
        if campaign is None:
            raise ApiError(404, "unknown_campaign", f"no campaign {campaign_id!r}")
        return campaign

    def list_campaigns(self) -> list[dict]:
        return [
            {
                "campaign_id": c.id,
                "status": c.status,
                "observed_count": len(c.learner.observed),
                "budget": c.config.budget,
            }
            for c in self.campaigns.values()
        ]

    def submit_label(self, campaign_id, point_id, value, override) -> dict:
        campaign = self.get(campaign_id)
        with self._refit_gate:
            with campaign.lock:
                return campaign.apply_label(point_id, value, override)

    def close(self, campaign_id: str) -> dict:
        campaign = self.get(campaign_id)
        with campaign.lock:
            campaign.close()
        return {"campaign_id": campaign_id, "status": campaign.status}
