"""Command-line entry point: ``ransomcast <command> --config run.yaml``.

Every command writes structured JSON/CSV outputs under the output directory
and a short human-readable summary to stdout. Failures exit non-zero with a
single JSON error object on stderr.
"""
from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import re
import sys
import time
from pathlib import Path
from typing import Optional

from .classifier import LinearClassifier, TrainConfig, build_dataset, run_pipeline, train
from .config import PipelineConfig, derive_seed
from .domain_feed import (
    DomainName,
    detections_time_series,
    diff_zone_files,
    parse_blacklist_feed,
    parse_zone_file,
)
from .errors import (
    ConfigError,
    EmptyRange,
    InvalidDomain,
    MissingCandidates,
    NoZoneFiles,
    RansomcastError,
)
from .forecasting.align import align_exogenous
from .forecasting.arima import ExogenousSeries, arima_fit, arima_forecast, arimax_fit, arimax_forecast, grid_search
from .forecasting.backtest import ArimaSpec, BacktestConfig, HmmSpec, _exog_rows, backtest
from .forecasting.baseline import rolling_average_forecast
from .forecasting.hmm import hmm_fit, hmm_forecast
from .forecasting.series import TimeSeries, read_series_csv, series_to_csv_text
from .whois import FixtureClient, LookupBudget, WhoisCache, lookup_batch

logger = logging.getLogger("ransomcast")

_DATE_RE = re.compile(r"(\d{4}-\d{2}-\d{2})")


def _dump(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


# --- inputs -------------------------------------------------------------------


def load_snapshots(cfg: PipelineConfig) -> list:
    zone_dir = cfg.path("zone_dir")
    if zone_dir is None:
        raise ConfigError("paths.zone_dir is not set")
    dated = []
    for p in sorted(zone_dir.iterdir()):
        m = _DATE_RE.search(p.name)
        if p.is_file() and m:
            dated.append((dt.date.fromisoformat(m.group(1)), p))
    dated.sort()
    snapshots = []
    for day, p in dated:
        with open(p, encoding="utf-8") as fh:
            snapshots.append(parse_zone_file(fh, cfg["paths"]["tld"], day))
    return snapshots


def compute_diffs(cfg: PipelineConfig) -> list:
    snapshots = load_snapshots(cfg)
    if len(snapshots) < 2:
        raise NoZoneFiles(f"need at least two dated zone files, found {len(snapshots)}")
    return [diff_zone_files(a, b) for a, b in zip(snapshots, snapshots[1:])]


def load_entries(cfg: PipelineConfig, path: Optional[Path] = None) -> list:
    feeds = cfg.feeds() if path is None else [{"path": Path(path), "source": Path(path).stem, "columns": None}]
    entries = []
    for feed in feeds:
        with open(feed["path"], encoding="utf-8", newline="") as fh:
            parsed = parse_blacklist_feed(fh, feed["source"], feed["columns"])
        entries.extend(parsed.entries)
    family = cfg.family.lower()
    return [e for e in entries if e.malware_family.lower() == family]


def load_benign(cfg: PipelineConfig) -> list:
    path = cfg.path("benign_domains")
    if path is None:
        raise ConfigError("paths.benign_domains is not set")
    out = set()
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            out.add(DomainName.parse(line).registered)
        except InvalidDomain:
            logger.info("skipping benign entry %r", line)
    return sorted(out)


class WhoisService:
    """Cache + fixture client + one budget shared by every lookup of a command run."""

    def __init__(self, cfg: PipelineConfig):
        fixtures = cfg.path("whois_fixtures")
        self.client = FixtureClient(fixtures) if fixtures else None
        self.cache = WhoisCache.from_env(cfg.path("whois_cache") or cfg.out_dir / "whois_cache")
        self.budget = LookupBudget(int(cfg["classifier"]["whois_budget"]))

    def __call__(self, domains):
        return lookup_batch(domains, self.client, self.cache, self.budget)


def _train_config(cfg: PipelineConfig, stage: str) -> TrainConfig:
    c = cfg["classifier"]
    return TrainConfig(
        l2=float(c["l2"]),
        max_iters=int(c["max_iters"]),
        tolerance=float(c["tolerance"]),
        seed=derive_seed(cfg.seed, f"train/{stage}"),
        threshold=float(c[f"{stage}_threshold"]),
    )


# --- commands -------------------------------------------------------------------


def cmd_diff(cfg: PipelineConfig) -> list:
    diffs = compute_diffs(cfg)
    out = cfg.out_dir / "diffs"
    index = []
    for diff in diffs:
        stem = f"{diff.from_date.isoformat()}_{diff.to_date.isoformat()}"
        _write(out / f"{stem}.added.txt", "".join(d.raw + "\n" for d in sorted(diff.added)))
        _write(out / f"{stem}.removed.txt", "".join(d.raw + "\n" for d in sorted(diff.removed)))
        _dump(out / f"{stem}.json", diff.summary())
        index.append(diff.summary())
    _dump(out / "index.json", index)
    for s in index:
        gap = (dt.date.fromisoformat(s["to_date"]) - dt.date.fromisoformat(s["from_date"])).days
        print(f"{s['from_date']} -> {s['to_date']} ({gap}d): +{s['added_count']} -{s['removed_count']}")
    return diffs


def cmd_train(cfg: PipelineConfig, whois: Optional[WhoisService] = None, cutoff: Optional[dt.date] = None,
              write: bool = True):
    whois = whois or WhoisService(cfg)
    entries = load_entries(cfg)
    if cutoff is not None:
        entries = [e for e in entries if e.first_seen <= cutoff]
    malicious = sorted({e.domain.registered for e in entries})
    known = set(malicious)
    benign = [d for d in load_benign(cfg) if d not in known]
    ratio = float(cfg["classifier"]["benign_ratio"])

    ds1 = build_dataset([(d, None) for d in malicious], [(d, None) for d in benign], False, ratio,
                        derive_seed(cfg.seed, "balance/step1"))
    records = {o.domain: o.record for o in whois(malicious + benign)}
    ds2 = build_dataset([(d, records[d]) for d in malicious], [(d, records[d]) for d in benign], True, ratio,
                        derive_seed(cfg.seed, "balance/step2"))
    step1 = train(ds1, _train_config(cfg, "step1"))
    step2 = train(ds2, _train_config(cfg, "step2"))
    meta = {
        "cutoff": cutoff.isoformat() if cutoff else None,
        "family": cfg.family,
        "step1_rows": {"malicious": int(ds1.y.sum()), "benign": int(len(ds1) - ds1.y.sum())},
        "step2_rows": {"malicious": int(ds2.y.sum()), "benign": int(len(ds2) - ds2.y.sum())},
    }
    if write:
        models = cfg.out_dir / "models"
        _write(models / "step1.json", step1.dumps() + "\n")
        _write(models / "step2.json", step2.dumps() + "\n")
        _dump(models / "training.json", meta)
        print(f"step1: {meta['step1_rows']}  step2: {meta['step2_rows']}")
    return step1, step2, meta


def _load_models(cfg: PipelineConfig):
    models = cfg.out_dir / "models"
    p1, p2 = models / "step1.json", models / "step2.json"
    if p1.exists() and p2.exists():
        return LinearClassifier.loads(p1.read_text()), LinearClassifier.loads(p2.read_text())
    return None


def cmd_predict_domains(cfg: PipelineConfig, backfill: bool = False) -> dict:
    whois = WhoisService(cfg)
    try:
        diffs = compute_diffs(cfg)
    except NoZoneFiles:
        diffs = []
    models = None if backfill else _load_models(cfg)
    if models is None and not backfill and diffs:
        step1, step2, _ = cmd_train(cfg, whois)
        models = (step1, step2)

    per_diff, candidates, survivors = [], [], []
    totals = {"newly_registered": 0, "after_step1": 0, "after_step2": 0, "whois_unresolved": 0}
    for diff in diffs:
        step1, step2 = models if not backfill else cmd_train(cfg, whois, cutoff=diff.to_date, write=False)[:2]
        result = run_pipeline(diff, step1, step2, whois)
        counts = result.counts()
        for key in totals:
            totals[key] += counts[key]
        per_diff.append({"from_date": diff.from_date.isoformat(), "to_date": diff.to_date.isoformat(), **counts})
        survivors.extend(d.raw for d in result.step1_survivors)
        records = {o.domain: o.record for o in whois(result.step2_candidates)}
        for d in result.step2_candidates:
            rec = records.get(d)
            registered = rec.created if rec is not None and rec.created else diff.to_date
            s1, s2 = result.per_domain_scores[d]
            candidates.append({
                "domain": d.raw,
                "diff_to": diff.to_date.isoformat(),
                "registered": registered.isoformat(),
                "score1": s1,
                "score2": s2,
            })

    report = {"analyzed_diffs": len(diffs), **totals, "per_diff": per_diff, "family": cfg.family}
    out = cfg.out_dir
    _write(out / "candidates.txt", "".join(c["domain"] + "\n" for c in candidates))
    _dump(out / "candidates.json", candidates)
    _write(out / "survivors.txt", "".join(s + "\n" for s in survivors))
    _dump(out / "report.json", report)
    if candidates:
        days = sorted(dt.date.fromisoformat(c["registered"]) for c in candidates)
        counts = [0.0] * ((days[-1] - days[0]).days + 1)
        for day in days:
            counts[(day - days[0]).days] += 1
        _write(out / "candidate_registrations.csv",
               series_to_csv_text(TimeSeries(days[0], counts, "candidate_registrations")))
    print(
        f"diffs {report['analyzed_diffs']}  newly registered {totals['newly_registered']}  "
        f"after step 1 {totals['after_step1']}  after step 2 {totals['after_step2']}"
    )
    return report


def cmd_verify(cfg: PipelineConfig, later_feed: Optional[Path] = None) -> dict:
    out = cfg.out_dir
    cand_path = out / "candidates.json"
    if not cand_path.exists():
        raise MissingCandidates(f"{cand_path} not found; run predict-domains first")
    candidates = json.loads(cand_path.read_text())
    later_feed = later_feed or cfg.path("later_feed")
    if later_feed is None:
        raise ConfigError("no later blacklist feed given (paths.later_feed or --later-feed)")
    detected = {}
    for e in load_entries(cfg, later_feed):
        key = e.domain.registered.raw
        detected[key] = min(detected.get(key, e.first_seen), e.first_seen)

    gaps = []
    for c in candidates:
        if c["domain"] in detected:
            reg = dt.date.fromisoformat(c["registered"])
            gaps.append({
                "domain": c["domain"],
                "registered": c["registered"],
                "detected": detected[c["domain"]].isoformat(),
                "days": (detected[c["domain"]] - reg).days,
            })
    survivors_path = out / "survivors.txt"
    survivors = survivors_path.read_text().split() if survivors_path.exists() else []
    verified_step1 = sum(1 for s in set(survivors) if s in detected)
    result = {
        "candidates": len(candidates),
        "verified": len(gaps),
        "verified_step1": verified_step1,
        "gaps": gaps,
        "mean_gap_days": (sum(g["days"] for g in gaps) / len(gaps)) if gaps else None,
    }
    _dump(out / "verify.json", result)
    report_path = out / "report.json"
    if report_path.exists():
        report = json.loads(report_path.read_text())
        report.update({"verified_step1": verified_step1, "verified_step2": len(gaps)})
        _dump(out / "run_report.json", report)
    print(f"verified {len(gaps)} of {len(candidates)} candidates")
    return result


def detection_series(cfg: PipelineConfig) -> TimeSeries:
    path = cfg.path("detections_series")
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            return read_series_csv(fh, name=f"{cfg.family.lower()}_detections")
    entries = load_entries(cfg)
    f = cfg["forecast"]
    if not entries and not (f["series_start"] and f["series_end"]):
        raise EmptyRange(f"no {cfg.family} detections to build a series from")
    start = dt.date.fromisoformat(str(f["series_start"])) if f["series_start"] else min(e.first_seen for e in entries)
    end = dt.date.fromisoformat(str(f["series_end"])) if f["series_end"] else max(e.first_seen for e in entries)
    return detections_time_series(entries, cfg.family, start, end)


def exogenous(cfg: PipelineConfig, target: TimeSeries):
    path = cfg.path("exog_series")
    if path is None:
        return None, None
    with open(path, encoding="utf-8") as fh:
        x = read_series_csv(fh, name="candidate_registrations")
    f = cfg["forecast"]
    if f["exog_lag"] is not None:
        return ExogenousSeries([x], int(f["exog_lag"])), None
    alignment = align_exogenous(target, x, int(f["max_lag"]))
    return ExogenousSeries([x], alignment.lag), alignment


def _backtest_config(cfg: PipelineConfig, with_exog: bool) -> BacktestConfig:
    f = cfg["forecast"]
    grid = f["grid"]
    order = tuple(f["arima_order"]) if f["arima_order"] else None
    spec = ArimaSpec(order, int(grid["max_p"]), int(grid["max_d"]), int(grid["max_q"]), int(f["n_jobs"]))
    models = tuple(m for m in f["models"] if m != "arimax" or with_exog)
    h = f["hmm"]
    return BacktestConfig(
        train_fraction=float(f["train_fraction"]),
        horizon=int(f["horizon"]),
        window=f["window"],
        baserate_window=int(f["baserate_window"]),
        models=models,
        hmm=HmmSpec(int(h["n_states"]), h["family"], int(h["restarts"]), int(h["max_iters"]), float(h["tolerance"])),
        arima=spec,
        arimax=spec,
        seed=derive_seed(cfg.seed, "hmm"),
    )


def cmd_backtest(cfg: PipelineConfig) -> dict:
    target = detection_series(cfg)
    exog, alignment = exogenous(cfg, target)
    bt_cfg = _backtest_config(cfg, exog is not None)
    report = backtest(target, exog, bt_cfg)
    doc = report.to_dict()
    doc["alignment"] = alignment.to_dict() if alignment else None
    out = cfg.out_dir
    _dump(out / "backtest.json", doc)
    _write(out / "backtest_plot.csv", report.plot_csv())
    _write(out / "backtest.txt", report.text() + "\n")
    print(report.text())
    return doc


def cmd_forecast(cfg: PipelineConfig, horizon: Optional[int] = None) -> dict:
    target = detection_series(cfg)
    exog, alignment = exogenous(cfg, target)
    bt = _backtest_config(cfg, exog is not None)
    h = horizon or bt.horizon
    y = target.values
    doc = {"start": str(target.end_date + dt.timedelta(days=1)), "horizon": h, "forecasts": {}, "models": {}}
    if "baserate" in bt.models:
        doc["forecasts"]["baserate"] = rolling_average_forecast(y, min(bt.baserate_window, len(y)), h).tolist()
    if "hmm" in bt.models:
        s = bt.hmm
        model = hmm_fit(y, s.n_states, s.family, s.max_iters, s.tolerance, s.restarts, bt.seed)
        doc["forecasts"]["hmm"] = hmm_forecast(model, y, h).tolist()
        doc["models"]["hmm"] = model.to_dict()
    if "arima" in bt.models:
        spec = bt.arima
        model = arima_fit(y, spec.order) if spec.order else grid_search(
            y, None, spec.max_p, spec.max_d, spec.max_q, spec.n_jobs).best
        doc["forecasts"]["arima"] = arima_forecast(model, y, h).tolist()
        doc["models"]["arima"] = model.to_dict()
    if "arimax" in bt.models and exog is not None:
        X = exog.matrix(target.start_date, len(y) + h, allow_partial=True)
        start, future, filled = _exog_rows(X, 0, len(y), h)
        spec = bt.arimax
        xs = X[start : len(y)]
        model = arimax_fit(y[start:], xs, spec.order) if spec.order else grid_search(
            y[start:], xs, spec.max_p, spec.max_d, spec.max_q, spec.n_jobs).best
        doc["forecasts"]["arimax"] = arimax_forecast(model, y[start:], future, h).tolist()
        doc["models"]["arimax"] = model.to_dict()
        doc["exog_persistence_days"] = filled
        doc["exog_lag"] = exog.lag
    if alignment is not None:
        doc["alignment"] = alignment.to_dict()
    _dump(cfg.out_dir / "forecast.json", doc)
    for name, values in doc["forecasts"].items():
        print(f"{name:>9}: " + " ".join(f"{v:.2f}" for v in values))
    return doc


# --- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="top-level random seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--family", help="malware family to track, e.g. Cerber")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="ransomcast", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("diff", parents=[common], help="diff consecutive zone files")
    sub.add_parser("train", parents=[common], help="train the Step 1 / Step 2 classifiers")
    p = sub.add_parser("predict-domains", parents=[common], help="run both classifiers over all zone diffs")
    p.add_argument("--backfill", action="store_true", help="retrain on the detections known at each diff date")
    p = sub.add_parser("verify", parents=[common], help="match candidates against a later blacklist")
    p.add_argument("--later-feed", help="blacklist CSV collected after the prediction run")
    p = sub.add_parser("forecast", parents=[common], help="forecast the next days of detections")
    p.add_argument("--horizon", type=int)
    sub.add_parser("backtest", parents=[common], help="sliding-window evaluation of all forecasters")
    return parser


def main(argv: Optional[list] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    started = time.perf_counter()
    try:
        overrides = {
            "seed": args.seed,
            "family": args.family,
            "paths.out_dir": str(Path(args.out).resolve()) if args.out else None,
        }
        cfg = PipelineConfig.load(args.config, overrides)
        if args.command == "diff":
            cmd_diff(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "predict-domains":
            cmd_predict_domains(cfg, backfill=args.backfill)
        elif args.command == "verify":
            cmd_verify(cfg, Path(args.later_feed) if args.later_feed else None)
        elif args.command == "forecast":
            cmd_forecast(cfg, args.horizon)
        elif args.command == "backtest":
            cmd_backtest(cfg)
    except RansomcastError as exc:
        print(json.dumps({"error": exc.code, "message": str(exc), "command": args.command}), file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - every failure must surface as one structured line
        print(json.dumps({"error": type(exc).__name__, "message": str(exc), "command": args.command}),
              file=sys.stderr)
        return 1
    logger.info("%s finished in %.2fs", args.command, time.perf_counter() - started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
