"""Command-line entry point.

Subcommands: generate, train, evaluate, backtest, features.  Every run
writes a resolved-config snapshot next to its outputs, so any result can
be reproduced from the snapshot alone.  Report CSVs start with a
'# generated <utc-time>' comment line unless --no-timestamp is given;
dataset CSVs (hf/lf/returns) never carry one, so they stay loadable.

Config files are flat JSON objects whose keys mirror the dataclass field
names of the settings they override; command-line flags win over config
file values.  The key `hf_days` also sets the bar-history window used when
loading CSV datasets (default 10), so one config file can describe both how
a dataset was generated and how to read it back.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import backtest as bt
from . import features as feat
from . import marketdata as md
from . import metrics
from . import model as model_mod
from . import train as train_mod


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a flat JSON object")
    return cfg


def _fill_dataclass(cls, cfg: dict, **overrides):
    """Build a dataclass from config-file keys plus explicit overrides."""
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {k: v for k, v in cfg.items() if k in names}
    for k, v in overrides.items():
        if v is not None:
            kwargs[k] = v
    obj = cls(**kwargs)
    for tup in ("betas", "latent_weights"):
        if hasattr(obj, tup) and isinstance(getattr(obj, tup), list):
            setattr(obj, tup, tuple(getattr(obj, tup)))
    return obj


def _write_snapshot(out_dir: str, payload: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "resolved_config.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _report_writer(path: str, no_timestamp: bool):
    fh = open(path, "w", newline="")
    if not no_timestamp:
        stamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
        fh.write(f"# generated {stamp}\n")
    return fh


def _fmt(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _prepare_data(data_dir: str, hf_days: int = 10):
    """Load, drop untradable stocks, keep raw and filtered versions."""
    raw = md.load_csv(data_dir, hf_days)
    filtered = [md.filter_tradable(cs) for cs in raw]
    return raw, filtered


def _score_all(params, state, cross_sections) -> dict:
    scores = {}
    for cs in cross_sections:
        normed = md.apply_normalizer(state, cs)
        s = model_mod.forward(params, normed)
        scores[cs.date] = dict(zip(normed.stock_ids(), map(float, s)))
    return scores


def _write_scores(path: str, scores: dict, no_timestamp: bool) -> None:
    with _report_writer(path, no_timestamp) as fh:
        wr = csv.writer(fh)
        wr.writerow(("date", "stock_id", "score"))
        for date in sorted(scores):
            for sid in sorted(scores[date]):
                wr.writerow((date, sid, _fmt(scores[date][sid])))


def _read_scores(path: str) -> dict:
    out: dict = {}
    with open(path) as fh:
        first = fh.readline()
        if not first.startswith("#"):
            fh.seek(0)
        rd = csv.reader(fh)
        header = next(rd)
        if header[:3] != ["date", "stock_id", "score"]:
            raise ValueError(f"{path}: expected header date,stock_id,score")
        for lineno, row in enumerate(rd, start=2):
            if not row:
                continue
            try:
                out.setdefault(row[0], {})[row[1]] = float(row[2])
            except (IndexError, ValueError):
                raise ValueError(f"{path}:{lineno}: malformed score row") from None
    return out


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    cfg = _fill_dataclass(md.SyntheticConfig, _load_config_file(args.config),
                          n_stocks=args.stocks, n_days=args.days,
                          return_noise=args.noise)
    market = md.generate_synthetic_market(cfg, args.seed)
    os.makedirs(args.out, exist_ok=True)
    md.write_csv(market.cross_sections, args.out)
    with _report_writer(os.path.join(args.out, "truth_scores.csv"),
                        args.no_timestamp) as fh:
        wr = csv.writer(fh)
        wr.writerow(("date", "stock_id", "score"))
        for d, date in enumerate(market.dates):
            for i, sid in enumerate(market.stock_ids):
                wr.writerow((date, sid, _fmt(market.truth_scores[d, i])))
    _write_snapshot(args.out, {"subcommand": "generate", "seed": args.seed,
                               "config": dataclasses.asdict(cfg)})
    print(f"generated {len(market.cross_sections)} cross-sections "
          f"({cfg.n_stocks} stocks) under {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg_file = _load_config_file(args.config)
    tcfg = _fill_dataclass(train_mod.TrainConfig, cfg_file, seed=args.seed,
                           k=args.k, m=args.m, epochs=args.epochs)
    raw, filtered = _prepare_data(args.data, int(cfg_file.get("hf_days", 10)))
    val_days = args.val_days
    if val_days is None:
        val_days = int(cfg_file.get("val_days", max(1, len(filtered) // 5)))
    if val_days >= len(filtered):
        raise ValueError(f"val_days {val_days} >= dataset days {len(filtered)}")
    train_cs = filtered[:len(filtered) - val_days]
    val_cs = filtered[len(filtered) - val_days:]
    state = md.fit_normalizer(train_cs)
    train_n = [md.apply_normalizer(state, cs) for cs in train_cs]
    val_n = [md.apply_normalizer(state, cs) for cs in val_cs]

    mcfg = _fill_dataclass(model_mod.ModelConfig, cfg_file, dim=args.dim,
                           init_seed=args.seed)
    mcfg.n_lf_fields = len(state.kept_lf_fields())
    params = model_mod.ModelParams.init(mcfg)
    os.makedirs(args.out, exist_ok=True)
    result = train_mod.train(params, train_n, val_n, tcfg,
                             log_path=os.path.join(args.out, "train_log.csv"))
    model_mod.save_checkpoint(os.path.join(args.out, "checkpoint.npz"),
                              result.params, result.step, result.val_rankic)
    md.save_normalizer(os.path.join(args.out, "normalizer.npz"), state)
    _write_snapshot(args.out, {
        "subcommand": "train", "seed": args.seed, "data": args.data,
        "val_days": val_days, "train_config": dataclasses.asdict(tcfg),
        "model_config": dataclasses.asdict(mcfg),
        "normalizer_warnings": state.warnings})
    val_txt = "n/a" if result.val_rankic is None else f"{result.val_rankic:.4f}"
    print(f"trained {tcfg.epochs} epochs ({result.history[-1]['step']} steps); "
          f"selected step {result.step}, val RankIC {val_txt}")
    return 0


def _load_model(args):
    params, meta = model_mod.load_checkpoint(args.checkpoint)
    norm_path = args.normalizer
    if norm_path is None:
        norm_path = os.path.join(os.path.dirname(args.checkpoint), "normalizer.npz")
    state = md.load_normalizer(norm_path)
    return params, state, meta


def cmd_evaluate(args) -> int:
    cfg_file = _load_config_file(args.config)
    params, state, meta = _load_model(args)
    raw, filtered = _prepare_data(args.data, int(cfg_file.get("hf_days", 10)))
    scores = _score_all(params, state, filtered)
    daily = []
    for cs in filtered:
        s = np.array([scores[cs.date][sid] for sid in cs.stock_ids()])
        daily.append(metrics.DailyEvaluation(cs.date,
                                             metrics.spearman(s, cs.returns),
                                             cs.n))
    os.makedirs(args.out, exist_ok=True)
    with _report_writer(os.path.join(args.out, "daily_ic.csv"),
                        args.no_timestamp) as fh:
        wr = csv.writer(fh)
        wr.writerow(("date", "rank_ic", "n_stocks"))
        for d in daily:
            wr.writerow((d.date, _fmt(d.rank_ic), d.n_stocks))
    mean_ic = metrics.mean_rank_ic(daily)
    icir = metrics.rank_icir(daily) if len(daily) >= 2 else None
    with _report_writer(os.path.join(args.out, "summary.csv"),
                        args.no_timestamp) as fh:
        wr = csv.writer(fh)
        wr.writerow(("mean_rank_ic", "rank_icir", "days"))
        wr.writerow((_fmt(mean_ic), _fmt(icir), len(daily)))
    _write_scores(os.path.join(args.out, "scores.csv"), scores,
                  args.no_timestamp)
    _write_snapshot(args.out, {"subcommand": "evaluate", "seed": args.seed,
                               "data": args.data, "checkpoint": args.checkpoint,
                               "checkpoint_meta": meta})
    ic_txt = "n/a" if mean_ic is None else f"{mean_ic:.4f}"
    print(f"evaluated {len(daily)} days; mean RankIC {ic_txt}")
    return 0


def cmd_backtest(args) -> int:
    if (args.scores is None) == (args.checkpoint is None):
        raise ValueError("exactly one of --scores / --checkpoint is required")
    cfg_file = _load_config_file(args.config)
    raw, filtered = _prepare_data(args.data, int(cfg_file.get("hf_days", 10)))
    if args.scores is not None:
        scores = _read_scores(args.scores)
        snapshot_src = {"scores": args.scores}
    else:
        params, state, meta = _load_model(args)
        scores = _score_all(params, state, filtered)
        snapshot_src = {"checkpoint": args.checkpoint}
    ecfg = _fill_dataclass(bt.ExecutionConfig, cfg_file,
                           initial_capital=args.capital, mode=args.mode)
    ledger, summary = bt.run_backtest(scores, raw, ecfg)
    os.makedirs(args.out, exist_ok=True)
    with _report_writer(os.path.join(args.out, "equity.csv"),
                        args.no_timestamp) as fh:
        wr = csv.writer(fh)
        wr.writerow(("date", "equity", "cash"))
        for date, eq, cash in ledger.equity_curve:
            wr.writerow((date, _fmt(eq), _fmt(cash)))
    with _report_writer(os.path.join(args.out, "fills.csv"),
                        args.no_timestamp) as fh:
        wr = csv.writer(fh)
        wr.writerow(("date", "stock_id", "shares", "price", "fee",
                     "dropped_shares"))
        for f in ledger.fills:
            wr.writerow((f.date, f.stock_id, _fmt(f.shares), _fmt(f.price),
                         _fmt(f.fee), _fmt(f.dropped_shares)))
    with _report_writer(os.path.join(args.out, "summary.csv"),
                        args.no_timestamp) as fh:
        wr = csv.writer(fh)
        keys = list(summary)
        wr.writerow(keys)
        wr.writerow([summary[k] if isinstance(summary[k], int)
                     else _fmt(summary[k]) for k in keys])
    _write_snapshot(args.out, {"subcommand": "backtest", "seed": args.seed,
                               "data": args.data, "source": snapshot_src,
                               "execution_config": dataclasses.asdict(ecfg),
                               "warnings": ledger.warnings[:50]})
    print(f"backtested {summary['days']} days; accumulated return "
          f"{summary['accumulated_return_pct']:.2f}%")
    return 0


def cmd_features(args) -> int:
    cfg_file = _load_config_file(args.config)
    raw, filtered = _prepare_data(args.data, int(cfg_file.get("hf_days", 10)))
    os.makedirs(args.out, exist_ok=True)
    with _report_writer(os.path.join(args.out, "factors.csv"),
                        args.no_timestamp) as fh:
        wr = csv.writer(fh)
        wr.writerow(("date", "stock_id") + feat.FACTOR_NAMES + ("oi_substituted",))
        for cs in filtered:
            for row in feat.factor_rows(cs):
                wr.writerow((row.date, row.stock_id, _fmt(row.rvar),
                             _fmt(row.rskew), _fmt(row.rkurt),
                             _fmt(row.downside_beta), _fmt(row.flow_in_ratio),
                             _fmt(row.trend_strength),
                             int(row.oi_substituted)))
    _write_snapshot(args.out, {"subcommand": "features", "seed": args.seed,
                               "data": args.data})
    print(f"wrote factors for {len(filtered)} days")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xsrank",
                                description="Cross-sectional stock ranking "
                                            "engine")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--config", help="flat JSON config file")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--no-timestamp", action="store_true",
                        help="omit timestamp lines from report CSVs")

    g = sub.add_parser("generate", help="write a synthetic CSV dataset")
    common(g)
    g.add_argument("--stocks", type=int)
    g.add_argument("--days", type=int)
    g.add_argument("--noise", type=float, help="return noise scale")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a ranking model on a dataset")
    common(t)
    t.add_argument("--data", required=True)
    t.add_argument("--k", type=int)
    t.add_argument("--m", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--dim", type=int)
    t.add_argument("--val-days", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="daily RankIC of a checkpoint")
    common(e)
    e.add_argument("--data", required=True)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--normalizer")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("backtest", help="sorted-portfolio simulation")
    common(b)
    b.add_argument("--data", required=True)
    b.add_argument("--scores", help="scores CSV (date,stock_id,score)")
    b.add_argument("--checkpoint")
    b.add_argument("--normalizer")
    b.add_argument("--capital", type=float)
    b.add_argument("--mode", choices=("long-short", "long-only"))
    b.set_defaults(func=cmd_backtest)

    f = sub.add_parser("features", help="intraday factor CSV")
    common(f)
    f.add_argument("--data", required=True)
    f.set_defaults(func=cmd_features)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, OSError) as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error: {args.command}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
