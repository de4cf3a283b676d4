"""Command-line pipeline orchestration.

Each subcommand reads and writes versioned artifacts in an output
directory: datasets and traces as CSV with lineage sidecars, models and
results as JSON with embedded lineage. All randomness flows from
explicit seeds; rerunning a command with the same inputs and seeds
reproduces its outputs byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as artio
from .datagen import OperationalDataset, read_dataset_csv, write_dataset_csv
from .estimation import (
    DisturbanceTrace,
    NoiseConfig,
    ODParams,
    estimate_id_trace,
    estimate_od_trace,
    read_trace_csv,
    write_trace_csv,
)
from .features import lookup_case, resample_hourly, resample_trace_hourly
from .nnet import TrainConfig, load_model, save_model
from .pipeline import (
    ID_PIPELINE_NOISE,
    TRACE_NOISE,
    IdentBudgets,
    ForecastModel,
    default_lstm_spec,
    forecast_disturbance,
    identify_methods,
    train_forecaster,
)
from .predict import evaluate, predict_conventional, predict_hybrid, warmup_state
from .rcmodel import THETA_TRUE, ThetaParams, bode_magnitude, build_continuous, step_response
from .scenario import SCENARIOS, build_dataset
from .selection import DesignObservation, fit_effect_regression, fit_lognormal, rank_cases
from .svgplot import interval_plot, line_plot
from .sysid import IdentResult, comparison_table

log = logging.getLogger("hybridrc")


def _load_config(args) -> dict:
    cfg = {}
    if args.config:
        cfg = json.loads(Path(args.config).read_text())
    for key in ("seed", "out"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _lineage_cfg(cfg) -> dict:
    # the output location must not influence artifact fingerprints, or
    # reruns into fresh directories would never be byte-identical
    return {k: v for k, v in cfg.items() if k != "out"}


def cmd_generate(args):
    cfg = _load_config(args)
    name = args.scenario or cfg.get("scenario", "paper-twoweek")
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choices: {sorted(SCENARIOS)}")
    seed = int(cfg.get("seed", 1))
    spec = SCENARIOS[name]
    ds = build_dataset(spec, seed=seed)
    out = _out_dir(cfg)
    path = out / "dataset.csv"
    write_dataset_csv(ds, path)
    artio.write_csv_meta(path, artio.make_lineage(
        {"scenario": name, "seed": seed}))
    print(json.dumps({"written": str(path), "rows": len(ds), "scenario": name}))


def _budgets_from(cfg) -> IdentBudgets:
    b = cfg.get("ident", {})
    kw = {k: int(v) for k, v in b.items() if k in IdentBudgets.__dataclass_fields__}
    return IdentBudgets(**kw)


def cmd_identify(args):
    cfg = _load_config(args)
    ds_path = args.dataset or cfg.get("dataset")
    if not ds_path or not Path(ds_path).exists():
        raise FileNotFoundError("identify needs an existing --dataset CSV")
    dataset = read_dataset_csv(ds_path)
    seed = int(cfg.get("seed", 0))
    methods = ("conv", "id", "od") if args.method == "all" else (args.method,)
    results = identify_methods(dataset, seed=seed, budgets=_budgets_from(cfg),
                               methods=methods)
    out = _out_dir(cfg)
    lineage = artio.make_lineage(_lineage_cfg(cfg), {"dataset": artio.sha256_file(ds_path)})
    for m, res in results.items():
        artio.write_json_artifact(out / f"ident_{m}.json", res.to_dict(), lineage)
    theta_ref = THETA_TRUE if cfg.get("compare_true", True) else None
    table = comparison_table(results, theta_ref)
    artio.atomic_write_text(out / "ident_comparison.txt", table + "\n")
    print(table)


def _theta_from_ident(path) -> tuple[ThetaParams, IdentResult]:
    doc, _ = artio.read_json_artifact(path)
    res = IdentResult.from_dict(doc)
    return res.theta, res


def cmd_estimate(args):
    cfg = _load_config(args)
    ds_path = args.dataset or cfg.get("dataset")
    dataset = read_dataset_csv(ds_path)
    theta, res = _theta_from_ident(args.ident)
    out = _out_dir(cfg)
    if args.kind == "id":
        trace, _ = estimate_id_trace(theta, TRACE_NOISE, dataset,
                                     source=artio.sha256_file(args.ident)[:12])
    else:
        od = res.extra if isinstance(res.extra, ODParams) else ODParams()
        trace = estimate_od_trace(theta, od, dataset,
                                  source=artio.sha256_file(args.ident)[:12])
    path = out / f"trace_{args.kind}.csv"
    write_trace_csv(trace, path)
    artio.write_csv_meta(path, artio.make_lineage(_lineage_cfg(cfg), {
        "dataset": artio.sha256_file(ds_path),
        "ident": artio.sha256_file(args.ident),
    }))
    print(json.dumps({"written": str(path), "kind": trace.kind, "rows": len(trace)}))


def _train_config(cfg, seed) -> TrainConfig:
    t = cfg.get("train", {})
    return TrainConfig(
        max_epochs=int(t.get("max_epochs", 300)),
        patience=int(t.get("patience", 50)),
        batch_size=int(t.get("batch_size", 64)),
        learning_rate=float(t.get("learning_rate", 3e-3)),
        seed=seed,
        repeat=int(t.get("repeat", 1)),
    )


def cmd_train(args):
    cfg = _load_config(args)
    ds_path = args.dataset or cfg.get("dataset")
    dataset = read_dataset_csv(ds_path)
    trace = read_trace_csv(args.trace)
    seed = int(cfg.get("seed", 0))
    case = lookup_case("recurrent", args.case)
    hourly = resample_hourly(dataset)
    trace_h = resample_trace_hourly(trace)
    n_hours = len(hourly)
    val_hours = int(cfg.get("train", {}).get("val_days", 7)) * 24
    spec = default_lstm_spec(
        case,
        n_z=int(cfg.get("train", {}).get("n_z", 20)),
        n_layer=int(cfg.get("train", {}).get("n_layer", 1)),
        activation=cfg.get("train", {}).get("activation", "relu"),
    )
    model = train_forecaster(
        trace_h, hourly, spec, case,
        slice(24, n_hours - val_hours), slice(n_hours - val_hours, n_hours),
        _train_config(cfg, seed),
    )
    out = _out_dir(cfg)
    path = out / "model.json"
    save_model(path, model.spec, model.params, model.norm_psi, model.norm_xi,
               meta={
                   "case": args.case, "family": "recurrent",
                   "trace_kind": trace.kind,
                   "lineage": artio.make_lineage(_lineage_cfg(cfg), {
                       "dataset": artio.sha256_file(ds_path),
                       "trace": artio.sha256_file(args.trace),
                   }),
               })
    hist = model.history
    print(json.dumps({
        "written": str(path),
        "best_epoch": hist.best_epoch,
        "best_val_loss": hist.test_loss[hist.best_epoch],
        "epochs_run": hist.stopped_epoch + 1,
    }))


def cmd_predict(args):
    cfg = _load_config(args)
    ds_path = args.dataset or cfg.get("dataset")
    dataset = read_dataset_csv(ds_path)
    theta, res = _theta_from_ident(args.ident)
    hybrid = args.method in ("hybrid", "both")
    if hybrid and (not args.model or not Path(args.model).exists()):
        raise FileNotFoundError("missing model: hybrid prediction needs --model")

    steps_day = int(round(86400.0 / dataset.step_seconds))
    r = int(round(3600.0 / dataset.step_seconds))
    from_day = int(args.from_day)
    runs = []
    if hybrid:
        spec, params, norm_psi, norm_xi, meta = load_model(args.model)
        fmodel = ForecastModel(meta.get("family", "recurrent"),
                               meta.get("case", "case01"), spec, params,
                               norm_psi, norm_xi)
        trace15, _ = estimate_id_trace(theta, TRACE_NOISE, dataset)
        trace_h = resample_trace_hourly(trace15)
        hourly = resample_hourly(dataset)
    last_day = len(dataset) // steps_day - 1
    for day in range(from_day, last_day):
        k0 = day * steps_day
        x0 = warmup_state(theta, dataset.slice(k0 - steps_day, k0))
        w_fut = dataset.w[k0: k0 + steps_day]
        u_fut = dataset.u[k0: k0 + steps_day]
        origin = dataset.timestamps[k0]
        if args.method in ("conventional", "both"):
            runs.append(predict_conventional(theta, x0, w_fut, u_fut,
                                             dataset.step_seconds, origin=origin))
        if hybrid:
            zeta = forecast_disturbance(fmodel, trace_h, hourly, day * 24)
            fc = DisturbanceTrace("ID", np.repeat(zeta, r),
                                  dataset.timestamps[k0: k0 + steps_day])
            runs.append(predict_hybrid(theta, x0, w_fut, u_fut, fc,
                                       dataset.step_seconds, origin=origin))
    out = _out_dir(cfg)
    path = out / "predictions.csv"
    lines = [["origin", "method", "timestamp", "y_pred"]]
    for run in runs:
        for t, y in zip(run.timestamps, run.y_pred):
            lines.append([str(run.origin.astype("datetime64[s]")), run.method,
                          str(t.astype("datetime64[s]")), f"{y:.10g}"])
    text = "\n".join(",".join(row) for row in lines) + "\n"
    artio.atomic_write_text(path, text)
    upstream = {"dataset": artio.sha256_file(ds_path),
                "ident": artio.sha256_file(args.ident)}
    if hybrid:
        upstream["model"] = artio.sha256_file(args.model)
    artio.write_csv_meta(path, artio.make_lineage(_lineage_cfg(cfg), upstream))
    print(json.dumps({"written": str(path), "runs": len(runs)}))


def _read_predictions(path):
    from .predict import PredictionRun

    with Path(path).open() as fh:
        rows = list(csv.DictReader(fh))
    groups = {}
    for row in rows:
        groups.setdefault((row["origin"], row["method"]), []).append(row)
    runs = []
    for (origin, method), grp in sorted(groups.items()):
        stamps = np.array([np.datetime64(g["timestamp"], "s") for g in grp])
        y = np.array([float(g["y_pred"]) for g in grp])
        runs.append(PredictionRun(np.datetime64(origin, "s"), method, stamps, y))
    return runs


def cmd_evaluate(args):
    cfg = _load_config(args)
    ds_path = args.dataset or cfg.get("dataset")
    meta = artio.read_csv_meta(args.predictions)
    artio.check_upstream(meta, "dataset", ds_path)
    dataset = read_dataset_csv(ds_path)
    runs = _read_predictions(args.predictions)
    report = evaluate(runs, dataset)
    out = _out_dir(cfg)
    artio.write_json_artifact(out / "metrics.json", report, artio.make_lineage(_lineage_cfg(cfg), {
        "dataset": artio.sha256_file(ds_path),
        "predictions": artio.sha256_file(args.predictions),
    }))
    rows = ["origin,method,rmse,mae"]
    for r in report["per_run"]:
        rows.append(f'{r["origin"]},{r["method"]},{r["rmse"]:.6g},{r["mae"]:.6g}')
    artio.atomic_write_text(out / "metrics_per_day.csv", "\n".join(rows) + "\n")
    print(json.dumps(report["per_method"], sort_keys=True))


OBS_COLUMNS = ["case_id", "arch", "uses_time", "pattern_days", "uses_past_w",
               "uses_future_w", "uses_id", "test_rmse"]


def cmd_select(args):
    cfg = _load_config(args)
    with Path(args.observations).open() as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not set(OBS_COLUMNS) <= set(rows[0]):
        raise ValueError(f"observations CSV must have columns {OBS_COLUMNS}")
    obs = [DesignObservation(
        case_id=r["case_id"], arch=r["arch"],
        uses_time=r["uses_time"] in ("1", "true", "True"),
        pattern_days=float(r["pattern_days"]),
        uses_past_w=r["uses_past_w"] in ("1", "true", "True"),
        uses_future_w=r["uses_future_w"] in ("1", "true", "True"),
        uses_id=r["uses_id"] in ("1", "true", "True"),
        test_rmse=float(r["test_rmse"]),
    ) for r in rows]
    seed = int(cfg.get("seed", 0))
    effects = fit_effect_regression(obs, seed=seed)
    by_case = {}
    for o in obs:
        by_case.setdefault(o.case_id, []).append(o.test_rmse)
    fits = {cid: fit_lognormal(v, seed=seed + 1) for cid, v in by_case.items()
            if len(v) >= 3}
    out = _out_dir(cfg)
    lineage = artio.make_lineage(_lineage_cfg(cfg), {"observations": artio.sha256_file(args.observations)})
    effect_doc = {
        "coefficients": {
            name: {"mean": effects.mean(name),
                   "p_negative": effects.prob_negative(name),
                   "interval95": list(effects.interval(name))}
            for name in effects.names if name != "log_sigma"
        },
        "acceptance": effects.acceptance,
    }
    artio.write_json_artifact(out / "effects.json", effect_doc, lineage)
    if len(fits) >= 2:
        report = rank_cases(fits, seed=seed + 2)
        artio.write_json_artifact(out / "ranking.json", report, lineage)
        rows_csv = ["case,median,iqr,p_best_better,indistinguishable"]
        for r in report["ranking"]:
            rows_csv.append(f'{r["case"]},{r["median"]:.6g},{r["iqr"]:.6g},'
                            f'{r["p_best_better"]:.4f},{int(r["indistinguishable"])}')
        artio.atomic_write_text(out / "ranking.csv", "\n".join(rows_csv) + "\n")
        interval_plot(
            out / "ranking.svg",
            [{"label": r["case"],
              "lo": r["median"] - r["iqr"] / 2, "mid": r["median"],
              "hi": r["median"] + r["iqr"] / 2, "flag": r["indistinguishable"]}
             for r in report["ranking"]],
            title="Case robustness (posterior predictive)",
            xlabel="test RMSE",
        )
        print(json.dumps({"best": report["best"],
                          "indistinguishable": [r["case"] for r in report["ranking"]
                                                if r["indistinguishable"]]}))
    else:
        print(json.dumps({"effects": str(out / "effects.json")}))


def cmd_analyze(args):
    cfg = _load_config(args)
    out = _out_dir(cfg)
    models = {}
    if cfg.get("compare_true", True):
        models["true"] = THETA_TRUE
    for path in args.ident or []:
        theta, res = _theta_from_ident(path)
        models[res.method] = theta
    if not models:
        raise ValueError("analyze needs at least one ident result or compare_true")
    cph = 1.0 / 3600.0
    freqs = np.logspace(-3, 1, 60) * cph
    channels = ("toa", "qsol", "uh", "uc")
    bode_rows = ["channel,freq_hz," + ",".join(models)]
    for ch in channels:
        mags = {name: bode_magnitude(build_continuous(th), ch, freqs)
                for name, th in models.items()}
        for i, f in enumerate(freqs):
            bode_rows.append(f"{ch},{f:.8g}," + ",".join(f"{mags[n][i]:.8g}" for n in models))
        line_plot(out / f"bode_{ch}.svg",
                  [(name, freqs, mags[name]) for name in models],
                  title=f"Bode magnitude: {ch}", xlabel="Hz", ylabel="|G|", logx=True)
    artio.atomic_write_text(out / "bode.csv", "\n".join(bode_rows) + "\n")
    step_rows = ["channel,hour," + ",".join(models)]
    for ch in channels:
        series = {}
        for name, th in models.items():
            t, y = step_response(build_continuous(th), ch, horizon_hours=12.0,
                                 dt_seconds=300.0)
            series[name] = (t, y)
        t = series[next(iter(series))][0]
        for i, tv in enumerate(t):
            step_rows.append(f"{ch},{tv:.6g}," + ",".join(
                f"{series[n][1][i]:.8g}" for n in models))
        line_plot(out / f"step_{ch}.svg",
                  [(name, series[name][0], series[name][1]) for name in models],
                  title=f"Unit step response: {ch}", xlabel="hours", ylabel="degC")
    artio.atomic_write_text(out / "step.csv", "\n".join(step_rows) + "\n")
    print(json.dumps({"written": [str(out / "bode.csv"), str(out / "step.csv")],
                      "models": list(models)}))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hybridrc",
                                description="gray-box + disturbance-forecast toolkit")
    p.add_argument("--config", help="JSON run configuration")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)
        return sp

    sp = common(sub.add_parser("generate", help="synthesize a scenario dataset"))
    sp.add_argument("--scenario", choices=sorted(SCENARIOS), default=None)
    sp.set_defaults(func=cmd_generate)

    sp = common(sub.add_parser("identify", help="estimate model parameters"))
    sp.add_argument("--dataset")
    sp.add_argument("--method", choices=("conv", "id", "od", "all"), default="all")
    sp.set_defaults(func=cmd_identify)

    sp = common(sub.add_parser("estimate", help="extract a disturbance trace"))
    sp.add_argument("--dataset")
    sp.add_argument("--ident", required=True)
    sp.add_argument("--kind", choices=("id", "od"), default="id")
    sp.set_defaults(func=cmd_estimate)

    sp = common(sub.add_parser("train", help="train a disturbance forecaster"))
    sp.add_argument("--dataset")
    sp.add_argument("--trace", required=True)
    sp.add_argument("--case", default="case01")
    sp.set_defaults(func=cmd_train)

    sp = common(sub.add_parser("predict", help="one-day-ahead predictions"))
    sp.add_argument("--dataset")
    sp.add_argument("--ident", required=True)
    sp.add_argument("--model", default=None)
    sp.add_argument("--method", choices=("conventional", "hybrid", "both"),
                    default="both")
    sp.add_argument("--from-day", default=1)
    sp.set_defaults(func=cmd_predict)

    sp = common(sub.add_parser("evaluate", help="score predictions against data"))
    sp.add_argument("--dataset")
    sp.add_argument("--predictions", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = common(sub.add_parser("select", help="model-selection statistics"))
    sp.add_argument("--observations", required=True)
    sp.set_defaults(func=cmd_select)

    sp = common(sub.add_parser("analyze", help="frequency/step diagnostics"))
    sp.add_argument("--ident", action="append")
    sp.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HYBRIDRC_LOG", "WARNING"))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
