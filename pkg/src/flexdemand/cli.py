"""Command-line front end: ``flexdemand <subcommand> [--config cfg.json] ...``.

Exit codes: 0 success, 2 validation error (bad config, schema or arguments),
3 data error (missing file, too little data, misaligned series).
Set ``FLEXDEMAND_LOG_LEVEL`` to change log verbosity.
"""
from __future__ import annotations

import argparse
import copy
import csv
import glob
import json
import logging
import os
import sys
from datetime import datetime, timezone

import jsonschema
import numpy as np

from . import __version__
from . import economics as econ
from . import energy as en
from . import evaluation as ev
from . import ingest as ig
from . import predictors as P
from . import synthetic as syn
from .errors import (AlignmentError, DimensionError, EmptyDataError, OrderingError,
                     SchemaError, SingularMatrixError)
from .trajectory import build_trajectory_data

log = logging.getLogger("flexdemand")

EXIT_OK, EXIT_VALIDATION, EXIT_DATA = 0, 2, 3

DEFAULTS = {
    "ingest": {},
    "trajectory": {"n_past": 24, "n_future": 144},
    "predictor": {
        "kind": "multi_step", "structure": "causal", "ridge": None, "intercept": True,
        "estimate_feedthrough": False, "lambda1": 100.0, "lambda2": 1.0,
        "tol": 1e-6, "max_iter": 10000,
    },
    "evaluation": {
        "window": 2016, "stride": 36, "n_jobs": 1, "keep_residuals": True,
        "formats": ["csv", "json"], "plots": False, "include_residuals": False,
        "histogram_bin_width": None,
    },
    "energy": {"taus": [0.9, 0.95], "expected": True, "intercept": False, "min_records": 10,
               "noncrossing": True},
    "economics": {},
    "synthetic": {
        "preset": "rc_house", "length": 2016 + 168 + 4 * 36, "n": 4, "m": 5, "p": 4,
        "rho_max": 0.9, "noise_std": 0.0, "noise": "output", "t0": 1700006400.0,
        "energy_records": 0, "energy_noise": 0.5,
        "energy_coefficients": {"alpha_out": -0.05, "alpha_on": [0.02, 0.02, 0.03, 0.02],
                                "alpha_feat": [0.04, 0.05, 0.03, 0.04]},
    },
}

_num = {"type": "number"}
_nnum = {"type": ["number", "null"]}
_int1 = {"type": "integer", "minimum": 1}
_bool = {"type": "boolean"}
_strs = {"type": "array", "items": {"type": "string"}}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "ingest": _obj({
        "timestamp": {"type": "string"},
        "inputs": _strs, "outputs": _strs, "hold": _strs,
        "units": {"type": "array", "items": _obj(
            {k: {"type": "string"} for k in ("on", "fan", "t_set", "t_volume")},
            ("on", "fan", "t_set", "t_volume"))},
        "t_out": {"type": "string"}, "energy": {"type": "string"},
        "period_s": {"type": "number", "exclusiveMinimum": 0},
        "gap_limit_s": {"type": "number", "exclusiveMinimum": 0},
        "gap_limit_overrides": {"type": "object", "additionalProperties": _num},
        "n_inputs": {"type": ["integer", "null"]}, "n_outputs": {"type": ["integer", "null"]},
        "feature": _obj({"gain": _num, "slope": _num, "offset": _num}),
    }),
    "trajectory": _obj({"n_past": _int1, "n_future": _int1}),
    "predictor": _obj({
        "kind": {"enum": list(ev.PREDICTOR_KINDS)},
        "structure": {"enum": list(P.STRUCTURES)},
        "ridge": {"type": ["number", "null"], "minimum": 0},
        "intercept": _bool, "estimate_feedthrough": _bool,
        "lambda1": {"type": "number", "minimum": 0}, "lambda2": {"type": "number", "minimum": 0},
        "tol": {"type": "number", "exclusiveMinimum": 0}, "max_iter": _int1,
    }),
    "evaluation": _obj({
        "window": _int1, "stride": _int1, "n_jobs": _int1, "keep_residuals": _bool,
        "formats": {"type": "array", "items": {"enum": ["csv", "json"]}},
        "plots": _bool, "include_residuals": _bool,
        "histogram_bin_width": {"type": ["number", "null"], "exclusiveMinimum": 0},
    }),
    "energy": _obj({
        "taus": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1}},
        "expected": _bool, "intercept": _bool, "min_records": _int1, "noncrossing": _bool,
    }),
    "economics": _obj({
        "schedule": {"oneOf": [{"type": "string"}, _obj(
            {"thresholds": {"type": "array", "items": _num},
             "charges": {"type": "array", "items": _num}, "peak_count": _int1},
            ("thresholds", "charges"))]},
        "prices": {"oneOf": [{"type": "string"}, _obj(
            {"start": {"type": ["string", "number"]}, "values": {"type": "array", "items": _num}},
            ("values",))]},
        "grid_tariff": _obj({"day_rate": _num, "night_rate": _num, "day_start": {"type": "integer"},
                             "day_end": {"type": "integer"}, "utc_offset_hours": _num},
                            ("day_rate", "night_rate")),
    }),
    "synthetic": _obj({
        "preset": {"enum": ["rc_house", "random_lti"]},
        "length": _int1, "n": _int1, "m": _int1, "p": _int1,
        "rho_max": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "noise_std": {"type": "number", "minimum": 0}, "noise": {"enum": ["innovation", "output"]},
        "t0": _num, "energy_records": {"type": "integer", "minimum": 0},
        "energy_noise": {"type": "number", "minimum": 0},
        "energy_coefficients": _obj({"alpha_out": _num,
                                     "alpha_on": {"type": "array", "items": _num},
                                     "alpha_feat": {"type": "array", "items": _num}},
                                    ("alpha_out", "alpha_on", "alpha_feat")),
    }),
})


class CLIError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("schedule", "prices"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path=None) -> dict:
    """Validated config with defaults filled in. Relative file paths resolve against the config's directory."""
    user = {}
    if path is not None:
        with open(path) as fh:
            try:
                user = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}: invalid JSON: {exc}") from exc
    try:
        jsonschema.validate(user, SCHEMA)
    except jsonschema.ValidationError as exc:
        loc = "/".join(map(str, exc.absolute_path)) or "<root>"
        raise SchemaError(f"config error at {loc}: {exc.message}") from None
    cfg = _merge(DEFAULTS, user)
    cfg["_base"] = os.path.dirname(os.path.abspath(path)) if path else os.getcwd()
    return cfg


def _resolve(cfg, p):
    return p if os.path.isabs(p) else os.path.join(cfg["_base"], p)


def _eval_config(cfg) -> ev.EvalConfig:
    pr, e, t = cfg["predictor"], cfg["evaluation"], cfg["trajectory"]
    return ev.EvalConfig(
        window=e["window"], n_past=t["n_past"], n_future=t["n_future"], stride=e["stride"],
        predictor=pr["kind"], structure=pr["structure"], ridge=pr["ridge"], intercept=pr["intercept"],
        estimate_feedthrough=pr["estimate_feedthrough"], lambda1=pr["lambda1"], lambda2=pr["lambda2"],
        fl_tol=pr["tol"], fl_max_iter=pr["max_iter"], keep_residuals=e["keep_residuals"],
        n_jobs=e["n_jobs"],
    )


def _require(path, what="data"):
    if path is None:
        raise CLIError(f"--{what} is required", EXIT_VALIDATION)
    if not os.path.exists(path):
        raise FileNotFoundError(f"{path}: no such file or directory")
    return path


def _read_tables(path):
    _require(path)
    files = sorted(glob.glob(os.path.join(path, "*.csv"))) if os.path.isdir(path) else [path]
    if not files:
        raise EmptyDataError(f"{path}: no CSV files")
    tables = []
    for f in files:
        with open(f, newline="") as fh:
            tables.extend(ig.read_iotables(fh))
    return tables


def _out_dir(args):
    if args.out is None:
        raise CLIError("--out is required", EXIT_VALIDATION)
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _created(args):
    if args.frozen_time is not None:
        return args.frozen_time
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat().replace("+00:00", "Z")


def _write_json(path, obj):
    with open(path, "w") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=1))
        fh.write("\n")


def _write_run(args, cfg, out, extra=None):
    public = {k: v for k, v in cfg.items() if not k.startswith("_")}
    doc = {"command": args.command, "version": __version__, "created": _created(args),
           "seed": args.seed, "config": public}
    if extra:
        doc.update(extra)
    _write_json(os.path.join(out, "run.json"), doc)


def _fmt(x: float) -> str:
    return format(float(x), ".15g")


# -- subcommands ---------------------------------------------------------------

def cmd_ingest(args, cfg):
    src = _require(args.data)
    if not cfg["ingest"].get("timestamp"):
        raise SchemaError("config 'ingest' needs a 'timestamp' column")
    out = _out_dir(args)
    with open(src, newline="") as fh:
        tables, extras, skipped = ig.tables_from_csv(fh, cfg["ingest"])
    if not tables:
        raise EmptyDataError(f"{src}: no aligned samples")
    with open(os.path.join(out, "tables.csv"), "w", newline="") as fh:
        ig.write_iotables(tables, fh)
    summary = {"segments": [{"segment": t.segment_id, "start": ig.format_timestamp(t.t0), "samples": len(t)}
                            for t in tables], "skipped": skipped}
    if extras.get("on"):
        period = float(cfg["ingest"].get("period_s", ig.DEFAULT_PERIOD))
        records, dropped = en.build_hourly_records(tables, extras["on"], extras.get("energy"),
                                                   period, len(extras["on"]))
        with open(os.path.join(out, "records.csv"), "w", newline="") as fh:
            en.write_records_csv(records, fh)
        summary["records"] = len(records)
        summary["dropped_hours"] = dropped
    _write_run(args, cfg, out, {"summary": summary})
    log.info("ingest: %d segment(s), %d samples", len(tables), sum(len(t) for t in tables))
    return EXIT_OK


def _fit(cfg, tables, kind=None, structure=None):
    pr, t = cfg["predictor"], cfg["trajectory"]
    data = build_trajectory_data(tables, t["n_past"], t["n_future"])
    kind = kind or pr["kind"]
    if kind == "one_step":
        return P.fit_one_step(data, pr["ridge"], pr["intercept"])
    if kind == "multi_step":
        return P.fit_multi_step(data, structure or pr["structure"], pr["ridge"], pr["intercept"],
                                pr["estimate_feedthrough"])
    return P.fit_fl(data, pr["lambda1"], pr["lambda2"], pr["tol"], pr["max_iter"])


def cmd_fit(args, cfg):
    tables = _read_tables(args.data)
    out = _out_dir(args)
    pred = _fit(cfg, tables, args.kind, args.structure)
    P.save_predictor(pred, os.path.join(out, "predictor.json"))
    _write_run(args, cfg, out)
    return EXIT_OK


def prediction_query(tables, n_past, n_future, start=None):
    """``(table, s)``: the query uses rows ``s .. s+n_past+n_future-1`` of ``table``.

    Without ``start`` the last complete window of the last segment is used.
    """
    span = n_past + n_future
    if start is None:
        for tab in reversed(tables):
            if len(tab) >= span:
                return tab, len(tab) - span
        raise EmptyDataError(f"prediction needs a segment of >= {span} samples")
    tab = tables[-1]
    if not 0 <= start <= len(tab) - span:
        raise EmptyDataError(f"start {start} leaves fewer than {span} samples in the last segment")
    return tab, start


def cmd_predict(args, cfg):
    pred = P.load_predictor(_require(args.predictor, "predictor"))
    tables = _read_tables(args.data)
    out = _out_dir(args)
    Np, Nf = pred.n_past, getattr(pred, "n_future", cfg["trajectory"]["n_future"])
    tab, s = prediction_query(tables, Np, Nf, args.start)
    u, y = tab.u, tab.y
    y_hat = np.asarray(pred.predict(u[s:s + Np], y[s:s + Np], u[s + Np:s + Np + Nf])).reshape(Nf, -1)
    times = tab.times[s + Np:s + Np + Nf]
    with open(os.path.join(out, "predictions.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "t", *(f"y{i + 1}" for i in range(y_hat.shape[1]))])
        for k in range(Nf):
            w.writerow([k + 1, ig.format_timestamp(times[k]), *map(repr, y_hat[k].tolist())])
    _write_run(args, cfg, out, {"query_start": ig.format_timestamp(tab.times[s])})
    return EXIT_OK


def cmd_evaluate(args, cfg):
    tables = _read_tables(args.data)
    out = _out_dir(args)
    ecfg = _eval_config(cfg)
    e = cfg["evaluation"]
    stats = ev.rolling_eval(tables, ecfg)
    ev.report(stats, out, e["formats"], e["plots"], e["include_residuals"])
    if e["histogram_bin_width"] and stats.residuals is not None:
        h = ev.error_histogram(stats.residuals, e["histogram_bin_width"])
        with open(os.path.join(out, "histogram.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["left", "right", "count"])
            for a, b, c in zip(h.edges[:-1], h.edges[1:], h.counts):
                w.writerow([repr(float(a)), repr(float(b)), int(c)])
    _write_run(args, cfg, out, {"n_windows": stats.n_windows})
    log.info("evaluate: %d window(s)", stats.n_windows)
    return EXIT_OK


def cmd_energy_fit(args, cfg):
    src = _require(args.data)
    out = _out_dir(args)
    with open(src, newline="") as fh:
        records = en.read_records_csv(fh)
    ecfg = cfg["energy"]
    models = []
    if ecfg["expected"]:
        models.append(en.fit_energy(records, "expected", None, ecfg["intercept"], ecfg["min_records"]))
    if ecfg["taus"]:
        models.extend(en.fit_energy_quantiles(records, ecfg["taus"], ecfg["intercept"],
                                              ecfg["min_records"], ecfg["noncrossing"]))
    A = en.design_matrix(records, ecfg["intercept"])
    b = np.array([r.energy for r in records])
    summary = []
    for mdl in models:
        pred = A @ mdl.coefficients
        summary.append({"kind": mdl.kind, "tau": mdl.tau,
                        "upper_bound_fraction": float(np.mean(pred >= b))})
    _write_json(os.path.join(out, "energy_models.json"), {"models": [m.to_dict() for m in models]})
    _write_run(args, cfg, out, {"in_sample": summary})
    return EXIT_OK


def _read_energy_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:2] != ["hour", "energy"]:
            raise SchemaError(f"{path}: header must be 'hour,energy', got {header}")
        hours, vals = [], []
        for row in reader:
            if row:
                hours.append(ig.parse_timestamp(row[0]))
                vals.append(float(row[1]))
    return np.array(hours), np.array(vals)


def _prices(cfg, hours):
    ec = cfg["economics"]
    price_cfg = ec.get("prices")
    if price_cfg is None:
        raise SchemaError("config 'economics' needs 'prices'")
    if isinstance(price_cfg, str):
        with open(_resolve(cfg, price_cfg), newline="") as fh:
            prices = econ.read_prices_csv(fh)
    else:
        start = price_cfg.get("start")
        start = hours[0] if start is None else ig.parse_timestamp(str(start))
        prices = econ.PriceSeries.from_values(price_cfg["values"], start)
    if "grid_tariff" in ec:
        g = ec["grid_tariff"]
        prices = econ.add_grid_tariff(prices, g["day_rate"], g["night_rate"], g.get("day_start", 6),
                                      g.get("day_end", 22), g.get("utc_offset_hours", 0.0))
    return prices


def cmd_cost(args, cfg):
    ec = cfg["economics"]
    if "schedule" not in ec:
        raise SchemaError("config 'economics' needs 'schedule'")
    sched = ec["schedule"]
    schedule = econ.load_schedule(_resolve(cfg, sched) if isinstance(sched, str) else sched)
    hours, P_ = _read_energy_csv(_require(args.data))
    prices = _prices(cfg, hours)
    spot = econ.spot_cost(P_, prices, hours)
    penalty = econ.monthly_peak_penalty(hours, P_, schedule)
    total = spot + penalty
    print(_fmt(total))
    if args.out is not None:
        out = _out_dir(args)
        _write_json(os.path.join(out, "cost.json"), {"spot": spot, "penalty": penalty, "total": total})
        _write_run(args, cfg, out)
    return EXIT_OK


def cmd_synth(args, cfg):
    out = _out_dir(args)
    sc = cfg["synthetic"]
    seed = args.seed if args.seed is not None else 0
    L = sc["length"]
    period = float(cfg["ingest"].get("period_s", ig.DEFAULT_PERIOD))
    if sc["preset"] == "rc_house":
        system = syn.rc_house(period)
        u = syn.rc_house_inputs(L, seed, period)
    else:
        system = syn.random_stable_lti(sc["n"], sc["m"], sc["p"], sc["rho_max"], seed)
        u = syn.prbs(L, sc["m"], seed)
    y = syn.simulate(system, u, sc["noise_std"], seed + 1, noise=sc["noise"])
    t0 = float(np.floor(sc["t0"] / period) * period)
    with open(os.path.join(out, "raw.csv"), "w", newline="") as fh:
        syn.write_ingest_csv(fh, t0, period, u, y)
    columns = {"timestamp": "time", "inputs": [f"u{i + 1}" for i in range(u.shape[1])],
               "outputs": [f"y{i + 1}" for i in range(y.shape[1])],
               "n_inputs": None, "n_outputs": None, "period_s": period}
    _write_json(os.path.join(out, "ingest_config.json"), {"ingest": columns})
    tables = [ig.IOTable(t0, period, u, y, 0)]
    with open(os.path.join(out, "tables.csv"), "w", newline="") as fh:
        ig.write_iotables(tables, fh)
    if sc["energy_records"]:
        c = sc["energy_coefficients"]
        recs, _ = syn.energy_records(sc["energy_records"], c["alpha_out"], c["alpha_on"], c["alpha_feat"],
                                     seed + 2, sc["energy_noise"], t0)
        with open(os.path.join(out, "records.csv"), "w", newline="") as fh:
            en.write_records_csv(recs, fh)
    _write_run(args, cfg, out)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest, "fit": cmd_fit, "predict": cmd_predict, "evaluate": cmd_evaluate,
    "energy-fit": cmd_energy_fit, "cost": cmd_cost, "synth": cmd_synth,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexdemand", description="Thermal predictors, heat-pump energy models and cost evaluation.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--data", help="input file or directory")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--frozen-time", default=None, help="timestamp written to run metadata")
        if name == "fit":
            sp.add_argument("--structure", choices=P.STRUCTURES, default=None)
            sp.add_argument("--kind", choices=ev.PREDICTOR_KINDS, default=None)
        if name == "predict":
            sp.add_argument("--predictor", help="serialized predictor (from 'fit')")
            sp.add_argument("--start", type=int, default=None,
                            help="row of the last segment where the query window starts")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FLEXDEMAND_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except CLIError as exc:
        log.error("%s", exc)
        return exc.code
    except (OSError, EmptyDataError, OrderingError, AlignmentError, DimensionError,
            SingularMatrixError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (SchemaError, ValueError) as exc:
        log.error("validation error: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
