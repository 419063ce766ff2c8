"""One-step-ahead forecasting backtest and its report files.

The estimation bank runs over the whole series (the train span warm-starts
the filters); forecasting and RMSE are computed on the test span only.
Forecasts are one step ahead from the previous step's switched state:
median-path spot move (zero GBM shock), zero-noise state transition, time
to expiry reduced by one step. Errors therefore never compound across
steps — each forecast is corrected by the next observed price.

All reports are plain CSV with ``repr`` float formatting, so two runs with
the same config, seed and data produce byte-identical files.
"""

from __future__ import annotations

import bisect
import csv
import datetime as dt
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .bsgarch import BsGarchModel, ExogenousInputs, StateVector, bs_price, gbm_propagate, transition
from .calibrate import GarchFit, fit_garch, log_returns
from .config import RunConfig
from .exceptions import ContractExpiredError, InsufficientDataError, InvalidInputError
from .filters import FILTER_ORDER, FilterId
from .marketdata import ContractSeries, load_value_series
from .switching import SwitchDecision, run_adaptive_estimation

logger = logging.getLogger(__name__)

STRATEGIES = ("EKF", "UKF", "PF", "AAF", "ABF")

REPORT_FILES = (
    "decision_log",
    "pcrlb_trace",
    "rmse",
    "frequency",
    "volatility",
    "forecasts",
)


def rmse(observed, forecast, strike: float) -> float:
    """Root mean squared pricing error with squared errors scaled by strike.

    Note the normalization: the squared errors are divided by the strike
    itself, not the squared strike, so a constant error e gives e/sqrt(K).
    """
    obs = np.asarray(observed, dtype=float)
    fc = np.asarray(forecast, dtype=float)
    if obs.ndim != 1 or obs.shape != fc.shape or obs.size < 1:
        raise InvalidInputError("observed and forecast must be equal-length 1-d sequences")
    if strike <= 0.0 or not math.isfinite(strike):
        raise InvalidInputError("strike must be positive")
    return math.sqrt(float(np.mean((obs - fc) ** 2)) / strike)


def _forecast_from_estimate(estimate, ex: ExogenousInputs, model) -> float:
    tau_next = ex.tau - model.dt
    if tau_next < 0.0:
        raise ContractExpiredError(f"contract expires before the next step (tau={ex.tau:.4e})")
    state = StateVector(v=max(float(estimate[0]), 0.0), r=float(estimate[1]))
    s_next = gbm_propagate(ex.s, state.r, state.v, model.dt, shock=0.0)
    ex_next = ExogenousInputs(
        s=s_next, u=math.log(s_next / ex.s), tau=tau_next, contract=ex.contract
    )
    x_next = transition(state, ex_next, model, np.zeros(2))
    contract = ex.contract if ex.contract is not None else model.contract
    return bs_price(x_next, ex_next, contract, model.annualization)


def forecast_one_step(decision: SwitchDecision, ex: ExogenousInputs, model) -> float:
    """Price forecast for the next step from the current switched state."""
    return _forecast_from_estimate(decision.estimate, ex, model)


def fitted_price(estimate, ex: ExogenousInputs, model) -> float:
    """Model price at the current step's inputs for a state estimate."""
    state = StateVector(v=max(float(estimate[0]), 0.0), r=float(estimate[1]))
    contract = ex.contract if ex.contract is not None else model.contract
    return bs_price(state, ex, contract, model.annualization)


@dataclass
class ReportBundle:
    """Everything a backtest run produces, in memory plus written files."""

    strategy: str
    records: list
    rmse_table: dict  # row label -> {"fit": float|None, "forecast": float|None, counts}
    frequency_table: dict  # row label -> {filter name: count}
    volatility: list  # (t, date|None, annualized vol)
    test_start: int
    truncated: int
    garch_fit: GarchFit | None = None
    paths: dict = field(default_factory=dict)


def strategy_bank(strategy: str):
    if strategy == "AAF":
        return "average", FILTER_ORDER
    if strategy == "ABF":
        return "best", FILTER_ORDER
    return "average", (FilterId[strategy],)


def _component_label(j: int) -> str:
    return "volatility" if j == 0 else "risk"


def frequency_counts(records, mode: str, strategy: str) -> dict:
    """Chosen-filter counts per strategy row; every row sums to len(records)."""
    if mode == "average":
        rows = {strategy: {f.name: 0 for f in FILTER_ORDER}}
        for rec in records:
            rows[strategy][rec.decision.chosen[0].name] += 1
        return rows
    n_components = len(records[0].decision.chosen) if records else 0
    rows = {
        f"{strategy} {_component_label(j)}": {f.name: 0 for f in FILTER_ORDER}
        for j in range(n_components)
    }
    for rec in records:
        for j, fid in enumerate(rec.decision.chosen):
            rows[f"{strategy} {_component_label(j)}"][fid.name] += 1
    return rows


def run_backtest(
    cfg: RunConfig,
    series: ContractSeries,
    strategy: str = "AAF",
    train_end: dt.date | None = None,
    test_end: dt.date | None = None,
    out_dir=None,
    seed: int = 0,
) -> ReportBundle:
    """Full backtest: estimate over the series, forecast the test span, report.

    ``train_end`` is the last in-sample date (inclusive); forecasting starts
    on the first later step, or at step 1 when no split is given. Reaching
    expiry truncates forecasting cleanly.
    """
    strategy = str(strategy).upper()
    if strategy not in STRATEGIES:
        raise InvalidInputError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if train_end is not None and test_end is not None and test_end <= train_end:
        raise InvalidInputError("test-end must come after train-end")

    points = list(series.points)
    if test_end is not None:
        points = [p for p in points if p.quote.quote_date <= test_end]
    if len(points) < 2:
        raise InsufficientDataError("need at least two steps after applying test-end")
    dates = [p.quote.quote_date for p in points]

    if train_end is None:
        test_start = 1
    else:
        test_start = max(bisect.bisect_right(dates, train_end), 1)
    if test_start >= len(points):
        raise InvalidInputError("no test steps after train-end")

    garch_fit = None
    cfg_used = cfg
    if cfg.calibrate_garch:
        closes = [p.quote.underlying_close for p in points[:test_start]]
        garch_fit = fit_garch(log_returns(closes))
        cfg_used = replace(
            cfg,
            garch_omega=garch_fit.params.omega,
            garch_alpha=garch_fit.params.alpha,
            garch_beta=garch_fit.params.beta,
        )

    model = cfg_used.model_spec(series.contract)
    mode, bank = strategy_bank(strategy)
    settings = cfg_used.estimation_settings(mode=mode, filters=bank, seed=seed)

    observations = [p.quote.price for p in points]
    exogenous = [p.ex for p in points]
    records = run_adaptive_estimation(observations, exogenous, BsGarchModel(model), settings)
    for rec, date in zip(records, dates):
        rec.date = date.isoformat()
        rec.fitted_price = fitted_price(rec.estimate, exogenous[rec.t], model)

    # one-step forecasts across the test span; per-filter forecasts ride along
    per_filter_forecast: dict = {f: {} for f in bank}
    truncated = 0
    for t in range(test_start, len(points)):
        prev = records[t - 1]
        try:
            records[t].forecast_price = forecast_one_step(prev.decision, exogenous[t - 1], model)
        except ContractExpiredError:
            truncated = len(points) - t
            logger.info("forecasting stopped at step %d: contract expired", t)
            break
        for f in bank:
            per_filter_forecast[f][t] = _forecast_from_estimate(
                prev.filter_estimates[f], exogenous[t - 1], model
            )

    test_records = records[test_start:]
    obs_test = np.array([r.observed_price for r in test_records])
    strike = series.strike

    rmse_table: dict = {}
    for f in bank:
        fit_prices = [
            fitted_price(records[t].filter_estimates[f], exogenous[t], model)
            for t in range(test_start, len(points))
        ]
        fc_idx = sorted(per_filter_forecast[f])
        row = {
            "fit": rmse(obs_test, fit_prices, strike),
            "forecast": rmse([observations[t] for t in fc_idx],
                             [per_filter_forecast[f][t] for t in fc_idx], strike)
            if fc_idx else None,
            "n_fit": len(fit_prices),
            "n_forecast": len(fc_idx),
        }
        rmse_table[f.name] = row
    if strategy in ("AAF", "ABF"):
        fc_records = [r for r in test_records if r.forecast_price is not None]
        rmse_table[strategy] = {
            "fit": rmse(obs_test, [r.fitted_price for r in test_records], strike),
            "forecast": rmse(
                [r.observed_price for r in fc_records],
                [r.forecast_price for r in fc_records], strike)
            if fc_records else None,
            "n_fit": len(test_records),
            "n_forecast": len(fc_records),
        }

    freq = frequency_counts(records, mode, strategy)
    annualization = model.annualization
    volatility = [
        (r.t, r.date, math.sqrt(max(r.estimate[0], 0.0) * annualization)) for r in records
    ]

    bundle = ReportBundle(
        strategy=strategy,
        records=records,
        rmse_table=rmse_table,
        frequency_table=freq,
        volatility=volatility,
        test_start=test_start,
        truncated=truncated,
        garch_fit=garch_fit,
    )
    if out_dir is not None:
        bundle.paths = write_reports(bundle, bank, out_dir)
    return bundle


# ---------------------------------------------------------------------------
# report files


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))  # repr round-trips; float() strips numpy scalar types
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, dt.date):
        return value.isoformat()
    return str(value)


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(c) for c in row])


def write_reports(bundle: ReportBundle, bank, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / f"{name}.csv" for name in REPORT_FILES}
    records = bundle.records

    _write_csv(
        paths["decision_log"],
        ["t", "date", "mode", "chosen"]
        + [f"phi_{f.name}" for f in FILTER_ORDER]
        + ["est_v", "est_r"],
        [
            [
                r.t,
                r.date,
                r.decision.mode,
                "+".join(f.name for f in r.decision.chosen),
                *[r.phi_traces.get(f) for f in FILTER_ORDER],
                r.estimate[0],
                r.estimate[1],
            ]
            for r in records
        ],
    )

    _write_csv(
        paths["pcrlb_trace"],
        ["t", "filter", "j_v", "j_r", "jinv_v", "jinv_r", "phi_trace"],
        [
            [r.t, f.name, *r.fisher_diags[f][0], *r.fisher_diags[f][1], r.phi_traces.get(f)]
            for r in records
            for f in bank
        ],
    )

    _write_csv(
        paths["rmse"],
        ["series", "rmse_fit", "rmse_forecast", "n_fit", "n_forecast"],
        [
            [label, row["fit"], row["forecast"], row["n_fit"], row["n_forecast"]]
            for label, row in bundle.rmse_table.items()
        ],
    )

    _write_csv(
        paths["frequency"],
        ["series"] + [f.name for f in FILTER_ORDER] + ["total"],
        [
            [label, *[counts[f.name] for f in FILTER_ORDER], sum(counts.values())]
            for label, counts in bundle.frequency_table.items()
        ],
    )

    _write_csv(paths["volatility"], ["t", "date", "vol_annualized"], bundle.volatility)

    _write_csv(
        paths["forecasts"],
        ["t", "date", "observed", "fitted", "forecast"],
        [
            [r.t, r.date, r.observed_price, r.fitted_price, r.forecast_price]
            for r in records[bundle.test_start:]
        ],
    )
    return paths


# ---------------------------------------------------------------------------
# volatility comparison report


def vol_points_from_records(records) -> list:
    """(t, date|None, annualized variance estimate) rows from run records."""
    return [(r.t, r.date, float(r.estimate[0])) for r in records]


def vol_points_from_decision_log(path) -> list:
    """Same rows recovered from a written decision_log.csv."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"t", "date", "est_v"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidInputError(f"{path}: not a decision log (needs {sorted(required)})")
        for row in reader:
            rows.append((int(row["t"]), row["date"] or None, float(row["est_v"])))
    return rows


def vol_report(points, compare_paths=(), annualization: float = 252.0, out_dir=None):
    """Annualized volatility series plus a by-date join against external series.

    Dates missing on either side of a join are counted and logged, never
    silently dropped; a comparison file sharing no dates yields an empty
    column and a warning.
    """
    if not points:
        raise InvalidInputError("no estimation records to report on")
    vol_rows = [
        (t, date, math.sqrt(max(v, 0.0) * annualization)) for t, date, v in points
    ]

    our_dates = {date for _, date, _ in vol_rows if date}
    comparisons = {}
    for path in compare_paths:
        series = {d.isoformat(): v for d, v in load_value_series(path)}
        comparisons[Path(path).stem] = series
        matched = our_dates & series.keys()
        if not matched:
            logger.warning("comparison series %s shares no dates with the estimates", path)
        else:
            logger.info(
                "comparison series %s: %d matched, %d unmatched estimate dates, %d unused rows",
                path, len(matched), len(our_dates - series.keys()), len(series.keys() - our_dates),
            )

    table = []
    for t, date, vol in vol_rows:
        if date is None:
            continue
        table.append([date, vol] + [comparisons[label].get(date) for label in comparisons])

    paths = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths["volatility"] = out / "volatility.csv"
        _write_csv(paths["volatility"], ["t", "date", "vol_annualized"], vol_rows)
        if comparisons:
            paths["comparison"] = out / "comparison.csv"
            _write_csv(
                paths["comparison"],
                ["date", "estimate"] + list(comparisons),
                [r for r in table if any(c is not None for c in r[2:])],
            )
    return vol_rows, table, paths
