"""Fit-quality metrics, cross-validation, and parity data export.

Leave-one-out cross-validation refits the model once per experiment with
that experiment held out, then scores the held-out prediction.  The
aggregate test MAE being comparable to the training MAE indicates the
parameter count is not overfitting the 57 bundled records.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataio import ExperimentRecord, ReactorConfig, Setup
from . import calibration

OBSERVABLES = ("band_area", "heat", "gas_flow")


class MetricError(ValueError):
    """Raised when a metric is undefined for the given data."""


def r_squared(predictions, measurements) -> float:
    """Coefficient of determination about the measurement mean.

    Negative values are possible (predictions worse than the mean);
    undefined when fewer than two measurements or zero variance.
    """
    pred = np.asarray(predictions, dtype=float)
    meas = np.asarray(measurements, dtype=float)
    if pred.shape != meas.shape:
        raise MetricError(f"length mismatch: {pred.shape} vs {meas.shape}")
    if meas.size < 2:
        raise MetricError("R^2 needs at least 2 measurements")
    ss_tot = float(np.sum((meas - meas.mean()) ** 2))
    if ss_tot == 0.0:
        raise MetricError("R^2 undefined for zero-variance measurements")
    ss_res = float(np.sum((pred - meas) ** 2))
    return 1.0 - ss_res / ss_tot


def mae(predictions, measurements) -> float:
    """Mean absolute error of paired predictions and measurements."""
    pred = np.asarray(predictions, dtype=float)
    meas = np.asarray(measurements, dtype=float)
    if pred.shape != meas.shape:
        raise MetricError(f"length mismatch: {pred.shape} vs {meas.shape}")
    if pred.size == 0:
        raise MetricError("MAE needs at least one pair")
    return float(np.mean(np.abs(pred - meas)))


@dataclass(frozen=True)
class ObservableMetrics:
    r2: float | None
    mae: float
    n: int


def observable_metrics(residuals: dict, data: "calibration.CompiledData") -> dict:
    """Per-observable R^2/MAE from a residual dict of a cost breakdown."""
    measured = {
        "band_area": data.band_meas,
        "heat": np.concatenate(data.heat_meas) if data.heat_meas else np.zeros(0),
        "gas_flow": data.gas_meas,
    }
    out = {}
    for key in OBSERVABLES:
        res = np.asarray(residuals.get(key, np.zeros(0)), dtype=float)
        meas = measured[key]
        if res.size == 0:
            out[key] = {"r2": None, "mae": None, "n": 0}
            continue
        pred = meas + res
        try:
            r2 = r_squared(pred, meas)
        except MetricError:
            r2 = None
        out[key] = {"r2": r2, "mae": mae(pred, meas), "n": int(res.size)}
    return out


# ---------------------------------------------------------------------------
# Held-out prediction and cross-validation
# ---------------------------------------------------------------------------


def _predict(vector, mode, records, reactors) -> list[dict]:
    """Per-record predicted observables at the measurement granularity."""
    data = calibration.compile_data(records, reactors)
    sim = calibration.simulate_matrix(vector[None, :], data, mode)
    preds: list[dict] = [dict() for _ in records]
    for k, i in enumerate(data.band_idx):
        preds[i]["band_area"] = float(sim.band[0, k])
    for k, i in enumerate(data.heat_idx):
        if data.heat_meas[k].size == 1:
            preds[i]["heat"] = np.array([sim.heat_totals[0, k]])
        else:
            preds[i]["heat"] = sim.heats[k][0]
    for k, i in enumerate(data.gas_idx):
        preds[i]["gas_flow"] = float(sim.gas[0, k])
    return preds


@dataclass(frozen=True)
class FoldResult:
    fold: int
    test_index: int                  # position in the record list
    converged: bool
    vector: np.ndarray | None
    train_mae: dict                  # per observable or None
    test_abs_err: dict               # per observable present on the test record
    message: str = ""


@dataclass(frozen=True)
class CrossValReport:
    folds: tuple[FoldResult, ...]
    train_mae: dict                  # aggregate per observable
    test_mae: dict
    mode: str
    n_failed: int


def _fold_partition(n: int, n_folds: int | None, seed: int) -> list[np.ndarray]:
    """Index groups per fold: leave-one-out by default, else seeded groups."""
    if n_folds is None or n_folds >= n:
        return [np.array([i]) for i in range(n)]
    if n_folds < 2:
        raise ValueError("grouped cross-validation needs at least 2 folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(part) for part in np.array_split(perm, n_folds)]


def cross_validate(
    records,
    reactors: dict[Setup, ReactorConfig],
    settings: "calibration.OptimizerSettings",
    mode: str = "nn",
    weights=calibration.DEFAULT_WEIGHTS,
    *,
    n_folds: int | None = None,
    warm_start: np.ndarray | None = None,
) -> CrossValReport:
    """Cross-validation over individual experiments (leave-one-out default).

    Each fold refits with the fold's records held out (same multi-start
    settings per fold) and scores the held-out predictions.  When
    `warm_start` is given, it is used as the first start of every fold's
    optimization.  Fold failures are flagged and the report completes.
    """
    records = list(records)
    if len(records) < 2:
        raise ValueError("cross-validation needs at least 2 experiments")
    groups = _fold_partition(len(records), n_folds, settings.seed)
    extra = (warm_start,) if warm_start is not None else ()

    folds: list[FoldResult] = []
    test_errors: dict[str, list[float]] = {k: [] for k in OBSERVABLES}
    train_maes: dict[str, list[float]] = {k: [] for k in OBSERVABLES}
    n_failed = 0
    for fold_no, test_ids in enumerate(groups):
        train = [r for i, r in enumerate(records) if i not in set(test_ids)]
        test = [records[i] for i in test_ids]
        try:
            report = calibration.fit(
                train, reactors, settings, mode, weights, extra_starts=extra
            )
        except (calibration.FitError, ValueError) as exc:
            n_failed += 1
            for i in test_ids:
                folds.append(
                    FoldResult(
                        fold=fold_no,
                        test_index=int(i),
                        converged=False,
                        vector=None,
                        train_mae={},
                        test_abs_err={},
                        message=str(exc),
                    )
                )
            continue
        fold_train_mae = {
            k: report.metrics[k]["mae"] for k in OBSERVABLES if report.metrics[k]["n"] > 0
        }
        for k, v in fold_train_mae.items():
            train_maes[k].append(v)
        try:
            preds = _predict(report.vector, mode, test, reactors)
        except calibration.CostEvaluationError as exc:
            n_failed += 1
            for i in test_ids:
                folds.append(
                    FoldResult(
                        fold=fold_no,
                        test_index=int(i),
                        converged=False,
                        vector=report.vector,
                        train_mae=fold_train_mae,
                        test_abs_err={},
                        message=f"held-out prediction failed: {exc}",
                    )
                )
            continue
        for local, i in enumerate(test_ids):
            record = records[i]
            errs: dict[str, float] = {}
            if record.band_area is not None:
                errs["band_area"] = abs(preds[local]["band_area"] - record.band_area)
            if record.zone_heats is not None:
                meas = np.asarray(record.zone_heats)
                errs["heat"] = float(np.mean(np.abs(preds[local]["heat"] - meas)))
            if record.gas_flow_rate is not None:
                errs["gas_flow"] = abs(preds[local]["gas_flow"] - record.gas_flow_rate)
            for k, v in errs.items():
                test_errors[k].append(v)
            folds.append(
                FoldResult(
                    fold=fold_no,
                    test_index=int(i),
                    converged=True,
                    vector=report.vector,
                    train_mae=fold_train_mae,
                    test_abs_err=errs,
                )
            )

    agg_train = {k: (float(np.mean(v)) if v else None) for k, v in train_maes.items()}
    agg_test = {k: (float(np.mean(v)) if v else None) for k, v in test_errors.items()}
    return CrossValReport(
        folds=tuple(folds),
        train_mae=agg_train,
        test_mae=agg_test,
        mode=mode,
        n_failed=n_failed,
    )


def write_crossval_csv(report: CrossValReport, path) -> None:
    """One row per fold and observable with a training MAE; empty test cells
    where the held-out record does not carry that observable."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "observable", "train_mae", "test_mae", "converged"])
        for f in report.folds:
            keys = sorted(set(f.train_mae) | set(f.test_abs_err)) or list(OBSERVABLES)
            for k in keys:
                writer.writerow(
                    [
                        f.fold,
                        k,
                        repr(f.train_mae[k]) if k in f.train_mae else "",
                        repr(f.test_abs_err[k]) if k in f.test_abs_err else "",
                        int(f.converged),
                    ]
                )


# ---------------------------------------------------------------------------
# Parity export
# ---------------------------------------------------------------------------


def parity_rows(params, records, reactors) -> list[tuple]:
    """(experiment id, kind, measured, simulated) for every measured value."""
    vector = calibration.pack(params)
    preds = _predict(vector, params.mode, list(records), reactors)
    counters: dict[Setup, int] = {}
    rows = []
    for record, pred in zip(records, preds):
        counters[record.setup] = counters.get(record.setup, 0) + 1
        rid = f"{record.setup.value}-{counters[record.setup]:03d}"
        if record.band_area is not None:
            rows.append((rid, "band_area", record.band_area, pred["band_area"]))
        if record.zone_heats is not None:
            sim = np.asarray(pred["heat"])
            for zone, (m, s) in enumerate(zip(record.zone_heats, sim)):
                kind = "heat" if len(record.zone_heats) == 1 else f"heat_zone{zone + 1}"
                rows.append((rid, kind, m, float(s)))
        if record.gas_flow_rate is not None:
            rows.append((rid, "gas_flow", record.gas_flow_rate, pred["gas_flow"]))
    return rows


def parity_export(params, records, reactors, path) -> int:
    """Write the parity CSV; returns the number of data rows."""
    rows = parity_rows(params, records, reactors)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["experiment_id", "kind", "measured", "simulated"])
        for rid, kind, m, s in rows:
            writer.writerow([rid, kind, repr(float(m)), repr(float(s))])
    return len(rows)
