"""Weighted least-squares identification of the kinetic parameters.

Three costs are assembled from the two experimental setups (band areas,
zone heats, gas flow rates), normalized, and collapsed by a weighted sum.
The decision vector is either

  arrhenius mode (7):  [log_A1, E_a1, log_A2, E_a2, gamma, dH1, dH2]
  nn mode (26):        [log_A1, E_a1, gamma, dH1, dH2, W (16), b (5)]

Local optimization runs in box-normalized coordinates with L-BFGS-B and
central finite-difference gradients; multiple seeded random starts guard
against local optima.  Forward-solve failures (gas overflow, step-count
exhaustion) at a trial point reject that point instead of aborting the
fit.  Cost evaluation is vectorized: all experiments, and during gradient
evaluation all parameter perturbations, integrate in one batch.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.optimize import minimize

from .dataio import ExperimentRecord, ReactorConfig, Setup, derive_inputs
from .kinetics import (
    ArrheniusParams,
    NeuralDecomposition,
    KineticParameters,
    build_rate_batch,
)
from . import pfr

ARRHENIUS_DIM = 7
NN_DIM = 26

DEFAULT_WEIGHTS = (1.0, 1.0, 1.0)

OBSERVABLES = ("band_area", "heat", "gas_flow")


class FitError(RuntimeError):
    """All optimization starts failed to produce a finite cost."""


def parameter_bounds(mode: str) -> tuple[np.ndarray, np.ndarray]:
    """Box bounds for the decision vector; brackets plausible kinetics widely."""
    if mode == "arrhenius":
        lo = np.array([0.0, 0.0, -20.0, 0.0, 1.0, 0.0, 0.0])
        hi = np.array([40.0, 2.0e5, 40.0, 2.0e5, 1.0e4, 5.0e5, 5.0e5])
    elif mode == "nn":
        lo = np.concatenate([[0.0, 0.0, 1.0, 0.0, 0.0], np.full(21, -10.0)])
        hi = np.concatenate([[40.0, 2.0e5, 1.0e4, 5.0e5, 5.0e5], np.full(21, 10.0)])
    else:
        raise ValueError(f"unknown decomposition mode {mode!r}")
    return lo, hi


def pack(params: KineticParameters) -> np.ndarray:
    """KineticParameters -> decision vector (inverse of unpack)."""
    if isinstance(params.decomposition, ArrheniusParams):
        d = params.decomposition
        return np.array(
            [params.log_A1, params.E_a1, d.log_A, d.E_a, params.gamma, params.dH1, params.dH2]
        )
    d = params.decomposition
    return np.concatenate(
        [
            [params.log_A1, params.E_a1, params.gamma, params.dH1, params.dH2],
            d.W1.ravel(),
            d.W2,
            d.b1,
            [d.b2],
        ]
    )


def unpack(x: np.ndarray, mode: str) -> KineticParameters:
    """Decision vector -> KineticParameters."""
    x = np.asarray(x, dtype=float)
    if mode == "arrhenius":
        if x.shape != (ARRHENIUS_DIM,):
            raise ValueError(f"arrhenius vector needs {ARRHENIUS_DIM} entries, got {x.shape}")
        return KineticParameters(
            log_A1=x[0],
            E_a1=x[1],
            gamma=x[4],
            dH1=x[5],
            dH2=x[6],
            decomposition=ArrheniusParams(log_A=x[2], E_a=x[3]),
        )
    if mode == "nn":
        if x.shape != (NN_DIM,):
            raise ValueError(f"nn vector needs {NN_DIM} entries, got {x.shape}")
        return KineticParameters(
            log_A1=x[0],
            E_a1=x[1],
            gamma=x[2],
            dH1=x[3],
            dH2=x[4],
            decomposition=NeuralDecomposition(
                W1=x[5:17].reshape(4, 3),
                W2=x[17:21],
                b1=x[21:25],
                b2=x[25],
            ),
        )
    raise ValueError(f"unknown decomposition mode {mode!r}")


@dataclass(frozen=True)
class OptimizerSettings:
    """Multi-start local optimization controls."""

    n_starts: int = 10
    seed: int = 0
    max_iter: int = 120
    gradient_step: float = 1.0e-5   # relative to the bound range of each entry
    tol_J: float = 1.0e-12          # relative ftol passed to the local solver
    tol_grad: float = 1.0e-10
    n_jobs: int = 1
    bounds: tuple | None = None     # optional (lo, hi) override
    ode_rtol: float = pfr.RTOL_DEFAULT  # forward-solve tolerances during trials
    ode_atol: float = pfr.ATOL_DEFAULT
    # Uniform draws frequently land on zero-reaction plateaus where the
    # gradient vanishes; drawing screen_factor * n_starts candidates and
    # keeping the lowest-cost ones makes the random starts useful.
    screen_factor: int = 8

    def __post_init__(self):
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")
        if self.gradient_step <= 0 or self.tol_J <= 0 or self.tol_grad <= 0:
            raise ValueError("gradient step and tolerances must be positive")
        if self.screen_factor < 1:
            raise ValueError("screen_factor must be >= 1")


@dataclass(frozen=True)
class CostFailure:
    """Forward-solve failure at a trial point, tied to one experiment."""

    record_index: int
    message: str


@dataclass(frozen=True)
class CostValue:
    J: float
    residuals: np.ndarray | None
    failure: CostFailure | None = None

    @property
    def ok(self) -> bool:
        return self.failure is None


@dataclass(frozen=True)
class CostBreakdown:
    """Raw costs, normalizers, weights, and the scalarized total."""

    J1: float
    J2: float
    J3: float
    J1_0: float
    J2_0: float
    J3_0: float
    weights: tuple[float, float, float]
    J: float
    residuals: dict = field(default_factory=dict)


def scalarize(J1, J2, J3, weights, normalizers) -> float:
    """J = sum_k lambda_k J_k / J_k0 with positive normalizers."""
    normalizers = tuple(float(n) for n in normalizers)
    if any(n <= 0 for n in normalizers):
        raise ValueError("normalizers must be positive")
    lam = tuple(float(w) for w in weights)
    return lam[0] * J1 / normalizers[0] + lam[1] * J2 / normalizers[1] + lam[2] * J3 / normalizers[2]


# ---------------------------------------------------------------------------
# Compiled dataset: records resolved to simulation inputs and measurement
# arrays, ready for batched evaluation.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompiledData:
    records: tuple[ExperimentRecord, ...]
    inputs: tuple                       # SimulationInputs per record
    band_idx: np.ndarray                # record indices carrying band areas
    heat_idx: np.ndarray
    gas_idx: np.ndarray
    band_meas: np.ndarray
    heat_meas: tuple[np.ndarray, ...]   # per heat record, length 1 or n_zones
    gas_meas: np.ndarray
    normalizers: tuple[float, float, float]

    @property
    def n_records(self) -> int:
        return len(self.records)


def compile_data(records, reactors: dict[Setup, ReactorConfig]) -> CompiledData:
    """Resolve records against their reactors and precompute measurements."""
    records = tuple(records)
    inputs = tuple(derive_inputs(r, reactors[r.setup]) for r in records)
    band_idx, heat_idx, gas_idx = [], [], []
    band_meas, heat_meas, gas_meas = [], [], []
    for i, r in enumerate(records):
        if r.band_area is not None:
            band_idx.append(i)
            band_meas.append(r.band_area)
        if r.zone_heats is not None:
            nz = reactors[r.setup].n_zones
            if len(r.zone_heats) not in (1, nz):
                raise ValueError(
                    f"record {i}: zone_heats must have 1 or {nz} entries, got {len(r.zone_heats)}"
                )
            heat_idx.append(i)
            heat_meas.append(np.asarray(r.zone_heats, dtype=float))
        if r.gas_flow_rate is not None:
            gas_idx.append(i)
            gas_meas.append(r.gas_flow_rate)
    band_meas = np.asarray(band_meas, dtype=float)
    gas_meas = np.asarray(gas_meas, dtype=float)
    # Normalizers: J_k0 = 1/2 sum of squared measurements, i.e. the cost of
    # an all-zero prediction; makes each normalized term a relative misfit.
    j10 = 0.5 * float(np.sum(band_meas**2)) if band_meas.size else 1.0
    j20 = 0.5 * float(sum(np.sum(h**2) for h in heat_meas)) if heat_meas else 1.0
    j30 = 0.5 * float(np.sum(gas_meas**2)) if gas_meas.size else 1.0
    return CompiledData(
        records=records,
        inputs=inputs,
        band_idx=np.asarray(band_idx, dtype=int),
        heat_idx=np.asarray(heat_idx, dtype=int),
        gas_idx=np.asarray(gas_idx, dtype=int),
        band_meas=band_meas,
        heat_meas=tuple(heat_meas),
        gas_meas=gas_meas,
        normalizers=(max(j10, 1e-300), max(j20, 1e-300), max(j30, 1e-300)),
    )


@dataclass
class SimulatedObservables:
    """Per parameter-set, per record simulated measurement values."""

    band: np.ndarray       # (m, n_band)
    heats: list            # length m; each a list of per-record heat arrays
    heat_totals: np.ndarray  # (m, n_heat) zone-summed heats
    gas: np.ndarray        # (m, n_gas)


def _build_rates_matrix(X: np.ndarray, mode: str, T: np.ndarray, p: np.ndarray, n_exp: int):
    """RateBatch for m parameter rows crossed with n_exp experiments."""
    m = X.shape[0]
    rep = lambda col: np.repeat(col, n_exp)
    T_all = np.tile(T, m)
    p_all = np.tile(p, m)
    if mode == "arrhenius":
        return build_rate_batch(
            rep(X[:, 0]), rep(X[:, 1]), T_all, p_all,
            log_A2=rep(X[:, 2]), E_a2=rep(X[:, 3]),
        )
    return build_rate_batch(
        rep(X[:, 0]), rep(X[:, 1]), T_all, p_all,
        W1=np.repeat(X[:, 5:17].reshape(m, 4, 3), n_exp, axis=0),
        W2=np.repeat(X[:, 17:21], n_exp, axis=0),
        b1=np.repeat(X[:, 21:25], n_exp, axis=0),
        b2=np.repeat(X[:, 25], n_exp),
    )


def _gamma_dh(X: np.ndarray, mode: str):
    if mode == "arrhenius":
        return X[:, 4], X[:, 5], X[:, 6]
    return X[:, 2], X[:, 3], X[:, 4]


def _assemble_observables(result, X, data: CompiledData, mode: str) -> SimulatedObservables:
    m = X.shape[0]
    n_exp = data.n_records
    gamma, dh1, dh2 = _gamma_dh(X, mode)
    band_raw = result.outlet_liquid_dan.reshape(m, n_exp)
    band = band_raw[:, data.band_idx] / gamma[:, None] if data.band_idx.size else np.zeros((m, 0))

    max_zones = result.zone_q1.shape[1]
    zq1 = result.zone_q1.reshape(m, n_exp, max_zones)
    zq2 = result.zone_q2.reshape(m, n_exp, max_zones)
    heats_all = dh1[:, None, None] * zq1 + dh2[:, None, None] * zq2

    heats: list = []
    heat_totals = np.zeros((m, data.heat_idx.size))
    for k, i in enumerate(data.heat_idx):
        nz = data.inputs[i].reactor.n_zones
        per_zone = heats_all[:, i, :nz]
        heats.append(per_zone)
        heat_totals[:, k] = per_zone.sum(axis=1)
    gas = result.gas_flow.reshape(m, n_exp)[:, data.gas_idx] if data.gas_idx.size else np.zeros((m, 0))
    return SimulatedObservables(band=band, heats=heats, heat_totals=heat_totals, gas=gas)


def _empty_observables(m: int, data: CompiledData) -> SimulatedObservables:
    return SimulatedObservables(
        band=np.zeros((m, data.band_idx.size)),
        heats=[np.zeros((m, data.inputs[i].reactor.n_zones)) for i in data.heat_idx],
        heat_totals=np.zeros((m, data.heat_idx.size)),
        gas=np.zeros((m, data.gas_idx.size)),
    )


def simulate_matrix(
    X: np.ndarray,
    data: CompiledData,
    mode: str,
    *,
    rtol: float = pfr.RTOL_DEFAULT,
    atol: float = pfr.ATOL_DEFAULT,
) -> SimulatedObservables:
    """Simulate all records for every parameter row of X in one batch.

    Raises CostEvaluationError wrapping the failing (parameter row, record).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    n_exp = data.n_records
    if n_exp == 0:
        return _empty_observables(m, data)
    T = np.array([si.temperature for si in data.inputs])
    p = np.array([si.absolute_pressure for si in data.inputs])
    rates = _build_rates_matrix(X, mode, T, p, n_exp)
    spec = pfr.make_batch_spec(list(data.inputs) * m, rates)
    try:
        result = pfr.integrate_batch(spec, rtol=rtol, atol=atol)
    except pfr.SolverError as exc:
        row = getattr(exc, "row", 0)
        raise CostEvaluationError(
            param_row=row // n_exp, record_index=row % n_exp, message=str(exc)
        ) from exc
    return _assemble_observables(result, X, data, mode)


def simulate_matrix_masked(
    X: np.ndarray,
    data: CompiledData,
    mode: str,
    *,
    rtol: float = pfr.RTOL_DEFAULT,
    atol: float = pfr.ATOL_DEFAULT,
    max_steps: int = 20_000,
):
    """Like simulate_matrix, but failing rows are flagged, not raised.

    Returns (observables, failed) where failed[i] is True when any record
    under parameter row i could not be solved.  A much smaller shared step
    budget than the public solver's applies: rows that exhaust it count as
    non-converged, i.e. the trial point is rejected.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    m = X.shape[0]
    n_exp = data.n_records
    if n_exp == 0:
        return _empty_observables(m, data), np.zeros(m, dtype=bool)
    T = np.array([si.temperature for si in data.inputs])
    p = np.array([si.absolute_pressure for si in data.inputs])
    rates = _build_rates_matrix(X, mode, T, p, n_exp)
    spec = pfr.make_batch_spec(list(data.inputs) * m, rates)
    result = pfr.integrate_batch(
        spec, rtol=rtol, atol=atol, on_failure="mask", max_steps=max_steps
    )
    failed = result.failed.reshape(m, n_exp).any(axis=1)
    return _assemble_observables(result, X, data, mode), failed


class CostEvaluationError(RuntimeError):
    """Forward solve failed for one (parameter row, record) pair."""

    def __init__(self, param_row: int, record_index: int, message: str):
        self.param_row = param_row
        self.record_index = record_index
        super().__init__(f"record {record_index}: {message}")


def _cost_terms(sim: SimulatedObservables, data: CompiledData) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(J1, J2, J3) per parameter row."""
    m = sim.band.shape[0]
    j1 = 0.5 * np.sum((sim.band - data.band_meas) ** 2, axis=1) if data.band_idx.size else np.zeros(m)
    j2 = np.zeros(m)
    for k in range(data.heat_idx.size):
        meas = data.heat_meas[k]
        if meas.size == 1:
            j2 += 0.5 * (sim.heat_totals[:, k] - meas[0]) ** 2
        else:
            j2 += 0.5 * np.sum((sim.heats[k] - meas) ** 2, axis=1)
    j3 = 0.5 * np.sum((sim.gas - data.gas_meas) ** 2, axis=1) if data.gas_idx.size else np.zeros(m)
    return j1, j2, j3


def evaluate_cost(
    x: np.ndarray,
    data: CompiledData,
    mode: str,
    weights=DEFAULT_WEIGHTS,
) -> CostBreakdown:
    """Full cost breakdown at one decision vector (raises on solve failure)."""
    sim = simulate_matrix(x[None, :], data, mode)
    j1, j2, j3 = _cost_terms(sim, data)
    j10, j20, j30 = data.normalizers
    residuals = {
        "band_area": sim.band[0] - data.band_meas,
        "heat": np.concatenate(
            [
                (sim.heat_totals[0, k : k + 1] - data.heat_meas[k])
                if data.heat_meas[k].size == 1
                else (sim.heats[k][0] - data.heat_meas[k])
                for k in range(data.heat_idx.size)
            ]
        )
        if data.heat_idx.size
        else np.zeros(0),
        "gas_flow": sim.gas[0] - data.gas_meas,
    }
    J = scalarize(j1[0], j2[0], j3[0], weights, (j10, j20, j30))
    return CostBreakdown(
        J1=float(j1[0]),
        J2=float(j2[0]),
        J3=float(j3[0]),
        J1_0=j10,
        J2_0=j20,
        J3_0=j30,
        weights=tuple(float(w) for w in weights),
        J=float(J),
        residuals=residuals,
    )


# Spec-facing single-cost helpers -------------------------------------------


def _single_cost(params, records, reactor, which: str) -> CostValue:
    reactors = {records[0].setup: reactor} if records else {}
    for r in records:
        if r.setup not in reactors:
            reactors[r.setup] = reactor
    data = compile_data(records, reactors)
    x = pack(params)
    try:
        sim = simulate_matrix(x[None, :], data, params.mode)
    except CostEvaluationError as exc:
        return CostValue(
            J=float("inf"),
            residuals=None,
            failure=CostFailure(record_index=exc.record_index, message=str(exc)),
        )
    j1, j2, j3 = _cost_terms(sim, data)
    if which == "band_area":
        return CostValue(J=float(j1[0]), residuals=sim.band[0] - data.band_meas)
    if which == "heat":
        res = np.concatenate(
            [
                (sim.heat_totals[0, k : k + 1] - data.heat_meas[k])
                if data.heat_meas[k].size == 1
                else (sim.heats[k][0] - data.heat_meas[k])
                for k in range(data.heat_idx.size)
            ]
        ) if data.heat_idx.size else np.zeros(0)
        return CostValue(J=float(j2[0]), residuals=res)
    return CostValue(J=float(j3[0]), residuals=sim.gas[0] - data.gas_meas)


def cost_ftir(params: KineticParameters, records, reactor: ReactorConfig) -> CostValue:
    """J1 = 1/2 sum of squared band-area residuals over mixer records."""
    if any(r.band_area is None for r in records):
        raise ValueError("every record must carry a band-area measurement")
    return _single_cost(params, records, reactor, "band_area")


def cost_heat(params: KineticParameters, records, reactor: ReactorConfig) -> CostValue:
    """J2 = 1/2 sum of squared zone-heat residuals (totals when length 1)."""
    if any(r.zone_heats is None for r in records):
        raise ValueError("every record must carry zone heats")
    return _single_cost(params, records, reactor, "heat")


def cost_gas(params: KineticParameters, records, reactor: ReactorConfig) -> CostValue:
    """J3 = 1/2 sum of squared gas-flow residuals."""
    if any(r.gas_flow_rate is None for r in records):
        raise ValueError("every record must carry a gas flow measurement")
    return _single_cost(params, records, reactor, "gas_flow")


# ---------------------------------------------------------------------------
# Objective with finite-difference gradient, in box-normalized coordinates
# ---------------------------------------------------------------------------


class _Objective:
    """Scalarized cost and central-difference gradient over the unit box."""

    def __init__(
        self, data, mode, weights, lo, hi, step,
        rtol=pfr.RTOL_DEFAULT, atol=pfr.ATOL_DEFAULT, max_steps=20_000,
    ):
        self.data = data
        self.mode = mode
        self.weights = np.asarray(weights, dtype=float)
        self.lo = lo
        self.hi = hi
        self.span = hi - lo
        self.step = step
        self.rtol = rtol
        self.atol = atol
        self.max_steps = max_steps
        self.n_evals = 0

    def x_of(self, t):
        return self.lo + np.clip(t, 0.0, 1.0) * self.span

    def _cost_rows(self, X: np.ndarray) -> np.ndarray:
        """J for each parameter row; inf rows where the solve failed."""
        self.n_evals += X.shape[0]
        j10, j20, j30 = self.data.normalizers
        lam = self.weights
        sim, failed = simulate_matrix_masked(
            X, self.data, self.mode, rtol=self.rtol, atol=self.atol, max_steps=self.max_steps
        )
        j1, j2, j3 = _cost_terms(sim, self.data)
        J = lam[0] * j1 / j10 + lam[1] * j2 / j20 + lam[2] * j3 / j30
        J[failed] = np.inf
        return J

    def value(self, t: np.ndarray) -> float:
        return float(self._cost_rows(self.x_of(t)[None, :])[0])

    def value_and_grad(self, t: np.ndarray):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        npar = t.size
        J0 = self.value(t)
        if not np.isfinite(J0):
            return np.inf, np.zeros(npar)
        h = self.step
        t_plus = np.clip(t[None, :] + h * np.eye(npar), 0.0, 1.0)
        t_minus = np.clip(t[None, :] - h * np.eye(npar), 0.0, 1.0)
        J_all = self._cost_rows(self.lo + np.vstack([t_plus, t_minus]) * self.span)
        jp = J_all[:npar]
        jm = J_all[npar:]
        dt = t_plus.diagonal() - t_minus.diagonal()
        grad = np.zeros(npar)
        for i in range(npar):
            if np.isfinite(jp[i]) and np.isfinite(jm[i]) and dt[i] > 0:
                grad[i] = (jp[i] - jm[i]) / dt[i]
            elif np.isfinite(jp[i]):
                d = t_plus[i, i] - t[i]
                grad[i] = (jp[i] - J0) / d if d > 0 else 0.0
            elif np.isfinite(jm[i]):
                d = t[i] - t_minus[i, i]
                grad[i] = (J0 - jm[i]) / d if d > 0 else 0.0
        return float(J0), grad


def cost_gradient(
    x: np.ndarray,
    data: CompiledData,
    mode: str,
    weights=DEFAULT_WEIGHTS,
    *,
    relative_step: float = 1.0e-5,
    rtol: float = pfr.RTOL_DEFAULT,
    atol: float = pfr.ATOL_DEFAULT,
) -> np.ndarray:
    """Central finite-difference gradient of J on the raw parameter vector.

    The step for entry i is relative_step * (hi_i - lo_i).  This is the
    gradient contract the optimizer's internal scheme must match.
    """
    lo, hi = parameter_bounds(mode)
    obj = _Objective(data, mode, weights, lo, hi, relative_step, rtol=rtol, atol=atol)
    t = (np.asarray(x, dtype=float) - lo) / (hi - lo)
    _, grad_t = obj.value_and_grad(t)
    return grad_t / (hi - lo)


# ---------------------------------------------------------------------------
# Multi-start fit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StartResult:
    index: int
    J0: float
    J: float
    n_iter: int
    converged: bool
    message: str
    t_opt: np.ndarray | None


@dataclass(frozen=True)
class FitReport:
    """Outcome of one identification run."""

    mode: str
    vector: np.ndarray
    params: KineticParameters
    breakdown: CostBreakdown
    metrics: dict                      # per observable: {"r2", "mae", "n"}
    starts: tuple[StartResult, ...]
    best_start: int
    settings: OptimizerSettings
    weights: tuple[float, float, float]
    fold_assignments: tuple | None = None
    wall_time_s: float = field(default=0.0, compare=False)


def _initial_points(settings: OptimizerSettings, mode: str, lo, hi, extra_starts, obj: "_Objective"):
    """Seeded start vectors in box coordinates.

    Scalar entries are drawn uniformly within bounds and network entries in
    [-0.5, 0.5]; candidates are over-drawn by screen_factor, ranked by one
    batched cost evaluation, and the best n_starts survive.  Explicit
    extra_starts (warm starts) are always kept.
    """
    rng = np.random.default_rng(settings.seed)
    span = hi - lo
    points = []
    for x in extra_starts:
        points.append(np.clip((np.asarray(x, dtype=float) - lo) / span, 0.0, 1.0))
    n_random = settings.n_starts - len(points)
    if n_random <= 0:
        return points[: settings.n_starts]
    n_cand = n_random * settings.screen_factor
    cand = rng.uniform(size=(n_cand, lo.size))
    if mode == "nn":
        cand[:, 5:] = (rng.uniform(-0.5, 0.5, size=(n_cand, 21)) - lo[5:]) / span[5:]
    if settings.screen_factor > 1:
        J_cand = obj._cost_rows(lo + cand * span)
        order = np.argsort(J_cand, kind="stable")
    else:
        order = np.arange(n_cand)
    points.extend(cand[i] for i in order[:n_random])
    return points[: settings.n_starts]


def _run_single_start(args):
    (index, t0, data, mode, weights, settings) = args
    lo, hi = settings.bounds if settings.bounds is not None else parameter_bounds(mode)
    obj = _Objective(
        data, mode, weights, np.asarray(lo), np.asarray(hi), settings.gradient_step,
        rtol=settings.ode_rtol, atol=settings.ode_atol,
    )
    J0 = obj.value(t0)
    if not np.isfinite(J0):
        return StartResult(
            index=index, J0=J0, J=np.inf, n_iter=0, converged=False,
            message="infeasible start (forward solve failed)", t_opt=None,
        )
    res = minimize(
        obj.value_and_grad,
        t0,
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, 1.0)] * t0.size,
        options={
            "maxiter": settings.max_iter,
            "ftol": settings.tol_J,
            "gtol": settings.tol_grad,
            "maxcor": 25,
        },
    )
    J_final = float(res.fun) if np.isfinite(res.fun) else np.inf
    t_opt = np.clip(res.x, 0.0, 1.0)
    if J_final > J0:  # never report a point worse than the start
        J_final, t_opt = J0, np.asarray(t0)
    return StartResult(
        index=index,
        J0=float(J0),
        J=J_final,
        n_iter=int(res.nit),
        converged=bool(res.success) or J_final < J0,
        message=str(res.message),
        t_opt=t_opt,
    )


def fit(
    records,
    reactors: dict[Setup, ReactorConfig],
    settings: OptimizerSettings,
    mode: str = "nn",
    weights=DEFAULT_WEIGHTS,
    extra_starts=(),
) -> FitReport:
    """Multi-start identification of the parameter vector.

    `extra_starts` are raw parameter vectors used as the first local starts
    (e.g. a warm start from a previous fit); remaining starts are seeded
    uniform draws within bounds.  Deterministic for a given seed; the best
    start is selected by (J, start index) so worker scheduling cannot
    change the reported optimum.
    """
    weights = tuple(float(w) for w in weights)
    if len(weights) != 3 or any(w < 0 for w in weights):
        raise ValueError("weights must be 3 non-negative numbers")
    data = compile_data(records, reactors)
    active = [
        (weights[0], data.band_idx.size),
        (weights[1], data.heat_idx.size),
        (weights[2], data.gas_idx.size),
    ]
    for lam, count in active:
        if lam > 0 and count == 0:
            raise ValueError("an active cost term has no experiments")
    lo, hi = settings.bounds if settings.bounds is not None else parameter_bounds(mode)
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    settings = OptimizerSettings(**{**asdict(settings), "bounds": (lo, hi)})

    t_start = time.perf_counter()
    screen_obj = _Objective(
        data, mode, weights, lo, hi, settings.gradient_step,
        rtol=settings.ode_rtol, atol=settings.ode_atol,
    )
    points = _initial_points(settings, mode, lo, hi, extra_starts, screen_obj)
    tasks = [(i, t0, data, mode, weights, settings) for i, t0 in enumerate(points)]
    if settings.n_jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=settings.n_jobs) as ex:
            starts = list(ex.map(_run_single_start, tasks))
    else:
        starts = [_run_single_start(t) for t in tasks]

    finite = [s for s in starts if np.isfinite(s.J) and s.t_opt is not None]
    if not finite:
        raise FitError(
            "all starts failed to produce a finite cost; "
            + "; ".join(s.message for s in starts[:3])
        )
    best = min(finite, key=lambda s: (s.J, s.index))
    x_best = lo + best.t_opt * (hi - lo)
    breakdown = evaluate_cost(x_best, data, mode, weights)
    params = unpack(x_best, mode)
    from .validation import observable_metrics  # deferred: validation imports fit

    metrics = observable_metrics(breakdown.residuals, data)
    return FitReport(
        mode=mode,
        vector=x_best,
        params=params,
        breakdown=breakdown,
        metrics=metrics,
        starts=tuple(starts),
        best_start=best.index,
        settings=settings,
        weights=weights,
        wall_time_s=time.perf_counter() - t_start,
    )


def report_to_dict(report: FitReport) -> dict:
    """JSON-ready representation of a FitReport."""
    p = report.params
    params_doc: dict = {
        "log_A1": p.log_A1,
        "E_a1": p.E_a1,
        "gamma": p.gamma,
        "dH1": p.dH1,
        "dH2": p.dH2,
        "decomposition": p.mode,
    }
    if isinstance(p.decomposition, ArrheniusParams):
        params_doc["arrhenius"] = {"log_A2": p.decomposition.log_A, "E_a2": p.decomposition.E_a}
    else:
        d = p.decomposition
        params_doc["nn"] = {
            "W1": d.W1.tolist(),
            "W2": d.W2.tolist(),
            "b1": d.b1.tolist(),
            "b2": d.b2,
            "input_offset": list(d.input_offset),
            "input_scale": list(d.input_scale),
        }
    b = report.breakdown
    return {
        "mode": report.mode,
        "vector": report.vector.tolist(),
        "parameters": params_doc,
        "cost": {
            "J": b.J,
            "J1": b.J1,
            "J2": b.J2,
            "J3": b.J3,
            "J1_0": b.J1_0,
            "J2_0": b.J2_0,
            "J3_0": b.J3_0,
            "weights": list(b.weights),
        },
        "metrics": report.metrics,
        "starts": [
            {
                "index": s.index,
                "J0": s.J0,
                "J": s.J,
                "n_iter": s.n_iter,
                "converged": s.converged,
            }
            for s in report.starts
        ],
        "best_start": report.best_start,
        "settings": {
            "n_starts": report.settings.n_starts,
            "seed": report.settings.seed,
            "max_iter": report.settings.max_iter,
            "gradient_step": report.settings.gradient_step,
            "tol_J": report.settings.tol_J,
            "tol_grad": report.settings.tol_grad,
            "n_jobs": report.settings.n_jobs,
        },
        "wall_time_s": report.wall_time_s,
    }


def write_report(report: FitReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report_to_dict(report), fh, indent=2)
        fh.write("\n")
