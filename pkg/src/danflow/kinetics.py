"""Reaction network and rate laws for diazo acetonitrile synthesis and decomposition.

Two liquid-phase reactions are modeled:

  1. synthesis:      AAN.HCl + NaNO2  ->  DAN + NaCl + 2 H2O
  2. decomposition:  DAN              ->  N2 + CHCN (carbene)

The synthesis rate is always Arrhenius / mass-action.  The decomposition
rate is either a first-order Arrhenius law or a small constrained neural
network mapping (liquid-phase DAN concentration, temperature, pressure)
to an effective first-order coefficient.  All evaluation functions accept
scalars or arrays broadcast along a leading batch axis, so one code path
serves single simulations and batched calibration sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GAS_CONSTANT = 8.314  # J/(K mol)

# Standard atomic weights [kg/mol]; molar masses below are assembled from
# these so the stoichiometric mass balance cancels to roundoff.
_H = 1.008e-3
_C = 12.011e-3
_N = 14.007e-3
_O = 15.999e-3
_NA = 22.98976928e-3
_CL = 35.45e-3

SPECIES = ("AAN_HCl", "NaNO2", "DAN", "NaCl", "H2O", "N2", "CHCN")

IDX_AAN = 0
IDX_NANO2 = 1
IDX_DAN = 2
IDX_NACL = 3
IDX_H2O = 4
IDX_N2 = 5
IDX_CARBENE = 6

MOLAR_MASS = np.array(
    [
        2 * _C + 5 * _H + _CL + 2 * _N,  # aminoacetonitrile hydrochloride
        _NA + _N + 2 * _O,               # sodium nitrite
        2 * _C + _H + 3 * _N,            # diazo acetonitrile
        _NA + _CL,
        2 * _H + _O,
        2 * _N,
        2 * _C + _H + _N,                # cyanocarbene
    ]
)

M_N2 = MOLAR_MASS[IDX_N2]

# Net stoichiometric coefficients nu[j, k] = nu''_jk - nu'_jk for the two
# reactions.  Column sums against MOLAR_MASS vanish (mass conservation).
STOICH = np.array(
    [
        [-1.0, 0.0],
        [-1.0, 0.0],
        [+1.0, -1.0],
        [+1.0, 0.0],
        [+2.0, 0.0],
        [0.0, +1.0],
        [0.0, +1.0],
    ]
)


@dataclass(frozen=True)
class ArrheniusParams:
    """Arrhenius rate law k = exp(log_A - E_a / (R T)).

    log_A is the natural log of the pre-exponential factor; its units are
    m^3/(mol s) for the bimolecular synthesis and 1/s for the first-order
    decomposition.
    """

    log_A: float
    E_a: float  # J/mol

    def __post_init__(self):
        if not np.isfinite(self.log_A):
            raise ValueError(f"log_A must be finite, got {self.log_A}")
        if self.E_a < 0:
            raise ValueError(f"E_a must be >= 0, got {self.E_a}")


# Fixed affine normalization of the network inputs (concentration [mol/m^3],
# temperature [K], pressure [Pa]); brings all three to O(1) so the weight
# bounds used in calibration are meaningful.
DEFAULT_INPUT_OFFSET = (0.0, 293.15, 0.0)
DEFAULT_INPUT_SCALE = (1000.0, 50.0, 1.0e5)


@dataclass(frozen=True)
class NeuralDecomposition:
    """Single-hidden-layer network for the decomposition coefficient f [1/s].

    Four hidden neurons, activation sigma(x) = max(0, x^3) after both the
    hidden and the output layer, so f >= 0 for every input.  16 weights and
    5 biases in total.
    """

    W1: np.ndarray  # (4, 3)
    b1: np.ndarray  # (4,)
    W2: np.ndarray  # (4,) output weights
    b2: float
    input_offset: tuple = DEFAULT_INPUT_OFFSET
    input_scale: tuple = DEFAULT_INPUT_SCALE

    def __post_init__(self):
        W1 = np.asarray(self.W1, dtype=float)
        b1 = np.asarray(self.b1, dtype=float)
        W2 = np.asarray(self.W2, dtype=float).reshape(-1)
        if W1.shape != (4, 3):
            raise ValueError(f"W1 must have shape (4, 3), got {W1.shape}")
        if b1.shape != (4,):
            raise ValueError(f"b1 must have shape (4,), got {b1.shape}")
        if W2.shape != (4,):
            raise ValueError(f"W2 must have 4 entries, got {W2.shape}")
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "W2", W2)
        object.__setattr__(self, "b2", float(self.b2))
        if len(self.input_offset) != 3 or len(self.input_scale) != 3:
            raise ValueError("input scaling needs 3 offset and 3 scale entries")
        if any(s <= 0 for s in self.input_scale):
            raise ValueError("input scales must be positive")

    @classmethod
    def zeros(cls) -> "NeuralDecomposition":
        return cls(W1=np.zeros((4, 3)), b1=np.zeros(4), W2=np.zeros(4), b2=0.0)


# Tagged choice between the two decomposition treatments; exactly one
# variant is active by construction.
DecompositionModel = ArrheniusParams | NeuralDecomposition


def _cubic_relu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.0, x, 0.0) ** 3


def rate_constant(params: ArrheniusParams, T):
    """Arrhenius rate coefficient at temperature T [K] (scalar or array)."""
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0.0):
        raise ValueError("temperature must be positive for the Arrhenius law")
    k = np.exp(params.log_A - params.E_a / (GAS_CONSTANT * T))
    return float(k) if k.ndim == 0 else k


def synthesis_rate(kf, c_aan, c_nano2):
    """Second-order synthesis rate Q1 = kf * [AAN.HCl] * [NaNO2] [mol/(m^3 s)]."""
    return kf * c_aan * c_nano2


def nn_forward(model: NeuralDecomposition, c_dan, T, p):
    """Decomposition coefficient f [1/s] from the constrained network.

    Inputs broadcast together; the result is f >= 0 elementwise.
    """
    c_dan, T, p = np.broadcast_arrays(
        np.asarray(c_dan, dtype=float),
        np.asarray(T, dtype=float),
        np.asarray(p, dtype=float),
    )
    off = np.asarray(model.input_offset)
    scl = np.asarray(model.input_scale)
    x = np.stack([c_dan, T, p], axis=-1)
    x = (x - off) / scl
    hidden = _cubic_relu(x @ model.W1.T + model.b1)
    out = _cubic_relu(hidden @ model.W2 + model.b2)
    return float(out) if out.ndim == 0 else out


def decomposition_rate(model: DecompositionModel, c_dan, T, p):
    """Decomposition rate Q2 [mol/(m^3 s)] for either model variant.

    Q2 = f(c_dan, T, p) * c_dan in network mode and k(T) * c_dan in
    Arrhenius mode (first order in DAN).  Q2 = 0 whenever c_dan = 0.
    """
    c_dan = np.asarray(c_dan, dtype=float)
    if np.any(c_dan < 0.0):
        raise ValueError("DAN concentration must be >= 0")
    if isinstance(model, ArrheniusParams):
        q = rate_constant(model, T) * c_dan
    else:
        q = nn_forward(model, c_dan, T, p) * c_dan
    return float(q) if np.ndim(q) == 0 else q


# ---------------------------------------------------------------------------
# Batched evaluation used by the PFR solver.  A batch row carries its own
# parameter set, so finite-difference parameter sweeps and multi-experiment
# cost evaluations integrate in one vectorized pass.
# ---------------------------------------------------------------------------


@dataclass
class RateBatch:
    """Per-row kinetic parameters prepared for vectorized rate evaluation.

    `kf1` is precomputed per row because temperature is constant along the
    reactor axis.  In Arrhenius mode `kf2` is precomputed as well; in
    network mode the weight tensors are stored row-wise.
    """

    kf1: np.ndarray  # (n,)
    nn_mode: bool
    kf2: np.ndarray | None = None          # (n,) Arrhenius mode
    W1: np.ndarray | None = None           # (n, 4, 3)
    b1: np.ndarray | None = None           # (n, 4)
    W2: np.ndarray | None = None           # (n, 4)
    b2: np.ndarray | None = None           # (n,)
    x_off: np.ndarray = field(default_factory=lambda: np.asarray(DEFAULT_INPUT_OFFSET))
    x_scl: np.ndarray = field(default_factory=lambda: np.asarray(DEFAULT_INPUT_SCALE))

    def reaction_rates(self, c_aan, c_nano2, c_dan, T, p):
        """Q1, Q2 for row-wise liquid-phase concentrations (each (n,))."""
        q1 = self.kf1 * c_aan * c_nano2
        if self.nn_mode:
            x0 = (c_dan - self.x_off[0]) / self.x_scl[0]
            x1 = (T - self.x_off[1]) / self.x_scl[1]
            x2 = (p - self.x_off[2]) / self.x_scl[2]
            pre = (
                self.W1[:, :, 0] * x0[:, None]
                + self.W1[:, :, 1] * x1[:, None]
                + self.W1[:, :, 2] * x2[:, None]
                + self.b1
            )
            hidden = _cubic_relu(pre)
            out = _cubic_relu(np.einsum("ni,ni->n", self.W2, hidden) + self.b2)
            q2 = out * c_dan
        else:
            q2 = self.kf2 * c_dan
        return q1, q2


def build_rate_batch(
    log_A1,
    E_a1,
    T,
    p,
    decomposition: DecompositionModel | None = None,
    *,
    log_A2=None,
    E_a2=None,
    W1=None,
    b1=None,
    W2=None,
    b2=None,
    input_offset=DEFAULT_INPUT_OFFSET,
    input_scale=DEFAULT_INPUT_SCALE,
) -> RateBatch:
    """Assemble a RateBatch from per-row arrays or one DecompositionModel.

    `log_A1`, `E_a1`, `T`, `p` broadcast to a common (n,) shape.  Either
    pass `decomposition` (replicated across rows) or per-row arrays for one
    of the two variants.
    """
    log_A1, E_a1, T, p = np.broadcast_arrays(
        np.atleast_1d(np.asarray(log_A1, dtype=float)),
        np.asarray(E_a1, dtype=float),
        np.asarray(T, dtype=float),
        np.asarray(p, dtype=float),
    )
    n = T.shape[0]
    kf1 = np.exp(log_A1 - E_a1 / (GAS_CONSTANT * T))
    if isinstance(decomposition, ArrheniusParams):
        kf2 = np.exp(decomposition.log_A - decomposition.E_a / (GAS_CONSTANT * T))
        return RateBatch(kf1=kf1, nn_mode=False, kf2=kf2)
    if isinstance(decomposition, NeuralDecomposition):
        return RateBatch(
            kf1=kf1,
            nn_mode=True,
            W1=np.broadcast_to(decomposition.W1, (n, 4, 3)).copy(),
            b1=np.broadcast_to(decomposition.b1, (n, 4)).copy(),
            W2=np.broadcast_to(decomposition.W2, (n, 4)).copy(),
            b2=np.full(n, decomposition.b2),
            x_off=np.asarray(decomposition.input_offset, dtype=float),
            x_scl=np.asarray(decomposition.input_scale, dtype=float),
        )
    if log_A2 is not None:
        log_A2 = np.broadcast_to(np.asarray(log_A2, dtype=float), (n,))
        E_a2 = np.broadcast_to(np.asarray(E_a2, dtype=float), (n,))
        kf2 = np.exp(log_A2 - E_a2 / (GAS_CONSTANT * T))
        return RateBatch(kf1=kf1, nn_mode=False, kf2=kf2)
    return RateBatch(
        kf1=kf1,
        nn_mode=True,
        W1=np.asarray(W1, dtype=float).reshape(n, 4, 3),
        b1=np.asarray(b1, dtype=float).reshape(n, 4),
        W2=np.asarray(W2, dtype=float).reshape(n, 4),
        b2=np.asarray(b2, dtype=float).reshape(n),
        x_off=np.asarray(input_offset, dtype=float),
        x_scl=np.asarray(input_scale, dtype=float),
    )


def stoichiometric_mass_defect() -> np.ndarray:
    """Relative mass imbalance of each reaction; ~0 when stoichiometry is sound."""
    net = STOICH.T @ MOLAR_MASS
    consumed = np.abs(STOICH.T.clip(max=0.0)) @ MOLAR_MASS
    return np.abs(net) / consumed


# ---------------------------------------------------------------------------
# Full calibratable parameter set and its file representation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KineticParameters:
    """Everything the identification problem may adjust.

    Synthesis Arrhenius constants, the band-area proportionality factor,
    the two reaction enthalpies, and the decomposition model (network
    weights or a second Arrhenius pair).
    """

    log_A1: float
    E_a1: float      # J/mol
    gamma: float     # band area proportionality, dimensionless
    dH1: float       # J/mol released per mole of reaction 1
    dH2: float       # J/mol released per mole of reaction 2
    decomposition: DecompositionModel

    def __post_init__(self):
        if not np.isfinite(self.log_A1):
            raise ValueError("log_A1 must be finite")
        if self.E_a1 < 0:
            raise ValueError("E_a1 must be >= 0")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")

    @property
    def mode(self) -> str:
        return "arrhenius" if isinstance(self.decomposition, ArrheniusParams) else "nn"

    def synthesis(self) -> ArrheniusParams:
        return ArrheniusParams(log_A=self.log_A1, E_a=self.E_a1)


def save_parameters(params: KineticParameters, path) -> None:
    """Write a parameter file (YAML, keys mirror KineticParameters)."""
    import yaml

    doc: dict = {
        "log_A1": float(params.log_A1),
        "E_a1": float(params.E_a1),
        "gamma": float(params.gamma),
        "dH1": float(params.dH1),
        "dH2": float(params.dH2),
        "decomposition": params.mode,
    }
    d = params.decomposition
    if isinstance(d, ArrheniusParams):
        doc["arrhenius"] = {"log_A2": float(d.log_A), "E_a2": float(d.E_a)}
    else:
        doc["nn"] = {
            "W1": [[float(v) for v in row] for row in d.W1],
            "b1": [float(v) for v in d.b1],
            "W2": [float(v) for v in d.W2],
            "b2": float(d.b2),
            "input_offset": [float(v) for v in d.input_offset],
            "input_scale": [float(v) for v in d.input_scale],
        }
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)


def load_parameters(path) -> KineticParameters:
    """Read a parameter file written by save_parameters (or hand-edited)."""
    import yaml

    with open(path, "r", encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: parameter file must be a mapping")
    try:
        mode = doc["decomposition"]
        if mode == "arrhenius":
            sub = doc["arrhenius"]
            decomposition: DecompositionModel = ArrheniusParams(
                log_A=float(sub["log_A2"]), E_a=float(sub["E_a2"])
            )
        elif mode == "nn":
            sub = doc["nn"]
            decomposition = NeuralDecomposition(
                W1=np.asarray(sub["W1"], dtype=float),
                b1=np.asarray(sub["b1"], dtype=float),
                W2=np.asarray(sub["W2"], dtype=float),
                b2=float(sub["b2"]),
                input_offset=tuple(sub.get("input_offset", DEFAULT_INPUT_OFFSET)),
                input_scale=tuple(sub.get("input_scale", DEFAULT_INPUT_SCALE)),
            )
        else:
            raise ValueError(f"unknown decomposition mode {mode!r}")
        return KineticParameters(
            log_A1=float(doc["log_A1"]),
            E_a1=float(doc["E_a1"]),
            gamma=float(doc["gamma"]),
            dH1=float(doc["dH1"]),
            dH2=float(doc["dH2"]),
            decomposition=decomposition,
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing parameter file key {exc}") from None
