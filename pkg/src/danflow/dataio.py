"""Experiment records, reactor configurations, and dataset ingestion.

Steady-state runs from the two lab setups are stored as CSV files:

  mixer.csv        residence_time_s,temperature_C,band_area_au
  calorimeter.csv  residence_time_s,temperature_C,pressure_gauge_bar,heat_total_W,gas_flow_ml_min

Both comma-separated files with point decimals and semicolon-separated
files with decimal commas (the raw tabulation style) are accepted; values
are normalized on load.  Reactor geometry lives in small YAML files whose
keys mirror the ReactorConfig fields.
"""

from __future__ import annotations

import csv
import enum
import io
import warnings
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import yaml

ATMOSPHERIC_PRESSURE = 101325.0  # Pa
KELVIN_OFFSET = 273.15
BAR = 1.0e5  # Pa

# All mixer runs were performed at the same backpressure; the mixer table
# carries no pressure column, so this gauge value is applied on load.
MIXER_GAUGE_PRESSURE = 1.4 * BAR

N_SPECIES = 7


class Setup(enum.Enum):
    MIXER = "mixer"
    CALORIMETER = "calorimeter"


class ParseError(ValueError):
    """Raised for malformed experiment CSV or reactor config files."""


@dataclass(frozen=True)
class ReactorConfig:
    """Geometry, feed, and zone layout of one flow reactor."""

    name: str
    volume: float                 # m^3
    cross_section_area: float     # m^2
    n_zones: int
    feed_concentration_educt_a: float  # aminoacetonitrile hydrochloride, mol/m^3
    feed_concentration_educt_b: float  # sodium nitrite, mol/m^3
    feed_flow_ratio: float = 1.0       # volumetric B:A
    liquid_density: float = 1000.0     # kg/m^3
    default_gauge_pressure: float = 0.0  # Pa
    zone_bounds: tuple[float, ...] | None = None  # m, defaults to equal segments

    def __post_init__(self):
        if self.volume <= 0 or self.cross_section_area <= 0:
            raise ValueError("volume and cross_section_area must be positive")
        if self.n_zones < 1:
            raise ValueError("n_zones must be >= 1")
        if self.feed_concentration_educt_a <= 0 or self.feed_concentration_educt_b <= 0:
            raise ValueError("feed concentrations must be positive")
        if self.feed_flow_ratio <= 0:
            raise ValueError("feed_flow_ratio must be positive")
        if self.liquid_density <= 0:
            raise ValueError("liquid_density must be positive")
        if self.zone_bounds is None:
            length = self.length
            bounds = tuple(length * i / self.n_zones for i in range(self.n_zones + 1))
            object.__setattr__(self, "zone_bounds", bounds)
        else:
            bounds = tuple(float(b) for b in self.zone_bounds)
            object.__setattr__(self, "zone_bounds", bounds)
            if len(bounds) != self.n_zones + 1:
                raise ValueError("zone_bounds must have n_zones + 1 entries")
            if bounds[0] != 0.0:
                raise ValueError("zone_bounds must start at 0")
            if any(b1 <= b0 for b0, b1 in zip(bounds, bounds[1:])):
                raise ValueError("zone_bounds must be strictly increasing")
            if abs(bounds[-1] - self.length) > 1e-9 * self.length:
                raise ValueError("zone_bounds must end at the reactor length")

    @property
    def length(self) -> float:
        return self.volume / self.cross_section_area


@dataclass(frozen=True)
class ExperimentRecord:
    """One steady-state run with whichever observables were measured."""

    setup: Setup
    residence_time: float          # s, nominal volume / inlet flow rate
    temperature: float             # K
    gauge_pressure: float          # Pa
    band_area: float | None = None           # a.u.
    zone_heats: tuple[float, ...] | None = None  # W; length 1 = total only
    gas_flow_rate: float | None = None        # mL/min at reference conditions

    def __post_init__(self):
        if self.residence_time <= 0:
            raise ValueError("residence_time must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive (kelvin)")
        if self.gauge_pressure < 0:
            raise ValueError("gauge_pressure must be >= 0")
        if self.zone_heats is not None:
            object.__setattr__(self, "zone_heats", tuple(float(q) for q in self.zone_heats))
        if self.band_area is None and self.zone_heats is None and self.gas_flow_rate is None:
            raise ValueError("record carries no measurement")


@dataclass(frozen=True)
class SimulationInputs:
    """Inlet state and operating conditions derived from one record."""

    inlet_velocity: float               # m/s
    inlet_concentrations: tuple[float, ...]  # mol/m^3, all 7 species
    absolute_pressure: float            # Pa
    temperature: float                  # K
    reactor: ReactorConfig

    def __post_init__(self):
        if len(self.inlet_concentrations) != N_SPECIES:
            raise ValueError("need one inlet concentration per species")
        object.__setattr__(
            self, "inlet_concentrations", tuple(float(c) for c in self.inlet_concentrations)
        )


_HEADERS = {
    Setup.MIXER: ["residence_time_s", "temperature_C", "band_area_au"],
    Setup.CALORIMETER: [
        "residence_time_s",
        "temperature_C",
        "pressure_gauge_bar",
        "heat_total_W",
        "gas_flow_ml_min",
    ],
}


def _parse_cell(text: str, column: str, row: int) -> float:
    try:
        return float(text.strip().replace(",", "."))
    except ValueError:
        raise ParseError(
            f"row {row}: cell {text!r} in column {column!r} is not numeric"
        ) from None


def load_experiments(path, setup: Setup) -> list[ExperimentRecord]:
    """Load one setup's experiment table; see module docstring for schemas."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        warnings.warn(f"{path}: empty experiment file, no records loaded")
        return []
    delimiter = ";" if ";" in text.splitlines()[0] else ","
    reader = csv.reader(io.StringIO(text), delimiter=delimiter)
    header = [h.strip() for h in next(reader)]
    expected = _HEADERS[setup]
    missing = [c for c in expected if c not in header]
    if missing:
        raise ParseError(f"{path}: missing column(s) {missing}, found header {header}")
    col = {name: header.index(name) for name in expected}

    records = []
    for i, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) < len(header):
            raise ParseError(f"row {i}: expected {len(header)} cells, got {len(row)}")

        def cell(name, i=i, row=row):
            return _parse_cell(row[col[name]], name, i)

        tau = cell("residence_time_s")
        if tau <= 0:
            raise ParseError(f"row {i}: residence time must be positive, got {tau}")
        temperature = cell("temperature_C") + KELVIN_OFFSET
        try:
            if setup is Setup.MIXER:
                record = ExperimentRecord(
                    setup=setup,
                    residence_time=tau,
                    temperature=temperature,
                    gauge_pressure=MIXER_GAUGE_PRESSURE,
                    band_area=cell("band_area_au"),
                )
            else:
                record = ExperimentRecord(
                    setup=setup,
                    residence_time=tau,
                    temperature=temperature,
                    gauge_pressure=cell("pressure_gauge_bar") * BAR,
                    zone_heats=(cell("heat_total_W"),),
                    gas_flow_rate=cell("gas_flow_ml_min"),
                )
        except ValueError as exc:
            raise ParseError(f"row {i}: {exc}") from None
        records.append(record)

    if not records:
        warnings.warn(f"{path}: no data rows, no records loaded")
    return records


def save_experiments(records, path, setup: Setup) -> None:
    """Write records in the canonical comma/point CSV form (round-trippable)."""
    path = Path(path)
    rows = []
    for r in records:
        if r.setup is not setup:
            raise ValueError(f"record setup {r.setup} does not match {setup}")
        if setup is Setup.MIXER:
            rows.append([r.residence_time, r.temperature - KELVIN_OFFSET, r.band_area])
        else:
            rows.append(
                [
                    r.residence_time,
                    r.temperature - KELVIN_OFFSET,
                    r.gauge_pressure / BAR,
                    r.zone_heats[0] if r.zone_heats else "",
                    r.gas_flow_rate,
                ]
            )
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_HEADERS[setup])
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def load_reactor_config(path) -> ReactorConfig:
    """Read a reactor geometry YAML file (keys = ReactorConfig fields)."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: invalid reactor config: {exc}") from None
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: reactor config must be a mapping of fields")
    known = set(ReactorConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ParseError(f"{path}: unknown reactor config keys {sorted(unknown)}")
    try:
        if "zone_bounds" in raw and raw["zone_bounds"] is not None:
            raw["zone_bounds"] = tuple(float(b) for b in raw["zone_bounds"])
        return ReactorConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: invalid reactor config: {exc}") from None


def derive_inputs(record: ExperimentRecord, reactor: ReactorConfig) -> SimulationInputs:
    """Inlet velocity and concentrations for one run.

    The two feeds dilute each other according to the volumetric flow ratio;
    everything enters in the liquid phase, so all non-educt concentrations
    start at zero.
    """
    if record.setup.value != reactor.name:
        raise ValueError(
            f"record setup {record.setup.value!r} does not match reactor {reactor.name!r}"
        )
    r = reactor.feed_flow_ratio
    conc = [0.0] * N_SPECIES
    conc[0] = reactor.feed_concentration_educt_a / (1.0 + r)
    conc[1] = reactor.feed_concentration_educt_b * r / (1.0 + r)
    return SimulationInputs(
        inlet_velocity=reactor.length / record.residence_time,
        inlet_concentrations=tuple(conc),
        absolute_pressure=record.gauge_pressure + ATMOSPHERIC_PRESSURE,
        temperature=record.temperature,
        reactor=reactor,
    )


def _bundled(name: str) -> Path:
    return Path(resources.files("danflow").joinpath("data", name))


def bundled_path(name: str) -> Path:
    """Path of a data file shipped with the package."""
    path = _bundled(name)
    if not path.is_file():
        raise FileNotFoundError(f"no bundled data file named {name!r}")
    return path


def load_bundled_experiments() -> tuple[list[ExperimentRecord], list[ExperimentRecord]]:
    """The shipped mixer and calorimeter datasets (24 and 33 records)."""
    mixer = load_experiments(bundled_path("mixer.csv"), Setup.MIXER)
    calorimeter = load_experiments(bundled_path("calorimeter.csv"), Setup.CALORIMETER)
    return mixer, calorimeter


def load_bundled_reactors() -> dict[Setup, ReactorConfig]:
    return {
        Setup.MIXER: load_reactor_config(bundled_path("mixer_reactor.yaml")),
        Setup.CALORIMETER: load_reactor_config(bundled_path("calorimeter_reactor.yaml")),
    }
