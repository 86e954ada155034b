"""Physical and learning constants for one simulated deployment.

All quantities are stored in linear SI units.  The only place where a
logarithmic unit is converted is :func:`dbm_per_hz_to_watts`, which
:class:`Scenario` uses for its noise density.
"""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

# Path-loss constants, PL(dB) = intercept + distance_slope*log10(d) + freq_slope*log10(f_GHz).
# Swap rows here to try an alternative urban-micro parameterisation.
PATH_LOSS_TABLE: dict[str, tuple[float, float, float]] = {
    "los": (32.4, 21.0, 20.0),
    "nlos": (22.4, 35.3, 21.3),
}


def dbm_per_hz_to_watts(value_dbm_hz: float) -> float:
    return 10.0 ** ((value_dbm_hz - 30.0) / 10.0)


def db_to_linear(value_db: float) -> float:
    return 10.0 ** (value_db / 10.0)


def path_loss_db(distance_m: np.ndarray | float, carrier_hz: float, kind: str) -> np.ndarray:
    """Urban-micro path loss in dB for ``kind`` in ``{"los", "nlos"}``."""
    intercept, dist_slope, freq_slope = PATH_LOSS_TABLE[kind]
    d = np.asarray(distance_m, dtype=float)
    return intercept + dist_slope * np.log10(d) + freq_slope * np.log10(carrier_hz / 1e9)


def default_ris_positions(num_ris: int) -> tuple[tuple[float, float, float], ...]:
    c = math.cos(math.radians(45.0))
    return tuple((100.0 / k * c, 100.0 / k * c, 50.0) for k in range(1, num_ris + 1))


@dataclass(frozen=True)
class Scenario:
    """Every constant a round needs.

    Defaults reproduce the reference deployment: 100 mW users, 1 MHz of
    uplink bandwidth, -104 dBm/Hz noise, 3 GHz carrier, 128 elements per
    RIS, theta = 0.1, v = 1, 2 GHz CPUs and 200 kbit of local data.
    Values the reference deployment leaves open (threshold, cycles per
    bit, blockage, Rician factor) are documented in the README.
    """

    num_users: int = 8
    num_ris: int = 2
    elements_per_ris: int | tuple[int, ...] = 128
    tx_power: float = 0.1
    bandwidth: float = 1e6
    noise_density_dbm_hz: float = -104.0
    snr_threshold_db: float = -60.0
    carrier_freq: float = 3e9
    bs_position: tuple[float, float, float] = (0.0, 0.0, 100.0)
    ris_positions: tuple[tuple[float, float, float], ...] | None = None
    user_area: tuple[float, float, float, float] = (0.0, 50.0, 0.0, 50.0)
    user_height: float = 0.0
    rician_k_db: float = 10.0
    direct_blockage_db: float = 30.0
    rng_seed: int = 0
    # computation / FL latency
    cycles_per_bit: float = 100.0
    cpu_freq: float = 2e9
    sample_bits: float = 200e3
    local_accuracy: float = 0.1
    iteration_constant: float = 1.0
    model_bits: float | None = None
    # request inference
    request_prob: float = 1.0
    detector_accuracy: float | None = None
    # learner
    window: int = 32
    hidden_units: int = 64
    features: str = "spectrum"
    learning_rate: float = 0.05
    local_epochs: int = 1
    batch_size: int = 32
    samples_per_class: int = 600
    data_users: int | None = None

    def __post_init__(self) -> None:
        if self.num_users < 0 or self.num_ris < 0:
            raise ValueError("num_users and num_ris must be non-negative")
        elems = self.elements
        if len(elems) != self.num_ris:
            raise ValueError(
                f"elements_per_ris has {len(elems)} entries for {self.num_ris} RISs"
            )
        if any(n <= 0 for n in elems):
            raise ValueError("elements_per_ris must be positive")
        for name in ("tx_power", "bandwidth", "carrier_freq", "cpu_freq",
                     "cycles_per_bit", "sample_bits", "iteration_constant"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if not 0.0 < self.local_accuracy < 1.0:
            raise ValueError("local_accuracy must lie in (0, 1)")
        if not 0.0 <= self.request_prob <= 1.0:
            raise ValueError("request_prob must lie in [0, 1]")
        if self.detector_accuracy is not None and not 0.0 < self.detector_accuracy <= 1.0:
            raise ValueError("detector_accuracy must lie in (0, 1]")
        if self.ris_positions is not None and len(self.ris_positions) != self.num_ris:
            raise ValueError("ris_positions must list one position per RIS")
        if self.features not in ("spectrum", "iq"):
            raise ValueError("features must be 'spectrum' or 'iq'")

    @property
    def elements(self) -> tuple[int, ...]:
        if isinstance(self.elements_per_ris, int):
            return (self.elements_per_ris,) * self.num_ris
        return tuple(int(n) for n in self.elements_per_ris)

    @property
    def noise_density(self) -> float:
        """Noise power spectral density in W/Hz."""
        return dbm_per_hz_to_watts(self.noise_density_dbm_hz)

    @property
    def snr_threshold(self) -> float:
        """Linear SNR threshold gamma_T."""
        return db_to_linear(self.snr_threshold_db)

    @property
    def ris_locations(self) -> np.ndarray:
        pos = self.ris_positions or default_ris_positions(self.num_ris)
        return np.asarray(pos, dtype=float).reshape(self.num_ris, 3)

    @property
    def input_dim(self) -> int:
        return self.window if self.features == "spectrum" else 2 * self.window

    @property
    def num_params(self) -> int:
        h = self.hidden_units
        return self.input_dim * h + h + h * 4 + 4

    @property
    def upload_bits(self) -> float:
        """Size of one local model upload; 32 bits per parameter unless overridden."""
        if self.model_bits is not None:
            return float(self.model_bits)
        return 32.0 * self.num_params

    def replace(self, **changes: Any) -> "Scenario":
        if "num_ris" in changes and "ris_positions" not in changes:
            changes["ris_positions"] = None
        if ("num_ris" in changes and isinstance(self.elements_per_ris, tuple)
                and "elements_per_ris" not in changes):
            changes["elements_per_ris"] = self.elements_per_ris[0]
        return dataclasses.replace(self, **changes)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Scenario)}


def coerce_field(name: str, raw: str) -> Any:
    """Parse the text value ``raw`` for scenario field ``name``."""
    if name not in _FIELD_TYPES:
        raise KeyError(f"unknown scenario field {name!r}")
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if name == "elements_per_ris":
        parts = [p for p in raw.replace(";", ",").split(",") if p.strip()]
        vals = tuple(int(p) for p in parts)
        return vals[0] if len(vals) == 1 else vals
    if name in ("bs_position", "user_area"):
        return tuple(float(p) for p in raw.split(","))
    if name == "ris_positions":
        return tuple(tuple(float(c) for c in p.split(",")) for p in raw.split(";"))
    if name == "features":
        return raw
    annotation = str(_FIELD_TYPES[name])
    if annotation.startswith("int"):
        return int(raw)
    return float(raw)


def load_scenario(path: str | Path, base: Scenario | None = None) -> Scenario:
    """Read the ``[scenario]`` section of a ``key = value`` config file.

    Unknown keys raise ``KeyError`` naming the key.  Other sections are
    ignored, so one file can also carry run settings.
    """
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    values: dict[str, Any] = {}
    if parser.has_section("scenario"):
        for key, raw in parser.items("scenario"):
            values[key] = coerce_field(key, raw)
    base = base or Scenario()
    return base.replace(**values)


def scenario_to_config(scenario: Scenario) -> str:
    lines = ["[scenario]"]
    for f in dataclasses.fields(Scenario):
        value = getattr(scenario, f.name)
        if value is None:
            text = "none"
        elif f.name == "ris_positions":
            text = ";".join(",".join(repr(float(c)) for c in p) for p in value)
        elif isinstance(value, tuple):
            text = ",".join(repr(v) for v in value)
        else:
            text = repr(value) if not isinstance(value, str) else value
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"

