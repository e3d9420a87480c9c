"""Frequency-domain farm power model.

Each buoy contributes one heave degree of freedom. For every spectral
component the complex velocity amplitudes ``X`` solve

    (j*omega*(M + A) + B + B_pto - j*K_pto/omega) X = F

and the absorbed power of the array is

    P = 1/4 (F^H X + X^H F) - 1/2 X^H B X,

which equals 1/2 X^H B_pto X whenever ``X`` solves the system. Farm power is
the probability- and weight-averaged sum of ``P`` over the spectrum.

The hydrodynamic coefficients come from a deliberately simple provider:
diagonal added mass, a ``sinc(k d)`` radiation-damping kernel (positive
semidefinite for any planar layout) and plane-wave excitation phases.
"""

from __future__ import annotations

import json
import math
import threading
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import EvaluationResult, FarmGeometry, Layout, pairwise_distances, penalty, violation_sum
from .errors import BudgetExhausted, ConfigurationError, InvalidArgument, NumericFailure

CONDITION_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-8
BUNDLED_SCENARIOS = ("sydney-like", "perth-like", "adelaide-like", "tasmania-like")


@dataclass(frozen=True)
class SpectralComponent:
    omega: float
    weight: float
    direction: float  # radians
    probability: float

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidArgument(f"omega must be positive, got {self.omega}")
        if not self.weight > 0:
            raise InvalidArgument(f"spectral weight must be positive, got {self.weight}")
        if not 0.0 <= self.probability <= 1.0:
            raise InvalidArgument(f"probability must lie in [0, 1], got {self.probability}")


@dataclass(frozen=True)
class BuoyParams:
    mass: float = 376_000.0
    volume: float = 523.60
    radius: float = 5.0
    submergence: float = 3.0

    def __post_init__(self):
        for name in ("mass", "volume", "radius", "submergence"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"buoy {name} must be positive")
        sphere = 4.0 / 3.0 * math.pi * self.radius**3
        if abs(self.volume - sphere) > 0.01 * sphere:
            warnings.warn(
                f"buoy volume {self.volume} m^3 differs from a sphere of radius "
                f"{self.radius} m ({sphere:.2f} m^3) by more than 1%",
                stacklevel=3,
            )


@dataclass(frozen=True)
class PTOParams:
    damping: float
    stiffness: float = 0.0

    def __post_init__(self):
        if not self.damping > 0:
            raise InvalidArgument(f"PTO damping must be positive, got {self.damping}")
        if self.stiffness < 0:
            raise InvalidArgument(f"PTO stiffness must be non-negative, got {self.stiffness}")


@dataclass(frozen=True)
class WaveScenario:
    name: str
    components: tuple[SpectralComponent, ...]
    buoy: BuoyParams = field(default_factory=BuoyParams)
    pto: PTOParams | None = None  # None: tuned to the peak-weight frequency
    depth: float = 30.0
    gravity: float = 9.81
    rho: float = 1025.0
    c_b: float = 0.05
    c_e: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        if not self.depth > 0:
            raise InvalidArgument(f"depth must be positive, got {self.depth}")
        if self.components:
            probs = {}
            for c in self.components:
                known = probs.setdefault(c.direction, c.probability)
                if known != c.probability:
                    raise InvalidArgument(
                        f"direction {math.degrees(c.direction):.6g} deg carries "
                        "inconsistent probabilities"
                    )
            total = sum(probs.values())
            if abs(total - 1.0) > 1e-9:
                raise InvalidArgument(f"direction probabilities sum to {total}, expected 1")

    @property
    def added_mass(self) -> float:
        return 0.5 * self.rho * self.buoy.volume

    @property
    def peak_omega(self) -> float:
        weights = [c.weight for c in self.components]
        return self.components[int(np.argmax(weights))].omega

    @cached_property
    def pto_params(self) -> PTOParams:
        if self.pto is not None:
            return self.pto
        if not self.components:
            raise InvalidArgument("automatic PTO tuning needs at least one spectral component")
        wp = self.peak_omega
        k = wavenumber(wp, self.depth, self.gravity)
        return PTOParams(
            damping=float(radiation_damping_coefficient(wp, k, self)),
            stiffness=wp**2 * (self.buoy.mass + self.added_mass),
        )

    @cached_property
    def _spectrum(self):
        """Arrays grouped for the vectorized solve; computed once per scenario."""
        if not self.components:
            return None
        omegas = np.array([c.omega for c in self.components])
        uniq, fidx = np.unique(omegas, return_inverse=True)
        k = np.array([wavenumber(w, self.depth, self.gravity) for w in uniq])
        pto = self.pto_params
        b = radiation_damping_coefficient(uniq, k, self)
        fe = excitation_amplitude(k, self)
        zdiag = (
            1j * uniq * (self.buoy.mass + self.added_mass)
            + pto.damping
            - 1j * pto.stiffness / uniq
        )
        beta = np.array([c.direction for c in self.components])
        scale = np.array([c.weight * c.probability for c in self.components])
        return {
            "omega": uniq,
            "k": k,
            "b": b,
            "fe": fe,
            "zdiag": zdiag,
            "fidx": fidx,
            "cos": np.cos(beta),
            "sin": np.sin(beta),
            "scale": scale,
        }

    def min_wavelength(self) -> float:
        return min(2 * math.pi / wavenumber(c.omega, self.depth, self.gravity) for c in self.components)

    def max_wavelength(self) -> float:
        return max(2 * math.pi / wavenumber(c.omega, self.depth, self.gravity) for c in self.components)


@dataclass(frozen=True)
class HydroCoefficients:
    added_mass: np.ndarray
    radiation_damping: np.ndarray
    excitation: np.ndarray

    def __post_init__(self):
        a, b, f = self.added_mass, self.radiation_damping, self.excitation
        n = f.shape[0]
        if a.shape != (n, n) or b.shape != (n, n):
            raise InvalidArgument("coefficient dimensions disagree")
        if not (np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max()))
                and np.allclose(b, b.T, rtol=0, atol=1e-12 * max(1.0, np.abs(b).max()))):
            raise InvalidArgument("added mass and radiation damping must be symmetric")
        if n and np.linalg.eigvalsh(b).min() < -1e-8 * np.linalg.norm(b, 2):
            raise InvalidArgument("radiation damping is not positive semidefinite")


@dataclass(frozen=True)
class ComplexResponse:
    velocity: np.ndarray
    residual_norm: float


def wavenumber(omega: float, depth: float, gravity: float = 9.81) -> float:
    """Solve the linear dispersion relation ``omega^2 = g k tanh(k h)`` for k."""
    if not omega > 0 or not depth > 0:
        raise InvalidArgument("omega and depth must be positive")
    target = omega * omega / gravity
    # k*tanh(k*h) is increasing in k; the solution lies between target and
    # the shallow-water estimate, whichever is larger.
    k = max(target, omega / math.sqrt(gravity * depth))
    for _ in range(200):
        th = math.tanh(k * depth)
        f = k * th - target
        df = th + k * depth * (1.0 - th * th)
        step = f / df
        k_new = k - step
        if k_new <= 0:
            k_new = 0.5 * k
        if abs(k_new - k) <= 1e-14 * k_new:
            return k_new
        k = k_new
    raise NumericFailure(f"dispersion relation did not converge for omega={omega}")


def radiation_damping_coefficient(omega, k, scenario: WaveScenario):
    buoy = scenario.buoy
    return scenario.c_b * scenario.rho * buoy.volume * omega * np.exp(-2.0 * k * buoy.submergence)


def excitation_amplitude(k, scenario: WaveScenario):
    buoy = scenario.buoy
    return (
        scenario.c_e * scenario.rho * scenario.gravity * math.pi * buoy.radius**2
        * np.exp(-k * buoy.submergence)
    )


def _sinc(x):
    # np.sinc is the normalized sin(pi x)/(pi x)
    return np.sinc(x / math.pi)


def assemble_coefficients(layout, component: SpectralComponent, scenario: WaveScenario) -> HydroCoefficients:
    p = np.asarray(layout, dtype=float).reshape(-1, 2)
    if p.shape[0] == 0:
        raise InvalidArgument("cannot assemble coefficients for an empty layout")
    k = wavenumber(component.omega, scenario.depth, scenario.gravity)
    n = p.shape[0]
    a = np.eye(n) * scenario.added_mass
    b = radiation_damping_coefficient(component.omega, k, scenario) * _sinc(k * pairwise_distances(p))
    phase = k * (p[:, 0] * math.cos(component.direction) + p[:, 1] * math.sin(component.direction))
    f = excitation_amplitude(k, scenario) * np.exp(-1j * phase)
    return HydroCoefficients(a, b, f)


def solve_response(coeffs: HydroCoefficients, pto: PTOParams, buoy_mass: float, omega: float) -> ComplexResponse:
    n = coeffs.excitation.shape[0]
    eye = np.eye(n)
    z = (
        1j * omega * (buoy_mass * eye + coeffs.added_mass)
        + coeffs.radiation_damping
        + pto.damping * eye
        - 1j * (pto.stiffness / omega) * eye
    )
    cond = np.linalg.cond(z)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise NumericFailure(f"ill-conditioned response system (cond={cond:.3g})")
    x = np.linalg.solve(z, coeffs.excitation)
    fnorm = np.linalg.norm(coeffs.excitation)
    res = np.linalg.norm(z @ x - coeffs.excitation) / fnorm if fnorm > 0 else 0.0
    if res > RESIDUAL_LIMIT:
        raise NumericFailure(f"response residual {res:.3g} exceeds {RESIDUAL_LIMIT}")
    return ComplexResponse(x, float(res))


def component_power(coeffs: HydroCoefficients, response: ComplexResponse, pto: PTOParams | None = None) -> float:
    """Absorbed power of one spectral component from the excitation/radiation balance."""
    f, x = coeffs.excitation, response.velocity
    p = 0.25 * (np.vdot(f, x) + np.vdot(x, f)) - 0.5 * np.vdot(x, coeffs.radiation_damping @ x)
    return float(p.real)


def pto_power(response: ComplexResponse, pto: PTOParams) -> np.ndarray:
    """Per-DOF power dissipated in the PTO dampers, ``1/2 B_pto |X_i|^2``."""
    return 0.5 * pto.damping * np.abs(response.velocity) ** 2


class CallCounter:
    """Thread-safe monotone count of simulator invocations with an optional cap."""

    def __init__(self, limit: int | None = None):
        self._lock = threading.Lock()
        self._count = 0
        self.limit = limit

    @property
    def count(self) -> int:
        return self._count

    @property
    def remaining(self) -> int | None:
        return None if self.limit is None else self.limit - self._count

    def charge(self) -> int:
        with self._lock:
            if self.limit is not None and self._count >= self.limit:
                raise BudgetExhausted(self.limit)
            self._count += 1
            return self._count


def _farm_response(p: np.ndarray, scenario: WaveScenario):
    spec = scenario._spectrum
    d = pairwise_distances(p)
    n = p.shape[0]
    k = spec["k"]
    bmat = spec["b"][:, None, None] * _sinc(k[:, None, None] * d[None])
    z = bmat + spec["zdiag"][:, None, None] * np.eye(n)[None]
    fidx = spec["fidx"]
    kc = k[fidx]
    phase = kc[:, None] * (np.outer(spec["cos"], p[:, 0]) + np.outer(spec["sin"], p[:, 1]))
    f = spec["fe"][fidx][:, None] * np.exp(-1j * phase)
    zc = z[fidx]
    # Re(Z) = B + B_pto I with B PSD, so sigma_min(Z) >= B_pto.
    pto = scenario.pto_params
    cond_bound = np.linalg.norm(z, axis=(1, 2)) / pto.damping
    if np.any(cond_bound > CONDITION_LIMIT):
        for i in np.flatnonzero(cond_bound > CONDITION_LIMIT):
            if np.linalg.cond(z[i]) > CONDITION_LIMIT:
                c = int(np.flatnonzero(fidx == i)[0])
                raise NumericFailure("ill-conditioned response system",
                                     scenario.components[c].omega, scenario.components[c].direction)
    x = np.linalg.solve(zc, f[:, :, None])[:, :, 0]
    res = np.linalg.norm(np.einsum("cij,cj->ci", zc, x) - f, axis=1) / np.linalg.norm(f, axis=1)
    bad = np.flatnonzero(~(res <= RESIDUAL_LIMIT))
    if bad.size:
        c = scenario.components[int(bad[0])]
        raise NumericFailure(f"response residual {res[bad[0]]:.3g} too large", c.omega, c.direction)
    return bmat[fidx], f, x


def _farm_power_arrays(p: np.ndarray, scenario: WaveScenario):
    if p.shape[0] == 0:
        raise InvalidArgument("farm power needs a nonempty layout")
    if scenario._spectrum is None:
        return 0.0, np.zeros(p.shape[0])
    bmat, f, x = _farm_response(p, scenario)
    spec = scenario._spectrum
    fx = np.einsum("ci,ci->c", f.conj(), x)
    xbx = np.einsum("ci,cij,cj->c", x.conj(), bmat, x)
    per_component = 0.5 * fx.real - 0.5 * xbx.real
    total = float(np.dot(spec["scale"], per_component))
    per_buoy = 0.5 * scenario.pto_params.damping * (spec["scale"] @ (np.abs(x) ** 2))
    return total, per_buoy


def farm_power(layout, scenario: WaveScenario, counter: CallCounter | None = None) -> float:
    """Spectrum-averaged absorbed power of the whole farm in watts.

    Charges ``counter`` exactly once per call.
    """
    p = np.asarray(layout, dtype=float).reshape(-1, 2)
    if counter is not None:
        counter.charge()
    return _farm_power_arrays(p, scenario)[0]


def farm_power_breakdown(layout, scenario: WaveScenario, counter: CallCounter | None = None):
    """Farm power plus the per-buoy PTO power attribution (one simulator call)."""
    p = np.asarray(layout, dtype=float).reshape(-1, 2)
    if counter is not None:
        counter.charge()
    return _farm_power_arrays(p, scenario)


def evaluate(layout, scenario: WaveScenario, geometry: FarmGeometry,
             counter: CallCounter | None = None) -> EvaluationResult:
    """Penalized farm objective: raw power minus the spacing penalty."""
    p = np.asarray(layout, dtype=float).reshape(-1, 2)
    raw, per_buoy = farm_power_breakdown(p, scenario, counter)
    viol = violation_sum(p, geometry.min_distance)
    pen = penalty(viol)
    return EvaluationResult(raw, viol, pen, raw - pen, 1, per_buoy)


class Simulator:
    """Binds a scenario, a farm geometry and a call counter into one evaluator."""

    def __init__(self, scenario: WaveScenario, geometry: FarmGeometry, counter: CallCounter | None = None):
        self.scenario = scenario
        self.geometry = geometry
        self.counter = counter if counter is not None else CallCounter()

    @property
    def calls(self) -> int:
        return self.counter.count

    def evaluate(self, layout) -> EvaluationResult:
        return evaluate(layout, self.scenario, self.geometry, self.counter)

    def objective(self, vec) -> float:
        """Penalized power of a flat genome; the callable handed to the EAs."""
        return self.evaluate(np.asarray(vec, dtype=float).reshape(-1, 2)).objective


# ---------------------------------------------------------------- scenario files

def _req(d, key, where):
    if key not in d:
        raise ConfigurationError("missing required field", f"{where}{key}")
    return d[key]


def _num(d, key, where, default=None):
    if key not in d:
        if default is None:
            raise ConfigurationError("missing required field", f"{where}{key}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigurationError(f"expected a number, got {v!r}", f"{where}{key}")
    return float(v)


def scenario_from_dict(data: dict) -> WaveScenario:
    if not isinstance(data, dict):
        raise ConfigurationError("scenario document must be a JSON object")
    name = _req(data, "name", "")
    if not isinstance(name, str):
        raise ConfigurationError("expected a string", "name")
    try:
        buoy_d = data.get("buoy", {})
        if not isinstance(buoy_d, dict):
            raise ConfigurationError("expected an object", "buoy")
        defaults = BuoyParams()
        buoy = BuoyParams(
            mass=_num(buoy_d, "mass", "buoy.", defaults.mass),
            volume=_num(buoy_d, "volume", "buoy.", defaults.volume),
            radius=_num(buoy_d, "radius", "buoy.", defaults.radius),
            submergence=_num(buoy_d, "submergence", "buoy.", defaults.submergence),
        )
    except InvalidArgument as exc:
        raise ConfigurationError(str(exc), "buoy") from exc
    pto_d = data.get("pto", "auto")
    pto = None
    if pto_d != "auto":
        if not isinstance(pto_d, dict):
            raise ConfigurationError("expected \"auto\" or an object", "pto")
        try:
            pto = PTOParams(_num(pto_d, "damping", "pto."), _num(pto_d, "stiffness", "pto.", 0.0))
        except InvalidArgument as exc:
            raise ConfigurationError(str(exc), "pto") from exc
    comps_d = _req(data, "components", "")
    if not isinstance(comps_d, list):
        raise ConfigurationError("expected a list", "components")
    comps = []
    for i, c in enumerate(comps_d):
        where = f"components[{i}]."
        if not isinstance(c, dict):
            raise ConfigurationError("expected an object", f"components[{i}]")
        try:
            comps.append(SpectralComponent(
                omega=_num(c, "omega", where),
                weight=_num(c, "weight", where),
                direction=math.radians(_num(c, "direction_deg", where)),
                probability=_num(c, "probability", where),
            ))
        except InvalidArgument as exc:
            raise ConfigurationError(str(exc), f"components[{i}]") from exc
    try:
        return WaveScenario(
            name=name,
            components=tuple(comps),
            buoy=buoy,
            pto=pto,
            depth=_num(data, "depth", "", 30.0),
            gravity=_num(data, "gravity", "", 9.81),
            rho=_num(data, "rho", "", 1025.0),
            c_b=_num(data, "c_b", "", 0.05),
            c_e=_num(data, "c_e", "", 0.2),
        )
    except InvalidArgument as exc:
        field_name = "components" if "probabilit" in str(exc) or "direction" in str(exc) else "depth"
        raise ConfigurationError(str(exc), field_name) from exc


def scenario_to_dict(scenario: WaveScenario) -> dict:
    b = scenario.buoy
    out = {
        "name": scenario.name,
        "depth": scenario.depth,
        "gravity": scenario.gravity,
        "rho": scenario.rho,
        "buoy": {"mass": b.mass, "volume": b.volume, "radius": b.radius, "submergence": b.submergence},
        "pto": "auto" if scenario.pto is None else {
            "damping": scenario.pto.damping, "stiffness": scenario.pto.stiffness},
        "c_b": scenario.c_b,
        "c_e": scenario.c_e,
        "components": [
            {"omega": c.omega, "weight": c.weight,
             "direction_deg": math.degrees(c.direction), "probability": c.probability}
            for c in scenario.components
        ],
    }
    return out


def load_scenario(source) -> WaveScenario:
    """Load a scenario from a JSON file path or a bundled scenario name."""
    name = str(source)
    if name in BUNDLED_SCENARIOS:
        text = resources.files("wecfarm.scenarios").joinpath(f"{name}.json").read_text()
    else:
        path = Path(source)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read scenario file: {exc.strerror}", str(path)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"invalid JSON at line {exc.lineno}: {exc.msg}", name) from exc
    return scenario_from_dict(data)


def with_components(scenario: WaveScenario, components: Sequence[SpectralComponent]) -> WaveScenario:
    """Copy of ``scenario`` with a different spectrum and the same resolved PTO."""
    return replace(scenario, components=tuple(components), pto=scenario.pto_params)
