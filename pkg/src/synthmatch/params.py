"""Synthesizer parameter space.

Five nested tiers of a subtractive synthesizer, each a strict superset of
the one below:

    t15  oscillator mix, detune, cutoff/resonance, amp ADSR,
         filter-envelope amount, reverb, output gain
    t18  + unison (voices, spread), noise floor
    t24  + pulse width, filter slope, full filter ADSR
    t28  + 2-band parametric EQ
    t29  + distortion drive, delay feedback, vibrato depth

Tier labels follow the published ablation naming; the t29 label keeps its
name even though it actually carries 31 parameters (the ablation's
parameter arithmetic is not self-consistent, so dimensions here are fixed
at 15/18/24/28/31).

The optimizer works on normalized vectors in [0,1]^D; this module owns the
bidirectional mapping to physical units and preset persistence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

PRESET_FORMAT_VERSION = 1

TIER_LABELS = ("t15", "t18", "t24", "t28", "t29")


class ParamError(ValueError):
    """Raised for invalid vectors, patches, or preset files."""


@dataclass(frozen=True)
class ParamSpec:
    """One physical parameter: its range, scaling, and unit."""

    name: str
    lo: float
    hi: float
    scale: str = "linear"  # "linear" | "log"
    unit: str = ""
    integer: bool = False  # integerized by rounding after denormalization

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ParamError(f"{self.name}: lo must be < hi")
        if self.scale == "log" and self.lo <= 0:
            raise ParamError(f"{self.name}: log scale requires lo > 0")
        if self.scale not in ("linear", "log"):
            raise ParamError(f"{self.name}: unknown scale {self.scale!r}")

    def to_physical(self, x):
        """Map normalized x in [0,1] to a physical value (vectorized)."""
        if self.scale == "log":
            v = self.lo * (self.hi / self.lo) ** np.asarray(x, dtype=float)
        else:
            v = self.lo + np.asarray(x, dtype=float) * (self.hi - self.lo)
        if self.integer:
            v = np.clip(np.rint(v), self.lo, self.hi)
        return v

    def to_normalized(self, v):
        """Inverse of to_physical, clamped to [0,1]."""
        v = np.asarray(v, dtype=float)
        if self.scale == "log":
            x = np.log(v / self.lo) / np.log(self.hi / self.lo)
        else:
            x = (v - self.lo) / (self.hi - self.lo)
        return np.clip(x, 0.0, 1.0)

    def contains(self, v: float) -> bool:
        return self.lo <= v <= self.hi


# Canonical parameter inventory in canonical order. Second element is the
# lowest tier that carries the parameter.
_SECONDS = dict(scale="log", unit="s")
_INVENTORY: tuple[tuple[ParamSpec, str], ...] = (
    (ParamSpec("osc_mix_saw", 0.0, 1.0), "t15"),
    (ParamSpec("osc_mix_pulse", 0.0, 1.0), "t15"),
    (ParamSpec("osc_mix_sine", 0.0, 1.0), "t15"),
    (ParamSpec("osc_mix_noise", 0.0, 1.0), "t15"),
    (ParamSpec("detune", -2.0, 2.0, unit="st"), "t15"),
    (ParamSpec("cutoff", 20.0, 16000.0, scale="log", unit="Hz"), "t15"),
    (ParamSpec("resonance", 0.0, 1.0), "t15"),
    (ParamSpec("slope", 4.0, 48.0), "t24"),
    (ParamSpec("filter_attack", 0.001, 2.0, **_SECONDS), "t24"),
    (ParamSpec("filter_decay", 0.001, 2.0, **_SECONDS), "t24"),
    (ParamSpec("filter_sustain", 0.0, 1.0), "t24"),
    (ParamSpec("filter_release", 0.001, 2.0, **_SECONDS), "t24"),
    (ParamSpec("filter_env_amount", 0.0, 2.0), "t15"),
    (ParamSpec("amp_attack", 0.001, 2.0, **_SECONDS), "t15"),
    (ParamSpec("amp_decay", 0.001, 2.0, **_SECONDS), "t15"),
    (ParamSpec("amp_sustain", 0.0, 1.0), "t15"),
    (ParamSpec("amp_release", 0.001, 2.0, **_SECONDS), "t15"),
    (ParamSpec("eq1_freq", 200.0, 10000.0, scale="log", unit="Hz"), "t28"),
    (ParamSpec("eq1_gain", -6.0, 6.0, unit="dB"), "t28"),
    (ParamSpec("eq2_freq", 200.0, 10000.0, scale="log", unit="Hz"), "t28"),
    (ParamSpec("eq2_gain", -6.0, 6.0, unit="dB"), "t28"),
    (ParamSpec("pulse_width", 0.05, 0.95), "t24"),
    (ParamSpec("unison_voices", 1.0, 7.0, integer=True), "t18"),
    (ParamSpec("unison_spread", 0.0, 0.5, unit="st"), "t18"),
    (ParamSpec("noise_floor", 0.0, 0.2), "t18"),
    (ParamSpec("reverb_size", 0.0, 1.0), "t15"),
    (ParamSpec("reverb_mix", 0.0, 0.5), "t15"),
    (ParamSpec("distortion_drive", 1.0, 20.0), "t29"),
    (ParamSpec("delay_feedback", 0.0, 0.95), "t29"),
    (ParamSpec("vibrato_depth", 0.0, 1.0, unit="st"), "t29"),
    (ParamSpec("output_gain", 0.0, 1.0), "t15"),
)

# Values used by the renderer for parameters a tier does not expose.
RENDER_DEFAULTS: dict[str, float] = {
    "slope": 24.0,
    "filter_attack": 0.001,
    "filter_decay": 0.15,
    "filter_sustain": 0.4,
    "filter_release": 0.1,
    "eq1_freq": 1000.0,
    "eq1_gain": 0.0,
    "eq2_freq": 5000.0,
    "eq2_gain": 0.0,
    "pulse_width": 0.5,
    "unison_voices": 1.0,
    "unison_spread": 0.0,
    "noise_floor": 0.0,
    "distortion_drive": 0.0,  # renderer skips distortion below t29
    "delay_feedback": 0.0,
    "vibrato_depth": 0.0,
}


@dataclass(frozen=True)
class Tier:
    """A tier label with its ordered parameter specs."""

    label: str
    specs: tuple[ParamSpec, ...]
    names: tuple[str, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(s.name for s in self.specs))

    @property
    def dimension(self) -> int:
        return len(self.specs)

    def spec(self, name: str) -> ParamSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __str__(self):
        return self.label


def _build_tiers() -> dict[str, Tier]:
    rank = {label: i for i, label in enumerate(TIER_LABELS)}
    tiers = {}
    for label in TIER_LABELS:
        specs = tuple(s for s, first in _INVENTORY if rank[first] <= rank[label])
        tiers[label] = Tier(label, specs)
    return tiers


TIERS: dict[str, Tier] = _build_tiers()


def get_tier(tier) -> Tier:
    """Accept a Tier or a label like 't28' (case-insensitive)."""
    if isinstance(tier, Tier):
        return tier
    label = str(tier).lower()
    if label not in TIERS:
        raise ParamError(f"unknown tier {tier!r}; expected one of {TIER_LABELS}")
    return TIERS[label]


@dataclass
class Patch:
    """Physical-unit parameter values for one tier."""

    tier: Tier
    values: dict[str, float]

    def __getitem__(self, name: str) -> float:
        return self.values[name]

    def get(self, name: str, default: float | None = None) -> float:
        """Value if the tier carries the parameter, else the render default."""
        if name in self.values:
            return self.values[name]
        if default is not None:
            return default
        return RENDER_DEFAULTS[name]

    def replace(self, **changes) -> "Patch":
        vals = dict(self.values)
        for k, v in changes.items():
            if k not in vals:
                raise ParamError(f"{k!r} is not a {self.tier} parameter")
            vals[k] = float(v)
        return Patch(self.tier, vals)

    def validate(self):
        for s in self.tier.specs:
            if s.name not in self.values:
                raise ParamError(f"missing parameter {s.name!r}")
            if not s.contains(self.values[s.name]):
                raise ParamError(
                    f"{s.name} = {self.values[s.name]} outside [{s.lo}, {s.hi}]"
                )
        extra = set(self.values) - set(self.tier.names)
        if extra:
            raise ParamError(f"unknown parameters for {self.tier}: {sorted(extra)}")


def check_vector(v, tier) -> np.ndarray:
    """Validate shape and bounds of a normalized vector; returns float64 copy."""
    tier = get_tier(tier)
    v = np.asarray(v, dtype=float)
    if v.shape != (tier.dimension,):
        raise ParamError(
            f"vector has shape {v.shape}, {tier.label} expects ({tier.dimension},)"
        )
    if not np.all((v >= 0.0) & (v <= 1.0)):
        raise ParamError("vector entries must lie in [0, 1]")
    return v.copy()


def denormalize(v, tier) -> Patch:
    """Map a normalized vector in [0,1]^D to a physical Patch."""
    tier = get_tier(tier)
    v = check_vector(v, tier)
    values = {}
    for spec, x in zip(tier.specs, v):
        values[spec.name] = float(spec.to_physical(x))
    return Patch(tier, values)


def normalize(patch: Patch, *, return_clamped: bool = False):
    """Map a Patch back to its normalized vector, clamping out-of-range values.

    Clamped coordinates trigger a UserWarning; pass return_clamped=True to
    also get the list of clamped parameter names.
    """
    tier = patch.tier
    out = np.empty(tier.dimension)
    clamped = []
    for i, spec in enumerate(tier.specs):
        if spec.name not in patch.values:
            raise ParamError(f"missing parameter {spec.name!r}")
        v = patch.values[spec.name]
        if not spec.contains(v):
            clamped.append(spec.name)
        out[i] = float(spec.to_normalized(v))
    if clamped:
        warnings.warn(f"clamped out-of-range parameters: {clamped}", stacklevel=2)
    if return_clamped:
        return out, clamped
    return out


def denormalize_rows(X: np.ndarray, tier) -> dict[str, np.ndarray]:
    """Vectorized denormalization of a (B, D) population.

    Returns one (B,) physical array per parameter name, using the same
    per-coordinate formulas as denormalize so a row matches the scalar path
    bit for bit.
    """
    tier = get_tier(tier)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != tier.dimension:
        raise ParamError(
            f"population has shape {X.shape}, expected (B, {tier.dimension})"
        )
    if not np.all((X >= 0.0) & (X <= 1.0)):
        raise ParamError("population entries must lie in [0, 1]")
    return {spec.name: spec.to_physical(X[:, i]) for i, spec in enumerate(tier.specs)}


def patch_to_rows(patch: Patch) -> dict[str, np.ndarray]:
    """A Patch as single-row parameter arrays (the renderer's input form)."""
    patch.validate()
    return {name: np.array([patch.values[name]]) for name in patch.tier.names}


# ---------------------------------------------------------------------------
# Preset files: versioned key/value text, one parameter per line in
# canonical order. Unknown keys are rejected.
# ---------------------------------------------------------------------------

def preset_text(patch: Patch) -> str:
    patch.validate()
    lines = [f"format_version {PRESET_FORMAT_VERSION}", f"tier {patch.tier.label}"]
    for name in patch.tier.names:
        lines.append(f"{name} {patch.values[name]!r}")
    return "\n".join(lines) + "\n"


def save_preset(patch: Patch, path):
    with open(path, "w") as fh:
        fh.write(preset_text(patch))


def load_preset(path) -> Patch:
    with open(path) as fh:
        raw = fh.read()
    entries = {}
    for ln, line in enumerate(raw.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        if len(parts) != 2:
            raise ParamError(f"line {ln}: expected 'key value', got {line!r}")
        key, value = parts
        if key in entries:
            raise ParamError(f"line {ln}: duplicate key {key!r}")
        entries[key] = value

    version = entries.pop("format_version", None)
    if version is None:
        raise ParamError("missing field 'format_version'")
    if version != str(PRESET_FORMAT_VERSION):
        raise ParamError(
            f"format_version {version} not supported (expected {PRESET_FORMAT_VERSION})"
        )
    label = entries.pop("tier", None)
    if label is None:
        raise ParamError("missing field 'tier'")
    if label not in TIERS:
        raise ParamError(f"unknown tier label {label!r}")
    tier = TIERS[label]

    values = {}
    for name in tier.names:
        if name not in entries:
            raise ParamError(f"missing field {name!r}")
        try:
            values[name] = float(entries.pop(name))
        except ValueError as exc:
            raise ParamError(f"field {name!r}: {exc}") from None
    if entries:
        raise ParamError(f"unknown keys: {sorted(entries)}")
    patch = Patch(tier, values)
    patch.validate()
    return patch
