"""Flat key=value run-configuration files.

One assignment per line; ``#`` starts a comment; keys address sampler
fields directly (``n_mc``), nested blocks with a dotted prefix
(``chmc_z.epsilon``, ``priors.s2``) and scene-generation fields with a
``synth.`` prefix.  Unknown keys and malformed values are reported with
their line number, and every file that parses yields a config satisfying
all invariants.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .chmc import ChmcConfig
from .errors import ConfigError
from .gibbs import PriorConfig, SamplerConfig
from .synth import MIXING_MODELS, SynthSpec

__all__ = ["RunConfig", "parse_config", "load_config", "KNOWN_KEYS"]


def _parse_bool_int(text):
    return int(text, 0)


def _parse_model(text):
    value = text.strip().upper()
    if value not in MIXING_MODELS:
        raise ValueError(f"expected one of {MIXING_MODELS}")
    return value


# key -> (section, field, parser); sections name the RunConfig sub-objects.
KNOWN_KEYS = {
    "n_mc": ("sampler", "n_mc", _parse_bool_int),
    "n_burn": ("sampler", "n_burn", _parse_bool_int),
    "thin": ("sampler", "thin", _parse_bool_int),
    "seed": ("sampler", "seed", _parse_bool_int),
    "chmc_repeats": ("sampler", "chmc_repeats", _parse_bool_int),
    "chmc_z.epsilon": ("chmc_z", "epsilon", float),
    "chmc_z.nlf_min": ("chmc_z", "nlf_min", _parse_bool_int),
    "chmc_z.nlf_max": ("chmc_z", "nlf_max", _parse_bool_int),
    "chmc_z.adapt_window": ("chmc_z", "adapt_window", _parse_bool_int),
    "chmc_z.adapt_low": ("chmc_z", "adapt_low", float),
    "chmc_z.adapt_high": ("chmc_z", "adapt_high", float),
    "chmc_z.adapt_factor": ("chmc_z", "adapt_factor", float),
    "chmc_m.epsilon": ("chmc_m", "epsilon", float),
    "chmc_m.nlf_min": ("chmc_m", "nlf_min", _parse_bool_int),
    "chmc_m.nlf_max": ("chmc_m", "nlf_max", _parse_bool_int),
    "chmc_m.adapt_window": ("chmc_m", "adapt_window", _parse_bool_int),
    "chmc_m.adapt_low": ("chmc_m", "adapt_low", float),
    "chmc_m.adapt_high": ("chmc_m", "adapt_high", float),
    "chmc_m.adapt_factor": ("chmc_m", "adapt_factor", float),
    "priors.s2": ("priors", "s2", float),
    "priors.gamma": ("priors", "gamma", float),
    "priors.nu": ("priors", "nu", float),
    "synth.n_rows": ("synth", "n_rows", _parse_bool_int),
    "synth.n_cols": ("synth", "n_cols", _parse_bool_int),
    "synth.r": ("synth", "r", _parse_bool_int),
    "synth.l": ("synth", "l", _parse_bool_int),
    "synth.mixing_model": ("synth", "mixing_model", _parse_model),
    "synth.a_max": ("synth", "a_max", float),
    "synth.noise_sigma2": ("synth", "noise_sigma2", float),
    "synth.b_min": ("synth", "b_min", float),
    "synth.b_max": ("synth", "b_max", float),
    "synth.gamma_min": ("synth", "gamma_min", float),
    "synth.gamma_max": ("synth", "gamma_max", float),
    "synth.seed": ("synth", "seed", _parse_bool_int),
    "synth.endmember_file": ("synth", "endmember_file", str),
}


@dataclass
class RunConfig:
    """Sampler settings plus the scene-generation spec from one file."""

    sampler: SamplerConfig
    synth: SynthSpec
    endmember_file: Optional[str] = None


def parse_config(text, name="<config>"):
    """Parse config text into a RunConfig; raises ConfigError with a line."""
    sections = {
        "sampler": {},
        "chmc_z": {},
        "chmc_m": {},
        "priors": {},
        "synth": {},
    }
    lines_by_key = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(lineno, f"{name}: expected key=value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(lineno, f"{name}: unknown key {key!r}")
        if key in lines_by_key:
            raise ConfigError(
                lineno, f"{name}: duplicate key {key!r} (first at line {lines_by_key[key]})"
            )
        section, fieldname, parser = KNOWN_KEYS[key]
        try:
            parsed = parser(value)
        except ValueError as exc:
            raise ConfigError(lineno, f"{name}: bad value for {key!r}: {exc}") from exc
        sections[section][fieldname] = parsed
        lines_by_key[key] = lineno

    def fail(section_keys, exc):
        lineno = min(
            (lines_by_key[k] for k in lines_by_key
             if KNOWN_KEYS[k][0] in section_keys),
            default=0,
        )
        raise ConfigError(lineno, f"{name}: {exc}") from exc

    synth_kwargs = dict(sections["synth"])
    endmember_file = synth_kwargs.pop("endmember_file", None)
    b_min = synth_kwargs.pop("b_min", None)
    b_max = synth_kwargs.pop("b_max", None)
    gamma_min = synth_kwargs.pop("gamma_min", None)
    gamma_max = synth_kwargs.pop("gamma_max", None)
    try:
        synth = SynthSpec(**synth_kwargs)
        if b_min is not None or b_max is not None:
            lo = b_min if b_min is not None else synth.b_range[0]
            hi = b_max if b_max is not None else synth.b_range[1]
            synth = replace(synth, b_range=(lo, hi))
        if gamma_min is not None or gamma_max is not None:
            lo = gamma_min if gamma_min is not None else synth.gamma_range[0]
            hi = gamma_max if gamma_max is not None else synth.gamma_range[1]
            synth = replace(synth, gamma_range=(lo, hi))
    except ValueError as exc:
        fail({"synth"}, exc)

    z_kwargs = dict(sections["chmc_z"])
    z_kwargs.setdefault("epsilon", 0.01)
    m_kwargs = dict(sections["chmc_m"])
    m_kwargs.setdefault("epsilon", 0.005)
    try:
        chmc_z = ChmcConfig(**z_kwargs)
        chmc_m = ChmcConfig(**m_kwargs)
    except ValueError as exc:
        fail({"chmc_z", "chmc_m"}, exc)
    try:
        sampler = SamplerConfig(
            priors=PriorConfig(**sections["priors"]),
            chmc_z=chmc_z,
            chmc_m=chmc_m,
            **sections["sampler"],
        )
    except ValueError as exc:
        fail({"sampler", "priors"}, exc)

    return RunConfig(sampler=sampler, synth=synth, endmember_file=endmember_file)


def load_config(path):
    """Read and parse a config file; the raw text is kept for provenance."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    cfg = parse_config(text, name=str(path))
    return cfg, text
