"""Run configuration: YAML document -> validated parameter objects.

One document mirrors the controller and plant parameter sets, the
simulation scenario, and the sweep requests, section by section.  Missing
keys take the library defaults; unknown sections or keys are rejected so a
typo cannot silently fall back to a default.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Any

import numpy as np
import yaml

from . import analysis
from .plant import ControllerParams, PlantParams, VarDampingParams
from .sim import MODES, SimScenario


class ConfigError(Exception):
    """Configuration document failed validation."""


SECTIONS = ("controller", "plant", "scenario", "bode", "frontier",
            "compare", "output")

# plant.robot is a transfer function, not a scalar; it stays at the
# library default and is deliberately not configurable here
PLANT_KEYS = ("Mp", "Bp", "Ks", "Ke", "Be", "Td", "x_wall",
              "noise_rms", "noise_rms_comp")
CONTROLLER_KEYS = ("Ma", "Ba", "Kl", "Bfb", "omega_v", "omega_a", "Mp_hat",
                   "h", "F_dead", "F_bar", "Fd", "contact_hold_time",
                   "var_damping")
VAR_DAMPING_KEYS = ("B_hi", "B_lo", "rate_coeff", "update_period", "max_delta")
SCENARIO_KEYS = ("mode", "duration", "seed", "blowup_limit", "discretization",
                 "collision_response", "full_stop", "bilateral_env",
                 "push_amplitude", "push_rise")
BODE_KEYS = ("which", "variants")
FRONTIER_KEYS = ("variable", "values", "zeta", "omega_n_hz", "Ba_bracket",
                 "Kl_bracket", "rtol", "scan_Ba", "scan_Kl")
COMPARE_KEYS = ("variants",)
OUTPUT_KEYS = ("directory", "format", "plot")

BODE_VARIANTS = ("baseline", "lead", "lead+fb", "ideal-acc", "filtered-acc")


@dataclass(frozen=True)
class RunConfig:
    cp: ControllerParams
    pp: PlantParams
    mode: str = "force_reference_contact"
    duration: float = 4.0
    seed: int = 0
    blowup_limit: float = 5.0
    discretization: str = "tustin"
    collision_response: bool = False
    full_stop: bool = False
    bilateral_env: bool = False
    push_amplitude: float = 0.0   # N, operator push ramped in over push_rise
    push_rise: float = 0.25      # s
    bode_which: str = "closed"
    bode_variants: tuple = BODE_VARIANTS
    sweep: analysis.FrontierSweep = analysis.FrontierSweep(
        variable="omega_n", values=(25.0, 20.0, 15.0, 12.0),
        Kl_bracket=(0.02, 0.5))
    compare_variants: tuple = ({"Kl": 0.0, "Bfb": 0.0}, {"Bfb": 0.0}, {})
    out_dir: str = "."
    fmt: str = "csv"
    plot: bool = True


def _check_keys(section: str, doc: dict, allowed) -> None:
    for key in doc:
        if key not in allowed:
            raise ConfigError("unknown key %s.%s" % (section, key))


def _as_float(path: str, v) -> float:
    # YAML 1.1 reads "2e7" (no dot) as a string; take the numeric reading
    if isinstance(v, str):
        try:
            return float(v)
        except ValueError:
            raise ConfigError("%s: expected a number, got %r" % (path, v)) from None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError("%s: expected a number, got %r" % (path, v))
    return float(v)


def _as_int(path: str, v) -> int:
    if isinstance(v, str):
        try:
            return int(v)
        except ValueError:
            raise ConfigError("%s: expected an integer, got %r" % (path, v)) from None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError("%s: expected an integer, got %r" % (path, v))
    return v


def _as_bool(path: str, v) -> bool:
    if not isinstance(v, bool):
        raise ConfigError("%s: expected true/false, got %r" % (path, v))
    return v


def _as_str(path: str, v) -> str:
    if not isinstance(v, str):
        raise ConfigError("%s: expected a string, got %r" % (path, v))
    return v


def _float_tuple(path: str, v) -> tuple:
    if not isinstance(v, (list, tuple)):
        raise ConfigError("%s: expected a list of numbers" % path)
    return tuple(_as_float("%s[%d]" % (path, i), x) for i, x in enumerate(v))


def _pair(path: str, v) -> tuple:
    t = _float_tuple(path, v)
    if len(t) != 2:
        raise ConfigError("%s: expected [low, high]" % path)
    return t


_COERCE = {float: _as_float, int: _as_int, bool: _as_bool, str: _as_str}


def _fill_fields(section: str, doc: dict, cls, skip=()) -> dict:
    """Coerce doc values onto the scalar fields of a params dataclass."""
    out = {}
    types = {f.name: f.type for f in dataclasses.fields(cls)}
    for key, raw in doc.items():
        if key in skip:
            continue
        kind = types[key]
        coerce = _COERCE[float if kind in ("float", float) else
                         int if kind in ("int", int) else
                         bool if kind in ("bool", bool) else str]
        out[key] = coerce("%s.%s" % (section, key), raw)
    return out


def _build_params(section: str, doc: dict, cls, skip=()):
    try:
        return cls(**_fill_fields(section, doc, cls, skip))
    except ValueError as e:
        raise ConfigError("%s: %s" % (section, e)) from e


def build_run_config(doc: dict | None) -> RunConfig:
    """Validate a parsed YAML document and construct the run parameters."""
    doc = dict(doc or {})
    _check_keys("top level", doc, SECTIONS)
    for name in SECTIONS:
        sub = doc.setdefault(name, {})
        if sub is None:
            doc[name] = {}
        elif not isinstance(sub, dict):
            raise ConfigError("section %r must be a mapping" % name)

    _check_keys("controller", doc["controller"], CONTROLLER_KEYS)
    _check_keys("plant", doc["plant"], PLANT_KEYS)
    _check_keys("scenario", doc["scenario"], SCENARIO_KEYS)
    _check_keys("bode", doc["bode"], BODE_KEYS)
    _check_keys("frontier", doc["frontier"], FRONTIER_KEYS)
    _check_keys("compare", doc["compare"], COMPARE_KEYS)
    _check_keys("output", doc["output"], OUTPUT_KEYS)

    ctrl_doc = doc["controller"]
    vd = None
    if ctrl_doc.get("var_damping") is not None:
        vd_doc = ctrl_doc["var_damping"]
        if not isinstance(vd_doc, dict):
            raise ConfigError("controller.var_damping must be a mapping or null")
        _check_keys("controller.var_damping", vd_doc, VAR_DAMPING_KEYS)
        vd = _build_params("controller.var_damping", vd_doc, VarDampingParams)
    cp = dataclasses.replace(
        _build_params("controller", ctrl_doc, ControllerParams,
                      skip=("var_damping",)),
        var_damping=vd)
    pp = _build_params("plant", doc["plant"], PlantParams)

    sc = doc["scenario"]
    scenario = {}
    for key in ("mode", "discretization"):
        if key in sc:
            scenario[key] = _as_str("scenario." + key, sc[key])
    for key in ("duration", "blowup_limit", "push_amplitude", "push_rise"):
        if key in sc:
            scenario[key] = _as_float("scenario." + key, sc[key])
    for key in ("collision_response", "full_stop", "bilateral_env"):
        if key in sc:
            scenario[key] = _as_bool("scenario." + key, sc[key])
    if "seed" in sc:
        scenario["seed"] = _as_int("scenario.seed", sc["seed"])
    if scenario.get("mode", RunConfig.mode) not in MODES:
        raise ConfigError("scenario.mode: unknown mode %r" % scenario["mode"])
    if scenario.get("push_rise", RunConfig.push_rise) <= 0:
        raise ConfigError("scenario.push_rise must be positive")

    bd = doc["bode"]
    bode = {}
    if "which" in bd:
        bode["bode_which"] = _as_str("bode.which", bd["which"])
        if bode["bode_which"] not in ("G", "E", "closed"):
            raise ConfigError("bode.which: unknown response %r"
                              % bode["bode_which"])
    if "variants" in bd:
        if not isinstance(bd["variants"], (list, tuple)):
            raise ConfigError("bode.variants: expected a list of names")
        names = tuple(_as_str("bode.variants[%d]" % i, v)
                      for i, v in enumerate(bd["variants"]))
        for v in names:
            if v not in BODE_VARIANTS:
                raise ConfigError("bode.variants: unknown variant %r, "
                                  "choose from %s" % (v, list(BODE_VARIANTS)))
        bode["bode_variants"] = names

    fr = doc["frontier"]
    sweep_kw: dict[str, Any] = {}
    if "variable" in fr:
        sweep_kw["variable"] = _as_str("frontier.variable", fr["variable"])
    if "values" in fr:
        sweep_kw["values"] = _float_tuple("frontier.values", fr["values"])
    for key in ("zeta", "omega_n_hz", "rtol"):
        if key in fr:
            sweep_kw[key] = _as_float("frontier." + key, fr[key])
    for key in ("Ba_bracket", "Kl_bracket"):
        if key in fr:
            sweep_kw[key] = _pair("frontier." + key, fr[key])
    for key in ("scan_Ba", "scan_Kl"):
        if key in fr:
            sweep_kw[key] = _as_bool("frontier." + key, fr[key])
    try:
        sweep = dataclasses.replace(RunConfig.sweep, **sweep_kw)
    except ValueError as e:
        raise ConfigError("frontier: %s" % e) from e

    cmp_doc = doc["compare"]
    compare = {}
    if "variants" in cmp_doc:
        if not isinstance(cmp_doc["variants"], (list, tuple)):
            raise ConfigError("compare.variants: expected a list of mappings")
        rows = []
        for i, delta in enumerate(cmp_doc["variants"]):
            if delta is None:
                delta = {}
            if not isinstance(delta, dict):
                raise ConfigError("compare.variants[%d]: expected a mapping"
                                  % i)
            rows.append(dict(delta))
        compare["compare_variants"] = tuple(rows)

    out = doc["output"]
    output = {}
    if "directory" in out:
        output["out_dir"] = _as_str("output.directory", out["directory"])
    if "format" in out:
        output["fmt"] = _as_str("output.format", out["format"])
        if output["fmt"] not in ("csv", "json"):
            raise ConfigError("output.format: expected csv or json, got %r"
                              % output["fmt"])
    if "plot" in out:
        output["plot"] = _as_bool("output.plot", out["plot"])

    return RunConfig(cp=cp, pp=pp, **scenario, **bode, sweep=sweep,
                     **compare, **output)


def parse_document(text: str) -> dict:
    """Raw config text -> normalized nested dict, sections present-or-{}."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("not valid YAML: %s" % e) from e
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping of sections")
    for name in SECTIONS:
        if name in doc and doc[name] is None:
            doc[name] = {}
    return doc


def load_document(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError("cannot read config %s: %s" % (path, e)) from e
    return parse_document(text)


def parse_config(text: str) -> RunConfig:
    return build_run_config(parse_document(text))


def load_config(path: str) -> RunConfig:
    return build_run_config(load_document(path))


def set_override(doc: dict, spec: str) -> None:
    """Apply one --set override, 'section.key=value', onto a raw document.

    The value is parsed as YAML, so lists and mappings work inline:
    --set frontier.values=[25,12,5]
    """
    if "=" not in spec:
        raise ConfigError("--set expects section.key=value, got %r" % spec)
    path, raw = spec.split("=", 1)
    parts = path.strip().split(".")
    if not all(parts):
        raise ConfigError("--set: empty key in %r" % spec)
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError("--set %s: bad value: %s" % (spec, e)) from e
    node = doc
    for part in parts[:-1]:
        nxt = node.setdefault(part, {})
        if not isinstance(nxt, dict):
            raise ConfigError("--set %s: %s is not a section" % (spec, part))
        node = nxt
    node[parts[-1]] = value


def to_document(rc: RunConfig) -> dict:
    """Full nested document with every key explicit."""
    ctrl = {k: getattr(rc.cp, k) for k in CONTROLLER_KEYS[:-1]}
    ctrl["var_damping"] = (None if rc.cp.var_damping is None else
                           {k: getattr(rc.cp.var_damping, k)
                            for k in VAR_DAMPING_KEYS})
    return {
        "controller": ctrl,
        "plant": {k: getattr(rc.pp, k) for k in PLANT_KEYS},
        "scenario": {
            "mode": rc.mode,
            "duration": rc.duration,
            "seed": rc.seed,
            "blowup_limit": rc.blowup_limit,
            "discretization": rc.discretization,
            "collision_response": rc.collision_response,
            "full_stop": rc.full_stop,
            "bilateral_env": rc.bilateral_env,
            "push_amplitude": rc.push_amplitude,
            "push_rise": rc.push_rise,
        },
        "bode": {"which": rc.bode_which, "variants": list(rc.bode_variants)},
        "frontier": {
            "variable": rc.sweep.variable,
            "values": list(rc.sweep.values),
            "zeta": rc.sweep.zeta,
            "omega_n_hz": rc.sweep.omega_n_hz,
            "Ba_bracket": list(rc.sweep.Ba_bracket),
            "Kl_bracket": list(rc.sweep.Kl_bracket),
            "rtol": rc.sweep.rtol,
            "scan_Ba": rc.sweep.scan_Ba,
            "scan_Kl": rc.sweep.scan_Kl,
        },
        "compare": {"variants": [dict(d) for d in rc.compare_variants]},
        "output": {"directory": rc.out_dir, "format": rc.fmt, "plot": rc.plot},
    }


def dump_config(rc: RunConfig) -> str:
    return yaml.safe_dump(to_document(rc), sort_keys=False,
                          default_flow_style=False)


def build_scenario(rc: RunConfig) -> SimScenario:
    profile = None
    if rc.push_amplitude != 0.0:
        n = int(round(rc.duration / rc.cp.h))
        t = np.arange(n) * rc.cp.h
        profile = np.clip(t / rc.push_rise, 0.0, 1.0) * rc.push_amplitude
    try:
        return SimScenario(cp=rc.cp, pp=rc.pp, duration=rc.duration,
                           mode=rc.mode, discretization=rc.discretization,
                           collision_response=rc.collision_response,
                           full_stop=rc.full_stop, seed=rc.seed,
                           force_profile=profile,
                           blowup_limit=rc.blowup_limit,
                           bilateral_env=rc.bilateral_env)
    except ValueError as e:
        raise ConfigError("scenario: %s" % e) from e
