"""JSON form of scenario, grid and detector configs.

Every document carries ``schema_version``; unknown keys are rejected and
errors name the offending field path. Infinite values are written as
``null``. Device blocks may be given as a preset name string.
"""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, fields

from .coupling import CouplingPair, Mode, TransferFunction
from .detector import AdaptivePolicy, DetectorConfig
from .devices import AudioAmp, DiffAmpModel, MotorDriver
from .errors import ConfigError, EmShieldError
from .waveform import Am, Gated, Pwm, Silence, Sine, Sum

SCHEMA_VERSION = "1"

_SIGNALS = {"sine": Sine, "pwm": Pwm, "am": Am, "silence": Silence, "sum": Sum, "gated": Gated}
_SIGNAL_NAMES = {v: k for k, v in _SIGNALS.items()}
_CONDITIONERS = {"audio_amp": AudioAmp, "motor_driver": MotorDriver}
_CONDITIONER_NAMES = {v: k for k, v in _CONDITIONERS.items()}


def _f(v):
    if v is None:
        return None
    v = float(v)
    return None if math.isinf(v) else v


def _flat(obj, inf_fields=()) -> dict:
    out = {}
    for fl in fields(obj):
        v = getattr(obj, fl.name)
        out[fl.name] = _f(v) if fl.name in inf_fields or isinstance(v, float) else v
    return out


# ---------------------------------------------------------------------------
# to dict
# ---------------------------------------------------------------------------

def signal_to_dict(spec) -> dict:
    kind = _SIGNAL_NAMES.get(type(spec))
    if kind is None:
        raise ConfigError("signal", f"unknown signal {spec!r}")
    if isinstance(spec, Sum):
        return {"kind": kind, "parts": [signal_to_dict(p) for p in spec.parts]}
    if isinstance(spec, Gated):
        return {"kind": kind, "inner": signal_to_dict(spec.inner),
                "windows": [[float(a), float(b)] for a, b in spec.windows]}
    return {"kind": kind, **{k: float(v) for k, v in _flat(spec).items()}}


def conditioner_to_dict(model) -> dict:
    kind = _CONDITIONER_NAMES.get(type(model))
    if kind is None:
        raise ConfigError("conditioner", f"unknown conditioner {model!r}")
    return {"kind": kind, **_flat(model, ("f_parasitic",))}


def detector_to_dict(cfg: DetectorConfig) -> dict:
    return {
        "epsilon": float(cfg.epsilon),
        "debounce": int(cfg.debounce),
        "adaptive": None if cfg.adaptive is None else _flat(cfg.adaptive),
    }


def scenario_to_dict(cfg) -> dict:
    return {
        "system": cfg.system,
        "legit": signal_to_dict(cfg.legit),
        "conditioner": conditioner_to_dict(cfg.conditioner),
        "detection_amp": _flat(cfg.detection_amp, ("f_parasitic",)),
        "coupling": {"t_c": cfg.coupling.t_c.to_dict(), "k": float(cfg.coupling.k),
                     "skew": float(cfg.coupling.skew)},
        "attack": None if cfg.attack is None else {
            "spec": signal_to_dict(cfg.attack.spec), "onset": float(cfg.attack.onset)},
        "detector": detector_to_dict(cfg.detector),
        "sample_rate": float(cfg.sample_rate),
        "duration": float(cfg.duration),
        "seed": int(cfg.seed),
        "analysis": _flat(cfg.analysis),
    }


def grid_to_dict(grid) -> dict:
    return {"freqs": list(grid.freqs), "amplitudes": list(grid.amplitudes),
            "repeats": grid.repeats, "include_no_attack": grid.include_no_attack}


def document(cfg, grid=None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "scenario": scenario_to_dict(cfg)}
    if grid is not None:
        doc["grid"] = grid_to_dict(grid)
    return doc


def dumps(cfg, grid=None) -> str:
    return json.dumps(document(cfg, grid), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# from dict
# ---------------------------------------------------------------------------

def _obj(d, path: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError(path, f"expected an object, got {type(d).__name__}")
    return d


def _keys(d: dict, path: str, allowed, required=()) -> None:
    extra = sorted(set(d) - set(allowed))
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")
    for k in required:
        if k not in d:
            raise ConfigError(f"{path}.{k}" if path else k, "missing required field")


def _num(v, path: str, inf_ok: bool = False) -> float:
    if v is None and inf_ok:
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    return float(v)


def _int(v, path: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    return v


def _build(cls, d, path, kind_key=False, inf_fields=(), int_fields=(), optional_none=()):
    d = _obj(d, path)
    names = [fl.name for fl in fields(cls)]
    required = [fl.name for fl in fields(cls)
                if fl.default is MISSING and fl.default_factory is MISSING]
    allowed = names + (["kind"] if kind_key else [])
    _keys(d, path, allowed, required)
    kw = {}
    for k, v in d.items():
        if k == "kind":
            continue
        p = f"{path}.{k}"
        if k in int_fields:
            kw[k] = _int(v, p)
        elif k in optional_none and v is None:
            kw[k] = None
        else:
            kw[k] = _num(v, p, inf_ok=k in inf_fields)
    try:
        return cls(**kw)
    except EmShieldError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from exc
    except TypeError as exc:
        raise ConfigError(path, str(exc)) from exc


def signal_from_dict(d, path: str = "signal"):
    d = _obj(d, path)
    kind = d.get("kind")
    if kind not in _SIGNALS:
        raise ConfigError(f"{path}.kind", f"unknown signal kind {kind!r}")
    cls = _SIGNALS[kind]
    if cls is Sum:
        _keys(d, path, ("kind", "parts"), ("parts",))
        if not isinstance(d["parts"], list):
            raise ConfigError(f"{path}.parts", "expected a list")
        return Sum(tuple(signal_from_dict(p, f"{path}.parts[{i}]") for i, p in enumerate(d["parts"])))
    if cls is Gated:
        _keys(d, path, ("kind", "inner", "windows"), ("inner", "windows"))
        wins = d["windows"]
        if not isinstance(wins, list):
            raise ConfigError(f"{path}.windows", "expected a list of [start, stop] pairs")
        parsed = []
        for i, w in enumerate(wins):
            if not isinstance(w, list) or len(w) != 2:
                raise ConfigError(f"{path}.windows[{i}]", "expected [start, stop]")
            parsed.append((_num(w[0], f"{path}.windows[{i}]"), _num(w[1], f"{path}.windows[{i}]")))
        try:
            return Gated(signal_from_dict(d["inner"], f"{path}.inner"), tuple(parsed))
        except ConfigError:
            raise
        except EmShieldError as exc:
            raise ConfigError(f"{path}.windows", str(exc)) from exc
    return _build(cls, d, path, kind_key=True)


def _device(d, path, cls, presets):
    if isinstance(d, str):
        model = presets.get(d)
        if model is None or not isinstance(model, cls):
            raise ConfigError(path, f"unknown {cls.__name__} preset {d!r}")
        return model
    return _build(cls, d, path, kind_key=cls is not DiffAmpModel, inf_fields=("f_parasitic",),
                  optional_none=("hysteresis",))


def conditioner_from_dict(d, path: str = "conditioner"):
    from .scenarios import DEVICE_PRESETS

    if isinstance(d, str):
        model = DEVICE_PRESETS.get(d)
        if not isinstance(model, (AudioAmp, MotorDriver)):
            raise ConfigError(path, f"unknown conditioner preset {d!r}")
        return model
    d = _obj(d, path)
    kind = d.get("kind")
    if kind not in _CONDITIONERS:
        raise ConfigError(f"{path}.kind", f"unknown conditioner kind {kind!r}")
    return _device(d, path, _CONDITIONERS[kind], DEVICE_PRESETS)


def diffamp_from_dict(d, path: str = "detection_amp") -> DiffAmpModel:
    from .scenarios import DEVICE_PRESETS

    return _device(d, path, DiffAmpModel, DEVICE_PRESETS)


def detector_from_dict(d, path: str = "detector") -> DetectorConfig:
    d = _obj(d, path)
    _keys(d, path, ("epsilon", "debounce", "adaptive"), ("epsilon",))
    adaptive = d.get("adaptive")
    if adaptive is not None:
        adaptive = _build(AdaptivePolicy, adaptive, f"{path}.adaptive")
    try:
        return DetectorConfig(_num(d["epsilon"], f"{path}.epsilon"),
                              _int(d.get("debounce", 1), f"{path}.debounce"), adaptive)
    except ConfigError:
        raise
    except EmShieldError as exc:
        raise ConfigError(path, str(exc)) from exc


def transfer_from_dict(d, path: str) -> TransferFunction:
    d = _obj(d, path)
    _keys(d, path, ("gain", "modes", "delay_s"))
    modes = d.get("modes", [])
    if not isinstance(modes, list):
        raise ConfigError(f"{path}.modes", "expected a list")
    built = tuple(_build(Mode, m, f"{path}.modes[{i}]") for i, m in enumerate(modes))
    try:
        return TransferFunction(_num(d.get("gain", 1.0), f"{path}.gain"), built,
                                _num(d.get("delay_s", 0.0), f"{path}.delay_s"))
    except EmShieldError as exc:
        raise ConfigError(path, str(exc)) from exc


def coupling_from_dict(d, path: str = "coupling") -> CouplingPair:
    d = _obj(d, path)
    _keys(d, path, ("t_c", "k", "skew"), ("t_c", "k"))
    tf = transfer_from_dict(d["t_c"], f"{path}.t_c")
    try:
        return CouplingPair(tf, _num(d["k"], f"{path}.k"), _num(d.get("skew", 0.0), f"{path}.skew"))
    except ConfigError:
        raise
    except EmShieldError as exc:
        raise ConfigError(f"{path}.k", str(exc)) from exc


def scenario_from_dict(d, path: str = "scenario"):
    from .scenarios import Analysis, AttackConfig, ScenarioConfig, validate

    d = _obj(d, path)
    names = [fl.name for fl in fields(ScenarioConfig)]
    _keys(d, path, names, ("system", "legit", "conditioner", "detection_amp", "coupling",
                           "detector", "sample_rate", "duration"))
    attack = d.get("attack")
    if attack is not None:
        attack = _obj(attack, f"{path}.attack")
        _keys(attack, f"{path}.attack", ("spec", "onset"), ("spec",))
        attack = AttackConfig(signal_from_dict(attack["spec"], f"{path}.attack.spec"),
                              _num(attack.get("onset", 0.0), f"{path}.attack.onset"))
    analysis = Analysis()
    if d.get("analysis") is not None:
        analysis = _build(Analysis, d["analysis"], f"{path}.analysis", int_fields=("duty_periods",))
    system = d["system"]
    if not isinstance(system, str):
        raise ConfigError(f"{path}.system", "expected a string")
    cfg = ScenarioConfig(
        system=system,
        legit=signal_from_dict(d["legit"], f"{path}.legit"),
        conditioner=conditioner_from_dict(d["conditioner"], f"{path}.conditioner"),
        detection_amp=diffamp_from_dict(d["detection_amp"], f"{path}.detection_amp"),
        coupling=coupling_from_dict(d["coupling"], f"{path}.coupling"),
        attack=attack,
        detector=detector_from_dict(d["detector"], f"{path}.detector"),
        sample_rate=_num(d["sample_rate"], f"{path}.sample_rate"),
        duration=_num(d["duration"], f"{path}.duration"),
        seed=_int(d.get("seed", 0), f"{path}.seed"),
        analysis=analysis,
    )
    try:
        validate(cfg)
    except ConfigError as exc:
        raise ConfigError(f"{path}.{exc.path}", exc.message) from exc
    return cfg


def grid_from_dict(d, path: str = "grid"):
    from .scenarios import SweepGrid

    d = _obj(d, path)
    _keys(d, path, ("freqs", "amplitudes", "repeats", "include_no_attack"), ("freqs", "amplitudes"))
    for key in ("freqs", "amplitudes"):
        if not isinstance(d[key], list):
            raise ConfigError(f"{path}.{key}", "expected a list")
    freqs = tuple(_num(v, f"{path}.freqs[{i}]") for i, v in enumerate(d["freqs"]))
    amps = tuple(_num(v, f"{path}.amplitudes[{i}]") for i, v in enumerate(d["amplitudes"]))
    try:
        return SweepGrid(freqs, amps, _int(d.get("repeats", 1), f"{path}.repeats"),
                         _int(d.get("include_no_attack", 0), f"{path}.include_no_attack"))
    except ConfigError as exc:
        raise ConfigError(f"{path}{exc.path[4:]}" if exc.path.startswith("grid") else exc.path,
                          exc.message) from exc


def parse_document(doc) -> tuple:
    """``(scenario, grid or None)`` from a parsed JSON document."""
    doc = _obj(doc, "")
    _keys(doc, "", ("schema_version", "scenario", "grid"), ("schema_version", "scenario"))
    if doc["schema_version"] != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {doc['schema_version']!r}")
    cfg = scenario_from_dict(doc["scenario"])
    grid = grid_from_dict(doc["grid"]) if doc.get("grid") is not None else None
    return cfg, grid


def loads(text: str) -> tuple:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return parse_document(doc)


def load(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
