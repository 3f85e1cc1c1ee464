"""Scenario configuration: YAML files, defaults, validation, env overrides.

A config is a nested dict with the sections below.  Angles are given in
degrees (keys ending in ``_deg``); everything else is SI.  ``load_config``
merges a file over the defaults, applies ``PLUGPULL_<SECTION>__<KEY>``
environment overrides and validates the result; ``build_scenario`` turns it
into a :class:`plugpull.hybrid.Scenario`.
"""

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np
import yaml

from . import analysis as an
from . import control as ctl
from . import dynamics as dyn
from . import hybrid as hy
from .errors import ConfigError
from .trajectory import TrajConfig

log = logging.getLogger(__name__)

ENV_PREFIX = "PLUGPULL_"
ENV_SEP = "__"

DEFAULTS = {
    "plant": {
        "m_b": 2.4, "m_1": 0.12, "m_2": 0.12, "l1": 0.12, "l2": 0.12,
        "mount": [0.0, 0.0, -0.05],
        "J_b": [0.021, 0.022, 0.033],
        "J_1": [2e-5, 2e-5, 2e-5], "J_2": [2e-5, 2e-5, 2e-5], "J_E": [1e-5, 1e-5, 1e-5],
        "g": 9.81, "T_m": 40.0, "tau_max": [3.0, 3.0, 1.5],
    },
    "nominal": {"J_b_scale": 0.8, "J_b_bar": None, "input_model": "body"},
    "trajectory": {"theta_m_deg": 20.0, "t0_wp": 0.0, "td_wp": 5.0, "st_window": 0.08,
                   "gamma_d_deg": [0.0, 0.0]},
    "guards": {"F_TH": 6.65, "delta_eta_deg": 5.0, "force_separation_at": None},
    "jump": {"bound": 0.3},
    "envelope": {"max_angle_deg": 60.0, "z_min": 0.2, "max_speed": 2.0, "max_rate": 8.0,
                 "max_offset": 3.0},
    "control": {
        "attitude": {"kp": 144.0, "kd": 24.0},
        "position": {"kp": 6.25, "kd": 5.0, "max_tilt_deg": 35.0},
    },
    "dob": {
        "attitude": {"a0": 100.0, "a1": 8.0, "eps": 0.02, "s_max": "auto"},
        "position": {"a0": 4.0, "a1": 4.0, "eps": 1.0, "s_max": 3.0},
        "enabled": True,
    },
    "disturbances": [],
    "gamma_ddot_noise": 0.0,
    "anchor": [0.0, 0.0, 1.0],
    "integrator": {"dt": 1e-3, "t_end": 12.0, "decimation": 10},
    "seed": 0,
    "analysis": {
        "sigma": 0.05, "delta_sigma": 0.08, "samples": 500, "post_horizon": 1.0,
        "max_centers": 64, "epsilons": [0.04, 0.02, 0.01], "deviation_sigma": 0.05,
        "deviation_span": 3.0,
        "sweep_disturbances": [
            {"coord": 4, "kind": "sinusoid", "amplitude": 0.3, "freq": 1.0, "t_on": 0.5,
             "modes": ["WP"]},
            {"coord": 3, "kind": "step", "amplitude": 0.1, "t_on": 1.0},
        ],
        "metric": {"rad": 1.0, "rad_s": 0.3, "m": 1.0, "m_s": 0.3, "N": 0.1, "Nm": 1.0},
    },
}

PRESETS = ("replication", "zero-mismatch", "aggressive-mismatch", "adversarial")


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if k not in base:
            raise ConfigError(f"unknown config key {path + k!r}")
        if isinstance(base[k], dict) and isinstance(v, dict):
            out[k] = _merge(base[k], v, path + k + ".")
        else:
            out[k] = v
    return out


RESERVED_ENV = {"PLUGPULL_PURE_PYTHON"}


def apply_env(data, environ=None):
    """Apply ``PLUGPULL_SECTION__KEY=value`` overrides (values parsed as YAML).

    Keys match case-insensitively; an override naming no config key is an
    error.
    """
    environ = os.environ if environ is None else environ
    data = copy.deepcopy(data)
    for name, raw in sorted(environ.items()):
        if not name.startswith(ENV_PREFIX) or name in RESERVED_ENV:
            continue
        parts = name[len(ENV_PREFIX):].split(ENV_SEP)
        node = data
        for i, part in enumerate(parts):
            keys = {k.lower(): k for k in node} if isinstance(node, dict) else {}
            key = keys.get(part.lower())
            if key is None:
                raise ConfigError(f"environment override {name} names no config key")
            if i == len(parts) - 1:
                node[key] = yaml.safe_load(raw)
            else:
                node = node[key]
    return data


def preset_path(name):
    return resources.files("plugpull") / "presets" / f"{name}.yaml"


def load_config(path=None, environ=None, overrides=None):
    """Defaults <- file (or preset name) <- overrides dict <- environment."""
    file_data = {}
    if path is not None:
        p = str(path)
        if p in PRESETS:
            text = preset_path(p).read_text()
        else:
            try:
                with open(p) as fh:
                    text = fh.read()
            except OSError as exc:
                raise ConfigError(f"cannot read config {p}: {exc}") from None
        try:
            file_data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"malformed config {p}: {exc}") from None
        if not isinstance(file_data, dict):
            raise ConfigError(f"config {p} is not a mapping")
    data = _merge(DEFAULTS, file_data)
    if overrides:
        data = _merge(data, overrides)
    data = apply_env(data, environ)
    validate(data)
    return data


def dump_config(data):
    return yaml.safe_dump(data, sort_keys=True, default_flow_style=None)


def config_hash(data):
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Validation

def _positive(data, *paths):
    for p in paths:
        node = data
        for k in p.split("."):
            node = node[k]
        vals = np.atleast_1d(np.asarray(node, dtype=float))
        if not np.all(vals > 0):
            raise ConfigError(f"{p} must be positive")


def validate(data):
    """Raise ConfigError on an inconsistent config; warn on soft conditions."""
    try:
        _positive(data, "plant.m_b", "plant.m_1", "plant.m_2", "plant.l1", "plant.l2",
                  "plant.g", "plant.T_m", "plant.tau_max", "plant.J_b",
                  "trajectory.theta_m_deg", "trajectory.st_window", "guards.F_TH",
                  "guards.delta_eta_deg", "integrator.dt", "integrator.t_end",
                  "integrator.decimation", "control.attitude.kp", "control.attitude.kd",
                  "control.position.kp", "control.position.kd", "dob.attitude.a0",
                  "dob.attitude.a1", "dob.attitude.eps", "dob.position.a0", "dob.position.a1",
                  "dob.position.eps", "analysis.sigma", "analysis.delta_sigma",
                  "analysis.samples", "analysis.max_centers")
        params = _params(data)
        params.check()
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from None
    hyp = an.inertia_hypothesis_margin(params.J_b_bar, params.J_b)
    if hyp < -1e-12:
        raise ConfigError("nominal J_b_bar must not exceed J_b (sector hypothesis J_b_bar < J_b)")
    if hyp <= 1e-12:
        log.warning("J_b_bar equals J_b in some direction; the sector hypothesis is not strict")
    if data["nominal"]["input_model"] not in ("body", "full"):
        raise ConfigError("nominal.input_model must be 'body' or 'full'")
    traj = data["trajectory"]
    if not 0 < traj["theta_m_deg"] < 90:
        raise ConfigError("trajectory.theta_m_deg must lie in (0, 90)")
    if traj["td_wp"] <= traj["t0_wp"]:
        raise ConfigError("trajectory.td_wp must exceed t0_wp")
    bound = params.T_m * np.sin(np.deg2rad(traj["theta_m_deg"]))
    if not data["guards"]["F_TH"] < bound:
        # kept as a warning so that the run itself reports NoSeparation
        log.warning("F_TH=%g violates the sufficient condition F_TH < T_m sin(theta_m) = %g",
                    data["guards"]["F_TH"], bound)
    for name in ("attitude", "position"):
        eps = data["dob"][name]["eps"]
        if data["integrator"]["dt"] > eps / 10 + 1e-15:
            raise ConfigError(f"integrator.dt must not exceed dob.{name}.eps/10 = {eps / 10:g}")
        s = data["dob"][name]["s_max"]
        if not (s == "auto" and name == "attitude"):
            _positive(data, f"dob.{name}.s_max")
    if data["jump"]["bound"] < 0:
        raise ConfigError("jump.bound must be non-negative")
    for d in data["disturbances"] + data["analysis"]["sweep_disturbances"]:
        _disturbance(d)
    if len(data["analysis"]["epsilons"]) < 1:
        raise ConfigError("analysis.epsilons must not be empty")
    if not isinstance(data["seed"], int) or data["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")


def _disturbance(d):
    try:
        dist = hy.Disturbance(int(d["coord"]), float(d["amplitude"]), d.get("kind", "constant"),
                              float(d.get("t_on", 0.0)), float(d.get("freq", 0.0)),
                              tuple(d.get("modes", ("WP", "ST", "FF"))))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad disturbance {d!r}: {exc}") from None
    if not 0 <= dist.coord < 8 or dist.kind not in ("constant", "step", "sinusoid"):
        raise ConfigError(f"bad disturbance {d!r}")
    return dist


# ---------------------------------------------------------------------------
# Scenario construction

def _params(data):
    p = data["plant"]
    params = dyn.ArmParams(m_b=p["m_b"], m_1=p["m_1"], m_2=p["m_2"], l1=p["l1"], l2=p["l2"],
                           mount=p["mount"], J_b=p["J_b"], J_1=p["J_1"], J_2=p["J_2"], J_E=p["J_E"],
                           g=p["g"], T_m=p["T_m"], tau_max=p["tau_max"])
    nom = data["nominal"]
    if nom.get("J_b_bar") is not None:
        params.J_b_bar = dyn._as_inertia(nom["J_b_bar"])
    else:
        params.J_b_bar = float(nom["J_b_scale"]) * params.J_b
    return params


@dataclass
class AnalysisSettings:
    sigma: float
    delta_sigma: float
    samples: int
    post_horizon: float
    max_centers: int
    epsilons: list
    deviation_sigma: float
    deviation_span: float
    sweep_disturbances: list
    metric: an.ManeuverMetric


def analysis_settings(data):
    a = data["analysis"]
    return AnalysisSettings(float(a["sigma"]), float(a["delta_sigma"]), int(a["samples"]),
                            float(a["post_horizon"]), int(a["max_centers"]),
                            [float(e) for e in a["epsilons"]], float(a["deviation_sigma"]),
                            float(a["deviation_span"]),
                            [_disturbance(d) for d in a["sweep_disturbances"]],
                            an.ManeuverMetric(**{k: float(v) for k, v in a["metric"].items()}))


def build_scenario(data, seed=None, force_separation_at=None, resolve_s_max=True):
    """Scenario from a validated config; ``s_max: auto`` is estimated here."""
    params = _params(data)
    tr = data["trajectory"]
    g = data["guards"]
    env = data["envelope"]
    c = data["control"]
    d = data["dob"]
    sc = hy.Scenario(
        params=params,
        nominal=params.nominal(),
        traj=TrajConfig(np.deg2rad(tr["theta_m_deg"]), tr["t0_wp"], tr["td_wp"], tr["st_window"],
                        np.deg2rad(tr["gamma_d_deg"])),
        guards=hy.GuardConfig(g["F_TH"], np.deg2rad(g["delta_eta_deg"]),
                              g["force_separation_at"] if force_separation_at is None
                              else force_separation_at),
        jump=hy.JumpModel(data["jump"]["bound"]),
        envelope=hy.Envelope(np.deg2rad(env["max_angle_deg"]), env["z_min"], env["max_speed"],
                             env["max_rate"], env["max_offset"]),
        att_gains=ctl.AttitudeGains(c["attitude"]["kp"], c["attitude"]["kd"]),
        pos_gains=ctl.PositionGains(c["position"]["kp"], c["position"]["kd"],
                                    np.deg2rad(c["position"]["max_tilt_deg"])),
        att_dob=ctl.DobParams(d["attitude"]["a0"], d["attitude"]["a1"], d["attitude"]["eps"],
                              1.0 if d["attitude"]["s_max"] == "auto" else d["attitude"]["s_max"]),
        pos_dob=ctl.DobParams(d["position"]["a0"], d["position"]["a1"], d["position"]["eps"],
                              d["position"]["s_max"]),
        input_model=data["nominal"]["input_model"],
        dob_enabled=bool(d["enabled"]),
        disturbances=[_disturbance(x) for x in data["disturbances"]],
        gamma_ddot_noise=float(data["gamma_ddot_noise"]),
        anchor=data["anchor"],
        dt=float(data["integrator"]["dt"]),
        t_end=float(data["integrator"]["t_end"]),
        decimation=int(data["integrator"]["decimation"]),
        seed=int(data["seed"] if seed is None else seed),
    )
    if d["attitude"]["s_max"] == "auto" and resolve_s_max:
        from .experiments import estimate_s_max
        sc.att_dob.s_max = estimate_s_max(sc)
    return sc
