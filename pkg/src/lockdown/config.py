"""TOML run configuration: parsing, dotted overrides, seed resolution and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import os
import sys
from dataclasses import dataclass, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from lockdown.control import ControlOptions
from lockdown.model import (GroupParams, GroupState, ParamValidationError, SimConfig, VarpiParams,
                            policy_from_dict, validate_params)

SEED_ENV = "LOCKDOWN_SEED"


class ConfigError(ValueError):
    """Malformed configuration: unreadable file, bad TOML, unknown key or wrong type."""


@dataclass(frozen=True)
class NetworkSettings:
    n: int = 500
    m: int = 1
    seed: int = 1


@dataclass(frozen=True)
class RunConfig:
    sim: SimConfig
    groups: tuple
    initial: tuple
    policy: object
    control: ControlOptions
    network: NetworkSettings
    p_attach: tuple | None  # explicit attachment probabilities; otherwise taken from the network
    raw: dict

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_SIM_KEYS = {f.name for f in fields(SimConfig)}
_NET_KEYS = {"network_n": "n", "network_m": "m", "network_seed": "seed"}
_GROUP_KEYS = {f.name for f in fields(GroupParams)}
_STATE_KEYS = {f.name for f in fields(GroupState)}
_VARPI_KEYS = {f.name for f in fields(VarpiParams)}
_CONTROL_KEYS = {f.name for f in fields(ControlOptions)}
_POLICY_KEYS = {"kind", "e", "breakpoints", "fallback"}


def parse_value(text: str):
    """Interpret an override value as TOML, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(raw: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"bad override key {key!r}")
    node = raw
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {key!r} descends into a non-table")
    node[parts[-1]] = parse_value(value.strip())


def _check_keys(section: str, table: dict, allowed: set):
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def _build(cls, section: str, table: dict, allowed: set):
    _check_keys(section, table, allowed)
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigError(f"[{section}]: {exc}") from exc
    except ValueError as exc:
        raise ParamValidationError([(f"[{section}] {exc}", table)]) from exc


def load_raw(path: str | os.PathLike | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from exc


def resolve(raw: dict, overrides=(), env=None) -> RunConfig:
    """Apply overrides and the seed environment variable, then build typed objects.

    Seed precedence, lowest first: built-in default, environment, file, override.
    Raises ConfigError for structural problems and ParamValidationError for
    parameter constraint violations.
    """
    raw = copy.deepcopy(raw)
    env = os.environ if env is None else env
    sim_raw = raw.setdefault("simulation", {})
    if "master_seed" not in sim_raw and env.get(SEED_ENV):
        try:
            sim_raw["master_seed"] = int(env[SEED_ENV])
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer") from exc
    for item in overrides:
        apply_override(raw, item)
    _check_keys("top level", raw, {"simulation", "groups", "policy", "control"})

    sim_tbl = dict(raw.get("simulation", {}))
    net = {_NET_KEYS[k]: sim_tbl.pop(k) for k in list(sim_tbl) if k in _NET_KEYS}
    p_attach = sim_tbl.pop("p_attach", None)
    sim = _build(SimConfig, "simulation", sim_tbl, _SIM_KEYS)
    network = _build(NetworkSettings, "simulation", net, {"n", "m", "seed"})

    groups_raw = raw.get("groups", {})
    _check_keys("groups", groups_raw, {str(k) for k in range(sim.n_groups)})
    groups, initial = [], []
    for k in range(sim.n_groups):
        tbl = dict(groups_raw.get(str(k), {}))
        init_tbl = tbl.pop("initial", {})
        varpi_tbl = tbl.pop("varpi_params", {})
        vp = _build(VarpiParams, f"groups.{k}.varpi_params", varpi_tbl, _VARPI_KEYS)
        params = _build(GroupParams, f"groups.{k}", {**tbl, "varpi_params": vp}, _GROUP_KEYS)
        try:
            groups.append(validate_params(params))
        except TypeError as exc:
            raise ConfigError(f"[groups.{k}]: wrongly typed value ({exc})") from exc
        state = _build(GroupState, f"groups.{k}.initial", init_tbl, _STATE_KEYS)
        try:
            initial.append(state.check())
        except ValueError as exc:
            raise ParamValidationError([(f"groups.{k}.initial: {exc}", init_tbl)]) from exc

    pol_tbl = raw.get("policy", {"kind": "constant", "e": 1.0})
    _check_keys("policy", pol_tbl, _POLICY_KEYS)
    try:
        policy = policy_from_dict(pol_tbl)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"[policy]: {exc}") from exc
    except ValueError as exc:
        raise ParamValidationError([(f"[policy] {exc}", pol_tbl)]) from exc
    control = _build(ControlOptions, "control", raw.get("control", {}), _CONTROL_KEYS)

    if p_attach is not None:
        p_attach = tuple(float(v) for v in p_attach)
        if len(p_attach) != sim.n_groups:
            raise ConfigError("simulation.p_attach needs one value per group")
    return RunConfig(sim, tuple(groups), tuple(initial), policy, control, network, p_attach, raw)


def load_config(path=None, overrides=(), env=None) -> RunConfig:
    return resolve(load_raw(path), overrides, env)
