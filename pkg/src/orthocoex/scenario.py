"""Scenario files: flat ``key = value`` text with dotted keys.

Example (``scenarios/orla_1500.scn``)::

    # 5 saturated WiFi stations, 1500 B MPDUs, ORLA with 1 ms bursts
    scenario.id = orla_1500
    wifi.n = 5
    wifi.mpdu_bytes = 1500
    lbt.mode = orla
    lbt.t_lbt = 1000

Sections:
    scenario.*   id, seed, sim_duration (s), warmup (s), exact_dcf
    phy.*        PhyProfile fields (802.11ac defaults)
    wifi.*       template for every station, plus n, rates, relative_load, mpdu_bytes
    stations.i.* per-station overrides (data_rate_c, f_agg, payload_b, dcf.cw_min, ...)
    lbt.*        mode, t_lbt, rate, rho_variant, dcf.*
    policy.*     explicit PolicyParams; derived from the analytical model when absent

Comma-separated values become lists (``wifi.rates = 156,130,78,39,13``).
"""

import logging
import re
from collections.abc import Mapping
from pathlib import Path
from typing import Any, TypeVar

from pydantic import BaseModel, ValidationError

from .analytic import relative_load_to_q
from .errors import ConfigError
from .policy import derive_policy, newcomer_profile
from .schema import DcfParams, LbtMode, PhyProfile, PolicyParams, Scenario, StationProfile

log = logging.getLogger(__name__)

_KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*(\.[a-z0-9_]+)*$")

_SECTIONS = {"scenario", "phy", "wifi", "stations", "lbt", "policy"}
_SCENARIO_FIELDS = {
    "id": "scenario_id",
    "seed": "seed",
    "sim_duration": "sim_duration",
    "warmup": "warmup",
    "exact_dcf": "exact_dcf",
}
_LBT_KEYS = {"mode", "t_lbt", "rate", "rho_variant", "dcf"}
_WIFI_SHORTHANDS = ("n", "rates", "relative_load", "mpdu_bytes")

# Scenario field -> file key, for error messages
_FIELD_KEYS = {
    **{field: f"scenario.{key}" for key, field in _SCENARIO_FIELDS.items()},
    "lbt_mode": "lbt.mode",
    "lbt_t_lbt": "lbt.t_lbt",
    "lbt_rate": "lbt.rate",
    "lbt_dcf": "lbt.dcf",
    "rho_variant": "lbt.rho_variant",
}

_STATION_NUMERIC = {"data_rate_c", "f_agg", "payload_b", "arrival_prob_q",
                    "relative_load", "mpdu_bytes"}
_DCF_NUMERIC = {"cw_min", "max_backoff_stage", "retry_limit"}
_NUMERIC_PATH_RES = [
    re.compile(r"^phy\.(%s)$" % "|".join(PhyProfile.model_fields)),
    re.compile(r"^(wifi|stations\.\d+)\.(%s)$" % "|".join(_STATION_NUMERIC)),
    re.compile(r"^(wifi|stations\.\d+|lbt)\.dcf\.(%s)$" % "|".join(_DCF_NUMERIC)),
    re.compile(r"^wifi\.n$"),
    re.compile(r"^lbt\.(t_lbt|rate)$"),
    re.compile(r"^scenario\.(seed|sim_duration|warmup)$"),
]

M = TypeVar("M", bound=BaseModel)


# ---------------------------------------------------------------------------
# Text layer
# ---------------------------------------------------------------------------

def parse_key_values(text: str, source: str = "<string>") -> dict[str, str]:
    """Split scenario text into raw ``key -> value`` strings."""
    keys: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ConfigError(f"{source}:{lineno}: malformed key {key!r}")
        if key in keys:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        keys[key] = value
    return keys


def coerce_value(text: str) -> Any:
    """Interpret a raw value as list, bool, int, float or bare string."""
    if "," in text:
        return [coerce_value(part.strip()) for part in text.split(",") if part.strip()]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _nest(flat: Mapping[str, Any]) -> dict[str, Any]:
    root: dict[str, Any] = {}
    for key, value in flat.items():
        node = root
        *parents, leaf = key.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"key {key!r} conflicts with the value set at {part!r}")
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigError(f"key {key!r} conflicts with its own sub-keys")
        node[leaf] = value
    return root


def _merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _validate(model: type[M], data: Mapping[str, Any], prefix: str) -> M:
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        loc = [str(part) for part in err["loc"]]
        if not prefix and loc:
            loc[0] = _FIELD_KEYS.get(loc[0], loc[0])
        where = ".".join(p for p in (prefix, *loc) if p) or "scenario"
        raise ConfigError(f"{where}: {err['msg']}") from exc


def _positive(value: Any, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, int | float) or value <= 0:
        raise ConfigError(f"{key}: expected a positive number, got {value!r}")
    return float(value)


# ---------------------------------------------------------------------------
# Scenario assembly
# ---------------------------------------------------------------------------

def _build_stations(
    wifi: Mapping[str, Any], explicit: Mapping[str, Any], exact_dcf: bool
) -> list[StationProfile]:
    template = dict(wifi)
    n = template.pop("n", None)
    rates = template.pop("rates", None)
    if rates is not None and not isinstance(rates, list):
        rates = [rates]
    if n is not None and (isinstance(n, bool) or not isinstance(n, int) or n < 0):
        raise ConfigError(f"wifi.n: expected a non-negative integer, got {n!r}")
    if rates is not None and n is not None and len(rates) != n:
        raise ConfigError(f"wifi.rates lists {len(rates)} rates for wifi.n = {n}")
    count = n if n is not None else len(rates or [])

    for index in explicit:
        if not str(index).isdigit():
            raise ConfigError(f"stations.{index}: station index must be an integer")
        count = max(count, int(index) + 1)

    stations = []
    for i in range(count):
        fields = dict(template)
        if rates is not None and i < len(rates):
            fields["data_rate_c"] = rates[i]
        fields = _merge(fields, explicit.get(str(i), {}))
        load = fields.pop("relative_load", None)
        mpdu = fields.pop("mpdu_bytes", None)
        prefix = f"stations.{i}"
        if mpdu is not None:
            if "payload_b" in fields:
                raise ConfigError(f"{prefix}: give either mpdu_bytes or payload_b, not both")
            f_agg = fields.get("f_agg", 1)
            if isinstance(f_agg, float) and f_agg.is_integer():
                f_agg = int(f_agg)
            if isinstance(f_agg, bool) or not isinstance(f_agg, int) or f_agg < 1:
                raise ConfigError(f"{prefix}.f_agg: expected a positive integer, got {f_agg!r}")
            fields["payload_b"] = int(round(_positive(mpdu, f"{prefix}.mpdu_bytes"))) * 8 * f_agg
        if load is not None:
            if "arrival_prob_q" in fields:
                raise ConfigError(f"{prefix}: give either relative_load or arrival_prob_q")
            dcf = _validate(DcfParams, fields.get("dcf", {}), f"{prefix}.dcf")
            fields["arrival_prob_q"] = relative_load_to_q(
                _positive(load, f"{prefix}.relative_load"), count, dcf, exact_dcf=exact_dcf)
        stations.append(_validate(StationProfile, fields, prefix))
    return stations


def build_scenario(keys: Mapping[str, Any], default_id: str = "scenario") -> Scenario:
    """Validate a flat key mapping into a Scenario, deriving the policy if needed.

    String values are coerced with :func:`coerce_value`; other values pass through.

    Raises:
        ConfigError: naming the offending key.
    """
    values = {k: coerce_value(v) if isinstance(v, str) else v for k, v in keys.items()}
    tree = _nest(values)
    unknown = sorted(set(tree) - _SECTIONS)
    if unknown:
        raise ConfigError(f"unknown section {unknown[0]!r}")

    scen = tree.get("scenario", {})
    for key in scen:
        if key not in _SCENARIO_FIELDS:
            raise ConfigError(f"unknown key 'scenario.{key}'")
    lbt = tree.get("lbt", {})
    for key in lbt:
        if key not in _LBT_KEYS:
            raise ConfigError(f"unknown key 'lbt.{key}'")

    exact_dcf = scen.get("exact_dcf", True)
    phy = _validate(PhyProfile, tree.get("phy", {}), "phy")
    stations = _build_stations(tree.get("wifi", {}), tree.get("stations", {}),
                               bool(exact_dcf))

    try:
        mode = LbtMode(str(lbt.get("mode", "none")))
    except ValueError:
        choices = ", ".join(m.value for m in LbtMode)
        raise ConfigError(f"lbt.mode: {lbt.get('mode')!r} is not one of {choices}") from None
    t_lbt = _positive(lbt.get("t_lbt", 1000.0), "lbt.t_lbt")
    rate = _positive(lbt.get("rate", 130.0), "lbt.rate")

    lbt_dcf = None
    if "dcf" in lbt:
        lbt_dcf = _validate(DcfParams, lbt["dcf"], "lbt.dcf")
    elif mode.contends:
        lbt_dcf = stations[0].dcf if stations else DcfParams()

    policy = None
    variant = lbt.get("rho_variant", "tight")
    if "policy" in tree:
        policy = _validate(PolicyParams, {"t_lbt": t_lbt, **tree["policy"]}, "policy")
    elif mode.orthogonal:
        if variant not in ("tight", "closed_form"):
            raise ConfigError(
                f"lbt.rho_variant: expected 'tight' or 'closed_form', got {variant!r}")
        policy = derive_policy(phy, stations, t_lbt, newcomer_profile(stations, rate, lbt_dcf),
                               exact_dcf=bool(exact_dcf), variant=variant)

    data = {
        **{field: scen[key] for key, field in _SCENARIO_FIELDS.items() if key in scen},
        "phy": phy,
        "stations": stations,
        "lbt_mode": mode,
        "lbt_t_lbt": t_lbt,
        "lbt_rate": rate,
        "lbt_dcf": lbt_dcf,
        "policy": policy,
        "rho_variant": variant,
    }
    data.setdefault("scenario_id", default_id)
    data["scenario_id"] = str(data["scenario_id"])
    return _validate(Scenario, data, "")


def load_scenario_keys(path: str | Path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from exc
    return parse_key_values(text, source=str(path))


def load_scenario(path: str | Path, seed: int | None = None) -> Scenario:
    """Read and validate a scenario file; ``seed`` overrides ``scenario.seed``."""
    keys: dict[str, Any] = dict(load_scenario_keys(path))
    if seed is not None:
        keys["scenario.seed"] = seed
    scenario = build_scenario(keys, default_id=Path(path).stem)
    log.debug("loaded %s: %d stations, mode %s", path, scenario.n_wifi, scenario.lbt_mode.value)
    return scenario


def is_numeric_path(path: str) -> bool:
    """True if ``path`` names a numeric scenario-file key."""
    return any(rx.match(path) for rx in _NUMERIC_PATH_RES)


# ---------------------------------------------------------------------------
# Paired variants
# ---------------------------------------------------------------------------

def legacy_twin(scenario: Scenario) -> Scenario:
    """Same scenario with the LBT node replaced by one more WiFi station."""
    dcf = scenario.lbt_dcf
    if dcf is None:
        dcf = scenario.stations[0].dcf if scenario.stations else DcfParams()
    return scenario.model_copy(update={
        "scenario_id": f"{scenario.scenario_id}-legacy",
        "lbt_mode": LbtMode.WIFI_LEGACY,
        "lbt_dcf": dcf,
        "policy": None,
    })


def wifi_only(scenario: Scenario) -> Scenario:
    """Same WiFi population without any LBT node."""
    return scenario.model_copy(update={
        "scenario_id": f"{scenario.scenario_id}-wifi",
        "lbt_mode": LbtMode.NONE,
        "policy": None,
    })
