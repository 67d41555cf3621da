"""Plain-text scenario config parser.

Format: `key = value` pairs grouped in bracketed sections ([topology],
[fading], [estimator], [run]); `#` starts a comment; unknown sections or keys
are rejected with the offending line number; duplicate keys report both
occurrences.
"""

from __future__ import annotations

from .experiments import (
    DECISION_DIRECTED,
    DEFAULT_SNR_REF_POWER,
    GENIE,
    EstimatorSpec,
    Scenario,
)
from .fading import CLARKE, QUASI_STATIC, FadingSpec
from .wsn import Topology


class ConfigError(ValueError):
    """Malformed or invalid scenario config."""


_SECTIONS = {
    "topology": {"hops", "sources", "destinations", "relays"},
    "fading": {"kind", "doppler", "doppler_grid", "entry_power"},
    "estimator": {"variants", "estimator", "gamma", "alpha", "beta", "gamma0",
                  "step_size", "forgetting"},
    "run": {"n_symbols", "n_training", "trials", "snr_db", "seed", "feed",
            "amplification", "snr_ref_power", "snr_grid_db", "gamma_grid"},
}

_REQUIRED = {
    "topology": {"hops", "sources", "destinations", "relays"},
    "run": {"n_symbols", "n_training", "trials", "snr_db"},
}

_DEFAULT_SEED = 12345


def _tokenize(text: str):
    """Yield (line_no, section, key, value) after syntax checks."""
    section = None
    seen: dict[tuple[str, str], int] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise ConfigError(f"line {line_no}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ConfigError(f"line {line_no}: expected key = value, got {raw.strip()!r}")
        if section is None:
            raise ConfigError(f"line {line_no}: key before any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in _SECTIONS[section]:
            raise ConfigError(f"line {line_no}: unknown key {key!r} in [{section}]")
        prev = seen.get((section, key))
        if prev is not None:
            raise ConfigError(
                f"duplicate key {key!r} in [{section}]: lines {prev} and {line_no}"
            )
        seen[(section, key)] = line_no
        yield line_no, section, key, value


def _to_int(value, where):
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {value!r}") from None


def _to_float(value, where):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {value!r}") from None


def _to_float_list(value, where):
    parts = value.replace(",", " ").split()
    if not parts:
        raise ConfigError(f"{where}: expected a list of numbers")
    return tuple(_to_float(p, where) for p in parts)


def _parse_variant(token: str, where: str) -> EstimatorSpec:
    parts = token.split()
    if not parts:
        raise ConfigError(f"{where}: empty variant spec")
    kwargs = {"algorithm": parts[0].lower()}
    key_map = {"gamma": "gamma", "alpha": "alpha", "beta": "beta", "gamma0": "gamma0",
               "mu": "step_size", "step_size": "step_size",
               "lambda": "forgetting", "forgetting": "forgetting"}
    for part in parts[1:]:
        if part.lower() == "tvb":
            kwargs["tvb"] = True
            continue
        if "=" not in part:
            raise ConfigError(f"{where}: expected key=value or 'tvb', got {part!r}")
        key, value = part.split("=", 1)
        field = key_map.get(key.lower())
        if field is None:
            raise ConfigError(f"{where}: unknown variant parameter {key!r}")
        kwargs[field] = _to_float(value, where)
    try:
        return EstimatorSpec(**kwargs)
    except Exception as exc:
        raise ConfigError(f"{where}: {exc}") from None


def parse_config(text: str) -> Scenario:
    """Parse config text into a fully validated Scenario."""
    values: dict[tuple[str, str], tuple[int, str]] = {}
    for line_no, section, key, value in _tokenize(text):
        values[(section, key)] = (line_no, value)

    for section, required in _REQUIRED.items():
        for key in required:
            if (section, key) not in values:
                raise ConfigError(f"missing required key {key!r} in [{section}]")

    def get(section, key, default=None):
        item = values.get((section, key))
        return item[1] if item is not None else default

    where = lambda section, key: f"[{section}] {key}"

    topology = Topology(
        hops=_to_int(get("topology", "hops"), where("topology", "hops")),
        sources=_to_int(get("topology", "sources"), where("topology", "sources")),
        destinations=_to_int(get("topology", "destinations"),
                             where("topology", "destinations")),
        relay_counts=tuple(
            int(v) for v in _to_float_list(get("topology", "relays"),
                                           where("topology", "relays"))
        ),
    )

    kind = (get("fading", "kind", QUASI_STATIC) or QUASI_STATIC).lower()
    if kind not in (QUASI_STATIC, CLARKE):
        raise ConfigError(f"[fading] kind must be {QUASI_STATIC!r} or {CLARKE!r}, got {kind!r}")
    fading = FadingSpec(
        kind=kind,
        doppler=_to_float(get("fading", "doppler", "0"), where("fading", "doppler")),
        entry_power=_to_float(get("fading", "entry_power", "0.2"),
                              where("fading", "entry_power")),
    )
    doppler_grid = None
    if get("fading", "doppler_grid") is not None:
        if kind != CLARKE:
            raise ConfigError("[fading] doppler_grid requires kind = clarke")
        doppler_grid = _to_float_list(get("fading", "doppler_grid"),
                                      where("fading", "doppler_grid"))

    if get("estimator", "variants") is not None:
        if get("estimator", "estimator") is not None:
            raise ConfigError("[estimator] give either 'variants' or 'estimator', not both")
        variants = tuple(
            _parse_variant(tok.strip(), "[estimator] variants")
            for tok in get("estimator", "variants").split("|")
        )
    elif get("estimator", "estimator") is not None:
        kwargs = {"algorithm": get("estimator", "estimator").lower()}
        for cfg_key, field in (("gamma", "gamma"), ("alpha", "alpha"), ("beta", "beta"),
                               ("gamma0", "gamma0"), ("step_size", "step_size"),
                               ("forgetting", "forgetting")):
            if get("estimator", cfg_key) is not None:
                kwargs[field] = _to_float(get("estimator", cfg_key),
                                          where("estimator", cfg_key))
        try:
            variants = (EstimatorSpec(**kwargs),)
        except Exception as exc:
            raise ConfigError(f"[estimator]: {exc}") from None
    else:
        raise ConfigError("missing [estimator] variants (or estimator = ...)")

    n_total = _to_int(get("run", "n_symbols"), where("run", "n_symbols"))
    n_train = _to_int(get("run", "n_training"), where("run", "n_training"))
    if not 0 < n_train <= n_total:
        raise ConfigError(
            f"[run] needs 0 < n_training <= n_symbols, got n_training={n_train}, "
            f"n_symbols={n_total}"
        )
    feed = (get("run", "feed", GENIE) or GENIE).lower()
    if feed not in (GENIE, DECISION_DIRECTED):
        raise ConfigError(f"[run] feed must be {GENIE!r} or {DECISION_DIRECTED!r}")

    snr_grid = (None if get("run", "snr_grid_db") is None
                else _to_float_list(get("run", "snr_grid_db"), where("run", "snr_grid_db")))
    gamma_grid = (None if get("run", "gamma_grid") is None
                  else _to_float_list(get("run", "gamma_grid"), where("run", "gamma_grid")))

    try:
        return Scenario(
            topology=topology,
            fading=fading,
            snr_db=_to_float(get("run", "snr_db"), where("run", "snr_db")),
            n_total=n_total,
            n_train=n_train,
            variants=variants,
            trials=_to_int(get("run", "trials"), where("run", "trials")),
            seed=_to_int(get("run", "seed", str(_DEFAULT_SEED)), where("run", "seed")),
            feed=feed,
            amplification=_to_float(get("run", "amplification", "1"),
                                    where("run", "amplification")),
            snr_ref_power=_to_float(get("run", "snr_ref_power",
                                        str(DEFAULT_SNR_REF_POWER)),
                                    where("run", "snr_ref_power")),
            snr_grid_db=snr_grid,
            gamma_grid=gamma_grid,
            doppler_grid=doppler_grid,
        )
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())
