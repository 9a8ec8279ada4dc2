"""Run configuration: INI parsing, validation, and typed access.

The format is strict: every key must be known, values are validated on
load, and the parsed object echoes back exactly what a run used so two
runs with the same file are bitwise reproducible.
"""

import configparser
from dataclasses import dataclass, field

from . import chem
from .adapt import AdaptConfig
from .errors import ConfigError

MODES = ("adaptive", "complex-only", "simple-only")
INIT_CASES = ("shock_tube", "constant_equilibrium", "smooth_equilibrium")

# every option the file may contain, per section
_KNOWN = {
    "mesh": {"a", "b", "n_cells"},
    "time": {"t_final", "cfl", "snapshots"},
    "adapt": {"mode", "tau_r", "tau_kappa", "f_eps", "eps_over_nu",
              "min_patch"},
    "limiter": {"enabled", "tvb_m"},
    "init": {"case", "temperature", "velocity", "p_inner", "rho_o_inner",
             "p_outer", "rho_o_outer", "x_lo", "x_hi", "preset",
             "pressure", "rho_o", "amplitude", "wavenumber"},
    "thermo": {"m", "cv", "e0", "s_ref_molar", "rho_ref", "gas_constant",
               "t_ref", "p_ref", "rate_prefactor", "rate_activation_temp",
               "literal_cv_table"},
    "output": {"plots", "bound", "dump_residuals", "state_snapshots"},
}

_REQUIRED = {
    "mesh": {"n_cells"},
    "time": {"t_final"},
    "adapt": set(),
    "limiter": set(),
    "init": {"case"},
    "thermo": set(),
    "output": set(),
}


@dataclass
class InitSpec:
    """Initial-condition selector plus its numeric parameters."""

    case: str
    params: dict


@dataclass
class RunConfig:
    """Validated inputs of one run."""

    mesh_a: float
    mesh_b: float
    n_cells: int
    t_final: float
    cfl: float
    snapshots: tuple
    mode: str
    adapt: AdaptConfig
    eps_over_nu_spec: str
    limiter: bool
    tvb_m: float
    init: InitSpec
    thermo_overrides: dict = field(default_factory=dict)
    plots: bool = False
    bound: bool = False
    dump_residuals: bool = False
    state_snapshots: bool = False

    def make_table(self):
        try:
            return chem.ThermoTable(**self.thermo_overrides)
        except chem.ChemistryError as exc:
            raise ConfigError(str(exc))


def _get(parser, section, key, conv, default=None, required=False):
    if not parser.has_option(section, key):
        if required:
            raise ConfigError("missing required key [%s] %s" % (section, key))
        return default
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except (ValueError, TypeError):
        raise ConfigError("bad value for [%s] %s: %r" % (section, key, raw))


def _bool(raw):
    low = raw.strip().lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(raw)


def _floats(raw):
    parts = [p for p in raw.replace(",", " ").split() if p]
    return tuple(float(p) for p in parts)


def load_config(path):
    """Parse and validate a run configuration file.

    Raises:
        ConfigError: on unreadable files, unknown sections or keys,
            malformed values, or violated invariants.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc))
    except configparser.Error as exc:
        raise ConfigError("malformed config %s: %s" % (path, exc))

    for section in parser.sections():
        if section not in _KNOWN:
            raise ConfigError("unknown section [%s]" % section)
        for key in parser.options(section):
            if key not in _KNOWN[section]:
                raise ConfigError("unknown key [%s] %s" % (section, key))
    for section, keys in _REQUIRED.items():
        for key in keys:
            if not parser.has_option(section, key):
                raise ConfigError(
                    "missing required key [%s] %s" % (section, key))

    a = _get(parser, "mesh", "a", float, 0.0)
    b = _get(parser, "mesh", "b", float, 1.0)
    n_cells = _get(parser, "mesh", "n_cells", int, required=True)
    if n_cells < 4:
        raise ConfigError("n_cells must be at least 4")
    if not b > a:
        raise ConfigError("mesh interval is empty")

    t_final = _get(parser, "time", "t_final", float, required=True)
    if not t_final > 0.0:
        raise ConfigError("t_final must be positive")
    cfl = _get(parser, "time", "cfl", float, 0.1)
    if not 0.0 < cfl <= 0.1:
        raise ConfigError("cfl must lie in (0, 0.1]")
    snaps = _get(parser, "time", "snapshots", _floats, (t_final,))
    snaps = tuple(sorted(set(snaps)))
    if any(t < 0.0 or t > t_final * (1.0 + 1e-12) for t in snaps):
        raise ConfigError("snapshot times must lie in [0, t_final]")
    if not snaps or abs(snaps[-1] - t_final) > 1e-12 * t_final:
        snaps = snaps + (t_final,)

    mode = _get(parser, "adapt", "mode", str, "adaptive").strip()
    if mode not in MODES:
        raise ConfigError("mode must be one of %s" % (MODES,))
    eon_raw = _get(parser, "adapt", "eps_over_nu", str, "1.0").strip()
    if eon_raw != "auto":
        try:
            eon_val = float(eon_raw)
        except ValueError:
            raise ConfigError("eps_over_nu must be a float or 'auto'")
        if not eon_val > 0.0:
            raise ConfigError("eps_over_nu must be positive")
    adapt_cfg = AdaptConfig(
        tau_r=_get(parser, "adapt", "tau_r", float, 0.16),
        tau_kappa=_get(parser, "adapt", "tau_kappa", float, 0.0016),
        f_eps=_get(parser, "adapt", "f_eps", float, 0.25),
        eps_over_nu=1.0 if eon_raw == "auto" else float(eon_raw),
        min_patch=_get(parser, "adapt", "min_patch", int, 2))

    limiter = _get(parser, "limiter", "enabled", _bool, True)
    tvb_m = _get(parser, "limiter", "tvb_m", float, 0.0)
    if tvb_m < 0.0:
        raise ConfigError("tvb_m must be nonnegative")

    case = _get(parser, "init", "case", str, required=True).strip()
    if case not in INIT_CASES:
        raise ConfigError("init case must be one of %s" % (INIT_CASES,))
    params = {}
    if parser.has_section("init"):
        for key in parser.options("init"):
            if key in ("case", "preset"):
                continue
            params[key] = _get(parser, "init", key, float)
    preset = _get(parser, "init", "preset", str, None)
    if preset is not None:
        preset = preset.strip()
        if preset not in ("unit", "symmetric"):
            raise ConfigError("init preset must be 'unit' or 'symmetric'")
        if case != "shock_tube":
            raise ConfigError("init preset applies to the shock tube only")
        lo, hi = (0.25, 0.75) if preset == "unit" else (-0.5, 0.5)
        params.setdefault("x_lo", lo)
        params.setdefault("x_hi", hi)

    thermo = {}
    if parser.has_section("thermo"):
        tuple_keys = {"m", "cv", "e0", "s_ref_molar", "rho_ref"}
        for key in parser.options("thermo"):
            name = "T_ref" if key == "t_ref" else key
            if key in tuple_keys:
                thermo[name] = _get(parser, "thermo", key, _floats)
            elif key == "literal_cv_table":
                thermo[name] = _get(parser, "thermo", key, _bool)
            else:
                thermo[name] = _get(parser, "thermo", key, float)

    cfg = RunConfig(
        mesh_a=a, mesh_b=b, n_cells=n_cells, t_final=t_final, cfl=cfl,
        snapshots=snaps, mode=mode, adapt=adapt_cfg,
        eps_over_nu_spec=eon_raw, limiter=limiter, tvb_m=tvb_m,
        init=InitSpec(case=case, params=params), thermo_overrides=thermo,
        plots=_get(parser, "output", "plots", _bool, False),
        bound=_get(parser, "output", "bound", _bool, False),
        dump_residuals=_get(parser, "output", "dump_residuals", _bool,
                            False),
        state_snapshots=_get(parser, "output", "state_snapshots", _bool,
                             False))
    _validate_init(cfg)
    return cfg


def _validate_init(cfg):
    p = cfg.init.params
    known = {
        "shock_tube": {"temperature", "velocity", "p_inner", "rho_o_inner",
                       "p_outer", "rho_o_outer", "x_lo", "x_hi"},
        "constant_equilibrium": {"temperature", "velocity", "pressure",
                                 "rho_o"},
        "smooth_equilibrium": {"temperature", "velocity", "pressure",
                               "rho_o", "amplitude", "wavenumber"},
    }[cfg.init.case]
    extra = set(p) - known
    if extra:
        raise ConfigError(
            "init parameters %s do not apply to case %s"
            % (sorted(extra), cfg.init.case))
    if cfg.init.case == "shock_tube":
        lo = p.get("x_lo", 0.25)
        hi = p.get("x_hi", 0.75)
        if not (cfg.mesh_a <= lo < hi <= cfg.mesh_b):
            raise ConfigError(
                "shock tube inner region [%g, %g] must lie inside the "
                "mesh interval [%g, %g]" % (lo, hi, cfg.mesh_a, cfg.mesh_b))


def shock_tube_defaults():
    """Published shock-tube parameters on the unit-interval convention."""
    return {"temperature": 2000.0, "velocity": 0.0, "p_inner": 2.0e6,
            "rho_o_inner": 0.01, "p_outer": 1.0e6, "rho_o_outer": 0.005,
            "x_lo": 0.25, "x_hi": 0.75}
