"""Scenario runner: `simulate <scenario> --config <file> [--preset figN] [--out dir]`.

The configuration is an INI file with the sections [params], [truncation],
[grid] and [run]; a section named after the scenario may override [grid]
and [run] keys.  Unknown sections or keys are hard errors.

Exit codes: 0 success, 1 configuration parse error, 2 validation error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import math
import os
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .approx import lta_pt, nondissipative_pt, psa_pt, rate_set, sea_fourier, sea_pt, sea_rate
from .core_model import SystemParams, osc_energy, perturbation_error, validate_params, validity_warnings
from .errors import ConfigError, NumericError, QnodynError, ValidationError
from .observables import initial_density, position_matrix, weight_table
from .redfield import integrate_master, population_difference, redfield_tensor
from .spectra import fourier_numeric
from .vanvleck import vanvleck_states

SCENARIOS = ("spectrum", "dynamics", "fourier", "rates-sweep", "compare")
METHODS = ("numeric", "SEA", "LTA", "PSA", "nondissipative")
WORKERS_ENV = "QNODYN_WORKERS"

_PARAM_KEYS = ("epsilon", "delta0", "omega", "alpha", "g", "kappa", "beta")
SCHEMA = {
    "params": {**{k: float for k in _PARAM_KEYS}, "unit_base": str},
    "truncation": {"n_doublets": int, "j_cut": int},
    "grid": {
        "t_max": float, "dt": float,
        "omega_min": float, "omega_max": float, "omega_steps": int,
        "sweep_min": float, "sweep_max": float, "sweep_steps": int,
    },
    "run": {"method": str, "eta": float, "window_t": float, "min_spacing": float},
}
OVERRIDABLE = {**SCHEMA["grid"], **SCHEMA["run"]}


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    params: SystemParams
    unit_base: str = "omega"
    n_doublets: int = 4
    j_cut: int = 1
    t_max: float = 150.0
    dt: float = 0.05
    omega_min: float = 0.3
    omega_max: float = 2.0
    omega_steps: int = 1701
    sweep_min: float = 0.5
    sweep_max: float = 1.5
    sweep_steps: int = 1001
    method: str = "all"
    eta: float | None = None
    window_t: float | None = None
    min_spacing: float | None = None
    preset: str | None = None

    @property
    def methods(self) -> tuple[str, ...]:
        if self.method == "all":
            return ("numeric", "SEA", "LTA", "PSA")
        return (self.method,)

    def t_grid(self) -> np.ndarray:
        n = int(round(self.t_max / self.dt))
        return self.dt * np.arange(n + 1)

    def omega_grid(self) -> np.ndarray:
        return np.linspace(self.omega_min, self.omega_max, self.omega_steps)

    def sweep_grid(self) -> np.ndarray:
        return np.linspace(self.sweep_min, self.sweep_max, self.sweep_steps)


_FIG_BASE = dict(epsilon=0.0, delta0=1.0, omega=1.0, alpha=0.02, g=0.18, kappa=0.0154, beta=10.0)
PRESETS = {
    "fig1": {"scenario": "spectrum", "params": dict(_FIG_BASE, kappa=0.0), "unit_base": "delta0", "n_doublets": 2,
             "sweep_min": 0.6, "sweep_max": 1.5, "sweep_steps": 901},
    "fig2": {"scenario": "compare", "params": dict(_FIG_BASE, kappa=0.0), "method": "nondissipative",
             "t_max": 2000.0, "dt": 0.1, "omega_min": 0.3, "omega_max": 2.0, "omega_steps": 3401},
    "fig3": {"scenario": "rates-sweep", "params": dict(_FIG_BASE, epsilon=0.5), "unit_base": "delta0",
             "n_doublets": 1, "sweep_min": 0.8, "sweep_max": 1.4, "sweep_steps": 601},
    "fig4": {"scenario": "dynamics", "params": dict(_FIG_BASE), "method": "all", "t_max": 150.0},
    "fig5": {"scenario": "compare", "params": dict(_FIG_BASE, beta=3.0), "method": "SEA", "n_doublets": 6},
    "fig6": {"scenario": "compare", "params": dict(_FIG_BASE, beta=3.0, delta0=1.18), "method": "SEA",
             "n_doublets": 6},
}


# ---------------------------------------------------------------------------
# configuration


def _convert(key: str, raw: str, kind):
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"key '{key}': cannot read {raw!r} as {kind.__name__}") from None


def load_config(path, scenario: str, preset: str | None = None) -> ScenarioConfig:
    """Parse `path` on top of the optional preset and validate the result."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario '{scenario}'; expected one of {', '.join(SCENARIOS)}")
    if preset is not None and preset not in PRESETS:
        raise ConfigError(f"unknown preset '{preset}'; expected one of {', '.join(PRESETS)}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except configparser.Error as exc:
        raise ConfigError(f"config file {path}: {exc}") from None

    base = PRESETS.get(preset, {})
    params = dict(base.get("params", {}))
    values = {k: v for k, v in base.items() if k not in ("params", "scenario")}
    for section in parser.sections():
        if section in SCHEMA:
            schema = SCHEMA[section]
        elif section == scenario:
            schema = OVERRIDABLE
        else:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in schema:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            val = _convert(key, raw, schema[key])
            if section == "params" and key != "unit_base":
                params[key] = val
            else:
                values[key] = val
    # scenario sections take precedence over [grid]/[run]
    if parser.has_section(scenario):
        for key, raw in parser.items(scenario):
            values[key] = _convert(key, raw, OVERRIDABLE[key])

    cfg = ScenarioConfig(scenario=scenario, params=SystemParams(**params), preset=preset, **values)
    return validate_config(cfg)


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    validate_params(cfg.params, warn=False)
    if cfg.unit_base not in ("delta0", "omega"):
        raise ValidationError(f"unit_base must be 'delta0' or 'omega', got '{cfg.unit_base}'")
    base_key = cfg.unit_base
    if not math.isclose(getattr(cfg.params, base_key), 1.0):
        raise ValidationError(f"unit_base = {base_key} requires {base_key} = 1")
    if cfg.scenario in ("rates-sweep", "spectrum") and cfg.unit_base != "delta0" and cfg.sweep_steps > 1:
        raise ValidationError(f"scenario {cfg.scenario} sweeps omega and needs unit_base = delta0")
    if cfg.method != "all" and cfg.method not in METHODS:
        raise ValidationError(f"key 'method': unknown method '{cfg.method}'")
    if cfg.scenario == "compare" and cfg.method == "all":
        raise ValidationError("key 'method': scenario compare takes a single method")
    if cfg.n_doublets < 1:
        raise ValidationError("key 'n_doublets' must be >= 1")
    if not 0 <= cfg.j_cut <= cfg.n_doublets:
        raise ValidationError("key 'j_cut' must lie in [0, n_doublets]")
    for key in ("t_max", "dt"):
        if not getattr(cfg, key) > 0:
            raise ValidationError(f"key '{key}' must be > 0")
    for key in ("omega_steps", "sweep_steps"):
        if getattr(cfg, key) < 1:
            raise ValidationError(f"key '{key}' must be >= 1 (empty grid)")
    if cfg.omega_steps > 1 and not cfg.omega_max > cfg.omega_min:
        raise ValidationError("key 'omega_max' must exceed omega_min")
    if cfg.sweep_steps > 1 and not cfg.sweep_max > cfg.sweep_min:
        raise ValidationError("key 'sweep_max' must exceed sweep_min")
    if cfg.t_max / cfg.dt < 1:
        raise ValidationError("key 't_max' must cover at least one step 'dt'")
    return cfg


# ---------------------------------------------------------------------------
# model assembly


@dataclass
class Model:
    params: SystemParams
    spec: object
    y: np.ndarray
    tensor: object
    rho0: object
    weights: object
    rates: object


def build_model(p: SystemParams, n_doublets: int, j_cut: int = 1) -> Model:
    spec = vanvleck_states(p, n_doublets)
    y = position_matrix(p, n_doublets).y
    tensor = redfield_tensor(p, spec, y)
    rho0 = initial_density(p, n_doublets, j_cut, spec)
    weights = weight_table(p, spec, rho0)
    return Model(p, spec, y, tensor, rho0, weights, rate_set(tensor))


def time_series(model: Model, method: str, t: np.ndarray):
    p = model.params
    if method == "numeric":
        traj = integrate_master(model.rho0, model.spec, model.tensor, t)
        return population_difference(traj, model.weights)
    if method == "SEA":
        return sea_pt(model.rates, model.spec, model.weights, t, p)
    if method == "LTA":
        return lta_pt(p, model.rho0, model.rates, model.weights, t)
    if method == "PSA":
        return psa_pt(p, model.rho0, model.rates, model.weights, t)
    if method == "nondissipative":
        return nondissipative_pt(p, model.spec, model.weights, t)
    raise ValidationError(f"key 'method': unknown method '{method}'")


def spectrum_of(model: Model, method: str, cfg: ScenarioConfig):
    w = cfg.omega_grid()
    if method == "SEA":
        return sea_fourier(model.rates, model.spec, model.weights, w, model.params)
    series = time_series(model, method, cfg.t_grid())
    return fourier_numeric(series, w, cfg.window_t, eta=cfg.eta, min_spacing=cfg.min_spacing)


# ---------------------------------------------------------------------------
# scenarios


def _spectrum_row(args):
    p, nd = args
    spec = vanvleck_states(p, nd)
    half = 0.5 * p.delta_b
    unc = []
    for j in range(nd + 1):
        unc += [osc_energy(j, p) - half, osc_energy(j, p) + half]
    return [p.omega, *spec.energies[: 2 * nd + 1], *unc]


def _rate_row(p):
    spec = vanvleck_states(p, 1)
    y = position_matrix(p, 1).y
    g1, g2 = sea_rate(rate_set(redfield_tensor(p, spec, y)))
    return [p.omega, g1, g2]


def _map(fn, items):
    workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def scenario_spectrum(cfg: ScenarioConfig):
    nd = cfg.n_doublets
    grid = cfg.sweep_grid() if cfg.sweep_steps > 1 else [cfg.params.omega]
    rows = _map(_spectrum_row, [(cfg.params.with_(omega=float(w)), nd) for w in grid])
    cols = ["omega"] + [f"E{n}" for n in range(2 * nd + 1)]
    for j in range(nd + 1):
        cols += [f"U{j}g", f"U{j}e"]
    return {"spectrum": (cols, rows)}


def scenario_rates(cfg: ScenarioConfig):
    rows = _map(_rate_row, [cfg.params.with_(omega=float(w)) for w in cfg.sweep_grid()])
    return {"rates": (["omega", "gamma_r", "second_eigenvalue"], rows)}


def scenario_dynamics(cfg: ScenarioConfig):
    model = build_model(cfg.params, cfg.n_doublets, cfg.j_cut)
    t = cfg.t_grid()
    cols, data = ["t"], [t]
    for m in cfg.methods:
        cols.append(f"P_{m}")
        data.append(time_series(model, m, t).values)
    return {"dynamics": (cols, np.column_stack(data).tolist())}


def scenario_fourier(cfg: ScenarioConfig):
    model = build_model(cfg.params, cfg.n_doublets, cfg.j_cut)
    cols, data, meta = ["omega"], [cfg.omega_grid()], {}
    for m in cfg.methods:
        s = spectrum_of(model, m, cfg)
        cols.append(f"F_{m}")
        data.append(s.values)
        meta[m] = {k: v for k, v in {**s.meta, "delta_weight": s.delta_weight}.items() if v is not None}
    return {"fourier": (cols, np.column_stack(data).tolist())}, meta


def scenario_compare(cfg: ScenarioConfig):
    """Nonlinear system against its linear (alpha = 0) counterpart."""
    m = cfg.method
    models = {"nonlinear": build_model(cfg.params, cfg.n_doublets, cfg.j_cut),
              "linear": build_model(cfg.params.with_(alpha=0.0), cfg.n_doublets, cfg.j_cut)}
    t = cfg.t_grid()
    pt = [t] + [time_series(mod, m, t).values for mod in models.values()]
    fw = [cfg.omega_grid()] + [spectrum_of(mod, m, cfg).values for mod in models.values()]
    return {
        "compare_pt": (["t", "P_nonlinear", "P_linear"], np.column_stack(pt).tolist()),
        "compare_fw": (["omega", "F_nonlinear", "F_linear"], np.column_stack(fw).tolist()),
    }


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, cols, rows, manifest_name: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# manifest: {manifest_name}\n")
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(_fmt(x) for x in r) + "\n")


def _perturbation_notes(p: SystemParams, nd: int) -> list[str]:
    if p.alpha <= 0:
        return []
    return [
        f"Er1({j}) = {perturbation_error(j, 1, p):.3g}, Er2({j}) = {perturbation_error(j, 2, p):.3g}"
        for j in range(1, nd + 2)
    ]


def run_scenario(cfg: ScenarioConfig, out_dir) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handlers = {
        "spectrum": scenario_spectrum,
        "rates-sweep": scenario_rates,
        "dynamics": scenario_dynamics,
        "fourier": scenario_fourier,
        "compare": scenario_compare,
    }
    result = handlers[cfg.scenario](cfg)
    extra = {}
    if isinstance(result, tuple):
        result, extra = result
    stem = cfg.scenario.replace("-", "_")
    manifest_name = f"{stem}_manifest.json"
    written = []
    for name, (cols, rows) in result.items():
        path = out / f"{name}.csv"
        write_csv(path, cols, rows, manifest_name)
        written.append(path)
    manifest = {
        "scenario": cfg.scenario,
        "preset": cfg.preset,
        "config": {k: v for k, v in asdict(cfg).items() if k != "params"},
        "params": cfg.params.as_dict(),
        "unit_base": cfg.unit_base,
        "retained_levels": 2 * cfg.n_doublets + 1,
        "warnings": validity_warnings(cfg.params, cfg.n_doublets + 1),
        "perturbation_errors": _perturbation_notes(cfg.params, cfg.n_doublets),
        "method_meta": extra,
        "files": [p.name for p in written],
        "versions": {"qnodyn": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    mpath = out / manifest_name
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return written + [mpath]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="simulate", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--preset", choices=sorted(PRESETS))
    ap.add_argument("--out", default="out")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(args.config, args.scenario, args.preset)
        files = run_scenario(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    except QnodynError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
