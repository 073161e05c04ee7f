"""Config files for the command line tools.

A model is described by a small TOML document with ``schema = 1`` and
blocks for the system, the coupling operators, the bath, the run
controls and the diagnostic thresholds.  Case runners read their own
blocks (``[toy]``, ``[photonic]``, ``[kondo]``, ``[thermalization]``)
and fall back to built-in defaults, so they work without any file.
Values can be patched from the command line with repeatable
``--override table.key=value`` flags.

Every parse or validation failure raises :class:`ConfigError` with a
``file:line`` anchor whenever the offending key can be located in the
source text.
"""

from __future__ import annotations

import dataclasses
import math
import os
import re

import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from . import bath, diagnostics, qops

__all__ = [
    "ConfigError",
    "Config",
    "load",
    "parse_override",
    "SystemSpec",
    "RunSpec",
    "build_system",
    "build_bath",
    "build_run",
    "build_thresholds",
    "initial_state",
    "get_value",
]


class ConfigError(Exception):
    """Config file rejected; the message carries file:line anchors."""


_MISSING = object()

# known blocks and the keys they accept; typos fail loudly
_SCHEMA = {
    "system": {
        "preset", "delta", "delta1", "delta2", "sites", "dispersion",
        "velocity", "hopping", "hamiltonian_re", "hamiltonian_im",
    },
    "coupling": {"preset", "operators"},
    "bath": {
        "family", "eta", "alpha", "cutoff", "j0", "omega_edge", "rho_max",
        "half_bandwidth", "j_k", "rho_f", "mu", "temperature", "file",
    },
    "run": {
        "solver", "t_max", "dt", "initial", "output", "include_lamb_shift",
        "rho_re", "rho_im",
    },
    "diagnostics": {
        "born_pass", "born_marginal", "markov_ratio_pass",
        "markov_variation_pass", "markov_relax", "rwa_pass", "rwa_marginal",
        "window_factor", "correlation_floor",
    },
    "spectral": {"omega_min", "omega_max", "points", "temperatures"},
    "toy": {"omega0", "eta", "alpha", "cutoff", "t_max", "dt", "output_dt", "n_modes"},
    "photonic": {"ratios", "eta_scale", "omega_edge", "cutoff_ratio", "t_max", "dt"},
    "kondo": {
        "j_k", "rho_f", "half_bandwidth", "mu", "temperatures",
        "trajectory_temperature", "t_max", "dt", "born_t_max", "born_dt",
    },
    "thermalization": {"delta", "field", "gamma"},
}

_MAX_LATTICE_SITES = 128


@dataclasses.dataclass(frozen=True)
class Config:
    path: str
    text: str
    doc: dict


_TABLE_RE = re.compile(r"^\s*\[\[?\s*([^]\s]+)\s*\]?\]")


def _line(cfg: Config, table: str, key: str | None) -> int:
    # best effort: the key's line inside [table], else the header, else 1
    if not cfg.text:
        return 0
    current = ""
    table_line = 0
    key_re = re.compile(r"^\s*" + re.escape(key) + r"\s*=") if key else None
    for i, ln in enumerate(cfg.text.splitlines(), 1):
        m = _TABLE_RE.match(ln)
        if m:
            current = m.group(1)
            if current == table and table_line == 0:
                table_line = i
            continue
        if key_re is not None and current == table and key_re.match(ln):
            return i
    return table_line if table_line else 1


def _where(cfg: Config, table: str, key: str | None) -> str:
    line = _line(cfg, table, key)
    if line == 0:
        return f"{cfg.path}:"
    return f"{cfg.path}:{line}:"


def _reject(cfg: Config, table: str, key: str | None, msg: str):
    raise ConfigError(f"{_where(cfg, table, key)} {msg}")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple:
    """Split ``table.key=value`` into a key path and a typed value."""
    key, eq, raw = text.partition("=")
    key = key.strip()
    raw = raw.strip()
    parts = key.split(".")
    if not eq or not key or any(not p for p in parts):
        raise ConfigError(f"override '{text}': expected table.key=value")
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw  # convenience: bare words read as strings
    return parts, value


def _apply_override(doc: dict, text: str):
    parts, value = parse_override(text)
    node = doc
    for p in parts[:-1]:
        nxt = node.get(p)
        if nxt is None:
            nxt = node[p] = {}
        elif not isinstance(nxt, dict):
            raise ConfigError(f"override '{text}': '{p}' is not a block")
        node = nxt
    node[parts[-1]] = value


def load(path=None, overrides=(), defaults=None) -> Config:
    """Read, merge and validate a config document.

    Precedence, lowest to highest: built-in ``defaults``, the file at
    ``path`` (optional), then ``overrides`` in order.
    """
    if path is not None:
        try:
            with open(path, "rb") as fh:
                text = fh.read().decode("utf-8")
        except OSError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        except UnicodeDecodeError as exc:
            raise ConfigError(f"{path}: not valid UTF-8 ({exc})") from exc
        try:
            doc = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            m = re.search(r"at line (\d+)", str(exc))
            line = m.group(1) if m else "1"
            raise ConfigError(f"{path}:{line}: {exc}") from exc
        name = str(path)
    else:
        text, doc, name = "", {}, "<defaults>"

    if defaults:
        doc = _merge(defaults, doc)

    cfg = Config(path=name, text=text, doc=doc)

    if path is not None:
        if "schema" not in doc:
            raise ConfigError(f"{name}:1: missing required top-level 'schema = 1'")
        if doc["schema"] != 1:
            _reject(cfg, "", "schema", f"unsupported schema {doc['schema']!r} (this tool reads schema 1)")

    for ov in overrides:
        _apply_override(doc, ov)

    for tname, tab in doc.items():
        if tname == "schema":
            continue
        if tname not in _SCHEMA:
            _reject(cfg, tname, None, f"unknown block [{tname}]")
        if not isinstance(tab, dict):
            _reject(cfg, "", tname, f"'{tname}' must be a block, not a value")
        for k in tab:
            if k not in _SCHEMA[tname]:
                _reject(cfg, tname, k, f"unknown key '{k}' in [{tname}]")
    return cfg


_KINDS = {
    "number": "a number",
    "int": "an integer",
    "str": "a string",
    "bool": "true/false",
    "list": "a list",
}


def _kind_ok(value, kind: str) -> bool:
    if kind == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == "int":
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == "str":
        return isinstance(value, str)
    if kind == "bool":
        return isinstance(value, bool)
    if kind == "list":
        return isinstance(value, list)
    raise ValueError(kind)


def get_value(cfg: Config, table: str, key: str, kind: str, default=_MISSING):
    tab = cfg.doc.get(table) if table else cfg.doc
    if not isinstance(tab, dict) or key not in tab:
        if default is _MISSING:
            _reject(cfg, table, None, f"[{table}] needs '{key}'")
        return default
    value = tab[key]
    if not _kind_ok(value, kind):
        _reject(cfg, table, key, f"'{key}' must be {_KINDS[kind]}, got {value!r}")
    return float(value) if kind == "number" else value


def _positive(cfg: Config, table: str, key: str, value: float) -> float:
    if not value > 0:
        _reject(cfg, table, key, f"'{key}' must be > 0, got {value!r}")
    return value


def _matrix(cfg: Config, table: str, key_re: str, key_im: str, required: bool):
    re_part = get_value(cfg, table, key_re, "list", default=None)
    im_part = get_value(cfg, table, key_im, "list", default=None)
    if re_part is None and im_part is None:
        if required:
            _reject(cfg, table, None, f"[{table}] needs '{key_re}' (list of rows)")
        return None
    base = re_part if re_part is not None else im_part
    try:
        mat = np.asarray(base, dtype=float).astype(complex)
        if re_part is None:
            mat = 0.0 * mat
        if im_part is not None:
            mat = mat + 1j * np.asarray(im_part, dtype=float)
    except (TypeError, ValueError):
        _reject(cfg, table, key_re, f"'{key_re}'/'{key_im}' must be rectangular lists of numbers")
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        _reject(cfg, table, key_re, f"'{key_re}' must be a square matrix, got shape {mat.shape}")
    return mat


@dataclasses.dataclass(frozen=True)
class SystemSpec:
    """Hamiltonian plus the coupling operators read from a config."""

    hamiltonian: np.ndarray
    couplings: tuple
    labels: tuple
    preset: str | None = None


def _pauli():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    sz = np.diag([1.0, -1.0]).astype(complex)
    return sx, sy, sz


def _system_hamiltonian(cfg: Config):
    preset = get_value(cfg, "system", "preset", "str", default=None)
    explicit = _matrix(cfg, "system", "hamiltonian_re", "hamiltonian_im", required=False)
    if preset is not None and explicit is not None:
        _reject(cfg, "system", "preset", "give either 'preset' or 'hamiltonian_re', not both")
    if preset is None and explicit is None:
        _reject(cfg, "system", None, "[system] needs 'preset' or 'hamiltonian_re'")

    if explicit is not None:
        try:
            return qops.hermitian_operator(explicit), None
        except ValueError as exc:
            _reject(cfg, "system", "hamiltonian_re", f"hamiltonian is not Hermitian ({exc})")

    if preset == "two_level":
        delta = _positive(cfg, "system", "delta", get_value(cfg, "system", "delta", "number", default=1.0))
        _, _, sz = _pauli()
        return 0.5 * delta * sz, preset
    if preset == "v_system":
        d1 = get_value(cfg, "system", "delta1", "number")
        d2 = get_value(cfg, "system", "delta2", "number")
        return np.diag([0.0, d1, d2]).astype(complex), preset
    if preset == "lattice_1d":
        sites = get_value(cfg, "system", "sites", "int")
        if not 2 <= sites <= _MAX_LATTICE_SITES:
            _reject(cfg, "system", "sites", f"'sites' must be in [2, {_MAX_LATTICE_SITES}], got {sites}")
        dispersion = get_value(cfg, "system", "dispersion", "str", default="linear")
        n = np.arange(1, sites + 1, dtype=float)
        if dispersion == "linear":
            v = _positive(cfg, "system", "velocity", get_value(cfg, "system", "velocity", "number", default=1.0))
            levels = v * 2.0 * math.pi * n / sites
        elif dispersion == "cosine":
            hop = _positive(cfg, "system", "hopping", get_value(cfg, "system", "hopping", "number", default=1.0))
            levels = -2.0 * hop * np.cos(2.0 * math.pi * (n - 1) / sites)
        else:
            _reject(cfg, "system", "dispersion", f"unknown dispersion '{dispersion}' (linear or cosine)")
        # vacuum level first, then the single-particle band
        return np.diag(np.concatenate(([0.0], levels))).astype(complex), preset
    _reject(cfg, "system", "preset", f"unknown system preset '{preset}'")


def _coupling_operators(cfg: Config, h: np.ndarray, preset_sys):
    d = h.shape[0]
    preset = get_value(cfg, "coupling", "preset", "str", default=None)
    raw_ops = get_value(cfg, "coupling", "operators", "list", default=None)
    if preset is not None and raw_ops is not None:
        _reject(cfg, "coupling", "preset", "give either 'preset' or 'operators', not both")
    if preset is None and raw_ops is None:
        _reject(cfg, "coupling", None, "[coupling] needs 'preset' or 'operators'")

    if raw_ops is not None:
        ops, labels = [], []
        for idx, entry in enumerate(raw_ops):
            if not isinstance(entry, dict) or ("re" not in entry and "im" not in entry):
                _reject(cfg, "coupling", "operators",
                        f"operators[{idx}] must be a table with 're' and optional 'im' rows")
            sub = Config(cfg.path, cfg.text, {"coupling": entry})
            mat = _matrix(sub, "coupling", "re", "im", required=True)
            if mat.shape[0] != d:
                _reject(cfg, "coupling", "operators",
                        f"operators[{idx}] has dimension {mat.shape[0]}, system has {d}")
            ops.append(mat)
            labels.append(f"A{idx}")
        return tuple(ops), tuple(labels)

    sx, sy, sz = _pauli()
    if preset == "sigma_x":
        if d != 2:
            _reject(cfg, "coupling", "preset", f"sigma_x needs a two-level system, got dimension {d}")
        return (sx,), ("sigma_x",)
    if preset == "spin_vector":
        if d != 2:
            _reject(cfg, "coupling", "preset", f"spin_vector needs a two-level system, got dimension {d}")
        return (0.5 * sx, 0.5 * sy, 0.5 * sz), ("S_x", "S_y", "S_z")
    if preset == "sigma_pm":
        # ladder between the first basis state and every other one
        a = np.zeros((d, d), dtype=complex)
        a[0, 1:] = 1.0
        return (a + a.conj().T,), ("sigma_pm",)
    if preset == "local_loss":
        if preset_sys != "lattice_1d":
            _reject(cfg, "coupling", "preset", "local_loss needs system preset 'lattice_1d'")
        sites = d - 1
        a = np.zeros((d, d), dtype=complex)
        a[0, 1:] = 1.0 / math.sqrt(sites)
        return (a + a.conj().T,), ("local_loss",)
    _reject(cfg, "coupling", "preset", f"unknown coupling preset '{preset}'")


def build_system(cfg: Config) -> SystemSpec:
    h, preset = _system_hamiltonian(cfg)
    ops, labels = _coupling_operators(cfg, h, preset)
    return SystemSpec(hamiltonian=h, couplings=ops, labels=labels, preset=preset)


def build_bath(cfg: Config) -> bath.SpectralDensity:
    """Assemble the spectral density, thermally wrapped when T > 0."""
    family = get_value(cfg, "bath", "family", "str")
    temperature = get_value(cfg, "bath", "temperature", "number", default=0.0)
    if temperature < 0:
        _reject(cfg, "bath", "temperature", f"'temperature' must be >= 0, got {temperature!r}")
    beta = math.inf if temperature == 0.0 else 1.0 / temperature

    if family == "ohmic":
        j = bath.OhmicCutoff(
            eta=_positive(cfg, "bath", "eta", get_value(cfg, "bath", "eta", "number")),
            alpha=_positive(cfg, "bath", "alpha", get_value(cfg, "bath", "alpha", "number", default=1.0)),
            cutoff=_positive(cfg, "bath", "cutoff", get_value(cfg, "bath", "cutoff", "number", default=1.0)),
        )
    elif family == "flat":
        if temperature > 0:
            _reject(cfg, "bath", "temperature",
                    "flat band is two-sided; thermal wrapping needs a density with support in w >= 0")
        return bath.FlatBand(
            j0=_positive(cfg, "bath", "j0", get_value(cfg, "bath", "j0", "number")),
            cutoff=_positive(cfg, "bath", "cutoff", get_value(cfg, "bath", "cutoff", "number")),
        )
    elif family == "photonic":
        j = bath.PhotonicBandEdge(
            eta=_positive(cfg, "bath", "eta", get_value(cfg, "bath", "eta", "number")),
            omega_edge=_positive(cfg, "bath", "omega_edge", get_value(cfg, "bath", "omega_edge", "number", default=1.0)),
            cutoff=_positive(cfg, "bath", "cutoff", get_value(cfg, "bath", "cutoff", "number")),
        )
    elif family == "fermionic_band":
        return bath.FermionicBand(
            rho_max=_positive(cfg, "bath", "rho_max", get_value(cfg, "bath", "rho_max", "number")),
            half_bandwidth=_positive(cfg, "bath", "half_bandwidth", get_value(cfg, "bath", "half_bandwidth", "number")),
            beta=beta,
        )
    elif family == "kondo":
        j_k = _positive(cfg, "bath", "j_k", get_value(cfg, "bath", "j_k", "number"))
        rho_f = _positive(cfg, "bath", "rho_f", get_value(cfg, "bath", "rho_f", "number"))
        if j_k * rho_f > 0.2:
            _reject(cfg, "bath", "j_k",
                    f"J_K*rho_F = {j_k * rho_f:g} is outside the perturbative regime (need <= 0.2)")
        return bath.KondoParticleHole(
            j_k=j_k,
            rho_f=rho_f,
            half_bandwidth=_positive(cfg, "bath", "half_bandwidth", get_value(cfg, "bath", "half_bandwidth", "number")),
            mu=get_value(cfg, "bath", "mu", "number", default=0.0),
            beta=beta,
        )
    elif family == "tabulated":
        fname = get_value(cfg, "bath", "file", "str")
        base = os.path.dirname(cfg.path) if os.path.isfile(cfg.path) else "."
        full = fname if os.path.isabs(fname) else os.path.join(base, fname)
        try:
            data = np.loadtxt(full, delimiter=",", ndmin=2)
        except (OSError, ValueError) as exc:
            _reject(cfg, "bath", "file", f"cannot read table '{fname}': {exc}")
        if data.shape[1] < 2:
            _reject(cfg, "bath", "file", f"table '{fname}' needs two columns (omega, J)")
        try:
            j = bath.Tabulated(data[:, 0], data[:, 1])
        except ValueError as exc:
            _reject(cfg, "bath", "file", f"bad table '{fname}': {exc}")
    else:
        _reject(cfg, "bath", "family", f"unknown bath family '{family}'")

    if temperature == 0.0:
        return j
    try:
        return bath.BosonicThermal(j, beta)
    except ValueError as exc:
        _reject(cfg, "bath", "temperature", f"cannot thermalize this bath: {exc}")


_SOLVERS = ("lindblad", "redfield", "redfield_td", "born")


@dataclasses.dataclass(frozen=True)
class RunSpec:
    solver: str
    t_max: float
    dt: float
    initial: object
    output: str
    include_lamb_shift: bool


def build_run(cfg: Config, default_output: str = "trajectory") -> RunSpec:
    solver = get_value(cfg, "run", "solver", "str", default="lindblad")
    if solver not in _SOLVERS:
        _reject(cfg, "run", "solver", f"unknown solver '{solver}' (one of {', '.join(_SOLVERS)})")
    t_max = _positive(cfg, "run", "t_max", get_value(cfg, "run", "t_max", "number", default=100.0))
    dt = _positive(cfg, "run", "dt", get_value(cfg, "run", "dt", "number", default=0.01))
    if dt >= t_max:
        _reject(cfg, "run", "dt", f"'dt' must be smaller than 't_max', got {dt} >= {t_max}")
    rho = _matrix(cfg, "run", "rho_re", "rho_im", required=False)
    initial = get_value(cfg, "run", "initial", "str", default=None)
    if rho is not None and initial is not None:
        _reject(cfg, "run", "initial", "give either 'initial' or 'rho_re', not both")
    if rho is not None:
        if abs(np.trace(rho) - 1.0) > 1e-8:
            _reject(cfg, "run", "rho_re", f"initial state must have unit trace, got {np.trace(rho):.6g}")
        try:
            rho = qops.density_matrix(rho)
        except ValueError as exc:
            _reject(cfg, "run", "rho_re", f"initial state rejected ({exc})")
        chosen = rho
    else:
        chosen = initial if initial is not None else "excited"
        if chosen not in ("excited", "ground", "mixed"):
            _reject(cfg, "run", "initial", f"unknown initial state '{chosen}' (excited, ground or mixed)")
    return RunSpec(
        solver=solver,
        t_max=t_max,
        dt=dt,
        initial=chosen,
        output=get_value(cfg, "run", "output", "str", default=default_output),
        include_lamb_shift=get_value(cfg, "run", "include_lamb_shift", "bool", default=True),
    )


def initial_state(run: RunSpec, h: np.ndarray) -> np.ndarray:
    """Concrete density matrix for a run, in the computational basis."""
    if isinstance(run.initial, np.ndarray):
        return run.initial
    d = h.shape[0]
    if run.initial == "mixed":
        return np.eye(d, dtype=complex) / d
    spec = qops.eig_hermitian(h)
    col = -1 if run.initial == "excited" else 0
    v = spec.vectors[:, col]
    return np.outer(v, v.conj())


def build_thresholds(cfg: Config) -> diagnostics.DiagnosticThresholds:
    base = diagnostics.DiagnosticThresholds()
    kwargs = {}
    for field in dataclasses.fields(base):
        val = get_value(cfg, "diagnostics", field.name, "number", default=getattr(base, field.name))
        kwargs[field.name] = _positive(cfg, "diagnostics", field.name, float(val))
    return diagnostics.DiagnosticThresholds(**kwargs)
