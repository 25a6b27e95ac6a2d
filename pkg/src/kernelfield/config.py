"""Sectioned key-value config files, their canonical serialization, and the
run manifest (run id = hash of canonical config, so identical manifests mean
identical outputs)."""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, replace

import numpy as np

from .estimator import StepperConfig
from .field import FieldSpec
from .geometry import Cover, Rect, grid_cover
from .kernels import KernelSpec
from .simulation import SimConfig


class ConfigError(ValueError):
    """Invalid or incomplete configuration; the message lists every problem."""


def lattice(omega: Rect, per_axis: int) -> np.ndarray:
    """Full grid with ``per_axis`` points per axis over omega (row-major)."""
    if per_axis < 2:
        raise ValueError("lattice needs at least 2 points per axis")
    axes = [np.linspace(a, b, per_axis) for a, b in zip(omega.lo, omega.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def _rect_tokens(r: Rect) -> str:
    return " ".join(_fmt(v) for v in (*r.lo, *r.hi))


def _parse_rect(tokens: list[str], where: str, errors: list[str]) -> Rect | None:
    if len(tokens) % 2 != 0 or len(tokens) < 2:
        errors.append(f"{where}: need an even number of coordinates (lo... hi...), got {len(tokens)}")
        return None
    d = len(tokens) // 2
    try:
        vals = [float(t) for t in tokens]
        return Rect(tuple(vals[:d]), tuple(vals[d:]))
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None


class _Section:
    """One config section with typed getters that accumulate errors."""

    def __init__(self, parser: configparser.ConfigParser, name: str, errors: list[str]):
        self.name = name
        self.errors = errors
        self.present = parser.has_section(name)
        self._sec = parser[name] if self.present else {}

    def _raw(self, key: str, required: bool, default=None):
        if key in self._sec:
            return self._sec[key]
        if required:
            self.errors.append(f"missing required key '{key}' in section [{self.name}]")
        return default

    def str(self, key: str, required: bool = True, default: str | None = None):
        raw = self._raw(key, required, default)
        return raw.strip() if isinstance(raw, str) else raw

    def float(self, key: str, required: bool = True, default: float | None = None):
        raw = self._raw(key, required, None)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError:
            self.errors.append(f"key '{key}' in [{self.name}] is not a number: {raw!r}")
            return default

    def int(self, key: str, required: bool = True, default: int | None = None):
        raw = self._raw(key, required, None)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError:
            self.errors.append(f"key '{key}' in [{self.name}] is not an integer: {raw!r}")
            return default

    def bool(self, key: str, default: bool) -> bool:
        raw = self._raw(key, False, None)
        if raw is None:
            return default
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        self.errors.append(f"key '{key}' in [{self.name}] is not a boolean: {raw!r}")
        return default

    def floats(self, key: str, required: bool = True):
        raw = self._raw(key, required, None)
        if raw is None:
            return None
        try:
            return tuple(float(t) for t in str(raw).split())
        except ValueError:
            self.errors.append(f"key '{key}' in [{self.name}] is not a number list: {raw!r}")
            return None


def loads_config(text: str, where: str = "<string>") -> SimConfig:
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    errors: list[str] = []
    for name in ("field", "domain", "estimator", "stepper", "sim"):
        if not parser.has_section(name):
            errors.append(f"missing required section [{name}]")
    if errors:
        raise ConfigError(f"{where}:\n  " + "\n  ".join(errors))

    fld = _Section(parser, "field", errors)
    dom = _Section(parser, "domain", errors)
    est = _Section(parser, "estimator", errors)
    stp = _Section(parser, "stepper", errors)
    sim = _Section(parser, "sim", errors)

    omega = None
    omega_tokens = dom.str("omega")
    if omega_tokens:
        omega = _parse_rect(omega_tokens.split(), "key 'omega' in [domain]", errors)
    cover = None
    if omega is not None:
        subs_raw = dom.str("subdomains", required=False)
        tiles_raw = dom.str("tiles", required=False)
        if subs_raw:
            rects = []
            for part in subs_raw.split("|"):
                r = _parse_rect(part.split(), "key 'subdomains' in [domain]", errors)
                if r is not None:
                    rects.append(r)
            if rects:
                try:
                    cover = Cover(omega, tuple(rects))
                except ValueError as exc:
                    errors.append(f"[domain] subdomains: {exc}")
        elif tiles_raw:
            try:
                tiles = tuple(int(t) for t in tiles_raw.split())
                cover = grid_cover(omega, tiles, dom.float("overlap", required=False, default=0.2))
            except ValueError as exc:
                errors.append(f"[domain] tiles: {exc}")
        else:
            errors.append("section [domain] needs either 'subdomains' or 'tiles'")

    dim = omega.dim if omega is not None else 2

    def kernel_from(sec: _Section) -> KernelSpec | None:
        family = sec.str("family")
        sigma = sec.float("sigma")
        ell = sec.float("ell")
        if None in (family, sigma, ell):
            return None
        try:
            return KernelSpec(family, sigma, ell, dim)
        except ValueError as exc:
            errors.append(f"[{sec.name}]: {exc}")
            return None

    field_kernel = kernel_from(fld)
    grid_per_axis = fld.int("grid_per_axis")
    field_seed = fld.int("seed")
    noise_std = fld.float("noise_std", required=False, default=0.0)
    field_spec = None
    if None not in (field_kernel, grid_per_axis, field_seed) and omega is not None:
        try:
            field_spec = FieldSpec(field_kernel, lattice(omega, grid_per_axis), field_seed, noise_std)
        except ValueError as exc:
            errors.append(f"[field]: {exc}")

    estimator = kernel_from(est)

    stepper = None
    gamma = stp.float("gamma")
    h = stp.float("h")
    epsilon_bar = stp.float("epsilon_bar")
    q = stp.int("q", required=False, default=1)
    a = stp.floats("a", required=False)
    preconditioned = stp.bool("preconditioned", default=True)
    if None not in (gamma, h, epsilon_bar, q):
        try:
            stepper = StepperConfig(gamma, h, epsilon_bar, q, a, preconditioned)
        except ValueError as exc:
            errors.append(f"[stepper]: {exc}")

    resolutions = sim.floats("resolutions")
    eval_res = sim.float("eval_grid_resolution", required=False, default=0.1)
    fuse_every = sim.int("fuse_every", required=False, default=0)
    pou_kind = sim.str("pou", required=False, default="overlap_average")
    seed = sim.int("seed", required=False, default=0)

    if errors:
        raise ConfigError(f"{where}:\n  " + "\n  ".join(errors))
    try:
        return SimConfig(
            field=field_spec,
            cover=cover,
            stepper=stepper,
            estimator=estimator,
            resolutions=resolutions,
            eval_grid_resolution=eval_res,
            fuse_every=fuse_every,
            pou_kind=pou_kind,
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def load_config(path) -> SimConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_config(fh.read(), where=str(path))


def _grid_per_axis(cfg: SimConfig) -> int:
    n_g = cfg.field.grid.shape[0]
    per_axis = round(n_g ** (1.0 / cfg.cover.omega.dim))
    if per_axis < 2 or not np.array_equal(cfg.field.grid, lattice(cfg.cover.omega, per_axis)):
        raise ConfigError(
            "config files only support full-lattice synthesis grids over omega"
        )
    return per_axis


def dump_config(cfg: SimConfig) -> str:
    """Canonical text form; parse(dump(parse(x))) == parse(x)."""
    out = io.StringIO()
    f, e, s = cfg.field.kernel, cfg.estimator, cfg.stepper
    out.write("[field]\n")
    out.write(f"family = {f.family}\n")
    out.write(f"sigma = {_fmt(f.sigma)}\n")
    out.write(f"ell = {_fmt(f.ell)}\n")
    out.write(f"grid_per_axis = {_grid_per_axis(cfg)}\n")
    out.write(f"seed = {cfg.field.seed}\n")
    out.write(f"noise_std = {_fmt(cfg.field.noise_std)}\n")
    out.write("\n[domain]\n")
    out.write(f"omega = {_rect_tokens(cfg.cover.omega)}\n")
    out.write("subdomains = " + " | ".join(_rect_tokens(r) for r in cfg.cover.subdomains) + "\n")
    out.write("\n[estimator]\n")
    out.write(f"family = {e.family}\n")
    out.write(f"sigma = {_fmt(e.sigma)}\n")
    out.write(f"ell = {_fmt(e.ell)}\n")
    out.write("\n[stepper]\n")
    out.write(f"gamma = {_fmt(s.gamma)}\n")
    out.write(f"h = {_fmt(s.h)}\n")
    out.write(f"q = {s.q}\n")
    out.write("a = " + " ".join(_fmt(v) for v in s.a) + "\n")
    out.write(f"preconditioned = {'true' if s.preconditioned else 'false'}\n")
    out.write(f"epsilon_bar = {_fmt(s.epsilon_bar)}\n")
    out.write("\n[sim]\n")
    out.write("resolutions = " + " ".join(_fmt(r) for r in cfg.resolutions) + "\n")
    out.write(f"eval_grid_resolution = {_fmt(cfg.eval_grid_resolution)}\n")
    out.write(f"fuse_every = {cfg.fuse_every}\n")
    out.write(f"pou = {cfg.pou_kind}\n")
    out.write(f"seed = {cfg.seed}\n")
    return out.getvalue()


def with_seed(cfg: SimConfig, seed: int) -> SimConfig:
    return replace(cfg, seed=int(seed))


def with_estimator(cfg: SimConfig, estimator: KernelSpec) -> SimConfig:
    return replace(cfg, estimator=estimator)


def with_epsilon_bar(cfg: SimConfig, epsilon_bar: float) -> SimConfig:
    return replace(cfg, stepper=replace(cfg.stepper, epsilon_bar=float(epsilon_bar)))


def run_id(cfg: SimConfig) -> str:
    """Twelve hex digits identifying the resolved config (and hence the outputs)."""
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class RunManifest:
    """What was run, from where, into which directory."""

    config_path: str
    config: SimConfig
    out_dir: str
    run_id: str

    @classmethod
    def of(cls, config_path, cfg: SimConfig, out_dir) -> "RunManifest":
        return cls(str(config_path), cfg, str(out_dir), run_id(cfg))

    def render(self) -> str:
        return dump_config(self.config) + (
            f"\n[manifest]\nrun_id = {self.run_id}\nsource = {self.config_path}\n"
        )
