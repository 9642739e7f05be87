"""Configuration-driven experiment runs producing versioned CSV tables.

A config is a YAML mapping, for example::

    kind: amse_curve
    name: fig2
    delta: [1.1, 1.5, 2.0]
    epsilon: [0.25, 0.7]
    q: [1.0]
    sigma_w: {start: 0.0, stop: 0.25, num: 26}
    prior: {atoms: [[1.0, 0.5], [-1.0, 0.5]]}
    seed: 0

Grid points fan out to a process pool; records come back in grid order
(sorted coordinates, then replicate), so the CSV does not depend on the
number of workers.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np
import yaml

from . import prior as prior_mod
from .finite_sample import amp_run, empirical_mse, generate_instance, lqls_solve, optimal_lambda_mse, tuning_grid
from .errors import ConvergenceError
from .prior import SignalPrior
from .risk import mq_curve
from .state_evolution import Regime, amp_recursion, expansion, solve_tuned

SCHEMA_VERSION = 1
OK = "ok"

KINDS = ("phase", "amse_curve", "expansion_check", "finite_sample", "amp_trace")

_SE_COLUMNS = [
    "delta", "epsilon", "q", "sigma_w", "sigma_bar", "chi_bar", "lambda", "amse",
    "first_order", "second_order", "regime",
]

COLUMNS = {
    "phase": ["epsilon", "q", "m_value", "chi_star_star", "status"],
    "amse_curve": _SE_COLUMNS + ["status"],
    "expansion_check": _SE_COLUMNS + ["second_order_coeff", "second_order_power", "normalized_gap", "status"],
    "finite_sample": [
        "seed", "p", "delta", "epsilon", "q", "sigma_w", "replicate", "lambda_best", "mse",
        "amp_iters", "amp_gap", "amse", "first_order", "second_order", "status",
    ],
    "amp_trace": [
        "seed", "p", "delta", "epsilon", "q", "sigma_w", "replicate", "t", "tau_emp", "tau_theory",
        "mse_emp", "mse_theory", "status",
    ],
}

# grid axes used by each kind, in sort order
AXES = {
    "phase": ("epsilon", "q"),
    "amse_curve": ("delta", "epsilon", "q", "sigma_w"),
    "expansion_check": ("delta", "epsilon", "q", "sigma_w"),
    "finite_sample": ("p", "delta", "epsilon", "q", "sigma_w"),
    "amp_trace": ("p", "delta", "epsilon", "q", "sigma_w"),
}


class ConfigError(ValueError):
    """The experiment config is malformed."""


# ---------------------------------------------------------------------------
# config


def _grid(value, name: str) -> tuple:
    if isinstance(value, dict):
        try:
            vals = np.linspace(float(value["start"]), float(value["stop"]), int(value["num"]))
        except KeyError as exc:
            raise ConfigError(f"{name}: range needs start, stop and num") from exc
        vals = [float(v) for v in vals]
    elif isinstance(value, (list, tuple)):
        vals = [float(v) for v in value]
    elif value is None:
        vals = []
    else:
        vals = [float(value)]
    if not vals:
        raise ConfigError(f"grid '{name}' is empty")
    return tuple(sorted(set(vals)))


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    name: str
    grids: dict
    prior: dict = field(default_factory=lambda: {"atoms": [[1.0, 0.5], [-1.0, 0.5]]})
    replicates: int = 1
    seed: int = 0
    max_t: int = 10
    lambda_points: int = 40
    amp: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if int(self.replicates) < 1:
            raise ConfigError("replicates must be >= 1")
        for axis in AXES[self.kind]:
            if axis not in self.grids:
                raise ConfigError(f"kind {self.kind!r} needs a '{axis}' grid")
        if "atoms" not in self.prior and "power_law" not in self.prior:
            raise ConfigError("prior needs 'atoms' or 'power_law'")

    @classmethod
    def from_mapping(cls, data: dict, kind: Optional[str] = None) -> "ExperimentConfig":
        data = dict(data)
        k = data.pop("kind", None) or kind
        if kind is not None and k != kind:
            raise ConfigError(f"config kind {k!r} does not match the requested {kind!r}")
        if k not in KINDS:
            raise ConfigError(f"unknown kind {k!r}; expected one of {KINDS}")
        prior = dict(data.pop("prior", {"atoms": [[1.0, 0.5], [-1.0, 0.5]]}))
        if "epsilon" in prior and "epsilon" not in data:
            data["epsilon"] = [prior["epsilon"]]
        prior.pop("epsilon", None)
        grids = {}
        for axis in AXES[k]:
            if axis not in data:
                raise ConfigError(f"kind {k!r} needs a '{axis}' grid")
            grids[axis] = _grid(data.pop(axis), axis)
        if "p" in grids:
            grids["p"] = tuple(int(v) for v in grids["p"])
        known = {"name", "replicates", "seed", "max_t", "lambda_points", "amp"}
        extra = set(data) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(
            kind=k,
            name=str(data.get("name", k)),
            grids=grids,
            prior=prior,
            replicates=int(data.get("replicates", 1)),
            seed=int(data.get("seed", 0)),
            max_t=int(data.get("max_t", 10)),
            lambda_points=int(data.get("lambda_points", 40)),
            amp=bool(data.get("amp", True)),
        )

    @classmethod
    def load(cls, path: str, kind: Optional[str] = None) -> "ExperimentConfig":
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a mapping")
        return cls.from_mapping(data, kind)

    def make_prior(self, epsilon: float) -> SignalPrior:
        return SignalPrior.from_config({"epsilon": epsilon, **self.prior})

    def points(self) -> list:
        axes = AXES[self.kind]
        return [dict(zip(axes, combo)) for combo in itertools.product(*(self.grids[a] for a in axes))]

    @property
    def n_records(self) -> int:
        n = len(self.points())
        if self.kind in ("finite_sample", "amp_trace"):
            n *= self.replicates
        if self.kind == "amp_trace":
            n *= self.max_t + 1
        return n


def replicate_seed(base: int, replicate: int) -> int:
    """Instance seed for a replicate; shared across grid cells (common random numbers)."""
    return int(np.random.SeedSequence([int(base) & 0xFFFFFFFF, int(replicate)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# tasks


@dataclass(frozen=True)
class _Task:
    kind: str
    point: dict
    prior: dict
    replicate: int
    seed: int
    max_t: int
    lambda_points: int
    quad_order: Optional[int]
    amp: bool = True


def _status(exc: BaseException) -> str:
    msg = " ".join(str(exc).split())
    return f"error: {type(exc).__name__}: {msg}"


@lru_cache(maxsize=256)
def _tuned(delta, sigma_w, q, prior):
    return solve_tuned(delta, sigma_w, q, prior)


def _se_record(pt: dict, prior: SignalPrior, with_coeff: bool) -> dict:
    d, q, sw = pt["delta"], pt["q"], pt["sigma_w"]
    rec = dict(pt)
    ex = expansion(d, q, prior, sw)
    rec.update(first_order=ex.first_order, second_order=ex.second_order, regime=ex.regime.value)
    if with_coeff:
        rec.update(second_order_coeff=ex.second_order_coeff, second_order_power=ex.second_order_power)
    if sw == 0.0:
        # sigma_w -> 0 limit: AMSE vanishes exactly in the success regimes
        if ex.regime is Regime.FAILURE:
            raise ValueError("sigma_w = 0 in the failure regime has no vanishing limit")
        rec.update(sigma_bar=0.0, chi_bar=math.nan, amse=0.0, first_order=0.0, second_order=0.0)
        rec["lambda"] = 0.0
        if with_coeff:
            rec["normalized_gap"] = math.nan
        return rec
    fp = _tuned(d, sw, q, prior)
    rec.update(sigma_bar=fp.sigma_bar, chi_bar=fp.chi_bar, amse=fp.amse)
    rec["lambda"] = fp.lam
    if with_coeff:
        rec["normalized_gap"] = (fp.amse - ex.first_order) / sw**ex.second_order_power
    return rec


def _run_phase(task: _Task) -> list:
    pt = task.point
    pp = mq_curve(pt["epsilon"], pt["q"])
    return [dict(pt, m_value=pp.m_value, chi_star_star=pp.chi_star_star)]


def _run_finite(task: _Task, prior: SignalPrior) -> list:
    pt = task.point
    p, d, q, sw = int(pt["p"]), pt["delta"], pt["q"], pt["sigma_w"]
    fp = _tuned(d, sw, q, prior)
    ex = expansion(d, q, prior, sw)
    inst = generate_instance(p, d, prior, sw, task.seed)
    lam_best, mse = optimal_lambda_mse(inst, q, tuning_grid(fp.lam, task.lambda_points))
    row = dict(
        pt, p=p, seed=task.seed, replicate=task.replicate, lambda_best=lam_best, mse=mse,
        amp_iters=0, amp_gap=math.nan, amse=fp.amse,
        first_order=ex.first_order, second_order=ex.second_order,
    )
    if task.amp:
        try:
            amp = amp_run(inst, q, fp.chi_bar, max_t=1000)
        except ConvergenceError as exc:
            # the tuned MSE above is still valid; the AMP diagnostic is not
            row["status"] = f"amp {_status(exc)}"
        else:
            row["amp_iters"] = amp.iterations
            row["amp_gap"] = empirical_mse(amp.final.beta_t, lqls_solve(inst, amp.lam, q, beta0=amp.final.beta_t))
    return [row]


def _run_amp_trace(task: _Task, prior: SignalPrior) -> list:
    pt = task.point
    p, d, q, sw = int(pt["p"]), pt["delta"], pt["q"], pt["sigma_w"]
    fp = _tuned(d, sw, q, prior)
    inst = generate_instance(p, d, prior, sw, task.seed)
    run = amp_run(inst, q, fp.chi_bar, max_t=task.max_t, tol=0.0)
    theory = amp_recursion(fp.chi_bar, d, sw, q, prior, task.max_t)
    out = []
    for st in run.states:
        t = st.t
        out.append(dict(
            pt, p=p, seed=task.seed, replicate=task.replicate, t=t, tau_emp=st.tau_t,
            tau_theory=theory.tau[t],
            mse_emp=empirical_mse(st.beta_t, inst.beta_true),
            mse_theory=prior.second_moment if t == 0 else theory.mse[t - 1],
        ))
    return out


def _blank(task: _Task) -> list:
    base = dict(task.point)
    if task.kind in ("finite_sample", "amp_trace"):
        base.update(seed=task.seed, replicate=task.replicate, p=int(base["p"]))
    n = task.max_t + 1 if task.kind == "amp_trace" else 1
    rows = []
    for t in range(n):
        row = {c: math.nan for c in COLUMNS[task.kind]}
        row.update(base)
        if task.kind == "amp_trace":
            row["t"] = t
        rows.append(row)
    return rows


def run_task(task: _Task) -> list:
    """Evaluate one grid point (and replicate); errors become a status value."""
    if task.quad_order is not None:
        prior_mod.set_default_order(task.quad_order)
    try:
        if task.kind == "phase":
            rows = _run_phase(task)
        else:
            prior = SignalPrior.from_config({"epsilon": task.point["epsilon"], **task.prior})
            if task.kind == "amse_curve":
                rows = [_se_record(task.point, prior, with_coeff=False)]
            elif task.kind == "expansion_check":
                rows = [_se_record(task.point, prior, with_coeff=True)]
            elif task.kind == "finite_sample":
                rows = _run_finite(task, prior)
            else:
                rows = _run_amp_trace(task, prior)
        nan_ok = _NAN_ALLOWED | ({"amp_gap"} if task.kind == "finite_sample" and not task.amp else set())
        for r in rows:
            if "status" in r:
                continue
            bad = [c for c in COLUMNS[task.kind] if c not in ("status", "regime") and not _finite_or_nan_ok(c, r.get(c), nan_ok)]
            r["status"] = OK if not bad else f"non-finite: {','.join(bad)}"
        return rows
    except Exception as exc:  # noqa: BLE001 - every failure is reported in the record
        rows = _blank(task)
        for r in rows:
            r["status"] = _status(exc)
        return rows


# columns that are NaN by construction in some regimes
_NAN_ALLOWED = {"chi_bar", "first_order", "second_order", "second_order_coeff", "second_order_power", "normalized_gap"}


def _finite_or_nan_ok(col: str, value, nan_ok=_NAN_ALLOWED) -> bool:
    if isinstance(value, str):
        return True
    try:
        v = float(value)
    except (TypeError, ValueError):
        return False
    return math.isfinite(v) or (col in nan_ok and math.isnan(v))


def tasks(config: ExperimentConfig, quad_order: Optional[int] = None) -> list:
    out = []
    reps = config.replicates if config.kind in ("finite_sample", "amp_trace") else 1
    for pt in config.points():
        for r in range(reps):
            out.append(_Task(config.kind, pt, config.prior, r, replicate_seed(config.seed, r),
                             config.max_t, config.lambda_points, quad_order, config.amp))
    return out


def run(config: ExperimentConfig, workers: int = 1, quad_order: Optional[int] = None) -> list:
    """All records of a config, in grid order."""
    ts = tasks(config, quad_order)
    if workers <= 1:
        chunks = [run_task(t) for t in ts]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run_task, ts))
    return [r for chunk in chunks for r in chunk]


# ---------------------------------------------------------------------------
# CSV


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(records: Iterable[dict], kind: str, path: str) -> str:
    """Write records atomically (temp file in the target directory, then rename)."""
    cols = COLUMNS[kind]
    buf = io.StringIO()
    buf.write(f"#schema={SCHEMA_VERSION}\n#kind={kind}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([_fmt(r.get(c, math.nan)) for c in cols])
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".csv")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class SchemaError(ValueError):
    """A CSV file does not carry the expected schema header."""


def read_csv(path: str) -> tuple[str, list]:
    """Return (kind, records) from a CSV written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        head = fh.readline().strip()
        if head != f"#schema={SCHEMA_VERSION}":
            raise SchemaError(f"{path}: expected '#schema={SCHEMA_VERSION}', found {head!r}")
        kind_line = fh.readline().strip()
        if not kind_line.startswith("#kind="):
            raise SchemaError(f"{path}: missing '#kind=' line")
        kind = kind_line.split("=", 1)[1]
        if kind not in COLUMNS:
            raise SchemaError(f"{path}: unknown kind {kind!r}")
        reader = csv.DictReader(fh)
        if reader.fieldnames != COLUMNS[kind]:
            raise SchemaError(f"{path}: columns {reader.fieldnames} differ from schema {COLUMNS[kind]}")
        rows = []
        for row in reader:
            parsed = {}
            for k, v in row.items():
                if k in ("status", "regime"):
                    parsed[k] = v
                else:
                    parsed[k] = float(v)
            rows.append(parsed)
    return kind, rows


def all_ok(records: Iterable[dict]) -> bool:
    return all(r.get("status") == OK for r in records)
