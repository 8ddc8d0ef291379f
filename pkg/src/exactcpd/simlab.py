"""Simulation laboratory for power, TPR and FDR of global and local tests.

A scenario describes ``m`` independent channels of length ``T``. The first
``n_cp`` channels change at each of ``taus``, moving through ``levels`` (one
rate per segment). The remaining channels stay at one level throughout,
``levels[null_level]``, by default the last one: every channel ends at the
same rate and the changed ones differ only in their earlier segments.

Scenario files are INI-style with a single ``[scenario]`` section::

    [scenario]
    format_version = 1        ; optional, must be 1
    name = table1_block1      ; optional, defaults to the file stem
    kind = binary             ; binary or count
    m = 200
    T = 50
    taus = 25                 ; one or more changepoints, increasing
    levels = 0.01, 0.3        ; one rate per segment
    n_cp = 0, 5, 10, 15       ; one scenario per value
    alpha = 0.1
    replicates = 500
    mc_count = 50000
    permutations = 1000
    methods = gCU1, minP-BH, LR-STS
    seed = 20240
    null_level = last         ; first, last or a level index

Only ``kind``, ``m``, ``T``, ``taus``, ``levels`` and ``n_cp`` are required.
"""

from __future__ import annotations

import configparser
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .exact import DEFAULT_MC_COUNT, CalibrationCache, calibrate_many, canonical_statistic, exact_pvalues
from .multichannel import (
    GlobalResult,
    LocalResult,
    TruthSpec,
    evaluate_metrics,
    global_permutation_pvalues,
)
from .multitest import FDR_METHODS, PValueSet, apply_fdr
from .statistics import BINARY, KINDS

__all__ = [
    "CONFIG_FORMAT_VERSION",
    "ScenarioConfig",
    "PowerReport",
    "parse_method",
    "load_scenarios",
    "bundled_scenarios",
    "bundled_scenario_path",
    "synthesize",
    "run_scenario",
    "report_rows",
    "write_reports",
    "DEFAULT_METHODS",
]

CONFIG_FORMAT_VERSION = 1
DEFAULT_REPLICATES = 500
DEFAULT_PERMUTATIONS = 1000

_TESTS = {"minp": "minP", "lr": "LR", "cusum(1)": "CU1", "cusum(0.5)": "CU.5"}
DEFAULT_METHODS = (
    "gCU.5", "gCU1",
    "minP-BH", "LR-BH", "CU1-BH",
    "minP-ABH", "LR-ABH", "CU1-ABH",
    "minP-STS", "LR-STS", "CU1-STS",
)


def parse_method(name):
    """Split a method label into ``("global", delta)`` or ``("local", stat, fdr)``.

    Global labels are ``gCU<delta>`` (``gCU.5``, ``gCU1``); local labels are
    ``<test>-<fdr>`` such as ``minP-BH`` or ``CU1-STS``.
    """
    label = name.strip()
    if label.lower().startswith("gcu"):
        body = label[3:]
        try:
            delta = float(body)
        except ValueError:
            raise ConfigurationError(f"bad global method {name!r}") from None
        if not 0.0 <= delta <= 1.0:
            raise ConfigurationError(f"global method {name!r}: delta outside [0, 1]")
        return ("global", delta)
    if "-" not in label:
        raise ConfigurationError(f"method {name!r} is neither gCU<delta> nor <test>-<fdr>")
    test, fdr = label.rsplit("-", 1)
    if fdr.lower() not in FDR_METHODS:
        raise ConfigurationError(f"method {name!r}: unknown FDR procedure {fdr!r}")
    return ("local", canonical_statistic(test), fdr.lower())


@dataclass(frozen=True)
class ScenarioConfig:
    kind: str
    T: int
    m: int
    n_cp: int
    taus: tuple
    levels: tuple
    alpha: float = 0.1
    replicates: int = DEFAULT_REPLICATES
    mc_count: int = DEFAULT_MC_COUNT
    permutations: int = DEFAULT_PERMUTATIONS
    methods: tuple = DEFAULT_METHODS
    seed: int = 0
    name: str = ""
    null_level: int = -1

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(int(t) for t in self.taus))
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        object.__setattr__(self, "methods", tuple(self.methods))
        self.validate()

    def validate(self):
        def bad(fld, msg):
            raise ConfigurationError(f"{fld}: {msg}")

        if self.kind not in KINDS:
            bad("kind", f"must be one of {KINDS}")
        if self.T < 2:
            bad("T", "must be at least 2")
        if self.m < 1:
            bad("m", "must be positive")
        if not 0 <= self.n_cp <= self.m:
            bad("n_cp", f"must lie in [0, m={self.m}]")
        if not self.taus:
            bad("taus", "need at least one changepoint")
        if any(b <= a for a, b in zip(self.taus, self.taus[1:])):
            bad("taus", "must be strictly increasing")
        if self.taus[0] < 1 or self.taus[-1] > self.T - 1:
            bad("taus", f"must lie in [1, T-1={self.T - 1}]")
        if len(self.levels) != len(self.taus) + 1:
            bad("levels", f"need {len(self.taus) + 1} levels for {len(self.taus)} changepoints")
        if any(v < 0 for v in self.levels) or (self.kind == BINARY and any(v > 1 for v in self.levels)):
            bad("levels", "rates must be non-negative (and at most 1 for binary data)")
        if not 0 < self.alpha < 1:
            bad("alpha", "must lie in (0, 1)")
        if self.replicates < 1:
            bad("replicates", "must be positive")
        if self.mc_count < 1000:
            bad("mc_count", "must be at least 1000")
        if self.permutations < 99:
            bad("permutations", "must be at least 99")
        if not -len(self.levels) <= self.null_level < len(self.levels):
            bad("null_level", f"must index one of the {len(self.levels)} levels")
        if not self.methods:
            bad("methods", "need at least one method")
        for meth in self.methods:
            try:
                parse_method(meth)
            except ConfigurationError as exc:
                bad("methods", str(exc))

    def rate_profile(self):
        """Per-epoch rate of a changed channel, shape ``(T,)``."""
        rates = np.empty(self.T)
        bounds = (0,) + self.taus + (self.T,)
        for lvl, lo, hi in zip(self.levels, bounds, bounds[1:]):
            rates[lo:hi] = lvl
        return rates

    def truth(self):
        tau = self.taus[0] if len(self.taus) == 1 else self.taus
        return TruthSpec(frozenset(range(self.n_cp)), tau)


@dataclass
class PowerReport:
    scenario: ScenarioConfig
    metrics: dict
    seed: int
    wall_time: float = field(default=0.0, compare=False)

    def as_record(self):
        """JSON-ready summary; excludes wall time so reruns are byte-identical."""
        return {
            "scenario": {k: (list(v) if isinstance(v, tuple) else v)
                         for k, v in asdict(self.scenario).items()},
            "seed": self.seed,
            "methods": {
                name: {"p_gcd": m.p_gcd, "tpr": m.tpr, "fdr": m.fdr, "se": m.se,
                       "replicates": m.replicates}
                for name, m in self.metrics.items()
            },
        }


_INT_FIELDS = ("T", "m", "replicates", "mc_count", "permutations", "seed")


def _scenario_from_section(sec, source):
    def get(key, default=None):
        if key in sec:
            return sec[key]
        if default is None:
            raise ConfigurationError(f"{source}: missing field '{key}'")
        return default

    version = int(get("format_version", str(CONFIG_FORMAT_VERSION)))
    if version != CONFIG_FORMAT_VERSION:
        raise ConfigurationError(f"{source}: format_version {version} is not supported")
    kw = {}
    for key in _INT_FIELDS:
        if key in sec or key in ("T", "m"):
            text = get(key)
            try:
                kw[key] = int(text)
            except ValueError:
                raise ConfigurationError(f"{source}: field '{key}' must be an integer") from None
    raw = {key: get(key, default) for key, default in
           (("alpha", "0.1"), ("taus", None), ("levels", None), ("n_cp", None))}
    for key, conv in (("alpha", float), ("taus", int), ("levels", float), ("n_cp", int)):
        try:
            vals = [conv(x) for x in raw[key].replace(",", " ").split()]
        except ValueError:
            raise ConfigurationError(f"{source}: field '{key}' has a malformed value") from None
        kw[key] = vals[0] if key == "alpha" else tuple(vals)
    n_cps = kw.pop("n_cp")
    kw["kind"] = get("kind").strip().lower()
    kw["name"] = sec.get("name", Path(source).stem).strip()
    if "null_level" in sec:
        word = sec["null_level"].strip().lower()
        try:
            kw["null_level"] = {"first": 0, "last": -1}.get(word, None)
            if kw["null_level"] is None:
                kw["null_level"] = int(word)
        except ValueError:
            raise ConfigurationError(
                f"{source}: field 'null_level' must be first, last or a level index"
            ) from None
    if "methods" in sec:
        kw["methods"] = tuple(x.strip() for x in sec["methods"].split(",") if x.strip())
    out = []
    for n_cp in n_cps:
        try:
            out.append(ScenarioConfig(n_cp=n_cp, **kw))
        except ConfigurationError as exc:
            raise ConfigurationError(f"{source}: {exc}") from None
    return out


def load_scenarios(path, **overrides):
    """Read a scenario file; returns one config per listed ``n_cp``.

    ``overrides`` replace fields after parsing (e.g. ``replicates=50``).
    """
    path = Path(path)
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    if "scenario" not in parser:
        raise ConfigurationError(f"{path}: missing [scenario] section")
    cfgs = _scenario_from_section(parser["scenario"], str(path))
    if overrides:
        cfgs = [replace(c, **overrides) for c in cfgs]
    return cfgs


def bundled_scenarios():
    """Names of the scenario files shipped with the package."""
    root = resources.files("exactcpd") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def bundled_scenario_path(name):
    path = resources.files("exactcpd") / "scenarios" / f"{name}.cfg"
    if not path.is_file():
        raise ConfigurationError(f"no bundled scenario named {name!r}")
    return Path(str(path))


def synthesize(cfg, rng):
    """Draw one channel matrix for a scenario; rows ``0..n_cp-1`` change."""
    rates = np.full((cfg.m, cfg.T), cfg.levels[cfg.null_level])
    rates[: cfg.n_cp] = cfg.rate_profile()
    if cfg.kind == BINARY:
        return (rng.random((cfg.m, cfg.T)) < rates).astype(np.int64)
    return rng.poisson(rates).astype(np.int64)


def _calibration_seed(cfg):
    return int(np.random.SeedSequence([cfg.seed, 0xCA1]).generate_state(1)[0])


def _replicate(cfg, k, plan, cache):
    ss = np.random.SeedSequence([cfg.seed, k])
    data_ss, perm_ss = ss.spawn(2)
    X = synthesize(cfg, np.random.default_rng(data_ss))
    out = {}
    if plan["global"]:
        perm_seed = int(perm_ss.generate_state(1)[0])
        res = global_permutation_pvalues(X, plan["global"].keys(), cfg.permutations, perm_seed)
        for delta, names in plan["global"].items():
            obs, p = res[delta]
            for name in names:
                out[name] = GlobalResult(obs, delta, p, p <= cfg.alpha, cfg.permutations)
    cal_seed = _calibration_seed(cfg)
    if plan["local"]:
        _calibrate_totals(cfg, X, list(plan["local"]), cal_seed, cache)
    for stat, fdrs in plan["local"].items():
        pv, est = exact_pvalues(X, cfg.kind, stat, cfg.mc_count, cal_seed, cache)
        pset = PValueSet(pv)
        for fdr, name in fdrs:
            rej = apply_fdr(fdr, pset, cfg.alpha)
            estimates = {j: int(est[j]) for j in rej.rejected}
            out[name] = LocalResult(pset, rej, estimates, stat)
    return out


def _plan(methods):
    plan = {"global": {}, "local": {}}
    for name in methods:
        spec = parse_method(name)
        if spec[0] == "global":
            plan["global"].setdefault(spec[1], []).append(name)
        else:
            plan["local"].setdefault(spec[1], []).append((spec[2], name))
    return plan


def _calibrate_totals(cfg, X, stats, seed, cache):
    """Calibrate all local statistics for the totals in ``X`` from shared null draws."""
    for s in np.unique(X.sum(axis=1)):
        s = int(s)
        if s == 0 or (cfg.kind == BINARY and s == cfg.T):
            continue
        calibrate_many(stats, cfg.kind, cfg.T, s, cfg.mc_count, seed, cache)


def run_scenario(cfg, workers=1, cache=None, progress=None):
    """Simulate ``cfg.replicates`` replicates and aggregate each method's metrics.

    Replicate ``k`` draws its data and permutations from ``SeedSequence([seed, k])``
    and every exact test uses one calibration seed derived from ``seed``, so the
    report does not depend on ``workers``.
    """
    cfg.validate()
    cache = CalibrationCache() if cache is None else cache
    plan = _plan(cfg.methods)
    start = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reps = list(pool.map(lambda k: _replicate(cfg, k, plan, cache), range(cfg.replicates)))
    else:
        reps = []
        for k in range(cfg.replicates):
            reps.append(_replicate(cfg, k, plan, cache))
            if progress:
                progress(k + 1, cfg.replicates)
    truth = cfg.truth()
    metrics = {name: evaluate_metrics([r[name] for r in reps], truth) for name in cfg.methods}
    return PowerReport(cfg, metrics, cfg.seed, time.perf_counter() - start)


def report_rows(reports):
    """Rows of the method-by-metric table, one block of rows per ``n_cp``."""
    methods = list(reports[0].scenario.methods)
    header = ["n_cp", "metric"] + methods
    rows = [header]
    for rep in reports:
        for metric in ("p_gcd", "tpr", "fdr"):
            vals = [getattr(rep.metrics[name], metric) for name in methods]
            if metric != "p_gcd" and all(v is None for v in vals):
                continue
            label = {"p_gcd": "P(gCD)", "tpr": "TPR", "fdr": "FDR"}[metric]
            rows.append([str(rep.scenario.n_cp), label]
                        + ["" if v is None else f"{v:.3f}" for v in vals])
    return rows


def write_reports(reports, out_dir, stem):
    """Write ``<stem>.tsv`` (the table) and ``<stem>.jsonl`` (one record per n_cp)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / f"{stem}.tsv"
    with open(table, "w") as fh:
        for row in report_rows(reports):
            fh.write("\t".join(row) + "\n")
    records = out_dir / f"{stem}.jsonl"
    with open(records, "w") as fh:
        for rep in reports:
            fh.write(json.dumps(rep.as_record(), sort_keys=True) + "\n")
    return table, records
