"""Monte-Carlo driver: repeated runs of one scenario reduced to summary rows."""

from dataclasses import dataclass, field, replace
import enum
from typing import Dict, List, Optional, Tuple

from joblib import Parallel, delayed
import numpy as np

from .binormal import BinormalParams, TrainingContext, sample_test, sample_training
from .classifiers import fit_logistic, population_model
from .estimators import METHODS, calibrate, evaluate
from .intervals import (
    EXACT_METHODS,
    IntervalRecord,
    bootstrap_battery,
    eab_prediction,
    exact_interval_ratio,
    ml_interval,
    prediction_overlay,
)

__all__ = [
    "ScenarioConfig",
    "ConfigError",
    "SummaryRow",
    "RunOutcome",
    "ScenarioResult",
    "Purpose",
    "run_stream",
    "simulate_run",
    "run_scenario",
    "summarize",
    "BOUNDARY_EPS",
    "ALL_METHODS",
]

BOUNDARY_EPS = 1e-7
DNP_METHODS = ("DnPACC50", "DnPACCp")
ALL_METHODS = METHODS + DNP_METHODS
_METHOD_ALIASES = {"MLboot": "ML", "MLinf": "ML"}


class ConfigError(ValueError):
    """Invalid scenario configuration."""


class Purpose(enum.IntEnum):
    TRAIN = 0
    TEST = 1
    BOOT = 2
    OVERLAY = 3
    VIRTUAL = 4
    EAB = 5


def run_stream(seed, run, purpose):
    """Independent generator for one (seed, run, purpose) triple."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(run), int(purpose))))


@dataclass(frozen=True)
class ScenarioConfig:
    """Control parameters of one simulation scenario.

    ``m_plus = m_minus = None`` selects infinite training (the training
    sample is the population). ``interval_engine`` is ``auto`` (binomial
    and asymptotic intervals where the population allows them, bootstrap
    otherwise), ``bootstrap`` or ``exact``.
    """

    nu: float
    q: float
    n: int
    p: Optional[float] = None
    mu: float = 0.0
    sigma: float = 1.0
    m_plus: Optional[int] = None
    m_minus: Optional[int] = None
    n_sim: int = 100
    R: int = 999
    alpha: float = 0.9
    seed: int = 17
    interval_kind: str = "confidence"
    methods: Tuple[str, ...] = METHODS
    interval_engine: str = "auto"
    confidence_target: str = "q"
    virtual_draw: str = "estimate"
    eab_oracle: bool = False
    name: str = "scenario"

    def __post_init__(self):
        methods = tuple(_METHOD_ALIASES.get(m, m) for m in self.methods)
        object.__setattr__(self, "methods", methods)
        self.validate()

    def validate(self):
        def fail(key, msg):
            raise ConfigError(f"{key}: {msg}")

        if not self.sigma > 0:
            fail("sigma", "must be positive")
        if self.nu < self.mu:
            fail("nu", "must be >= mu")
        if not 0 < self.q < 1:
            fail("q", f"must be in (0, 1), got {self.q}")
        if self.n < 1:
            fail("n", "must be >= 1")
        if (self.m_plus is None) != (self.m_minus is None):
            fail("m_plus", "m_plus and m_minus must both be finite or both infinite")
        if self.infinite:
            if self.p is None:
                fail("p", "required with infinite training")
            if not 0 < self.p < 1:
                fail("p", f"must be in (0, 1), got {self.p}")
        else:
            if self.m_plus < 1 or self.m_minus < 1:
                fail("m_plus", "training subsamples need at least one instance each")
            if self.p is not None and abs(self.p - self.training_prevalence) > 0.005:
                fail("p", f"{self.p} disagrees with m_plus/(m_plus+m_minus)")
        for key in ("n_sim", "R"):
            if getattr(self, key) < 1:
                fail(key, "must be >= 1")
        if not 0 < self.alpha < 1:
            fail("alpha", "must be in (0, 1)")
        if self.interval_kind not in ("confidence", "prediction", "both"):
            fail("interval_kind", "must be confidence, prediction or both")
        if self.interval_engine not in ("auto", "bootstrap", "exact"):
            fail("interval_engine", "must be auto, bootstrap or exact")
        if self.confidence_target not in ("q", "realised"):
            fail("confidence_target", "must be q or realised")
        if self.virtual_draw not in ("estimate", "truth"):
            fail("virtual_draw", "must be estimate or truth")
        if not self.methods:
            fail("methods", "at least one method is required")
        unknown = [m for m in self.methods if m not in ALL_METHODS]
        if unknown:
            fail("methods", f"unknown method(s) {unknown}")
        if len(set(self.methods)) != len(self.methods):
            fail("methods", "duplicate method")
        if self.interval_engine == "exact":
            bad = [m for m in self.core_methods if m not in EXACT_METHODS]
            if bad:
                fail("interval_engine", f"no exact interval for {bad}")
            if self.interval_kind != "confidence":
                fail("interval_kind", "prediction intervals need the bootstrap engine")

    @property
    def infinite(self):
        return self.m_plus is None

    @property
    def params(self):
        return BinormalParams(self.mu, self.nu, self.sigma)

    @property
    def training_prevalence(self):
        if self.infinite:
            return self.p
        return self.m_plus / (self.m_plus + self.m_minus)

    @property
    def core_methods(self):
        return tuple(m for m in self.methods if m in METHODS)

    @property
    def dnp_methods(self):
        return tuple(m for m in self.methods if m in DNP_METHODS)

    def engine_for(self, method):
        """'exact' or 'bootstrap' for one core method."""
        if self.interval_engine == "bootstrap":
            return "bootstrap"
        if self.interval_engine == "exact":
            return "exact"
        if self.infinite and self.interval_kind == "confidence" and method in (
                "ACC50", "ACCp", "ACCv", "ML"):
            return "exact"
        return "bootstrap"

    def tag(self, method):
        if method == "ML":
            return "MLinf" if self.engine_for(method) == "exact" else "MLboot"
        return method

    def columns(self):
        """Output column tags with the (method, row kind) that produces them."""
        cols = []
        for m in self.core_methods:
            if self.interval_kind in ("confidence", "both"):
                cols.append((self.tag(m), m, "confidence"))
            if self.interval_kind in ("prediction", "both"):
                label = self.tag(m) if self.interval_kind == "prediction" else "pred" + self.tag(m)
                cols.append((label, m, "prediction"))
        cols.extend((m, m, "dnp") for m in self.dnp_methods)
        return cols

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


@dataclass(frozen=True)
class RunOutcome:
    point: float
    failed: bool
    q: float
    target: float
    interval: IntervalRecord


@dataclass(frozen=True)
class SummaryRow:
    method_tag: str
    av_prev_or_freq: float
    av_abs_dev: float
    perc_fail_est: float
    av_int_length: float
    coverage: float
    perc_0_or_1: float
    kind: str = "confidence"

    STATISTICS = ("av_prev_or_freq", "av_abs_dev", "perc_fail_est", "av_int_length",
                  "coverage", "perc_0_or_1")

    def values(self):
        return [getattr(self, s) for s in self.STATISTICS]


def summarize(records: List[RunOutcome], method_tag="", target_kind="confidence") -> SummaryRow:
    """Reduce per-run outcomes to the six tabulated percentages.

    Point statistics average over runs whose estimate did not fail; interval
    statistics average over runs whose interval did not fail.
    """
    if not records:
        raise ValueError("no records to summarise")
    ok = [r for r in records if not r.failed]
    ints = [r for r in records if not r.interval.failed]
    nan = float("nan")
    perc_fail = 100.0 * (len(records) - len(ok)) / len(records)
    if ok:
        pts = np.array([r.point for r in ok])
        qs = np.array([r.q for r in ok])
        av = 100.0 * pts.mean()
        dev = 100.0 * np.abs(pts - qs).mean()
        bound = 100.0 * np.mean((pts <= BOUNDARY_EPS) | (pts >= 1.0 - BOUNDARY_EPS))
    else:
        av = dev = bound = nan
    if ints:
        length = 100.0 * np.mean([r.interval.length for r in ints])
        cover = 100.0 * np.mean([r.interval.contains(r.target) for r in ints])
    else:
        length = cover = nan
    return SummaryRow(method_tag, float(av), float(dev), float(perc_fail), float(length),
                      float(cover), float(bound), target_kind)


def _population_calibration(cfg):
    ctx = TrainingContext.infinite(cfg.params, cfg.p)
    model = population_model(ctx)
    return ctx, model, calibrate(ctx, model)


def simulate_run(cfg: ScenarioConfig, run: int, population=None) -> Dict[str, RunOutcome]:
    """One pass of the protocol: draw samples, estimate, build intervals."""
    params = cfg.params
    if cfg.infinite:
        ctx, model, cal = population or _population_calibration(cfg)
    else:
        sample = sample_training(params, cfg.m_plus, cfg.m_minus, run_stream(cfg.seed, run, Purpose.TRAIN))
        ctx = TrainingContext.finite(sample)
        model = fit_logistic(sample)
        cal = calibrate(ctx, model)
    test = sample_test(params, cfg.q, cfg.n, run_stream(cfg.seed, run, Purpose.TEST))
    x = test.features
    realised = test.realised_frequency()
    conf_target = cfg.q if cfg.confidence_target == "q" else realised

    core = cfg.core_methods
    points = evaluate(cal, x, methods=core) if core else {}
    boot = [m for m in core if cfg.engine_for(m) == "bootstrap"]
    battery = None
    if boot:
        battery = bootstrap_battery(ctx, test, boot, run_stream(cfg.seed, run, Purpose.BOOT), cfg.R,
                                    cal=cal if cfg.infinite else None)
    overlay_rng = run_stream(cfg.seed, run, Purpose.OVERLAY)
    virtual_rng = run_stream(cfg.seed, run, Purpose.VIRTUAL)
    eab_rng = run_stream(cfg.seed, run, Purpose.EAB)

    out: Dict[str, RunOutcome] = {}
    for label, m, kind in cfg.columns():
        if kind == "dnp":
            t = 0.5 if m == "DnPACC50" else ctx.prevalence
            rec = eab_prediction(ctx, model, test, t, cfg.alpha, eab_rng, cfg.R,
                                 oracle_q=cfg.q if cfg.eab_oracle else None, method_tag=label)
            out[label] = RunOutcome(rec.estimate, rec.failed, cfg.q, realised, rec.with_target(realised))
            continue
        est = points[m]
        failed = bool(est.failed[0])
        value = float(est.value[0])
        if kind == "confidence":
            if cfg.engine_for(m) == "exact":
                rec = (ml_interval(ctx, model, test, cfg.alpha, cal=cal) if m == "ML"
                       else exact_interval_ratio(ctx, model, test, m, cfg.alpha, cal=cal))
                rec = replace(rec, method_tag=label)
            else:
                rec = replace(battery.interval(m, cfg.alpha), method_tag=label)
            out[label] = RunOutcome(value, failed, cfg.q, conf_target, rec.with_target(conf_target))
        else:
            draw_p = cfg.q if cfg.virtual_draw == "truth" else value
            virtual = float("nan") if failed and cfg.virtual_draw == "estimate" else \
                float(virtual_rng.binomial(cfg.n, min(max(draw_p, 0.0), 1.0)) / cfg.n)
            freqs = prediction_overlay(battery.replicates[m], cfg.n, overlay_rng)
            rec = battery.interval(m, cfg.alpha, kind="prediction", values=freqs)
            rec = replace(rec, method_tag=label)
            out[label] = RunOutcome(virtual, failed, cfg.q, realised, rec.with_target(realised))
    return out


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    rows: List[SummaryRow]
    outcomes: List[Dict[str, RunOutcome]] = field(repr=False, default_factory=list)

    def row(self, tag):
        for r in self.rows:
            if r.method_tag == tag:
                return r
        raise KeyError(tag)

    @property
    def tags(self):
        return [r.method_tag for r in self.rows]


def run_scenario(cfg: ScenarioConfig, workers: int = 1) -> ScenarioResult:
    """Run ``cfg.n_sim`` independent runs and summarise every output column.

    Runs are independent given their run index, so the result does not
    depend on ``workers``.
    """
    population = _population_calibration(cfg) if cfg.infinite else None
    if workers == 1:
        outcomes = [simulate_run(cfg, r, population) for r in range(cfg.n_sim)]
    else:
        outcomes = Parallel(n_jobs=workers)(
            delayed(simulate_run)(cfg, r, population) for r in range(cfg.n_sim))
    rows = []
    for label, _, kind in cfg.columns():
        rows.append(summarize([o[label] for o in outcomes], label,
                              "confidence" if kind == "confidence" else "prediction"))
    return ScenarioResult(cfg, rows, outcomes)
