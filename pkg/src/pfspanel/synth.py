"""Synthetic raw panels from a fully known data-generating process.

The generator works in real (January 2019) dollars first: each household's
monthly per-capita food spending is an exact gamma draw whose conditional
mean and variance are log-linear in the previous wave's spending, its
square, household covariates, and state/year effects.  The draw is then
reverse-harmonized into the raw survey encodings (annual pre-1994 fields,
component amounts with recall-period codes after, regime-specific program
participation fields, nominal dollars at the interview month's price level),
so running the ingestion stage on the output recovers the real value up to
floating-point round trip.

A truth sidecar records the hidden conditional mean, variance, and survival
probability for every person-year, which is what the estimation stage is
judged against.

The module also carries three deliberately naive oracles used for
validation: a Monte Carlo survival estimate, a derivative-free direct
search for the quasi-likelihood maximizer, and an exhaustive spell/
transition enumerator for short status sequences.  They share no code with
the estimation modules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import optimize

from .errors import ConfigError, DataError, NumericError
from .estimator import GammaParams, gamma_survival
from .ingest import CANONICAL_COLUMNS, CpiTable
from .waves import WaveCalendar, default_calendar

RECALL_FACTORS = {"week": 52.0 / 12.0, "two_week": 26.0 / 12.0, "month": 1.0,
                  "year": 1.0 / 12.0}
RECALL_CODES = tuple(RECALL_FACTORS)

TRUTH_COLUMNS = (
    "person_id", "year", "household_id", "w_real", "true_mean",
    "true_variance", "true_pfs", "tfp_real",
)

FILE_NAMES = {
    "raw": "synthetic_panel.csv",
    "truth": "truth_panel.csv",
    "cpi": "cpi.csv",
    "macro": "macro.csv",
    "targets": "targets.csv",
    "reference": "reference.csv",
    "roster": "synth_roster.csv",
}


@dataclass(frozen=True)
class DGPConfig:
    """Everything the generator needs; all effects are in log-mean units."""

    n_households: int = 300
    seed: int = 7
    window: tuple[int, int] = (1977, 2019)
    complexity: str = "rich"  # "rich" adds spouses, children, split-offs
    # conditional mean equation
    mean_intercept: float = 4.37
    lag_coef: float = 0.002
    lag_sq_coef: float = -2.0e-6
    income_coef: float = 0.10
    children_coef: float = -0.08
    age_coef: float = 0.04
    states: tuple[str, ...] = ("CA", "IL", "NY", "TX")
    state_effects: tuple[float, ...] = (0.0, 0.05, -0.04, 0.02)
    year_effect_amplitude: float = 0.0
    # conditional variance: mean^2 / alpha unless explicit coefficients given
    alpha: float = 4.0
    variance_coefficients: tuple[tuple[str, float], ...] | None = None
    # covariate distributions
    income_log_mean: float = 10.3
    income_log_sd: float = 1.0
    children_share: float = 0.4
    children_flip_rate: float = 0.08
    max_children: int = 2
    snap_rate: float = 0.12
    spouse_share: float = 0.6
    nonsample_spouse_share: float = 0.5
    attrition_rate: float = 0.0
    split_off_rate: float = 0.0
    rp_change_rate: float = 0.02
    # thresholds and caps
    anchor_lag: float = 320.0
    tfp_base: float = 180.0
    tfp_sd: float = 0.05
    tfp_schedule: tuple[tuple[int, float], ...] | None = None
    mean_cap: float = 5000.0
    fsss_years: tuple[int, ...] = (1999, 2001, 2003, 2015, 2017, 2019)

    def __post_init__(self):
        for name in ("snap_rate", "spouse_share", "nonsample_spouse_share",
                     "attrition_rate", "split_off_rate", "rp_change_rate",
                     "children_share", "children_flip_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        if self.n_households < 1:
            raise ConfigError("n_households must be positive")
        if self.alpha <= 0:
            raise ConfigError("alpha must be positive")
        if self.complexity not in ("simple", "rich"):
            raise ConfigError(f"unknown complexity {self.complexity!r}")
        if len(self.states) != len(self.state_effects):
            raise ConfigError("states and state_effects differ in length")
        if self.mean_cap <= 0:
            raise ConfigError("mean_cap must be positive")

    def year_effect(self, year: int) -> float:
        return self.year_effect_amplitude * math.sin(0.9 * (year - 1977))

    def state_effect(self, state: str) -> float:
        return self.state_effects[self.states.index(state)]

    def tfp_for(self, year: int) -> float:
        if self.tfp_schedule:
            sched = dict(self.tfp_schedule)
            if year in sched:
                return sched[year]
        return self.tfp_base

    def mean_log(self, w_lag, ln_income, has_children, age_c, state, year):
        return (
            self.mean_intercept
            + self.lag_coef * w_lag
            + self.lag_sq_coef * w_lag * w_lag
            + self.income_coef * ln_income
            + self.children_coef * has_children
            + self.age_coef * age_c
            + self.state_effect(state)
            + self.year_effect(year)
        )

    def variance_log(self, mean_log_value, basis: dict[str, float]) -> float:
        if self.variance_coefficients is None:
            return 2.0 * mean_log_value - math.log(self.alpha)
        total = 0.0
        for term, coef in self.variance_coefficients:
            total += coef * basis.get(term, 0.0)
        return total


def acceptance_config(n_persons: int = 5000, seed: int = 20190601) -> DGPConfig:
    """One-row-per-household panel sized for coefficient recovery tests.

    The wide income spread is deliberate: it keeps the variance-equation
    intercept identifiable to tight tolerance at this sample size.
    """
    return DGPConfig(
        n_households=n_persons,
        seed=seed,
        window=(1979, 2019),
        complexity="simple",
        spouse_share=0.0,
        attrition_rate=0.0,
        split_off_rate=0.0,
        year_effect_amplitude=0.0,
        income_log_sd=1.6,
    )


def demo_config(n_households: int = 120, seed: int = 404) -> DGPConfig:
    """Small messy panel exercising every selection and linkage rule."""
    return DGPConfig(
        n_households=n_households,
        seed=seed,
        complexity="rich",
        attrition_rate=0.02,
        split_off_rate=0.25,
        year_effect_amplitude=0.03,
    )


def true_coefficient_table(config: DGPConfig) -> pd.DataFrame:
    """Long-form truth for both equations, in estimation column names.

    Dummy-coded effects are contrasts against the reference level (first
    sorted state, zero-amplitude years drop out entirely).
    """
    mean_terms: dict[str, float] = {
        "intercept": config.mean_intercept,
        "lag_food_exp_pc_month": config.lag_coef,
        "lag_food_exp_pc_month_pow2": config.lag_sq_coef,
        "ln_income_pc": config.income_coef,
        "has_children": config.children_coef,
        "age_c": config.age_coef,
    }
    ordered_states = sorted(config.states)
    ref = config.state_effect(ordered_states[0])
    mean_terms["intercept"] += ref
    for st in ordered_states[1:]:
        mean_terms[f"state[{st}]"] = config.state_effect(st) - ref
    rows = [
        {"equation": "mean", "term": k, "value": v} for k, v in mean_terms.items()
    ]
    if config.variance_coefficients is None:
        var_terms = {k: 2.0 * v for k, v in mean_terms.items()}
        var_terms["intercept"] = (
            2.0 * (config.mean_intercept + ref) - math.log(config.alpha)
        )
    else:
        var_terms = dict(config.variance_coefficients)
    rows += [
        {"equation": "variance", "term": k, "value": v} for k, v in var_terms.items()
    ]
    rows.append({"equation": "dgp", "term": "alpha", "value": config.alpha})
    rows.append({"equation": "dgp", "term": "tfp_base", "value": config.tfp_base})
    return pd.DataFrame(rows, columns=["equation", "term", "value"])


# ------------------------------------------------------------- environment


def synth_cpi(window: tuple[int, int]) -> pd.DataFrame:
    rows = []
    for year in range(window[0], max(window[1], 2019) + 1):
        for m in range(1, 13):
            idx = 33.0 * (1.032 ** (year - 1977)) * (1.0 + 0.0015 * (m - 1))
            rows.append({"year": year, "month": m, "index": round(idx, 6)})
    return pd.DataFrame(rows)


def synth_macro(window: tuple[int, int]) -> pd.DataFrame:
    rows = []
    for year in range(window[0], window[1] + 1):
        t = year - 1977
        rows.append(
            {
                "year": year,
                "income_pc": round(25000.0 * 1.015 ** t, 2),
                "snap_rate": round(8.0 + 3.0 * math.sin(t / 4.0), 4),
                "poverty_rate": round(13.0 + 2.0 * math.cos(t / 5.0), 4),
                "unemployment_rate": round(6.0 + 2.0 * math.sin(t / 3.0 + 1.0), 4),
                "gdp_growth": round(2.5 + 2.0 * math.sin(t / 2.5), 4),
            }
        )
    return pd.DataFrame(rows)


def synth_targets(calendar: WaveCalendar, window: tuple[int, int]) -> pd.DataFrame:
    """Prevalence targets for 1995 onward, tied loosely to the program
    participation series so the extrapolation model has signal."""
    macro = synth_macro(window).set_index("year")
    rows = []
    for year in calendar.waves_between(max(1995, window[0]), window[1]):
        snap = float(macro.loc[year, "snap_rate"])
        target = 0.03 + 0.009 * snap + 0.002 * math.sin(year * 0.8)
        rows.append({"year": year, "target": round(target, 6)})
    return pd.DataFrame(rows)


# ---------------------------------------------------------------- generator


@dataclass
class _Person:
    pid: int
    flag: str
    role: str  # current role, updated over time
    sex: str
    race: str
    birth_year: int
    weight: float
    grades: int
    college: str


@dataclass
class SyntheticPanel:
    raw: pd.DataFrame
    truth: pd.DataFrame
    cpi: pd.DataFrame
    macro: pd.DataFrame
    targets: pd.DataFrame
    reference: pd.DataFrame
    roster: pd.DataFrame
    config: DGPConfig

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for key, frame in (
            ("raw", self.raw), ("truth", self.truth), ("cpi", self.cpi),
            ("macro", self.macro), ("targets", self.targets),
            ("reference", self.reference), ("roster", self.roster),
        ):
            p = out / FILE_NAMES[key]
            frame.to_csv(p, index=False)
            paths[key] = p
        return paths


def _person_rng(seed: int, pid: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(2, pid))))


def _household_rng(seed: int, hidx: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(1, hidx))))


def _structure_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(0,))))


_RACES = ("white", "black", "other")
_RACE_P = (0.65, 0.25, 0.10)


def _draw_person(rng, pid, flag, role, birth_year) -> _Person:
    sex = "female" if rng.random() < 0.5 else "male"
    race = str(rng.choice(_RACES, p=_RACE_P))
    grades = int(rng.integers(8, 17))
    college = "yes" if grades >= 16 and rng.random() < 0.8 else "no"
    weight = float(np.round(rng.uniform(0.5, 2.5), 4))
    if flag == "nonsample":
        weight = 0.0
    return _Person(pid=pid, flag=flag, role=role, sex=sex, race=race,
                   birth_year=birth_year, weight=weight, grades=grades,
                   college=college)


class _Emitter:
    """Accumulates raw and truth rows for one generation run."""

    def __init__(self, config: DGPConfig, calendar: WaveCalendar):
        self.cfg = config
        self.cal = calendar
        self.cpi = CpiTable(synth_cpi(config.window))
        self.base = self.cpi.index_for(2019, 1)
        self.raw_rows: list[dict] = []
        self.truth_rows: list[dict] = []

    def nominal(self, real_value: float, year: int, month: int) -> float:
        return real_value * self.cpi.index_for(year, month) / self.base

    def household_wave(
        self,
        year: int,
        hh_id: str,
        members: list[_Person],
        rp: _Person,
        w_lag: float | None,
        h_rng: np.random.Generator,
        state: str,
        first_wave: bool,
    ) -> float:
        """Generate one household-year, emit one row per member, and return
        the drawn real per-capita food value for next wave's lag."""
        cfg = self.cfg
        month = int(h_rng.integers(1, 13))
        ln_income = float(h_rng.normal(cfg.income_log_mean, cfg.income_log_sd))
        children = [m for m in members if m.role == "CH"]
        n_children = len(children)
        if cfg.complexity == "simple":
            # simple mode keeps no child members; children are summary fields
            n_children = int(self._simple_children(h_rng))
        has_children = 1.0 if n_children > 0 else 0.0
        family_size = (
            1 + sum(1 for m in members if m.role in ("SP", "OTHER")) + n_children
            if cfg.complexity == "rich"
            else 1 + n_children
        )
        rp_age = year - rp.birth_year
        age_c = (rp_age - 45.0) / 10.0

        lag_value = cfg.anchor_lag if first_wave or w_lag is None else w_lag
        eta = cfg.mean_log(lag_value, ln_income, has_children, age_c, state, year)
        mu = math.exp(eta)
        if mu > cfg.mean_cap:
            raise NumericError(
                f"DGP mean {mu:.1f} exceeds the configured cap {cfg.mean_cap}; "
                "coefficients are numerically unsafe"
            )
        basis = {
            "intercept": 1.0,
            "lag_food_exp_pc_month": lag_value,
            "lag_food_exp_pc_month_pow2": lag_value * lag_value,
            "ln_income_pc": ln_income,
            "has_children": has_children,
            "age_c": age_c,
            f"state[{state}]": 1.0,
        }
        var = math.exp(cfg.variance_log(eta, basis))
        shape = mu * mu / var
        scale = var / mu
        w_real = float(h_rng.gamma(shape, scale))

        tfp_real = cfg.tfp_for(year) * math.exp(float(h_rng.normal(0.0, cfg.tfp_sd)))
        true_pfs = gamma_survival(tfp_real, GammaParams(shape=shape, scale=scale))

        snap = bool(h_rng.random() < cfg.snap_rate)
        food_hh_nominal = self.nominal(w_real * family_size, year, month)
        benefit_nominal = (
            float(h_rng.uniform(0.15, 0.45)) * food_hh_nominal if snap else 0.0
        )
        raw_fields = self._food_fields(
            year, month, snap, food_hh_nominal, benefit_nominal, h_rng
        )

        income_nominal = self.nominal(math.exp(ln_income) * family_size, year, month)
        tfp_nominal = self.nominal(tfp_real, year, month)

        fsss_raw = fsss_status = None
        if year in cfg.fsss_years:
            score = 18.0 * (1.0 - true_pfs) ** 2 - 2.0 + float(h_rng.normal(0, 1.2))
            score = int(np.clip(round(score), 0, 18))
            fsss_raw = score
            fsss_status = "insecure" if score >= 3 else "secure"

        for m in members:
            rec = {c: None for c in CANONICAL_COLUMNS}
            rec.update(raw_fields)
            rec.update(
                {
                    "person_id": str(m.pid),
                    "year": year,
                    "household_id": hh_id,
                    "role": m.role,
                    "interview_month": month,
                    "individual_weight": m.weight,
                    "state": state,
                    "sample_flag": m.flag,
                    "family_size": family_size,
                    "n_children": n_children,
                    "rp_age": rp_age,
                    "rp_sex": rp.sex,
                    "rp_race": rp.race,
                    "rp_marital": (
                        "married"
                        if any(x.role == "SP" for x in members)
                        else "single"
                    ),
                    "rp_education_grades": rp.grades,
                    "rp_college_degree": rp.college,
                    "rp_employment": "working" if rp_age < 65 else "retired",
                    "rp_disability": "none",
                    "indiv_sex": m.sex,
                    "indiv_age": year - m.birth_year,
                    # pre-1985 rounds only recorded the head's race
                    "indiv_race": m.race if (year >= 1985 or m.role == "RP") else None,
                    "indiv_education_grades": (
                        m.grades
                        if (year - m.birth_year) > 15
                        else None
                    ),
                    "indiv_college_degree": (
                        m.college if (year - m.birth_year) > 15 else None
                    ),
                    "income_annual": round(income_nominal, 6),
                    "tfp_cost_pc": round(tfp_nominal, 6),
                    "fsss_raw": fsss_raw,
                    "fsss_status": fsss_status,
                }
            )
            self.raw_rows.append(rec)
            self.truth_rows.append(
                {
                    "person_id": str(m.pid),
                    "year": year,
                    "household_id": hh_id,
                    "w_real": w_real,
                    "true_mean": mu,
                    "true_variance": var,
                    "true_pfs": true_pfs,
                    "tfp_real": tfp_real,
                }
            )
        return w_real

    def _simple_children(self, h_rng) -> int:
        # fresh draw each wave so the dummy varies within person
        has = h_rng.random() < self.cfg.children_share
        return int(1 + (h_rng.random() < 0.5)) if has else 0

    def _food_fields(self, year, month, snap, food_hh, benefit, h_rng) -> dict:
        """Reverse-harmonize household food into the year's raw encoding."""
        fields: dict[str, object] = {}
        beyond = food_hh - benefit
        out_share = float(h_rng.uniform(0.05, 0.35))
        del_share = 0.0 if h_rng.random() < 0.7 else float(h_rng.uniform(0.0, 0.08))

        if year <= 1993:
            fields["snap_raw"] = str(int(1 + h_rng.integers(0, 2))) if snap else "0"
            fields["food_home_delivered_annual"] = round(
                beyond * (1.0 - out_share) * 12.0, 10
            )
            fields["food_out_annual"] = round(beyond * out_share * 12.0, 10)
        else:
            if 1999 <= year <= 2007:
                idx = (month - 2) % 12
                flags = [
                    "1" if h_rng.random() < (0.8 if snap else 0.02) else "0"
                    for _ in range(12)
                ]
                flags[idx] = "1" if snap else "0"
                fields["snap_raw"] = "".join(flags)
            else:
                fields["snap_raw"] = "yes" if snap else "no"
            home_like = beyond * (1.0 - out_share - del_share)
            delivered = beyond * del_share
            eat_out = beyond * out_share
            for col_amount, col_recall, monthly in (
                ("food_extra_amount", "food_extra_recall", home_like if snap else None),
                ("food_home_amount", "food_home_recall", None if snap else home_like),
                ("food_delivered_amount", "food_delivered_recall", delivered),
                ("food_out_amount", "food_out_recall", eat_out),
            ):
                if monthly is None:
                    continue
                recall = str(h_rng.choice(RECALL_CODES))
                fields[col_amount] = monthly / RECALL_FACTORS[recall]
                fields[col_recall] = recall
        if snap:
            recall = str(h_rng.choice(RECALL_CODES))
            fields["snap_benefit_raw"] = benefit / RECALL_FACTORS[recall]
            fields["benefit_recall"] = recall
        return fields


def generate(config: DGPConfig, out_dir: str | Path | None = None) -> SyntheticPanel:
    """Build the panel; deterministic for a fixed config.

    Every household consumes its own random stream, derived from the master
    seed and the household index, so output does not depend on generation
    order.  Split-off households get fresh indices but inherit the prior
    wave's spending as the lag input, the same linkage the estimator uses.
    """
    calendar = default_calendar()
    lo, hi = config.window
    waves = calendar.waves_between(lo, hi)
    if not waves:
        raise ConfigError(f"window {config.window} contains no survey waves")

    emitter = _Emitter(config, calendar)
    s_rng = _structure_rng(config.seed)

    next_pid = 1
    next_hidx = config.n_households + 1

    for hidx in range(1, config.n_households + 1):
        h_rng = _household_rng(config.seed, hidx)
        state = str(s_rng.choice(config.states))
        rp_pid = next_pid
        next_pid += 1
        rp = _draw_person(
            _person_rng(config.seed, rp_pid), rp_pid, "original_1968", "RP",
            birth_year=int(waves[0] - s_rng.integers(25, 56)),
        )
        members: list[_Person] = [rp]
        if config.complexity == "rich" and s_rng.random() < config.spouse_share:
            sp_pid = next_pid
            next_pid += 1
            sp_flag = (
                "nonsample"
                if s_rng.random() < config.nonsample_spouse_share
                else "original_1968"
            )
            members.append(
                _draw_person(
                    _person_rng(config.seed, sp_pid), sp_pid, sp_flag, "SP",
                    birth_year=int(waves[0] - s_rng.integers(23, 54)),
                )
            )
        if config.complexity == "rich":
            for _ in range(int(s_rng.integers(0, config.max_children + 1))):
                ch_pid = next_pid
                next_pid += 1
                members.append(
                    _draw_person(
                        _person_rng(config.seed, ch_pid), ch_pid,
                        "lineal_descendant", "CH",
                        birth_year=int(waves[0] - s_rng.integers(1, 16)),
                    )
                )

        hh_base = 1000 + hidx
        w_lag: float | None = None
        alive = True
        pending_splits: list[tuple[_Person, float, int]] = []  # person, lag, year
        first = True
        for wi, year in enumerate(waves):
            if not alive:
                break
            if not first and s_rng.random() < config.attrition_rate:
                alive = False
                break
            # a grown child may leave to head a new household next wave
            if config.complexity == "rich":
                for ch in [m for m in members if m.role == "CH"]:
                    age = year - ch.birth_year
                    if age >= 20 and s_rng.random() < config.split_off_rate:
                        members.remove(ch)
                        lag0 = w_lag if w_lag is not None else config.anchor_lag
                        pending_splits.append((ch, lag0, year))
                if (
                    len([m for m in members if m.role == "SP"]) == 1
                    and s_rng.random() < config.rp_change_rate
                ):
                    sp = next(m for m in members if m.role == "SP")
                    rp.role, sp.role = "SP", "RP"
                    rp = sp
            hh_id = str(hh_base * 100 + year % 100)
            w_lag = emitter.household_wave(
                year, hh_id, members, rp, w_lag, h_rng, state, first_wave=first
            )
            first = False

        for ch, lag0, split_year in pending_splits:
            sub_hidx = next_hidx
            next_hidx += 1
            sub_rng = _household_rng(config.seed, sub_hidx)
            ch.role = "RP"
            sub_base = 1000 + sub_hidx
            sub_lag: float | None = lag0
            sub_first = True
            sub_alive = True
            for year in calendar.waves_between(split_year, hi):
                if not sub_alive:
                    break
                if not sub_first and s_rng.random() < config.attrition_rate:
                    sub_alive = False
                    break
                hh_id = str(sub_base * 100 + year % 100)
                sub_lag = emitter.household_wave(
                    year, hh_id, [ch], ch, sub_lag, sub_rng, state,
                    first_wave=False,
                )
                sub_first = False

    raw = pd.DataFrame(emitter.raw_rows, columns=list(CANONICAL_COLUMNS))
    truth = pd.DataFrame(emitter.truth_rows, columns=list(TRUTH_COLUMNS))
    order = np.lexsort((raw["year"].to_numpy(), raw["person_id"].astype(int).to_numpy()))
    raw = raw.iloc[order].reset_index(drop=True)
    torder = np.lexsort(
        (truth["year"].to_numpy(), truth["person_id"].astype(int).to_numpy())
    )
    truth = truth.iloc[torder].reset_index(drop=True)

    roster_rows = [
        {
            "person_id": pid,
            "first_year": int(g.min()),
            "last_year": int(g.max()),
            "n_waves": int(g.nunique()),
        }
        for pid, g in sorted(
            raw.groupby("person_id")["year"], key=lambda kv: int(kv[0])
        )
    ]
    roster = pd.DataFrame(
        roster_rows, columns=["person_id", "first_year", "last_year", "n_waves"]
    )

    panel = SyntheticPanel(
        raw=raw,
        truth=truth,
        cpi=synth_cpi(config.window),
        macro=synth_macro(config.window),
        targets=synth_targets(calendar, config.window),
        reference=true_coefficient_table(config),
        roster=roster,
        config=config,
    )
    if out_dir is not None:
        panel.write(out_dir)
    return panel


# ------------------------------------------------------------------ oracles


def oracle_survival_mc(
    params: GammaParams, threshold: float, n_draws: int = 10**6, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo estimate of P(W >= threshold) with its binomial SE."""
    if n_draws < 10**4:
        raise ConfigError("Monte Carlo oracle needs at least 10^4 draws")
    if threshold < 0 or not np.isfinite(threshold):
        raise DataError(f"threshold must be finite and non-negative, got {threshold}")
    if threshold == 0.0:
        return 1.0, 0.0
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    draws = rng.gamma(params.shape, params.scale, size=n_draws)
    p = float(np.mean(draws >= threshold))
    se = float(np.sqrt(p * (1.0 - p) / n_draws))
    return p, se


def oracle_qmle_search(X, y, w=None) -> np.ndarray:
    """Derivative-free maximizer of the weighted Poisson quasi-likelihood.

    Deliberately small-scale: at most 3 coefficients and 50 rows.  Two
    rounds of Nelder-Mead, the second started from the first's optimum with
    tight tolerances.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    w = np.ones(y.size) if w is None else np.asarray(w, dtype=float)
    n, k = X.shape
    if k > 3 or n > 50:
        raise DataError(
            f"direct search handles at most 3 coefficients and 50 rows, "
            f"got {k} and {n}"
        )
    if y.size != n or w.size != n:
        raise DataError("X, y, w differ in length")

    def neg_qll(beta):
        eta = np.clip(X @ beta, -700.0, 700.0)
        return -float(np.sum(w * (y * eta - np.exp(eta))))

    start = np.zeros(k)
    first = optimize.minimize(
        neg_qll, start, method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000},
    )
    second = optimize.minimize(
        neg_qll, first.x, method="Nelder-Mead",
        options={"xatol": 1e-13, "fatol": 1e-15, "maxiter": 20000, "maxfev": 40000},
    )
    if not (first.success or second.success):
        raise NumericError(
            f"direct quasi-likelihood search did not converge: {second.message}"
        )
    return np.asarray(second.x, dtype=float)


def oracle_dynamics_enum(sequence) -> dict:
    """Spells, transitions, chronicity, and newly/still for one sequence.

    The sequence is positional over consecutive waves with symbols S
    (secure), I (insecure), U (unknown).  Rules are enumerated directly from
    their definitions, independent of the panel implementation.
    """
    seq = [str(s).upper() for s in sequence]
    if len(seq) > 8:
        raise DataError("enumeration oracle handles sequences up to length 8")
    if any(s not in ("S", "I", "U") for s in seq):
        raise DataError(f"sequence symbols must be S/I/U, got {seq}")
    n = len(seq)

    spells = []
    i = 0
    while i < n:
        if seq[i] == "I":
            j = i
            while j + 1 < n and seq[j + 1] == "I":
                j += 1
            spells.append(
                {
                    "start": i,
                    "end": j,
                    "length": j - i + 1,
                    "left_censored": i == 0 or seq[i - 1] == "U",
                    "right_censored": j == n - 1 or seq[j + 1] == "U",
                }
            )
            i = j + 1
        else:
            i += 1

    transitions = {"SS": 0, "SI": 0, "IS": 0, "II": 0}
    for t in range(1, n):
        a, b = seq[t - 1], seq[t]
        if a in ("S", "I") and b in ("S", "I"):
            transitions[a + b] += 1

    n_pairs = sum(transitions.values())
    chronic = None
    if n_pairs >= 1:
        chronic = any(sp["length"] >= 2 for sp in spells)

    newly = []
    for t in range(n):
        if seq[t] != "I":
            continue
        if t == 0 or seq[t - 1] == "U":
            newly.append((t, "prior_unknown"))
        elif seq[t - 1] == "S":
            newly.append((t, "newly"))
        else:
            newly.append((t, "still"))

    return {
        "spells": spells,
        "transitions": transitions,
        "chronic": chronic,
        "newly_still": newly,
    }
