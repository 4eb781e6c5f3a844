"""Batch operations behind the CLI and the service: simulate, estimate,
histogram, and background-effort sweep, plus report rendering.

Estimate reports are printed on both scales (reduced-form coefficients
and recovered structural parameters) and embed a machine-readable JSON
block between fixed markers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .mechanism import ALL_CELLS
from .recovery import (
    BETA_NAMES,
    PARAM_NAMES,
    RecoveredParams,
    WaldTest,
    hypothesis_battery,
    hypothesis_battery_theta,
    recover_from_fit,
    wald_test_pair,
    wald_test_value,
)
from .simulate import DecisionRecord, filter_analysis_rows, simulate_panel
from .tobit import THETA_NAMES, TobitFit, build_design_row, fit_tobit

RESULT_JSON_BEGIN = "--- BEGIN RESULT JSON ---"
RESULT_JSON_END = "--- END RESULT JSON ---"

EFFORT_SHARE_BINS = 10


@dataclass(frozen=True)
class PanelSummary:
    n_subjects: int
    n_records: int
    n_analysis: int
    n_left: int
    n_right: int

    def render(self) -> str:
        return (
            f"{self.n_records} records from {self.n_subjects} subjects; "
            f"{self.n_analysis} analysis rows "
            f"({self.n_left} left- and {self.n_right} right-censored)"
        )


def summarize_panel(records: list[DecisionRecord], budget: float = 360.0) -> PanelSummary:
    analysis = filter_analysis_rows(records)
    n_left = sum(r.e2 <= 1e-9 for r in analysis)
    n_right = sum(r.e2 >= budget - 1e-9 for r in analysis)
    return PanelSummary(
        n_subjects=len({r.subject_id for r in records}),
        n_records=len(records),
        n_analysis=len(analysis),
        n_left=n_left,
        n_right=n_right,
    )


def run_simulate(config: RunConfig) -> tuple[list[DecisionRecord], PanelSummary]:
    records = simulate_panel(config.population_spec())
    return records, summarize_panel(records, config.budget)


@dataclass(frozen=True)
class EstimateResult:
    config: RunConfig
    fit: TobitFit
    params: RecoveredParams
    tests_beta: list[WaldTest]
    tests_theta: list[WaldTest]
    delta_test: WaldTest
    alpha_test: WaldTest

    @property
    def grid_tests(self) -> list[WaldTest]:
        return self.tests_beta if self.config.test_scale == "beta" else self.tests_theta


def run_estimate(records: list[DecisionRecord], config: RunConfig) -> EstimateResult:
    rows = [
        build_design_row(r, config.omega, config.schedule)
        for r in filter_analysis_rows(records)
    ]
    fit = fit_tobit(rows, cluster_correction=config.cluster_correction)
    params = recover_from_fit(fit)
    return EstimateResult(
        config=config,
        fit=fit,
        params=params,
        tests_beta=hypothesis_battery(params),
        tests_theta=hypothesis_battery_theta(fit),
        delta_test=wald_test_value(params, "delta", 1.0),
        alpha_test=wald_test_value(params, "alpha", 1.0),
    )


def _fmt_p(p: float) -> str:
    return "<0.001" if p < 0.001 else f"{p:.3f}"


def _test_lookup(tests: list[WaldTest]) -> dict[str, WaldTest]:
    strip = lambda label: label.replace(" [theta scale]", "")
    return {strip(t.hypothesis): t for t in tests}


def render_estimate_report(result: EstimateResult) -> str:
    fit = result.fit
    params = result.params
    lookup = _test_lookup(result.grid_tests)
    scale = result.config.test_scale

    lines = []
    lines.append("Structural estimates (recovered scale)")
    lines.append(f"  chi2(1) test p-values computed on the {scale} scale")
    lines.append("")
    header = (
        f"{'param':<10} {'estimate':>9} {'std.err':>9}"
        f" {'=1':>8} {'=beta':>8} {'=b_cd':>8} {'=b_cr':>8}"
    )
    lines.append(header)
    grid_rows = [
        ("beta_crcd", ["beta_crcd = 1", "beta = beta_crcd", "beta_cd = beta_crcd", "beta_cr = beta_crcd"]),
        ("beta_cr", ["beta_cr = 1", "beta = beta_cr", "beta_cd = beta_cr", None]),
        ("beta_cd", ["beta_cd = 1", "beta = beta_cd", None, None]),
        ("beta", ["beta = 1", None, None, None]),
    ]
    se_by_name = dict(zip(PARAM_NAMES, params.se))
    for name, hypotheses in grid_rows:
        cells = []
        for hyp in hypotheses:
            cells.append(_fmt_p(lookup[hyp].p_value) if hyp else "")
        lines.append(
            f"{name:<10} {params.value(name):>9.3f} ({se_by_name[name]:>7.3f})"
            f" {cells[0]:>8} {cells[1]:>8} {cells[2]:>8} {cells[3]:>8}"
        )
    lines.append(
        f"{'delta':<10} {params.delta:>9.3f} ({se_by_name['delta']:>7.3f})"
        f" {_fmt_p(result.delta_test.p_value):>8}"
    )
    lines.append(
        f"{'alpha':<10} {params.alpha:>9.3f} ({se_by_name['alpha']:>7.3f})"
        f" {_fmt_p(result.alpha_test.p_value):>8}"
    )
    lines.append("  (delta and alpha tested against 1 on the recovered scale)")
    lines.append("")
    lines.append(
        f"{fit.n_obs} observations ({fit.n_left} left- and {fit.n_right} "
        f"right-censored) from {fit.n_clusters} subjects."
    )
    lines.append("")
    lines.append("Reduced-form coefficients")
    se = fit.standard_errors()
    for i, name in enumerate(THETA_NAMES):
        value = fit.theta_hat.theta_array()[i]
        lines.append(f"{name:<14} {value:>10.4f} ({se[i]:>8.4f})  support={fit.support_counts[i]}")
    lines.append(f"{'sigma':<14} {fit.theta_hat.sigma:>10.4f} ({se[6]:>8.4f})")
    lines.append("")
    lines.append("Fit configuration")
    cfg = result.config
    lines.append(
        f"  omega={cfg.omega:g} budget={cfg.budget:g} delay_days={cfg.delay_days}"
        f" rates={list(cfg.rates)}"
    )
    lines.append(
        f"  cluster_correction={'on' if cfg.cluster_correction else 'off'}"
        f" test_scale={cfg.test_scale} start={fit.settings.get('start')}"
        f" restarts={fit.settings.get('n_restarts')}"
    )
    lines.append(
        f"  converged={'yes' if fit.converged else 'NO (' + fit.message + ')'}"
        f" loglik={fit.loglik:.6f} grad_inf={fit.grad_inf_norm:.2e}"
    )
    lines.append("")
    lines.append(RESULT_JSON_BEGIN)
    lines.append(json.dumps(estimate_result_payload(result), indent=2, sort_keys=True))
    lines.append(RESULT_JSON_END)
    return "\n".join(lines) + "\n"


def estimate_result_payload(result: EstimateResult) -> dict:
    fit = result.fit
    params = result.params
    se = fit.standard_errors()

    def tests_payload(tests, scale):
        return [
            {
                "hypothesis": t.hypothesis.replace(" [theta scale]", ""),
                "scale": scale,
                "statistic": t.statistic,
                "p_value": t.p_value,
                "contrast": t.contrast,
            }
            for t in tests
        ]

    return {
        "observations": {
            "n_obs": fit.n_obs,
            "n_left": fit.n_left,
            "n_right": fit.n_right,
            "n_clusters": fit.n_clusters,
        },
        "theta": dict(zip(THETA_NAMES, map(float, fit.theta_hat.theta_array()))),
        "theta_se": dict(zip(THETA_NAMES, map(float, se[:6]))),
        "sigma": fit.theta_hat.sigma,
        "sigma_se": float(se[6]),
        "recovered": dict(zip(PARAM_NAMES, map(float, params.as_array()))),
        "recovered_se": dict(zip(PARAM_NAMES, map(float, params.se))),
        "tests": (
            tests_payload(result.tests_beta, "beta")
            + tests_payload(result.tests_theta, "theta")
            + tests_payload([result.delta_test, result.alpha_test], "beta")
        ),
        "support_counts": list(fit.support_counts),
        "converged": fit.converged,
        "loglik": fit.loglik,
        "settings": {
            "omega": result.config.omega,
            "budget": result.config.budget,
            "delay_days": result.config.delay_days,
            "rates": list(result.config.rates),
            "cluster_correction": result.config.cluster_correction,
            "test_scale": result.config.test_scale,
            **result.fit.settings,
        },
    }


def parse_report_json(report_text: str) -> dict:
    """Recover the machine-readable block from a rendered report."""
    try:
        _, rest = report_text.split(RESULT_JSON_BEGIN, 1)
        body, _ = rest.split(RESULT_JSON_END, 1)
    except ValueError as exc:
        raise ValueError("report contains no result JSON block") from exc
    return json.loads(body)


# ------------------------------------------------------------------ histogram


@dataclass(frozen=True)
class HistRow:
    cell: str
    day: int
    counts: tuple[int, ...]
    total: int

    def shares(self) -> tuple[float, ...]:
        if self.total == 0:
            return tuple(0.0 for _ in self.counts)
        return tuple(c / self.total for c in self.counts)


def effort_share_histogram(
    records: list[DecisionRecord], config: RunConfig
) -> list[HistRow]:
    """Distribution of the near-day effort share at the 1.25 rate, by
    treatment cell and decision day, over implementable decisions only."""
    certain_idx = config.schedule.certain_rate_index
    certain_rate = config.schedule.rates[certain_idx]
    rows = []
    for cell in ALL_CELLS:
        for day in (0, 2):
            shares = [
                r.e2 / config.budget
                for r in records
                if r.incentivized
                and r.cell == cell
                and r.decision_day == day
                and abs(r.rate - certain_rate) < 1e-9
            ]
            counts = [0] * EFFORT_SHARE_BINS
            for share in shares:
                counts[min(int(share * EFFORT_SHARE_BINS), EFFORT_SHARE_BINS - 1)] += 1
            rows.append(HistRow(cell.label, day, tuple(counts), len(shares)))
    return rows


def render_hist_text(rows: list[HistRow]) -> str:
    bins = [f"[{i/10:.1f},{(i+1)/10:.1f})" for i in range(EFFORT_SHARE_BINS - 1)]
    bins.append("[0.9,1.0]")
    lines = [f"{'cell':<9} {'day':>3} {'n':>5}  " + " ".join(f"{b:>10}" for b in bins)]
    for row in rows:
        shares = " ".join(f"{s:>10.3f}" for s in row.shares())
        lines.append(f"{row.cell:<9} {row.day:>3} {row.total:>5}  {shares}")
    return "\n".join(lines) + "\n"


def hist_csv(rows: list[HistRow]) -> str:
    lines = ["cell,decision_day,bin_low,bin_high,count,share"]
    for row in rows:
        for i, (count, share) in enumerate(zip(row.counts, row.shares())):
            lines.append(
                f"{row.cell},{row.day},{i/10:.1f},{(i+1)/10:.1f},{count},{share:.6f}"
            )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------- sweep


def run_sweep_omega(
    records: list[DecisionRecord], omegas: list[float], config: RunConfig
) -> list[tuple[float, EstimateResult]]:
    """Re-estimate at each background-effort level."""
    for omega in omegas:
        if not omega > 0:
            raise ValueError(f"omega values must be positive, got {omega}")
    results = []
    for omega in omegas:
        cfg = config.with_overrides(omega=float(omega))
        results.append((float(omega), run_estimate(records, cfg)))
    return results


def render_sweep_table(results: list[tuple[float, EstimateResult]]) -> str:
    header = f"{'omega':>10} " + " ".join(f"{n:>10}" for n in PARAM_NAMES) + f" {'converged':>10}"
    lines = [header]
    for omega, res in results:
        values = " ".join(f"{res.params.value(n):>10.4f}" for n in PARAM_NAMES)
        lines.append(f"{omega:>10g} {values} {('yes' if res.fit.converged else 'no'):>10}")
    return "\n".join(lines) + "\n"
