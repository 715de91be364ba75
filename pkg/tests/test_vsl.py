import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vslpanel.errors import ConfigurationError, ReportError
from vslpanel.estimators import EstimateResult
from vslpanel.vsl import (
    PANEL_ORDER,
    WageStats,
    annual_earnings,
    compute_vsl,
    format_vsl_table,
    vsl_report,
    write_vsl_csv,
)

Z95 = 1.959963984540054


def test_annual_earnings_conventions():
    assert annual_earnings(WageStats(573.73)) == pytest.approx(6884.76, abs=1e-9)
    assert annual_earnings(WageStats(10, "hourly", hours_per_week=40, weeks_per_year=50)) == 20000
    assert annual_earnings(WageStats(30000, "annual", hours_per_week=1)) == 30000


@pytest.mark.parametrize("kwargs", [{"mean_wage": 0}, {"mean_wage": -1}, {"mean_wage": 1, "wage_period": "daily"},
                                    {"mean_wage": 1, "risk_denominator": 0}, {"mean_wage": float("nan")}])
def test_wage_stats_validation(kwargs):
    with pytest.raises(ConfigurationError):
        WageStats(**kwargs)


def test_zero_coefficient():
    stats = WageStats(1000, "annual")
    v = compute_vsl(0.0, 0.001, stats)
    assert v.point == 0
    assert v.ci_low == pytest.approx(-v.ci_high, abs=1e-12)
    assert v.half_range == pytest.approx(Z95 * 0.001 * 1000 * 10000, rel=1e-12)


def test_point_example():
    v = compute_vsl(0.002, 0.0, WageStats(10000, "annual"))
    assert v.point == pytest.approx(200000, rel=1e-14)
    assert v.ci_low == v.ci_high == v.point
    assert v.half_range == 0


def test_t_interval_wider():
    s = WageStats(500)
    assert compute_vsl(0.01, 0.002, s, df=10).half_range > compute_vsl(0.01, 0.002, s).half_range


def test_negative_se_rejected():
    with pytest.raises(ValueError):
        compute_vsl(0.01, -1.0, WageStats(500))


def test_convention_recorded():
    v = compute_vsl(0.01, 0.002, WageStats(573.73), source="within")
    assert v.convention["annual_earnings"] == pytest.approx(6884.76)
    assert v.convention["wage_period"] == "monthly"
    assert v.source == "within"


coef = st.floats(-1, 1, allow_nan=False)
se = st.floats(0, 1, allow_nan=False)
wage = st.floats(1, 1e5)


def _close(got, want, unit):
    """Absolute agreement at the scale of the estimate; interval bounds near
    zero carry the rounding error of the point estimate."""
    return abs(got - want) <= 1e-10 * max(unit, 1e-300)


FIELDS = ("point", "ci_low", "ci_high", "half_range")


@given(coef, se, wage, st.floats(0.1, 100))
def test_linearity(a, s, w, c):
    stats = WageStats(w)
    base = compute_vsl(a, s, stats)
    scaled = compute_vsl(c * a, c * s, stats)
    unit = c * max(abs(base.point), base.half_range)
    for f in FIELDS:
        assert _close(getattr(scaled, f), c * getattr(base, f), unit), f


@given(coef, se, wage)
def test_units_invariance(a, s, w):
    per10k = compute_vsl(a, s, WageStats(w))
    per1k = compute_vsl(a * 10, s * 10, WageStats(w, risk_denominator=1000))
    unit = max(abs(per10k.point), per10k.half_range)
    for f in FIELDS:
        assert _close(getattr(per1k, f), getattr(per10k, f), unit), f


@given(coef, se, wage, st.floats(0.5, 0.995))
def test_half_range_identity(a, s, w, level):
    from scipy import stats as sps

    v = compute_vsl(a, s, WageStats(w), level=level)
    scale = annual_earnings(WageStats(w)) * 10000
    assert v.half_range == pytest.approx(float(sps.norm.ppf(0.5 + level / 2)) * s * scale, rel=1e-10, abs=0)
    assert _close((v.ci_high - v.ci_low) / 2, v.half_range, max(abs(v.point), v.half_range))
    assert v.ci_low <= v.point <= v.ci_high


def test_printed_half_range_arithmetic():
    # column (1) interval as printed in the source table
    lo, hi = 580_204, 849_869
    assert (hi - lo) / 2 == 134_832.5
    assert round((hi - lo) / 2 + 1e-9) == 134_833


def _result(estimator, coef=0.002, se=0.0005, n=100, risk="risk"):
    return EstimateResult(estimator, ("const", risk), np.array([1.0, coef]),
                          np.diag([0.01, se ** 2]), n, n, n - 2, risk_name=risk)


def test_report_panel_order_against_hand_table():
    shuffled = ["re_mle", "within", "pooled_ols", "first_difference", "between", "re_gls"]
    coefs = {e: 0.001 * (i + 1) for i, e in enumerate(PANEL_ORDER)}
    stats = WageStats(1000, "annual")
    rows = vsl_report([_result(e, coefs[e]) for e in shuffled], stats, order="panel")
    assert [r.estimator for r in rows] == list(PANEL_ORDER)
    expected = [(0.001 * (i + 1) * 1000, 0.5, 0.001 * (i + 1) * 1e7, Z95 * 0.0005 * 1e7)
                for i in range(6)]
    for r, (c, s, v, h) in zip(rows, expected):
        assert (r.coef_display, r.se_display) == pytest.approx((c, s), rel=1e-12)
        assert r.vsl == pytest.approx(v, rel=1e-12)
        assert r.half_range == pytest.approx(h, rel=1e-12)


def test_report_input_order_and_names():
    rows = vsl_report([("b", _result("within")), ("a", _result("pooled_ols"))], WageStats(500))
    assert [r.model for r in rows] == ["b", "a"]


def test_display_scale_is_presentation_only():
    stats = WageStats(573.73)
    r1 = vsl_report([_result("pooled_ols")], stats, display_scale=1000)[0]
    r2 = vsl_report([_result("pooled_ols")], stats, display_scale=10)[0]
    assert r1.coef_display == pytest.approx(100 * r2.coef_display)
    assert (r1.vsl, r1.ci_low, r1.ci_high) == (r2.vsl, r2.ci_low, r2.ci_high)


def test_prescaled_risk_gives_identical_rows():
    stats = WageStats(573.73)
    a = vsl_report([_result("pooled_ols", 0.002, 0.0005)], stats)[0]
    # risk expressed per 10 million: coefficient and SE shrink 1000-fold, denominator grows
    b = vsl_report([_result("pooled_ols", 0.002 / 1000, 0.0005 / 1000)],
                   WageStats(573.73, risk_denominator=1e7))[0]
    assert b.vsl == pytest.approx(a.vsl, rel=1e-12)
    assert b.half_range == pytest.approx(a.half_range, rel=1e-12)


def test_empty_report():
    assert vsl_report([], WageStats(1)) == []
    assert "(no estimates)" in format_vsl_table([])


def test_missing_risk_coefficient_names_estimator():
    bad = _result("between", risk="risk")
    bad = EstimateResult("between", ("const", "x"), bad.params, bad.cov, 10, 10, 8, risk_name="risk")
    with pytest.raises(ReportError, match="between"):
        vsl_report([bad], WageStats(1))


def test_csv_and_table_render():
    stats = WageStats(573.73)
    rows = vsl_report([("pooled", _result("pooled_ols")), ("fe", _result("within"))], stats)
    buf = io.StringIO()
    write_vsl_csv(rows, stats, buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("model,estimator,display_scale")
    assert "6884.76" in lines[1]
    text = format_vsl_table(rows, stats, title="t")
    assert "pooled" in text and "fe" in text and "Variation range" in text
