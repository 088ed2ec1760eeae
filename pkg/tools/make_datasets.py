"""Generate the two shipped datasets.

Both CSVs are statistical reconstructions of well-known public credit
datasets (a 400-account credit-card balance table and a 614-row loan
application table) built to match their published group counts, group
income means and per-group income quartiles exactly.  The raw sources are
not redistributable here, so this script rebuilds equivalent tables from
those published statistics:

* income order statistics are pinned by placing each quartile's defining
  order-statistic values directly (pairs of equal neighbors where the
  quantile position falls between ranks);
* the remaining values are drawn inside the open quartile segments and then
  blended toward a segment endpoint so every group's income sum, and hence
  its mean, is exact; one row per group keeps sub-unit decimals to absorb
  the fractional part;
* all other columns are synthesized around the incomes with documented
  group effects (the leakage signal under audit) plus noise.

Rerunning the script reproduces the shipped files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import math
from pathlib import Path

import numpy as np

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

# ---------------------------------------------------------------- incomes


def _anchor_plan(n: int, q: tuple[float, float, float, float, float]):
    """Return (anchors, segments) pinning min/Q1/median/Q3/max exactly for
    linear-interpolation quantiles on n sorted values.

    anchors: list of (index, value).  segments: list of (lo_idx, hi_idx,
    a, b) half-open interior index ranges whose values must stay strictly
    inside (a, b).
    """
    vmin, q1, med, q3, vmax = q
    anchors = [(0, vmin), (n - 1, vmax)]
    for p, value in ((0.25, q1), (0.5, med), (0.75, q3)):
        h = (n - 1) * p
        lo = math.floor(h)
        anchors.append((lo, value))
        if h != lo:
            anchors.append((lo + 1, value))
    # interior runs between consecutive anchor indices
    anchor_idx = sorted(i for i, _ in anchors)
    anchor_val = dict(anchors)
    segments = []
    for k in range(len(anchor_idx) - 1):
        i0, i1 = anchor_idx[k], anchor_idx[k + 1]
        if i1 - i0 > 1:
            segments.append((i0 + 1, i1, anchor_val[i0], anchor_val[i1]))
    return anchors, segments


def incomes_with_exact_stats(
    rng: np.random.Generator,
    n: int,
    quartiles: tuple[float, float, float, float, float],
    mean: float,
    decimals: int,
    skew: float,
) -> np.ndarray:
    """Sorted incomes whose min/Q1/median/Q3/max and mean are exact.

    ``decimals`` is the precision of ordinary rows; one interior row keeps
    full precision to make the sum exact.  ``skew`` > 1 biases draws toward
    each segment's low end (income-like right skew within segments).
    """
    anchors, segments = _anchor_plan(n, quartiles)
    x = np.zeros(n, dtype=np.float64)
    for i, v in anchors:
        x[i] = v
    unit = 10.0 ** (-decimals)
    for lo, hi, a, b in segments:
        k = hi - lo
        # keep a rounding-safe margin to the open interval's ends
        lo_v, hi_v = a + unit, b - unit
        u = np.sort(rng.random(k)) ** skew
        x[lo:hi] = lo_v + (hi_v - lo_v) * u

    target = mean * n
    for _ in range(64):
        delta = target - x.sum()
        if abs(delta) < 1e-9:
            break
        # blend each segment's interiors toward an endpoint, share of the
        # correction proportional to available slack
        if delta > 0:
            slacks = [(x[lo:hi].size * (b - unit) - x[lo:hi].sum())
                      for lo, hi, a, b in segments]
        else:
            slacks = [(x[lo:hi].sum() - x[lo:hi].size * (a + unit))
                      for lo, hi, a, b in segments]
        total_slack = sum(slacks)
        if total_slack <= abs(delta):
            raise RuntimeError("income targets infeasible for these draws")
        for (lo, hi, a, b), slack in zip(segments, slacks):
            if slack <= 0:
                continue
            d = delta * (slack / total_slack)
            seg = x[lo:hi]
            if delta > 0:
                hi_v = b - unit
                mu = 1.0 - d / (seg.size * hi_v - seg.sum())
                x[lo:hi] = hi_v - (hi_v - seg) * mu
            else:
                lo_v = a + unit
                lam = 1.0 + d / (seg.sum() - seg.size * lo_v)
                x[lo:hi] = lo_v + (seg - lo_v) * lam

    x = np.round(x, decimals)
    # one row absorbs the rounding residue and the fractional remainder
    residue = target - x.sum()
    lo, hi, a, b = max(segments, key=lambda s: s[3] - s[2])
    j = lo + (hi - lo) // 2
    adjusted = x[j] + residue
    if not (a + 0.5 * unit < adjusted < b - 0.5 * unit):
        raise RuntimeError("adjustment row left its segment")
    x[j] = adjusted
    assert abs(x.sum() - target) < 1e-7
    return np.sort(x)


def _check_quartiles(x: np.ndarray, q: tuple[float, ...]):
    xs = np.sort(x)
    n = len(xs)
    for p, want in zip((0.0, 0.25, 0.5, 0.75, 1.0), q):
        h = (n - 1) * p
        lo = math.floor(h)
        got = xs[lo] if lo >= n - 1 else xs[lo] + (h - lo) * (xs[lo + 1] - xs[lo])
        assert abs(got - want) < 5e-7, (p, got, want)


# ------------------------------------------------------------- credit set

CREDIT_GROUPS = ("African American", "Asian", "Caucasian")
CREDIT_N = {"African American": 99, "Asian": 102, "Caucasian": 199}
# income quartiles in dollars; the CSV stores thousands
CREDIT_Q = {
    "African American": (1409.0, 19445.0, 33017.0, 54860.0, 186634.0),
    "Asian": (177.0, 15514.0, 27732.0, 52958.0, 180379.0),
    "Caucasian": (12.0, 16293.0, 30002.0, 53943.0, 182728.0),
}
CREDIT_MEAN = {
    "African American": 44698.37,
    "Asian": 40144.45,
    "Caucasian": 38939.95,
}

# leakage signal: group structure in the credit-book columns.  Balances
# track limits along a steep shared slope; each group rides its own ridge
# (intercept offsets), Caucasian limits cluster tightly while the minority
# groups spread across wide clipped ranges.  Axis-aligned cuts read the
# ridges poorly at low per-group density, which is the property the
# resampling experiments probe.
LIMIT_OFFSET = {"African American": 0.0, "Asian": 100.0, "Caucasian": 0.0}
BALANCE_OFFSET = {"African American": -200.0, "Asian": 200.0, "Caucasian": 0.0}
RATING_BUMP = {"African American": 0.0, "Asian": 0.0, "Caucasian": 0.0}
LIMIT_INCOME_COEF = 8.0
LIMIT_SPREAD = {"African American": 450.0, "Asian": 900.0, "Caucasian": 260.0}
ARM_CLIP = 1.8  # truncate limit deviations at this many spreads
LIMIT_NOISE = 430.0  # fallback spread when LIMIT_SPREAD is None
BALANCE_BASE = 120.0
BALANCE_SLOPE = 1.3  # balance per dollar of limit along the shared ridge
RATING_NOISE = 3.0
BALANCE_NOISE = 18.0


def build_credit(seed: int) -> tuple[list[str], list[list[str]]]:
    rng = np.random.default_rng(seed)
    header = [
        "Income", "Limit", "Rating", "Cards", "Age", "Education",
        "Gender", "Student", "Married", "Ethnicity", "Balance",
    ]
    rows = []
    for group in CREDIT_GROUPS:
        n = CREDIT_N[group]
        q_k = tuple(v / 1000.0 for v in CREDIT_Q[group])
        inc = incomes_with_exact_stats(
            rng, n, q_k, CREDIT_MEAN[group] / 1000.0, decimals=3, skew=1.7
        )
        _check_quartiles(inc, q_k)
        rng.shuffle(inc)
        for income_k in inc:
            spread = LIMIT_NOISE if LIMIT_SPREAD is None else LIMIT_SPREAD[group]
            ldev = rng.normal(0.0, spread)
            if ARM_CLIP is not None:
                bound = ARM_CLIP * spread
                ldev = max(-bound, min(bound, ldev))
            limit = 2050.0 + LIMIT_INCOME_COEF * income_k \
                + LIMIT_OFFSET[group] + ldev
            limit = max(limit, 450.0)
            rating = 0.068 * limit + 40.0 + RATING_BUMP[group] + rng.normal(0.0, RATING_NOISE)
            balance = BALANCE_BASE + BALANCE_SLOPE * limit \
                + BALANCE_OFFSET[group] + rng.normal(0.0, BALANCE_NOISE)
            balance = max(balance, 0.0)
            rows.append([
                repr(float(income_k)),
                str(int(round(limit))),
                str(int(round(rating))),
                str(1 + rng.binomial(8, 0.25)),
                str(23 + int(rng.integers(0, 68))),
                str(int(rng.integers(5, 21))),
                "Female" if rng.random() < 0.48 else "Male",
                "Yes" if rng.random() < 0.10 else "No",
                "Yes" if rng.random() < 0.61 else "No",
                group,
                str(int(round(balance))),
            ])
    order = rng.permutation(len(rows))
    return header, [rows[i] for i in order]


# --------------------------------------------------------------- loan set

LOAN_Q = {
    "Female": (210.0, 2870.0, 3655.0, 4727.0, 19484.0),
    "Male": (150.0, 2980.0, 3859.0, 5827.0, 81000.0),
}
LOAN_MEAN = {"Female": 4530.468, "Male": 5769.968}
LOAN_N = {"Female": 113, "Male": 484}

# gender signal: household structure and coapplicant-income channels
MARRIED_RATE = {"Female": 0.36, "Male": 0.63}
COAPP_RATE_MARRIED = {"Female": 0.70, "Male": 0.50}
COAPP_RATE_SINGLE = {"Female": 0.36, "Male": 0.20}
COAPP_MEAN = {"Female": 2350.0, "Male": 1800.0}
COAPP_SD = {"Female": 850.0, "Male": 700.0}
DEP_PROBS = {
    "Female": (0.62, 0.17, 0.13, 0.08),
    "Male": (0.52, 0.17, 0.17, 0.14),
}
# loan size relative to income differs by gender: a ratio signal that the
# engineered income-ratio features expose much more sharply than any raw
# column does
LA_GENDER_FACTOR = {"Female": 0.72, "Male": 1.10}
DEP_LEVELS = ("0", "1", "2", "3+")

TERMS = (360, 180, 480, 300, 120, 84)
TERM_PROBS = (0.83, 0.08, 0.03, 0.03, 0.015, 0.015)

CH_GOOD_RATE = 0.84
REFUSE_CH0 = 0.86  # refusal probability with bad credit history
REFUSE_BASE = 0.045  # floor for good history, easy affordability
REFUSE_AFFORD_SLOPE = 3.6
REFUSE_AFFORD_MID = 30.0  # 1000*LoanAmount/ApplicantIncome at p=half-range
REFUSE_AFFORD_GAIN = 0.44


def _loan_row(rng, gender, income) -> dict:
    married = rng.random() < MARRIED_RATE[gender]
    coapp_rate = COAPP_RATE_MARRIED[gender] if married else COAPP_RATE_SINGLE[gender]
    if rng.random() < coapp_rate:
        co = max(300.0, rng.normal(COAPP_MEAN[gender], COAPP_SD[gender]))
        co = float(int(round(co)))
    else:
        co = 0.0
    dep = DEP_LEVELS[int(rng.choice(4, p=DEP_PROBS[gender]))]
    household = income + 0.6 * co
    la = 0.0235 * household * LA_GENDER_FACTOR[gender] \
        * math.exp(rng.normal(0.0, 0.27))
    la = float(min(max(round(la), 9), 700))
    term = int(rng.choice(TERMS, p=TERM_PROBS))
    ch = "1" if rng.random() < CH_GOOD_RATE else "0"
    ratio = 1000.0 * la / income
    p_refuse = REFUSE_BASE + REFUSE_AFFORD_GAIN / (
        1.0 + math.exp(-(ratio - REFUSE_AFFORD_MID) / REFUSE_AFFORD_SLOPE)
    )
    if ch == "0":
        p_refuse = REFUSE_CH0
    status = "N" if rng.random() < p_refuse else "Y"
    return {
        "Gender": gender,
        "Married": "Yes" if married else "No",
        "Dependents": dep,
        "Education": "Graduate" if rng.random() < 0.78 else "Not Graduate",
        "Self_Employed": "Yes" if rng.random() < 0.13 else "No",
        "ApplicantIncome": income,
        "CoapplicantIncome": co,
        "LoanAmount": la,
        "Loan_Amount_Term": term,
        "Credit_History": ch,
        "Property_Area": ["Urban", "Semiurban", "Rural"][
            int(rng.choice(3, p=(0.33, 0.38, 0.29)))
        ],
        "Loan_Status": status,
    }


def _format_income(v: float) -> str:
    return str(int(v)) if v == int(v) else repr(float(v))


def build_loan(seed: int) -> tuple[list[str], list[list[str]]]:
    rng = np.random.default_rng(seed)
    header = [
        "Loan_ID", "Gender", "Married", "Dependents", "Education",
        "Self_Employed", "ApplicantIncome", "CoapplicantIncome",
        "LoanAmount", "Loan_Amount_Term", "Credit_History",
        "Property_Area", "Loan_Status",
    ]
    complete = []
    for gender in ("Female", "Male"):
        inc = incomes_with_exact_stats(
            rng, LOAN_N[gender], LOAN_Q[gender], LOAN_MEAN[gender],
            decimals=0, skew=2.1,
        )
        _check_quartiles(inc, LOAN_Q[gender])
        rng.shuffle(inc)
        for income in inc:
            complete.append(_loan_row(rng, gender, float(income)))

    # rows that ingestion must drop: one schema cell each is blank
    blank_plan = (
        ["Gender"] * 5 + ["LoanAmount"] * 4 + ["Credit_History"] * 3
        + ["Self_Employed"] * 2 + ["Dependents"] * 2 + ["Loan_Amount_Term"]
    )
    incomplete = []
    for field in blank_plan:
        gender = "Female" if rng.random() < 0.2 else "Male"
        income = float(int(rng.normal(5200, 1800)))
        row = _loan_row(rng, gender, max(income, 400.0))
        row[field] = ""
        incomplete.append(row)

    rows = complete + incomplete
    order = rng.permutation(len(rows))
    out = []
    for serial, i in enumerate(order):
        r = rows[i]
        out.append([
            f"LP{serial + 1001:06d}",
            r["Gender"],
            r["Married"],
            r["Dependents"],
            r["Education"],
            r["Self_Employed"],
            "" if r["ApplicantIncome"] == "" else _format_income(r["ApplicantIncome"]),
            _format_income(r["CoapplicantIncome"]),
            "" if r["LoanAmount"] == "" else str(int(r["LoanAmount"])),
            "" if r["Loan_Amount_Term"] == "" else str(r["Loan_Amount_Term"]),
            r["Credit_History"],
            r["Property_Area"],
            r["Loan_Status"],
        ])
    return header, out


def write_csv(path: Path, header: list[str], rows: list[list[str]]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    print(f"wrote {path} ({len(rows)} rows)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=DATA_DIR)
    ap.add_argument("--credit-seed", type=int, default=91041)
    ap.add_argument("--loan-seed", type=int, default=52736)
    args = ap.parse_args()
    header, rows = build_credit(args.credit_seed)
    write_csv(args.out_dir / "credit.csv", header, rows)
    header, rows = build_loan(args.loan_seed)
    write_csv(args.out_dir / "loan.csv", header, rows)


if __name__ == "__main__":
    main()
