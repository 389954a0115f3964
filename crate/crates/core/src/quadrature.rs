//! Normal CDF helpers and bivariate-normal rectangle probabilities by
//! adaptive Gauss–Kronrod quadrature.

use libm::erfc;

/// Standard normal CDF.
pub fn phi_cdf(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

fn phi_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// `P(lo < Z <= hi)` for a standard normal `Z`.
pub fn normal_interval(lo: f64, hi: f64) -> f64 {
    // Use the upper tail on the right to avoid cancellation.
    if lo >= 0.0 {
        phi_cdf(-lo) - phi_cdf(-hi)
    } else {
        phi_cdf(hi) - phi_cdf(lo)
    }
}

/// Integration window for unbounded limits, in standard deviations.
pub const TAIL_CLIP: f64 = 10.0;

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = K15_WEIGHTS[7] * fc;
    let mut gauss = G7_WEIGHTS[3] * fc;
    for (j, &x) in GK_NODES[..7].iter().enumerate() {
        let s = f(c - h * x) + f(c + h * x);
        kronrod += K15_WEIGHTS[j] * s;
        if j % 2 == 1 {
            gauss += G7_WEIGHTS[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive G7–K15 on `[a, b]`; `None` if the tolerance is not met within
/// the subdivision budget.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64) -> Option<f64> {
    if a >= b {
        return Some(0.0);
    }
    let mut stack = vec![(a, b, abs_tol)];
    let mut total = 0.0;
    let mut evaluations = 0usize;
    while let Some((lo, hi, tol)) = stack.pop() {
        let (value, err) = gauss_kronrod(&f, lo, hi);
        evaluations += 1;
        if err <= tol || hi - lo < 1e-12 {
            total += value;
        } else if evaluations > 20_000 {
            return None;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, 0.5 * tol));
            stack.push((mid, hi, 0.5 * tol));
        }
    }
    Some(total)
}

/// `P(x_lo < X <= x_hi, y_lo < Y <= y_hi)` for standard bivariate normal
/// `(X, Y)` with correlation `rho`, integrating the conditional law of `Y`
/// over `x` on the window clipped to ±[`TAIL_CLIP`].
pub fn bivariate_normal_rect(
    (x_lo, x_hi): (f64, f64),
    (y_lo, y_hi): (f64, f64),
    rho: f64,
    abs_tol: f64,
) -> Option<f64> {
    if rho == 0.0 {
        return Some(normal_interval(x_lo, x_hi) * normal_interval(y_lo, y_hi));
    }
    let s = (1.0 - rho * rho).sqrt();
    let a = x_lo.max(-TAIL_CLIP);
    let b = x_hi.min(TAIL_CLIP);
    let integrand = |x: f64| phi_pdf(x) * normal_interval((y_lo - rho * x) / s, (y_hi - rho * x) / s);
    // Splitting at 0 keeps the peak of the integrand off a panel interior.
    if a < 0.0 && b > 0.0 {
        Some(integrate(integrand, a, 0.0, 0.5 * abs_tol)? + integrate(integrand, 0.0, b, 0.5 * abs_tol)?)
    } else {
        integrate(integrand, a, b, abs_tol)
    }
}
