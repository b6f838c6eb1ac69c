//! Special functions not covered by `statrs`.

pub use statrs::consts::EULER_MASCHERONI;
pub use statrs::function::gamma::{digamma, gamma};

/// Golden ratio (1 + √5)/2.
pub const GOLDEN: f64 = 1.618_033_988_749_895;

/// ψ'(x) for x > 0, via upward recurrence and the asymptotic series.
pub fn trigamma(x: f64) -> f64 {
    assert!(x > 0.0, "trigamma needs x > 0");
    let mut x = x;
    let mut acc = 0.0;
    while x < 8.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let r = 1.0 / x;
    let r2 = r * r;
    acc + r
        + 0.5 * r2
        + r * r2
            * (1.0 / 6.0
                + r2 * (-1.0 / 30.0
                    + r2 * (1.0 / 42.0
                        + r2 * (-1.0 / 30.0 + r2 * (5.0 / 66.0 + r2 * (-691.0 / 2730.0 + r2 * (7.0 / 6.0)))))))
}

/// ln I₀(x), modified Bessel function of the first kind, order zero.
pub fn ln_bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < 40.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        while term > 1e-17 * sum {
            term *= q / (k * k);
            sum += term;
            k += 1.0;
        }
        sum.ln()
    } else {
        let r = 1.0 / (8.0 * x);
        let series = 1.0 + r * (1.0 + r * (4.5 + r * (37.5 + r * (459.375 + r * 7441.875))));
        x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + series.ln()
    }
}

/// ln sinh(x) for x > 0 without overflow.
pub fn ln_sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp_m1()).ln() - std::f64::consts::LN_2
}

/// Mean resultant length coth κ − 1/κ of a 3-d von Mises–Fisher law.
pub fn vmf_mean_length(kappa: f64) -> f64 {
    if kappa < 1e-4 {
        kappa / 3.0
    } else {
        1.0 / kappa.tanh() - 1.0 / kappa
    }
}

/// Log-normaliser ln(4π sinh κ / κ) of the 3-d von Mises–Fisher law.
pub fn vmf_log_normaliser(kappa: f64) -> f64 {
    (4.0 * std::f64::consts::PI).ln() + ln_sinh(kappa) - kappa.ln()
}
