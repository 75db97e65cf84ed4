/// Modified Bessel function of the first kind, order zero.
///
/// Power series below `x = 15`, large-argument asymptotic expansion above.
/// Negative arguments use the evenness of `I₀`.
pub fn bessel_i0(x: f64) -> f64 {
    let x = x.abs();
    if x < 15.0 {
        series(x)
    } else {
        asymptotic(x)
    }
}

fn series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn asymptotic(x: f64) -> f64 {
    // e^x/√(2πx) · Σ ((2k−1)!!)² / (k! (8x)^k), truncated at the smallest term
    let mut term = 1.0f64;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = term * odd * odd / (8.0 * k as f64 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    x.exp() / (2.0 * std::f64::consts::PI * x).sqrt() * sum
}
