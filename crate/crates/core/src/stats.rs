//! Small paired-comparison statistics used when comparing experiment arms.

/// Outcome of a paired sign test over per-seed scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignTest {
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided `P(X >= wins)` for `X ~ Binomial(wins + losses, 1/2)`.
    pub p_value: f64,
}

/// One-sided sign test that `treatment` tends to exceed `control`.
/// Ties are dropped.
pub fn sign_test(treatment: &[f64], control: &[f64]) -> SignTest {
    assert_eq!(treatment.len(), control.len(), "paired samples differ in length");
    let (mut wins, mut losses, mut ties) = (0, 0, 0);
    for (t, c) in treatment.iter().zip(control) {
        if t > c {
            wins += 1;
        } else if t < c {
            losses += 1;
        } else {
            ties += 1;
        }
    }
    SignTest {
        wins,
        losses,
        ties,
        p_value: binomial_upper_tail(wins + losses, wins),
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, 1/2)`.
pub fn binomial_upper_tail(n: usize, k: usize) -> f64 {
    if k == 0 {
        return 1.0;
    }
    // log C(n, i) accumulated incrementally keeps large n finite
    let ln_half_n = n as f64 * 0.5f64.ln();
    let mut ln_choose = 0.0;
    let mut total = 0.0;
    for i in 0..=n {
        if i > 0 {
            ln_choose += ((n - i + 1) as f64).ln() - (i as f64).ln();
        }
        if i >= k {
            total += (ln_choose + ln_half_n).exp();
        }
    }
    total.min(1.0)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
