//! Distribution of the total ceiled power drawn by a Poisson set of users.

/// Probability that the ceiled powers of a Poisson process sum to `m`, for
/// `m = 0..=m_max`.
///
/// `cumulative[q]` is the mean number of points with power at most `q`
/// units (`cumulative[0]` must be 0); the last index is the power ceiling
/// `P`. With `C_q = Λ(q) - Λ(q-1)`:
///
/// ```text
/// P(0) = exp(-Λ(P)),   P(m) = Σ_{q=1}^{min(m,P)} (q/m) C_q P(m-q)
/// ```
///
/// The recursion runs from an unnormalized base of 1 and rescales whenever
/// values grow large, so `Λ(P)` well beyond the `exp` underflow limit still
/// produces correct (if tiny) probabilities.
pub fn compound_sum_pmf(m_max: usize, cumulative: &[f64]) -> Vec<f64> {
    assert!(!cumulative.is_empty(), "need at least Λ(0)");
    let ceiling = cumulative.len() - 1;
    let total = cumulative[ceiling];
    let weights: Vec<f64> = (1..=ceiling).map(|q| q as f64 * (cumulative[q] - cumulative[q - 1]).max(0.0)).collect();

    let mut r = Vec::with_capacity(m_max + 1);
    r.push(1.0f64);
    let mut log_scale = 0.0f64;
    for m in 1..=m_max {
        let top = m.min(ceiling);
        let mut s = 0.0;
        for q in 1..=top {
            s += weights[q - 1] * r[m - q];
        }
        let value = s / m as f64;
        r.push(value);
        if value > 1e200 {
            for x in r.iter_mut() {
                *x *= 1e-200;
            }
            log_scale += 200.0 * std::f64::consts::LN_10;
        }
    }
    let factor = log_scale - total;
    r.into_iter().map(|x| if x > 0.0 { (x.ln() + factor).exp() } else { 0.0 }).collect()
}

/// [`compound_sum_pmf`] with the intensity given as a function evaluated at
/// `q = 0..=p_ceiling`.
pub fn compound_sum_pmf_with(m_max: usize, p_ceiling: usize, intensity: impl Fn(usize) -> f64) -> Vec<f64> {
    let cumulative: Vec<f64> = (0..=p_ceiling).map(intensity).collect();
    compound_sum_pmf(m_max, &cumulative)
}
