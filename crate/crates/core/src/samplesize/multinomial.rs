use rand::Rng;
use rand_distr::{Binomial, Distribution};

/// One multinomial draw of `n` trials over `probs` by sequential conditional
/// binomials. `probs` is renormalised, so it only needs to be proportional.
pub fn sample_multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut remaining_n = n;
    let mut remaining_p: f64 = probs.iter().sum();
    // trailing empty cells must stay empty, so the last positive cell absorbs the rest
    let sink = probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len().saturating_sub(1));
    for (k, &p) in probs.iter().enumerate() {
        if remaining_n == 0 {
            break;
        }
        if k == sink {
            out[k] = remaining_n;
            break;
        }
        let q = if remaining_p > 0.0 { (p / remaining_p).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(remaining_n, q).map(|b| b.sample(rng)).unwrap_or(0);
        out[k] = draw;
        remaining_n -= draw;
        remaining_p -= p;
    }
    out
}
