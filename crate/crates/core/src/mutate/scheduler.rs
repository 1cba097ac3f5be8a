use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::MutationOperator;

const M: usize = MutationOperator::ALL.len();
pub const P_MIN: f64 = 0.05;
pub const P_MAX: f64 = 0.95;

/// Adaptive operator selection. Operators earn credit for the coverage their
/// children find; probabilities follow the credit shares plus Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorScheduler {
    pub fit: [f64; M],
    pub p: [f64; M],
    pub sigma: f64,
    pub decay: f64,
    /// Clamped, not yet normalized values from the last update.
    pub clamped: [f64; M],
}

impl Default for OperatorScheduler {
    fn default() -> Self {
        Self::new(0.05, 0.9)
    }
}

impl OperatorScheduler {
    pub fn new(sigma: f64, decay: f64) -> Self {
        Self {
            fit: [0.0; M],
            p: [1.0 / M as f64; M],
            sigma,
            decay,
            clamped: [1.0 / M as f64; M],
        }
    }

    pub fn probability(&self, op: MutationOperator) -> f64 {
        self.p[op.index()]
    }

    /// Draw |J| uniformly from {1, 2, 3}, then that many distinct operators
    /// proportionally to `p`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<MutationOperator> {
        let size = rng.random_range(1..=3);
        self.sample_n(size, rng)
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> Vec<MutationOperator> {
        let mut weights = self.p;
        let mut out = Vec::with_capacity(size);
        for _ in 0..size.min(M) {
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                break;
            }
            let mut x = rng.random::<f64>() * total;
            let mut pick = weights.iter().rposition(|&w| w > 0.0).expect("positive weight left");
            for (i, &w) in weights.iter().enumerate() {
                if w > 0.0 && x < w {
                    pick = i;
                    break;
                }
                x -= w;
            }
            weights[pick] = 0.0;
            out.push(MutationOperator::ALL[pick]);
        }
        out
    }

    /// Split the child's branch and instruction gain evenly over `ops`.
    pub fn credit(&mut self, ops: &[MutationOperator], delta_branch: u64, delta_inst: u64) {
        if ops.is_empty() {
            return;
        }
        let share = (delta_branch + delta_inst) as f64 / ops.len() as f64;
        for op in ops {
            self.fit[op.index()] += share;
        }
    }

    /// Recompute `p` from the credit shares, then decay the credit.
    pub fn update<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let total: f64 = self.fit.iter().sum();
        let noise = (self.sigma > 0.0).then(|| Normal::new(0.0, self.sigma).expect("finite sigma"));
        for j in 0..M {
            let raw = if total > 0.0 {
                self.fit[j] / total + noise.as_ref().map_or(0.0, |n| n.sample(rng))
            } else {
                1.0 / M as f64
            };
            self.clamped[j] = raw.clamp(P_MIN, P_MAX);
        }
        let sum: f64 = self.clamped.iter().sum();
        for j in 0..M {
            self.p[j] = self.clamped[j] / sum;
            self.fit[j] *= self.decay;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn credit_examples() {
        let mut s = OperatorScheduler::default();
        let j = [MutationOperator::Arguments, MutationOperator::Timestamp];
        s.credit(&j, 3, 5);
        assert_eq!(s.fit[0], 4.0);
        assert_eq!(s.fit[MutationOperator::Timestamp.index()], 4.0);
        s.credit(&j[..1], 0, 0);
        assert_eq!(s.fit[0], 4.0);
        s.credit(&j[..1], 1, 1);
        assert_eq!(s.fit[0], 6.0);
    }

    #[test]
    fn cold_start_and_equal_fits_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = OperatorScheduler::new(0.05, 0.9);
        s.update(&mut rng);
        assert!(s.p.iter().all(|&p| (p - 0.1).abs() < 1e-12));
        let mut s = OperatorScheduler::new(0.0, 0.9);
        s.fit = [7.0; M];
        s.update(&mut rng);
        assert!(s.p.iter().all(|&p| (p - 0.1).abs() < 1e-12));
    }

    #[test]
    fn leader_clamped_before_normalization() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut s = OperatorScheduler::new(0.0, 0.9);
        s.fit = [0.001; M];
        s.fit[0] = 99.0;
        s.update(&mut rng);
        assert_eq!(s.clamped[0], P_MAX);
        assert!(s.clamped[1..].iter().all(|&c| c == P_MIN));
        let sum: f64 = s.p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!((s.p[0] - 0.95 / (0.95 + 9.0 * 0.05)).abs() < 1e-12);
        assert!((s.fit[0] - 99.0 * 0.9).abs() < 1e-9);
    }

    #[test]
    fn sample_is_distinct_and_deterministic() {
        let s = OperatorScheduler::default();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| s.sample(&mut rng)).collect::<Vec<_>>()
        };
        let a = draw(5);
        assert_eq!(a, draw(5));
        for j in &a {
            assert!((1..=3).contains(&j.len()));
            let mut d = j.clone();
            d.sort();
            d.dedup();
            assert_eq!(d.len(), j.len());
        }
    }
}
