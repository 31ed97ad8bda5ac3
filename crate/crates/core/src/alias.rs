//! Walker alias tables for O(1) sampling from a fixed discrete law.

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AliasTable {
    probability: Vec<f64>,
    alias: Vec<usize>,
    total: f64,
}

impl AliasTable {
    /// Builds the table from non-negative weights (Vose's variant of
    /// Walker's construction, linear time).
    pub fn new(weights: &[f64]) -> Result<Self> {
        let n = weights.len();
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("alias weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if n == 0 || !(total > 0.0) {
            return Err(Error::EmptyDistribution);
        }
        let mut scaled: Vec<f64> = weights.iter().map(|w| w * n as f64 / total).collect();
        let mut probability = vec![1.0; n];
        let mut alias: Vec<usize> = (0..n).collect();
        let (mut small, mut large): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            probability[s] = scaled[s];
            alias[s] = l;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        // leftovers are 1 up to rounding
        for i in small.into_iter().chain(large) {
            probability[i] = 1.0;
            alias[i] = i;
        }
        // a zero-weight column must never be returned through its own slot
        for i in 0..n {
            if weights[i] == 0.0 && alias[i] == i {
                probability[i] = 0.0;
                alias[i] = weights.iter().position(|w| *w > 0.0).unwrap_or(i);
            }
        }
        Ok(Self {
            probability,
            alias,
            total,
        })
    }

    pub fn len(&self) -> usize {
        self.probability.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probability.is_empty()
    }

    /// Sum of the weights the table was built from.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let i = rng.random_range(0..self.len());
        if rng.random::<f64>() < self.probability[i] {
            i
        } else {
            self.alias[i]
        }
    }

    /// Probability of drawing `i`, recomputed from the table.
    pub fn probability_of(&self, i: usize) -> f64 {
        let n = self.len() as f64;
        let own = self.probability[i];
        let aliased: f64 = (0..self.len())
            .filter(|&j| self.alias[j] == i && j != i)
            .map(|j| 1.0 - self.probability[j])
            .sum();
        (own + aliased) / n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::chi_square_gof;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn table_reproduces_weights() {
        let w = [1.0, 0.0, 3.0, 0.5, 2.5, 0.0, 1.0];
        let t = AliasTable::new(&w).unwrap();
        let total: f64 = w.iter().sum();
        for (i, wi) in w.iter().enumerate() {
            assert!((t.probability_of(i) - wi / total).abs() < 1e-12, "{i}");
        }
    }

    #[test]
    fn draws_match_weights() {
        let w = [5.0, 1.0, 0.0, 2.0, 2.0];
        let t = AliasTable::new(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u64; 5];
        for _ in 0..100_000 {
            counts[t.sample(&mut rng)] += 1;
        }
        assert_eq!(counts[2], 0);
        let p: Vec<f64> = w.iter().map(|x| x / 10.0).collect();
        assert!(chi_square_gof(&counts, &p, 0.01).passes());
    }

    #[test]
    fn zero_mass_is_rejected() {
        assert_eq!(AliasTable::new(&[0.0, 0.0]), Err(Error::EmptyDistribution));
        assert_eq!(AliasTable::new(&[]), Err(Error::EmptyDistribution));
    }
}
