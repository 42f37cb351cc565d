//! Inverted dropout driven by an explicit RNG stream.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

impl<T: Element> Graph<T> {
    /// Zeroes each element with probability `p` and rescales survivors by
    /// 1/(1−p). In evaluation graphs this is the identity and consumes no
    /// randomness.
    pub fn dropout(&mut self, x: Var, p: f64, rng: &mut ChaCha12Rng) -> Var {
        assert!((0.0..1.0).contains(&p), "dropout probability {p} outside [0,1)");
        if !self.is_train() || p == 0.0 {
            return x;
        }
        let keep = 1.0 - p;
        let scale = T::from_f64(1.0 / keep);
        let xv = self.value(x).clone();
        let mask: Vec<T> = (0..xv.len())
            .map(|_| if rng.gen::<f64>() < keep { scale } else { T::ZERO })
            .collect();
        let mask = Tensor::from_vec(xv.shape(), mask);
        let y = xv.zip(&mask, |v, m| v * m);
        let xi = x.0;
        self.push_op(&[x], y, move |dy| vec![(xi, dy.zip(&mask, |d, m| d * m))])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn eval_mode_is_identity_and_draws_nothing() {
        let mut g: Graph<f64> = Graph::new(false);
        let x = g.constant(Tensor::full(&[8], 3.0));
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let before = rng.clone();
        let y = g.dropout(x, 0.5, &mut rng);
        assert_eq!(y, x);
        assert_eq!(rng.get_word_pos(), before.get_word_pos());
    }

    #[test]
    fn train_mode_scales_survivors_to_preserve_expectation() {
        let mut g: Graph<f64> = Graph::new(true);
        let x = g.constant(Tensor::full(&[10_000], 1.0));
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let y = g.dropout(x, 0.5, &mut rng);
        let d = g.value(y).data();
        assert!(d.iter().all(|&v| v == 0.0 || v == 2.0));
        let mean: f64 = d.iter().sum::<f64>() / d.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "survivor scaling keeps the mean near 1, got {mean}");
    }
}
