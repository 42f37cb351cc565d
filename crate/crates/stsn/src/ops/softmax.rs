//! Softmax cross-entropy over integer class labels.

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

impl<T: Element> Graph<T> {
    /// Mean cross-entropy of logits (B,K) against integer labels, computed
    /// with the usual max-shifted log-sum-exp for stability.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Var {
        let lv = self.value(logits).clone();
        let s = lv.shape();
        assert_eq!(s.len(), 2, "logits must be (batch, classes)");
        let (b, k) = (s[0], s[1]);
        assert_eq!(labels.len(), b, "label count {} vs batch {b}", labels.len());
        assert!(labels.iter().all(|&l| l < k), "label out of range for {k} classes");

        let ld = lv.data();
        let mut probs = vec![T::ZERO; b * k];
        let mut loss = T::ZERO;
        for i in 0..b {
            let row = &ld[i * k..(i + 1) * k];
            let mut mx = row[0];
            for &v in row {
                if v > mx {
                    mx = v;
                }
            }
            let mut denom = T::ZERO;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                probs[i * k + j] = e;
                denom += e;
            }
            for j in 0..k {
                probs[i * k + j] = probs[i * k + j] / denom;
            }
            let lse = denom.ln() + mx;
            loss += lse - row[labels[i]];
        }
        let inv_b = T::from_f64(1.0 / b as f64);
        let y = Tensor::scalar_tensor(loss * inv_b);

        let probs = Tensor::from_vec(&[b, k], probs);
        let labels = labels.to_vec();
        let li = logits.0;
        self.push_op(&[logits], y, move |dy| {
            let scale = dy.scalar() * inv_b;
            let pd = probs.data();
            let mut dl = vec![T::ZERO; b * k];
            for i in 0..b {
                for j in 0..k {
                    let ind = if labels[i] == j { T::ONE } else { T::ZERO };
                    dl[i * k + j] = (pd[i * k + j] - ind) * scale;
                }
            }
            vec![(li, Tensor::from_vec(&[b, k], dl))]
        })
    }
}

#[cfg(test)]
mod tests {
    use crate::graph::{Graph, Param};
    use crate::tensor::Tensor;

    #[test]
    fn uniform_logits_over_k_classes_cost_ln_k() {
        let mut g: Graph<f64> = Graph::new(true);
        let logits = g.constant(Tensor::zeros(&[3, 10]));
        let ce = g.softmax_cross_entropy(logits, &[0, 5, 9]);
        assert!((g.value(ce).scalar() - 10.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn gradient_is_softmax_minus_onehot_over_batch() {
        let mut g: Graph<f64> = Graph::new(true);
        let p = Param::new("logits", Tensor::zeros(&[1, 2]));
        let logits = g.param(&p);
        let ce = g.softmax_cross_entropy(logits, &[1]);
        let grads = g.backward(ce);
        let d = grads.get(&p).unwrap();
        assert!((d.data()[0] - 0.5).abs() < 1e-12);
        assert!((d.data()[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn large_logits_stay_finite() {
        let mut g: Graph<f64> = Graph::new(true);
        let logits = g.constant(Tensor::from_vec(&[1, 3], vec![1000.0, 999.0, -1000.0]));
        let ce = g.softmax_cross_entropy(logits, &[0]);
        assert!(g.value(ce).scalar().is_finite());
    }
}
