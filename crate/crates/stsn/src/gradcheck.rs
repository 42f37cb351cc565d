//! Finite-difference verification of analytic gradients.
//!
//! Training runs entirely on the tape's reverse-mode gradients, so every loss
//! is validated here at `f64` against central differences before it is
//! trusted. The acceptance suite drives this on every objective term.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::graph::{Gradients, Param};

/// Outcome of one finite-difference sweep.
#[derive(Debug, Clone)]
pub struct FdReport {
    /// Number of (parameter, element) pairs probed.
    pub checked: usize,
    /// Largest relative error seen.
    pub max_rel_err: f64,
    /// Parameter name, flat element index, analytic and numeric values at the
    /// worst probe.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl FdReport {
    /// Panics with full context when the worst probe exceeds `tol`.
    pub fn assert_ok(&self, tol: f64) {
        assert!(self.checked > 0, "finite-difference sweep probed nothing");
        if self.max_rel_err > tol {
            let (name, idx, ana, num) = self.worst.clone().expect("worst probe recorded");
            panic!(
                "gradient check failed: rel err {:.3e} > {tol:.1e} at {name}[{idx}] \
                 (analytic {ana:.9e}, numeric {num:.9e})",
                self.max_rel_err
            );
        }
    }
}

/// Relative error with an absolute floor so near-zero pairs compare sanely.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares `analytic` gradients against central differences of `eval`.
///
/// `eval` must rebuild the forward pass from the parameters' *current* values
/// and return the scalar objective; it is called twice per probe with one
/// element perturbed by ±`eps`. Probes `samples_per_param` random elements of
/// each parameter (all elements when the parameter is that small).
pub fn finite_diff_check(
    params: &[&Param<f64>],
    analytic: &Gradients<f64>,
    eps: f64,
    samples_per_param: usize,
    rng: &mut ChaCha12Rng,
    mut eval: impl FnMut() -> f64,
) -> FdReport {
    let mut report = FdReport { checked: 0, max_rel_err: 0.0, worst: None };
    for p in params {
        let base = p.value();
        let n = base.len();
        let zero;
        let ana = match analytic.get(p) {
            Some(g) => g,
            None => {
                // No gradient means the objective must be flat in this
                // parameter; verify that on a few probes too.
                zero = crate::tensor::Tensor::zeros(&base.shape().to_vec());
                &zero
            }
        };
        let idxs: Vec<usize> = if n <= samples_per_param {
            (0..n).collect()
        } else {
            (0..samples_per_param).map(|_| rng.gen_range(0..n)).collect()
        };
        for idx in idxs {
            let orig = base.data()[idx];
            let step = eps * orig.abs().max(1.0);

            let mut up = base.clone();
            up.data_mut()[idx] = orig + step;
            p.set_value(up);
            let f_plus = eval();

            let mut dn = base.clone();
            dn.data_mut()[idx] = orig - step;
            p.set_value(dn);
            let f_minus = eval();

            p.set_value(base.clone());

            let numeric = (f_plus - f_minus) / (2.0 * step);
            let analytic_v = ana.data()[idx];
            let e = rel_err(analytic_v, numeric);
            report.checked += 1;
            if e > report.max_rel_err {
                report.max_rel_err = e;
                report.worst = Some((p.name(), idx, analytic_v, numeric));
            }
        }
    }
    report
}
