//! Dense matrix product.

use crate::graph::{Graph, Var};
use crate::tensor::{Element, Tensor};

impl<T: Element> Graph<T> {
    /// (m,k) × (k,n) → (m,n).
    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let av = self.value(a).clone();
        let bv = self.value(b).clone();
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let (kb, n) = (bv.shape()[0], bv.shape()[1]);
        assert_eq!(k, kb, "matmul inner dimensions {k} vs {kb}");
        let mut out = vec![T::ZERO; m * n];
        T::gemm(false, false, m, k, n, T::ONE, av.data(), bv.data(), T::ZERO, &mut out);
        let y = Tensor::from_vec(&[m, n], out);
        let (ai, bi) = (a.0, b.0);
        self.push_op(&[a, b], y, move |dy| {
            // dA = dY·Bᵀ ; dB = Aᵀ·dY
            let mut da = vec![T::ZERO; m * k];
            T::gemm(false, true, m, n, k, T::ONE, dy.data(), bv.data(), T::ZERO, &mut da);
            let mut db = vec![T::ZERO; k * n];
            T::gemm(true, false, k, m, n, T::ONE, av.data(), dy.data(), T::ZERO, &mut db);
            vec![
                (ai, Tensor::from_vec(&[m, k], da)),
                (bi, Tensor::from_vec(&[k, n], db)),
            ]
        })
    }
}
