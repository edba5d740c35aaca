use crate::tape::{Tape, Var};
use crate::{Result, Scalar};

impl<T: Scalar> Tape<T> {
    /// Batched matrix product `(..., m, k) x (..., k, n) -> (..., m, n)`;
    /// leading dims broadcast, and gradients reduce back over them.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push_op(
            out,
            &[a, b],
            Box::new(move |g, parents, _, needs| {
                let (a, b) = (parents[0], parents[1]);
                let ga = if needs[0] {
                    Some(g.matmul(&b.transpose2()?)?.reduce_to_shape(a.shape())?)
                } else {
                    None
                };
                let gb = if needs[1] {
                    Some(a.transpose2()?.matmul(g)?.reduce_to_shape(b.shape())?)
                } else {
                    None
                };
                Ok(vec![ga, gb])
            }),
        ))
    }
}
