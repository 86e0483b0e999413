use rand::Rng;

use super::layers::{Linear, Module, Param};
use super::tensor::{dot, Tensor};
use super::NnError;

/// Multi-head scaled dot-product self-attention without positional
/// information.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    x: Tensor,
    q: Tensor,
    k: Tensor,
    v: Tensor,
    attn: Tensor,
    mixed: Tensor,
}

impl AttentionCache {
    pub fn attention(&self) -> &Tensor {
        &self.attn
    }
}

impl MultiHeadAttention {
    pub fn new<R: Rng>(name: &str, dim: usize, heads: usize, rng: &mut R) -> Result<Self, NnError> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(NnError::InvalidConfig(format!("model dim {dim} not divisible by {heads} heads")));
        }
        Ok(Self {
            query: Linear::new(&format!("{name}.wq"), dim, dim, rng),
            key: Linear::new(&format!("{name}.wk"), dim, dim, rng),
            value: Linear::new(&format!("{name}.wv"), dim, dim, rng),
            output: Linear::new(&format!("{name}.wo"), dim, dim, rng),
            heads,
        })
    }

    pub fn dim(&self) -> usize {
        self.query.input_dim()
    }

    /// Returns the mixed output `[n,d]`, and a cache holding the
    /// post-softmax attention `[H,n,n]`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, AttentionCache), NnError> {
        if x.shape().len() != 2 || x.shape()[1] != self.dim() || x.shape()[0] == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "attention input {:?}, model dim {}",
                x.shape(),
                self.dim()
            )));
        }
        let (n, d) = x.dims2();
        let h = self.heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = self.query.forward(x);
        let k = self.key.forward(x);
        let v = self.value.forward(x);
        let (qd, kd, vd) = (q.data(), k.data(), v.data());
        let mut attn = Tensor::zeros(&[h, n, n]);
        let mut mixed = Tensor::zeros(&[n, d]);
        for head in 0..h {
            let off = head * dh;
            let a = &mut attn.data_mut()[head * n * n..(head + 1) * n * n];
            for i in 0..n {
                let qi = &qd[i * d + off..i * d + off + dh];
                let row = &mut a[i * n..(i + 1) * n];
                let mut max = f64::NEG_INFINITY;
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &kd[j * d + off..j * d + off + dh];
                    *s = dot(qi, kj) * scale;
                    max = max.max(*s);
                }
                let mut total = 0.0;
                for s in row.iter_mut() {
                    *s = (*s - max).exp();
                    total += *s;
                }
                row.iter_mut().for_each(|s| *s /= total);
            }
            let md = mixed.data_mut();
            for i in 0..n {
                let out = &mut md[i * d + off..i * d + off + dh];
                for j in 0..n {
                    let w = a[i * n + j];
                    let vj = &vd[j * d + off..j * d + off + dh];
                    out.iter_mut().zip(vj).for_each(|(o, vv)| *o += w * vv);
                }
            }
        }
        let y = self.output.forward(&mixed);
        Ok((y, AttentionCache { x: x.clone(), q, k, v, attn, mixed }))
    }

    /// Backpropagates `dy` (and an optional gradient on the attention
    /// weights themselves, `[H,n,n]`) and returns `dL/dx`.
    pub fn backward(&mut self, cache: &AttentionCache, dy: &Tensor, dattn: Option<&Tensor>) -> Tensor {
        let (n, d) = cache.x.dims2();
        let h = self.heads;
        let dh = d / h;
        let scale = 1.0 / (dh as f64).sqrt();
        let dmixed = self.output.backward(&cache.mixed, dy);
        let (qd, kd, vd) = (cache.q.data(), cache.k.data(), cache.v.data());
        let dm = dmixed.data();
        let mut dq = Tensor::zeros(&[n, d]);
        let mut dk = Tensor::zeros(&[n, d]);
        let mut dv = Tensor::zeros(&[n, d]);
        let mut da = vec![0.0; n];
        for head in 0..h {
            let off = head * dh;
            let a = &cache.attn.data()[head * n * n..(head + 1) * n * n];
            let ext = dattn.map(|t| &t.data()[head * n * n..(head + 1) * n * n]);
            for i in 0..n {
                let dmi = &dm[i * d + off..i * d + off + dh];
                let arow = &a[i * n..(i + 1) * n];
                for j in 0..n {
                    let vj = &vd[j * d + off..j * d + off + dh];
                    da[j] = dot(dmi, vj);
                    if let Some(e) = ext {
                        da[j] += e[i * n + j];
                    }
                    let dvj = &mut dv.data_mut()[j * d + off..j * d + off + dh];
                    dvj.iter_mut().zip(dmi).for_each(|(g, x)| *g += arow[j] * x);
                }
                let inner = dot(arow, &da);
                let qi = &qd[i * d + off..i * d + off + dh];
                for j in 0..n {
                    let ds = arow[j] * (da[j] - inner) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = &kd[j * d + off..j * d + off + dh];
                    let dqi = &mut dq.data_mut()[i * d + off..i * d + off + dh];
                    dqi.iter_mut().zip(kj).for_each(|(g, x)| *g += ds * x);
                    let dkj = &mut dk.data_mut()[j * d + off..j * d + off + dh];
                    dkj.iter_mut().zip(qi).for_each(|(g, x)| *g += ds * x);
                }
            }
        }
        let mut dx = self.query.backward(&cache.x, &dq);
        dx.add_assign(&self.key.backward(&cache.x, &dk));
        dx.add_assign(&self.value.backward(&cache.x, &dv));
        dx
    }
}

impl Module for MultiHeadAttention {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.query.visit(f);
        self.key.visit(f);
        self.value.visit(f);
        self.output.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.query.visit_mut(f);
        self.key.visit_mut(f);
        self.value.visit_mut(f);
        self.output.visit_mut(f);
    }
}

/// Functional entry point: `(Y [n,d], A [H,n,n])`.
pub fn multi_head_self_attention(x: &Tensor, params: &MultiHeadAttention) -> Result<(Tensor, Tensor), NnError> {
    let (y, cache) = params.forward(x)?;
    Ok((y, cache.attn))
}
