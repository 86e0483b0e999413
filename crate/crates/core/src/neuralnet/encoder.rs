use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{AttentionCache, MultiHeadAttention};
use super::layers::{FeedForward, FeedForwardCache, LayerNorm, LayerNormCache, Module, Param};
use super::tensor::Tensor;
use super::NnError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub model_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self { model_dim: 96, layers: 2, heads: 4, ffn_dim: 384, seed: 0 }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.model_dim == 0 || self.layers == 0 || self.heads == 0 || self.ffn_dim == 0 {
            return Err(NnError::InvalidConfig(format!("all encoder dims must be positive: {self:?}")));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(NnError::InvalidConfig(format!(
                "model dim {} not divisible by {} heads",
                self.model_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Post-norm block: `LN(x + MHA(x))`, then `LN(h + FFN(h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub attention: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ffn: FeedForward,
    pub norm2: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    attn: AttentionCache,
    norm1: LayerNormCache,
    ffn: FeedForwardCache,
    norm2: LayerNormCache,
}

impl EncoderBlock {
    fn new(name: &str, cfg: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        let d = cfg.model_dim;
        Ok(Self {
            attention: MultiHeadAttention::new(&format!("{name}.attn"), d, cfg.heads, rng)?,
            norm1: LayerNorm::new(&format!("{name}.norm1"), d),
            ffn: FeedForward::new(&format!("{name}.ffn"), d, cfg.ffn_dim, d, rng),
            norm2: LayerNorm::new(&format!("{name}.norm2"), d),
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, BlockCache), NnError> {
        let (mut r1, attn) = self.attention.forward(x)?;
        r1.add_assign(x);
        let (h, norm1) = self.norm1.forward(&r1);
        let (mut r2, ffn) = self.ffn.forward(&h);
        r2.add_assign(&h);
        let (y, norm2) = self.norm2.forward(&r2);
        Ok((y, BlockCache { attn, norm1, ffn, norm2 }))
    }

    pub fn backward(&mut self, cache: &BlockCache, dy: &Tensor, dattn: Option<&Tensor>) -> Tensor {
        let dr2 = self.norm2.backward(&cache.norm2, dy);
        let mut dh = self.ffn.backward(&cache.ffn, &dr2);
        dh.add_assign(&dr2);
        let dr1 = self.norm1.backward(&cache.norm1, &dh);
        let mut dx = self.attention.backward(&cache.attn, &dr1, dattn);
        dx.add_assign(&dr1);
        dx
    }
}

impl Module for EncoderBlock {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.attention.visit(f);
        self.norm1.visit(f);
        self.ffn.visit(f);
        self.norm2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.attention.visit_mut(f);
        self.norm1.visit_mut(f);
        self.ffn.visit_mut(f);
        self.norm2.visit_mut(f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub blocks: Vec<EncoderBlock>,
}

#[derive(Debug, Clone)]
pub struct EncoderCache {
    blocks: Vec<BlockCache>,
}

impl EncoderCache {
    /// Final-layer attention, `[H,n,n]`.
    pub fn final_attention(&self) -> &Tensor {
        self.blocks.last().expect("encoder has at least one block").attn.attention()
    }
}

impl Encoder {
    /// Parameters drawn from a generator seeded with `config.seed`.
    pub fn new(config: EncoderConfig) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::with_rng(config, "encoder", &mut rng)
    }

    pub fn with_rng(config: EncoderConfig, name: &str, rng: &mut ChaCha8Rng) -> Result<Self, NnError> {
        config.validate()?;
        let blocks = (0..config.layers)
            .map(|i| EncoderBlock::new(&format!("{name}.layer{i}"), &config, rng))
            .collect::<Result<_, _>>()?;
        Ok(Self { config, blocks })
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, EncoderCache), NnError> {
        if x.shape().len() != 2 || x.shape()[1] != self.config.model_dim || x.shape()[0] == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "encoder input {:?}, model dim {}",
                x.shape(),
                self.config.model_dim
            )));
        }
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &self.blocks {
            let (next, cache) = block.forward(&h)?;
            caches.push(cache);
            h = next;
        }
        Ok((h, EncoderCache { blocks: caches }))
    }

    /// `dfinal_attn` is an extra gradient on the last block's attention.
    pub fn backward(&mut self, cache: &EncoderCache, dy: &Tensor, dfinal_attn: Option<&Tensor>) -> Tensor {
        let last = self.blocks.len() - 1;
        let mut g = dy.clone();
        for (i, (block, c)) in self.blocks.iter_mut().zip(&cache.blocks).enumerate().rev() {
            g = block.backward(c, &g, if i == last { dfinal_attn } else { None });
        }
        g
    }
}

impl Module for Encoder {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.blocks.iter().for_each(|b| b.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
    }
}

/// Functional entry point: `(features [n,d], final attention [H,n,n])`.
pub fn encoder_forward(x: &Tensor, encoder: &Encoder) -> Result<(Tensor, Tensor), NnError> {
    let (features, cache) = encoder.forward(x)?;
    let attn = cache.final_attention().clone();
    Ok((features, attn))
}
