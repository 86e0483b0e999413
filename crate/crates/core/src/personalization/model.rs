use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tokens::{EmbeddingBank, TokenContent, TokenPlan, TokenRef, TokenizedInput};
use super::ModelError;
use crate::domain::{AdaptationLabel, ComponentType};
use crate::neuralnet::{
    binary_cross_entropy, softmax, softmax_cross_entropy, Encoder, EncoderCache, EncoderConfig, Linear,
    Module, Param, Tensor,
};

const LABELS: usize = 4;

/// Architecture hyperparameters. The encoder width is `3 · embed_dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { embed_dim: 32, layers: 2, heads: 4, ffn_dim: 384, seed: 0 }
    }
}

impl ModelConfig {
    pub fn model_dim(&self) -> usize {
        3 * self.embed_dim
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            model_dim: self.model_dim(),
            layers: self.layers,
            heads: self.heads,
            ffn_dim: self.ffn_dim,
            seed: self.seed,
        }
    }
}

/// Concept-token transformer classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct TaacoModel {
    config: ModelConfig,
    language_dim: usize,
    pub type_embed: Param,
    pub state_embed: Param,
    pub concept_proj: Linear,
    pub magnitude_in: Linear,
    pub magnitude_out: Linear,
    pub out_token: Param,
    pub encoder: Encoder,
    pub head: Linear,
}

/// One labelled, tokenized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPoint {
    pub plan: TokenPlan,
    pub label: AdaptationLabel,
    pub targets: Option<Vec<f64>>,
}

/// Loss components of one evaluation, averaged over points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub cross_entropy: f64,
    pub explanation: f64,
}

struct Pass {
    magnitude: Tensor,
    magnitude_pre: Tensor,
    magnitude_hidden: Tensor,
    encoder: EncoderCache,
    out_feature: Tensor,
    logits: Vec<f64>,
    attention: Vec<f64>,
}

// pass, cross-entropy, explanation loss, dlogits, d(attention) when explained
type PointForward = (Pass, f64, f64, Vec<f64>, Option<Vec<f64>>);

/// `p_i = 1 − exp(−w_i)`.
pub fn explanation_probabilities(attention: &[f64]) -> Vec<f64> {
    attention.iter().map(|w| 1.0 - (-w).exp()).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

/// The row with the highest explanation probability.
pub fn extract_explanation(index_map: &[TokenRef], attention: &[f64]) -> Option<TokenRef> {
    argmax(&explanation_probabilities(attention)).and_then(|i| index_map.get(i).cloned())
}

impl TaacoModel {
    pub fn new(config: ModelConfig, state_variables: usize, language_dim: usize) -> Result<Self, ModelError> {
        let e = config.embed_dim;
        if e == 0 || language_dim == 0 {
            return Err(ModelError::Shape("embedding dimensions must be positive".into()));
        }
        let encoder_config = config.encoder_config();
        encoder_config.validate().map_err(|err| ModelError::Shape(err.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let type_embed = Param::xavier("type_embed", &[ComponentType::ALL.len(), e], 1, e, &mut rng);
        let state_embed = Param::xavier("state_embed", &[state_variables, e], 1, e, &mut rng);
        let concept_proj = Linear::new("concept_proj", language_dim, e, &mut rng);
        let magnitude_in = Linear::new("magnitude.in", 1, e, &mut rng);
        let magnitude_out = Linear::new("magnitude.out", e, e, &mut rng);
        let out_token = Param::xavier("out_token", &[3 * e], 1, 3 * e, &mut rng);
        let encoder = Encoder::with_rng(encoder_config, "encoder", &mut rng).map_err(|err| ModelError::Shape(err.to_string()))?;
        let head = Linear::new("head", 3 * e, LABELS, &mut rng);
        Ok(Self {
            config,
            language_dim,
            type_embed,
            state_embed,
            concept_proj,
            magnitude_in,
            magnitude_out,
            out_token,
            encoder,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn language_dim(&self) -> usize {
        self.language_dim
    }

    pub fn state_variables(&self) -> usize {
        self.state_embed.value.shape()[0]
    }

    /// Concept projection of every bank row, `[B, e]`.
    pub fn project_bank(&self, bank: &EmbeddingBank) -> Result<Tensor, ModelError> {
        if bank.dim() != self.language_dim {
            return Err(ModelError::Shape(format!(
                "embedding dim {} but model expects {}",
                bank.dim(),
                self.language_dim
            )));
        }
        Ok(self.concept_proj.forward(bank.matrix()))
    }

    fn magnitude_forward(&self, plan: &TokenPlan) -> (Tensor, Tensor, Tensor, Tensor) {
        let n = plan.len();
        let m = Tensor::from_vec(&[n, 1], plan.rows.iter().map(|r| r.magnitude).collect()).expect("n rows");
        let pre = self.magnitude_in.forward(&m);
        let mut hidden = pre.clone();
        hidden.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let out = self.magnitude_out.forward(&hidden);
        (m, pre, hidden, out)
    }

    fn assemble(&self, plan: &TokenPlan, projected: &Tensor, magnitude: &Tensor) -> Result<Tensor, ModelError> {
        let e = self.config.embed_dim;
        let n = plan.len();
        let mut x = Tensor::zeros(&[n + 1, 3 * e]);
        for (i, row) in plan.rows.iter().enumerate() {
            let content = match row.content {
                TokenContent::Text(j) if j < projected.shape()[0] => projected.row(j),
                TokenContent::StateVariable(j) if j < self.state_variables() => self.state_embed.value.row(j),
                _ => return Err(ModelError::Shape(format!("token row {i} refers outside the model"))),
            };
            let out = x.row_mut(i);
            out[..e].copy_from_slice(self.type_embed.value.row(row.kind.index()));
            out[e..2 * e].copy_from_slice(content);
            out[2 * e..].copy_from_slice(magnitude.row(i));
        }
        x.row_mut(n).copy_from_slice(self.out_token.value.data());
        Ok(x)
    }

    /// Token matrix for a plan.
    pub fn tokenize(&self, plan: &TokenPlan, bank: &EmbeddingBank) -> Result<TokenizedInput, ModelError> {
        let projected = self.project_bank(bank)?;
        let (_, _, _, magnitude) = self.magnitude_forward(plan);
        Ok(TokenizedInput { matrix: self.assemble(plan, &projected, &magnitude)?, index_map: plan.index_map.clone() })
    }

    fn read_out(&self, features: &Tensor, cache: &EncoderCache, n: usize) -> (Tensor, Vec<f64>, Vec<f64>) {
        let d = self.config.model_dim();
        let out_feature = Tensor::from_vec(&[1, d], features.row(n).to_vec()).expect("one row");
        let logits = self.head.forward(&out_feature).into_data();
        let attn = cache.final_attention();
        let heads = self.config.heads;
        let rows = n + 1;
        let mut w = vec![0.0; n];
        for h in 0..heads {
            let row = &attn.data()[h * rows * rows + n * rows..h * rows * rows + (n + 1) * rows];
            w.iter_mut().zip(row).for_each(|(a, b)| *a += b / heads as f64);
        }
        (out_feature, logits, w)
    }

    /// Logits and the `<OUT>` row's head-averaged final-layer attention over
    /// the `n` input rows.
    pub fn forward(&self, tokens: &TokenizedInput) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let (rows, d) = (tokens.matrix.shape().first().copied(), tokens.matrix.shape().get(1).copied());
        if tokens.matrix.shape().len() != 2
            || d != Some(self.config.model_dim())
            || rows != Some(tokens.index_map.len() + 1)
        {
            return Err(ModelError::Shape(format!(
                "token matrix {:?} for {} rows of width {}",
                tokens.matrix.shape(),
                tokens.index_map.len() + 1,
                self.config.model_dim()
            )));
        }
        let (features, cache) = self.encoder.forward(&tokens.matrix).map_err(|e| ModelError::Shape(e.to_string()))?;
        let (_, logits, w) = self.read_out(&features, &cache, tokens.len());
        Ok((logits, w))
    }

    fn pass(&self, plan: &TokenPlan, projected: &Tensor) -> Result<Pass, ModelError> {
        let (magnitude, magnitude_pre, magnitude_hidden, mag_out) = self.magnitude_forward(plan);
        let x = self.assemble(plan, projected, &mag_out)?;
        let (features, encoder) = self.encoder.forward(&x).map_err(|e| ModelError::Shape(e.to_string()))?;
        let (out_feature, logits, attention) = self.read_out(&features, &encoder, plan.len());
        Ok(Pass { magnitude, magnitude_pre, magnitude_hidden, encoder, out_feature, logits, attention })
    }

    /// Logits and attention for a plan against pre-projected bank rows.
    pub fn infer(&self, plan: &TokenPlan, projected: &Tensor) -> Result<(Vec<f64>, Vec<f64>), ModelError> {
        let p = self.pass(plan, projected)?;
        Ok((p.logits, p.attention))
    }

    fn backward(
        &mut self,
        plan: &TokenPlan,
        pass: &Pass,
        dlogits: &[f64],
        dattention: Option<&[f64]>,
        dprojected: &mut Tensor,
    ) {
        let e = self.config.embed_dim;
        let d = 3 * e;
        let n = plan.len();
        let rows = n + 1;
        let dl = Tensor::from_vec(&[1, LABELS], dlogits.to_vec()).expect("four logits");
        let dout = self.head.backward(&pass.out_feature, &dl);
        let mut dfeatures = Tensor::zeros(&[rows, d]);
        dfeatures.row_mut(n).copy_from_slice(dout.data());
        let dattn = dattention.map(|dw| {
            let heads = self.config.heads;
            let mut t = Tensor::zeros(&[heads, rows, rows]);
            for h in 0..heads {
                let base = h * rows * rows + n * rows;
                for (i, g) in dw.iter().enumerate() {
                    t.data_mut()[base + i] = g / heads as f64;
                }
            }
            t
        });
        let dx = self.encoder.backward(&pass.encoder, &dfeatures, dattn.as_ref());

        let mut dmag = Tensor::zeros(&[n, e]);
        for (i, row) in plan.rows.iter().enumerate() {
            let g = dx.row(i);
            self.type_embed.grad.row_mut(row.kind.index()).iter_mut().zip(&g[..e]).for_each(|(a, b)| *a += b);
            let target = match row.content {
                TokenContent::Text(j) => dprojected.row_mut(j),
                TokenContent::StateVariable(j) => self.state_embed.grad.row_mut(j),
            };
            target.iter_mut().zip(&g[e..2 * e]).for_each(|(a, b)| *a += b);
            dmag.row_mut(i).copy_from_slice(&g[2 * e..]);
        }
        self.out_token.grad.data_mut().iter_mut().zip(dx.row(n)).for_each(|(a, b)| *a += b);

        let mut dhidden = self.magnitude_out.backward(&pass.magnitude_hidden, &dmag);
        dhidden.data_mut().iter_mut().zip(pass.magnitude_pre.data()).for_each(|(g, p)| {
            if *p <= 0.0 {
                *g = 0.0;
            }
        });
        self.magnitude_in.backward_params(&pass.magnitude, &dhidden);
    }

    /// Loss terms of one point, `(ce, mean BCE)`, with the gradients of
    /// `CE + λ · BCE` w.r.t. the logits and the attention.
    fn point(
        &self,
        point: &PreparedPoint,
        projected: &Tensor,
        lambda: f64,
    ) -> Result<PointForward, ModelError> {
        let pass = self.pass(&point.plan, projected)?;
        let (ce, dlogits) = softmax_cross_entropy(&pass.logits, point.label.index())
            .map_err(|e| ModelError::Shape(e.to_string()))?;
        let mut bce = 0.0;
        let mut dw = None;
        if let Some(targets) = &point.targets {
            let n = point.plan.len();
            if targets.len() != n {
                return Err(ModelError::Shape(format!("{} targets for {n} tokens", targets.len())));
            }
            let mut grads = vec![0.0; n];
            for (g, (&w, &y)) in grads.iter_mut().zip(pass.attention.iter().zip(targets)) {
                let keep = (-w).exp();
                let (l, dp) = binary_cross_entropy(1.0 - keep, y);
                bce += l / n as f64;
                *g = lambda / n as f64 * dp * keep;
            }
            if lambda != 0.0 {
                dw = Some(grads);
            }
        }
        Ok((pass, ce, bce, dlogits, dw))
    }

    /// Mean over points of `CE + λ · BCE` (BCE only where targets exist).
    pub fn compute_loss(&self, points: &[PreparedPoint], bank: &EmbeddingBank, lambda: f64) -> Result<LossBreakdown, ModelError> {
        if points.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let projected = self.project_bank(bank)?;
        let scale = 1.0 / points.len() as f64;
        let mut out = LossBreakdown::default();
        for p in points {
            let (_, ce, bce, _, _) = self.point(p, &projected, lambda)?;
            out.cross_entropy += ce * scale;
            out.explanation += bce * scale;
        }
        out.total = out.cross_entropy + lambda * out.explanation;
        Ok(out)
    }

    /// As [`compute_loss`](Self::compute_loss), also accumulating gradients
    /// into every parameter.
    pub fn loss_and_gradients(
        &mut self,
        points: &[PreparedPoint],
        bank: &EmbeddingBank,
        lambda: f64,
    ) -> Result<LossBreakdown, ModelError> {
        if points.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let projected = self.project_bank(bank)?;
        let mut dprojected = Tensor::zeros(projected.shape());
        let scale = 1.0 / points.len() as f64;
        let mut out = LossBreakdown::default();
        for p in points {
            let (pass, ce, bce, mut dlogits, mut dw) = self.point(p, &projected, lambda)?;
            out.cross_entropy += ce * scale;
            out.explanation += bce * scale;
            dlogits.iter_mut().for_each(|g| *g *= scale);
            if let Some(g) = dw.as_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            self.backward(&p.plan, &pass, &dlogits, dw.as_deref(), &mut dprojected);
        }
        out.total = out.cross_entropy + lambda * out.explanation;
        self.concept_proj.backward_params(bank.matrix(), &dprojected);
        Ok(out)
    }

    /// Softmax probabilities, attention, and the chosen label.
    pub fn classify(&self, plan: &TokenPlan, projected: &Tensor) -> Result<(AdaptationLabel, Vec<f64>, Vec<f64>), ModelError> {
        let (logits, attention) = self.infer(plan, projected)?;
        let probs = softmax(&logits);
        let label = argmax(&probs).and_then(AdaptationLabel::from_index).expect("four labels");
        Ok((label, probs, attention))
    }
}

impl Module for TaacoModel {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.type_embed);
        f(&self.state_embed);
        self.concept_proj.visit(f);
        self.magnitude_in.visit(f);
        self.magnitude_out.visit(f);
        f(&self.out_token);
        self.encoder.visit(f);
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.type_embed);
        f(&mut self.state_embed);
        self.concept_proj.visit_mut(f);
        self.magnitude_in.visit_mut(f);
        self.magnitude_out.visit_mut(f);
        f(&mut self.out_token);
        self.encoder.visit_mut(f);
        self.head.visit_mut(f);
    }
}
