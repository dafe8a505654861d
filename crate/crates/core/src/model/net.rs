use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, ParamSet, Var};
use crate::chord::{N_CLASSES, NO_ROOT};
use crate::dsp::N_BINS;
use crate::error::{Error, Result};

pub const N_ROOT: usize = NO_ROOT as usize + 1;
pub const N_PITCH: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub model_dim: usize,
    pub n_heads: usize,
    pub conv_kernel: usize,
    pub dropout: f64,
    pub fusion_dim: usize,
    /// Kernel of the front convolution over time.
    pub front_kernel: usize,
    pub n_bins: usize,
}

impl ModelConfig {
    pub fn medium() -> Self {
        ModelConfig {
            n_layers: 16,
            model_dim: 256,
            n_heads: 4,
            conv_kernel: 32,
            dropout: 0.1,
            fusion_dim: 256,
            front_kernel: 3,
            n_bins: N_BINS,
        }
    }

    pub fn toy() -> Self {
        ModelConfig {
            n_layers: 2,
            model_dim: 64,
            n_heads: 2,
            conv_kernel: 15,
            dropout: 0.1,
            fusion_dim: 64,
            front_kernel: 3,
            n_bins: N_BINS,
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "medium" => Ok(Self::medium()),
            "toy" => Ok(Self::toy()),
            other => Err(Error::Config(format!("unknown model preset {other:?}"))),
        }
    }

    /// Depthwise kernel actually used; even sizes grow by one so the
    /// convolution stays centered.
    pub fn kernel(&self) -> usize {
        self.conv_kernel | 1
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_heads", self.n_heads),
            ("model_dim", self.model_dim),
            ("conv_kernel", self.conv_kernel),
            ("fusion_dim", self.fusion_dim),
            ("front_kernel", self.front_kernel),
            ("n_bins", self.n_bins),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.model_dim % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "model_dim {} is not divisible by n_heads {}",
                self.model_dim, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

/// Dropout switch; no rng means evaluation mode.
pub struct Dropout<'r> {
    pub p: f64,
    pub rng: Option<&'r mut ChaCha8Rng>,
}

impl<'r> Dropout<'r> {
    pub fn eval() -> Self {
        Dropout { p: 0.0, rng: None }
    }

    pub fn train(p: f64, rng: &'r mut ChaCha8Rng) -> Self {
        Dropout { p, rng: Some(rng) }
    }

    pub fn apply(&mut self, g: &mut Graph, x: Var) -> Var {
        let Some(rng) = self.rng.as_deref_mut() else {
            return x;
        };
        if self.p <= 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - self.p);
        let p = self.p;
        let mask = Array2::from_shape_simple_fn(g.value(x).raw_dim(), || {
            if rng.gen::<f64>() < p {
                0.0
            } else {
                keep
            }
        });
        g.mul_const(x, mask)
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-bound..=bound))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, name: &str, n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        Linear {
            w: ps.add(format!("{name}.w"), uniform(rng, n_in, n_out, bound)),
            b: ps.add(format!("{name}.b"), Array2::zeros((1, n_out))),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerNorm {
    pub gamma: usize,
    pub beta: usize,
}

impl LayerNorm {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: ps.add(format!("{name}.gamma"), Array2::ones((1, dim))),
            beta: ps.add(format!("{name}.beta"), Array2::zeros((1, dim))),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Conv over time on CQT frames, then a linear layer and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrontModule {
    pub conv: Linear,
    pub linear: Linear,
    pub kernel: usize,
}

impl FrontModule {
    pub fn new(ps: &mut ParamSet, n_bins: usize, dim: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        FrontModule {
            conv: Linear::new(ps, "front.conv", kernel * n_bins, dim, rng),
            linear: Linear::new(ps, "front.linear", dim, dim, rng),
            kernel,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, drop: &mut Dropout) -> Var {
        let u = g.unfold(x, self.kernel);
        let h = self.conv.forward(g, u);
        let h = g.swish(h);
        let h = self.linear.forward(g, h);
        drop.apply(g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeedForward {
    pub norm: LayerNorm,
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        FeedForward {
            norm: LayerNorm::new(ps, &format!("{name}.norm"), dim),
            up: Linear::new(ps, &format!("{name}.up"), dim, 4 * dim, rng),
            down: Linear::new(ps, &format!("{name}.down"), 4 * dim, dim, rng),
        }
    }

    /// Residual branch only.
    pub fn forward(&self, g: &mut Graph, x: Var, drop: &mut Dropout) -> Var {
        let h = self.norm.forward(g, x);
        let h = self.up.forward(g, h);
        let h = g.swish(h);
        let h = drop.apply(g, h);
        let h = self.down.forward(g, h);
        drop.apply(g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelfAttention {
    pub norm: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub n_heads: usize,
}

impl SelfAttention {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize, n_heads: usize, rng: &mut ChaCha8Rng) -> Self {
        SelfAttention {
            norm: LayerNorm::new(ps, &format!("{name}.norm"), dim),
            q: Linear::new(ps, &format!("{name}.q"), dim, dim, rng),
            k: Linear::new(ps, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(ps, &format!("{name}.v"), dim, dim, rng),
            out: Linear::new(ps, &format!("{name}.out"), dim, dim, rng),
            n_heads,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, drop: &mut Dropout) -> Var {
        let h = self.norm.forward(g, x);
        let q = self.q.forward(g, h);
        let k = self.k.forward(g, h);
        let v = self.v.forward(g, h);
        let dim = g.value(q).ncols();
        let dh = dim / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let heads: Vec<Var> = (0..self.n_heads)
            .map(|i| {
                let (lo, hi) = (i * dh, (i + 1) * dh);
                let qh = g.slice_cols(q, lo, hi);
                let kh = g.slice_cols(k, lo, hi);
                let vh = g.slice_cols(v, lo, hi);
                let s = g.matmul_t(qh, kh);
                let s = g.scale(s, scale);
                let a = g.softmax(s);
                g.matmul(a, vh)
            })
            .collect();
        let cat = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        let o = self.out.forward(g, cat);
        drop.apply(g, o)
    }
}

/// Pointwise conv with gating, depthwise conv over time, normalization,
/// swish, pointwise conv.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvModule {
    pub norm: LayerNorm,
    pub pointwise_in: Linear,
    pub depthwise: usize,
    pub depthwise_bias: usize,
    pub mid_norm: LayerNorm,
    pub pointwise_out: Linear,
}

impl ConvModule {
    pub fn new(ps: &mut ParamSet, name: &str, dim: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        let norm = LayerNorm::new(ps, &format!("{name}.norm"), dim);
        let pointwise_in = Linear::new(ps, &format!("{name}.pw_in"), dim, 2 * dim, rng);
        let bound = 1.0 / (kernel as f64).sqrt();
        let depthwise = ps.add(format!("{name}.dw.w"), uniform(rng, kernel, dim, bound));
        let depthwise_bias = ps.add(format!("{name}.dw.b"), Array2::zeros((1, dim)));
        ConvModule {
            norm,
            pointwise_in,
            depthwise,
            depthwise_bias,
            mid_norm: LayerNorm::new(ps, &format!("{name}.mid_norm"), dim),
            pointwise_out: Linear::new(ps, &format!("{name}.pw_out"), dim, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, drop: &mut Dropout) -> Var {
        let dim = g.value(x).ncols();
        let h = self.norm.forward(g, x);
        let h = self.pointwise_in.forward(g, h);
        let a = g.slice_cols(h, 0, dim);
        let b = g.slice_cols(h, dim, 2 * dim);
        let gate = g.sigmoid(b);
        let h = g.mul(a, gate);
        let w = g.param(self.depthwise);
        let h = g.depthwise_conv(h, w);
        let bias = g.param(self.depthwise_bias);
        let h = g.add_row(h, bias);
        let h = self.mid_norm.forward(g, h);
        let h = g.swish(h);
        let h = self.pointwise_out.forward(g, h);
        drop.apply(g, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConformerBlock {
    pub ff1: FeedForward,
    pub attn: SelfAttention,
    pub conv: ConvModule,
    pub ff2: FeedForward,
    pub norm: LayerNorm,
}

impl ConformerBlock {
    pub fn new(ps: &mut ParamSet, name: &str, cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let d = cfg.model_dim;
        ConformerBlock {
            ff1: FeedForward::new(ps, &format!("{name}.ff1"), d, rng),
            attn: SelfAttention::new(ps, &format!("{name}.attn"), d, cfg.n_heads, rng),
            conv: ConvModule::new(ps, &format!("{name}.conv"), d, cfg.kernel(), rng),
            ff2: FeedForward::new(ps, &format!("{name}.ff2"), d, rng),
            norm: LayerNorm::new(ps, &format!("{name}.norm"), d),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, drop: &mut Dropout) -> Var {
        let f = self.ff1.forward(g, x, drop);
        let f = g.scale(f, 0.5);
        let x = g.add(x, f);
        let a = self.attn.forward(g, x, drop);
        let x = g.add(x, a);
        let c = self.conv.forward(g, x, drop);
        let x = g.add(x, c);
        let f = self.ff2.forward(g, x, drop);
        let f = g.scale(f, 0.5);
        let x = g.add(x, f);
        self.norm.forward(g, x)
    }
}

/// Root, bass and pitch heads fused into vocabulary log-probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heads {
    pub root: Linear,
    pub bass: Linear,
    pub pitch: Linear,
    pub fuse_in: Linear,
    pub fuse_out: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub root: Var,
    pub bass: Var,
    pub pitch: Var,
    pub chord_log_probs: Var,
}

impl Heads {
    pub fn new(ps: &mut ParamSet, dim: usize, fusion_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Heads {
            root: Linear::new(ps, "head.root", dim, N_ROOT, rng),
            bass: Linear::new(ps, "head.bass", dim, N_ROOT, rng),
            pitch: Linear::new(ps, "head.pitch", dim, N_PITCH, rng),
            fuse_in: Linear::new(ps, "fusion.in", 2 * N_ROOT + N_PITCH, fusion_dim, rng),
            fuse_out: Linear::new(ps, "fusion.out", fusion_dim, N_CLASSES, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> HeadVars {
        let root = self.root.forward(g, x);
        let bass = self.bass.forward(g, x);
        let pitch = self.pitch.forward(g, x);
        let pr = g.softmax(root);
        let pb = g.softmax(bass);
        let pp = g.sigmoid(pitch);
        let cat = g.concat_cols(&[pr, pb, pp]);
        let h = self.fuse_in.forward(g, cat);
        let h = g.swish(h);
        let logits = self.fuse_out.forward(g, h);
        HeadVars {
            root,
            bass,
            pitch,
            chord_log_probs: g.log_softmax(logits),
        }
    }
}

/// `PE[t, 2i] = sin(t / 10000^(2i/d))`, `PE[t, 2i+1] = cos(...)`.
pub fn positional_encoding(t: usize, dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((t, dim), |(pos, j)| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / dim as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

/// Frame-wise outputs in time-major layout (`T x classes`).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput {
    pub root_logits: Array2<f64>,
    pub bass_logits: Array2<f64>,
    pub pitch_logits: Array2<f64>,
    pub chord_log_probs: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChordModel {
    pub config: ModelConfig,
    pub params: ParamSet,
    pub front: FrontModule,
    pub blocks: Vec<ConformerBlock>,
    pub heads: Heads,
}

impl ChordModel {
    pub fn new(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut ps = ParamSet::default();
        let d = config.model_dim;
        let front = FrontModule::new(&mut ps, config.n_bins, d, config.front_kernel, rng);
        let blocks = (0..config.n_layers)
            .map(|i| ConformerBlock::new(&mut ps, &format!("blocks.{i}"), &config, rng))
            .collect();
        let heads = Heads::new(&mut ps, d, config.fusion_dim, rng);
        Ok(ChordModel {
            config,
            params: ps,
            front,
            blocks,
            heads,
        })
    }

    /// Record a forward pass on `x` (`T x n_bins`).
    pub fn forward_graph(&self, g: &mut Graph, x: Array2<f64>, drop: &mut Dropout) -> HeadVars {
        let t = x.nrows();
        let x = g.constant(x);
        let h = self.front.forward(g, x, drop);
        let pe = g.constant(positional_encoding(t, self.config.model_dim));
        let mut h = g.add(h, pe);
        for block in &self.blocks {
            h = block.forward(g, h, drop);
        }
        self.heads.forward(g, h)
    }

    /// Evaluation-mode forward pass on a `n_bins x T` CQT window.
    pub fn forward(&self, cqt: ArrayView2<f32>) -> Result<ModelOutput> {
        if cqt.nrows() != self.config.n_bins {
            return Err(Error::Shape(format!(
                "model expects {} bins, got {}",
                self.config.n_bins,
                cqt.nrows()
            )));
        }
        if cqt.ncols() == 0 {
            return Err(Error::Empty { what: "input window" });
        }
        let x = cqt.t().mapv(f64::from);
        let mut g = Graph::new(&self.params);
        let out = self.forward_graph(&mut g, x, &mut Dropout::eval());
        Ok(ModelOutput {
            root_logits: g.value(out.root).clone(),
            bass_logits: g.value(out.bass).clone(),
            pitch_logits: g.value(out.pitch).clone(),
            chord_log_probs: g.value(out.chord_log_probs).clone(),
        })
    }

    /// Forward several windows independently.
    pub fn forward_batch(&self, windows: &[ArrayView2<f32>]) -> Result<Vec<ModelOutput>> {
        windows.iter().map(|w| self.forward(*w)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn presets_validate() {
        ModelConfig::medium().validate().unwrap();
        ModelConfig::toy().validate().unwrap();
        assert_eq!(ModelConfig::medium().kernel(), 33);
        assert_eq!(ModelConfig::toy().kernel(), 15);
        let bad = ModelConfig {
            n_heads: 3,
            ..ModelConfig::toy()
        };
        assert!(bad.validate().is_err());
        assert!(ModelConfig::preset("huge").is_err());
    }

    #[test]
    fn positional_encoding_first_rows() {
        let pe = positional_encoding(2, 4);
        assert_eq!(pe[[0, 0]], 0.0);
        assert_eq!(pe[[0, 1]], 1.0);
        assert!((pe[[1, 0]] - 1f64.sin()).abs() < 1e-15);
        assert!((pe[[1, 2]] - 0.01f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn single_frame_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = ChordModel::new(ModelConfig::toy(), &mut rng).unwrap();
        let x = Array2::<f32>::zeros((N_BINS, 1));
        let out = m.forward(x.view()).unwrap();
        assert_eq!(out.chord_log_probs.dim(), (1, N_CLASSES));
        let s: f64 = out.chord_log_probs.iter().map(|v| v.exp()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
}
