use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::LmConfig;

/// One named tensor inside the flat parameter vector (row-major).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockOffsets {
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub w_qkv: usize,
    pub b_qkv: usize,
    pub w_o: usize,
    pub b_o: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
    pub w_fc: usize,
    pub b_fc: usize,
    pub w_proj: usize,
    pub b_proj: usize,
}

/// Offsets of every tensor, in checkpoint order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamLayout {
    pub(crate) wte: usize,
    pub(crate) wpe: usize,
    pub(crate) blocks: Vec<BlockOffsets>,
    pub(crate) lnf_g: usize,
    pub(crate) lnf_b: usize,
    pub(crate) w_y: usize,
    specs: Vec<TensorSpec>,
    total: usize,
}

impl ParamLayout {
    pub fn new(c: &LmConfig) -> Self {
        let (v, k, d, f) = (c.vocab_size, c.context, c.d_model, c.d_ff);
        let mut specs = Vec::new();
        let mut total = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            specs.push(TensorSpec { name, rows, cols, offset: total });
            total += rows * cols;
            total - rows * cols
        };
        let wte = push("wte".into(), v, d);
        let wpe = push("wpe".into(), k, d);
        let mut blocks = Vec::with_capacity(c.layers);
        for l in 0..c.layers {
            let mut p = |n: &str, r: usize, cc: usize| push(format!("h{l}.{n}"), r, cc);
            blocks.push(BlockOffsets {
                ln1_g: p("ln1.g", 1, d),
                ln1_b: p("ln1.b", 1, d),
                w_qkv: p("attn.w_qkv", d, 3 * d),
                b_qkv: p("attn.b_qkv", 1, 3 * d),
                w_o: p("attn.w_o", d, d),
                b_o: p("attn.b_o", 1, d),
                ln2_g: p("ln2.g", 1, d),
                ln2_b: p("ln2.b", 1, d),
                w_fc: p("mlp.w_fc", d, f),
                b_fc: p("mlp.b_fc", 1, f),
                w_proj: p("mlp.w_proj", f, d),
                b_proj: p("mlp.b_proj", 1, d),
            });
        }
        let lnf_g = push("ln_f.g".into(), 1, d);
        let lnf_b = push("ln_f.b".into(), 1, d);
        let w_y = push("w_y".into(), d, 2);
        Self { wte, wpe, blocks, lnf_g, lnf_b, w_y, specs, total }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn specs(&self) -> &[TensorSpec] {
        &self.specs
    }

    pub fn spec(&self, name: &str) -> Option<&TensorSpec> {
        self.specs.iter().find(|s| s.name == name)
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct LmParams {
    pub layout: ParamLayout,
    pub data: Vec<f64>,
}

impl LmParams {
    pub fn zeros(config: &LmConfig) -> Self {
        let layout = ParamLayout::new(config);
        let data = vec![0.0; layout.total()];
        Self { layout, data }
    }

    /// Weights ~ N(0, init_std²), biases and layer-norm shifts 0,
    /// layer-norm gains 1. Deterministic under `seed`.
    pub fn init(config: &LmConfig, seed: u64) -> Self {
        let mut p = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, config.init_std).expect("finite std");
        for spec in p.layout.specs.clone() {
            let leaf = spec.name.rsplit('.').next().unwrap_or(&spec.name);
            let slice = &mut p.data[spec.range()];
            match leaf {
                "g" => slice.fill(1.0),
                "b" | "b_qkv" | "b_o" | "b_fc" | "b_proj" => slice.fill(0.0),
                _ => slice.iter_mut().for_each(|w| *w = normal.sample(&mut rng)),
            }
        }
        p
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.layout.spec(name).map(|s| &self.data[s.range()])
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
