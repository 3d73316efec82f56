//! Multi-channel overlapped speech detector.
//!
//! Raw multi-channel chunks go through a learnable band-pass sinc front end
//! per channel, a squeeze-and-excitation channel attention with a 1×1
//! channel-combining convolution (ASDB), a Conformer or Bi-LSTM encoder and
//! a two-class frame classifier. The alternative extraction path feeds a
//! superdirective beamformer output (look direction 0) to a single-channel
//! front end instead.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::array::{ArrayGeometry, DEFAULT_RADIUS_M, DEFAULT_SOUND_SPEED};
use crate::audio::MultichannelAudio;
use crate::autodiff::{bce_value, Graph, SincSpec, Tensor, Var};
use crate::error::{Error, Result};
use crate::io::ConfigFile;
use crate::sdb::{realize_fir, DEFAULT_LOADING};
use crate::timeline::{frame_count, Timeline, FRAME_SECONDS};

pub const SINC_MIN_LOW_HZ: f64 = 50.0;
pub const SINC_MIN_BAND_HZ: f64 = 50.0;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Gaps and regions shorter than this are closed and removed.
pub const MIN_REGION_S: f64 = 0.1;
const NORM_EPS: f64 = 1e-5;
const LOOK_TAPS: usize = 128;
const CHECKPOINT_MAGIC: &[u8; 4] = b"DMSN";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extraction {
    Asdb,
    SdbSincnet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Encoder {
    Conformer {
        layers: usize,
        d_model: usize,
        heads: usize,
        ff_dim: usize,
        conv_kernel: usize,
    },
    BiLstm {
        layers: usize,
        hidden: usize,
    },
}

impl Encoder {
    pub fn default_conformer() -> Self {
        Encoder::Conformer {
            layers: 2,
            d_model: 64,
            heads: 4,
            ff_dim: 128,
            conv_kernel: 15,
        }
    }

    pub fn default_bilstm() -> Self {
        Encoder::BiLstm { layers: 2, hidden: 128 }
    }

    fn output_dim(&self) -> usize {
        match *self {
            Encoder::Conformer { d_model, .. } => d_model,
            Encoder::BiLstm { hidden, .. } => 2 * hidden,
        }
    }
}

/// The four ablation topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Bi-LSTM on beamformed input.
    M1,
    /// Conformer on beamformed input.
    M2,
    /// ASDB with Bi-LSTM.
    M3,
    /// ASDB with Conformer.
    M4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::M1, Variant::M2, Variant::M3, Variant::M4];

    pub fn extraction(self) -> Extraction {
        match self {
            Variant::M1 | Variant::M2 => Extraction::SdbSincnet,
            Variant::M3 | Variant::M4 => Extraction::Asdb,
        }
    }

    pub fn uses_conformer(self) -> bool {
        matches!(self, Variant::M2 | Variant::M4)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmsNetConfig {
    pub channels: usize,
    pub sample_rate: f64,
    pub chunk_len: f64,
    pub sinc_filters: usize,
    pub sinc_kernel: usize,
    pub sinc_stride: usize,
    pub pool: usize,
    pub se_reduction: usize,
    pub extraction: Extraction,
    pub encoder: Encoder,
    pub fc1_dim: usize,
    pub array_radius: f64,
    pub seed: u64,
}

impl Default for DmsNetConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            sample_rate: 16000.0,
            chunk_len: 2.0,
            sinc_filters: 60,
            sinc_kernel: 251,
            sinc_stride: 10,
            pool: 3,
            se_reduction: 4,
            extraction: Extraction::Asdb,
            encoder: Encoder::default_conformer(),
            fc1_dim: 128,
            array_radius: DEFAULT_RADIUS_M,
            seed: 0,
        }
    }
}

impl DmsNetConfig {
    /// Small model for gradient checks: 4 channels, 8 filters, about 20
    /// frames, one encoder layer.
    pub fn tiny(variant: Variant) -> Self {
        Self {
            channels: 4,
            chunk_len: 0.2,
            sinc_filters: 8,
            sinc_kernel: 33,
            sinc_stride: 16,
            pool: 10,
            se_reduction: 2,
            extraction: variant.extraction(),
            encoder: if variant.uses_conformer() {
                Encoder::Conformer {
                    layers: 1,
                    d_model: 8,
                    heads: 2,
                    ff_dim: 16,
                    conv_kernel: 5,
                }
            } else {
                Encoder::BiLstm { layers: 1, hidden: 6 }
            },
            fc1_dim: 8,
            ..Self::default()
        }
    }

    /// A model small enough to train on one CPU core in minutes: 10 ms
    /// output frames and a narrow two-layer Conformer.
    pub fn desk() -> Self {
        Self {
            sinc_filters: 16,
            sinc_kernel: 101,
            sinc_stride: 20,
            pool: 8,
            encoder: Encoder::Conformer {
                layers: 2,
                d_model: 32,
                heads: 4,
                ff_dim: 64,
                conv_kernel: 15,
            },
            fc1_dim: 32,
            ..Self::default()
        }
    }

    pub fn chunk_samples(&self) -> usize {
        (self.chunk_len * self.sample_rate).round() as usize
    }

    pub fn reduced_channels(&self) -> usize {
        (self.channels / self.se_reduction.max(1)).max(1)
    }

    /// Samples per output frame.
    pub fn frame_hop(&self) -> usize {
        self.sinc_stride * self.pool
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate / self.frame_hop() as f64
    }

    /// Output frames for a chunk of `samples`.
    pub fn frames_for(&self, samples: usize) -> usize {
        if samples < self.sinc_kernel {
            return 0;
        }
        ((samples - self.sinc_kernel) / self.sinc_stride + 1) / self.pool
    }

    pub fn frames(&self) -> usize {
        self.frames_for(self.chunk_samples())
    }

    /// Center of output frame `t` in seconds from the chunk start.
    pub fn frame_center(&self, t: usize) -> f64 {
        let center = (t * self.frame_hop()) as f64 + ((self.pool - 1) * self.sinc_stride) as f64 / 2.0 + (self.sinc_kernel - 1) as f64 / 2.0;
        center / self.sample_rate
    }

    pub fn sinc_spec(&self) -> SincSpec {
        SincSpec {
            kernel: self.sinc_kernel,
            sample_rate: self.sample_rate,
            min_low_hz: SINC_MIN_LOW_HZ,
            min_band_hz: SINC_MIN_BAND_HZ,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.channels == 0 || self.sinc_filters == 0 || self.fc1_dim == 0 {
            return bad("channels, sinc_filters and fc1_dim must be at least 1".into());
        }
        if self.sinc_kernel < 3 || self.sinc_kernel % 2 == 0 {
            return bad(format!("sinc_kernel must be odd and ≥ 3, got {}", self.sinc_kernel));
        }
        if self.sinc_stride == 0 || self.pool == 0 || self.se_reduction == 0 {
            return bad("sinc_stride, pool and se_reduction must be at least 1".into());
        }
        if !(self.sample_rate > 0.0) || !(self.chunk_len > 0.0) || !(self.array_radius > 0.0) {
            return bad("sample_rate, chunk_len and array_radius must be positive".into());
        }
        if self.frames() == 0 {
            return bad(format!("a {} s chunk yields no output frames", self.chunk_len));
        }
        match self.encoder {
            Encoder::Conformer {
                layers,
                d_model,
                heads,
                ff_dim,
                conv_kernel,
            } => {
                if layers == 0 || d_model == 0 || heads == 0 || ff_dim == 0 || d_model % heads != 0 {
                    return bad(format!("conformer needs layers ≥ 1 and heads dividing d_model ({d_model}/{heads})"));
                }
                if conv_kernel % 2 == 0 {
                    return bad(format!("conv_kernel must be odd, got {conv_kernel}"));
                }
            }
            Encoder::BiLstm { layers, hidden } => {
                if layers == 0 || hidden == 0 {
                    return bad("bilstm needs layers and hidden ≥ 1".into());
                }
            }
        }
        Ok(())
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("channels", self.channels.to_string());
        put("sample_rate", self.sample_rate.to_string());
        put("chunk_len", self.chunk_len.to_string());
        put("sinc_filters", self.sinc_filters.to_string());
        put("sinc_kernel", self.sinc_kernel.to_string());
        put("sinc_stride", self.sinc_stride.to_string());
        put("pool", self.pool.to_string());
        put("se_reduction", self.se_reduction.to_string());
        let extraction = match self.extraction {
            Extraction::Asdb => "asdb",
            Extraction::SdbSincnet => "sdb_sincnet",
        };
        put("extraction", extraction.into());
        match self.encoder {
            Encoder::Conformer {
                layers,
                d_model,
                heads,
                ff_dim,
                conv_kernel,
            } => {
                put("encoder", "conformer".into());
                put("layers", layers.to_string());
                put("d_model", d_model.to_string());
                put("heads", heads.to_string());
                put("ff_dim", ff_dim.to_string());
                put("conv_kernel", conv_kernel.to_string());
            }
            Encoder::BiLstm { layers, hidden } => {
                put("encoder", "bilstm".into());
                put("layers", layers.to_string());
                put("hidden", hidden.to_string());
            }
        }
        put("fc1_dim", self.fc1_dim.to_string());
        put("array_radius", self.array_radius.to_string());
        put("seed", self.seed.to_string());
        out
    }

    /// Reads the keys of one config section over `base`; absent keys keep
    /// their `base` values.
    pub fn from_section(cfg: &ConfigFile, section: &str, base: &DmsNetConfig) -> Result<Self> {
        let mut c = base.clone();
        c.channels = cfg.value_or(section, "channels", c.channels)?;
        c.sample_rate = cfg.value_or(section, "sample_rate", c.sample_rate)?;
        c.chunk_len = cfg.value_or(section, "chunk_len", c.chunk_len)?;
        c.sinc_filters = cfg.value_or(section, "sinc_filters", c.sinc_filters)?;
        c.sinc_kernel = cfg.value_or(section, "sinc_kernel", c.sinc_kernel)?;
        c.sinc_stride = cfg.value_or(section, "sinc_stride", c.sinc_stride)?;
        c.pool = cfg.value_or(section, "pool", c.pool)?;
        c.se_reduction = cfg.value_or(section, "se_reduction", c.se_reduction)?;
        c.fc1_dim = cfg.value_or(section, "fc1_dim", c.fc1_dim)?;
        c.array_radius = cfg.value_or(section, "array_radius", c.array_radius)?;
        c.seed = cfg.value_or(section, "seed", c.seed)?;
        if let Some(e) = cfg.get(section, "extraction") {
            c.extraction = match e.value.as_str() {
                "asdb" => Extraction::Asdb,
                "sdb_sincnet" => Extraction::SdbSincnet,
                other => return Err(Error::parse(e.line, format!("unknown extraction `{other}`"))),
            };
        }
        let kind = match cfg.get(section, "encoder") {
            Some(e) => match e.value.as_str() {
                "conformer" => Some(true),
                "bilstm" => Some(false),
                other => return Err(Error::parse(e.line, format!("unknown encoder `{other}`"))),
            },
            None => None,
        };
        let conformer = kind.unwrap_or(matches!(c.encoder, Encoder::Conformer { .. }));
        c.encoder = if conformer {
            let d = match c.encoder {
                Encoder::Conformer { .. } => c.encoder,
                _ => Encoder::default_conformer(),
            };
            let Encoder::Conformer {
                layers,
                d_model,
                heads,
                ff_dim,
                conv_kernel,
            } = d
            else {
                unreachable!()
            };
            Encoder::Conformer {
                layers: cfg.value_or(section, "layers", layers)?,
                d_model: cfg.value_or(section, "d_model", d_model)?,
                heads: cfg.value_or(section, "heads", heads)?,
                ff_dim: cfg.value_or(section, "ff_dim", ff_dim)?,
                conv_kernel: cfg.value_or(section, "conv_kernel", conv_kernel)?,
            }
        } else {
            let (layers, hidden) = match c.encoder {
                Encoder::BiLstm { layers, hidden } => (layers, hidden),
                _ => (2, 128),
            };
            Encoder::BiLstm {
                layers: cfg.value_or(section, "layers", layers)?,
                hidden: cfg.value_or(section, "hidden", hidden)?,
            }
        };
        c.validate()?;
        Ok(c)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let cfg: ConfigFile = format!("[dmsnet]\n{text}").parse()?;
        Self::from_section(&cfg, "dmsnet", &DmsNetConfig::default())
    }
}

/// Binary frame labels, 1 where two or more speakers are active.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapLabels {
    pub frames: Vec<u8>,
    pub frame_rate: f64,
}

impl OverlapLabels {
    pub fn as_f64(&self) -> Vec<f64> {
        self.frames.iter().map(|&v| v as f64).collect()
    }

    pub fn positive_fraction(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().filter(|&&v| v == 1).count() as f64 / self.frames.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapPosterior {
    pub probs: Vec<f64>,
    pub frame_rate: f64,
}

/// Named parameter tensors. Also used for gradients of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct DmsNetParams {
    tensors: BTreeMap<String, Tensor>,
}

impl DmsNetParams {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.rows, v.cols)))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    fn add_scaled(&mut self, other: &DmsNetParams, k: f64) {
        for (name, t) in self.tensors.iter_mut() {
            let o = &other.tensors[name];
            for (a, b) in t.data.iter_mut().zip(&o.data) {
                *a += k * b;
            }
        }
    }
}

struct Init {
    rng: ChaCha8Rng,
    out: BTreeMap<String, Tensor>,
}

impl Init {
    fn put(&mut self, name: String, t: Tensor) {
        self.out.insert(name, t);
    }

    fn xavier(&mut self, name: String, fan_in: usize, fan_out: usize) {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let data = (0..fan_in * fan_out).map(|_| self.rng.gen_range(-limit..limit)).collect();
        self.put(name, Tensor::from_vec(fan_in, fan_out, data));
    }

    fn fill(&mut self, name: String, rows: usize, cols: usize, v: f64) {
        self.put(name, Tensor::from_vec(rows, cols, vec![v; rows * cols]));
    }

    fn linear(&mut self, prefix: &str, fan_in: usize, fan_out: usize) {
        self.xavier(format!("{prefix}.w"), fan_in, fan_out);
        self.fill(format!("{prefix}.b"), 1, fan_out, 0.0);
    }

    fn layer_norm(&mut self, prefix: &str, dim: usize) {
        self.fill(format!("{prefix}.g"), 1, dim, 1.0);
        self.fill(format!("{prefix}.b"), 1, dim, 0.0);
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Fresh parameters, drawn from `config.seed`.
pub fn init_params(config: &DmsNetConfig) -> Result<DmsNetParams> {
    config.validate()?;
    let mut init = Init {
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        out: BTreeMap::new(),
    };
    let f = config.sinc_filters;
    let c = config.channels;
    let cr = config.reduced_channels();

    // mel-spaced band edges; the top edge stays below the Nyquist clamp
    let top = 0.99 * config.sample_rate / 2.0 - (SINC_MIN_LOW_HZ + SINC_MIN_BAND_HZ);
    let (m0, m1) = (hz_to_mel(30.0), hz_to_mel(top));
    let hz: Vec<f64> = (0..=f).map(|i| mel_to_hz(m0 + (m1 - m0) * i as f64 / f as f64)).collect();
    init.put("sinc.low".into(), Tensor::row_vector(hz[..f].to_vec()));
    init.put("sinc.band".into(), Tensor::row_vector(hz.windows(2).map(|w| w[1] - w[0]).collect()));
    init.layer_norm("norm", f);

    init.linear("se.fc1", c, cr);
    init.linear("se.fc2", cr, c);
    init.fill("combine.w".into(), 1, c, 1.0 / c as f64);
    init.fill("combine.b".into(), 1, 1, 0.0);

    match config.encoder {
        Encoder::Conformer {
            layers,
            d_model: d,
            ff_dim,
            conv_kernel,
            ..
        } => {
            init.linear("enc.in", f, d);
            for l in 0..layers {
                let p = format!("enc.{l}");
                for ff in ["ff1", "ff2"] {
                    init.layer_norm(&format!("{p}.{ff}.ln"), d);
                    init.linear(&format!("{p}.{ff}.l1"), d, ff_dim);
                    init.linear(&format!("{p}.{ff}.l2"), ff_dim, d);
                }
                init.layer_norm(&format!("{p}.att.ln"), d);
                for proj in ["q", "k", "v", "o"] {
                    init.linear(&format!("{p}.att.{proj}"), d, d);
                }
                init.layer_norm(&format!("{p}.conv.ln"), d);
                init.linear(&format!("{p}.conv.pw1"), d, 2 * d);
                init.xavier(format!("{p}.conv.dw.w"), conv_kernel, d);
                init.fill(format!("{p}.conv.dw.b"), 1, d, 0.0);
                init.layer_norm(&format!("{p}.conv.ln2"), d);
                init.linear(&format!("{p}.conv.pw2"), d, d);
                init.layer_norm(&format!("{p}.out.ln"), d);
            }
        }
        Encoder::BiLstm { layers, hidden: h } => {
            for l in 0..layers {
                let input = if l == 0 { f } else { 2 * h };
                for dir in ["fw", "bw"] {
                    let p = format!("enc.{l}.{dir}");
                    init.xavier(format!("{p}.wx"), input, 4 * h);
                    init.xavier(format!("{p}.wh"), h, 4 * h);
                    // forget gate starts open
                    let bias = (0..4 * h).map(|i| if (h..2 * h).contains(&i) { 1.0 } else { 0.0 }).collect();
                    init.put(format!("{p}.b"), Tensor::row_vector(bias));
                }
            }
        }
    }
    init.linear("head.fc1", config.encoder.output_dim(), config.fc1_dim);
    init.linear("head.fc2", config.fc1_dim, 2);
    Ok(DmsNetParams { tensors: init.out })
}

/// Chunk prepared for the network: per-channel signals or the beamformed
/// mono signal.
#[derive(Debug, Clone)]
pub enum ModelInput {
    Channels(Vec<Arc<Vec<f64>>>),
    Mono(Arc<Vec<f64>>),
}

/// Internal forward options.
#[derive(Debug, Clone, Default)]
struct ForwardOpts {
    /// Replaces the SE excitation.
    excitation: Option<Vec<f64>>,
}

struct Forward {
    graph: Graph,
    vars: Vec<(String, Var)>,
    probs: Var,
    two_class: Var,
    excitation: Option<Var>,
}

struct Builder<'a> {
    g: Graph,
    params: &'a DmsNetParams,
    vars: HashMap<String, Var>,
    order: Vec<(String, Var)>,
}

impl Builder<'_> {
    fn p(&mut self, name: &str) -> Var {
        if let Some(&v) = self.vars.get(name) {
            return v;
        }
        let t = self
            .params
            .get(name)
            .unwrap_or_else(|| panic!("missing parameter {name}"))
            .clone();
        let v = self.g.param(t);
        self.vars.insert(name.to_string(), v);
        self.order.push((name.to_string(), v));
        v
    }

    fn linear(&mut self, x: Var, prefix: &str) -> Var {
        let w = self.p(&format!("{prefix}.w"));
        let b = self.p(&format!("{prefix}.b"));
        let y = self.g.matmul(x, w);
        self.g.add_row(y, b)
    }

    fn layer_norm(&mut self, x: Var, prefix: &str) -> Var {
        let gamma = self.p(&format!("{prefix}.g"));
        let beta = self.p(&format!("{prefix}.b"));
        let n = self.g.layer_norm(x, NORM_EPS);
        let n = self.g.mul_row(n, gamma);
        self.g.add_row(n, beta)
    }

    /// sinc conv → |·| → max-pool, `T × F`.
    fn sinc_features(&mut self, kernels: Var, signal: Arc<Vec<f64>>, config: &DmsNetConfig) -> Var {
        let y = self.g.sinc_conv(kernels, signal, config.sinc_stride);
        let y = self.g.abs(y);
        self.g.max_pool_rows(y, config.pool)
    }

    fn instance_norm(&mut self, x: Var) -> Var {
        let gamma = self.p("norm.g");
        let beta = self.p("norm.b");
        let n = self.g.instance_norm(x, NORM_EPS);
        let n = self.g.mul_row(n, gamma);
        self.g.add_row(n, beta)
    }

    fn feed_forward(&mut self, x: Var, prefix: &str) -> Var {
        let h = self.layer_norm(x, &format!("{prefix}.ln"));
        let h = self.linear(h, &format!("{prefix}.l1"));
        let h = self.g.swish(h);
        let h = self.linear(h, &format!("{prefix}.l2"));
        let h = self.g.scale(h, 0.5);
        self.g.add(x, h)
    }

    fn attention(&mut self, x: Var, prefix: &str, d: usize, heads: usize) -> Var {
        let h = self.layer_norm(x, &format!("{prefix}.ln"));
        let q = self.linear(h, &format!("{prefix}.q"));
        let k = self.linear(h, &format!("{prefix}.k"));
        let v = self.linear(h, &format!("{prefix}.v"));
        let dh = d / heads;
        let contexts: Vec<Var> = (0..heads)
            .map(|i| {
                let qi = self.g.slice_cols(q, i * dh, dh);
                let ki = self.g.slice_cols(k, i * dh, dh);
                let vi = self.g.slice_cols(v, i * dh, dh);
                let s = self.g.matmul_bt(qi, ki);
                let s = self.g.scale(s, 1.0 / (dh as f64).sqrt());
                let a = self.g.softmax_rows(s);
                self.g.matmul(a, vi)
            })
            .collect();
        let ctx = self.g.concat_cols(&contexts);
        let o = self.linear(ctx, &format!("{prefix}.o"));
        self.g.add(x, o)
    }

    fn conv_module(&mut self, x: Var, prefix: &str, d: usize) -> Var {
        let h = self.layer_norm(x, &format!("{prefix}.ln"));
        let h = self.linear(h, &format!("{prefix}.pw1"));
        let a = self.g.slice_cols(h, 0, d);
        let gate = self.g.slice_cols(h, d, d);
        let gate = self.g.sigmoid(gate);
        let h = self.g.mul(a, gate);
        let w = self.p(&format!("{prefix}.dw.w"));
        let b = self.p(&format!("{prefix}.dw.b"));
        let h = self.g.depthwise_conv(h, w);
        let h = self.g.add_row(h, b);
        let h = self.layer_norm(h, &format!("{prefix}.ln2"));
        let h = self.g.swish(h);
        let h = self.linear(h, &format!("{prefix}.pw2"));
        self.g.add(x, h)
    }

    fn conformer(&mut self, x: Var, layers: usize, d: usize, heads: usize) -> Var {
        let h = self.linear(x, "enc.in");
        let t = self.g.value(h).rows;
        let pe = self.g.constant(positional_encoding(t, d));
        let mut h = self.g.add(h, pe);
        for l in 0..layers {
            let p = format!("enc.{l}");
            h = self.feed_forward(h, &format!("{p}.ff1"));
            h = self.attention(h, &format!("{p}.att"), d, heads);
            h = self.conv_module(h, &format!("{p}.conv"), d);
            h = self.feed_forward(h, &format!("{p}.ff2"));
            h = self.layer_norm(h, &format!("{p}.out.ln"));
        }
        h
    }

    fn lstm_direction(&mut self, x: Var, prefix: &str, hidden: usize, reverse: bool) -> Var {
        let wx = self.p(&format!("{prefix}.wx"));
        let wh = self.p(&format!("{prefix}.wh"));
        let b = self.p(&format!("{prefix}.b"));
        let xw = self.g.matmul(x, wx);
        let xw = self.g.add_row(xw, b);
        let t_len = self.g.value(x).rows;
        let mut h = self.g.constant(Tensor::zeros(1, hidden));
        let mut c = self.g.constant(Tensor::zeros(1, hidden));
        let mut outputs = vec![h; t_len];
        let steps: Vec<usize> = if reverse { (0..t_len).rev().collect() } else { (0..t_len).collect() };
        for t in steps {
            let xt = self.g.row(xw, t);
            let rec = self.g.matmul(h, wh);
            let z = self.g.add(xt, rec);
            let i = self.g.slice_cols(z, 0, hidden);
            let f = self.g.slice_cols(z, hidden, hidden);
            let gg = self.g.slice_cols(z, 2 * hidden, hidden);
            let o = self.g.slice_cols(z, 3 * hidden, hidden);
            let i = self.g.sigmoid(i);
            let f = self.g.sigmoid(f);
            let gg = self.g.tanh(gg);
            let o = self.g.sigmoid(o);
            let keep = self.g.mul(f, c);
            let write = self.g.mul(i, gg);
            c = self.g.add(keep, write);
            let tc = self.g.tanh(c);
            h = self.g.mul(o, tc);
            outputs[t] = h;
        }
        self.g.stack_rows(&outputs)
    }

    fn bilstm(&mut self, x: Var, layers: usize, hidden: usize) -> Var {
        let mut h = x;
        for l in 0..layers {
            let fw = self.lstm_direction(h, &format!("enc.{l}.fw"), hidden, false);
            let bw = self.lstm_direction(h, &format!("enc.{l}.bw"), hidden, true);
            h = self.g.concat_cols(&[fw, bw]);
        }
        h
    }
}

fn positional_encoding(t: usize, d: usize) -> Tensor {
    let mut pe = Tensor::zeros(t, d);
    for pos in 0..t {
        for i in 0..d {
            let rate = 10000f64.powf((2 * (i / 2)) as f64 / d as f64);
            let angle = pos as f64 / rate;
            pe.data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// The FIR taps (C × K) of the look-direction-0 superdirective beamformer.
fn look_direction_taps(config: &DmsNetConfig) -> Result<Vec<Vec<f64>>> {
    let geom = ArrayGeometry::circular(config.channels, config.array_radius, config.sample_rate, DEFAULT_SOUND_SPEED)?;
    realize_fir(&geom, 0.0, LOOK_TAPS, DEFAULT_LOADING)
}

/// `y[t] = Σ_c Σ_k taps_c[k] x_c[t + K/2 − k]`: the beamformer output with
/// its K/2 design delay removed.
fn beamform_aligned(taps: &[Vec<f64>], chunk: &MultichannelAudio) -> Vec<f64> {
    let n = chunk.len();
    let k = taps[0].len();
    let half = k / 2;
    let mut y = vec![0.0; n];
    for (c, h) in taps.iter().enumerate() {
        let x = chunk.channel(c);
        for (t, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &hj) in h.iter().enumerate() {
                let src = t + half;
                if src < j || src - j >= n {
                    continue;
                }
                acc += hj * x[src - j];
            }
            *out += acc;
        }
    }
    y
}

/// A detector: configuration plus parameters.
#[derive(Debug, Clone)]
pub struct DmsNet {
    config: DmsNetConfig,
    params: DmsNetParams,
    look_taps: Option<Vec<Vec<f64>>>,
}

impl DmsNet {
    pub fn new(config: DmsNetConfig) -> Result<Self> {
        let params = init_params(&config)?;
        Self::from_params(config, params)
    }

    /// Wraps existing parameters; names and shapes must match the
    /// configuration.
    pub fn from_params(config: DmsNetConfig, params: DmsNetParams) -> Result<Self> {
        let reference = init_params(&config)?;
        for (name, t) in reference.iter() {
            match params.get(name) {
                None => return Err(Error::ShapeMismatch(format!("checkpoint lacks tensor {name}"))),
                Some(p) if p.rows != t.rows || p.cols != t.cols => {
                    return Err(Error::ShapeMismatch(format!(
                        "tensor {name} is {}x{}, expected {}x{}",
                        p.rows, p.cols, t.rows, t.cols
                    )))
                }
                _ => {}
            }
        }
        if params.len() != reference.len() {
            let extra = params.names().find(|n| reference.get(n).is_none()).unwrap_or("?");
            return Err(Error::ShapeMismatch(format!("unexpected tensor {extra}")));
        }
        let look_taps = match config.extraction {
            Extraction::SdbSincnet => Some(look_direction_taps(&config)?),
            Extraction::Asdb => None,
        };
        Ok(Self {
            config,
            params,
            look_taps,
        })
    }

    pub fn config(&self) -> &DmsNetConfig {
        &self.config
    }

    pub fn params(&self) -> &DmsNetParams {
        &self.params
    }

    pub fn into_params(self) -> DmsNetParams {
        self.params
    }

    pub fn set_params(&mut self, params: DmsNetParams) -> Result<()> {
        let checked = Self::from_params(self.config.clone(), params)?;
        self.params = checked.params;
        Ok(())
    }

    pub fn prepare(&self, chunk: &MultichannelAudio) -> Result<ModelInput> {
        let c = &self.config;
        if chunk.channels() != c.channels || chunk.len() != c.chunk_samples() {
            return Err(Error::ShapeMismatch(format!(
                "chunk is {} samples × {} channels, model expects {} × {}",
                chunk.len(),
                chunk.channels(),
                c.chunk_samples(),
                c.channels
            )));
        }
        Ok(match &self.look_taps {
            Some(taps) => ModelInput::Mono(Arc::new(beamform_aligned(taps, chunk))),
            None => ModelInput::Channels(chunk.data().iter().map(|ch| Arc::new(ch.clone())).collect()),
        })
    }

    fn run(&self, input: &ModelInput, opts: &ForwardOpts) -> Forward {
        let config = &self.config;
        let mut b = Builder {
            g: Graph::new(),
            params: &self.params,
            vars: HashMap::new(),
            order: Vec::new(),
        };
        let low = b.p("sinc.low");
        let band = b.p("sinc.band");
        let kernels = b.g.sinc_kernels(low, band, config.sinc_spec());
        let mut excitation = None;
        let features = match input {
            ModelInput::Mono(signal) => {
                let pooled = b.sinc_features(kernels, signal.clone(), config);
                b.instance_norm(pooled)
            }
            ModelInput::Channels(signals) => {
                let pooled: Vec<Var> = signals.iter().map(|s| b.sinc_features(kernels, s.clone(), config)).collect();
                let normed: Vec<Var> = pooled.iter().map(|&p| b.instance_norm(p)).collect();
                let e = match &opts.excitation {
                    Some(w) => b.g.constant(Tensor::row_vector(w.clone())),
                    None => {
                        // squeeze on the pooled magnitudes; after instance
                        // norm every channel would pool to the same value
                        let z: Vec<Var> = pooled.iter().map(|&p| b.g.mean_all(p)).collect();
                        let z = b.g.concat_cols(&z);
                        let h = b.linear(z, "se.fc1");
                        let h = b.g.swish(h);
                        let h = b.linear(h, "se.fc2");
                        b.g.sigmoid(h)
                    }
                };
                excitation = Some(e);
                let combine = b.p("combine.w");
                let terms: Vec<Var> = normed
                    .iter()
                    .enumerate()
                    .map(|(c, &x)| {
                        let s = b.g.slice_cols(e, c, 1);
                        let scaled = b.g.mul_scalar(x, s);
                        let w = b.g.slice_cols(combine, c, 1);
                        b.g.mul_scalar(scaled, w)
                    })
                    .collect();
                let sum = b.g.sum(&terms);
                let bias = b.p("combine.b");
                b.g.add_scalar(sum, bias)
            }
        };
        let encoded = match config.encoder {
            Encoder::Conformer {
                layers, d_model, heads, ..
            } => b.conformer(features, layers, d_model, heads),
            Encoder::BiLstm { layers, hidden } => b.bilstm(features, layers, hidden),
        };
        let h = b.linear(encoded, "head.fc1");
        let h = b.g.tanh(h);
        let logits = b.linear(h, "head.fc2");
        let two_class = b.g.softmax_rows(logits);
        let probs = b.g.slice_cols(two_class, 1, 1);
        Forward {
            graph: b.g,
            vars: b.order,
            probs,
            two_class,
            excitation,
        }
    }

    fn posterior(&self, fwd: &Forward) -> OverlapPosterior {
        OverlapPosterior {
            probs: fwd.graph.value(fwd.probs).data.clone(),
            frame_rate: self.config.frame_rate(),
        }
    }

    pub fn forward(&self, chunk: &MultichannelAudio) -> Result<OverlapPosterior> {
        Ok(self.forward_prepared(&self.prepare(chunk)?))
    }

    pub fn forward_prepared(&self, input: &ModelInput) -> OverlapPosterior {
        self.posterior(&self.run(input, &ForwardOpts::default()))
    }

    /// SE channel weights for a chunk; `None` on the beamformed path.
    pub fn excitation(&self, chunk: &MultichannelAudio) -> Result<Option<Vec<f64>>> {
        let fwd = self.run(&self.prepare(chunk)?, &ForwardOpts::default());
        Ok(fwd.excitation.map(|e| fwd.graph.value(e).data.clone()))
    }

    /// Loss and exact gradient for one labelled chunk.
    pub fn loss_and_gradient(&self, input: &ModelInput, labels: &[f64]) -> Result<(f64, DmsNetParams)> {
        let fwd = self.run(input, &ForwardOpts::default());
        self.gradient_of(fwd, labels)
    }

    fn gradient_of(&self, mut fwd: Forward, labels: &[f64]) -> Result<(f64, DmsNetParams)> {
        let t = fwd.graph.value(fwd.probs).rows;
        if labels.len() != t {
            return Err(Error::LengthMismatch {
                left: t,
                right: labels.len(),
            });
        }
        let loss = fwd.graph.bce(fwd.probs, labels);
        let value = fwd.graph.value(loss).data[0];
        let grads = fwd.graph.backward(loss);
        let mut out = self.params.zeros_like();
        for (name, var) in fwd.vars.drain(..) {
            if let Some(g) = grads.get(var) {
                *out.get_mut(&name).expect("known parameter") = g.clone();
            }
        }
        Ok((value, out))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::new();
        self.write_to(&mut bytes).map_err(|e| Error::io(path, e))?;
        crate::io::write_atomic(path, &bytes)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&bytes[..])
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let text = self.config.to_text();
        w.write_all(&(text.len() as u32).to_le_bytes())?;
        w.write_all(text.as_bytes())?;
        w.write_all(&(self.params.len() as u32).to_le_bytes())?;
        for (name, t) in self.params.iter() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&2u32.to_le_bytes())?;
            w.write_all(&(t.rows as u32).to_le_bytes())?;
            w.write_all(&(t.cols as u32).to_le_bytes())?;
            for v in &t.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let corrupt = |m: &str| Error::CorruptHeader(format!("checkpoint: {m}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
            r.read_exact(&mut u32_buf).map_err(|_| corrupt("truncated"))?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let version = read_u32(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let read_string = |r: &mut dyn Read, len: usize| -> Result<String> {
            let mut buf = vec![0u8; len];
            r.read_exact(&mut buf).map_err(|_| corrupt("truncated"))?;
            String::from_utf8(buf).map_err(|_| corrupt("invalid utf-8"))
        };
        let text_len = read_u32(&mut r)? as usize;
        let text = read_string(&mut r, text_len)?;
        let config = DmsNetConfig::from_text(&text)?;
        let count = read_u32(&mut r)? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = read_u32(&mut r)? as usize;
            let name = read_string(&mut r, name_len)?;
            let ndim = read_u32(&mut r)?;
            if ndim != 2 {
                return Err(corrupt(&format!("tensor {name} has {ndim} dimensions")));
            }
            let rows = read_u32(&mut r)? as usize;
            let cols = read_u32(&mut r)? as usize;
            let mut data = vec![0.0; rows * cols];
            let mut b = [0u8; 8];
            for v in data.iter_mut() {
                r.read_exact(&mut b).map_err(|_| corrupt("truncated"))?;
                *v = f64::from_le_bytes(b);
            }
            tensors.insert(name, Tensor::from_vec(rows, cols, data));
        }
        Self::from_params(config, DmsNetParams { tensors })
    }
}

/// Mean binary cross-entropy, probabilities clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(posterior: &OverlapPosterior, labels: &OverlapLabels) -> Result<f64> {
    if posterior.probs.len() != labels.frames.len() {
        return Err(Error::LengthMismatch {
            left: posterior.probs.len(),
            right: labels.frames.len(),
        });
    }
    Ok(bce_value(&posterior.probs, &labels.as_f64()))
}

/// Gradient of the loss of one chunk with respect to every parameter.
pub fn backward(net: &DmsNet, chunk: &MultichannelAudio, labels: &OverlapLabels) -> Result<DmsNetParams> {
    let input = net.prepare(chunk)?;
    Ok(net.loss_and_gradient(&input, &labels.as_f64())?.1)
}

#[derive(Debug, Clone)]
pub struct LabeledChunk {
    pub audio: MultichannelAudio,
    pub labels: OverlapLabels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: DmsNet,
    /// Mean training loss per epoch.
    pub loss_trace: Vec<f64>,
}

pub fn train(config: &DmsNetConfig, dataset: &[LabeledChunk], epochs: usize, lr: f64) -> Result<TrainOutcome> {
    let opts = TrainOptions {
        epochs,
        lr,
        batch_size: 8,
        shuffle_seed: config.seed,
    };
    train_with(DmsNet::new(config.clone())?, dataset, &opts)
}

/// Adam (β1 0.9, β2 0.999, ε 1e-8) over shuffled minibatches. Minibatch
/// gradients are computed in parallel and summed in index order, so the
/// result does not depend on the thread count.
pub fn train_with(mut net: DmsNet, dataset: &[LabeledChunk], opts: &TrainOptions) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let frames = net.config.frames();
    let inputs = dataset
        .par_iter()
        .map(|item| {
            if item.labels.frames.len() != frames {
                return Err(Error::LengthMismatch {
                    left: frames,
                    right: item.labels.frames.len(),
                });
            }
            net.prepare(&item.audio).map(|i| (i, item.labels.as_f64()))
        })
        .collect::<Result<Vec<_>>>()?;

    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let mut m = net.params.zeros_like();
    let mut v = net.params.zeros_like();
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.shuffle_seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let batch = opts.batch_size.max(1);
    let mut trace = Vec::with_capacity(opts.epochs);

    for epoch in 0..opts.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (bi, idx) in order.chunks(batch).enumerate() {
            let results = idx
                .par_iter()
                .map(|&i| net.loss_and_gradient(&inputs[i].0, &inputs[i].1))
                .collect::<Result<Vec<_>>>()?;
            let mut grad = net.params.zeros_like();
            let mut loss = 0.0;
            for (l, g) in &results {
                loss += l;
                grad.add_scaled(g, 1.0 / idx.len() as f64);
            }
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: bi });
            }
            epoch_loss += loss;
            step += 1;
            let (c1, c2) = (1.0 - b1.powi(step), 1.0 - b2.powi(step));
            for (name, p) in net.params.tensors.iter_mut() {
                let g = &grad.tensors[name];
                let mt = m.tensors.get_mut(name).expect("moment");
                let vt = v.tensors.get_mut(name).expect("moment");
                for j in 0..p.data.len() {
                    let gj = g.data[j];
                    mt.data[j] = b1 * mt.data[j] + (1.0 - b1) * gj;
                    vt.data[j] = b2 * vt.data[j] + (1.0 - b2) * gj * gj;
                    let update = opts.lr * (mt.data[j] / c1) / ((vt.data[j] / c2).sqrt() + eps);
                    p.data[j] -= update;
                }
            }
        }
        trace.push(epoch_loss / inputs.len() as f64);
    }
    Ok(TrainOutcome { net, loss_trace: trace })
}

/// Posterior on the 10 ms grid for a recording of any length. Chunks hop by
/// half a chunk, the last one is zero padded, and overlapping estimates are
/// averaged.
pub fn frame_posteriors(net: &DmsNet, audio: &MultichannelAudio) -> Result<Vec<f64>> {
    let config = &net.config;
    if audio.channels() != config.channels {
        return Err(Error::ChannelMismatch {
            expected: config.channels,
            actual: audio.channels(),
        });
    }
    let l = config.chunk_samples();
    let hop = (l / 2).max(1);
    let mut starts = vec![0usize];
    while starts.last().unwrap() + l < audio.len() {
        let next = starts.last().unwrap() + hop;
        starts.push(next);
    }
    let posts = starts
        .par_iter()
        .map(|&s| net.forward(&audio.slice_padded(s, l)))
        .collect::<Result<Vec<_>>>()?;

    let fs = config.sample_rate;
    let centers: Vec<f64> = (0..config.frames()).map(|t| config.frame_center(t)).collect();
    let n_frames = frame_count(audio.duration(), FRAME_SECONDS);
    let mut sum = vec![0.0; n_frames];
    let mut count = vec![0usize; n_frames];
    for (&s, post) in starts.iter().zip(&posts) {
        let t0 = s as f64 / fs;
        let t1 = t0 + l as f64 / fs;
        for i in 0..n_frames {
            let tau = (i as f64 + 0.5) * FRAME_SECONDS;
            if tau < t0 || tau >= t1 {
                continue;
            }
            sum[i] += interpolate(&centers, &post.probs, tau - t0);
            count[i] += 1;
        }
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| if c == 0 { 0.0 } else { s / c as f64 }).collect())
}

/// Piecewise-linear interpolation, constant beyond the ends.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[xs.len() - 1] {
        return ys[ys.len() - 1];
    }
    let j = xs.partition_point(|&v| v <= x);
    let (x0, x1) = (xs[j - 1], xs[j]);
    let w = (x - x0) / (x1 - x0);
    ys[j - 1] * (1.0 - w) + ys[j] * w
}

/// Thresholds frame posteriors, closes gaps shorter than 0.1 s and drops
/// regions shorter than 0.1 s.
pub fn posteriors_to_timeline(probs: &[f64], frame: f64, threshold: f64) -> Timeline {
    let mut marks: Vec<bool> = probs.iter().map(|&p| p >= threshold).collect();
    let min_frames = (MIN_REGION_S / frame - 1e-9).ceil() as usize;
    set_short_runs(&mut marks, false, min_frames, true);
    set_short_runs(&mut marks, true, min_frames, false);
    Timeline::from_frames(&marks, frame)
}

/// Flips runs of `value` shorter than `min_len`; gap runs touching either
/// end are kept when `interior_only`.
fn set_short_runs(marks: &mut [bool], value: bool, min_len: usize, interior_only: bool) {
    let n = marks.len();
    let mut i = 0;
    while i < n {
        if marks[i] != value {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && marks[i] == value {
            i += 1;
        }
        let interior = start > 0 && i < n;
        if i - start < min_len && (interior || !interior_only) {
            marks[start..i].iter_mut().for_each(|m| *m = !value);
        }
    }
}

pub fn detect_overlap(net: &DmsNet, audio: &MultichannelAudio, threshold: f64) -> Result<Timeline> {
    let probs = frame_posteriors(net, audio)?;
    Ok(posteriors_to_timeline(&probs, FRAME_SECONDS, threshold))
}

/// Frame probabilities versus labels at a threshold.
pub fn frame_accuracy(probs: &[f64], labels: &[u8], threshold: f64) -> f64 {
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p >= threshold) == (y == 1))
        .count();
    hits as f64 / labels.len().max(1) as f64
}

/// Runs a forward pass with the SE weights replaced by `excitation`.
#[doc(hidden)]
pub fn forward_with_excitation(net: &DmsNet, chunk: &MultichannelAudio, excitation: &[f64]) -> Result<OverlapPosterior> {
    let input = net.prepare(chunk)?;
    let fwd = net.run(
        &input,
        &ForwardOpts {
            excitation: Some(excitation.to_vec()),
        },
    );
    Ok(net.posterior(&fwd))
}

/// Both softmax columns of a forward pass (`T × 2`).
#[doc(hidden)]
pub fn two_class_posterior(net: &DmsNet, chunk: &MultichannelAudio) -> Result<Tensor> {
    let fwd = net.run(&net.prepare(chunk)?, &ForwardOpts::default());
    Ok(fwd.graph.value(fwd.two_class).clone())
}

/// Parameter names a variant never reads.
pub fn unused_parameters(config: &DmsNetConfig) -> Vec<&'static str> {
    match config.extraction {
        Extraction::SdbSincnet => vec!["se.fc1.w", "se.fc1.b", "se.fc2.w", "se.fc2.b", "combine.w", "combine.b"],
        Extraction::Asdb => Vec::new(),
    }
}
