use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{AttnCache, AttnP, FfnCache, FfnP, LinearP, NormCache, NormP};
use super::matrix::{add_into, gemm, log_sum_exp, sum_rows_into};
use super::{LossReport, LossSpec, ModelInput, NeuralError};
use crate::lang::{LanguageTag, SourceLang};
use crate::tokenizer::PAD;

/// Whether all target languages share one decoder stack or each has its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecoderMode {
    #[default]
    Shared,
    Separate,
}

impl std::str::FromStr for DecoderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "shared" => Ok(DecoderMode::Shared),
            "separate" => Ok(DecoderMode::Separate),
            other => Err(format!("unknown decoder mode `{other}` (expected shared or separate)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub enc_layers: usize,
    /// Depth of the shared decoder.
    pub dec_layers: usize,
    pub max_len: usize,
    pub lang_count: usize,
    pub decoder_mode: DecoderMode,
    /// Depth of each per-language decoder in separate mode; defaults to a third of
    /// `dec_layers` (at least one).
    pub separate_dec_layers: Option<usize>,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: crate::tokenizer::DEFAULT_VOCAB_SIZE,
            dim: 64,
            heads: 4,
            ff_dim: 256,
            enc_layers: 2,
            dec_layers: 2,
            max_len: 256,
            lang_count: LanguageTag::COUNT,
            decoder_mode: DecoderMode::Shared,
            separate_dec_layers: None,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let counts = [
            ("vocab_size", self.vocab_size),
            ("dim", self.dim),
            ("heads", self.heads),
            ("ff_dim", self.ff_dim),
            ("enc_layers", self.enc_layers),
            ("dec_layers", self.dec_layers),
            ("max_len", self.max_len),
            ("lang_count", self.lang_count),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(NeuralError::InvalidConfig(format!("{name} must be positive")));
        }
        if self.dim % self.heads != 0 {
            return Err(NeuralError::InvalidConfig(format!(
                "dim {} is not divisible by {} heads",
                self.dim, self.heads
            )));
        }
        if self.separate_dec_layers == Some(0) {
            return Err(NeuralError::InvalidConfig("separate_dec_layers must be positive".into()));
        }
        Ok(())
    }

    pub fn decoder_count(&self) -> usize {
        match self.decoder_mode {
            DecoderMode::Shared => 1,
            DecoderMode::Separate => SourceLang::ALL.len(),
        }
    }

    pub fn layers_per_decoder(&self) -> usize {
        match self.decoder_mode {
            DecoderMode::Shared => self.dec_layers,
            DecoderMode::Separate => self.separate_dec_layers.unwrap_or((self.dec_layers / 3).max(1)),
        }
    }
}

/// Name, offset and shape of one parameter tensor in the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct EncLayerP {
    pub ln1: NormP,
    pub attn: AttnP,
    pub ln2: NormP,
    pub ffn: FfnP,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DecLayerP {
    pub ln1: NormP,
    pub self_attn: AttnP,
    pub ln2: NormP,
    pub cross: AttnP,
    pub ln3: NormP,
    pub ffn: FfnP,
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderP {
    pub layers: Vec<DecLayerP>,
    pub ln: NormP,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok: usize,
    pub pos: usize,
    pub lang: usize,
    pub enc: Vec<EncLayerP>,
    pub enc_ln: NormP,
    pub decoders: Vec<DecoderP>,
    pub out_bias: usize,
    pub total: usize,
    pub tensors: Vec<TensorInfo>,
}

/// How a tensor is initialized.
#[derive(Clone, Copy)]
enum Init {
    Normal(f64),
    Zero,
    One,
}

struct Alloc {
    next: usize,
    tensors: Vec<TensorInfo>,
    inits: Vec<Init>,
}

impl Alloc {
    fn take(&mut self, name: String, shape: Vec<usize>, init: Init) -> usize {
        let offset = self.next;
        self.next += shape.iter().product::<usize>();
        self.tensors.push(TensorInfo { name, offset, shape });
        self.inits.push(init);
        offset
    }

    fn linear(&mut self, name: &str, din: usize, dout: usize, std: f64) -> LinearP {
        LinearP {
            w: self.take(format!("{name}.w"), vec![din, dout], Init::Normal(std)),
            b: self.take(format!("{name}.b"), vec![dout], Init::Zero),
            din,
            dout,
        }
    }

    fn norm(&mut self, name: &str, dim: usize) -> NormP {
        NormP {
            g: self.take(format!("{name}.g"), vec![dim], Init::One),
            b: self.take(format!("{name}.b"), vec![dim], Init::Zero),
            dim,
        }
    }

    fn attn(&mut self, name: &str, d: usize, heads: usize, out_std: f64) -> AttnP {
        let std = 1.0 / (d as f64).sqrt();
        AttnP {
            q: self.linear(&format!("{name}.q"), d, d, std),
            k: self.linear(&format!("{name}.k"), d, d, std),
            v: self.linear(&format!("{name}.v"), d, d, std),
            o: self.linear(&format!("{name}.o"), d, d, out_std),
            heads,
        }
    }

    fn ffn(&mut self, name: &str, d: usize, ff: usize, out_std: f64) -> FfnP {
        FfnP {
            l1: self.linear(&format!("{name}.fc1"), d, ff, 1.0 / (d as f64).sqrt()),
            l2: self.linear(&format!("{name}.fc2"), ff, d, out_std),
        }
    }
}

fn build_layout(c: &ModelConfig) -> (Layout, Vec<Init>) {
    let d = c.dim;
    let emb_std = 1.0 / (d as f64).sqrt();
    let depth = (c.enc_layers + c.layers_per_decoder()) as f64;
    let out_std = 1.0 / (d as f64).sqrt() / (2.0 * depth).sqrt();
    let mut a = Alloc {
        next: 0,
        tensors: Vec::new(),
        inits: Vec::new(),
    };
    let tok = a.take("tok_emb".into(), vec![c.vocab_size, d], Init::Normal(emb_std));
    let pos = a.take("pos_emb".into(), vec![c.max_len, d], Init::Normal(emb_std));
    let lang = a.take("lang_emb".into(), vec![c.lang_count, d], Init::Normal(emb_std));
    let enc = (0..c.enc_layers)
        .map(|i| {
            let n = format!("enc.{i}");
            EncLayerP {
                ln1: a.norm(&format!("{n}.ln1"), d),
                attn: a.attn(&format!("{n}.attn"), d, c.heads, out_std),
                ln2: a.norm(&format!("{n}.ln2"), d),
                ffn: a.ffn(&format!("{n}.ffn"), d, c.ff_dim, out_std),
            }
        })
        .collect();
    let enc_ln = a.norm("enc.ln", d);
    let decoders = (0..c.decoder_count())
        .map(|k| {
            let layers = (0..c.layers_per_decoder())
                .map(|i| {
                    let n = format!("dec{k}.{i}");
                    DecLayerP {
                        ln1: a.norm(&format!("{n}.ln1"), d),
                        self_attn: a.attn(&format!("{n}.self"), d, c.heads, out_std),
                        ln2: a.norm(&format!("{n}.ln2"), d),
                        cross: a.attn(&format!("{n}.cross"), d, c.heads, out_std),
                        ln3: a.norm(&format!("{n}.ln3"), d),
                        ffn: a.ffn(&format!("{n}.ffn"), d, c.ff_dim, out_std),
                    }
                })
                .collect();
            DecoderP {
                layers,
                ln: a.norm(&format!("dec{k}.ln"), d),
            }
        })
        .collect();
    let out_bias = a.take("out_bias".into(), vec![c.vocab_size], Init::Zero);
    (
        Layout {
            tok,
            pos,
            lang,
            enc,
            enc_ln,
            decoders,
            out_bias,
            total: a.next,
            tensors: a.tensors,
        },
        a.inits,
    )
}

/// Encoder–decoder transformer with pre-layer-norm blocks, summed token, position and
/// language embeddings, and an output projection tied to the token embeddings.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub(crate) layout: Layout,
    pub params: Vec<f64>,
}

struct EncLayerCache {
    ln1: NormCache,
    a: Vec<f64>,
    attn: AttnCache,
    ln2: NormCache,
    b: Vec<f64>,
    ffn: FfnCache,
}

struct EncCache {
    layers: Vec<EncLayerCache>,
    ln: NormCache,
}

struct DecLayerCache {
    ln1: NormCache,
    a: Vec<f64>,
    self_attn: AttnCache,
    ln2: NormCache,
    b: Vec<f64>,
    cross: AttnCache,
    ln3: NormCache,
    e: Vec<f64>,
    ffn: FfnCache,
}

struct DecCache {
    layers: Vec<DecLayerCache>,
    ln: NormCache,
}

impl Model {
    /// Randomly initialized model, seeded by `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Model, NeuralError> {
        config.validate()?;
        let (layout, inits) = build_layout(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut params = vec![0.0; layout.total];
        for (t, init) in layout.tensors.iter().zip(inits) {
            let slot = &mut params[t.range()];
            match init {
                Init::Zero => {}
                Init::One => slot.fill(1.0),
                Init::Normal(std) => {
                    let dist = Normal::new(0.0, std).expect("finite std");
                    slot.iter_mut().for_each(|x| *x = dist.sample(&mut rng));
                }
            }
        }
        Ok(Model { config, layout, params })
    }

    /// Model with the given parameters; fails if the count does not fit the config.
    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Model, NeuralError> {
        config.validate()?;
        let (layout, _) = build_layout(&config);
        if params.len() != layout.total {
            return Err(NeuralError::InvalidConfig(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        Ok(Model { config, layout, params })
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.layout.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&TensorInfo> {
        self.layout.tensors.iter().find(|t| t.name == name)
    }

    /// Row `id` of the token embedding table.
    pub fn token_embedding(&self, id: u32) -> &[f64] {
        let d = self.config.dim;
        let start = self.layout.tok + id as usize * d;
        &self.params[start..start + d]
    }

    /// The decoder stack used when generating text with this tag.
    pub fn decoder_index(&self, tag: LanguageTag) -> usize {
        match self.config.decoder_mode {
            DecoderMode::Shared => 0,
            DecoderMode::Separate => tag.language().index(),
        }
    }

    pub(crate) fn check_input(&self, input: &ModelInput) -> Result<(), NeuralError> {
        if input.ids.len() > self.config.max_len {
            return Err(NeuralError::SequenceTooLong {
                len: input.ids.len(),
                max: self.config.max_len,
            });
        }
        if input.ids.len() != input.tags.len() {
            return Err(NeuralError::InvalidInput("ids and tags differ in length".into()));
        }
        if let Some(t) = input.tags.iter().find(|t| t.index() >= self.config.lang_count) {
            return Err(NeuralError::InvalidTag(*t));
        }
        if let Some(id) = input.ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(NeuralError::InvalidInput(format!("token id {id} outside the vocabulary")));
        }
        Ok(())
    }

    pub(crate) fn embed_row(&self, id: u32, position: usize, tag: LanguageTag, out: &mut [f64]) {
        let d = self.config.dim;
        let p = &self.params;
        let tok = self.layout.tok + id as usize * d;
        let pos = self.layout.pos + position * d;
        let lang = self.layout.lang + tag.index() * d;
        for j in 0..d {
            out[j] = p[tok + j] + p[pos + j] + p[lang + j];
        }
    }

    fn embed(&self, input: &ModelInput) -> Vec<f64> {
        let d = self.config.dim;
        let mut x = vec![0.0; input.ids.len() * d];
        for (i, (id, tag)) in input.ids.iter().zip(&input.tags).enumerate() {
            self.embed_row(*id, i, *tag, &mut x[i * d..(i + 1) * d]);
        }
        x
    }

    fn embed_backward(&self, g: &mut [f64], input: &ModelInput, dx: &[f64]) {
        let d = self.config.dim;
        for (i, (id, tag)) in input.ids.iter().zip(&input.tags).enumerate() {
            let row = &dx[i * d..(i + 1) * d];
            let tok = self.layout.tok + *id as usize * d;
            let pos = self.layout.pos + i * d;
            let lang = self.layout.lang + tag.index() * d;
            add_into(&mut g[tok..tok + d], row);
            add_into(&mut g[pos..pos + d], row);
            add_into(&mut g[lang..lang + d], row);
        }
    }

    fn encoder_forward(&self, input: &ModelInput) -> (Vec<f64>, EncCache) {
        let p = &self.params;
        let n = input.ids.len();
        let mut x = self.embed(input);
        let mut layers = Vec::with_capacity(self.layout.enc.len());
        for l in &self.layout.enc {
            let (a, ln1) = l.ln1.forward(p, &x);
            let (s, attn) = l.attn.forward(p, &a, &a, false);
            add_into(&mut x, &s);
            let (b, ln2) = l.ln2.forward(p, &x);
            let (f, ffn) = l.ffn.forward(p, &b, n);
            add_into(&mut x, &f);
            layers.push(EncLayerCache { ln1, a, attn, ln2, b, ffn });
        }
        let (out, ln) = self.layout.enc_ln.forward(p, &x);
        (out, EncCache { layers, ln })
    }

    fn encoder_backward(&self, g: &mut [f64], input: &ModelInput, cache: &EncCache, dout: &[f64]) {
        let p = &self.params;
        let n = input.ids.len();
        let mut dx = self.layout.enc_ln.backward(p, g, &cache.ln, dout);
        for (l, c) in self.layout.enc.iter().zip(&cache.layers).rev() {
            let db = l.ffn.backward(p, g, &c.b, n, &c.ffn, &dx);
            add_into(&mut dx, &l.ln2.backward(p, g, &c.ln2, &db));
            let (da1, da2) = l.attn.backward(p, g, &c.a, &c.a, &c.attn, &dx);
            let mut da = da1;
            add_into(&mut da, &da2);
            add_into(&mut dx, &l.ln1.backward(p, g, &c.ln1, &da));
        }
        self.embed_backward(g, input, &dx);
    }

    fn decoder_forward(&self, dec: usize, input: &ModelInput, memory: &[f64]) -> (Vec<f64>, DecCache) {
        let p = &self.params;
        let n = input.ids.len();
        let stack = &self.layout.decoders[dec];
        let mut x = self.embed(input);
        let mut layers = Vec::with_capacity(stack.layers.len());
        for l in &stack.layers {
            let (a, ln1) = l.ln1.forward(p, &x);
            let (s, self_attn) = l.self_attn.forward(p, &a, &a, true);
            add_into(&mut x, &s);
            let (b, ln2) = l.ln2.forward(p, &x);
            let (c, cross) = l.cross.forward(p, &b, memory, false);
            add_into(&mut x, &c);
            let (e, ln3) = l.ln3.forward(p, &x);
            let (f, ffn) = l.ffn.forward(p, &e, n);
            add_into(&mut x, &f);
            layers.push(DecLayerCache {
                ln1,
                a,
                self_attn,
                ln2,
                b,
                cross,
                ln3,
                e,
                ffn,
            });
        }
        let (out, ln) = stack.ln.forward(p, &x);
        (out, DecCache { layers, ln })
    }

    /// Returns the gradient with respect to the encoder memory.
    fn decoder_backward(&self, g: &mut [f64], dec: usize, input: &ModelInput, memory: &[f64], cache: &DecCache, dout: &[f64]) -> Vec<f64> {
        let p = &self.params;
        let n = input.ids.len();
        let stack = &self.layout.decoders[dec];
        let mut dmem = vec![0.0; memory.len()];
        let mut dx = stack.ln.backward(p, g, &cache.ln, dout);
        for (l, c) in stack.layers.iter().zip(&cache.layers).rev() {
            let de = l.ffn.backward(p, g, &c.e, n, &c.ffn, &dx);
            add_into(&mut dx, &l.ln3.backward(p, g, &c.ln3, &de));
            let (db, dm) = l.cross.backward(p, g, &c.b, memory, &c.cross, &dx);
            add_into(&mut dmem, &dm);
            add_into(&mut dx, &l.ln2.backward(p, g, &c.ln2, &db));
            let (da1, da2) = l.self_attn.backward(p, g, &c.a, &c.a, &c.self_attn, &dx);
            let mut da = da1;
            add_into(&mut da, &da2);
            add_into(&mut dx, &l.ln1.backward(p, g, &c.ln1, &da));
        }
        self.embed_backward(g, input, &dx);
        dmem
    }

    /// Logits `h·Eᵀ + b` for the rows of `h`.
    pub(crate) fn project(&self, h: &[f64]) -> Vec<f64> {
        let (d, v) = (self.config.dim, self.config.vocab_size);
        let n = h.len() / d;
        let mut logits = vec![0.0; n * v];
        let emb = &self.params[self.layout.tok..self.layout.tok + v * d];
        gemm(n, d, v, h, false, emb, true, 0.0, &mut logits);
        let bias = &self.params[self.layout.out_bias..self.layout.out_bias + v];
        for row in logits.chunks_exact_mut(v) {
            add_into(row, bias);
        }
        logits
    }

    fn project_backward(&self, g: &mut [f64], h: &[f64], dlogits: &[f64]) -> Vec<f64> {
        let (d, v) = (self.config.dim, self.config.vocab_size);
        let n = h.len() / d;
        let tok = self.layout.tok;
        gemm(v, n, d, dlogits, true, h, false, 1.0, &mut g[tok..tok + v * d]);
        sum_rows_into(&mut g[self.layout.out_bias..self.layout.out_bias + v], dlogits);
        let mut dh = vec![0.0; n * d];
        gemm(n, v, d, dlogits, false, &self.params[tok..tok + v * d], false, 0.0, &mut dh);
        dh
    }

    /// Final encoder states (`len × dim`, row-major).
    pub fn encode_states(&self, input: &ModelInput) -> Result<Vec<f64>, NeuralError> {
        self.check_input(input)?;
        Ok(self.encoder_forward(input).0)
    }

    /// Teacher-forced decoder logits (`len(tgt) × vocab`); row `i` predicts the token
    /// after `tgt.ids[i]`.
    pub fn decoder_logits(&self, src: &ModelInput, tgt: &ModelInput) -> Result<Vec<f64>, NeuralError> {
        self.check_input(src)?;
        self.check_input(tgt)?;
        let (memory, _) = self.encoder_forward(src);
        let dec = self.decoder_index(tgt.tags.first().copied().ok_or(NeuralError::EmptyTarget)?);
        let (h, _) = self.decoder_forward(dec, tgt, &memory);
        Ok(self.project(&h))
    }

    /// Summed cross-entropy for `spec`, without gradients.
    pub fn loss(&self, spec: LossSpec<'_>) -> Result<LossReport, NeuralError> {
        self.run(spec, None)
    }

    /// Adds `scale · ∂loss/∂θ` to `grads` and returns the (unscaled) loss.
    pub fn accumulate_grad(&self, spec: LossSpec<'_>, scale: f64, grads: &mut [f64]) -> Result<LossReport, NeuralError> {
        assert_eq!(grads.len(), self.layout.total, "gradient buffer has the wrong size");
        self.run(spec, Some((scale, grads)))
    }

    /// Gradient of `scale · loss` for every parameter; `grad_norm` is filled in.
    pub fn grad(&self, spec: LossSpec<'_>, scale: f64) -> Result<(LossReport, Vec<f64>), NeuralError> {
        let mut g = vec![0.0; self.layout.total];
        let mut report = self.accumulate_grad(spec, scale, &mut g)?;
        report.grad_norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        Ok((report, g))
    }

    fn run(&self, spec: LossSpec<'_>, grads: Option<(f64, &mut [f64])>) -> Result<LossReport, NeuralError> {
        match spec {
            LossSpec::Sequence { src, tgt } => self.run_sequence(src, tgt, grads),
            LossSpec::Masked { input, targets } => self.run_masked(input, targets, grads),
        }
    }

    fn run_sequence(&self, src: &ModelInput, tgt: &ModelInput, grads: Option<(f64, &mut [f64])>) -> Result<LossReport, NeuralError> {
        self.check_input(src)?;
        self.check_input(tgt)?;
        if tgt.ids.len() < 2 || src.ids.is_empty() {
            return Err(NeuralError::EmptyTarget);
        }
        let m = tgt.ids.len() - 1;
        let dec_in = ModelInput {
            ids: tgt.ids[..m].to_vec(),
            tags: tgt.tags[..m].to_vec(),
        };
        let targets: Vec<Option<u32>> = tgt.ids[1..].iter().map(|&t| (t != PAD).then_some(t)).collect();
        let dec = self.decoder_index(tgt.tags[0]);
        let (memory, enc_cache) = self.encoder_forward(src);
        let (h, dec_cache) = self.decoder_forward(dec, &dec_in, &memory);
        let logits = self.project(&h);
        let (loss, tokens, dlogits) = cross_entropy(&logits, self.config.vocab_size, &targets, grads.is_some());
        check_loss(loss, tokens)?;
        if let Some((scale, g)) = grads {
            let dlogits: Vec<f64> = dlogits.into_iter().map(|x| x * scale).collect();
            let dh = self.project_backward(g, &h, &dlogits);
            let dmem = self.decoder_backward(g, dec, &dec_in, &memory, &dec_cache, &dh);
            self.encoder_backward(g, src, &enc_cache, &dmem);
        }
        Ok(LossReport::new("sequence", loss, tokens))
    }

    fn run_masked(&self, input: &ModelInput, targets: &[(usize, u32)], grads: Option<(f64, &mut [f64])>) -> Result<LossReport, NeuralError> {
        self.check_input(input)?;
        if targets.is_empty() {
            return Err(NeuralError::EmptyMaskSet);
        }
        let n = input.ids.len();
        if let Some((p, _)) = targets.iter().find(|(p, _)| *p >= n) {
            return Err(NeuralError::InvalidInput(format!("mask position {p} outside a sequence of length {n}")));
        }
        let d = self.config.dim;
        let (states, cache) = self.encoder_forward(input);
        let mut h = Vec::with_capacity(targets.len() * d);
        for (p, _) in targets {
            h.extend_from_slice(&states[p * d..(p + 1) * d]);
        }
        let logits = self.project(&h);
        let tgt: Vec<Option<u32>> = targets.iter().map(|(_, t)| Some(*t)).collect();
        let (loss, tokens, dlogits) = cross_entropy(&logits, self.config.vocab_size, &tgt, grads.is_some());
        check_loss(loss, tokens)?;
        if let Some((scale, g)) = grads {
            let dlogits: Vec<f64> = dlogits.into_iter().map(|x| x * scale).collect();
            let dh = self.project_backward(g, &h, &dlogits);
            let mut dstates = vec![0.0; n * d];
            for (k, (p, _)) in targets.iter().enumerate() {
                add_into(&mut dstates[p * d..(p + 1) * d], &dh[k * d..(k + 1) * d]);
            }
            self.encoder_backward(g, input, &cache, &dstates);
        }
        Ok(LossReport::new("masked", loss, tokens))
    }

    pub(crate) fn layout(&self) -> &Layout {
        &self.layout
    }
}

fn check_loss(loss: f64, tokens: usize) -> Result<(), NeuralError> {
    if tokens == 0 {
        return Err(NeuralError::EmptyTarget);
    }
    if !loss.is_finite() {
        return Err(NeuralError::NonFiniteLoss(loss));
    }
    Ok(())
}

/// Summed softmax cross-entropy over rows with a target; also `softmax - onehot` per row
/// (zero rows for skipped targets) when `want_grad`.
pub fn cross_entropy(logits: &[f64], vocab: usize, targets: &[Option<u32>], want_grad: bool) -> (f64, usize, Vec<f64>) {
    let mut loss = 0.0;
    let mut tokens = 0;
    let mut d = if want_grad { vec![0.0; logits.len()] } else { Vec::new() };
    for (i, t) in targets.iter().enumerate() {
        let Some(t) = *t else { continue };
        let row = &logits[i * vocab..(i + 1) * vocab];
        let lse = log_sum_exp(row);
        loss += lse - row[t as usize];
        tokens += 1;
        if want_grad {
            let drow = &mut d[i * vocab..(i + 1) * vocab];
            for (dx, &x) in drow.iter_mut().zip(row) {
                *dx = (x - lse).exp();
            }
            drow[t as usize] -= 1.0;
        }
    }
    (loss, tokens, d)
}
