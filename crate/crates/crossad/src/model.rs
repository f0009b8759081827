//! The three learnable components and their wiring: a temporal
//! convolutional encoder, a classifier head with a frozen centre, and a
//! domain discriminator fed through a gradient reversal layer.

use crate::data::Window;
use crate::error::{Error, Result};
use crate::nn::{relu, relu_backward, sigmoid, Adam, CausalConv1d, Linear, ParamVisitor};
use crate::rng::{stream_rng, STREAM_PARAM_INIT};
use ndarray::{Array1, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Encoder hyperparameters. One TCN block per (channel, dilation) pair:
/// causal dilated convolution plus a 1x1 skip projection when channel
/// counts differ, ReLU after the sum. The representation is a linear map
/// from the last block's final-timestep features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub input_dims: usize,
    pub window_size: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub dilations: Vec<usize>,
    pub repr_dim: usize,
}

impl EncoderConfig {
    pub fn paper_default(input_dims: usize) -> Self {
        EncoderConfig {
            input_dims,
            window_size: 100,
            channels: vec![128, 256, 512],
            kernel_size: 3,
            dilations: vec![1, 2, 4],
            repr_dim: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != self.dilations.len() {
            return Err(Error::InvalidParameter(format!(
                "{} channel sizes but {} dilations",
                self.channels.len(),
                self.dilations.len()
            )));
        }
        if self.channels.is_empty() {
            return Err(Error::InvalidParameter("no encoder blocks".into()));
        }
        let positive = [
            self.input_dims,
            self.window_size,
            self.kernel_size,
            self.repr_dim,
        ];
        if positive.contains(&0)
            || self.channels.contains(&0)
            || self.dilations.contains(&0)
        {
            return Err(Error::InvalidParameter(
                "encoder dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub head_hidden: usize,
    pub embed_dim: usize,
    pub disc_hidden: usize,
    pub grl_scale: f64,
    pub init_seed: u64,
}

impl ModelConfig {
    pub fn paper_default(input_dims: usize, init_seed: u64) -> Self {
        ModelConfig {
            encoder: EncoderConfig::paper_default(input_dims),
            head_hidden: 512,
            embed_dim: 128,
            disc_hidden: 256,
            grl_scale: 1.0,
            init_seed,
        }
    }

    /// Desk-scale configuration for fast end-to-end runs. Kernel 4 with
    /// dilations [1, 4, 16] tiles the last-timestep receptive field over
    /// 64 contiguous steps, so the readout sees the whole window.
    pub fn small(input_dims: usize, window_size: usize, init_seed: u64) -> Self {
        ModelConfig {
            encoder: EncoderConfig {
                input_dims,
                window_size,
                channels: vec![16, 32, 64],
                kernel_size: 4,
                dilations: vec![1, 4, 16],
                repr_dim: 64,
            },
            head_hidden: 32,
            embed_dim: 16,
            disc_hidden: 16,
            grl_scale: 1.0,
            init_seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.head_hidden == 0 || self.embed_dim == 0 || self.disc_hidden == 0 {
            return Err(Error::InvalidParameter(
                "head dimensions must be positive".into(),
            ));
        }
        if !self.grl_scale.is_finite() || self.grl_scale < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "grl_scale {} must be finite and >= 0",
                self.grl_scale
            )));
        }
        Ok(())
    }
}

/// Gradient reversal layer, forward half: the identity.
pub fn grl(x: &Array2<f64>) -> Array2<f64> {
    x.clone()
}

/// Gradient reversal layer, backward half: negate and scale by `mu`.
pub fn grl_backward(gy: &Array2<f64>, mu: f64) -> Array2<f64> {
    gy.mapv(|v| -mu * v)
}

fn relu3(x: &Array3<f64>) -> Array3<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu3_backward(gy: &Array3<f64>, y: &Array3<f64>) -> Array3<f64> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &out| {
        if out <= 0.0 {
            *g = 0.0;
        }
    });
    gx
}

#[derive(Debug, Clone)]
struct TcnBlock {
    conv: CausalConv1d,
    skip: Option<CausalConv1d>,
    act: Option<Array3<f64>>,
}

impl TcnBlock {
    fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        dilation: usize,
        rng: &mut impl rand::Rng,
    ) -> Self {
        let conv = CausalConv1d::new(in_ch, out_ch, kernel, dilation, rng);
        let skip = (in_ch != out_ch).then(|| CausalConv1d::new(in_ch, out_ch, 1, 1, rng));
        TcnBlock {
            conv,
            skip,
            act: None,
        }
    }

    fn forward(&self, x: &Array3<f64>) -> Array3<f64> {
        let mut pre = self.conv.forward(x);
        match &self.skip {
            Some(skip) => pre += &skip.forward(x),
            None => pre += x,
        }
        relu3(&pre)
    }

    fn forward_train(&mut self, x: &Array3<f64>) -> Array3<f64> {
        let mut pre = self.conv.forward_train(x);
        match &mut self.skip {
            Some(skip) => pre += &skip.forward_train(x),
            None => pre += x,
        }
        let y = relu3(&pre);
        self.act = Some(y.clone());
        y
    }

    fn backward(&mut self, gy: &Array3<f64>) -> Array3<f64> {
        let act = self.act.take().expect("backward without forward_train");
        let gh = relu3_backward(gy, &act);
        let mut gx = self.conv.backward(&gh);
        match &mut self.skip {
            Some(skip) => gx += &skip.backward(&gh),
            None => gx += &gh,
        }
        gx
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        self.conv.visit_params(f);
        if let Some(skip) = &mut self.skip {
            skip.visit_params(f);
        }
    }

    fn param_count(&self) -> usize {
        self.conv.param_count() + self.skip.as_ref().map_or(0, |s| s.param_count())
    }
}

#[derive(Debug, Clone)]
struct Mlp {
    l1: Linear,
    l2: Linear,
    act: Option<Array2<f64>>,
}

impl Mlp {
    fn new(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut impl rand::Rng) -> Self {
        Mlp {
            l1: Linear::new(in_dim, hidden, rng),
            l2: Linear::new(hidden, out_dim, rng),
            act: None,
        }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        self.l2.forward(&relu(&self.l1.forward(x)))
    }

    fn forward_train(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let h = relu(&self.l1.forward_train(x));
        let y = self.l2.forward_train(&h);
        self.act = Some(h);
        y
    }

    fn backward(&mut self, gy: &Array2<f64>) -> Array2<f64> {
        let h = self.act.take().expect("backward without forward_train");
        let gh = self.l2.backward(gy);
        self.l1.backward(&relu_backward(&gh, &h))
    }

    fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        self.l1.visit_params(f);
        self.l2.visit_params(f);
    }

    fn param_count(&self) -> usize {
        self.l1.param_count() + self.l2.param_count()
    }
}

/// All learnable state plus the frozen centre.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    blocks: Vec<TcnBlock>,
    repr: Linear,
    head: Mlp,
    disc: Mlp,
    pub centre: Array1<f64>,
    repr_input_time: usize,
    disc_probs: Option<Array1<f64>>,
}

impl ModelState {
    /// Build a model with freshly initialized parameters drawn from the
    /// config's seed. The centre starts at zero until [`Self::init_centre`].
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.init_seed, STREAM_PARAM_INIT);
        let enc = &config.encoder;
        let mut blocks = Vec::with_capacity(enc.channels.len());
        let mut in_ch = enc.input_dims;
        for (&out_ch, &dilation) in enc.channels.iter().zip(&enc.dilations) {
            blocks.push(TcnBlock::new(in_ch, out_ch, enc.kernel_size, dilation, &mut rng));
            in_ch = out_ch;
        }
        let repr = Linear::new(in_ch, enc.repr_dim, &mut rng);
        let head = Mlp::new(enc.repr_dim, config.head_hidden, config.embed_dim, &mut rng);
        let disc = Mlp::new(enc.repr_dim, config.disc_hidden, 1, &mut rng);
        let centre = Array1::zeros(config.embed_dim);
        Ok(ModelState {
            config,
            blocks,
            repr,
            head,
            disc,
            centre,
            repr_input_time: 0,
            disc_probs: None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(TcnBlock::param_count).sum::<usize>()
            + self.repr.param_count()
            + self.head.param_count()
            + self.disc.param_count()
    }

    /// Walk all (param, grad) pairs in the fixed order shared by the
    /// optimizer and the checkpoint format.
    pub fn visit_params(&mut self, f: &mut ParamVisitor<'_>) {
        for block in &mut self.blocks {
            block.visit_params(f);
        }
        self.repr.visit_params(f);
        self.head.visit_params(f);
        self.disc.visit_params(f);
    }

    pub fn zero_grads(&mut self) {
        self.visit_params(&mut |_, g| *g = 0.0);
    }

    pub fn optimizer(&self, lr: f64) -> Adam {
        Adam::new(lr, self.param_count())
    }

    /// Stack windows into a (batch, window, channels) tensor, validating
    /// shapes against the config.
    pub fn batch_tensor(&self, windows: &[&Window]) -> Result<Array3<f64>> {
        let ws = self.config.encoder.window_size;
        let d = self.config.encoder.input_dims;
        let mut x = Array3::zeros((windows.len(), ws, d));
        for (i, w) in windows.iter().enumerate() {
            if w.values.dim() != (ws, d) {
                return Err(Error::ShapeMismatch(format!(
                    "window {} is {}x{}, model expects {ws}x{d}",
                    w.entity_id,
                    w.values.nrows(),
                    w.values.ncols()
                )));
            }
            x.index_axis_mut(Axis(0), i).assign(&w.values);
        }
        Ok(x)
    }

    /// Representations for a batch tensor: (batch, repr_dim).
    pub fn encode_batch(&self, x: &Array3<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward(&h);
        }
        let last = h.index_axis(Axis(1), h.dim().1 - 1).to_owned();
        self.repr.forward(&last)
    }

    pub fn encode(&self, windows: &[&Window]) -> Result<Array2<f64>> {
        Ok(self.encode_batch(&self.batch_tensor(windows)?))
    }

    /// Classifier-space embeddings g(w) for a batch of representations.
    pub fn classify(&self, reprs: &Array2<f64>) -> Array2<f64> {
        self.head.forward(reprs)
    }

    /// Source-domain probabilities from the discriminator (its input is
    /// the gradient reversal layer's output, which forwards unchanged).
    pub fn discriminate(&self, reprs: &Array2<f64>) -> Array1<f64> {
        let z = self.disc.forward(&grl(reprs));
        z.index_axis(Axis(1), 0).mapv(sigmoid)
    }

    pub fn encode_train(&mut self, x: &Array3<f64>) -> Array2<f64> {
        let mut h = x.clone();
        for block in &mut self.blocks {
            h = block.forward_train(&h);
        }
        let time = h.dim().1;
        let last = h.index_axis(Axis(1), time - 1).to_owned();
        self.repr_input_time = time;
        self.repr.forward_train(&last)
    }

    /// Backpropagate a representation gradient through the encoder,
    /// accumulating parameter gradients.
    pub fn encoder_backward(&mut self, g_repr: &Array2<f64>) {
        let g_last = self.repr.backward(g_repr);
        let time = self.repr_input_time;
        let (batch, ch) = g_last.dim();
        let mut g = Array3::zeros((batch, time, ch));
        g.index_axis_mut(Axis(1), time - 1).assign(&g_last);
        for block in self.blocks.iter_mut().rev() {
            g = block.backward(&g);
        }
    }

    pub fn classify_train(&mut self, reprs: &Array2<f64>) -> Array2<f64> {
        self.head.forward_train(reprs)
    }

    /// Gradient w.r.t. the head's input representations.
    pub fn classifier_backward(&mut self, g_embed: &Array2<f64>) -> Array2<f64> {
        self.head.backward(g_embed)
    }

    pub fn discriminate_train(&mut self, reprs: &Array2<f64>) -> Array1<f64> {
        let z = self.disc.forward_train(&grl(reprs));
        let probs = z.index_axis(Axis(1), 0).mapv(sigmoid);
        self.disc_probs = Some(probs.clone());
        probs
    }

    /// Backpropagate a probability gradient through the logistic output
    /// and the discriminator, returning the gradient at the reversal
    /// layer's output side. The caller applies [`grl_backward`] to obtain
    /// the encoder-side gradient.
    pub fn discriminator_backward(&mut self, g_probs: &Array1<f64>) -> Array2<f64> {
        let probs = self
            .disc_probs
            .take()
            .expect("backward without discriminate_train");
        let gz = Array2::from_shape_fn((probs.len(), 1), |(i, _)| {
            g_probs[i] * probs[i] * (1.0 - probs[i])
        });
        self.disc.backward(&gz)
    }

    /// Set the frozen centre to the snapped mean embedding of the given
    /// normal windows.
    pub fn init_centre(&mut self, windows: &[&Window]) -> Result<Array1<f64>> {
        if windows.is_empty() {
            return Err(Error::EmptyInput("centre initialization batch".into()));
        }
        let embeddings = self.classify(&self.encode(windows)?);
        let mean = embeddings.mean_axis(Axis(0)).expect("nonempty batch");
        self.centre = snap_centre(mean);
        Ok(self.centre.clone())
    }

    /// Parameters (in walk order) followed by the centre, as one flat
    /// f64 vector.
    pub fn to_blob(&self) -> Vec<f64> {
        let mut blob = Vec::with_capacity(self.param_count() + self.centre.len());
        self.visit_params_ref(&mut |p| blob.push(*p));
        blob.extend(self.centre.iter());
        blob
    }

    // read-only mirror of visit_params, same order
    fn visit_params_ref(&self, f: &mut dyn FnMut(&f64)) {
        let conv_ref = |c: &CausalConv1d, f: &mut dyn FnMut(&f64)| {
            c.w.iter().chain(c.b.iter()).for_each(|v| f(v));
        };
        let linear_ref = |l: &Linear, f: &mut dyn FnMut(&f64)| {
            l.w.iter().chain(l.b.iter()).for_each(|v| f(v));
        };
        for block in &self.blocks {
            conv_ref(&block.conv, f);
            if let Some(skip) = &block.skip {
                conv_ref(skip, f);
            }
        }
        linear_ref(&self.repr, f);
        linear_ref(&self.head.l1, f);
        linear_ref(&self.head.l2, f);
        linear_ref(&self.disc.l1, f);
        linear_ref(&self.disc.l2, f);
    }

    /// Hex SHA-256 of the parameter blob, identifying the trained model.
    pub fn model_hash(&self) -> String {
        sha256_hex(&blob_bytes(&self.to_blob()))
    }
}

/// Snap small-magnitude coordinates away from zero: |c_i| < 0.1 becomes
/// ±0.1, keeping the sign (+ for exact zero).
pub fn snap_centre(mean: Array1<f64>) -> Array1<f64> {
    mean.mapv(|c| {
        if c.abs() < 0.1 {
            if c < 0.0 {
                -0.1
            } else {
                0.1
            }
        } else {
            c
        }
    })
}

fn blob_bytes(blob: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(blob.len() * 8);
    for v in blob {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointManifest {
    format_version: u32,
    seed: u64,
    config: ModelConfig,
    param_count: usize,
    centre_dim: usize,
    blob_sha256: String,
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{name}.json"))
}

/// Persist parameters, centre, and config. The blob is raw little-endian
/// f64 in walk order; the sibling `<name>.json` manifest carries the
/// config and a SHA-256 of the blob.
pub fn save_checkpoint(state: &ModelState, path: &Path) -> Result<()> {
    let blob = state.to_blob();
    let bytes = blob_bytes(&blob);
    let manifest = CheckpointManifest {
        format_version: 1,
        seed: state.config.init_seed,
        config: state.config.clone(),
        param_count: state.param_count(),
        centre_dim: state.centre.len(),
        blob_sha256: sha256_hex(&bytes),
    };
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| Error::io(format!("creating {}", parent.display()), e))?;
        }
    }
    std::fs::write(path, &bytes)
        .map_err(|e| Error::io(format!("writing checkpoint {}", path.display()), e))?;
    let manifest_text =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(manifest_path(path), manifest_text)
        .map_err(|e| Error::io(format!("writing manifest for {}", path.display()), e))
}

/// Rebuild a model bit-exactly from [`save_checkpoint`] output.
pub fn load_checkpoint(path: &Path) -> Result<ModelState> {
    let mpath = manifest_path(path);
    let text = std::fs::read_to_string(&mpath)
        .map_err(|e| Error::io(format!("reading manifest {}", mpath.display()), e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: mpath.display().to_string(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != 1 {
        return Err(Error::Corrupt {
            path: mpath.display().to_string(),
            reason: format!("unsupported format version {}", manifest.format_version),
        });
    }
    let mut state = ModelState::new(manifest.config)?;
    if state.param_count() != manifest.param_count
        || state.centre.len() != manifest.centre_dim
    {
        return Err(Error::Corrupt {
            path: mpath.display().to_string(),
            reason: format!(
                "manifest declares {} params / centre {}, config implies {} / {}",
                manifest.param_count,
                manifest.centre_dim,
                state.param_count(),
                state.centre.len()
            ),
        });
    }
    let bytes = std::fs::read(path)
        .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
    let expected_len = (manifest.param_count + manifest.centre_dim) * 8;
    if bytes.len() != expected_len {
        return Err(Error::Corrupt {
            path: path.display().to_string(),
            reason: format!("expected {expected_len} bytes, found {}", bytes.len()),
        });
    }
    if sha256_hex(&bytes) != manifest.blob_sha256 {
        return Err(Error::Corrupt {
            path: path.display().to_string(),
            reason: "checksum mismatch".into(),
        });
    }
    let blob: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let mut it = blob.iter();
    state.visit_params(&mut |p, _| *p = *it.next().expect("length checked"));
    for c in state.centre.iter_mut() {
        *c = *it.next().expect("length checked");
    }
    if let Some(bad) = state.to_blob().iter().find(|v| !v.is_finite()) {
        return Err(Error::Corrupt {
            path: path.display().to_string(),
            reason: format!("non-finite parameter {bad}"),
        });
    }
    Ok(state)
}
