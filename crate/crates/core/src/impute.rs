//! Denoising autoencoder imputation.
//!
//! A single bottleneck layer `d -> h -> d` with `tanh` on the encoder and a
//! linear decoder is trained to reconstruct clean rows from inputs whose
//! entries were zeroed at random. Zero entries of the original matrix are
//! then replaced by the (clamped) reconstruction; non-zero entries are
//! never touched.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::ExpressionMatrix;
use crate::seed::rng_from_seed;

const CHECKPOINT_MAGIC: &[u8; 8] = b"SSPCAAE1";
const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub bottleneck: usize,
    pub noise_mask_prob: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            bottleneck: 50,
            noise_mask_prob: 0.1,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

impl AutoencoderConfig {
    pub fn validate(&self, n_genes: usize) -> Result<()> {
        if self.bottleneck == 0 || self.bottleneck >= n_genes {
            return Err(Error::validation(format!(
                "bottleneck {} must be in [1, {n_genes})",
                self.bottleneck
            )));
        }
        if !(0.0..1.0).contains(&self.noise_mask_prob) {
            return Err(Error::validation(format!(
                "noise_mask_prob {} outside [0, 1)",
                self.noise_mask_prob
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::validation(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub gene_ids: Vec<String>,
    /// `d x h`
    pub encoder_weights: Array2<f64>,
    pub encoder_bias: Array1<f64>,
    /// `h x d`
    pub decoder_weights: Array2<f64>,
    pub decoder_bias: Array1<f64>,
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder_weights: Array2<f64>,
    pub encoder_bias: Array1<f64>,
    pub decoder_weights: Array2<f64>,
    pub decoder_bias: Array1<f64>,
}

impl AutoencoderModel {
    /// Glorot-uniform weights, zero biases.
    pub fn init(gene_ids: Vec<String>, bottleneck: usize, rng: &mut impl Rng) -> Self {
        let d = gene_ids.len();
        let limit = (6.0 / (d + bottleneck) as f64).sqrt();
        let mut draw = |rows, cols| {
            Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
        };
        let encoder_weights = draw(d, bottleneck);
        let decoder_weights = draw(bottleneck, d);
        Self {
            gene_ids,
            encoder_weights,
            encoder_bias: Array1::zeros(bottleneck),
            decoder_weights,
            decoder_bias: Array1::zeros(d),
        }
    }

    pub fn n_genes(&self) -> usize {
        self.encoder_weights.nrows()
    }

    pub fn bottleneck(&self) -> usize {
        self.encoder_weights.ncols()
    }

    fn hidden(&self, input: ArrayView2<f64>) -> Array2<f64> {
        let mut h = input.dot(&self.encoder_weights) + &self.encoder_bias;
        h.mapv_inplace(f64::tanh);
        h
    }

    pub fn reconstruct(&self, input: ArrayView2<f64>) -> Array2<f64> {
        self.hidden(input).dot(&self.decoder_weights) + &self.decoder_bias
    }

    /// Mean squared error of `reconstruct(input)` against `target` and its
    /// gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, input: ArrayView2<f64>, target: ArrayView2<f64>) -> (f64, Gradients) {
        let h = self.hidden(input);
        let out = h.dot(&self.decoder_weights) + &self.decoder_bias;
        let diff = out - target;
        let count = diff.len() as f64;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() / count;

        let d_out = diff * (2.0 / count);
        let decoder_weights = h.t().dot(&d_out);
        let decoder_bias = d_out.sum_axis(Axis(0));
        let mut d_pre = d_out.dot(&self.decoder_weights.t());
        d_pre.zip_mut_with(&h, |g, &a| *g *= 1.0 - a * a);
        let encoder_weights = input.t().dot(&d_pre);
        let encoder_bias = d_pre.sum_axis(Axis(0));
        (
            loss,
            Gradients {
                encoder_weights,
                encoder_bias,
                decoder_weights,
                decoder_bias,
            },
        )
    }

    fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.encoder_weights.as_slice_mut().expect("standard layout"),
            self.encoder_bias.as_slice_mut().expect("standard layout"),
            self.decoder_weights.as_slice_mut().expect("standard layout"),
            self.decoder_bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.encoder_weights.iter().all(|v| v.is_finite())
            && self.encoder_bias.iter().all(|v| v.is_finite())
            && self.decoder_weights.iter().all(|v| v.is_finite())
            && self.decoder_bias.iter().all(|v| v.is_finite())
    }

    /// Writes the checkpoint: magic, shapes, gene ids, then every parameter
    /// as little-endian `f64`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let io = |e| Error::io(path, e);
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&(self.n_genes() as u64).to_le_bytes());
        buf.extend_from_slice(&(self.bottleneck() as u64).to_le_bytes());
        for id in &self.gene_ids {
            buf.extend_from_slice(&(id.len() as u64).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
        }
        for v in self
            .encoder_weights
            .iter()
            .chain(&self.encoder_bias)
            .chain(&self.decoder_weights)
            .chain(&self.decoder_bias)
        {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let mut cur = Cursor { bytes: &bytes, pos: 0, path };
        if cur.take(8)? != CHECKPOINT_MAGIC {
            return Err(Error::validation(format!(
                "{} is not an autoencoder checkpoint",
                path.display()
            )));
        }
        let d = cur.u64()? as usize;
        let h = cur.u64()? as usize;
        let mut gene_ids = Vec::with_capacity(d);
        for _ in 0..d {
            let len = cur.u64()? as usize;
            let raw = cur.take(len)?;
            gene_ids.push(
                String::from_utf8(raw.to_vec())
                    .map_err(|_| Error::validation("gene id is not UTF-8"))?,
            );
        }
        let mut array = |rows: usize, cols: usize| -> Result<Array2<f64>> {
            let vals = (0..rows * cols).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            Ok(Array2::from_shape_vec((rows, cols), vals).expect("length matches shape"))
        };
        let encoder_weights = array(d, h)?;
        let encoder_bias = array(1, h)?.remove_axis(Axis(0));
        let decoder_weights = array(h, d)?;
        let decoder_bias = array(1, d)?.remove_axis(Axis(0));
        Ok(Self {
            gene_ids,
            encoder_weights,
            encoder_bias,
            decoder_weights,
            decoder_bias,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::validation(format!(
                "checkpoint {} is truncated",
                self.path.display()
            )));
        }
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

struct Adam {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: i32,
    learning_rate: f64,
}

impl Adam {
    fn new(model: &mut AutoencoderModel, learning_rate: f64) -> Self {
        let sizes: Vec<usize> = model.params_mut().iter().map(|p| p.len()).collect();
        Self {
            first: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            second: sizes.iter().map(|&s| vec![0.0; s]).collect(),
            step: 0,
            learning_rate,
        }
    }

    fn update(&mut self, model: &mut AutoencoderModel, grads: &Gradients) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        let grad_slices = [
            grads.encoder_weights.as_slice().expect("standard layout"),
            grads.encoder_bias.as_slice().expect("standard layout"),
            grads.decoder_weights.as_slice().expect("standard layout"),
            grads.decoder_bias.as_slice().expect("standard layout"),
        ];
        for (k, param) in model.params_mut().into_iter().enumerate() {
            let (m1, m2) = (&mut self.first[k], &mut self.second[k]);
            for (i, p) in param.iter_mut().enumerate() {
                let g = grad_slices[k][i];
                m1[i] = BETA1 * m1[i] + (1.0 - BETA1) * g;
                m2[i] = BETA2 * m2[i] + (1.0 - BETA2) * g * g;
                let m_hat = m1[i] / c1;
                let v_hat = m2[i] / c2;
                *p -= self.learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}

/// Trains on the rows of `m`. Returns the model and the mean training loss
/// of every epoch.
pub fn train(m: &ExpressionMatrix, cfg: &AutoencoderConfig) -> Result<(AutoencoderModel, Vec<f64>)> {
    cfg.validate(m.n_genes())?;
    if m.n_cells() < 2 {
        return Err(Error::validation("autoencoder training needs at least 2 cells"));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut model = AutoencoderModel::init(m.gene_ids().to_vec(), cfg.bottleneck, &mut rng);
    let mut adam = Adam::new(&mut model, cfg.learning_rate);
    let data = m.values();
    let mut order: Vec<usize> = (0..m.n_cells()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for rows in order.chunks(cfg.batch_size) {
            let clean = data.select(Axis(0), rows);
            let mut noisy = clean.clone();
            if cfg.noise_mask_prob > 0.0 {
                noisy.mapv_inplace(|v| {
                    if rng.random::<f64>() < cfg.noise_mask_prob {
                        0.0
                    } else {
                        v
                    }
                });
            }
            let (loss, grads) = model.loss_and_gradient(noisy.view(), clean.view());
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "non-finite loss in epoch {}; try a smaller learning rate than {}",
                    epoch + 1,
                    cfg.learning_rate
                )));
            }
            weighted += loss * rows.len() as f64;
            adam.update(&mut model, &grads);
        }
        losses.push(weighted / m.n_cells() as f64);
    }
    if !model.is_finite() {
        return Err(Error::Divergence(format!(
            "weights became non-finite; try a smaller learning rate than {}",
            cfg.learning_rate
        )));
    }
    Ok((model, losses))
}

/// Replaces zero entries with `max(0, reconstruction)`; non-zero entries are
/// copied unchanged.
pub fn impute_zeros(m: &ExpressionMatrix, model: &AutoencoderModel) -> Result<ExpressionMatrix> {
    if m.gene_ids() != model.gene_ids.as_slice() {
        return Err(Error::validation(
            "matrix genes differ from the genes the autoencoder was trained on",
        ));
    }
    let recon = model.reconstruct(m.values().view());
    let mut values = m.values().clone();
    values.zip_mut_with(&recon, |v, &r| {
        if *v == 0.0 {
            *v = r.max(0.0);
        }
    });
    m.with_values(values)
}
