//! Batting strategy conversion model.
//!
//! A 9 -> 100 -> 100 -> 7 ReLU network maps a batter's reduced ability
//! vector plus a requested change in alpha and wOBA to the change in the
//! reduced vector. It is trained on every pair of players in a pool, each
//! pair read as "the same batter under two strategies".

use std::io::Write;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ability::{alpha, woba, AbilityError, AbilityVector, RunValues, WobaWeights, SUM_TOLERANCE};

pub const INPUT_DIM: usize = 9;
pub const HIDDEN_DIM: usize = 100;
pub const OUTPUT_DIM: usize = 7;
pub const ARCHITECTURE: [usize; 4] = [INPUT_DIM, HIDDEN_DIM, HIDDEN_DIM, OUTPUT_DIM];
pub const INPUT_ORDER: [&str; INPUT_DIM] = ["1b", "2b", "3b", "hr", "bb", "k", "g", "d_alpha", "d_woba"];
pub const OUTPUT_ORDER: [&str; OUTPUT_DIM] = ["1b", "2b", "3b", "hr", "bb", "k", "g"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConverterError {
    #[error("at least two players are required, got {0}")]
    InsufficientPlayers(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("dataset has {0} samples; at least 10 are required")]
    DatasetTooSmall(usize),
    #[error("wOBA change must be <= 0, got {0}")]
    InvalidCost(f64),
    #[error("conversion produced a degenerate vector: {0}")]
    ProjectionFailure(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ability(#[from] AbilityError),
}

pub type Result<T> = std::result::Result<T, ConverterError>;

/// The seven free components of an ability vector; the fly-out
/// probability is whatever remains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReducedVector(pub [f64; OUTPUT_DIM]);

impl ReducedVector {
    pub fn of(p: &AbilityVector) -> Self {
        let c = p.components();
        Self(std::array::from_fn(|i| c[i]))
    }

    pub fn fly_out(&self) -> f64 {
        1.0 - self.0.iter().sum::<f64>()
    }
}

/// Weights of the penalty terms in the training loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// Penalty on negative probabilities in the converted vector.
    pub w_neg: f64,
    /// Penalty on the squared wOBA error of the converted vector.
    pub w_woba: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { w_neg: 0.1, w_woba: 0.5 }
    }
}

/// One training pair: source vector, the alpha/wOBA change to the
/// destination, and the reduced-vector delta as the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConversionSample {
    pub input: [f64; INPUT_DIM],
    pub target: [f64; OUTPUT_DIM],
}

impl ConversionSample {
    pub fn new(source: &AbilityVector, dest: &AbilityVector, rv: &RunValues, w: &WobaWeights) -> Result<Self> {
        let d_alpha = alpha(dest, rv)? - alpha(source, rv)?;
        let d_woba = woba(dest, w) - woba(source, w);
        let s = ReducedVector::of(source).0;
        let d = ReducedVector::of(dest).0;
        let mut input = [0.0; INPUT_DIM];
        input[..OUTPUT_DIM].copy_from_slice(&s);
        input[7] = d_alpha;
        input[8] = d_woba;
        Ok(Self {
            input,
            target: std::array::from_fn(|i| d[i] - s[i]),
        })
    }

    pub fn source(&self) -> ReducedVector {
        ReducedVector(std::array::from_fn(|i| self.input[i]))
    }

    pub fn d_alpha(&self) -> f64 {
        self.input[7]
    }

    pub fn d_woba(&self) -> f64 {
        self.input[8]
    }
}

/// Draws `n` synthetic player-season vectors from a three-factor model
/// (overall quality, contact-versus-power style, plate discipline) with
/// per-component noise. Draws outside realistic wOBA and alpha ranges are
/// rejected.
pub fn synthesize_players<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Vec<AbilityVector>> {
    if n < 2 {
        return Err(ConverterError::InsufficientPlayers(n));
    }
    let rv = RunValues::default();
    let w = WobaWeights::default();
    let noise = Normal::new(0.0, 0.08).expect("valid sd");
    let mut players = Vec::with_capacity(n);
    while players.len() < n {
        let quality: f64 = StandardNormal.sample(rng);
        let style: f64 = StandardNormal.sample(rng);
        let eye: f64 = StandardNormal.sample(rng);
        let speed: f64 = StandardNormal.sample(rng);
        let mut e = |base: f64, exponent: f64| base * (exponent + noise.sample(rng)).exp();
        let single = e(0.150, 0.08 * quality + 0.14 * style);
        let double = e(0.045, 0.14 * quality - 0.10 * style);
        let triple = e(0.004, 0.10 * quality + 0.35 * speed);
        let home_run = e(0.024, 0.38 * quality - 0.50 * style);
        let walk = e(0.088, 0.12 * quality + 0.22 * eye - 0.12 * style);
        let strikeout = e(0.190, -0.12 * quality - 0.25 * style + 0.10 * eye);
        let on_base = single + double + triple + home_run + walk;
        let rest = 1.0 - on_base - strikeout;
        if rest <= 0.25 {
            continue;
        }
        let ground_share = (0.55 + 0.06 * style + 0.03 * noise.sample(rng)).clamp(0.3, 0.8);
        let p = [
            single,
            double,
            triple,
            home_run,
            walk,
            strikeout,
            rest * ground_share,
            rest * (1.0 - ground_share),
        ];
        let v = match AbilityVector::try_new(p) {
            Ok(v) => v,
            Err(_) => {
                let sum: f64 = p.iter().sum();
                match AbilityVector::try_new(p.map(|x| x / sum)) {
                    Ok(v) => v,
                    Err(_) => continue,
                }
            }
        };
        let wo = woba(&v, &w);
        let a = alpha(&v, &rv)?;
        if (0.230..=0.420).contains(&wo) && (0.35..=0.85).contains(&a) {
            players.push(v);
        }
    }
    Ok(players)
}

/// One sample per unordered pair, oriented so the destination has the
/// lower (or equal) wOBA. Ties in wOBA put the lower-alpha player first.
pub fn build_pair_dataset(vectors: &[AbilityVector], rv: &RunValues, w: &WobaWeights) -> Result<Vec<ConversionSample>> {
    if vectors.len() < 2 {
        return Err(ConverterError::InsufficientPlayers(vectors.len()));
    }
    let stats: Vec<(f64, f64)> = vectors
        .iter()
        .map(|v| Ok((woba(v, w), alpha(v, rv)?)))
        .collect::<std::result::Result<_, AbilityError>>()?;
    let mut samples = Vec::with_capacity(vectors.len() * (vectors.len() - 1) / 2);
    for i in 0..vectors.len() {
        for j in (i + 1)..vectors.len() {
            let (wi, ai) = stats[i];
            let (wj, aj) = stats[j];
            let i_first = wi > wj || (wi == wj && ai <= aj);
            let (src, dst) = if i_first { (i, j) } else { (j, i) };
            samples.push(ConversionSample::new(&vectors[src], &vectors[dst], rv, w)?);
        }
    }
    Ok(samples)
}

/// Writes samples as CSV: nine input columns then seven target columns.
pub fn write_pair_csv<W: Write>(samples: &[ConversionSample], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = INPUT_ORDER.iter().map(|c| format!("in_{c}")).collect();
    header.extend(OUTPUT_ORDER.iter().map(|c| format!("delta_{c}")));
    w.write_record(&header)?;
    for s in samples {
        let row: Vec<String> = s.input.iter().chain(s.target.iter()).map(|x| x.to_string()).collect();
        w.write_record(&row)?;
    }
    w.flush()
}

/// Dense layer computing `x . weights + bias`; weights are `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn he<R: Rng + ?Sized>(inputs: usize, outputs: usize, gain: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, gain * (2.0 / inputs as f64).sqrt()).expect("valid sd");
        Self {
            weights: Array2::from_shape_simple_fn((inputs, outputs), || normal.sample(rng)),
            bias: Array1::zeros(outputs),
        }
    }

    fn len(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConverterMetadata {
    pub input_order: Vec<String>,
    pub output_order: Vec<String>,
    pub loss_weights: LossWeights,
    pub woba_weights: WobaWeights,
    pub training_seed: Option<u64>,
}

impl Default for ConverterMetadata {
    fn default() -> Self {
        Self {
            input_order: INPUT_ORDER.iter().map(|s| s.to_string()).collect(),
            output_order: OUTPUT_ORDER.iter().map(|s| s.to_string()).collect(),
            loss_weights: LossWeights::default(),
            woba_weights: WobaWeights::default(),
            training_seed: None,
        }
    }
}

/// Network weights: three dense layers, ReLU after the first two.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverterParams {
    layers: Vec<Dense>,
    pub metadata: ConverterMetadata,
}

impl ConverterParams {
    pub fn zeros() -> Self {
        Self {
            layers: ARCHITECTURE.windows(2).map(|d| Dense::zeros(d[0], d[1])).collect(),
            metadata: ConverterMetadata::default(),
        }
    }

    /// He-normal initialisation; the output layer is scaled down because
    /// targets are small probability deltas.
    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let layers = vec![
            Dense::he(INPUT_DIM, HIDDEN_DIM, 1.0, rng),
            Dense::he(HIDDEN_DIM, HIDDEN_DIM, 1.0, rng),
            Dense::he(HIDDEN_DIM, OUTPUT_DIM, 0.1, rng),
        ];
        Self {
            layers,
            metadata: ConverterMetadata::default(),
        }
    }

    pub fn from_layers(layers: Vec<Dense>, metadata: ConverterMetadata) -> Result<Self> {
        let p = Self { layers, metadata };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    fn check_shapes(&self) -> Result<()> {
        if self.layers.len() != 3 {
            return Err(ConverterError::ShapeMismatch(format!("expected 3 layers, found {}", self.layers.len())));
        }
        for (k, (layer, dims)) in self.layers.iter().zip(ARCHITECTURE.windows(2)).enumerate() {
            if layer.weights.dim() != (dims[0], dims[1]) || layer.bias.len() != dims[1] {
                return Err(ConverterError::ShapeMismatch(format!(
                    "layer {k}: weights {:?}, bias {}; expected ({}, {}), {}",
                    layer.weights.dim(),
                    layer.bias.len(),
                    dims[0],
                    dims[1],
                    dims[1]
                )));
            }
            if layer.weights.iter().chain(layer.bias.iter()).any(|x| !x.is_finite()) {
                return Err(ConverterError::ShapeMismatch(format!("layer {k} has non-finite values")));
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Dense::len).sum()
    }

    /// Flat parameter access (layer by layer, weights row-major then bias).
    pub fn parameter(&self, k: usize) -> f64 {
        let (layer, off) = self.locate(k);
        let l = &self.layers[layer];
        if off < l.weights.len() {
            l.weights.as_slice().expect("standard layout")[off]
        } else {
            l.bias[off - l.weights.len()]
        }
    }

    pub fn parameter_mut(&mut self, k: usize) -> &mut f64 {
        let (layer, off) = self.locate(k);
        let l = &mut self.layers[layer];
        let nw = l.weights.len();
        if off < nw {
            &mut l.weights.as_slice_mut().expect("standard layout")[off]
        } else {
            &mut l.bias[off - nw]
        }
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (i, l) in self.layers.iter().enumerate() {
            if k < l.len() {
                return (i, k);
            }
            k -= l.len();
        }
        panic!("parameter index out of range");
    }

    fn forward_batch(&self, x: &Array2<f64>) -> Activations {
        let [l1, l2, l3] = [&self.layers[0], &self.layers[1], &self.layers[2]];
        let z1 = x.dot(&l1.weights) + &l1.bias;
        let h1 = z1.mapv(relu);
        let z2 = h1.dot(&l2.weights) + &l2.bias;
        let h2 = z2.mapv(relu);
        let y = h2.dot(&l3.weights) + &l3.bias;
        Activations { z1, h1, z2, h2, y }
    }

    /// Folds an input standardisation `(x - mean) / scale` into the first
    /// layer so the returned network accepts raw inputs.
    fn fold_input_scaling(&self, mean: &Array1<f64>, scale: &Array1<f64>) -> Self {
        let mut out = self.clone();
        let l1 = &mut out.layers[0];
        for i in 0..INPUT_DIM {
            let mut row = l1.weights.row_mut(i);
            row.mapv_inplace(|v| v / scale[i]);
        }
        let shift = mean.dot(&l1.weights);
        l1.bias = &l1.bias - &shift;
        out
    }
}

fn relu(v: f64) -> f64 {
    v.max(0.0)
}

struct Activations {
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    y: Array2<f64>,
}

/// Network output (predicted reduced-vector delta) for one input.
pub fn forward(params: &ConverterParams, input: &[f64]) -> Result<[f64; OUTPUT_DIM]> {
    params.check_shapes()?;
    if input.len() != INPUT_DIM {
        return Err(ConverterError::ShapeMismatch(format!(
            "input has {} entries, expected {}",
            input.len(),
            INPUT_DIM
        )));
    }
    let x = Array2::from_shape_vec((1, INPUT_DIM), input.to_vec()).expect("shape checked");
    let y = params.forward_batch(&x).y;
    Ok(std::array::from_fn(|i| y[[0, i]]))
}

/// Matrices for a batch: network input, raw source vectors, targets.
struct Batch {
    x: Array2<f64>,
    source: Array2<f64>,
    target: Array2<f64>,
}

impl Batch {
    fn from_samples<'a, I>(samples: I, n: usize) -> Self
    where
        I: IntoIterator<Item = &'a ConversionSample>,
    {
        let mut x = Array2::zeros((n, INPUT_DIM));
        let mut target = Array2::zeros((n, OUTPUT_DIM));
        for (r, s) in samples.into_iter().enumerate() {
            for c in 0..INPUT_DIM {
                x[[r, c]] = s.input[c];
            }
            for c in 0..OUTPUT_DIM {
                target[[r, c]] = s.target[c];
            }
        }
        let source = x.slice(ndarray::s![.., ..OUTPUT_DIM]).to_owned();
        Self { x, source, target }
    }

    fn len(&self) -> usize {
        self.x.nrows()
    }
}

fn woba_vector(w: &WobaWeights) -> Array1<f64> {
    Array1::from(vec![w.w_1b, w.w_2b, w.w_3b, w.w_hr, w.w_bb, 0.0, 0.0])
}

/// Loss terms summed over a batch (not yet averaged).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct LossTerms {
    squared: f64,
    negative: f64,
    woba: f64,
}

fn loss_terms(y: &Array2<f64>, batch: &Batch, wvec: &Array1<f64>) -> (LossTerms, Array2<f64>, Array1<f64>) {
    let diff = y - &batch.target;
    let result = &batch.source + y;
    let wd = diff.dot(wvec);
    let terms = LossTerms {
        squared: diff.iter().map(|d| d * d).sum(),
        negative: result.iter().map(|&r| (-r).max(0.0)).sum(),
        woba: wd.iter().map(|d| d * d).sum(),
    };
    (terms, diff, wd)
}

fn combine(t: &LossTerms, lw: &LossWeights, n: usize) -> f64 {
    (t.squared + lw.w_neg * t.negative + lw.w_woba * t.woba) / n as f64
}

/// Mean over the batch of squared delta error, weighted negative mass of
/// the converted vector, and weighted squared wOBA error.
pub fn loss(params: &ConverterParams, batch: &[ConversionSample], lw: &LossWeights, w: &WobaWeights) -> Result<f64> {
    if batch.is_empty() {
        return Err(ConverterError::EmptyBatch);
    }
    params.check_shapes()?;
    let b = Batch::from_samples(batch, batch.len());
    let y = params.forward_batch(&b.x).y;
    let (terms, _, _) = loss_terms(&y, &b, &woba_vector(w));
    Ok(combine(&terms, lw, b.len()))
}

/// Loss and its gradient by backpropagation. The gradient has the same
/// layout as the parameters.
pub fn loss_and_gradient(
    params: &ConverterParams,
    batch: &[ConversionSample],
    lw: &LossWeights,
    w: &WobaWeights,
) -> Result<(f64, ConverterParams)> {
    if batch.is_empty() {
        return Err(ConverterError::EmptyBatch);
    }
    params.check_shapes()?;
    let b = Batch::from_samples(batch, batch.len());
    Ok(backprop(params, &b, lw, &woba_vector(w)))
}

fn backprop(params: &ConverterParams, b: &Batch, lw: &LossWeights, wvec: &Array1<f64>) -> (f64, ConverterParams) {
    let n = b.len() as f64;
    let act = params.forward_batch(&b.x);
    let (terms, diff, wd) = loss_terms(&act.y, b, wvec);
    let value = combine(&terms, lw, b.len());

    let result = &b.source + &act.y;
    let mut dy = diff * 2.0;
    ndarray::Zip::from(&mut dy).and(&result).for_each(|d, &r| {
        if r < 0.0 {
            *d -= lw.w_neg;
        }
    });
    let wd2 = wd.insert_axis(Axis(1)) * (2.0 * lw.w_woba);
    dy = dy + wd2.dot(&wvec.view().insert_axis(Axis(0)));
    dy /= n;

    let [l2, l3] = [&params.layers[1], &params.layers[2]];
    let g3 = Dense {
        weights: act.h2.t().dot(&dy),
        bias: dy.sum_axis(Axis(0)),
    };
    let mut dz2 = dy.dot(&l3.weights.t());
    ndarray::Zip::from(&mut dz2).and(&act.z2).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    let g2 = Dense {
        weights: act.h1.t().dot(&dz2),
        bias: dz2.sum_axis(Axis(0)),
    };
    let mut dz1 = dz2.dot(&l2.weights.t());
    ndarray::Zip::from(&mut dz1).and(&act.z1).for_each(|d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    let g1 = Dense {
        weights: b.x.t().dot(&dz1),
        bias: dz1.sum_axis(Axis(0)),
    };
    let grad = ConverterParams {
        layers: vec![g1, g2, g3],
        metadata: params.metadata.clone(),
    };
    (value, grad)
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub loss_weights: LossWeights,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.003,
            momentum: 0.9,
            batch_size: 256,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.2,
            loss_weights: LossWeights::default(),
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.batch_size > 0
            && self.max_epochs > 0
            && self.validation_fraction > 0.0
            && self.validation_fraction < 1.0
            && self.loss_weights.w_neg >= 0.0
            && self.loss_weights.w_woba >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(ConverterError::InvalidConfig(format!("{self:?}")))
        }
    }
}

/// Validation-set quality of a trained converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetrics {
    pub n_train: usize,
    pub n_validation: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    /// Mean over samples of the summed squared error of the 7-component delta.
    pub validation_mse_reduced: f64,
    /// Mean squared wOBA error of the converted vector.
    pub validation_mse_woba: f64,
    /// Mean negative probability mass of the raw converted vector.
    pub validation_negative_mass_raw: f64,
    /// Mean negative probability mass after projection onto the simplex.
    pub validation_negative_mass_projected: f64,
}

/// Trains the converter: seeded 80/20 split, input standardisation,
/// mini-batch gradient descent with momentum, early stopping on the
/// validation loss. Returns the best-validation parameters.
pub fn train(
    dataset: &[ConversionSample],
    cfg: &TrainingConfig,
    w: &WobaWeights,
    seed: u64,
) -> Result<(ConverterParams, TrainingMetrics)> {
    cfg.validate()?;
    if dataset.len() < 10 {
        return Err(ConverterError::DatasetTooSmall(dataset.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((dataset.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, dataset.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();

    let raw_train = Batch::from_samples(train_idx.iter().map(|&i| &dataset[i]), train_idx.len());
    let mean = raw_train.x.mean_axis(Axis(0)).expect("non-empty");
    let scale = raw_train
        .x
        .std_axis(Axis(0), 0.0)
        .mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let standardise = |b: Batch| Batch {
        x: (&b.x - &mean) / &scale,
        ..b
    };
    let train_all = standardise(raw_train);
    let val = standardise(Batch::from_samples(val_idx.iter().map(|&i| &dataset[i]), val_idx.len()));
    drop(train_all.x.clone());

    let wvec = woba_vector(w);
    let lw = cfg.loss_weights;
    let mut params = ConverterParams::init(&mut rng);
    let mut velocity = ConverterParams::zeros();
    let val_loss = |p: &ConverterParams| {
        let y = p.forward_batch(&val.x).y;
        combine(&loss_terms(&y, &val, &wvec).0, &lw, val.len())
    };
    let mut best = (val_loss(&params), params.clone(), 0usize, f64::NAN);
    let mut since_best = 0;
    let mut epochs_run = 0;

    // Row positions inside `train_all` for the current epoch's order.
    let mut positions: Vec<usize> = (0..train_idx.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        positions.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in positions.chunks(cfg.batch_size) {
            let batch = Batch {
                x: train_all.x.select(Axis(0), chunk),
                source: train_all.source.select(Axis(0), chunk),
                target: train_all.target.select(Axis(0), chunk),
            };
            let (value, grad) = backprop(&params, &batch, &lw, &wvec);
            epoch_loss += value * chunk.len() as f64;
            for ((p, v), g) in params.layers.iter_mut().zip(velocity.layers.iter_mut()).zip(grad.layers.iter()) {
                v.weights *= cfg.momentum;
                v.weights.scaled_add(-cfg.learning_rate, &g.weights);
                v.bias *= cfg.momentum;
                v.bias.scaled_add(-cfg.learning_rate, &g.bias);
                p.weights += &v.weights;
                p.bias += &v.bias;
            }
        }
        let current = val_loss(&params);
        if !current.is_finite() {
            break;
        }
        if current < best.0 {
            best = (current, params.clone(), epoch, epoch_loss / train_idx.len() as f64);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }
    train_idx.clear();

    let (_, best_params, best_epoch, train_loss) = best;
    let mut raw = best_params.fold_input_scaling(&mean, &scale);
    raw.metadata = ConverterMetadata {
        loss_weights: lw,
        woba_weights: *w,
        training_seed: Some(seed),
        ..ConverterMetadata::default()
    };
    let val_samples: Vec<ConversionSample> = val_idx.iter().map(|&i| dataset[i]).collect();
    let mut metrics = evaluate(&raw, &val_samples, &lw, w)?;
    metrics.n_train = dataset.len() - n_val;
    metrics.epochs_run = epochs_run;
    metrics.best_epoch = best_epoch;
    metrics.train_loss = train_loss;
    Ok((raw, metrics))
}

/// Validation metrics of `params` on `samples` (training fields zeroed).
pub fn evaluate(
    params: &ConverterParams,
    samples: &[ConversionSample],
    lw: &LossWeights,
    w: &WobaWeights,
) -> Result<TrainingMetrics> {
    if samples.is_empty() {
        return Err(ConverterError::EmptyBatch);
    }
    let b = Batch::from_samples(samples, samples.len());
    let y = params.forward_batch(&b.x).y;
    let (terms, _, _) = loss_terms(&y, &b, &woba_vector(w));
    let n = samples.len() as f64;
    let mut projected_negative = 0.0;
    for (r, s) in samples.iter().enumerate() {
        let delta: [f64; OUTPUT_DIM] = std::array::from_fn(|c| y[[r, c]]);
        let raw = apply_delta(&s.source(), &delta);
        if let Ok(v) = project(raw) {
            projected_negative += v.components().iter().map(|&x| (-x).max(0.0)).sum::<f64>();
        }
    }
    Ok(TrainingMetrics {
        n_train: 0,
        n_validation: samples.len(),
        epochs_run: 0,
        best_epoch: 0,
        train_loss: f64::NAN,
        validation_loss: combine(&terms, lw, samples.len()),
        validation_mse_reduced: terms.squared / n,
        validation_mse_woba: terms.woba / n,
        validation_negative_mass_raw: terms.negative / n,
        validation_negative_mass_projected: projected_negative / n,
    })
}

fn apply_delta(source: &ReducedVector, delta: &[f64; OUTPUT_DIM]) -> [f64; 8] {
    let mut raw = [0.0; 8];
    for i in 0..OUTPUT_DIM {
        raw[i] = source.0[i] + delta[i];
    }
    raw[7] = source.fly_out() - delta.iter().sum::<f64>();
    raw
}

/// Clamps negative components to zero and renormalises. A vector that is
/// already a valid distribution is returned unchanged.
pub fn project(raw: [f64; 8]) -> Result<AbilityVector> {
    if raw.iter().any(|x| !x.is_finite()) {
        return Err(ConverterError::ProjectionFailure(format!("non-finite components {raw:?}")));
    }
    let sum: f64 = raw.iter().sum();
    if raw.iter().all(|&x| x >= 0.0) && (sum - 1.0).abs() <= SUM_TOLERANCE {
        return Ok(AbilityVector::try_new(raw)?);
    }
    let clamped = raw.map(|x| x.max(0.0));
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return Err(ConverterError::ProjectionFailure(format!("all components <= 0: {raw:?}")));
    }
    Ok(AbilityVector::try_new(clamped.map(|x| x / total))?)
}

/// Counterfactual ability vector for a batter asked to shift alpha by
/// `d_alpha` at a wOBA cost of `d_woba` (<= 0).
pub fn convert(params: &ConverterParams, p_n: &AbilityVector, d_alpha: f64, d_woba: f64) -> Result<AbilityVector> {
    if !(d_woba <= 0.0) || !d_alpha.is_finite() {
        return Err(ConverterError::InvalidCost(d_woba));
    }
    let source = ReducedVector::of(p_n);
    let mut input = [0.0; INPUT_DIM];
    input[..OUTPUT_DIM].copy_from_slice(&source.0);
    input[7] = d_alpha;
    input[8] = d_woba;
    let delta = forward(params, &input)?;
    let raw = if delta.iter().all(|&d| d == 0.0) {
        *p_n.components()
    } else {
        apply_delta(&source, &delta)
    };
    let v = project(raw)?;
    if v.out_probability() <= 0.0 {
        return Err(ConverterError::ProjectionFailure("converted batter never makes an out".into()));
    }
    Ok(v)
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsRepr {
    architecture: Vec<usize>,
    activation: String,
    layers: Vec<LayerRepr>,
    metadata: ConverterMetadata,
}

impl Serialize for ConverterParams {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        ParamsRepr {
            architecture: ARCHITECTURE.to_vec(),
            activation: "relu".into(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerRepr {
                    weights: l.weights.outer_iter().map(|r| r.to_vec()).collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ConverterParams {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let repr = ParamsRepr::deserialize(deserializer)?;
        if repr.architecture != ARCHITECTURE {
            return Err(D::Error::custom(format!("unsupported architecture {:?}", repr.architecture)));
        }
        let layers = repr
            .layers
            .into_iter()
            .map(|l| {
                let rows = l.weights.len();
                let cols = l.weights.first().map_or(0, Vec::len);
                if l.weights.iter().any(|r| r.len() != cols) {
                    return Err(D::Error::custom("ragged weight matrix"));
                }
                let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
                Ok(Dense {
                    weights: Array2::from_shape_vec((rows, cols), flat).map_err(D::Error::custom)?,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<std::result::Result<Vec<_>, D::Error>>()?;
        ConverterParams::from_layers(layers, repr.metadata).map_err(D::Error::custom)
    }
}
