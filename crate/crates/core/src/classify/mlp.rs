//! One-hidden-layer sigmoid network with two sigmoid outputs, trained on
//! one-hot targets by Levenberg-Marquardt on the sum of squared errors.
//!
//! Parameters are stored flat: for each hidden unit its input weights then
//! its bias, followed by each output unit's hidden weights then its bias.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_for;
use crate::stats::{mean, sample_std};

pub const OUTPUTS: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden_grid: Vec<usize>,
    pub mu_initial: f64,
    pub mu_increase: f64,
    pub mu_decrease: f64,
    pub mu_max: f64,
    pub max_epochs: usize,
    pub min_gradient: f64,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden_grid: vec![1, 2, 4, 8, 16],
            mu_initial: 1e-3,
            mu_increase: 10.0,
            mu_decrease: 10.0,
            mu_max: 1e10,
            max_epochs: 200,
            min_gradient: 1e-7,
            init_scale: 0.5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_grid.is_empty() || self.hidden_grid.contains(&0) {
            return Err(Error::invalid("hidden grid must be non-empty and positive"));
        }
        if !(self.mu_initial > 0.0 && self.mu_max > self.mu_initial) {
            return Err(Error::invalid("damping must be positive and below its maximum"));
        }
        if !(self.mu_increase > 1.0 && self.mu_decrease > 1.0) {
            return Err(Error::invalid("damping factors must exceed 1"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::invalid("init_scale must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPosterior {
    /// Class A first.
    pub p: [f64; 2],
}

impl ClassifierPosterior {
    /// Normalize raw outputs to sum one; all-zero outputs give (0.5, 0.5).
    pub fn from_outputs(raw: [f64; 2]) -> Self {
        let s = raw[0] + raw[1];
        if s > 0.0 {
            Self { p: [raw[0] / s, raw[1] / s] }
        } else {
            Self { p: [0.5, 0.5] }
        }
    }

    /// Argmax with ties going to class A.
    pub fn is_a(&self) -> bool {
        self.p[0] >= self.p[1]
    }
}

/// Per-feature z-scoring fitted on a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Zero-variance features get a scale of one.
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[&[f64]]) -> Self {
        let d = rows.first().map_or(0, |r| r.len());
        let mut col = Vec::with_capacity(rows.len());
        let (mut mu, mut sd) = (Vec::with_capacity(d), Vec::with_capacity(d));
        for f in 0..d {
            col.clear();
            col.extend(rows.iter().map(|r| r[f]));
            let m = mean(&col);
            let s = sample_std(&col);
            mu.push(m);
            sd.push(if s > 0.0 && s.is_finite() { s } else { 1.0 });
        }
        Self { mean: mu, std: sd }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Bare network weights; inputs are assumed already standardized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub input_dim: usize,
    pub hidden_n: usize,
    pub params: Vec<f64>,
}

impl Network {
    pub fn param_count(input_dim: usize, hidden_n: usize) -> usize {
        hidden_n * (input_dim + 1) + OUTPUTS * (hidden_n + 1)
    }

    pub fn random(input_dim: usize, hidden_n: usize, scale: f64, seed: u64) -> Self {
        let mut rng = rng_for(seed, &[input_dim as u64, hidden_n as u64]);
        let params = (0..Self::param_count(input_dim, hidden_n))
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self { input_dim, hidden_n, params }
    }

    fn output_offset(&self) -> usize {
        self.hidden_n * (self.input_dim + 1)
    }

    /// Hidden activations into `hidden` and the two sigmoid outputs.
    fn forward_into(&self, x: &[f64], hidden: &mut [f64]) -> [f64; 2] {
        let d = self.input_dim;
        for (j, h) in hidden.iter_mut().enumerate() {
            let w = &self.params[j * (d + 1)..(j + 1) * (d + 1)];
            let z = w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d];
            *h = sigmoid(z);
        }
        let off = self.output_offset();
        let hn = self.hidden_n;
        let mut y = [0.0; 2];
        for (o, yo) in y.iter_mut().enumerate() {
            let v = &self.params[off + o * (hn + 1)..off + (o + 1) * (hn + 1)];
            let z = v[..hn].iter().zip(hidden.iter()).map(|(a, b)| a * b).sum::<f64>() + v[hn];
            *yo = sigmoid(z);
        }
        y
    }

    pub fn forward(&self, x: &[f64]) -> [f64; 2] {
        let mut h = vec![0.0; self.hidden_n];
        self.forward_into(x, &mut h)
    }

    /// Analytic Jacobian of the outputs over `rows`: row `2n + o` holds
    /// d y_o(x_n) / d params.
    pub fn jacobian(&self, rows: &[&[f64]]) -> DMatrix<f64> {
        let (d, hn) = (self.input_dim, self.hidden_n);
        let off = self.output_offset();
        let mut jac = DMatrix::zeros(OUTPUTS * rows.len(), self.params.len());
        let mut h = vec![0.0; hn];
        for (n, x) in rows.iter().enumerate() {
            let y = self.forward_into(x, &mut h);
            for o in 0..OUTPUTS {
                let r = OUTPUTS * n + o;
                let s = y[o] * (1.0 - y[o]);
                let vo = off + o * (hn + 1);
                for j in 0..hn {
                    jac[(r, vo + j)] = s * h[j];
                    let dj = s * self.params[vo + j] * h[j] * (1.0 - h[j]);
                    for i in 0..d {
                        jac[(r, j * (d + 1) + i)] = dj * x[i];
                    }
                    jac[(r, j * (d + 1) + d)] = dj;
                }
                jac[(r, vo + hn)] = s;
            }
        }
        jac
    }
}

/// Trained classifier together with the feature names and scaling it expects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub feature_names: Vec<String>,
    pub standardizer: Standardizer,
    pub network: Network,
    pub epochs: usize,
    pub final_loss: f64,
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.network.input_dim
    }

    pub fn hidden_n(&self) -> usize {
        self.network.hidden_n
    }

    pub fn raw_outputs(&self, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input to classifier"));
        }
        Ok(self.network.forward(&self.standardizer.apply(x)))
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassifierPosterior> {
        Ok(ClassifierPosterior::from_outputs(self.raw_outputs(x)?))
    }

    /// Write `<path>` (JSON header) and `<path>.bin` (little-endian f64 weights).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bin = weights_path(path);
        let header = ModelHeader {
            input_dim: self.input_dim(),
            hidden_n: self.hidden_n(),
            outputs: OUTPUTS,
            param_count: self.network.params.len(),
            weights_file: bin.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            feature_names: self.feature_names.clone(),
            mean: self.standardizer.mean.clone(),
            std: self.standardizer.std.clone(),
            epochs: self.epochs,
            final_loss: self.final_loss,
        };
        std::fs::write(path, serde_json::to_vec_pretty(&header)?)?;
        let bytes: Vec<u8> = self.network.params.iter().flat_map(|w| w.to_le_bytes()).collect();
        std::fs::write(bin, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let header: ModelHeader = serde_json::from_slice(&std::fs::read(path)?)?;
        let bytes = std::fs::read(path.with_file_name(&header.weights_file))?;
        let expected = Network::param_count(header.input_dim, header.hidden_n);
        if header.outputs != OUTPUTS || header.param_count != expected || bytes.len() != 8 * expected {
            return Err(Error::Format {
                file: path.to_path_buf(),
                message: "weight file does not match header dimensions".into(),
            });
        }
        if header.feature_names.len() != header.input_dim
            || header.mean.len() != header.input_dim
            || header.std.len() != header.input_dim
        {
            return Err(Error::Format {
                file: path.to_path_buf(),
                message: "feature list does not match input_dim".into(),
            });
        }
        let params = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Ok(Self {
            feature_names: header.feature_names,
            standardizer: Standardizer { mean: header.mean, std: header.std },
            network: Network { input_dim: header.input_dim, hidden_n: header.hidden_n, params },
            epochs: header.epochs,
            final_loss: header.final_loss,
        })
    }
}

fn weights_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".bin");
    path.with_file_name(name)
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    input_dim: usize,
    hidden_n: usize,
    outputs: usize,
    param_count: usize,
    weights_file: String,
    feature_names: Vec<String>,
    mean: Vec<f64>,
    std: Vec<f64>,
    epochs: usize,
    final_loss: f64,
}

/// Per-epoch quantities of the network evaluated on the training set.
struct State {
    /// Hidden activations with a trailing 1, row-major N x (h + 1).
    hidden: Vec<f64>,
    outputs: Vec<[f64; 2]>,
    residuals: DVector<f64>,
    loss: f64,
}

struct Trainer<'a> {
    /// Standardized inputs with a trailing 1, row-major N x (d + 1).
    x: Vec<f64>,
    targets: Vec<[f64; 2]>,
    n: usize,
    d: usize,
    hn: usize,
    /// Gram matrix of the augmented inputs (dual form only).
    gram: Option<DMatrix<f64>>,
    cfg: &'a TrainConfig,
}

impl Trainer<'_> {
    fn xrow(&self, n: usize) -> &[f64] {
        &self.x[n * (self.d + 1)..(n + 1) * (self.d + 1)]
    }

    fn state(&self, p: &[f64]) -> State {
        let (d, hn) = (self.d, self.hn);
        let off = hn * (d + 1);
        let mut hidden = vec![0.0; self.n * (hn + 1)];
        let mut outputs = Vec::with_capacity(self.n);
        let mut residuals = DVector::zeros(OUTPUTS * self.n);
        for n in 0..self.n {
            let x = self.xrow(n);
            let h = &mut hidden[n * (hn + 1)..(n + 1) * (hn + 1)];
            for j in 0..hn {
                let w = &p[j * (d + 1)..(j + 1) * (d + 1)];
                h[j] = sigmoid(w.iter().zip(x).map(|(a, b)| a * b).sum());
            }
            h[hn] = 1.0;
            let mut y = [0.0; 2];
            for o in 0..OUTPUTS {
                let v = &p[off + o * (hn + 1)..off + (o + 1) * (hn + 1)];
                y[o] = sigmoid(v.iter().zip(h.iter()).map(|(a, b)| a * b).sum());
                residuals[OUTPUTS * n + o] = y[o] - self.targets[n][o];
            }
            outputs.push(y);
        }
        let loss = residuals.norm_squared();
        State { hidden, outputs, residuals, loss }
    }

    /// Output-layer sensitivity s_o(n) and the hidden back-propagated factors
    /// D[(n,o), j] = s_o(n) v_oj h_j(1 - h_j).
    fn sensitivities(&self, p: &[f64], st: &State) -> (Vec<f64>, DMatrix<f64>) {
        let hn = self.hn;
        let off = hn * (self.d + 1);
        let m = OUTPUTS * self.n;
        let mut s = vec![0.0; m];
        let mut dm = DMatrix::zeros(m, hn);
        for n in 0..self.n {
            let h = &st.hidden[n * (hn + 1)..(n + 1) * (hn + 1)];
            for o in 0..OUTPUTS {
                let y = st.outputs[n][o];
                let so = y * (1.0 - y);
                s[OUTPUTS * n + o] = so;
                let v = &p[off + o * (hn + 1)..];
                for j in 0..hn {
                    dm[(OUTPUTS * n + o, j)] = so * v[j] * h[j] * (1.0 - h[j]);
                }
            }
        }
        (s, dm)
    }

    /// J^T a for a residual-space vector `a`.
    fn jt_times(&self, st: &State, s: &[f64], dm: &DMatrix<f64>, a: &DVector<f64>) -> Vec<f64> {
        let (d, hn) = (self.d, self.hn);
        let off = hn * (d + 1);
        let mut out = vec![0.0; Network::param_count(d, hn)];
        for n in 0..self.n {
            let x = self.xrow(n);
            let h = &st.hidden[n * (hn + 1)..(n + 1) * (hn + 1)];
            for j in 0..hn {
                let c: f64 = (0..OUTPUTS).map(|o| a[OUTPUTS * n + o] * dm[(OUTPUTS * n + o, j)]).sum();
                if c != 0.0 {
                    for (w, xi) in out[j * (d + 1)..(j + 1) * (d + 1)].iter_mut().zip(x) {
                        *w += c * xi;
                    }
                }
            }
            for o in 0..OUTPUTS {
                let c = a[OUTPUTS * n + o] * s[OUTPUTS * n + o];
                for (w, hj) in out[off + o * (hn + 1)..off + (o + 1) * (hn + 1)].iter_mut().zip(h) {
                    *w += c * hj;
                }
            }
        }
        out
    }

    /// J J^T assembled from Gram matrices without forming J.
    fn kernel(&self, st: &State, s: &[f64], dm: &DMatrix<f64>) -> DMatrix<f64> {
        let hn = self.hn;
        let m = OUTPUTS * self.n;
        let gram = self.gram.as_ref().expect("dual form has a Gram matrix");
        let mut k = dm * dm.transpose();
        for r in 0..m {
            for c in 0..m {
                k[(r, c)] *= gram[(r / OUTPUTS, c / OUTPUTS)];
            }
        }
        for r in 0..m {
            let hr = &st.hidden[(r / OUTPUTS) * (hn + 1)..(r / OUTPUTS + 1) * (hn + 1)];
            for c in (r % OUTPUTS..m).step_by(OUTPUTS) {
                let hc = &st.hidden[(c / OUTPUTS) * (hn + 1)..(c / OUTPUTS + 1) * (hn + 1)];
                let dot: f64 = hr.iter().zip(hc).map(|(a, b)| a * b).sum();
                k[(r, c)] += s[r] * s[c] * dot;
            }
        }
        k
    }

    fn train(&self, mut p: Vec<f64>) -> Result<(Vec<f64>, usize, f64)> {
        let cfg = self.cfg;
        let net_rows: Vec<&[f64]> = (0..self.n).map(|n| &self.xrow(n)[..self.d]).collect();
        let mut st = self.state(&p);
        let mut mu = cfg.mu_initial;
        let mut epochs = 0;
        'epochs: while epochs < cfg.max_epochs {
            let (s, dm) = self.sensitivities(&p, &st);
            let grad = self.jt_times(&st, &s, &dm, &st.residuals);
            if grad.iter().map(|g| g * g).sum::<f64>().sqrt() < cfg.min_gradient {
                break;
            }
            // Primal normal equations when parameters are few, dual otherwise.
            let primal = self.gram.is_none().then(|| {
                let net = Network { input_dim: self.d, hidden_n: self.hn, params: p.clone() };
                let j = net.jacobian(&net_rows);
                j.transpose() * j
            });
            let dual = self.gram.is_some().then(|| self.kernel(&st, &s, &dm));
            loop {
                let step = match (&primal, &dual) {
                    (Some(jtj), _) => {
                        let mut a = jtj.clone();
                        for i in 0..a.nrows() {
                            a[(i, i)] += mu;
                        }
                        a.cholesky().map(|ch| {
                            let g = DVector::from_vec(grad.clone());
                            (-ch.solve(&g)).data.into()
                        })
                    }
                    (_, Some(k)) => {
                        let mut a = k.clone();
                        for i in 0..a.nrows() {
                            a[(i, i)] += mu;
                        }
                        a.cholesky().map(|ch| {
                            let alpha = ch.solve(&st.residuals);
                            self.jt_times(&st, &s, &dm, &alpha).into_iter().map(|v| -v).collect::<Vec<f64>>()
                        })
                    }
                    _ => unreachable!(),
                };
                let Some(step) = step else {
                    mu *= cfg.mu_increase;
                    if mu > cfg.mu_max {
                        return Err(Error::Training(format!(
                            "damped normal equations stayed singular up to mu = {mu:e}"
                        )));
                    }
                    continue;
                };
                let trial: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
                let next = self.state(&trial);
                if next.loss < st.loss && next.loss.is_finite() {
                    p = trial;
                    st = next;
                    mu = (mu / cfg.mu_decrease).max(f64::MIN_POSITIVE);
                    epochs += 1;
                    continue 'epochs;
                }
                mu *= cfg.mu_increase;
                if mu > cfg.mu_max {
                    // No damping improves the loss: a local minimum.
                    break 'epochs;
                }
            }
        }
        Ok((p, epochs, st.loss))
    }
}

/// Train on `rows` (raw feature values, one row per example). `is_a[i]`
/// marks class-A examples, which get the target (1, 0).
pub fn train_mlp(
    rows: &[&[f64]],
    is_a: &[bool],
    feature_names: &[String],
    hidden_n: usize,
    cfg: &TrainConfig,
) -> Result<MlpModel> {
    if rows.len() != is_a.len() {
        return Err(Error::invalid("row and label counts differ"));
    }
    let n_a = is_a.iter().filter(|a| **a).count();
    if n_a == 0 || n_a == is_a.len() {
        return Err(Error::Training("training data must contain both classes".into()));
    }
    if hidden_n == 0 {
        return Err(Error::invalid("hidden_n must be positive"));
    }
    let d = feature_names.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::invalid(format!("training rows must have {d} features")));
    }
    if rows.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("non-finite training feature"));
    }
    let standardizer = Standardizer::fit(rows);
    let mut x = Vec::with_capacity(rows.len() * (d + 1));
    for r in rows {
        x.extend(standardizer.apply(r));
        x.push(1.0);
    }
    let n = rows.len();
    let p_count = Network::param_count(d, hidden_n);
    let gram = (p_count > OUTPUTS * n).then(|| {
        let xm = DMatrix::from_row_slice(n, d + 1, &x);
        &xm * xm.transpose()
    });
    let trainer = Trainer {
        x,
        targets: is_a.iter().map(|&a| if a { [1.0, 0.0] } else { [0.0, 1.0] }).collect(),
        n,
        d,
        hn: hidden_n,
        gram,
        cfg,
    };
    let init = Network::random(d, hidden_n, cfg.init_scale, cfg.seed);
    let (params, epochs, final_loss) = trainer.train(init.params)?;
    if params.iter().any(|w| !w.is_finite()) {
        return Err(Error::Training("non-finite weights".into()));
    }
    Ok(MlpModel {
        feature_names: feature_names.to_vec(),
        standardizer,
        network: Network { input_dim: d, hidden_n, params },
        epochs,
        final_loss,
    })
}

/// Training loss after every accepted step, for diagnostics and tests.
pub fn loss_trace(
    rows: &[&[f64]],
    is_a: &[bool],
    hidden_n: usize,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    let names: Vec<String> = (0..rows.first().map_or(0, |r| r.len())).map(|i| format!("x{i}")).collect();
    (0..=cfg.max_epochs)
        .map(|e| {
            let c = TrainConfig { max_epochs: e, ..cfg.clone() };
            train_mlp(rows, is_a, &names, hidden_n, &c).map(|m| m.final_loss)
        })
        .collect()
}
