//! Learned surface temperature predictor.
//!
//! Two stacked recurrent tanh layers of 14 neurons each and a linear
//! output, driven by five channels: inner liner temperature, ambient
//! temperature, friction power, travel speed, and the previous surface
//! temperature. The fifth channel is closed-loop: after the first step the
//! network feeds back its own prediction, so a trained model only needs an
//! initial surface temperature and the four measured channels.
//!
//! Training is plain gradient descent on the full unrolled sequence.
//! Backpropagation runs through the recurrent connections of both layers
//! and through the prediction feedback path, so the gradient is exact for
//! the closed-loop forward pass (see [`gradient_check`]).

use crate::error::{Error, Result};
use crate::textio::{format_f64, CsvTable, KvFile, KvSection};
use crate::thermal::ThermalSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Input channels per step.
pub const INPUTS: usize = 5;
/// Neurons per recurrent layer.
pub const HIDDEN: usize = 14;

const W1_OFF: usize = 0;
const U1_OFF: usize = W1_OFF + HIDDEN * INPUTS;
const B1_OFF: usize = U1_OFF + HIDDEN * HIDDEN;
const W2_OFF: usize = B1_OFF + HIDDEN;
const U2_OFF: usize = W2_OFF + HIDDEN * HIDDEN;
const B2_OFF: usize = U2_OFF + HIDDEN * HIDDEN;
const WOUT_OFF: usize = B2_OFF + HIDDEN;
const BOUT_OFF: usize = WOUT_OFF + HIDDEN;
const PARAMS: usize = BOUT_OFF + 1;

/// One training sequence in physical units. `inputs[t][4]` is the measured
/// surface temperature one step earlier (the value at `t = 0` seeds the
/// closed loop).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSeries {
    pub inputs: Vec<[f64; INPUTS]>,
    pub targets: Vec<f64>,
}

impl TrainingSeries {
    pub fn validate(&self) -> Result<()> {
        if self.inputs.len() != self.targets.len() {
            return Err(Error::InvalidCoefficients(format!(
                "series has {} input rows but {} targets",
                self.inputs.len(),
                self.targets.len()
            )));
        }
        if self.inputs.len() < 2 {
            return Err(Error::UnderDetermined {
                observations: self.inputs.len(),
                coefficients: 1,
            });
        }
        let finite = self.inputs.iter().flatten().all(|v| v.is_finite())
            && self.targets.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("training series"));
        }
        Ok(())
    }
}

/// Builds a training series from simulated or logged samples.
#[must_use]
pub fn series_from_samples(samples: &[ThermalSample]) -> TrainingSeries {
    let inputs = samples
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let prev_surface = samples[t.saturating_sub(1)].surface_temp_c;
            [
                s.inner_liner_c,
                s.ambient_c,
                s.friction_energy_w,
                s.velocity_mps,
                prev_surface,
            ]
        })
        .collect();
    TrainingSeries {
        inputs,
        targets: samples.iter().map(|s| s.surface_temp_c).collect(),
    }
}

/// The trained predictor: weights plus the normalization constants the
/// training data established.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNetModel {
    weights: Vec<f64>,
    pub input_lo: [f64; INPUTS],
    pub input_hi: [f64; INPUTS],
    pub target_lo: f64,
    pub target_hi: f64,
}

fn span(lo: f64, hi: f64) -> f64 {
    let s = hi - lo;
    if s.abs() < 1e-12 {
        1.0
    } else {
        s
    }
}

struct ForwardTrace {
    xn: Vec<[f64; INPUTS]>,
    h1: Vec<[f64; HIDDEN]>,
    h2: Vec<[f64; HIDDEN]>,
    yn: Vec<f64>,
}

impl RecurrentNetModel {
    /// Fresh model with small seeded weights and placeholder normalization.
    #[must_use]
    pub fn new_seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x2E77));
        let mut weights = vec![0.0; PARAMS];
        let in_scale = 1.0 / (INPUTS as f64).sqrt();
        let rec_scale = 1.0 / (HIDDEN as f64).sqrt();
        for (i, w) in weights.iter_mut().enumerate() {
            let scale = match i {
                _ if i < U1_OFF => in_scale,
                _ if i < B1_OFF => rec_scale,
                _ if i < W2_OFF => 0.0,
                _ if i < B2_OFF => rec_scale,
                _ if i < WOUT_OFF => 0.0,
                _ if i < BOUT_OFF => rec_scale,
                _ => 0.0,
            };
            *w = if scale > 0.0 { rng.gen_range(-scale..scale) } else { 0.0 };
        }
        Self {
            weights,
            input_lo: [0.0; INPUTS],
            input_hi: [1.0; INPUTS],
            target_lo: 0.0,
            target_hi: 1.0,
        }
    }

    #[must_use]
    pub fn parameter_count(&self) -> usize {
        PARAMS
    }

    pub(crate) fn parameter_mut(&mut self, index: usize) -> &mut f64 {
        &mut self.weights[index]
    }

    fn norm_input(&self, channel: usize, value: f64) -> f64 {
        2.0 * (value - self.input_lo[channel]) / span(self.input_lo[channel], self.input_hi[channel])
            - 1.0
    }

    fn norm_target(&self, value: f64) -> f64 {
        2.0 * (value - self.target_lo) / span(self.target_lo, self.target_hi) - 1.0
    }

    fn denorm_target(&self, value: f64) -> f64 {
        (value + 1.0) / 2.0 * span(self.target_lo, self.target_hi) + self.target_lo
    }

    /// Linear map taking a normalized prediction to the normalized value of
    /// input channel four. Identity when the channel shares the target
    /// normalization, which [`rnn_train`] arranges.
    fn feedback_map(&self) -> (f64, f64) {
        let st = span(self.target_lo, self.target_hi);
        let s4 = span(self.input_lo[4], self.input_hi[4]);
        let gain = st / s4;
        let offset = (2.0 * (self.target_lo - self.input_lo[4]) + st) / s4 - 1.0;
        (gain, offset)
    }

    fn forward(&self, inputs: &[[f64; INPUTS]]) -> ForwardTrace {
        let w = &self.weights;
        let (fb_gain, fb_offset) = self.feedback_map();
        let n = inputs.len();
        let mut trace = ForwardTrace {
            xn: Vec::with_capacity(n),
            h1: Vec::with_capacity(n),
            h2: Vec::with_capacity(n),
            yn: Vec::with_capacity(n),
        };
        let mut h1_prev = [0.0; HIDDEN];
        let mut h2_prev = [0.0; HIDDEN];
        for (t, row) in inputs.iter().enumerate() {
            let mut xn = [0.0; INPUTS];
            for c in 0..4 {
                xn[c] = self.norm_input(c, row[c]);
            }
            xn[4] = if t == 0 {
                self.norm_input(4, row[4])
            } else {
                fb_gain * trace.yn[t - 1] + fb_offset
            };

            let mut h1 = [0.0; HIDDEN];
            for i in 0..HIDDEN {
                let mut pre = w[B1_OFF + i];
                for (c, &x) in xn.iter().enumerate() {
                    pre += w[W1_OFF + i * INPUTS + c] * x;
                }
                for (j, &h) in h1_prev.iter().enumerate() {
                    pre += w[U1_OFF + i * HIDDEN + j] * h;
                }
                h1[i] = pre.tanh();
            }
            let mut h2 = [0.0; HIDDEN];
            for i in 0..HIDDEN {
                let mut pre = w[B2_OFF + i];
                for (j, &h) in h1.iter().enumerate() {
                    pre += w[W2_OFF + i * HIDDEN + j] * h;
                }
                for (j, &h) in h2_prev.iter().enumerate() {
                    pre += w[U2_OFF + i * HIDDEN + j] * h;
                }
                h2[i] = pre.tanh();
            }
            let mut yn = w[BOUT_OFF];
            for (i, &h) in h2.iter().enumerate() {
                yn += w[WOUT_OFF + i] * h;
            }

            h1_prev = h1;
            h2_prev = h2;
            trace.xn.push(xn);
            trace.h1.push(h1);
            trace.h2.push(h2);
            trace.yn.push(yn);
        }
        trace
    }

    /// Closed-loop surface temperature predictions, C. Only `inputs[0][4]`
    /// is read from the fifth channel; later steps feed back the model's
    /// own output.
    #[must_use]
    pub fn predict(&self, inputs: &[[f64; INPUTS]]) -> Vec<f64> {
        self.forward(inputs)
            .yn
            .iter()
            .map(|&yn| self.denorm_target(yn))
            .collect()
    }

    /// Mean squared loss over normalized outputs and its gradient for all
    /// weights, accumulated over the given series.
    pub fn loss_and_gradient(&self, series: &[TrainingSeries]) -> Result<(f64, Vec<f64>)> {
        let total: usize = series.iter().map(|s| s.targets.len()).sum();
        if total == 0 {
            return Err(Error::UnderDetermined {
                observations: 0,
                coefficients: PARAMS,
            });
        }
        let w = &self.weights;
        let (fb_gain, _) = self.feedback_map();
        let weight = 1.0 / total as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; PARAMS];

        for s in series {
            s.validate()?;
            let trace = self.forward(&s.inputs);
            let n = s.targets.len();
            let mut d1_next = [0.0; HIDDEN];
            let mut d2_next = [0.0; HIDDEN];
            for t in (0..n).rev() {
                let err = trace.yn[t] - self.norm_target(s.targets[t]);
                loss += 0.5 * err * err * weight;

                // Output error plus what the next step's layer one saw of
                // this prediction through the feedback channel.
                let mut g_y = err * weight;
                for i in 0..HIDDEN {
                    g_y += fb_gain * w[W1_OFF + i * INPUTS + 4] * d1_next[i];
                }

                let mut d2 = [0.0; HIDDEN];
                for i in 0..HIDDEN {
                    let mut acc = w[WOUT_OFF + i] * g_y;
                    for j in 0..HIDDEN {
                        acc += w[U2_OFF + j * HIDDEN + i] * d2_next[j];
                    }
                    d2[i] = acc * (1.0 - trace.h2[t][i] * trace.h2[t][i]);
                }
                let mut d1 = [0.0; HIDDEN];
                for i in 0..HIDDEN {
                    let mut acc = 0.0;
                    for j in 0..HIDDEN {
                        acc += w[W2_OFF + j * HIDDEN + i] * d2[j];
                        acc += w[U1_OFF + j * HIDDEN + i] * d1_next[j];
                    }
                    d1[i] = acc * (1.0 - trace.h1[t][i] * trace.h1[t][i]);
                }

                grad[BOUT_OFF] += g_y;
                for i in 0..HIDDEN {
                    grad[WOUT_OFF + i] += g_y * trace.h2[t][i];
                    grad[B2_OFF + i] += d2[i];
                    grad[B1_OFF + i] += d1[i];
                    for j in 0..HIDDEN {
                        grad[W2_OFF + i * HIDDEN + j] += d2[i] * trace.h1[t][j];
                        if t > 0 {
                            grad[U2_OFF + i * HIDDEN + j] += d2[i] * trace.h2[t - 1][j];
                            grad[U1_OFF + i * HIDDEN + j] += d1[i] * trace.h1[t - 1][j];
                        }
                    }
                    for c in 0..INPUTS {
                        grad[W1_OFF + i * INPUTS + c] += d1[i] * trace.xn[t][c];
                    }
                }
                d1_next = d1;
                d2_next = d2;
            }
        }
        Ok((loss, grad))
    }

    fn loss(&self, series: &[TrainingSeries]) -> Result<f64> {
        let total: usize = series.iter().map(|s| s.targets.len()).sum();
        let weight = 1.0 / total as f64;
        let mut loss = 0.0;
        for s in series {
            let trace = self.forward(&s.inputs);
            for (t, &target) in s.targets.iter().enumerate() {
                let err = trace.yn[t] - self.norm_target(target);
                loss += 0.5 * err * err * weight;
            }
        }
        Ok(loss)
    }

    #[must_use]
    pub fn to_kv(&self) -> KvFile {
        let mut file = KvFile::new();
        let mut network = KvSection::new("network");
        network.set("hidden", HIDDEN.to_string());
        network.set("inputs", INPUTS.to_string());
        file.push(network);
        let mut norm = KvSection::new("normalization");
        norm.set_f64_list("input_lo", &self.input_lo);
        norm.set_f64_list("input_hi", &self.input_hi);
        norm.set_f64("target_lo", self.target_lo);
        norm.set_f64("target_hi", self.target_hi);
        file.push(norm);

        let rows = |section: &mut KvSection, name: &str, off: usize, cols: usize| {
            for r in 0..HIDDEN {
                section.set_f64_list(
                    &format!("{name}_{r}"),
                    &self.weights[off + r * cols..off + (r + 1) * cols],
                );
            }
        };
        let mut layer1 = KvSection::new("layer1");
        rows(&mut layer1, "w", W1_OFF, INPUTS);
        rows(&mut layer1, "u", U1_OFF, HIDDEN);
        layer1.set_f64_list("b", &self.weights[B1_OFF..B1_OFF + HIDDEN]);
        file.push(layer1);
        let mut layer2 = KvSection::new("layer2");
        rows(&mut layer2, "w", W2_OFF, HIDDEN);
        rows(&mut layer2, "u", U2_OFF, HIDDEN);
        layer2.set_f64_list("b", &self.weights[B2_OFF..B2_OFF + HIDDEN]);
        file.push(layer2);
        let mut output = KvSection::new("output");
        output.set_f64_list("w", &self.weights[WOUT_OFF..WOUT_OFF + HIDDEN]);
        output.set_f64("b", self.weights[BOUT_OFF]);
        file.push(output);
        file
    }

    pub fn from_kv(file: &KvFile) -> Result<Self> {
        let network = file.require_section("network")?;
        let hidden = network.require_usize("hidden")?;
        let inputs = network.require_usize("inputs")?;
        if hidden != HIDDEN || inputs != INPUTS {
            return Err(Error::InvalidCoefficients(format!(
                "model is {hidden}x{inputs}, this build supports {HIDDEN}x{INPUTS}"
            )));
        }
        let norm = file.require_section("normalization")?;
        let lo = norm.require_f64_list("input_lo", INPUTS)?;
        let hi = norm.require_f64_list("input_hi", INPUTS)?;

        let mut weights = vec![0.0; PARAMS];
        let mut read_rows = |section: &KvSection, name: &str, off: usize, cols: usize| -> Result<()> {
            for r in 0..HIDDEN {
                let row = section.require_f64_list(&format!("{name}_{r}"), cols)?;
                weights[off + r * cols..off + (r + 1) * cols].copy_from_slice(&row);
            }
            Ok(())
        };
        let layer1 = file.require_section("layer1")?;
        read_rows(layer1, "w", W1_OFF, INPUTS)?;
        read_rows(layer1, "u", U1_OFF, HIDDEN)?;
        let layer2 = file.require_section("layer2")?;
        read_rows(layer2, "w", W2_OFF, HIDDEN)?;
        read_rows(layer2, "u", U2_OFF, HIDDEN)?;
        let b1 = layer1.require_f64_list("b", HIDDEN)?;
        weights[B1_OFF..B1_OFF + HIDDEN].copy_from_slice(&b1);
        let b2 = layer2.require_f64_list("b", HIDDEN)?;
        weights[B2_OFF..B2_OFF + HIDDEN].copy_from_slice(&b2);
        let output = file.require_section("output")?;
        let wout = output.require_f64_list("w", HIDDEN)?;
        weights[WOUT_OFF..WOUT_OFF + HIDDEN].copy_from_slice(&wout);
        weights[BOUT_OFF] = output.require_f64("b")?;

        Ok(Self {
            weights,
            input_lo: lo.try_into().unwrap(),
            input_hi: hi.try_into().unwrap(),
            target_lo: norm.require_f64("target_lo")?,
            target_hi: norm.require_f64("target_hi")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_kv().write(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&KvFile::read(path)?)
    }
}

/// Gradient descent settings.
#[derive(Debug, Clone, Copy)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Scale the gradient down to this Euclidean norm when it exceeds it.
    pub clip_norm: Option<f64>,
    /// Weight initialization seed.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 3000,
            learning_rate: 0.08,
            clip_norm: Some(5.0),
            seed: 0,
        }
    }
}

/// Trains a fresh model on the given series. Returns the model and the
/// loss after every epoch.
pub fn rnn_train(
    series: &[TrainingSeries],
    options: &TrainOptions,
) -> Result<(RecurrentNetModel, Vec<f64>)> {
    if series.is_empty() {
        return Err(Error::UnderDetermined {
            observations: 0,
            coefficients: PARAMS,
        });
    }
    for s in series {
        s.validate()?;
    }
    let mut model = RecurrentNetModel::new_seeded(options.seed);

    // Channels zero to three normalize over their observed range; channel
    // four shares the target normalization so the feedback path maps the
    // previous prediction straight into its input slot.
    for c in 0..4 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in series {
            for row in &s.inputs {
                lo = lo.min(row[c]);
                hi = hi.max(row[c]);
            }
        }
        model.input_lo[c] = lo;
        model.input_hi[c] = hi;
    }
    let mut t_lo = f64::INFINITY;
    let mut t_hi = f64::NEG_INFINITY;
    for s in series {
        for &v in &s.targets {
            t_lo = t_lo.min(v);
            t_hi = t_hi.max(v);
        }
        t_lo = t_lo.min(s.inputs[0][4]);
        t_hi = t_hi.max(s.inputs[0][4]);
    }
    model.target_lo = t_lo;
    model.target_hi = t_hi;
    model.input_lo[4] = t_lo;
    model.input_hi[4] = t_hi;

    let mut history = Vec::with_capacity(options.epochs);
    let mut initial_loss = f64::NAN;
    for epoch in 0..options.epochs {
        let (loss, mut grad) = model.loss_and_gradient(series)?;
        if epoch == 0 {
            initial_loss = loss;
        }
        if !loss.is_finite() || loss > 1e6 * (initial_loss + 1.0) {
            return Err(Error::TrainingDiverged { epoch, loss });
        }
        if let Some(clip) = options.clip_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > clip {
                let scale = clip / norm;
                for g in &mut grad {
                    *g *= scale;
                }
            }
        }
        for (w, g) in model.weights.iter_mut().zip(&grad) {
            *w -= options.learning_rate * g;
        }
        history.push(loss);
    }
    Ok((model, history))
}

/// Root mean square prediction error over a series, in C.
pub fn prediction_rms(model: &RecurrentNetModel, series: &TrainingSeries) -> Result<f64> {
    series.validate()?;
    let predictions = model.predict(&series.inputs);
    let sq: f64 = predictions
        .iter()
        .zip(&series.targets)
        .map(|(p, t)| (p - t).powi(2))
        .sum();
    Ok((sq / series.targets.len() as f64).sqrt())
}

/// Compares the analytic gradient against central finite differences at
/// `samples` randomly chosen weights and returns the worst relative error.
pub fn gradient_check(
    model: &mut RecurrentNetModel,
    series: &[TrainingSeries],
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<f64> {
    let (_, grad) = model.loss_and_gradient(series)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let index = rng.gen_range(0..PARAMS);
        let original = *model.parameter_mut(index);
        *model.parameter_mut(index) = original + step;
        let plus = model.loss(series)?;
        *model.parameter_mut(index) = original - step;
        let minus = model.loss(series)?;
        *model.parameter_mut(index) = original;
        let fd = (plus - minus) / (2.0 * step);
        let denom = fd.abs().max(grad[index].abs()).max(1e-8);
        worst = worst.max((fd - grad[index]).abs() / denom);
    }
    Ok(worst)
}

pub const TRAINING_CSV_HEADER: [&str; 6] = [
    "time_s",
    "inner_liner_c",
    "ambient_c",
    "friction_energy_w",
    "velocity_mps",
    "surface_temp_c",
];

pub fn write_training_csv(path: &Path, samples: &[ThermalSample]) -> Result<()> {
    let mut table = CsvTable::new(&TRAINING_CSV_HEADER);
    for s in samples {
        table.push_row(vec![
            format_f64(s.time_s),
            format_f64(s.inner_liner_c),
            format_f64(s.ambient_c),
            format_f64(s.friction_energy_w),
            format_f64(s.velocity_mps),
            format_f64(s.surface_temp_c),
        ]);
    }
    table.write(path)
}

pub fn read_training_csv(path: &Path) -> Result<Vec<ThermalSample>> {
    let table = CsvTable::read(path)?;
    table.expect_header(&TRAINING_CSV_HEADER)?;
    (0..table.rows.len())
        .map(|r| {
            Ok(ThermalSample {
                time_s: table.f64_cell(r, 0)?,
                inner_liner_c: table.f64_cell(r, 1)?,
                ambient_c: table.f64_cell(r, 2)?,
                friction_energy_w: table.f64_cell(r, 3)?,
                velocity_mps: table.f64_cell(r, 4)?,
                surface_temp_c: table.f64_cell(r, 5)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{synthetic_thermal_series, ThermalParameters};

    fn short_series(seed: u64, steps: usize) -> TrainingSeries {
        let samples =
            synthetic_thermal_series(&ThermalParameters::default(), seed, steps as f64, 1.0);
        series_from_samples(&samples)
    }

    fn normalized_model(seed: u64) -> RecurrentNetModel {
        let mut model = RecurrentNetModel::new_seeded(seed);
        model.input_lo = [15.0, 15.0, 0.0, 5.0, 15.0];
        model.input_hi = [70.0, 35.0, 9000.0, 35.0, 70.0];
        model.target_lo = 15.0;
        model.target_hi = 70.0;
        model
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut model = normalized_model(3);
        let series = [short_series(0, 50)];
        let worst = gradient_check(&mut model, &series, 50, 1e-6, 9).unwrap();
        assert!(worst < 1e-5, "worst relative gradient error {worst}");
    }

    #[test]
    fn gradient_check_covers_the_feedback_path() {
        // With distinct channel-four normalization the feedback map is not
        // the identity; the backward pass must still agree.
        let mut model = normalized_model(5);
        model.input_lo[4] = 10.0;
        model.input_hi[4] = 90.0;
        let series = [short_series(1, 40)];
        let worst = gradient_check(&mut model, &series, 40, 1e-6, 2).unwrap();
        assert!(worst < 1e-5, "worst relative gradient error {worst}");
    }

    #[test]
    fn training_descends_and_is_deterministic() {
        let series = [short_series(0, 120)];
        let options = TrainOptions {
            epochs: 200,
            ..TrainOptions::default()
        };
        let (model_a, history_a) = rnn_train(&series, &options).unwrap();
        let (model_b, history_b) = rnn_train(&series, &options).unwrap();
        assert_eq!(model_a, model_b);
        assert_eq!(
            history_a.last().unwrap().to_bits(),
            history_b.last().unwrap().to_bits()
        );
        assert!(
            history_a.last().unwrap() < &(history_a[0] * 0.5),
            "loss {} -> {}",
            history_a[0],
            history_a.last().unwrap()
        );
    }

    #[test]
    fn absurd_learning_rates_are_reported_as_divergence() {
        let series = [short_series(0, 60)];
        let options = TrainOptions {
            epochs: 400,
            learning_rate: 1e4,
            clip_norm: None,
            ..TrainOptions::default()
        };
        match rnn_train(&series, &options) {
            Err(Error::TrainingDiverged { .. }) => {}
            Err(other) => panic!("unexpected error {other}"),
            Ok((_, history)) => panic!(
                "training survived lr 1e4 with final loss {}",
                history.last().unwrap()
            ),
        }
    }

    #[test]
    fn model_file_round_trips_bit_exactly() {
        let series = [short_series(2, 60)];
        let options = TrainOptions {
            epochs: 50,
            ..TrainOptions::default()
        };
        let (model, _) = rnn_train(&series, &options).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surface_net.txt");
        model.save(&path).unwrap();
        let loaded = RecurrentNetModel::load(&path).unwrap();
        assert_eq!(model, loaded);
        let a = model.predict(&series[0].inputs);
        let b = loaded.predict(&series[0].inputs);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn wrong_dimensions_are_rejected_at_load() {
        let model = normalized_model(0);
        let kv = model.to_kv();
        let section = kv.require_section("network").unwrap();
        assert_eq!(section.get("hidden"), Some("14"));
        let text = kv.render().replace("hidden = 14", "hidden = 9");
        let err = RecurrentNetModel::from_kv(&KvFile::parse(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("9x5"), "{err}");
    }

    #[test]
    fn constant_channels_do_not_break_normalization() {
        let mut series = short_series(0, 40);
        for row in &mut series.inputs {
            row[1] = 25.0;
        }
        let options = TrainOptions {
            epochs: 10,
            ..TrainOptions::default()
        };
        let (_, history) = rnn_train(&[series], &options).unwrap();
        assert!(history.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn held_out_prediction_stays_within_two_degrees() {
        // Six sessions span enough ambient temperatures and power levels
        // for the net to interpolate a session it never saw.
        let params = ThermalParameters::default();
        let train: Vec<TrainingSeries> = (0..6)
            .map(|seed| {
                series_from_samples(&synthetic_thermal_series(&params, seed, 600.0, 2.0))
            })
            .collect();
        let held_out =
            series_from_samples(&synthetic_thermal_series(&params, 9, 600.0, 2.0));
        let (model, history) = rnn_train(&train, &TrainOptions::default()).unwrap();
        let rms = prediction_rms(&model, &held_out).unwrap();
        assert!(
            rms <= 2.0,
            "held-out rms {rms} C, final training loss {}",
            history.last().unwrap()
        );
    }
}
