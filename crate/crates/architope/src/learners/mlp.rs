//! A small feedforward network trained by seeded gradient descent on
//! the density-weighted squared error over a region's fit grid.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::FitError;
use crate::learners::{collect_fit_sample, FitConfig};
use crate::measure::MeasureSpec;
use crate::metrics::FunctionHandle;
use crate::partition::Region;

const DIVERGENCE_LOSS: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `a`.
    fn derivative_from_output(&self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected network `widths[0] -> … -> widths.last()`, with the
/// activation on every layer except the final linear one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub widths: Vec<usize>,
    pub activation: Activation,
    /// `weights[l][out][in]`.
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpModel {
    /// Seeded initialization, uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    /// Parameters are drawn layer by layer, weights (row-major) before
    /// biases, so the stream is reproducible bit for bit.
    pub fn init(widths: &[usize], activation: Activation, seed: u64) -> Result<Self, FitError> {
        validate_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let mut w = vec![vec![0.0; fan_in]; fan_out];
            for row in &mut w {
                for v in row.iter_mut() {
                    *v = rng.gen_range(-scale..=scale);
                }
            }
            let mut b = vec![0.0; fan_out];
            for v in &mut b {
                *v = rng.gen_range(-scale..=scale);
            }
            weights.push(w);
            biases.push(b);
        }
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            weights,
            biases,
        })
    }

    pub fn with_parameters(
        widths: Vec<usize>,
        activation: Activation,
        weights: Vec<Vec<Vec<f64>>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self, FitError> {
        validate_widths(&widths)?;
        let model = Self {
            widths,
            activation,
            weights,
            biases,
        };
        if !model.parameters_finite() {
            return Err(FitError::InvalidWidths {
                message: "parameters must be finite".into(),
            });
        }
        for l in 0..model.widths.len() - 1 {
            let (fan_in, fan_out) = (model.widths[l], model.widths[l + 1]);
            let ok = model.weights.get(l).map_or(false, |w| {
                w.len() == fan_out && w.iter().all(|row| row.len() == fan_in)
            }) && model.biases.get(l).map_or(false, |b| b.len() == fan_out);
            if !ok {
                return Err(FitError::InvalidWidths {
                    message: format!("layer {l} parameters do not match widths"),
                });
            }
        }
        Ok(model)
    }

    pub fn output_dimension(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn input_dimension(&self) -> usize {
        self.widths[0]
    }

    fn parameters_finite(&self) -> bool {
        self.weights
            .iter()
            .flatten()
            .flatten()
            .chain(self.biases.iter().flatten())
            .all(|v| v.is_finite())
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let layers = self.weights.len();
        let mut a = x.to_vec();
        for l in 0..layers {
            let mut next = vec![0.0; self.widths[l + 1]];
            for (o, out) in next.iter_mut().enumerate() {
                let mut z = self.biases[l][o];
                for (i, v) in a.iter().enumerate() {
                    z += self.weights[l][o][i] * v;
                }
                *out = if l + 1 == layers { z } else { self.activation.apply(z) };
            }
            a = next;
        }
        a
    }

    /// Forward pass keeping every layer's output; `acts[0]` is the input.
    fn forward_trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layers = self.weights.len();
        let mut acts = Vec::with_capacity(layers + 1);
        acts.push(x.to_vec());
        for l in 0..layers {
            let prev = &acts[l];
            let mut next = vec![0.0; self.widths[l + 1]];
            for (o, out) in next.iter_mut().enumerate() {
                let mut z = self.biases[l][o];
                for (i, v) in prev.iter().enumerate() {
                    z += self.weights[l][o][i] * v;
                }
                *out = if l + 1 == layers { z } else { self.activation.apply(z) };
            }
            acts.push(next);
        }
        acts
    }

    /// Accumulates parameter gradients of `scale * Σ_o resid_o * f_o(x)`
    /// into `gw`/`gb`, where `resid` is the already-scaled output
    /// residual at `x`.
    fn accumulate_gradients(
        &self,
        acts: &[Vec<f64>],
        resid: &[f64],
        gw: &mut [Vec<Vec<f64>>],
        gb: &mut [Vec<f64>],
    ) {
        let layers = self.weights.len();
        let mut delta = resid.to_vec();
        for l in (0..layers).rev() {
            for (o, &d) in delta.iter().enumerate() {
                gb[l][o] += d;
                for (i, &a) in acts[l].iter().enumerate() {
                    gw[l][o][i] += d * a;
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; self.widths[l]];
                for (i, p) in prev.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for (o, &d) in delta.iter().enumerate() {
                        s += self.weights[l][o][i] * d;
                    }
                    *p = s * self.activation.derivative_from_output(acts[l][i]);
                }
                delta = prev;
            }
        }
    }

    pub fn handle(&self, label: impl Into<String>) -> FunctionHandle {
        let model = self.clone();
        FunctionHandle::new(label, self.output_dimension(), move |x| model.evaluate(x))
    }
}

fn validate_widths(widths: &[usize]) -> Result<(), FitError> {
    if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
        return Err(FitError::InvalidWidths {
            message: format!("need at least [input, output] with positive widths, got {widths:?}"),
        });
    }
    Ok(())
}

/// Loss trace of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Weighted mean squared loss after each epoch.
    pub losses: Vec<f64>,
    /// Density-weighted L^2 error of the final model on the fit grid.
    pub final_l2_error: f64,
}

fn zeros_like(model: &MlpModel) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<f64>>) {
    let gw = model
        .weights
        .iter()
        .map(|w| w.iter().map(|row| vec![0.0; row.len()]).collect())
        .collect();
    let gb = model.biases.iter().map(|b| vec![0.0; b.len()]).collect();
    (gw, gb)
}

fn weighted_loss(model: &MlpModel, sample: &crate::learners::FitSample, wsum: f64) -> f64 {
    let mut acc = 0.0;
    for ((x, y), w) in sample
        .points
        .iter()
        .zip(&sample.targets)
        .zip(&sample.weights)
    {
        let out = model.evaluate(x);
        let sq: f64 = out.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += w * sq;
    }
    acc / wsum
}

/// Gradient descent on `Σ w_i ||f(x_i) - y_i||^2 / Σ w_i` over the
/// region's fit grid, full batch unless `config.batch_size` says
/// otherwise.  Deterministic given the seed; zero epochs return the
/// seeded initialization untouched.
pub fn fit_mlp(
    target: &FunctionHandle,
    region: &Region,
    measure: &MeasureSpec,
    widths: &[usize],
    activation: Activation,
    config: &FitConfig,
) -> Result<(MlpModel, TrainTrace), FitError> {
    validate_widths(widths)?;
    if widths[0] != region.dimension() {
        return Err(FitError::InvalidWidths {
            message: format!(
                "input width {} does not match region dimension {}",
                widths[0],
                region.dimension()
            ),
        });
    }
    if *widths.last().unwrap() != target.output_dimension() {
        return Err(FitError::InvalidWidths {
            message: format!(
                "output width {} does not match target dimension {}",
                widths.last().unwrap(),
                target.output_dimension()
            ),
        });
    }
    let sample = collect_fit_sample(target, region, measure, config)?;
    let wsum: f64 = sample.weights.iter().sum();
    let n = sample.points.len();
    let mut model = MlpModel::init(widths, activation, config.seed)?;

    let batch = if config.batch_size == 0 || config.batch_size >= n {
        n
    } else {
        config.batch_size
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));

    let mut losses = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        if batch < n {
            // deterministic Fisher-Yates reshuffle per epoch
            for i in (1..n).rev() {
                let j = shuffle_rng.gen_range(0..=i);
                order.swap(i, j);
            }
        }
        let (mut gw, mut gb) = zeros_like(&model);
        let mut processed = 0;
        while processed < n {
            let chunk = &order[processed..(processed + batch).min(n)];
            for row in gw.iter_mut().flatten() {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
            for b in gb.iter_mut() {
                b.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in chunk {
                let acts = model.forward_trace(&sample.points[i]);
                let out = acts.last().unwrap();
                let scale = 2.0 * sample.weights[i] / wsum;
                let resid: Vec<f64> = out
                    .iter()
                    .zip(&sample.targets[i])
                    .map(|(a, b)| scale * (a - b))
                    .collect();
                model.accumulate_gradients(&acts, &resid, &mut gw, &mut gb);
            }
            for l in 0..model.weights.len() {
                for (wrow, grow) in model.weights[l].iter_mut().zip(&gw[l]) {
                    for (w, g) in wrow.iter_mut().zip(grow) {
                        *w -= config.learning_rate * g;
                    }
                }
                for (b, g) in model.biases[l].iter_mut().zip(&gb[l]) {
                    *b -= config.learning_rate * g;
                }
            }
            processed += chunk.len();
        }
        let loss = weighted_loss(&model, &sample, wsum);
        if !loss.is_finite() || loss > DIVERGENCE_LOSS {
            return Err(FitError::Divergence { epoch, loss });
        }
        losses.push(loss);
    }

    let final_sq = weighted_loss(&model, &sample, wsum) * wsum;
    Ok((
        model,
        TrainTrace {
            losses,
            final_l2_error: final_sq.sqrt(),
        },
    ))
}

/// Compares analytic parameter gradients of the pointwise squared-error
/// loss `L(θ) = ½ ||f_θ(x) - y||²`, with `y = f_θ(x) + 1` held fixed,
/// against central finite differences.  Returns the maximum relative
/// deviation over all parameters.
pub fn gradient_check(model: &MlpModel, x: &[f64], h: f64) -> Result<f64, FitError> {
    if model.activation != Activation::Tanh {
        return Err(FitError::GradientCheckNeedsTanh);
    }
    if !(1e-6..=1e-4).contains(&h) {
        return Err(FitError::InvalidGradientStep { h });
    }
    let y: Vec<f64> = model.evaluate(x).iter().map(|v| v + 1.0).collect();

    let loss = |m: &MlpModel| -> f64 {
        let out = m.evaluate(x);
        0.5 * out
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };

    let acts = model.forward_trace(x);
    let resid: Vec<f64> = acts
        .last()
        .unwrap()
        .iter()
        .zip(&y)
        .map(|(a, b)| a - b)
        .collect();
    let (mut gw, mut gb) = zeros_like(model);
    model.accumulate_gradients(&acts, &resid, &mut gw, &mut gb);

    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for l in 0..model.weights.len() {
        for o in 0..model.weights[l].len() {
            for i in 0..model.weights[l][o].len() {
                let analytic = gw[l][o][i];
                let orig = probe.weights[l][o][i];
                probe.weights[l][o][i] = orig + h;
                let plus = loss(&probe);
                probe.weights[l][o][i] = orig - h;
                let minus = loss(&probe);
                probe.weights[l][o][i] = orig;
                let numeric = (plus - minus) / (2.0 * h);
                worst = worst.max(relative_deviation(analytic, numeric));
            }
            let analytic = gb[l][o];
            let orig = probe.biases[l][o];
            probe.biases[l][o] = orig + h;
            let plus = loss(&probe);
            probe.biases[l][o] = orig - h;
            let minus = loss(&probe);
            probe.biases[l][o] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_deviation(analytic, numeric));
        }
    }
    Ok(worst)
}

fn relative_deviation(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::AxisBox;

    fn region_11() -> Region {
        Region::solid(1, AxisBox::new(vec![-1.0], vec![1.0]).unwrap()).unwrap()
    }

    fn quick_config(epochs: usize, seed: u64) -> FitConfig {
        FitConfig {
            node_budget: 128,
            epochs,
            seed,
            ..FitConfig::default()
        }
    }

    #[test]
    fn constant_targets_are_learnable_through_the_biases() {
        let c = 0.7;
        let target = FunctionHandle::constant("c", vec![c]);
        let (_, trace) = fit_mlp(
            &target,
            &region_11(),
            &MeasureSpec::lebesgue(1),
            &[1, 8, 1],
            Activation::Tanh,
            &quick_config(500, 3),
        )
        .unwrap();
        assert!(
            trace.final_l2_error < 0.05 * c + 0.01,
            "{}",
            trace.final_l2_error
        );
    }

    #[test]
    fn zero_epochs_return_the_seeded_initialization() {
        let target = FunctionHandle::constant("c", vec![1.0]);
        let (trained, _) = fit_mlp(
            &target,
            &region_11(),
            &MeasureSpec::lebesgue(1),
            &[1, 4, 1],
            Activation::Tanh,
            &quick_config(0, 9),
        )
        .unwrap();
        let fresh = MlpModel::init(&[1, 4, 1], Activation::Tanh, 9).unwrap();
        assert_eq!(trained, fresh);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let target = FunctionHandle::scalar("sin", |x| x[0].sin());
        let run = || {
            fit_mlp(
                &target,
                &region_11(),
                &MeasureSpec::lebesgue(1),
                &[1, 6, 1],
                Activation::Tanh,
                &quick_config(200, 21),
            )
            .unwrap()
            .0
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        for (wa, wb) in a.weights.iter().flatten().flatten().zip(b.weights.iter().flatten().flatten()) {
            assert_eq!(wa.to_bits(), wb.to_bits());
        }
    }

    #[test]
    fn minibatch_training_is_deterministic_too() {
        let target = FunctionHandle::scalar("sin", |x| x[0].sin());
        let cfg = FitConfig {
            batch_size: 16,
            ..quick_config(50, 5)
        };
        let run = || {
            fit_mlp(
                &target,
                &region_11(),
                &MeasureSpec::lebesgue(1),
                &[1, 4, 1],
                Activation::Tanh,
                &cfg,
            )
            .unwrap()
            .0
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn runaway_learning_rates_abort_with_the_epoch() {
        let target = FunctionHandle::scalar("sin", |x| x[0].sin());
        let cfg = FitConfig {
            learning_rate: 1e6,
            ..quick_config(50, 1)
        };
        let err = fit_mlp(
            &target,
            &region_11(),
            &MeasureSpec::lebesgue(1),
            &[1, 8, 1],
            Activation::Tanh,
            &cfg,
        )
        .unwrap_err();
        assert!(matches!(err, FitError::Divergence { .. }));
    }

    #[test]
    fn gradients_match_finite_differences_on_seeded_models() {
        for seed in [0u64, 1] {
            let model = MlpModel::init(&[1, 4, 1], Activation::Tanh, seed).unwrap();
            let dev = gradient_check(&model, &[0.37], 1e-5).unwrap();
            assert!(dev < 1e-5, "seed {seed}: {dev}");
        }
    }

    #[test]
    fn gradient_check_handles_the_all_zero_model() {
        let widths = vec![1usize, 4, 1];
        let weights = vec![vec![vec![0.0]; 4], vec![vec![0.0; 4]]];
        let biases = vec![vec![0.0; 4], vec![0.0]];
        let model =
            MlpModel::with_parameters(widths, Activation::Tanh, weights, biases).unwrap();
        let dev = gradient_check(&model, &[0.0], 1e-5).unwrap();
        assert!(dev < 1e-6, "{dev}");
    }

    #[test]
    fn gradient_check_is_stable_across_the_step_range() {
        let model = MlpModel::init(&[1, 4, 1], Activation::Tanh, 4).unwrap();
        let d1 = gradient_check(&model, &[0.2], 1e-5).unwrap();
        let d2 = gradient_check(&model, &[0.2], 5e-5).unwrap();
        assert!(d1 < 1e-5 && d2 < 1e-5, "{d1} vs {d2}");
    }

    #[test]
    fn gradient_check_rejects_relu_and_bad_steps() {
        let model = MlpModel::init(&[1, 4, 1], Activation::Relu, 0).unwrap();
        assert!(matches!(
            gradient_check(&model, &[0.1], 1e-5),
            Err(FitError::GradientCheckNeedsTanh)
        ));
        let model = MlpModel::init(&[1, 4, 1], Activation::Tanh, 0).unwrap();
        assert!(matches!(
            gradient_check(&model, &[0.1], 1e-3),
            Err(FitError::InvalidGradientStep { .. })
        ));
    }

    #[test]
    fn widths_must_match_the_problem() {
        let target = FunctionHandle::scalar("t", |x| x[0]);
        let err = fit_mlp(
            &target,
            &region_11(),
            &MeasureSpec::lebesgue(1),
            &[2, 4, 1],
            Activation::Tanh,
            &quick_config(1, 0),
        )
        .unwrap_err();
        assert!(matches!(err, FitError::InvalidWidths { .. }));
    }

    #[test]
    fn serialization_round_trip_is_evaluation_exact() {
        let model = MlpModel::init(&[2, 5, 3], Activation::Tanh, 13).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: MlpModel = serde_json::from_str(&json).unwrap();
        let x = [0.3, -0.8];
        for (a, b) in model.evaluate(&x).iter().zip(back.evaluate(&x)) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
