use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::config::ModelConfig;
use super::cost::shape_propagate;
use crate::error::{Error, Result};
use crate::nncore::{
    cross_entropy_from_logits, softmax, softmax_cross_entropy_grad, GradTape, Layer, Mode, Network, Scalar, Tensor2,
};
use crate::sigdata::{window_tensor, ChannelKind, Recording, WINDOW_SAMPLES};

/// Flat learnable parameters in checkpoint order: for each block the
/// depthwise weights, pointwise weights and pointwise biases (all
/// row-major), then the classifier weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    values: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn from_vec(values: Vec<T>) -> Self {
        ModelParams { values }
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            values: self.values.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// The block-stack classifier: `[depthwise → pointwise → ReLU → max-pool]*`,
/// flatten, dropout, dense, softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableCnn {
    config: ModelConfig,
    network: Network,
}

impl SeparableCnn {
    pub fn new(config: ModelConfig) -> Result<Self> {
        let shapes = shape_propagate(&config)?;
        let mut layers = Vec::with_capacity(config.blocks.len() * 4 + 2);
        for (b, s) in config.blocks.iter().zip(&shapes.blocks) {
            layers.push(Layer::Depthwise {
                channels: s.input.0,
                kernel: b.kernel,
            });
            layers.push(Layer::Pointwise {
                inputs: s.input.0,
                filters: b.filters,
            });
            layers.push(Layer::Relu);
            layers.push(Layer::MaxPool { size: b.pool });
        }
        layers.push(Layer::Dropout { p: config.dropout_p });
        layers.push(Layer::Dense {
            inputs: shapes.flatten_size,
            outputs: config.num_classes,
        });
        let network = Network::new((config.input_channels, config.input_length()), layers)?;
        Ok(SeparableCnn { config, network })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn param_count(&self) -> usize {
        self.network.param_count()
    }

    fn check_params<T: Scalar>(&self, params: &ModelParams<T>) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "{} parameters for a model with {}",
                params.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    fn check_input<T: Scalar>(&self, window: &Tensor2<T>) -> Result<()> {
        let expected = (self.config.input_channels, self.config.input_length());
        if window.shape() != expected {
            return Err(Error::Shape(format!(
                "input window {:?}, model expects {expected:?}",
                window.shape()
            )));
        }
        Ok(())
    }

    pub fn logits<T: Scalar>(
        &self,
        params: &ModelParams<T>,
        window: Tensor2<T>,
        mode: Mode,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Vec<T>> {
        self.check_params(params)?;
        self.check_input(&window)?;
        Ok(self
            .network
            .forward(&params.values, window, mode, rng, None)?
            .into_data())
    }

    /// Class probabilities. Eval mode needs no rng.
    pub fn forward<T: Scalar>(
        &self,
        params: &ModelParams<T>,
        window: Tensor2<T>,
        mode: Mode,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(params, window, mode, rng)?))
    }

    pub fn predict_proba<T: Scalar>(&self, params: &ModelParams<T>, window: Tensor2<T>) -> Result<Vec<f64>> {
        self.forward(params, window, Mode::Eval, None)
    }

    /// Eval-mode cross-entropy for one window.
    pub fn loss<T: Scalar>(&self, params: &ModelParams<T>, window: Tensor2<T>, target: usize) -> Result<f64> {
        cross_entropy_from_logits(&self.logits(params, window, Mode::Eval, None)?, target)
    }

    /// Train-mode cross-entropy and its parameter gradient for one window.
    pub fn loss_and_grad<T: Scalar>(
        &self,
        params: &ModelParams<T>,
        window: Tensor2<T>,
        target: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(f64, Vec<T>)> {
        self.check_params(params)?;
        self.check_input(&window)?;
        let mut tape = GradTape::new();
        let logits = self
            .network
            .forward(&params.values, window, Mode::Train, Some(rng), Some(&mut tape))?;
        let loss = cross_entropy_from_logits(logits.data(), target)?;
        let g = softmax_cross_entropy_grad(&softmax(logits.data()), target)?;
        let upstream = Tensor2::from_vec(g.len(), 1, g.into_iter().map(T::from_f64).collect())?;
        let grads = tape.backward(&self.network, &params.values, upstream, false)?;
        Ok((loss, grads.params))
    }

    /// Class probabilities for every epoch of `rec`, scored or not.
    pub fn predict_recording(
        &self,
        params: &ModelParams<f32>,
        rec: &Recording,
        kinds: &[ChannelKind],
    ) -> Result<Vec<Vec<f64>>> {
        if kinds.len() != self.config.input_channels || self.config.input_length() != WINDOW_SAMPLES {
            return Err(Error::Shape(format!(
                "model input {:?} does not take {}-signal {WINDOW_SAMPLES}-sample windows",
                (self.config.input_channels, self.config.input_length()),
                kinds.len()
            )));
        }
        rec.require_channels(kinds)?;
        (0..rec.epoch_count())
            .into_par_iter()
            .map(|e| self.predict_proba(params, window_tensor(rec, e, kinds)?))
            .collect()
    }

    /// Human-readable location of a flat parameter index, e.g.
    /// `block[2].pointwise.bias[3]`.
    pub fn param_path(&self, index: usize) -> String {
        let layers = self.network.layers();
        let offsets = self.network.offsets();
        for (i, layer) in layers.iter().enumerate().rev() {
            let n = layer.param_count();
            if n == 0 || index < offsets[i] {
                continue;
            }
            let local = index - offsets[i];
            if local >= n {
                break;
            }
            let block = i / 4;
            return match *layer {
                Layer::Depthwise { .. } => format!("block[{block}].depthwise.weight[{local}]"),
                Layer::Pointwise { inputs, filters } => {
                    if local < inputs * filters {
                        format!("block[{block}].pointwise.weight[{local}]")
                    } else {
                        format!("block[{block}].pointwise.bias[{}]", local - inputs * filters)
                    }
                }
                Layer::Dense { inputs, outputs } => {
                    if local < inputs * outputs {
                        format!("classifier.weight[{local}]")
                    } else {
                        format!("classifier.bias[{}]", local - inputs * outputs)
                    }
                }
                _ => unreachable!(),
            };
        }
        format!("param[{index}]")
    }
}

/// He initialisation: every weight ~ N(0, 2 / fan_in), biases zero.
/// Fan-in is `K` for depthwise kernels, the input channel count for
/// pointwise kernels and the flatten size for the classifier.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<ModelParams<f32>> {
    let model = SeparableCnn::new(config.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(model.param_count());
    let mut normal = |fan_in: usize, n: usize, out: &mut Vec<f32>| {
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        out.extend((0..n).map(|_| dist.sample(&mut rng) as f32));
    };
    for layer in model.network().layers() {
        match *layer {
            Layer::Depthwise { channels, kernel } => normal(kernel, channels * kernel, &mut values),
            Layer::Pointwise { inputs, filters } => {
                normal(inputs, inputs * filters, &mut values);
                values.extend(std::iter::repeat(0.0).take(filters));
            }
            Layer::Dense { inputs, outputs } => {
                normal(inputs, inputs * outputs, &mut values);
                values.extend(std::iter::repeat(0.0).take(outputs));
            }
            _ => {}
        }
    }
    debug_assert_eq!(values.len(), model.param_count());
    Ok(ModelParams::from_vec(values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{param_count, BlockSpec};
    use crate::nncore::{GradCheck, Objective};
    use rand::Rng;

    fn tiny(channels: usize) -> ModelConfig {
        ModelConfig {
            input_channels: channels,
            sections: 4,
            section_samples: 16,
            blocks: vec![BlockSpec::new(5, 3, 2), BlockSpec::new(3, 4, 2)],
            dropout_p: 0.5,
            num_classes: 5,
        }
    }

    fn random_window(ch: usize, len: usize, seed: u64) -> Tensor2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor2::from_vec(ch, len, (0..ch * len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_sized() {
        let cfg = ModelConfig::reference(2);
        let a = init_params(&cfg, 7).unwrap();
        assert_eq!(a, init_params(&cfg, 7).unwrap());
        assert_ne!(a, init_params(&cfg, 8).unwrap());
        assert_eq!(a.len(), param_count(&cfg).unwrap().total_params);
    }

    #[test]
    fn first_pointwise_std_is_he() {
        for ch in 1..=3 {
            let cfg = ModelConfig::reference(ch);
            let start = ch * 7;
            let n = 10 * ch;
            let mut draws = Vec::new();
            let mut seed = 0;
            while draws.len() < 10_000 {
                let p = init_params(&cfg, seed).unwrap();
                draws.extend(p.values()[start..start + n].iter().map(|&v| v as f64));
                seed += 1;
            }
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let sd = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / draws.len() as f64).sqrt();
            let target = (2.0 / ch as f64).sqrt();
            assert!((sd / target - 1.0).abs() < 0.2, "ch {ch}: sd {sd} vs {target}");
        }
    }

    #[test]
    fn forward_contract() {
        let cfg = tiny(2);
        let model = SeparableCnn::new(cfg.clone()).unwrap();
        let params = init_params(&cfg, 1).unwrap().cast::<f64>();
        let x = random_window(2, 64, 3);
        let p = model.predict_proba(&params, x.clone()).unwrap();
        assert_eq!(p.len(), 5);
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert_eq!(p, model.predict_proba(&params, x.clone()).unwrap());

        let zero = ModelParams::from_vec(vec![0.0f64; model.param_count()]);
        assert_eq!(model.predict_proba(&zero, x).unwrap(), vec![0.2; 5]);

        assert!(matches!(
            model.predict_proba(&params, random_window(3, 64, 3)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        for (seed, ch) in [(11u64, 1usize), (12, 2), (13, 3)] {
            let cfg = tiny(ch);
            let model = SeparableCnn::new(cfg.clone()).unwrap();
            let params = init_params(&cfg, seed).unwrap().cast::<f64>();
            let x = random_window(ch, 64, seed + 100);
            let check = GradCheck {
                mode: Mode::Train,
                objective: Objective::CrossEntropy {
                    target: (seed % 5) as usize,
                },
                dropout_seed: seed,
                ..GradCheck::default()
            };
            let report = check.run(model.network(), params.values(), &x).unwrap();
            assert!(report.max_rel_error < 1e-4, "{report:?}");
        }
    }

    #[test]
    fn loss_and_grad_agrees_with_network_tape() {
        let cfg = tiny(1);
        let model = SeparableCnn::new(cfg.clone()).unwrap();
        let params = init_params(&cfg, 5).unwrap().cast::<f64>();
        let x = random_window(1, 64, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (loss, grad) = model.loss_and_grad(&params, x.clone(), 3, &mut rng).unwrap();
        assert!(loss.is_finite());
        assert_eq!(grad.len(), model.param_count());
        // finite difference on the classifier bias of the target class
        let idx = model.param_count() - 5 + 3;
        assert_eq!(model.param_path(idx), "classifier.bias[3]");
        let h = 1e-6;
        let eval = |delta: f64| {
            let mut p = params.clone();
            p.values_mut()[idx] += delta;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            model.loss_and_grad(&p, x.clone(), 3, &mut rng).unwrap().0
        };
        let fd = (eval(h) - eval(-h)) / (2.0 * h);
        assert!((fd - grad[idx]).abs() < 1e-6);
    }

    #[test]
    fn param_paths() {
        let model = SeparableCnn::new(tiny(2)).unwrap();
        assert_eq!(model.param_path(0), "block[0].depthwise.weight[0]");
        assert_eq!(model.param_path(10), "block[0].pointwise.weight[0]");
        assert_eq!(model.param_path(16), "block[0].pointwise.bias[0]");
        assert_eq!(model.param_path(19), "block[1].depthwise.weight[0]");
        assert_eq!(
            model.param_path(model.param_count()),
            format!("param[{}]", model.param_count())
        );
    }
}
