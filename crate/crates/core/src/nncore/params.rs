use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use super::config::{AttentionMode, ModelConfig};
use super::real::Real;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<F> {
    pub ln1_g: Array2<F>,
    pub ln1_b: Array2<F>,
    pub wq: Array2<F>,
    pub bq: Array2<F>,
    pub wk: Array2<F>,
    pub bk: Array2<F>,
    pub wv: Array2<F>,
    pub bv: Array2<F>,
    pub wo: Array2<F>,
    pub bo: Array2<F>,
    pub ln2_g: Array2<F>,
    pub ln2_b: Array2<F>,
    pub w1: Array2<F>,
    pub b1: Array2<F>,
    pub w2: Array2<F>,
    pub b2: Array2<F>,
}

/// Weights of one network. Vectors (biases, norm gains) are stored as
/// `1 × n` rows so every tensor shares the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<F> {
    pub config: ModelConfig,
    pub tok_emb: Array2<F>,
    pub pos_emb: Array2<F>,
    pub audio_w: Array2<F>,
    pub audio_b: Array2<F>,
    pub layers: Vec<LayerParams<F>>,
    pub lnf_g: Array2<F>,
    pub lnf_b: Array2<F>,
    pub w_out: Array2<F>,
    pub b_out: Array2<F>,
}

pub type DenoiserParams<F> = Params<F>;
pub type ARParams<F> = Params<F>;
/// Gradients share the parameter layout.
pub type Grads<F> = Params<F>;

/// How a tensor is initialised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Role {
    Matrix,
    Bias,
    Gain,
}

impl<F: Real> LayerParams<F> {
    fn zeros(c: &ModelConfig) -> Self {
        let (d, h) = (c.model_dim, c.ffn_dim);
        let z = |r, k| Array2::zeros((r, k));
        Self {
            ln1_g: z(1, d),
            ln1_b: z(1, d),
            wq: z(d, d),
            bq: z(1, d),
            wk: z(d, d),
            bk: z(1, d),
            wv: z(d, d),
            bv: z(1, d),
            wo: z(d, d),
            bo: z(1, d),
            ln2_g: z(1, d),
            ln2_b: z(1, d),
            w1: z(d, h),
            b1: z(1, h),
            w2: z(h, d),
            b2: z(1, d),
        }
    }
}

macro_rules! layer_fields {
    ($m:ident) => {
        $m!(
            ln1_g Gain, ln1_b Bias, wq Matrix, bq Bias, wk Matrix, bk Bias, wv Matrix,
            bv Bias, wo Matrix, bo Bias, ln2_g Gain, ln2_b Bias, w1 Matrix, b1 Bias,
            w2 Matrix, b2 Bias
        )
    };
}

impl<F: Real> Params<F> {
    /// All-zero tensors with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, d, p, f) = (config.vocab_size, config.model_dim, config.max_positions, config.feature_dim);
        Self {
            config: config.clone(),
            tok_emb: Array2::zeros((v, d)),
            pos_emb: Array2::zeros((p, d)),
            audio_w: Array2::zeros((f, d)),
            audio_b: Array2::zeros((1, d)),
            layers: (0..config.num_layers).map(|_| LayerParams::zeros(config)).collect(),
            lnf_g: Array2::zeros((1, d)),
            lnf_b: Array2::zeros((1, d)),
            w_out: Array2::zeros((d, v)),
            b_out: Array2::zeros((1, v)),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config)
    }

    pub fn is_causal(&self) -> bool {
        self.config.attention == AttentionMode::Causal
    }

    /// Named tensors in a fixed canonical order (checkpoint and optimizer order).
    pub fn tensors(&self) -> Vec<(String, &Array2<F>)> {
        self.tensors_with_role().into_iter().map(|(n, _, t)| (n, t)).collect()
    }

    pub(crate) fn tensors_with_role(&self) -> Vec<(String, Role, &Array2<F>)> {
        let mut out = vec![
            ("tok_emb".to_string(), Role::Matrix, &self.tok_emb),
            ("pos_emb".to_string(), Role::Matrix, &self.pos_emb),
            ("audio_w".to_string(), Role::Matrix, &self.audio_w),
            ("audio_b".to_string(), Role::Bias, &self.audio_b),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            macro_rules! push {
                ($($f:ident $r:ident),*) => {
                    $(out.push((format!("layers.{i}.{}", stringify!($f)), Role::$r, &l.$f));)*
                };
            }
            layer_fields!(push);
        }
        out.push(("lnf_g".to_string(), Role::Gain, &self.lnf_g));
        out.push(("lnf_b".to_string(), Role::Bias, &self.lnf_b));
        out.push(("w_out".to_string(), Role::Matrix, &self.w_out));
        out.push(("b_out".to_string(), Role::Bias, &self.b_out));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Array2<F>)> {
        self.tensors_mut_with_role().into_iter().map(|(n, _, t)| (n, t)).collect()
    }

    pub(crate) fn tensors_mut_with_role(&mut self) -> Vec<(String, Role, &mut Array2<F>)> {
        let mut out = vec![
            ("tok_emb".to_string(), Role::Matrix, &mut self.tok_emb),
            ("pos_emb".to_string(), Role::Matrix, &mut self.pos_emb),
            ("audio_w".to_string(), Role::Matrix, &mut self.audio_w),
            ("audio_b".to_string(), Role::Bias, &mut self.audio_b),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            macro_rules! push {
                ($($f:ident $r:ident),*) => {
                    $(out.push((format!("layers.{i}.{}", stringify!($f)), Role::$r, &mut l.$f));)*
                };
            }
            layer_fields!(push);
        }
        out.push(("lnf_g".to_string(), Role::Gain, &mut self.lnf_g));
        out.push(("lnf_b".to_string(), Role::Bias, &mut self.lnf_b));
        out.push(("w_out".to_string(), Role::Matrix, &mut self.w_out));
        out.push(("b_out".to_string(), Role::Bias, &mut self.b_out));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: F) {
        for (_, a) in self.tensors_mut() {
            a.mapv_inplace(|x| x * s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|x| x.is_finite()))
    }

    /// Name of the first tensor holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<String> {
        self.tensors().into_iter().find(|(_, t)| t.iter().any(|x| !x.is_finite())).map(|(n, _)| n)
    }

    pub fn max_abs(&self) -> F {
        self.tensors().iter().flat_map(|(_, t)| t.iter()).fold(F::zero(), |m, x| m.max(x.abs()))
    }
}

/// Draws weights from `N(0, 1/model_dim)` for matrices (embedding tables
/// included), ones for layer-norm gains and zeros for biases. Values are drawn
/// in `f64` in canonical tensor order, so single and double precision models
/// built from the same seed agree up to rounding.
pub fn init_params<F: Real>(config: &ModelConfig, seed: u64) -> Result<Params<F>> {
    config.validate()?;
    if config.precision != F::PRECISION {
        return Err(Error::Config(format!(
            "config precision {:?} does not match element type {:?}",
            config.precision,
            F::PRECISION
        )));
    }
    let mut params = Params::zeros(config);
    let mut rng = seed::rng(seed);
    let normal = Normal::new(0.0, 1.0 / (config.model_dim as f64).sqrt()).map_err(|e| Error::Config(e.to_string()))?;
    for (_, role, t) in params.tensors_mut_with_role() {
        match role {
            Role::Matrix => t.mapv_inplace(|_| F::of(normal.sample(&mut rng))),
            Role::Gain => t.fill(F::one()),
            Role::Bias => {}
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::Precision;

    fn cfg() -> ModelConfig {
        ModelConfig {
            vocab_size: 10,
            model_dim: 8,
            num_layers: 2,
            num_heads: 2,
            ffn_dim: 12,
            max_positions: 16,
            feature_dim: 3,
            attention: AttentionMode::Bidirectional,
            precision: Precision::Double,
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let a = init_params::<f64>(&cfg(), 7).unwrap();
        let b = init_params::<f64>(&cfg(), 7).unwrap();
        let c = init_params::<f64>(&cfg(), 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn init_biases_zero_weights_finite() {
        let p = init_params::<f64>(&cfg(), 3).unwrap();
        assert!(p.all_finite());
        for (name, role, t) in p.tensors_with_role() {
            match role {
                Role::Bias => assert!(t.iter().all(|&x| x == 0.0), "{name}"),
                Role::Gain => assert!(t.iter().all(|&x| x == 1.0), "{name}"),
                Role::Matrix => assert!(t.iter().any(|&x| x != 0.0), "{name}"),
            }
        }
        assert_eq!(p.num_params(), cfg().num_params());
    }

    #[test]
    fn init_rejects_bad_config_and_precision() {
        let bad = ModelConfig { num_heads: 3, ..cfg() };
        assert!(matches!(init_params::<f64>(&bad, 1), Err(Error::Config(_))));
        assert!(matches!(init_params::<f32>(&cfg(), 1), Err(Error::Config(_))));
    }
}
