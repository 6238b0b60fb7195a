//! Shared partial-VAE machinery. [`PartialVae`] carries an optional
//! conditioning vector (an action one-hot for the conditional model) that is
//! appended to the aggregated encoder features before `f` and to the latent
//! code before the decoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schema::{AttributeKind, FeatureSchema, PartialFeature};
use crate::error::{Error, Result};
use crate::nn::dist::{kl_to_standard_normal, log_sum_exp, sigmoid, softmax, softplus, LN_2PI};
use crate::nn::{Activation, DenseNet, ForwardCache, Matrix, ParamLayout, Parameterized};

/// Lower bound added to every decoder standard deviation (standardized units).
pub const SIGMA_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeDims {
    /// Width of the per-attribute embedding `e_j`.
    pub embed_dim: usize,
    /// Width `K` of the aggregated set representation.
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub h_hidden: Vec<usize>,
    pub f_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Default for VaeDims {
    fn default() -> Self {
        VaeDims {
            embed_dim: 10,
            feature_dim: 10,
            latent_dim: 10,
            h_hidden: vec![],
            f_hidden: vec![20, 20],
            decoder_hidden: vec![20, 20],
        }
    }
}

impl VaeDims {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("embed_dim", self.embed_dim),
            ("feature_dim", self.feature_dim),
            ("latent_dim", self.latent_dim),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        let hidden = self.h_hidden.iter().chain(&self.f_hidden).chain(&self.decoder_hidden);
        if hidden.copied().any(|w| w == 0) {
            return Err(Error::Config("hidden widths must be positive".into()));
        }
        Ok(())
    }
}

/// Trainable parameters: embeddings (one row per attribute), the shared
/// per-attribute net `h`, the posterior net `f`, and the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeParams {
    pub embeddings: Matrix,
    pub h: DenseNet,
    pub f: DenseNet,
    pub decoder: DenseNet,
}

impl VaeParams {
    pub fn zeros_like(&self) -> Self {
        VaeParams {
            embeddings: Matrix::zeros(self.embeddings.rows(), self.embeddings.cols()),
            h: self.h.zeros_like(),
            f: self.f.zeros_like(),
            decoder: self.decoder.zeros_like(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.embeddings.data().iter().all(|v| v.is_finite())
            && self.h.is_finite()
            && self.f.is_finite()
            && self.decoder.is_finite()
    }
}

impl Parameterized for VaeParams {
    fn param_len(&self) -> usize {
        self.embeddings.data().len() + self.h.param_len() + self.f.param_len() + self.decoder.param_len()
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.embeddings.data());
        self.h.write_params(out);
        self.f.write_params(out);
        self.decoder.write_params(out);
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let e = self.embeddings.data_mut();
        let ne = e.len();
        e.copy_from_slice(&src[..ne]);
        let mut at = ne;
        at += self.h.read_params(&src[at..]);
        at += self.f.read_params(&src[at..]);
        at += self.decoder.read_params(&src[at..]);
        at
    }

    fn layout(&self, prefix: &str, out: &mut ParamLayout) {
        out.push(format!("{prefix}.embeddings"), self.embeddings.data().len());
        self.h.layout(&format!("{prefix}.h"), out);
        self.f.layout(&format!("{prefix}.f"), out);
        self.decoder.layout(&format!("{prefix}.decoder"), out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGaussian {
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

impl PosteriorGaussian {
    pub fn std(&self) -> Vec<f64> {
        self.logvar.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.mu
            .iter()
            .zip(&self.logvar)
            .map(|(m, lv)| {
                let e: f64 = StandardNormal.sample(rng);
                m + (0.5 * lv).exp() * e
            })
            .collect()
    }

    pub fn kl(&self) -> f64 {
        kl_to_standard_normal(&self.mu, &self.logvar)
    }

    /// Sum of the posterior variances.
    pub fn total_variance(&self) -> f64 {
        self.logvar.iter().map(|lv| lv.exp()).sum()
    }
}

/// Decoder output for one attribute, in the attribute's original units.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadParams {
    Gaussian { mean: f64, std: f64 },
    Categorical { probs: Vec<f64> },
}

impl HeadParams {
    pub fn log_prob(&self, v: f64) -> f64 {
        match self {
            HeadParams::Gaussian { mean, std } => {
                let z = (v - mean) / std;
                -0.5 * LN_2PI - std.ln() - 0.5 * z * z
            }
            HeadParams::Categorical { probs } => {
                let k = v as usize;
                probs.get(k).map_or(f64::NEG_INFINITY, |p| p.ln())
            }
        }
    }

    /// Most likely value (mean for Gaussian heads, mode for categorical).
    pub fn point(&self) -> f64 {
        match self {
            HeadParams::Gaussian { mean, .. } => *mean,
            HeadParams::Categorical { probs } => argmax(probs) as f64,
        }
    }

    /// Sampled value; Gaussian heads return their mean (latent uncertainty
    /// only), categorical heads draw a category.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            HeadParams::Gaussian { mean, .. } => *mean,
            HeadParams::Categorical { probs } => draw_category(probs, rng) as f64,
        }
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn draw_category<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    probs.len() - 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImputeMode {
    /// Posterior-mean latent, most likely value per missing attribute.
    Mean,
    /// Reparameterized latent draw, sampled categorical values.
    Sample,
}

/// Value of the ELBO for one instance, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboParts {
    pub reconstruction: f64,
    pub kl: f64,
}

impl ElboParts {
    pub fn elbo(&self) -> f64 {
        self.reconstruction - self.kl
    }
}

/// Decoded heads for a set of latent draws from one posterior, ready to score
/// many candidate features: `log p(x | x̃) = log mean_ℓ Π_j p(x_j | z_ℓ)`.
#[derive(Debug, Clone)]
pub struct DecodedPosterior {
    components: Vec<Vec<HeadParams>>,
}

impl DecodedPosterior {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let per: Vec<f64> = self
            .components
            .iter()
            .map(|heads| heads.iter().zip(x).map(|(h, &v)| h.log_prob(v)).sum())
            .collect();
        if per.len() == 1 {
            return per[0];
        }
        log_sum_exp(&per) - (per.len() as f64).ln()
    }

    /// Log density restricted to a subset of attributes.
    pub fn log_density_on(&self, x: &[f64], attrs: &[usize]) -> f64 {
        let per: Vec<f64> = self
            .components
            .iter()
            .map(|heads| attrs.iter().map(|&j| heads[j].log_prob(x[j])).sum())
            .collect();
        if per.len() == 1 {
            return per[0];
        }
        log_sum_exp(&per) - (per.len() as f64).ln()
    }

    pub fn components(&self) -> &[Vec<HeadParams>] {
        &self.components
    }
}

struct EncodeTrace {
    contributions: Vec<(usize, f64, ForwardCache)>,
    f_cache: ForwardCache,
    posterior: PosteriorGaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartialVae {
    schema: FeatureSchema,
    dims: VaeDims,
    cond_dim: usize,
    params: VaeParams,
}

impl PartialVae {
    pub fn new(schema: FeatureSchema, dims: VaeDims, cond_dim: usize, seed: u64) -> Result<Self> {
        dims.validate()?;
        if schema.is_empty() {
            return Err(Error::Config("schema has no attributes".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = schema.len();
        let limit = (6.0 / (1 + dims.embed_dim) as f64).sqrt();
        let emb: Vec<f64> = (0..d * dims.embed_dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        let embeddings = Matrix::from_vec(d, dims.embed_dim, emb)?;
        let h = DenseNet::mlp(dims.embed_dim, &dims.h_hidden, dims.feature_dim, Activation::Relu, &mut rng);
        let f = DenseNet::mlp(
            dims.feature_dim + cond_dim,
            &dims.f_hidden,
            2 * dims.latent_dim,
            Activation::Identity,
            &mut rng,
        );
        let decoder = DenseNet::mlp(
            dims.latent_dim + cond_dim,
            &dims.decoder_hidden,
            schema.head_width(),
            Activation::Identity,
            &mut rng,
        );
        Ok(PartialVae {
            schema,
            dims,
            cond_dim,
            params: VaeParams {
                embeddings,
                h,
                f,
                decoder,
            },
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn dims(&self) -> &VaeDims {
        &self.dims
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.dims.latent_dim
    }

    pub fn params(&self) -> &VaeParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut VaeParams {
        &mut self.params
    }

    /// Checks structural consistency, e.g. after deserialization.
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let ok = p.embeddings.rows() == self.schema.len()
            && p.embeddings.cols() == self.dims.embed_dim
            && p.h.input_width() == self.dims.embed_dim
            && p.h.output_width() == self.dims.feature_dim
            && p.f.input_width() == self.dims.feature_dim + self.cond_dim
            && p.f.output_width() == 2 * self.dims.latent_dim
            && p.decoder.input_width() == self.dims.latent_dim + self.cond_dim
            && p.decoder.output_width() == self.schema.head_width();
        if !ok {
            return Err(Error::Shape("model parameters do not match schema/dims".into()));
        }
        if !p.is_finite() {
            return Err(Error::Data("model has non-finite parameters".into()));
        }
        Ok(())
    }

    fn check_cond(&self, cond: &[f64]) -> Result<()> {
        if cond.len() != self.cond_dim {
            return Err(Error::Shape(format!(
                "conditioning vector has length {}, expected {}",
                cond.len(),
                self.cond_dim
            )));
        }
        Ok(())
    }

    fn attr_input(&self, j: usize, v: f64) -> (f64, Vec<f64>) {
        let scalar = self.schema.attributes()[j].encoder_scalar(v);
        let s = self.params.embeddings.row(j).iter().map(|e| e * scalar).collect();
        (scalar, s)
    }

    /// Sum of `h(v_j · e_j)` over the observed attributes, accumulated in
    /// the order given by `order` (any permutation gives the same set).
    pub fn aggregate_in_order(&self, xt: &PartialFeature, order: &[usize]) -> Result<Vec<f64>> {
        self.schema.check_partial(xt)?;
        let mut g = vec![0.0; self.dims.feature_dim];
        for &j in order {
            if xt.is_missing(j) {
                continue;
            }
            let (_, s) = self.attr_input(j, xt.values()[j]);
            let out = self.params.h.predict(&s)?;
            for (gi, o) in g.iter_mut().zip(out) {
                *gi += o;
            }
        }
        Ok(g)
    }

    pub fn aggregate(&self, xt: &PartialFeature) -> Result<Vec<f64>> {
        let order: Vec<usize> = (0..xt.len()).collect();
        self.aggregate_in_order(xt, &order)
    }

    pub fn posterior_from_aggregate(&self, g: &[f64], cond: &[f64]) -> Result<PosteriorGaussian> {
        self.check_cond(cond)?;
        let mut input = g.to_vec();
        input.extend_from_slice(cond);
        let out = self.params.f.predict(&input)?;
        let dz = self.dims.latent_dim;
        Ok(PosteriorGaussian {
            mu: out[..dz].to_vec(),
            logvar: out[dz..].to_vec(),
        })
    }

    pub fn encode(&self, xt: &PartialFeature, cond: &[f64]) -> Result<PosteriorGaussian> {
        let g = self.aggregate(xt)?;
        self.posterior_from_aggregate(&g, cond)
    }

    fn encode_traced(&self, xt: &PartialFeature, cond: &[f64]) -> Result<EncodeTrace> {
        self.schema.check_partial(xt)?;
        self.check_cond(cond)?;
        let mut g = vec![0.0; self.dims.feature_dim];
        let mut contributions = Vec::with_capacity(xt.len());
        for j in xt.observed() {
            let (scalar, s) = self.attr_input(j, xt.values()[j]);
            let (out, cache) = self.params.h.forward(&s)?;
            for (gi, o) in g.iter_mut().zip(&out) {
                *gi += o;
            }
            contributions.push((j, scalar, cache));
        }
        g.extend_from_slice(cond);
        let (out, f_cache) = self.params.f.forward(&g)?;
        let dz = self.dims.latent_dim;
        Ok(EncodeTrace {
            contributions,
            f_cache,
            posterior: PosteriorGaussian {
                mu: out[..dz].to_vec(),
                logvar: out[dz..].to_vec(),
            },
        })
    }

    pub fn decode_raw(&self, z: &[f64], cond: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dims.latent_dim {
            return Err(Error::Shape(format!(
                "latent vector has length {}, expected {}",
                z.len(),
                self.dims.latent_dim
            )));
        }
        self.check_cond(cond)?;
        let mut input = z.to_vec();
        input.extend_from_slice(cond);
        self.params.decoder.predict(&input)
    }

    /// Converts raw decoder outputs into per-attribute distributions.
    /// Categorical heads use `p_j ∝ exp(−s_j)`.
    pub fn heads_from_raw(&self, raw: &[f64]) -> Vec<HeadParams> {
        let mut at = 0;
        self.schema
            .attributes()
            .iter()
            .map(|a| {
                let head = &raw[at..at + a.head_width()];
                at += a.head_width();
                match *a {
                    AttributeKind::Continuous { mean, std } => HeadParams::Gaussian {
                        mean: mean + std * head[0],
                        std: std * (softplus(head[1]) + SIGMA_FLOOR),
                    },
                    AttributeKind::Categorical { .. } => {
                        let neg: Vec<f64> = head.iter().map(|s| -s).collect();
                        HeadParams::Categorical { probs: softmax(&neg) }
                    }
                }
            })
            .collect()
    }

    pub fn decode(&self, z: &[f64], cond: &[f64]) -> Result<Vec<HeadParams>> {
        Ok(self.heads_from_raw(&self.decode_raw(z, cond)?))
    }

    /// `log p(v | head)` for attribute `j`; when `grad` is given, adds
    /// `scale · ∂/∂head` into it.
    fn attr_log_lik(&self, j: usize, v: f64, head: &[f64], grad: Option<(&mut [f64], f64)>) -> f64 {
        match self.schema.attributes()[j] {
            AttributeKind::Continuous { mean, std } => {
                let y = (v - mean) / std;
                let mu = head[0];
                let sig = softplus(head[1]) + SIGMA_FLOOR;
                let r = y - mu;
                let ll = -0.5 * LN_2PI - sig.ln() - std.ln() - 0.5 * r * r / (sig * sig);
                if let Some((g, scale)) = grad {
                    g[0] += scale * r / (sig * sig);
                    let dsig = -1.0 / sig + r * r / (sig * sig * sig);
                    g[1] += scale * dsig * sigmoid(head[1]);
                }
                ll
            }
            AttributeKind::Categorical { .. } => {
                let k = v as usize;
                let neg: Vec<f64> = head.iter().map(|s| -s).collect();
                let lse = log_sum_exp(&neg);
                let ll = neg[k] - lse;
                if let Some((g, scale)) = grad {
                    for (t, gt) in g.iter_mut().enumerate() {
                        let p = (neg[t] - lse).exp();
                        *gt += scale * (p - if t == k { 1.0 } else { 0.0 });
                    }
                }
                ll
            }
        }
    }

    /// ELBO of `target`'s observed attributes given the encoder input `enc`,
    /// using the supplied standard-normal draws (one latent sample per entry
    /// of `noise`). When `grads` is given, adds `scale · ∇ELBO` into it.
    pub fn elbo_with_noise(
        &self,
        enc: &PartialFeature,
        target: &PartialFeature,
        cond: &[f64],
        noise: &[Vec<f64>],
        grads: Option<(&mut VaeParams, f64)>,
    ) -> Result<ElboParts> {
        if noise.is_empty() {
            return Err(Error::Argument("at least one latent sample is required".into()));
        }
        self.schema.check_partial(target)?;
        let trace = self.encode_traced(enc, cond)?;
        let dz = self.dims.latent_dim;
        let mu = &trace.posterior.mu;
        let lv = &trace.posterior.logvar;
        let sd: Vec<f64> = lv.iter().map(|l| (0.5 * l).exp()).collect();
        let offsets = self.schema.head_offsets();
        let n_mc = noise.len() as f64;
        let (mut grads, scale) = match grads {
            Some((g, s)) => (Some(g), s),
            None => (None, 0.0),
        };
        let mut d_mu = vec![0.0; dz];
        let mut d_lv = vec![0.0; dz];
        let mut recon = 0.0;
        for eps in noise {
            if eps.len() != dz {
                return Err(Error::Shape("noise vector length must equal latent dim".into()));
            }
            let mut input: Vec<f64> = (0..dz).map(|k| mu[k] + sd[k] * eps[k]).collect();
            input.extend_from_slice(cond);
            let (raw, dec_cache) = self.params.decoder.forward(&input)?;
            let mut g_raw = vec![0.0; raw.len()];
            let mut sample_ll = 0.0;
            for j in target.observed() {
                let w = self.schema.attributes()[j].head_width();
                let o = offsets[j];
                let head = &raw[o..o + w];
                let grad = grads.is_some().then_some((&mut g_raw[o..o + w], scale / n_mc));
                sample_ll += self.attr_log_lik(j, target.values()[j], head, grad);
            }
            recon += sample_ll / n_mc;
            if let Some(g) = grads.as_deref_mut() {
                let d_in = self.params.decoder.backward_accumulate(&dec_cache, &g_raw, &mut g.decoder)?;
                for k in 0..dz {
                    d_mu[k] += d_in[k];
                    d_lv[k] += d_in[k] * eps[k] * 0.5 * sd[k];
                }
            }
        }
        let kl = kl_to_standard_normal(mu, lv);
        if let Some(g) = grads {
            for k in 0..dz {
                d_mu[k] -= scale * mu[k];
                d_lv[k] -= scale * 0.5 * (lv[k].exp() - 1.0);
            }
            let mut d_out = d_mu;
            d_out.extend_from_slice(&d_lv);
            let d_in = self.params.f.backward_accumulate(&trace.f_cache, &d_out, &mut g.f)?;
            let dg = &d_in[..self.dims.feature_dim];
            for (j, scalar, cache) in &trace.contributions {
                let d_s = self.params.h.backward_accumulate(cache, dg, &mut g.h)?;
                for (ge, ds) in g.embeddings.row_mut(*j).iter_mut().zip(&d_s) {
                    *ge += ds * scalar;
                }
            }
        }
        Ok(ElboParts {
            reconstruction: recon,
            kl,
        })
    }

    pub fn draw_noise<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..self.dims.latent_dim).map(|_| StandardNormal.sample(rng)).collect())
            .collect()
    }

    pub fn elbo<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        cond: &[f64],
        rng: &mut R,
        n_mc: usize,
    ) -> Result<ElboParts> {
        if n_mc == 0 {
            return Err(Error::Argument("n_mc must be >= 1".into()));
        }
        let noise = self.draw_noise(n_mc, rng);
        self.elbo_with_noise(xt, xt, cond, &noise, None)
    }

    /// Fills the missing attributes of `xt` from heads decoded at `z`;
    /// observed attributes are copied verbatim.
    fn fill<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        heads: &[HeadParams],
        mode: ImputeMode,
        rng: &mut R,
    ) -> Vec<f64> {
        (0..xt.len())
            .map(|j| match xt.get(j) {
                Some(v) => v,
                None => match mode {
                    ImputeMode::Mean => heads[j].point(),
                    ImputeMode::Sample => heads[j].draw(rng),
                },
            })
            .collect()
    }

    pub fn impute<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        cond: &[f64],
        mode: ImputeMode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        self.schema.check_partial(xt)?;
        if xt.is_complete() {
            return Ok(xt.values().to_vec());
        }
        let post = self.encode(xt, cond)?;
        let z = match mode {
            ImputeMode::Mean => post.mu.clone(),
            ImputeMode::Sample => post.sample(rng),
        };
        let heads = self.decode(&z, cond)?;
        Ok(self.fill(xt, &heads, mode, rng))
    }

    /// Decodes `draws` latent points from `q(Z | x̃)`; `draws == 1` uses the
    /// posterior mean and consumes no randomness.
    pub fn decoded_posterior<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        cond: &[f64],
        draws: usize,
        rng: &mut R,
    ) -> Result<DecodedPosterior> {
        if draws == 0 {
            return Err(Error::Argument("posterior density needs L >= 1".into()));
        }
        let post = self.encode(xt, cond)?;
        let components = if draws == 1 {
            vec![self.decode(&post.mu, cond)?]
        } else {
            (0..draws)
                .map(|_| self.decode(&post.sample(rng), cond))
                .collect::<Result<_>>()?
        };
        Ok(DecodedPosterior { components })
    }

    pub fn posterior_log_density<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        xt: &PartialFeature,
        cond: &[f64],
        draws: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.schema.check_complete(x)?;
        Ok(self.decoded_posterior(xt, cond, draws, rng)?.log_density(x))
    }

    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        xt: &PartialFeature,
        cond: &[f64],
        t: usize,
        rng: &mut R,
    ) -> Result<Vec<Vec<f64>>> {
        if t == 0 {
            return Err(Error::Argument("t must be >= 1".into()));
        }
        self.schema.check_partial(xt)?;
        let post = self.encode(xt, cond)?;
        (0..t)
            .map(|_| {
                let z = post.sample(rng);
                let heads = self.decode(&z, cond)?;
                Ok(self.fill(xt, &heads, ImputeMode::Sample, rng))
            })
            .collect()
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, u: usize, cond: &[f64], rng: &mut R) -> Result<Vec<Vec<f64>>> {
        if u == 0 {
            return Err(Error::Argument("u must be >= 1".into()));
        }
        let blank = PartialFeature::all_missing(self.schema.len());
        (0..u)
            .map(|_| {
                let z: Vec<f64> = (0..self.dims.latent_dim).map(|_| StandardNormal.sample(rng)).collect();
                let heads = self.decode(&z, cond)?;
                Ok(self.fill(&blank, &heads, ImputeMode::Sample, rng))
            })
            .collect()
    }
}
