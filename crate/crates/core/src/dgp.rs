//! Seeded simulators for the three trial models.
//!
//! * [`Model::PainTrialA`]: binary treatment with arm-specific effects and a
//!   migraine-history covariate `s` that modifies uptake in the active arm.
//! * [`Model::BiomarkerB`]: binary outcome from a clamped linear-probability
//!   model, with biomarker response `z` as the intercurrent event.
//! * [`Model::AdherenceC`]: continuous outcome with a binary adherence `a`.
//!
//! Normal terms are parameterised by standard deviation. Each subject is drawn
//! in order from a single ChaCha8 stream keyed by `derive_seed(seed, 0, DATA)`,
//! so a (config, seed) pair always yields the same dataset.

use crate::config::{self, ConfigError};
use crate::data::{Dataset, TrialRecord};
use crate::regress::inv_logit;
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DgpError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("config {0}")]
    Config(#[from] ConfigError),
}

pub type Result<T> = std::result::Result<T, DgpError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    PainTrialA,
    BiomarkerB,
    AdherenceC,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::PainTrialA => "pain_a",
            Model::BiomarkerB => "biomarker_b",
            Model::AdherenceC => "adherence_c",
        }
    }

    /// Default coefficients. Every key the model reads appears here.
    pub fn defaults(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            Model::PainTrialA => &[
                ("r_prob", 0.5),
                ("s_prob", 0.5),
                ("u_sd", 0.5),
                ("t_intercept", -3.0),
                ("t_r", 2.0),
                ("t_rs", 5.0),
                ("t_u", 1.0),
                ("y_intercept", 63.0),
                ("psi_t", -20.0),
                ("psi_at", -10.0),
                ("y_u", 3.0),
                ("y_noise_scale", 4.0),
                ("y_noise_sd", 3.0),
            ],
            Model::BiomarkerB => &[
                ("t_prob", 0.5),
                ("u_sd", 2.0),
                ("x_intercept", -1.0),
                ("x_u", 1.0),
                ("x_noise_sd", 2.0),
                ("z_intercept", 0.0),
                ("z_t", 3.0),
                ("z_x", 2.0),
                ("z_xt", -4.0),
                ("z_u", -3.0),
                ("alpha0", 0.6),
                ("psi_b", -0.15),
                ("psi_ar", -0.05),
                ("alpha_x", 0.016),
                ("alpha_u", -0.032),
                ("psi_z", 0.01),
                ("py_noise_sd", 0.01),
            ],
            Model::AdherenceC => &[
                ("t_prob", 0.5),
                ("u_sd", 4.0),
                ("x_u", 0.2),
                ("x_noise_sd", 1.0),
                ("z_x", 0.2),
                ("z_u", 0.1),
                ("z_t", 0.2),
                ("z_noise_sd", 1.0),
                ("a_intercept", 1.0),
                ("a_t", 2.0),
                ("a_xt", -6.0),
                ("a_u", 1.0),
                ("a_z", 1.0),
                ("y_intercept", 8.0),
                ("psi_t", -0.3),
                ("alpha_a", -0.4),
                ("y_x", -0.1),
                ("y_u", -0.1),
                ("y_z", -0.1),
                ("y_noise_sd", 0.2),
            ],
        };
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }
}

impl FromStr for Model {
    type Err = DgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pain_a" | "A" | "a" => Ok(Model::PainTrialA),
            "biomarker_b" | "B" | "b" => Ok(Model::BiomarkerB),
            "adherence_c" | "C" | "c" => Ok(Model::AdherenceC),
            other => Err(DgpError::InvalidParam(format!(
                "unknown model `{other}` (expected pain_a, biomarker_b or adherence_c)"
            ))),
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    #[default]
    Confounded,
    /// Equal effects in both arms (`psi_at = psi_t`).
    RandomizedCompliance,
}

impl FromStr for Variant {
    type Err = DgpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confounded" => Ok(Variant::Confounded),
            "randomized_compliance" => Ok(Variant::RandomizedCompliance),
            other => Err(DgpError::InvalidParam(format!(
                "unknown variant `{other}` (expected confounded or randomized_compliance)"
            ))),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Confounded => "confounded",
            Variant::RandomizedCompliance => "randomized_compliance",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub model: Model,
    pub n: usize,
    pub params: BTreeMap<String, f64>,
    pub seed: u64,
    pub variant: Variant,
}

impl DgpConfig {
    pub fn new(model: Model, n: usize, seed: u64) -> Self {
        Self {
            model,
            n,
            params: model.defaults(),
            seed,
            variant: Variant::Confounded,
        }
    }

    /// Switch variant; the randomized-compliance variant resets `psi_at` to
    /// the current `psi_t`.
    pub fn with_variant(mut self, variant: Variant) -> Result<Self> {
        if variant == Variant::RandomizedCompliance {
            if self.model != Model::PainTrialA {
                return Err(DgpError::InvalidParam(format!(
                    "variant randomized_compliance applies to pain_a only, not {}",
                    self.model
                )));
            }
            let psi_t = self.params["psi_t"];
            self.params.insert("psi_at".into(), psi_t);
        }
        self.variant = variant;
        Ok(self)
    }

    /// Override one coefficient; unknown names are rejected.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        match self.params.get_mut(key) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(DgpError::InvalidParam(format!(
                "`{key}` is not a parameter of {} (known: {})",
                self.model,
                self.params.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    /// Apply `key=value` overrides.
    pub fn apply_overrides<'a>(
        &mut self,
        overrides: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        for item in overrides {
            let (k, v) = item.split_once('=').ok_or_else(|| {
                DgpError::InvalidParam(format!("expected key=value, got `{item}`"))
            })?;
            let value = parse_real(k.trim(), v.trim())?;
            self.set(k.trim(), value)?;
        }
        Ok(())
    }

    /// Parse the flat key-value format: `model`, `n`, `seed` and `variant`
    /// plus any model coefficient. `model` is required; `n` defaults to 1000
    /// and `seed` to 1. Coefficients are applied after the variant.
    pub fn from_config_text(text: &str) -> Result<Self> {
        let entries = config::parse_key_values(text)?;
        let get = |key: &str| {
            entries
                .iter()
                .find(|(_, k, _)| k == key)
                .map(|(_, _, v)| v.as_str())
        };
        let model: Model = get("model")
            .ok_or_else(|| DgpError::InvalidParam("config is missing `model`".into()))?
            .parse()?;
        let n = match get("n") {
            Some(v) => v.parse().map_err(|_| {
                DgpError::InvalidParam(format!("n must be a positive integer, got `{v}`"))
            })?,
            None => 1000,
        };
        let seed = match get("seed") {
            Some(v) => v.parse().map_err(|_| {
                DgpError::InvalidParam(format!("seed must be a 64-bit integer, got `{v}`"))
            })?,
            None => 1,
        };
        let mut cfg = DgpConfig::new(model, n, seed);
        if let Some(v) = get("variant") {
            cfg = cfg.with_variant(v.parse()?)?;
        }
        for (line, k, v) in &entries {
            if matches!(k.as_str(), "model" | "n" | "seed" | "variant") {
                continue;
            }
            let value = parse_real(k, v)?;
            cfg.set(k, value)
                .map_err(|e| DgpError::InvalidParam(format!("line {line}: {e}")))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(DgpError::InvalidParam("n must be at least 1".into()));
        }
        for (k, &v) in &self.params {
            if !v.is_finite() {
                return Err(DgpError::InvalidParam(format!(
                    "`{k}` must be finite, got {v}"
                )));
            }
            if (k.ends_with("_sd") || k.ends_with("_scale")) && v < 0.0 {
                return Err(DgpError::InvalidParam(format!(
                    "`{k}` is a standard deviation and must be >= 0, got {v}"
                )));
            }
            if k.ends_with("_prob") && !(0.0..=1.0).contains(&v) {
                return Err(DgpError::InvalidParam(format!(
                    "`{k}` is a probability, got {v}"
                )));
            }
        }
        if self.variant == Variant::RandomizedCompliance && self.model != Model::PainTrialA {
            return Err(DgpError::InvalidParam(
                "variant randomized_compliance applies to pain_a only".into(),
            ));
        }
        Ok(())
    }

    fn p(&self, key: &str) -> f64 {
        self.params[key]
    }
}

fn parse_real(key: &str, v: &str) -> Result<f64> {
    v.parse()
        .map_err(|_| DgpError::InvalidParam(format!("`{key}` must be a real number, got `{v}`")))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTrial {
    pub data: Dataset,
    /// Subjects whose outcome probability fell outside [0, 1] and was clamped.
    pub clamp_events: usize,
}

impl SimulatedTrial {
    pub fn clamp_rate(&self) -> f64 {
        self.clamp_events as f64 / self.data.len() as f64
    }
}

fn normal(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sd * z
}

fn bern(rng: &mut ChaCha8Rng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

pub fn generate(cfg: &DgpConfig) -> Result<SimulatedTrial> {
    cfg.validate()?;
    let mut rng = rng::stream_rng(cfg.seed, 0, rng::stream::DATA);
    let mut records = Vec::with_capacity(cfg.n);
    let mut clamp_events = 0;
    let covariate = match cfg.model {
        Model::PainTrialA => "s",
        Model::BiomarkerB | Model::AdherenceC => "x",
    };
    for _ in 0..cfg.n {
        let rec = match cfg.model {
            Model::PainTrialA => draw_a(cfg, &mut rng),
            Model::BiomarkerB => {
                let (rec, clamped) = draw_b(cfg, &mut rng);
                clamp_events += usize::from(clamped);
                rec
            }
            Model::AdherenceC => draw_c(cfg, &mut rng),
        };
        records.push(rec);
    }
    let data = Dataset::new(vec![covariate.to_string()], records)
        .expect("simulated records are well formed");
    Ok(SimulatedTrial { data, clamp_events })
}

fn draw_a(c: &DgpConfig, rng: &mut ChaCha8Rng) -> TrialRecord {
    let r = bern(rng, c.p("r_prob"));
    let s = bern(rng, c.p("s_prob"));
    let u = normal(rng, c.p("u_sd"));
    let (rf, sf) = (f64::from(r), f64::from(s));
    let eta = c.p("t_intercept") + c.p("t_r") * rf + c.p("t_rs") * rf * sf + c.p("t_u") * u;
    let t = bern(rng, inv_logit(eta));
    let tf = f64::from(t);
    let eps = normal(rng, c.p("y_noise_sd"));
    let y = c.p("y_intercept")
        + c.p("psi_t") * tf * rf
        + c.p("psi_at") * tf * (1.0 - rf)
        + c.p("y_u") * u
        + c.p("y_noise_scale") * eps;
    let mut rec = TrialRecord::new(r, t, y);
    rec.u = Some(u);
    rec.covariates = vec![sf];
    rec
}

fn draw_b(c: &DgpConfig, rng: &mut ChaCha8Rng) -> (TrialRecord, bool) {
    let t = bern(rng, c.p("t_prob"));
    let u = normal(rng, c.p("u_sd"));
    let x = c.p("x_intercept") + c.p("x_u") * u + normal(rng, c.p("x_noise_sd"));
    let tf = f64::from(t);
    let eta = c.p("z_intercept")
        + c.p("z_t") * tf
        + c.p("z_x") * x
        + c.p("z_xt") * x * tf
        + c.p("z_u") * u;
    let z = bern(rng, inv_logit(eta));
    let zf = f64::from(z);
    let py = c.p("alpha0")
        + c.p("psi_b") * zf * tf
        + c.p("psi_ar") * zf * (1.0 - tf)
        + c.p("alpha_x") * x
        + c.p("alpha_u") * u
        + c.p("psi_z") * zf
        + normal(rng, c.p("py_noise_sd"));
    let clamped = !(0.0..=1.0).contains(&py);
    let y = bern(rng, py.clamp(0.0, 1.0));
    let mut rec = TrialRecord::new(t, t, f64::from(y));
    rec.z = Some(z);
    rec.u = Some(u);
    rec.covariates = vec![x];
    (rec, clamped)
}

fn draw_c(c: &DgpConfig, rng: &mut ChaCha8Rng) -> TrialRecord {
    let t = bern(rng, c.p("t_prob"));
    let u = normal(rng, c.p("u_sd"));
    let x = c.p("x_u") * u + normal(rng, c.p("x_noise_sd"));
    let tf = f64::from(t);
    let z = c.p("z_x") * x + c.p("z_u") * u + c.p("z_t") * tf + normal(rng, c.p("z_noise_sd"));
    let eta = c.p("a_intercept")
        + c.p("a_t") * tf
        + c.p("a_xt") * x * tf
        + c.p("a_u") * u
        + c.p("a_z") * z;
    let a = bern(rng, inv_logit(eta));
    let y = c.p("y_intercept")
        + c.p("psi_t") * tf
        + c.p("alpha_a") * f64::from(a)
        + c.p("y_x") * x
        + c.p("y_u") * u
        + c.p("y_z") * z
        + normal(rng, c.p("y_noise_sd"));
    let mut rec = TrialRecord::new(t, t, y);
    rec.a = Some(a);
    rec.u = Some(u);
    rec.covariates = vec![x];
    rec
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TruthMethod {
    /// Closed form plus one-dimensional normal quadrature.
    Analytic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub values: BTreeMap<String, f64>,
    pub method: TruthMethod,
}

impl Truth {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }
}

/// E[expit(mu + sd * Z)] for standard normal Z, by composite Simpson's rule
/// on [-12, 12].
pub fn expit_normal_mean(mu: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return inv_logit(mu);
    }
    const STEPS: usize = 4000;
    const HALF_WIDTH: f64 = 12.0;
    let h = 2.0 * HALF_WIDTH / STEPS as f64;
    let f = |z: f64| inv_logit(mu + sd * z) * (-0.5 * z * z).exp();
    let mut acc = f(-HALF_WIDTH) + f(HALF_WIDTH);
    for i in 1..STEPS {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(-HALF_WIDTH + i as f64 * h);
    }
    acc * h / 3.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Population values of the estimands each model targets.
///
/// * pain_a: `psi_t`, `psi_at`, `psi_c`, `p_t_given_r1`, `p_t_given_r0`, `policy`
/// * biomarker_b: `psi_plus_star`, `psi_plus_plus`, `p_z_given_t1`,
///   `p_z_given_t0`, `policy`, `policy_in_s_plus_star` (the linear-probability
///   outcome is taken unclamped)
/// * adherence_c: `psi`, `alpha_a`, `p_a_given_t1`, `p_a_given_t0`, `policy`,
///   `policy_in_s_plus_plus`, `policy_in_s_plus_star`
pub fn truth(cfg: &DgpConfig) -> Result<Truth> {
    cfg.validate()?;
    let c = cfg;
    let mut v = BTreeMap::new();
    match c.model {
        Model::PainTrialA => {
            let su = c.p("t_u") * c.p("u_sd");
            let ps = c.p("s_prob");
            let base = c.p("t_intercept");
            let p0 = expit_normal_mean(base, su);
            let p1 = ps * expit_normal_mean(base + c.p("t_r") + c.p("t_rs"), su)
                + (1.0 - ps) * expit_normal_mean(base + c.p("t_r"), su);
            let (psi_t, psi_at) = (c.p("psi_t"), c.p("psi_at"));
            let policy = psi_t * p1 - psi_at * p0;
            v.insert("psi_t".into(), psi_t);
            v.insert("psi_at".into(), psi_at);
            v.insert("psi_c".into(), policy / (p1 - p0));
            v.insert("p_t_given_r1".into(), p1);
            v.insert("p_t_given_r0".into(), p0);
            v.insert("policy".into(), policy);
        }
        Model::BiomarkerB => {
            let p_of = |t: f64| {
                let x_coef = c.p("z_x") + c.p("z_xt") * t;
                let mu = c.p("z_intercept") + c.p("z_t") * t + x_coef * c.p("x_intercept");
                let u_coef = x_coef * c.p("x_u") + c.p("z_u");
                let sd =
                    ((u_coef * c.p("u_sd")).powi(2) + (x_coef * c.p("x_noise_sd")).powi(2)).sqrt();
                expit_normal_mean(mu, sd)
            };
            let (p1, p0) = (p_of(1.0), p_of(0.0));
            let plus_star = c.p("psi_b") + c.p("psi_z");
            let plus_plus = c.p("psi_ar") + c.p("psi_z");
            let policy = plus_star * p1 - plus_plus * p0;
            v.insert("psi_plus_star".into(), plus_star);
            v.insert("psi_plus_plus".into(), plus_plus);
            v.insert("p_z_given_t1".into(), p1);
            v.insert("p_z_given_t0".into(), p0);
            v.insert("policy".into(), policy);
            v.insert("policy_in_s_plus_star".into(), policy / p1);
        }
        Model::AdherenceC => {
            let p_of = |t: f64| {
                let x_coef = c.p("a_xt") * t + c.p("a_z") * c.p("z_x");
                let mu = c.p("a_intercept") + c.p("a_t") * t + c.p("a_z") * c.p("z_t") * t;
                let u_coef = c.p("a_u") + c.p("a_z") * c.p("z_u") + x_coef * c.p("x_u");
                let sd = ((u_coef * c.p("u_sd")).powi(2)
                    + (x_coef * c.p("x_noise_sd")).powi(2)
                    + (c.p("a_z") * c.p("z_noise_sd")).powi(2))
                .sqrt();
                expit_normal_mean(mu, sd)
            };
            let (p1, p0) = (p_of(1.0), p_of(0.0));
            let psi = c.p("psi_t") + c.p("y_z") * c.p("z_t");
            let alpha = c.p("alpha_a");
            v.insert("psi".into(), psi);
            v.insert("alpha_a".into(), alpha);
            v.insert("p_a_given_t1".into(), p1);
            v.insert("p_a_given_t0".into(), p0);
            v.insert("policy".into(), psi + alpha * (p1 - p0));
            v.insert("policy_in_s_plus_plus".into(), psi);
            v.insert("policy_in_s_plus_star".into(), psi + alpha * (p1 - p0) / p1);
        }
    }
    Ok(Truth {
        values: v,
        method: TruthMethod::Analytic,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible() {
        for model in [Model::PainTrialA, Model::BiomarkerB, Model::AdherenceC] {
            let cfg = DgpConfig::new(model, 200, 9);
            assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
            let other = DgpConfig::new(model, 200, 10);
            assert_ne!(generate(&cfg).unwrap().data, generate(&other).unwrap().data);
        }
    }

    #[test]
    fn prefix_stable_in_n() {
        let small = generate(&DgpConfig::new(Model::AdherenceC, 50, 3))
            .unwrap()
            .data;
        let big = generate(&DgpConfig::new(Model::AdherenceC, 80, 3))
            .unwrap()
            .data;
        assert_eq!(small.records(), &big.records()[..50]);
    }

    #[test]
    fn invalid_params() {
        let mut cfg = DgpConfig::new(Model::PainTrialA, 10, 1);
        assert!(cfg.set("nonsense", 1.0).is_err());
        cfg.set("y_noise_sd", -1.0).unwrap();
        assert!(matches!(generate(&cfg), Err(DgpError::InvalidParam(_))));
        assert!(generate(&DgpConfig::new(Model::PainTrialA, 0, 1)).is_err());
        assert!(DgpConfig::new(Model::BiomarkerB, 10, 1)
            .with_variant(Variant::RandomizedCompliance)
            .is_err());
    }

    #[test]
    fn config_text() {
        let cfg = DgpConfig::from_config_text(
            "# test\nmodel = pain_a\nn = 25\nseed = 4\nvariant = randomized_compliance\npsi_t = -7\n",
        )
        .unwrap();
        assert_eq!(cfg.n, 25);
        assert_eq!(cfg.params["psi_t"], -7.0);
        // The variant copies psi_t before later overrides.
        assert_eq!(cfg.params["psi_at"], -20.0);
        assert!(DgpConfig::from_config_text("model = pain_a\nbogus = 1").is_err());
        assert!(DgpConfig::from_config_text("n = 3").is_err());
    }

    #[test]
    fn quadrature_matches_known_values() {
        assert!((expit_normal_mean(0.0, 3.0) - 0.5).abs() < 1e-12);
        assert_eq!(expit_normal_mean(1.0, 0.0), inv_logit(1.0));
        // Symmetry: E[expit(mu + sZ)] + E[expit(-mu + sZ)] = 1.
        let a = expit_normal_mean(1.3, 2.0);
        let b = expit_normal_mean(-1.3, 2.0);
        assert!((a + b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truth_homogeneity_gives_psi_c_equal_psi_t() {
        let cfg = DgpConfig::new(Model::PainTrialA, 10, 1)
            .with_variant(Variant::RandomizedCompliance)
            .unwrap();
        let t = truth(&cfg).unwrap();
        assert!((t.get("psi_c").unwrap() + 20.0).abs() < 1e-12);
    }

    #[test]
    fn truth_defaults() {
        let a = truth(&DgpConfig::new(Model::PainTrialA, 10, 1)).unwrap();
        assert!((a.get("psi_c").unwrap() + 20.9).abs() < 0.1);
        let c = truth(&DgpConfig::new(Model::AdherenceC, 10, 1)).unwrap();
        assert!((c.get("psi").unwrap() + 0.32).abs() < 1e-12);
        assert_eq!(c.method, TruthMethod::Analytic);
    }
}
