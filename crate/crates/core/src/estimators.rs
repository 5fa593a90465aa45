//! Estimand estimators for randomized trials with intercurrent events.
//!
//! Effects are on the mean (or risk) difference scale throughout. Each
//! estimate is stamped with the identification assumptions it relies on:
//!
//! | operation | assumptions |
//! |---|---|
//! | [`policy_estimate`] | IV2 |
//! | [`iv_ratio`], [`tsls`] (CACE reading) | IV1, IV2, IV3, Monotonicity |
//! | [`iv_ratio`], [`tsls`] (Hypothetical reading) | IV1, IV2, IV3, Homogeneity |
//! | [`extended_tsls`] | IV1, IV2, Monotonicity, NoTxSInteraction |
//! | [`policy_in_s_plus_star`] | IV1, IV2, IV3 |
//! | [`adherence_estimands`] | IV1, IV2, NoTxSInteraction |
//! | [`naive_estimates`] | none |
//!
//! Potential outcomes never appear as data; the exclusion restriction and
//! friends are encoded only through these stamps.

use crate::data::{DataError, Dataset};
use crate::regress::{self, DesignMatrix, RegressError, RegressionFit};
use crate::rng;
use rand::Rng;
use std::fmt;
use thiserror::Error;

/// Minimum |cov(instrument, exposure)| and first-stage slope.
pub const WEAK_INSTRUMENT_TOL: f64 = 1e-10;
/// Cells of the defier grid whose complier fractions fall below this are undefined.
pub const GRID_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("no subjects with {column} = {level}")]
    EmptyArm { column: String, level: u8 },
    #[error("empty stratum: {0}")]
    EmptyStratum(String),
    #[error("negative complier fraction: P(T=1|R=1) = {p1:.6} < P(T=1|R=0) = {p0:.6}")]
    NegativeComplierFraction { p1: f64, p0: f64 },
    #[error("first-stage difference {0:.3e} is below the weak-instrument tolerance")]
    WeakInstrument(f64),
    #[error("weak interaction: coefficient {coef:.6} against bootstrap spread {spread:.6}")]
    WeakInteraction { coef: f64, spread: f64 },
    #[error("adherence order violated: P(A=1|T=1) = {p1:.6} <= P(A=1|T=0) = {p0:.6}")]
    AdherenceOrderViolated { p1: f64, p0: f64 },
    #[error("column `{0}` is missing")]
    MissingColumn(String),
    #[error("column `{0}` must be binary")]
    NotBinary(String),
    #[error("invalid estimator specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Regression(#[from] RegressError),
}

impl EstimateError {
    pub fn kind(&self) -> &'static str {
        match self {
            EstimateError::EmptyArm { .. } => "EmptyArm",
            EstimateError::EmptyStratum(_) => "EmptyStratum",
            EstimateError::NegativeComplierFraction { .. } => "NegativeComplierFraction",
            EstimateError::WeakInstrument(_) => "WeakInstrument",
            EstimateError::WeakInteraction { .. } => "WeakInteraction",
            EstimateError::AdherenceOrderViolated { .. } => "AdherenceOrderViolated",
            EstimateError::MissingColumn(_) => "MissingColumn",
            EstimateError::NotBinary(_) => "NotBinary",
            EstimateError::InvalidSpec(_) => "InvalidSpec",
            EstimateError::Regression(e) => e.kind(),
        }
    }
}

pub type Result<T> = std::result::Result<T, EstimateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimand {
    Policy,
    Cace,
    Hypothetical,
    PsiT,
    PsiAt,
    PsiC,
    PolicyInSPlusStar,
    HypotheticalInSPlusStar,
    PolicyInSPlusPlus,
    AlphaA,
    Psi,
    AsTreated,
    PerProtocol,
    Responder,
}

impl Estimand {
    pub fn name(self) -> &'static str {
        match self {
            Estimand::Policy => "Policy",
            Estimand::Cace => "CACE",
            Estimand::Hypothetical => "Hypothetical",
            Estimand::PsiT => "PsiT",
            Estimand::PsiAt => "PsiAt",
            Estimand::PsiC => "PsiC",
            Estimand::PolicyInSPlusStar => "PolicyInSPlusStar",
            Estimand::HypotheticalInSPlusStar => "HypotheticalInSPlusStar",
            Estimand::PolicyInSPlusPlus => "PolicyInSPlusPlus",
            Estimand::AlphaA => "AlphaA",
            Estimand::Psi => "Psi",
            Estimand::AsTreated => "AsTreated",
            Estimand::PerProtocol => "PerProtocol",
            Estimand::Responder => "Responder",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Assumption {
    Iv1,
    Iv2,
    Iv3,
    Monotonicity,
    Homogeneity,
    NoTxSInteraction,
}

impl Assumption {
    pub fn name(self) -> &'static str {
        match self {
            Assumption::Iv1 => "IV1",
            Assumption::Iv2 => "IV2",
            Assumption::Iv3 => "IV3",
            Assumption::Monotonicity => "Monotonicity",
            Assumption::Homogeneity => "Homogeneity",
            Assumption::NoTxSInteraction => "NoTxSInteraction",
        }
    }
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

use Assumption::*;

pub const POLICY_ASSUMPTIONS: &[Assumption] = &[Iv2];
pub const CACE_ASSUMPTIONS: &[Assumption] = &[Iv1, Iv2, Iv3, Monotonicity];
pub const HYPOTHETICAL_ASSUMPTIONS: &[Assumption] = &[Iv1, Iv2, Iv3, Homogeneity];
pub const EXTENDED_TSLS_ASSUMPTIONS: &[Assumption] = &[Iv1, Iv2, Monotonicity, NoTxSInteraction];
pub const S_PLUS_STAR_ASSUMPTIONS: &[Assumption] = &[Iv1, Iv2, Iv3];
pub const ADHERENCE_ASSUMPTIONS: &[Assumption] = &[Iv1, Iv2, NoTxSInteraction];

#[derive(Debug, Clone, PartialEq)]
pub struct EstimandEstimate {
    pub estimand: Estimand,
    pub value: f64,
    pub se: Option<f64>,
    pub assumptions: Vec<Assumption>,
}

impl EstimandEstimate {
    fn new(estimand: Estimand, value: f64, assumptions: &[Assumption]) -> Self {
        Self {
            estimand,
            value,
            se: None,
            assumptions: assumptions.to_vec(),
        }
    }
}

/// The Wald/TSLS estimate under its two readings: the CACE (Monotonicity)
/// and the Hypothetical estimand (Homogeneity). Both carry the same value.
#[derive(Debug, Clone, PartialEq)]
pub struct IvEstimate {
    pub cace: EstimandEstimate,
    pub hypothetical: EstimandEstimate,
}

impl IvEstimate {
    fn new(value: f64) -> Self {
        Self {
            cace: EstimandEstimate::new(Estimand::Cace, value, CACE_ASSUMPTIONS),
            hypothetical: EstimandEstimate::new(
                Estimand::Hypothetical,
                value,
                HYPOTHETICAL_ASSUMPTIONS,
            ),
        }
    }

    pub fn value(&self) -> f64 {
        self.cace.value
    }
}

/// Which columns play instrument, exposure and outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IvRoles {
    pub instrument: String,
    pub exposure: String,
    pub outcome: String,
}

impl Default for IvRoles {
    fn default() -> Self {
        Self {
            instrument: "r".into(),
            exposure: "t".into(),
            outcome: "y".into(),
        }
    }
}

impl IvRoles {
    pub fn new(instrument: &str, exposure: &str, outcome: &str) -> Self {
        Self {
            instrument: instrument.into(),
            exposure: exposure.into(),
            outcome: outcome.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Link {
    #[default]
    Linear,
    Logistic,
}

impl std::str::FromStr for Link {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Link::Linear),
            "logistic" => Ok(Link::Logistic),
            other => Err(EstimateError::InvalidSpec(format!(
                "unknown link `{other}` (expected linear or logistic)"
            ))),
        }
    }
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Linear => "linear",
            Link::Logistic => "logistic",
        })
    }
}

/// Guard against a covariate-by-arm interaction too weak to separate the two
/// effect parameters. The fit fails when the interaction coefficient is
/// smaller than `abs_tol`, or (with `spread_reps > 0`) smaller than
/// `min_ratio` times its bootstrap standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteractionGuard {
    pub abs_tol: f64,
    pub spread_reps: usize,
    pub min_ratio: f64,
    pub seed: u64,
}

impl Default for InteractionGuard {
    fn default() -> Self {
        Self {
            abs_tol: 1e-8,
            spread_reps: 50,
            min_ratio: 2.0,
            seed: 0x5eed,
        }
    }
}

impl InteractionGuard {
    /// Absolute check only.
    pub fn absolute() -> Self {
        Self {
            spread_reps: 0,
            ..Self::default()
        }
    }

    fn check(
        &self,
        x: &DesignMatrix,
        response: &[f64],
        link: Link,
        term: &str,
        coef: f64,
    ) -> Result<()> {
        if coef.is_nan() || coef.abs() <= self.abs_tol {
            return Err(EstimateError::WeakInteraction { coef, spread: 0.0 });
        }
        if self.spread_reps == 0 {
            return Ok(());
        }
        let n = x.rows();
        let mut rng = rng::stream_rng(self.seed, n as u64, rng::stream::GUARD);
        let mut draws = Vec::with_capacity(self.spread_reps);
        let mut idx = vec![0usize; n];
        for _ in 0..self.spread_reps {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
            let xb = x.select_rows(&idx);
            let yb: Vec<f64> = idx.iter().map(|&i| response[i]).collect();
            if let Ok(fit) = fit_link(&xb, &yb, link) {
                draws.push(fit.coef(term).expect("term in design"));
            }
        }
        let spread = sample_sd(&draws).unwrap_or(f64::INFINITY);
        if coef.abs() < self.min_ratio * spread {
            return Err(EstimateError::WeakInteraction { coef, spread });
        }
        Ok(())
    }
}

fn fit_link(x: &DesignMatrix, y: &[f64], link: Link) -> regress::Result<RegressionFit> {
    match link {
        Link::Linear => regress::ols_fit(x, y),
        Link::Logistic => regress::logistic_fit(x, y),
    }
}

fn column(data: &Dataset, name: &str) -> Result<Vec<f64>> {
    data.column(name).map_err(|e| match e {
        DataError::MissingColumn(c) => EstimateError::MissingColumn(c),
        other => EstimateError::InvalidSpec(other.to_string()),
    })
}

fn binary_column(data: &Dataset, name: &str) -> Result<Vec<f64>> {
    let v = column(data, name)?;
    if v.iter().any(|&x| x != 0.0 && x != 1.0) {
        return Err(EstimateError::NotBinary(name.to_string()));
    }
    Ok(v)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub(crate) fn sample_sd(v: &[f64]) -> Option<f64> {
    if v.len() < 2 {
        return None;
    }
    let m = mean(v);
    let ss: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
    Some((ss / (v.len() - 1) as f64).sqrt())
}

/// Mean of `values` among subjects whose `group` equals `level`.
fn group_mean(values: &[f64], group: &[f64], level: f64) -> Option<f64> {
    let (sum, n) = values
        .iter()
        .zip(group)
        .filter(|(_, g)| **g == level)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn arm_means(values: &[f64], arm: &[f64], arm_name: &str) -> Result<(f64, f64)> {
    let m1 = group_mean(values, arm, 1.0).ok_or_else(|| EstimateError::EmptyArm {
        column: arm_name.to_string(),
        level: 1,
    })?;
    let m0 = group_mean(values, arm, 0.0).ok_or_else(|| EstimateError::EmptyArm {
        column: arm_name.to_string(),
        level: 0,
    })?;
    Ok((m1, m0))
}

/// Treatment policy: mean outcome difference between randomized arms.
pub fn policy_estimate(data: &Dataset) -> Result<EstimandEstimate> {
    policy_estimate_by(data, "r", "y")
}

pub fn policy_estimate_by(data: &Dataset, arm: &str, outcome: &str) -> Result<EstimandEstimate> {
    let r = binary_column(data, arm)?;
    let y = column(data, outcome)?;
    let (m1, m0) = arm_means(&y, &r, arm)?;
    Ok(EstimandEstimate::new(
        Estimand::Policy,
        m1 - m0,
        POLICY_ASSUMPTIONS,
    ))
}

/// Principal-strata proportions. Without Monotonicity only the two observed
/// treatment probabilities are identified.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplianceProfile {
    pub p_t_given_r1: f64,
    pub p_t_given_r0: f64,
    pub pi_c: Option<f64>,
    pub pi_at: Option<f64>,
    pub pi_nt: Option<f64>,
    pub pi_d: Option<f64>,
}

impl ComplianceProfile {
    /// Observed first-stage difference P(T=1|R=1) - P(T=1|R=0), which equals
    /// pi_c - pi_d whether or not defiers exist.
    pub fn first_stage_difference(&self) -> f64 {
        self.p_t_given_r1 - self.p_t_given_r0
    }
}

pub fn compliance_profile(data: &Dataset, monotonicity: bool) -> Result<ComplianceProfile> {
    compliance_profile_by(data, &IvRoles::default(), monotonicity)
}

pub fn compliance_profile_by(
    data: &Dataset,
    roles: &IvRoles,
    monotonicity: bool,
) -> Result<ComplianceProfile> {
    let r = binary_column(data, &roles.instrument)?;
    let t = binary_column(data, &roles.exposure)?;
    let (p1, p0) = arm_means(&t, &r, &roles.instrument)?;
    if !monotonicity {
        return Ok(ComplianceProfile {
            p_t_given_r1: p1,
            p_t_given_r0: p0,
            pi_c: None,
            pi_at: None,
            pi_nt: None,
            pi_d: None,
        });
    }
    if p1 < p0 {
        return Err(EstimateError::NegativeComplierFraction { p1, p0 });
    }
    Ok(ComplianceProfile {
        p_t_given_r1: p1,
        p_t_given_r0: p0,
        pi_c: Some(p1 - p0),
        pi_at: Some(p0),
        pi_nt: Some(1.0 - p1),
        pi_d: Some(0.0),
    })
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / (a.len() as f64 - 1.0)
}

/// Ratio of sample covariances cov(R, Y) / cov(R, T).
pub fn iv_ratio(data: &Dataset) -> Result<IvEstimate> {
    iv_ratio_by(data, &IvRoles::default())
}

pub fn iv_ratio_by(data: &Dataset, roles: &IvRoles) -> Result<IvEstimate> {
    let r = binary_column(data, &roles.instrument)?;
    let t = column(data, &roles.exposure)?;
    let y = column(data, &roles.outcome)?;
    arm_means(&y, &r, &roles.instrument)?;
    let cov_rt = covariance(&r, &t);
    if cov_rt.is_nan() || cov_rt.abs() < WEAK_INSTRUMENT_TOL {
        return Err(EstimateError::WeakInstrument(cov_rt.abs()));
    }
    Ok(IvEstimate::new(covariance(&r, &y) / cov_rt))
}

/// Two-stage least squares: the exposure is regressed on the instruments and
/// covariates, then the outcome on the first-stage prediction and the same
/// covariates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TslsSpec {
    pub roles: IvRoles,
    pub covariates: Vec<String>,
}

pub const FIRST_STAGE_FITTED: &str = "exposure_hat";

pub fn tsls(data: &Dataset, spec: &TslsSpec) -> Result<IvEstimate> {
    let roles = &spec.roles;
    if spec.covariates.contains(&roles.instrument) {
        return Err(EstimateError::InvalidSpec(format!(
            "instrument `{}` may not appear in the outcome model",
            roles.instrument
        )));
    }
    let z = column(data, &roles.instrument)?;
    let t = column(data, &roles.exposure)?;
    let y = column(data, &roles.outcome)?;
    let covs: Vec<(String, Vec<f64>)> = spec
        .covariates
        .iter()
        .map(|c| Ok((c.clone(), column(data, c)?)))
        .collect::<Result<_>>()?;
    let n = data.len();

    let mut first_cols = vec![(roles.instrument.clone(), z)];
    first_cols.extend(covs.iter().cloned());
    let first_x = DesignMatrix::with_intercept(n, first_cols)?;
    let first = regress::ols_fit(&first_x, &t)?;
    let slope = first.coef(&roles.instrument).expect("instrument in design");
    if slope.is_nan() || slope.abs() < WEAK_INSTRUMENT_TOL {
        return Err(EstimateError::WeakInstrument(slope.abs()));
    }

    let mut second_cols = vec![(FIRST_STAGE_FITTED.to_string(), first.fitted_values)];
    second_cols.extend(covs);
    let second_x = DesignMatrix::with_intercept(n, second_cols)?;
    let second = regress::ols_fit(&second_x, &y)?;
    Ok(IvEstimate::new(
        second.coef(FIRST_STAGE_FITTED).expect("in design"),
    ))
}

/// Two-parameter TSLS relaxing Homogeneity.
///
/// The first stage regresses the exposure on instrument, covariate and their
/// product. The second stage regresses the outcome on the fitted exposure
/// split by arm (`t_hat * r` and `t_hat * (1 - r)`) plus the covariate
/// centered within each arm. Arm-centering makes the arm means of the fitted
/// outcome reproduce the observed arm means exactly, so the derived complier
/// effect equals the Wald ratio on the same sample.
///
/// With a binary covariate the model is just identified, so `psi_t` and
/// `psi_at` have heavy-tailed sampling distributions when the covariate barely
/// shifts uptake in the control arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTslsSpec {
    pub roles: IvRoles,
    pub covariate: String,
    pub link: Link,
    pub guard: InteractionGuard,
}

impl ExtendedTslsSpec {
    pub fn new(covariate: &str, link: Link) -> Self {
        Self {
            roles: IvRoles::default(),
            covariate: covariate.into(),
            link,
            guard: InteractionGuard::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedTsls {
    pub psi_t: EstimandEstimate,
    pub psi_at: EstimandEstimate,
    pub psi_c: EstimandEstimate,
    /// psi_t - psi_at; zero under Homogeneity.
    pub homogeneity_diff: f64,
    pub interaction_coef: f64,
    pub profile: ComplianceProfile,
}

/// Complier effect implied by the treated-arm and control-arm effects:
/// (psi_t * P(T=1|R=1) - psi_at * P(T=1|R=0)) / (P(T=1|R=1) - P(T=1|R=0)).
pub fn psi_c_from_parts(psi_t: f64, psi_at: f64, pi_c: f64, pi_at: f64) -> f64 {
    (psi_t * (pi_c + pi_at) - psi_at * pi_at) / pi_c
}

pub fn extended_tsls(data: &Dataset, spec: &ExtendedTslsSpec) -> Result<ExtendedTsls> {
    let roles = &spec.roles;
    let r = binary_column(data, &roles.instrument)?;
    let t = match spec.link {
        Link::Linear => column(data, &roles.exposure)?,
        Link::Logistic => binary_column(data, &roles.exposure)?,
    };
    let y = match spec.link {
        Link::Linear => column(data, &roles.outcome)?,
        Link::Logistic => binary_column(data, &roles.outcome)?,
    };
    let s = column(data, &spec.covariate)?;
    let n = data.len();

    let (p1, p0) = arm_means(&t, &r, &roles.instrument)?;
    if (p1 - p0).abs() < WEAK_INSTRUMENT_TOL {
        return Err(EstimateError::WeakInstrument((p1 - p0).abs()));
    }

    let interaction = format!("{}:{}", roles.instrument, spec.covariate);
    let rs: Vec<f64> = r.iter().zip(&s).map(|(a, b)| a * b).collect();
    let first_x = DesignMatrix::with_intercept(
        n,
        [
            (roles.instrument.clone(), r.clone()),
            (spec.covariate.clone(), s.clone()),
            (interaction.clone(), rs),
        ],
    )?;
    let first = fit_link(&first_x, &t, spec.link)?;
    let coef = first.coef(&interaction).expect("in design");
    spec.guard
        .check(&first_x, &t, spec.link, &interaction, coef)?;
    let t_hat = first.fitted_values;

    let (s1, s0) = arm_means(&s, &r, &roles.instrument)?;
    let s_centered: Vec<f64> = s
        .iter()
        .zip(&r)
        .map(|(v, a)| v - if *a == 1.0 { s1 } else { s0 })
        .collect();
    let treated_col = format!("{}_hat*{}", roles.exposure, roles.instrument);
    let control_col = format!("{}_hat*(1-{})", roles.exposure, roles.instrument);
    let second_x = DesignMatrix::with_intercept(
        n,
        [
            (
                treated_col.clone(),
                t_hat.iter().zip(&r).map(|(h, a)| h * a).collect(),
            ),
            (
                control_col.clone(),
                t_hat.iter().zip(&r).map(|(h, a)| h * (1.0 - a)).collect(),
            ),
            (spec.covariate.clone(), s_centered),
        ],
    )?;
    let (psi_t, psi_at) = match spec.link {
        Link::Linear => {
            let fit = regress::ols_fit(&second_x, &y)?;
            (
                fit.coef(&treated_col).expect("in design"),
                fit.coef(&control_col).expect("in design"),
            )
        }
        Link::Logistic => {
            let fit = regress::logistic_fit(&second_x, &y)?;
            (
                regress::average_marginal_effect(&fit, &second_x, &treated_col, (0.0, 1.0))?,
                regress::average_marginal_effect(&fit, &second_x, &control_col, (0.0, 1.0))?,
            )
        }
    };

    let pi_c = p1 - p0;
    let psi_c = psi_c_from_parts(psi_t, psi_at, pi_c, p0);
    let stamp = |e, v| EstimandEstimate::new(e, v, EXTENDED_TSLS_ASSUMPTIONS);
    Ok(ExtendedTsls {
        psi_t: stamp(Estimand::PsiT, psi_t),
        psi_at: stamp(Estimand::PsiAt, psi_at),
        psi_c: stamp(Estimand::PsiC, psi_c),
        homogeneity_diff: psi_t - psi_at,
        interaction_coef: coef,
        profile: ComplianceProfile {
            p_t_given_r1: p1,
            p_t_given_r0: p0,
            pi_c: Some(pi_c),
            pi_at: Some(p0),
            pi_nt: Some(1.0 - p1),
            pi_d: Some(0.0),
        },
    })
}

/// Policy estimand in the stratum where the event occurs under the active
/// arm: the policy estimate divided by P(event = 1 | arm = 1).
pub fn policy_in_s_plus_star(data: &Dataset, event: &str, arm: &str) -> Result<EstimandEstimate> {
    policy_in_s_plus_star_by(data, event, arm, "y")
}

pub fn policy_in_s_plus_star_by(
    data: &Dataset,
    event: &str,
    arm: &str,
    outcome: &str,
) -> Result<EstimandEstimate> {
    let policy = policy_estimate_by(data, arm, outcome)?;
    let e = binary_column(data, event)?;
    let r = binary_column(data, arm)?;
    let pr = group_mean(&e, &r, 1.0).expect("arm 1 non-empty after policy");
    if pr == 0.0 {
        return Err(EstimateError::EmptyStratum(format!(
            "no subjects with {event} = 1 in {arm} = 1"
        )));
    }
    Ok(EstimandEstimate::new(
        Estimand::PolicyInSPlusStar,
        policy.value / pr,
        S_PLUS_STAR_ASSUMPTIONS,
    ))
}

/// Two-parameter structural model for general adherence:
/// logistic first stage of adherence on arm, covariate and their product,
/// then `y ~ arm + a_hat + covariate`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdherenceSpec {
    pub arm: String,
    pub adherence: String,
    pub outcome: String,
    pub covariate: String,
    pub guard: InteractionGuard,
}

impl AdherenceSpec {
    pub fn new(covariate: &str) -> Self {
        Self {
            arm: "r".into(),
            adherence: "a".into(),
            outcome: "y".into(),
            covariate: covariate.into(),
            guard: InteractionGuard::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdherenceEstimates {
    pub psi: EstimandEstimate,
    pub alpha_a: EstimandEstimate,
    pub policy_s_plus_plus: EstimandEstimate,
    pub policy_s_plus_star: EstimandEstimate,
    pub p_a_given_t1: f64,
    pub p_a_given_t0: f64,
}

/// Policy in S+* from the structural parameters and adherence probabilities.
pub fn s_plus_star_from_parts(psi: f64, alpha_a: f64, p1: f64, p0: f64) -> f64 {
    psi + alpha_a * (p1 - p0) / p1
}

pub fn adherence_estimands(data: &Dataset, spec: &AdherenceSpec) -> Result<AdherenceEstimates> {
    let t = binary_column(data, &spec.arm)?;
    let a = binary_column(data, &spec.adherence)?;
    let y = column(data, &spec.outcome)?;
    let x = column(data, &spec.covariate)?;
    let n = data.len();

    let (p1, p0) = arm_means(&a, &t, &spec.arm)?;
    if p1 <= p0 {
        return Err(EstimateError::AdherenceOrderViolated { p1, p0 });
    }

    let interaction = format!("{}:{}", spec.arm, spec.covariate);
    let tx: Vec<f64> = t.iter().zip(&x).map(|(a, b)| a * b).collect();
    let first_x = DesignMatrix::with_intercept(
        n,
        [
            (spec.arm.clone(), t.clone()),
            (spec.covariate.clone(), x.clone()),
            (interaction.clone(), tx),
        ],
    )?;
    let first = regress::logistic_fit(&first_x, &a)?;
    let coef = first.coef(&interaction).expect("in design");
    spec.guard
        .check(&first_x, &a, Link::Logistic, &interaction, coef)?;

    let a_hat_col = format!("{}_hat", spec.adherence);
    let second_x = DesignMatrix::with_intercept(
        n,
        [
            (spec.arm.clone(), t),
            (a_hat_col.clone(), first.fitted_values),
            (spec.covariate.clone(), x),
        ],
    )?;
    let second = regress::ols_fit(&second_x, &y)?;
    let psi = second.coef(&spec.arm).expect("in design");
    let alpha_a = second.coef(&a_hat_col).expect("in design");
    let stamp = |e, v| EstimandEstimate::new(e, v, ADHERENCE_ASSUMPTIONS);
    Ok(AdherenceEstimates {
        psi: stamp(Estimand::Psi, psi),
        alpha_a: stamp(Estimand::AlphaA, alpha_a),
        policy_s_plus_plus: stamp(Estimand::PolicyInSPlusPlus, psi),
        policy_s_plus_star: stamp(
            Estimand::PolicyInSPlusStar,
            s_plus_star_from_parts(psi, alpha_a, p1, p0),
        ),
        p_a_given_t1: p1,
        p_a_given_t0: p0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NaiveKind {
    /// Treated versus untreated, regardless of arm.
    AsTreated,
    /// Arm contrast among adherers only.
    PerProtocol,
    /// Responders versus non-responders.
    Responder,
}

impl NaiveKind {
    pub fn name(self) -> &'static str {
        match self {
            NaiveKind::AsTreated => "as_treated",
            NaiveKind::PerProtocol => "per_protocol",
            NaiveKind::Responder => "responder",
        }
    }
}

/// Column roles and adjustment for the naive comparators. With an empty
/// covariate list the contrast is a raw mean difference; otherwise it is the
/// average marginal effect of the contrast column from a linear or logistic
/// model that also includes the covariates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NaiveOptions {
    pub covariates: Vec<String>,
    pub link: Link,
    pub arm: String,
    pub exposure: String,
    pub adherence: String,
    pub event: String,
    pub outcome: String,
}

impl Default for NaiveOptions {
    fn default() -> Self {
        Self {
            covariates: Vec::new(),
            link: Link::Linear,
            arm: "r".into(),
            exposure: "t".into(),
            adherence: "a".into(),
            event: "z".into(),
            outcome: "y".into(),
        }
    }
}

pub fn naive_estimates(
    data: &Dataset,
    kind: NaiveKind,
    opts: &NaiveOptions,
) -> Result<EstimandEstimate> {
    let (subset, contrast_col, estimand) = match kind {
        NaiveKind::AsTreated => (data.clone(), opts.exposure.as_str(), Estimand::AsTreated),
        NaiveKind::PerProtocol => {
            let a = binary_column(data, &opts.adherence)?;
            let keep: Vec<usize> = (0..data.len()).filter(|&i| a[i] == 1.0).collect();
            (
                data.resample(&keep),
                opts.arm.as_str(),
                Estimand::PerProtocol,
            )
        }
        NaiveKind::Responder => (data.clone(), opts.event.as_str(), Estimand::Responder),
    };
    let g = binary_column(&subset, contrast_col)?;
    let y = column(&subset, &opts.outcome)?;
    let empty = |level| {
        EstimateError::EmptyStratum(format!(
            "no subjects with {contrast_col} = {level} in {}",
            kind.name()
        ))
    };
    let m1 = group_mean(&y, &g, 1.0).ok_or_else(|| empty(1))?;
    let m0 = group_mean(&y, &g, 0.0).ok_or_else(|| empty(0))?;

    let value = if opts.covariates.is_empty() {
        m1 - m0
    } else {
        let mut cols = vec![(contrast_col.to_string(), g)];
        for c in &opts.covariates {
            cols.push((c.clone(), column(&subset, c)?));
        }
        let x = DesignMatrix::with_intercept(subset.len(), cols)?;
        let fit = fit_link(&x, &y, opts.link)?;
        regress::average_marginal_effect(&fit, &x, contrast_col, (0.0, 1.0))?
    };
    Ok(EstimandEstimate::new(estimand, value, &[]))
}

/// Implied CACE over a grid of defier effects and defier proportions.
/// `implied_cace[i][j]` belongs to `pi_d_values[i]` and `dace_values[j]`;
/// `None` marks cells that are undefined or infeasible.
#[derive(Debug, Clone, PartialEq)]
pub struct DefierSensitivityGrid {
    pub dace_values: Vec<f64>,
    pub pi_d_values: Vec<f64>,
    pub implied_cace: Vec<Vec<Option<f64>>>,
}

impl DefierSensitivityGrid {
    /// Long format rows `(dace, pi_d, implied_cace)`.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, Option<f64>)> + '_ {
        self.pi_d_values
            .iter()
            .enumerate()
            .flat_map(move |(i, &pd)| {
                self.dace_values
                    .iter()
                    .enumerate()
                    .map(move |(j, &d)| (d, pd, self.implied_cace[i][j]))
            })
    }
}

/// With defiers present the Wald ratio identifies
/// `(CACE * pi_c - DACE * pi_d) / (pi_c - pi_d)`; for each assumed
/// (DACE, pi_d) this inverts that to the CACE, taking
/// `pi_c = first-stage difference + pi_d`.
///
/// A cell is undefined when `pi_c` or `pi_c - pi_d` is within [`GRID_EPS`] of
/// zero, or when the implied always-taker or never-taker share is negative.
pub fn defier_sensitivity(
    profile: &ComplianceProfile,
    observed_iv: f64,
    dace_values: &[f64],
    pi_d_values: &[f64],
) -> DefierSensitivityGrid {
    let diff = profile.first_stage_difference();
    let implied_cace = pi_d_values
        .iter()
        .map(|&pi_d| {
            let pi_c = diff + pi_d;
            let pi_at = profile.p_t_given_r0 - pi_d;
            let pi_nt = 1.0 - profile.p_t_given_r1 - pi_d;
            let feasible = pi_d >= 0.0 && pi_at >= -GRID_EPS && pi_nt >= -GRID_EPS;
            let defined = feasible && pi_c.abs() >= GRID_EPS && diff.abs() >= GRID_EPS;
            dace_values
                .iter()
                .map(|&dace| defined.then(|| observed_iv + pi_d * (dace - observed_iv) / pi_c))
                .collect()
        })
        .collect();
    DefierSensitivityGrid {
        dace_values: dace_values.to_vec(),
        pi_d_values: pi_d_values.to_vec(),
        implied_cace,
    }
}
