//! Canned replication studies and their published reference values.

use crate::dgp::{DgpConfig, Model, Variant};
use crate::montecarlo::{self, CampaignResult, CampaignSpec, MonteCarloError};
use std::fmt;
use std::str::FromStr;

/// Comparisons need at least this many replications to be judged.
pub const MIN_REPS_FOR_VERDICT: usize = 200;
pub const DEFAULT_MASTER_SEED: u64 = 20_240_521;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    /// Pain trial with heterogeneous arm effects, plus the equal-effects
    /// efficiency check.
    Section54,
    /// Biomarker response trial.
    Setting1,
    /// General non-adherence trial.
    Setting2,
}

impl Study {
    pub fn name(self) -> &'static str {
        match self {
            Study::Section54 => "section_5_4",
            Study::Setting1 => "setting_1",
            Study::Setting2 => "setting_2",
        }
    }

    pub fn default_reps(self) -> usize {
        match self {
            Study::Section54 => 2000,
            Study::Setting1 | Study::Setting2 => 1000,
        }
    }

    /// Campaigns making up the study, as `(name, spec)`.
    pub fn campaigns(self, reps: usize, master_seed: u64) -> Vec<(&'static str, CampaignSpec)> {
        let build = |model, n, variant, ests: &[(&str, &str)]| {
            let dgp = DgpConfig::new(model, n, 0)
                .with_variant(variant)
                .expect("valid variant");
            let mut spec = CampaignSpec::new(dgp, reps, master_seed);
            for (label, text) in ests {
                spec = spec.estimator(label, text).expect("valid estimator");
            }
            spec
        };
        match self {
            Study::Section54 => vec![
                (
                    "section_5_4",
                    build(
                        Model::PainTrialA,
                        1000,
                        Variant::Confounded,
                        &[
                            ("policy", "policy"),
                            ("iv_ratio", "iv_ratio"),
                            ("ext", "extended_tsls covariate=s link=linear"),
                            ("as_treated", "as_treated"),
                        ],
                    ),
                ),
                (
                    "section_5_4_1",
                    build(
                        Model::PainTrialA,
                        1000,
                        Variant::RandomizedCompliance,
                        &[
                            ("iv_ratio", "iv_ratio"),
                            ("as_treated", "as_treated covariates=u"),
                        ],
                    ),
                ),
            ],
            Study::Setting1 => vec![(
                "setting_1",
                build(
                    Model::BiomarkerB,
                    500,
                    Variant::Confounded,
                    &[
                        ("policy", "policy"),
                        ("iv_ratio", "iv_ratio exposure=z"),
                        ("responder", "responder covariates=x link=logistic"),
                        ("policy_s_plus_star", "policy_in_s_plus_star event=z"),
                        ("hyp", "extended_tsls exposure=z covariate=x link=logistic"),
                    ],
                ),
            )],
            Study::Setting2 => vec![(
                "setting_2",
                build(
                    Model::AdherenceC,
                    500,
                    Variant::Confounded,
                    &[
                        ("policy", "policy"),
                        ("adh", "adherence covariate=x"),
                        ("per_protocol", "per_protocol covariates=x link=linear"),
                    ],
                ),
            )],
        }
    }

    /// Published reference values for one campaign of this study.
    pub fn targets(self, campaign: &str) -> Vec<Target> {
        use Statistic::*;
        let t = |quantity, statistic, published, tolerance| Target {
            quantity,
            statistic,
            published,
            tolerance: Some(tolerance),
        };
        let info = |quantity, statistic, published| Target {
            quantity,
            statistic,
            published,
            tolerance: None,
        };
        match campaign {
            "section_5_4" => vec![
                t(
                    "CACE (IV ratio)",
                    Mean("iv_ratio"),
                    -20.9,
                    Tolerance::Abs(0.5),
                ),
                t(
                    "psi_t (extended TSLS)",
                    Mean("ext.psi_t"),
                    -20.0,
                    Tolerance::Abs(0.5),
                ),
                t(
                    "psi_at (extended TSLS)",
                    Mean("ext.psi_at"),
                    -10.0,
                    Tolerance::Abs(0.7),
                ),
                t(
                    "derived psi_c minus IV ratio",
                    MaxAbsDiff("ext.psi_c", "iv_ratio"),
                    0.0,
                    Tolerance::Abs(1e-6),
                ),
                info("psi_t (extended TSLS)", Median("ext.psi_t"), -20.0),
                info("psi_at (extended TSLS)", Median("ext.psi_at"), -10.0),
            ],
            "section_5_4_1" => vec![
                t("IV ratio", Mean("iv_ratio"), -20.0, Tolerance::Abs(0.3)),
                t(
                    "As-treated (adjusted for U)",
                    Mean("as_treated"),
                    -20.0,
                    Tolerance::Abs(0.3),
                ),
                t(
                    "SD(as-treated) / SD(IV ratio)",
                    SdRatio("as_treated", "iv_ratio"),
                    0.60,
                    Tolerance::Abs(0.10),
                ),
            ],
            "setting_1" => vec![
                t(
                    "Hypothetical in S+*",
                    Mean("hyp.psi_t"),
                    -0.150,
                    Tolerance::Abs(0.02),
                ),
                t(
                    "Policy in S+*",
                    Mean("policy_s_plus_star"),
                    -0.130,
                    Tolerance::Abs(0.02),
                ),
                t("Policy", Mean("policy"), -0.085, Tolerance::Abs(0.03)),
                t("Responder", Mean("responder"), -0.059, Tolerance::Abs(0.03)),
                t(
                    "Policy in S+- (IV ratio)",
                    Mean("iv_ratio"),
                    -0.250,
                    Tolerance::Abs(0.03),
                ),
            ],
            "setting_2" => vec![
                t("Policy", Mean("policy"), -0.37, Tolerance::Abs(0.02)),
                t(
                    "Policy in S++",
                    Mean("adh.policy_in_s_plus_plus"),
                    -0.32,
                    Tolerance::Abs(0.02),
                ),
                t(
                    "Policy in S+*",
                    Mean("adh.policy_in_s_plus_star"),
                    -0.39,
                    Tolerance::Abs(0.02),
                ),
                t(
                    "Per-Protocol",
                    Mean("per_protocol"),
                    -0.26,
                    Tolerance::Abs(0.02),
                ),
                t("alpha_A", Mean("adh.alpha_a"), -0.40, Tolerance::Abs(0.03)),
                t("Policy", McSd("policy"), 0.047, Tolerance::Rel(0.30)),
                t(
                    "Policy in S++",
                    McSd("adh.policy_in_s_plus_plus"),
                    0.038,
                    Tolerance::Rel(0.30),
                ),
                t(
                    "Policy in S+*",
                    McSd("adh.policy_in_s_plus_star"),
                    0.051,
                    Tolerance::Rel(0.30),
                ),
                t(
                    "Per-Protocol",
                    McSd("per_protocol"),
                    0.045,
                    Tolerance::Rel(0.30),
                ),
                t("alpha_A", McSd("adh.alpha_a"), 0.071, Tolerance::Rel(0.30)),
            ],
            _ => vec![],
        }
    }
}

impl FromStr for Study {
    type Err = MonteCarloError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "section_5_4" => Ok(Study::Section54),
            "setting_1" => Ok(Study::Setting1),
            "setting_2" => Ok(Study::Setting2),
            other => Err(MonteCarloError::InvalidSpec(format!(
                "unknown study `{other}` (expected section_5_4, setting_1 or setting_2)"
            ))),
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    Mean(&'static str),
    Median(&'static str),
    McSd(&'static str),
    /// Ratio of the Monte Carlo SDs of two columns.
    SdRatio(&'static str, &'static str),
    /// Largest per-replication |a - b| over replications where both exist.
    MaxAbsDiff(&'static str, &'static str),
}

impl Statistic {
    pub fn label(&self) -> String {
        match self {
            Statistic::Mean(c) => format!("mean({c})"),
            Statistic::Median(c) => format!("median({c})"),
            Statistic::McSd(c) => format!("mc_sd({c})"),
            Statistic::SdRatio(a, b) => format!("mc_sd({a})/mc_sd({b})"),
            Statistic::MaxAbsDiff(a, b) => format!("max|{a}-{b}|"),
        }
    }

    /// Identities are judged regardless of replication count.
    fn is_identity(&self) -> bool {
        matches!(self, Statistic::MaxAbsDiff(..))
    }

    pub fn evaluate(&self, r: &CampaignResult) -> Result<Option<f64>, MonteCarloError> {
        Ok(match *self {
            Statistic::Mean(c) => r.summary_of(c)?.mean,
            Statistic::McSd(c) => r.summary_of(c)?.mc_sd,
            Statistic::Median(c) => {
                let mut v: Vec<f64> = montecarlo::export_distribution(r, c)?
                    .into_iter()
                    .map(|p| p.1)
                    .collect();
                v.sort_by(f64::total_cmp);
                match v.len() {
                    0 => None,
                    n if n % 2 == 1 => Some(v[n / 2]),
                    n => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
                }
            }
            Statistic::SdRatio(a, b) => match (r.summary_of(a)?.mc_sd, r.summary_of(b)?.mc_sd) {
                (Some(x), Some(y)) if y > 0.0 => Some(x / y),
                _ => None,
            },
            Statistic::MaxAbsDiff(a, b) => {
                let (ia, ib) = (r.column_index(a)?, r.column_index(b)?);
                r.per_replication
                    .iter()
                    .filter_map(|row| Some((row[ia]? - row[ib]?).abs()))
                    .fold(None, |m: Option<f64>, d| Some(m.map_or(d, |m| m.max(d))))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Tolerance {
    Abs(f64),
    /// Fraction of the published value's magnitude.
    Rel(f64),
}

impl Tolerance {
    pub fn half_width(&self, published: f64) -> f64 {
        match *self {
            Tolerance::Abs(t) => t,
            Tolerance::Rel(f) => f * published.abs(),
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Abs(t) => write!(f, "±{t}"),
            Tolerance::Rel(r) => write!(f, "±{}%", r * 100.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub quantity: &'static str,
    pub statistic: Statistic,
    pub published: f64,
    /// `None` marks an informational row that is never judged.
    pub tolerance: Option<Tolerance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
    InsufficientReps,
    /// Reported for reference only.
    Info,
    /// The statistic could not be computed (e.g. every replication failed).
    Undefined,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::InsufficientReps => "insufficient reps",
            Verdict::Info => "info",
            Verdict::Undefined => "undefined",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub campaign: &'static str,
    pub target: Target,
    pub observed: Option<f64>,
    pub verdict: Verdict,
}

pub fn compare(
    campaign: &'static str,
    targets: Vec<Target>,
    result: &CampaignResult,
) -> Result<Vec<ComparisonRow>, MonteCarloError> {
    targets
        .into_iter()
        .map(|target| {
            let observed = target.statistic.evaluate(result)?;
            let verdict = match (observed, target.tolerance) {
                (_, None) => Verdict::Info,
                (None, _) => Verdict::Undefined,
                (Some(_), Some(_))
                    if result.replications() < MIN_REPS_FOR_VERDICT
                        && !target.statistic.is_identity() =>
                {
                    Verdict::InsufficientReps
                }
                (Some(v), Some(tol))
                    if (v - target.published).abs() <= tol.half_width(target.published) =>
                {
                    Verdict::Pass
                }
                (Some(_), Some(_)) => Verdict::Fail,
            };
            Ok(ComparisonRow {
                campaign,
                target,
                observed,
                verdict,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct StudyRun {
    pub study: Study,
    pub campaigns: Vec<(&'static str, CampaignSpec, CampaignResult)>,
    pub rows: Vec<ComparisonRow>,
}

pub fn run_study(
    study: Study,
    reps: usize,
    master_seed: u64,
    parallel: bool,
) -> Result<StudyRun, MonteCarloError> {
    let mut campaigns = Vec::new();
    let mut rows = Vec::new();
    for (name, mut spec) in study.campaigns(reps, master_seed) {
        spec.parallel = parallel;
        let result = montecarlo::run_campaign(&spec)?;
        rows.extend(compare(name, study.targets(name), &result)?);
        campaigns.push((name, spec, result));
    }
    Ok(StudyRun {
        study,
        campaigns,
        rows,
    })
}

/// Fixed-width text table of comparison rows.
pub fn format_table(rows: &[ComparisonRow]) -> String {
    let mut out = format!(
        "{:<14} {:<32} {:<44} {:>10} {:>12} {:>9}  {}\n",
        "campaign", "quantity", "statistic", "published", "observed", "tol", "verdict"
    );
    for r in rows {
        let observed = r.observed.map_or("NA".to_string(), |v| format!("{v:.4}"));
        out.push_str(&format!(
            "{:<14} {:<32} {:<44} {:>10} {:>12} {:>9}  {}\n",
            r.campaign,
            r.target.quantity,
            r.target.statistic.label(),
            r.target.published,
            observed,
            r.target
                .tolerance
                .map_or("-".to_string(), |t| t.to_string()),
            r.verdict
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_target_column_exists() {
        for study in [Study::Section54, Study::Setting1, Study::Setting2] {
            for (name, spec) in study.campaigns(3, 1) {
                let cols = spec.columns();
                let targets = study.targets(name);
                assert!(!targets.is_empty());
                for t in targets {
                    let needed = match t.statistic {
                        Statistic::Mean(c) | Statistic::Median(c) | Statistic::McSd(c) => vec![c],
                        Statistic::SdRatio(a, b) | Statistic::MaxAbsDiff(a, b) => vec![a, b],
                    };
                    for c in needed {
                        assert!(cols.iter().any(|x| x == c), "{name}: {c}");
                    }
                }
            }
        }
    }

    #[test]
    fn small_runs_marked_insufficient() {
        let mut run_spec = Study::Setting2.campaigns(5, 3);
        let (name, spec) = run_spec.remove(0);
        let res = montecarlo::run_campaign(&spec).unwrap();
        let rows = compare(name, Study::Setting2.targets(name), &res).unwrap();
        assert!(rows.iter().all(|r| r.verdict == Verdict::InsufficientReps));
        assert!(format_table(&rows).contains("insufficient reps"));
    }
}
