//! Named estimators with textual options, shared by the CLI and the Monte
//! Carlo harness.
//!
//! A spec is written `kind key=value key=value ...`, for example
//! `extended_tsls covariate=s link=linear` or `as_treated covariates=u`.
//! Recognised keys:
//!
//! * `instrument`, `exposure`, `outcome`: IV roles (default `r`, `t`, `y`)
//! * `arm`, `adherence`, `event`: arm, adherence and event columns (`r`, `a`, `z`)
//! * `covariates`: comma-separated adjustment set
//! * `covariate`: interaction covariate for the two-parameter models
//! * `link`: `linear` or `logistic`
//! * `guard_reps`: bootstrap reps of the weak-interaction guard (0 = absolute check only)

use crate::data::Dataset;
use crate::estimators::{
    self, AdherenceSpec, Assumption, Estimand, EstimateError, ExtendedTslsSpec, InteractionGuard,
    IvRoles, Link, NaiveKind, NaiveOptions, Result, TslsSpec,
};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Policy,
    Compliance,
    IvRatio,
    Tsls,
    ExtendedTsls,
    PolicyInSPlusStar,
    Adherence,
    AsTreated,
    PerProtocol,
    Responder,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 10] = [
        EstimatorKind::Policy,
        EstimatorKind::Compliance,
        EstimatorKind::IvRatio,
        EstimatorKind::Tsls,
        EstimatorKind::ExtendedTsls,
        EstimatorKind::PolicyInSPlusStar,
        EstimatorKind::Adherence,
        EstimatorKind::AsTreated,
        EstimatorKind::PerProtocol,
        EstimatorKind::Responder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Policy => "policy",
            EstimatorKind::Compliance => "compliance",
            EstimatorKind::IvRatio => "iv_ratio",
            EstimatorKind::Tsls => "tsls",
            EstimatorKind::ExtendedTsls => "extended_tsls",
            EstimatorKind::PolicyInSPlusStar => "policy_in_s_plus_star",
            EstimatorKind::Adherence => "adherence",
            EstimatorKind::AsTreated => "as_treated",
            EstimatorKind::PerProtocol => "per_protocol",
            EstimatorKind::Responder => "responder",
        }
    }

    /// Documented assumptions of each output, aligned with [`Self::outputs`].
    pub fn output_assumptions(self) -> Vec<&'static [Assumption]> {
        use estimators::*;
        let mono: &'static [Assumption] = &[Assumption::Monotonicity];
        match self {
            EstimatorKind::Policy => vec![POLICY_ASSUMPTIONS],
            EstimatorKind::Compliance => vec![&[], &[], mono, mono, mono],
            EstimatorKind::IvRatio | EstimatorKind::Tsls => vec![CACE_ASSUMPTIONS],
            EstimatorKind::ExtendedTsls => vec![EXTENDED_TSLS_ASSUMPTIONS; 4],
            EstimatorKind::PolicyInSPlusStar => vec![S_PLUS_STAR_ASSUMPTIONS],
            EstimatorKind::Adherence => vec![ADHERENCE_ASSUMPTIONS; 4],
            EstimatorKind::AsTreated | EstimatorKind::PerProtocol | EstimatorKind::Responder => {
                vec![&[]]
            }
        }
    }

    /// Output names in evaluation order.
    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            EstimatorKind::Compliance => {
                &["p_t_given_r1", "p_t_given_r0", "pi_c", "pi_at", "pi_nt"]
            }
            EstimatorKind::ExtendedTsls => &["psi_t", "psi_at", "psi_c", "homogeneity_diff"],
            EstimatorKind::Adherence => &[
                "psi",
                "alpha_a",
                "policy_in_s_plus_plus",
                "policy_in_s_plus_star",
            ],
            other => std::slice::from_ref(match other {
                EstimatorKind::Policy => &"policy",
                EstimatorKind::IvRatio => &"iv_ratio",
                EstimatorKind::Tsls => &"tsls",
                EstimatorKind::PolicyInSPlusStar => &"policy_in_s_plus_star",
                EstimatorKind::AsTreated => &"as_treated",
                EstimatorKind::PerProtocol => &"per_protocol",
                EstimatorKind::Responder => &"responder",
                _ => unreachable!(),
            }),
        }
    }
}

impl FromStr for EstimatorKind {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = EstimatorKind::ALL.iter().map(|k| k.name()).collect();
                EstimateError::InvalidSpec(format!(
                    "unknown estimator `{s}` (known: {})",
                    known.join(", ")
                ))
            })
    }
}

const KEYS: [&str; 10] = [
    "instrument",
    "exposure",
    "outcome",
    "arm",
    "adherence",
    "event",
    "covariates",
    "covariate",
    "link",
    "guard_reps",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    pub options: BTreeMap<String, String>,
}

impl EstimatorSpec {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            options: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.options.insert(key.to_string(), value.to_string());
        self
    }

    fn opt<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.options.get(key).map(String::as_str).unwrap_or(default)
    }

    fn covariates(&self) -> Vec<String> {
        self.options
            .get("covariates")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|c| !c.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    fn required(&self, key: &str) -> Result<&str> {
        self.options.get(key).map(String::as_str).ok_or_else(|| {
            EstimateError::InvalidSpec(format!("{} requires `{key}=`", self.kind.name()))
        })
    }

    fn link(&self) -> Result<Link> {
        self.opt("link", "linear").parse()
    }

    fn guard(&self, seed: u64) -> Result<InteractionGuard> {
        let reps = match self.options.get("guard_reps") {
            None => InteractionGuard::default().spread_reps,
            Some(v) => v.parse().map_err(|_| {
                EstimateError::InvalidSpec(format!("guard_reps must be a count, got `{v}`"))
            })?,
        };
        Ok(InteractionGuard {
            spread_reps: reps,
            seed,
            ..InteractionGuard::default()
        })
    }

    fn roles(&self) -> IvRoles {
        IvRoles::new(
            self.opt("instrument", "r"),
            self.opt("exposure", "t"),
            self.opt("outcome", "y"),
        )
    }

    /// Evaluate on a dataset. `seed` feeds randomized internals such as the
    /// interaction guard; the estimate itself never depends on it.
    pub fn evaluate(&self, data: &Dataset, seed: u64) -> Result<Vec<Output>> {
        use EstimatorKind as K;
        let single = |e: estimators::EstimandEstimate| {
            vec![Output::from_estimate(self.kind.outputs()[0], e)]
        };
        Ok(match self.kind {
            K::Policy => single(estimators::policy_estimate_by(
                data,
                self.opt("arm", "r"),
                self.opt("outcome", "y"),
            )?),
            K::Compliance => {
                let p = estimators::compliance_profile_by(data, &self.roles(), true)?;
                let vals = [
                    p.p_t_given_r1,
                    p.p_t_given_r0,
                    p.pi_c.expect("monotone"),
                    p.pi_at.expect("monotone"),
                    p.pi_nt.expect("monotone"),
                ];
                self.kind
                    .outputs()
                    .iter()
                    .zip(vals)
                    .enumerate()
                    .map(|(i, (n, v))| {
                        let needs: &[Assumption] = if i < 2 {
                            &[]
                        } else {
                            &[Assumption::Monotonicity]
                        };
                        Output::plain(n, v, needs)
                    })
                    .collect()
            }
            K::IvRatio | K::Tsls => {
                let est = if self.kind == K::IvRatio {
                    estimators::iv_ratio_by(data, &self.roles())?
                } else {
                    estimators::tsls(
                        data,
                        &TslsSpec {
                            roles: self.roles(),
                            covariates: self.covariates(),
                        },
                    )?
                };
                vec![Output {
                    name: self.kind.outputs()[0].to_string(),
                    value: est.value(),
                    assumptions: est.cace.assumptions.clone(),
                    readings: vec![
                        (est.cace.estimand, est.cace.assumptions),
                        (est.hypothetical.estimand, est.hypothetical.assumptions),
                    ],
                }]
            }
            K::ExtendedTsls => {
                let spec = ExtendedTslsSpec {
                    roles: self.roles(),
                    covariate: self.required("covariate")?.to_string(),
                    link: self.link()?,
                    guard: self.guard(seed)?,
                };
                let e = estimators::extended_tsls(data, &spec)?;
                let diff =
                    Output::plain("homogeneity_diff", e.homogeneity_diff, &e.psi_t.assumptions);
                vec![
                    Output::from_estimate("psi_t", e.psi_t),
                    Output::from_estimate("psi_at", e.psi_at),
                    Output::from_estimate("psi_c", e.psi_c),
                    diff,
                ]
            }
            K::PolicyInSPlusStar => single(estimators::policy_in_s_plus_star_by(
                data,
                self.opt("event", "z"),
                self.opt("arm", "r"),
                self.opt("outcome", "y"),
            )?),
            K::Adherence => {
                let spec = AdherenceSpec {
                    arm: self.opt("arm", "r").into(),
                    adherence: self.opt("adherence", "a").into(),
                    outcome: self.opt("outcome", "y").into(),
                    covariate: self.required("covariate")?.to_string(),
                    guard: self.guard(seed)?,
                };
                let e = estimators::adherence_estimands(data, &spec)?;
                vec![
                    Output::from_estimate("psi", e.psi),
                    Output::from_estimate("alpha_a", e.alpha_a),
                    Output::from_estimate("policy_in_s_plus_plus", e.policy_s_plus_plus),
                    Output::from_estimate("policy_in_s_plus_star", e.policy_s_plus_star),
                ]
            }
            K::AsTreated | K::PerProtocol | K::Responder => {
                let kind = match self.kind {
                    K::AsTreated => NaiveKind::AsTreated,
                    K::PerProtocol => NaiveKind::PerProtocol,
                    _ => NaiveKind::Responder,
                };
                let opts = NaiveOptions {
                    covariates: self.covariates(),
                    link: self.link()?,
                    arm: self.opt("arm", "r").into(),
                    exposure: self.opt("exposure", "t").into(),
                    adherence: self.opt("adherence", "a").into(),
                    event: self.opt("event", "z").into(),
                    outcome: self.opt("outcome", "y").into(),
                };
                single(estimators::naive_estimates(data, kind, &opts)?)
            }
        })
    }
}

impl FromStr for EstimatorSpec {
    type Err = EstimateError;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let kind: EstimatorKind = parts
            .next()
            .ok_or_else(|| EstimateError::InvalidSpec("empty estimator specification".into()))?
            .parse()?;
        let mut spec = EstimatorSpec::new(kind);
        for part in parts {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                EstimateError::InvalidSpec(format!("expected key=value, got `{part}`"))
            })?;
            if !KEYS.contains(&k) {
                return Err(EstimateError::InvalidSpec(format!(
                    "unknown option `{k}` for {}",
                    kind.name()
                )));
            }
            if spec.options.insert(k.to_string(), v.to_string()).is_some() {
                return Err(EstimateError::InvalidSpec(format!(
                    "option `{k}` given twice"
                )));
            }
        }
        if matches!(kind, EstimatorKind::ExtendedTsls | EstimatorKind::Adherence) {
            spec.required("covariate")?;
        }
        spec.link()?;
        spec.guard(0)?;
        Ok(spec)
    }
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        for (k, v) in &self.options {
            write!(f, " {k}={v}")?;
        }
        Ok(())
    }
}

/// One number produced by an estimator. `assumptions` belongs to the primary
/// reading; `readings` lists every estimand the number can be read as, with
/// the assumptions each reading requires.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub name: String,
    pub value: f64,
    pub assumptions: Vec<Assumption>,
    pub readings: Vec<(Estimand, Vec<Assumption>)>,
}

impl Output {
    fn from_estimate(name: &str, e: estimators::EstimandEstimate) -> Self {
        Self {
            name: name.to_string(),
            value: e.value,
            assumptions: e.assumptions.clone(),
            readings: vec![(e.estimand, e.assumptions)],
        }
    }

    fn plain(name: &str, value: f64, assumptions: &[Assumption]) -> Self {
        Self {
            name: name.to_string(),
            value,
            assumptions: assumptions.to_vec(),
            readings: vec![],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TrialRecord;

    #[test]
    fn parse_and_display() {
        let spec: EstimatorSpec = "extended_tsls link=logistic covariate=x".parse().unwrap();
        assert_eq!(spec.kind, EstimatorKind::ExtendedTsls);
        assert_eq!(spec.to_string(), "extended_tsls covariate=x link=logistic");
        assert_eq!(spec.to_string().parse::<EstimatorSpec>().unwrap(), spec);
    }

    #[test]
    fn parse_errors() {
        for bad in [
            "",
            "bogus",
            "policy foo=1",
            "policy arm",
            "extended_tsls",
            "as_treated link=probit",
            "policy arm=r arm=t",
        ] {
            assert!(
                matches!(
                    bad.parse::<EstimatorSpec>(),
                    Err(EstimateError::InvalidSpec(_))
                ),
                "{bad}"
            );
        }
    }

    #[test]
    fn output_names_match_declaration() {
        let recs: Vec<_> = [
            (1, 1, 3.0),
            (1, 0, 2.0),
            (1, 1, 4.0),
            (0, 0, 1.0),
            (0, 1, 2.0),
            (0, 0, 0.0),
        ]
        .iter()
        .map(|&(r, t, y)| TrialRecord::new(r, t, y))
        .collect();
        let d = Dataset::new(vec![], recs).unwrap();
        for kind in [
            EstimatorKind::Policy,
            EstimatorKind::Compliance,
            EstimatorKind::IvRatio,
            EstimatorKind::Tsls,
            EstimatorKind::AsTreated,
        ] {
            let out = EstimatorSpec::new(kind).evaluate(&d, 0).unwrap();
            let names: Vec<_> = out.iter().map(|o| o.name.as_str()).collect();
            assert_eq!(names, kind.outputs());
        }
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.output_assumptions().len(), kind.outputs().len());
        }
        for kind in [
            EstimatorKind::Policy,
            EstimatorKind::Compliance,
            EstimatorKind::IvRatio,
            EstimatorKind::AsTreated,
        ] {
            let out = EstimatorSpec::new(kind).evaluate(&d, 0).unwrap();
            for (o, a) in out.iter().zip(kind.output_assumptions()) {
                assert_eq!(o.assumptions, a);
            }
        }
        let iv = &EstimatorSpec::new(EstimatorKind::IvRatio)
            .evaluate(&d, 0)
            .unwrap()[0];
        assert_eq!(iv.readings.len(), 2);
        assert_eq!(iv.readings[1].0, Estimand::Hypothetical);
    }
}
