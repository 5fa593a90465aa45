use ivtrial_core::dgp::{self, generate, truth, Model, Variant};
use ivtrial_core::estimators::{self, IvRoles};
use ivtrial_core::montecarlo::{
    self, bootstrap_se, export_distribution, run_campaign, CampaignSpec,
};
use ivtrial_core::{Dataset, DgpConfig, TrialRecord};

fn rate(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// |observed - expected| within `k` binomial standard errors.
fn near_proportion(observed: f64, expected: f64, n: usize, k: f64) -> bool {
    let se = (expected * (1.0 - expected) / n as f64).sqrt();
    (observed - expected).abs() <= k * se
}

#[test]
fn pain_trial_uptake_matches_analytic_truth() {
    let cfg = DgpConfig::new(Model::PainTrialA, 100_000, 11);
    let d = generate(&cfg).unwrap().data;
    let tr = truth(&cfg).unwrap();
    let p = estimators::compliance_profile(&d, true).unwrap();
    let n_arm = d.len() / 2;
    let p1 = tr.get("p_t_given_r1").unwrap();
    let p0 = tr.get("p_t_given_r0").unwrap();
    assert!(
        near_proportion(p.p_t_given_r1, p1, n_arm, 4.5),
        "{} vs {p1}",
        p.p_t_given_r1
    );
    assert!(
        near_proportion(p.p_t_given_r0, p0, n_arm, 4.5),
        "{} vs {p0}",
        p.p_t_given_r0
    );
    let policy = estimators::policy_estimate(&d).unwrap().value;
    assert!(
        (policy - tr.get("policy").unwrap()).abs() < 0.25,
        "{policy}"
    );
    let iv = estimators::iv_ratio(&d).unwrap().value();
    assert!((iv - tr.get("psi_c").unwrap()).abs() < 0.6, "{iv}");
    // Randomization and the binary covariate are fair coins.
    assert!(near_proportion(
        rate(&d.column("r").unwrap()),
        0.5,
        d.len(),
        4.5
    ));
    assert!(near_proportion(
        rate(&d.column("s").unwrap()),
        0.5,
        d.len(),
        4.5
    ));
}

#[test]
fn biomarker_response_rates_match_analytic_truth() {
    let cfg = DgpConfig::new(Model::BiomarkerB, 100_000, 12);
    let sim = generate(&cfg).unwrap();
    let tr = truth(&cfg).unwrap();
    let roles = IvRoles::new("r", "z", "y");
    let p = estimators::compliance_profile_by(&sim.data, &roles, false).unwrap();
    let n_arm = sim.data.len() / 2;
    for (got, key) in [
        (p.p_t_given_r1, "p_z_given_t1"),
        (p.p_t_given_r0, "p_z_given_t0"),
    ] {
        let want = tr.get(key).unwrap();
        assert!(
            near_proportion(got, want, n_arm, 4.5),
            "{key}: {got} vs {want}"
        );
    }
    let policy = estimators::policy_estimate(&sim.data).unwrap().value;
    assert!(
        (policy - tr.get("policy").unwrap()).abs() < 0.015,
        "{policy}"
    );
    assert_eq!(sim.clamp_events, 0);
}

#[test]
fn adherence_rates_match_analytic_truth() {
    let cfg = DgpConfig::new(Model::AdherenceC, 100_000, 13);
    let d = generate(&cfg).unwrap().data;
    let tr = truth(&cfg).unwrap();
    let roles = IvRoles::new("r", "a", "y");
    let p = estimators::compliance_profile_by(&d, &roles, false).unwrap();
    let n_arm = d.len() / 2;
    for (got, key) in [
        (p.p_t_given_r1, "p_a_given_t1"),
        (p.p_t_given_r0, "p_a_given_t0"),
    ] {
        let want = tr.get(key).unwrap();
        assert!(
            near_proportion(got, want, n_arm, 4.5),
            "{key}: {got} vs {want}"
        );
    }
    assert!((p.p_t_given_r1 - 0.70).abs() < 0.01 && (p.p_t_given_r0 - 0.58).abs() < 0.01);
    let est = estimators::adherence_estimands(&d, &estimators::AdherenceSpec::new("x")).unwrap();
    assert!(
        (est.psi.value - tr.get("psi").unwrap()).abs() < 0.02,
        "{}",
        est.psi.value
    );
    assert!(
        (est.alpha_a.value - tr.get("alpha_a").unwrap()).abs() < 0.03,
        "{}",
        est.alpha_a.value
    );
}

fn policy_sd(n: usize) -> f64 {
    let cfg = DgpConfig::new(Model::PainTrialA, n, 0);
    let spec = CampaignSpec::new(cfg, 600, 99)
        .estimator("itt", "policy")
        .unwrap();
    run_campaign(&spec).unwrap().summary[0].mc_sd.unwrap()
}

#[test]
fn monte_carlo_sd_scales_with_root_n() {
    let sds: Vec<f64> = [250, 500, 1000].into_iter().map(policy_sd).collect();
    for w in sds.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }
}

#[test]
fn homogeneity_difference_centers_on_zero_when_effects_are_equal() {
    let cfg = DgpConfig::new(Model::PainTrialA, 1000, 0)
        .with_variant(Variant::RandomizedCompliance)
        .unwrap();
    let spec = CampaignSpec::new(cfg, 400, 5)
        .estimator("ext", "extended_tsls covariate=s link=linear")
        .unwrap();
    let res = run_campaign(&spec).unwrap();
    let s = res.summary_of("ext.homogeneity_diff").unwrap();
    let mc_se = s.mc_sd.unwrap() / (s.n_ok as f64).sqrt();
    assert!(
        s.mean.unwrap().abs() < 3.0 * mc_se,
        "mean {:?}, mc se {mc_se}",
        s.mean
    );
}

#[test]
fn bootstrap_se_of_mean_tracks_analytic_se() {
    let cfg = DgpConfig::new(Model::PainTrialA, 200, 21);
    let d = generate(&cfg).unwrap().data;
    let y = d.column("y").unwrap();
    let m = rate(&y);
    let sd = (y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (y.len() as f64 - 1.0)).sqrt();
    let analytic = sd / (y.len() as f64).sqrt();
    let se = bootstrap_se(&d, |b| Ok(rate(&b.column("y").unwrap())), 1000, 4).unwrap();
    assert!((se / analytic - 1.0).abs() < 0.15, "{se} vs {analytic}");
}

#[test]
fn bootstrap_of_constant_statistic_is_zero() {
    let d = Dataset::new(
        vec![],
        (0..20)
            .map(|i| TrialRecord::new(i % 2, 0, i as f64))
            .collect(),
    )
    .unwrap();
    assert_eq!(bootstrap_se(&d, |_| Ok(0.0), 100, 1).unwrap(), 0.0);
}

fn setting2_spec(parallel: bool) -> CampaignSpec {
    let mut spec = CampaignSpec::new(DgpConfig::new(Model::AdherenceC, 300, 0), 40, 8)
        .estimator("policy", "policy")
        .unwrap()
        .estimator("adh", "adherence covariate=x")
        .unwrap();
    spec.parallel = parallel;
    spec.bootstrap_reps = 100;
    spec
}

fn rendered(spec: &CampaignSpec) -> (Vec<u8>, String) {
    let res = run_campaign(spec).unwrap();
    let mut csv = Vec::new();
    montecarlo::write_per_replication_csv(&mut csv, &res).unwrap();
    (csv, montecarlo::summary_json(spec, &res).to_string())
}

#[test]
fn campaign_reruns_are_byte_identical_and_schedule_free() {
    let serial = rendered(&setting2_spec(false));
    assert_eq!(serial, rendered(&setting2_spec(false)));
    assert_eq!(serial, rendered(&setting2_spec(true)));
}

#[test]
fn single_replication_summary() {
    let spec = CampaignSpec::new(DgpConfig::new(Model::PainTrialA, 100, 0), 1, 3)
        .estimator("itt", "policy")
        .unwrap();
    let res = run_campaign(&spec).unwrap();
    let s = &res.summary[0];
    assert_eq!(s.mean, res.per_replication[0][0]);
    assert_eq!(s.mc_sd, None);
}

#[test]
fn exported_distribution_reproduces_summary_mean() {
    let spec = CampaignSpec::new(DgpConfig::new(Model::BiomarkerB, 200, 0), 30, 4)
        .estimator("itt", "policy")
        .unwrap();
    let res = run_campaign(&spec).unwrap();
    let series = export_distribution(&res, "itt").unwrap();
    assert_eq!(series.len(), 30);
    assert!(series.windows(2).all(|w| w[0].0 < w[1].0));
    let mean = series.iter().map(|p| p.1).sum::<f64>() / series.len() as f64;
    assert_eq!(Some(mean), res.summary[0].mean);
}

#[test]
fn truth_is_consistent_with_its_own_definitions() {
    let tr = truth(&DgpConfig::new(Model::AdherenceC, 1, 1)).unwrap();
    let (p1, p0) = (
        tr.get("p_a_given_t1").unwrap(),
        tr.get("p_a_given_t0").unwrap(),
    );
    let star = estimators::s_plus_star_from_parts(
        tr.get("psi").unwrap(),
        tr.get("alpha_a").unwrap(),
        p1,
        p0,
    );
    assert!((star - tr.get("policy_in_s_plus_star").unwrap()).abs() < 1e-12);
    assert!((dgp::expit_normal_mean(0.0, 3.0) - 0.5).abs() < 1e-12);
}
