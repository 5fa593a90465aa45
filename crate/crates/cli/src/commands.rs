use crate::json;
use crate::{
    CampaignArgs, CheckIvArgs, EstimateArgs, ReplicateArgs, RoleArgs, SensitivityArgs, SimulateArgs,
};
use ivtrial_core::estimators::{self, EstimateError};
use ivtrial_core::montecarlo::{self, CampaignResult, CampaignSpec};
use ivtrial_core::rng::{derive_seed, stream};
use ivtrial_core::studies::{self, Study};
use ivtrial_core::{dag, dgp, ColumnRoles, Dataset, DgpConfig, EstimatorKind, EstimatorSpec};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    Usage = 2,
    Data = 3,
    Numerical = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub code: Code,
    pub message: String,
}

fn fail<T>(code: Code, message: impl Into<String>) -> Result<T, CliError> {
    Err(CliError {
        code,
        message: message.into(),
    })
}

type CliResult = Result<(), CliError>;

fn read_bytes(flag: &str, path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).or_else(|e| fail(Code::Data, format!("{flag} {}: {e}", path.display())))
}

fn write_file(flag: &str, path: &Path, contents: &[u8]) -> CliResult {
    fs::write(path, contents)
        .or_else(|e| fail(Code::Data, format!("{flag} {}: {e}", path.display())))
}

fn emit(flag: &str, out: Option<&Path>, contents: &str) -> CliResult {
    match out {
        Some(path) => write_file(flag, path, contents.as_bytes()),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn column_roles(r: &RoleArgs) -> ColumnRoles {
    ColumnRoles {
        r: r.r_col.clone(),
        t: r.t_col.clone(),
        y: r.y_col.clone(),
        a: r.a_col.clone(),
        z: r.z_col.clone(),
        u: "u".into(),
    }
}

fn load_dataset(path: &Path, roles: &RoleArgs) -> Result<(Dataset, Vec<u8>), CliError> {
    let bytes = read_bytes("--data", path)?;
    let data = ivtrial_core::read_csv(&bytes[..], &column_roles(roles))
        .or_else(|e| fail(Code::Data, format!("--data {}: {e}", path.display())))?;
    if data.is_empty() {
        return fail(
            Code::Data,
            format!("--data {}: no data rows", path.display()),
        );
    }
    Ok((data, bytes))
}

/// Map a file column name onto the dataset's canonical role name.
fn canonical(name: &str, roles: &RoleArgs) -> String {
    let pairs = [
        (&roles.r_col, "r"),
        (&roles.t_col, "t"),
        (&roles.y_col, "y"),
        (&roles.a_col, "a"),
        (&roles.z_col, "z"),
    ];
    pairs
        .iter()
        .find(|(col, _)| col.as_str() == name)
        .map_or_else(|| name.to_string(), |(_, role)| role.to_string())
}

pub fn simulate(a: &SimulateArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = String::from_utf8_lossy(&read_bytes("--config", path)?).into_owned();
            let cfg = DgpConfig::from_config_text(&text)
                .or_else(|e| fail(Code::Data, format!("--config {}: {e}", path.display())))?;
            if let Some(m) = &a.model {
                let model: dgp::Model = m
                    .parse()
                    .or_else(|e| fail(Code::Usage, format!("--model: {e}")))?;
                if model != cfg.model {
                    return fail(
                        Code::Usage,
                        format!(
                            "--model {model} conflicts with model {} in --config",
                            cfg.model
                        ),
                    );
                }
            }
            cfg
        }
        None => {
            let Some(m) = &a.model else {
                return fail(Code::Usage, "--model is required unless --config is given");
            };
            let model: dgp::Model = m
                .parse()
                .or_else(|e| fail(Code::Usage, format!("--model: {e}")))?;
            DgpConfig::new(model, 1000, 1)
        }
    };
    if let Some(n) = a.n {
        cfg.n = n;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(v) = &a.variant {
        let variant = v
            .parse()
            .or_else(|e| fail(Code::Usage, format!("--variant: {e}")))?;
        cfg = cfg
            .with_variant(variant)
            .or_else(|e| fail(Code::Usage, format!("--variant: {e}")))?;
    }
    cfg.apply_overrides(a.overrides.iter().map(String::as_str))
        .or_else(|e| fail(Code::Usage, format!("--set: {e}")))?;
    if cfg.n == 0 {
        return fail(Code::Usage, "--n must be at least 1");
    }
    cfg.validate()
        .or_else(|e| fail(Code::Usage, format!("{e}")))?;
    let sim = dgp::generate(&cfg).or_else(|e| fail(Code::Usage, format!("{e}")))?;
    let mut buf = Vec::new();
    ivtrial_core::write_csv(&mut buf, &sim.data, a.emit_latent)
        .or_else(|e| fail(Code::Data, format!("--out {}: {e}", a.out.display())))?;
    write_file("--out", &a.out, &buf)?;
    eprintln!(
        "wrote {} subjects from {} (seed {}) to {}; clamped outcome probabilities: {}",
        cfg.n,
        cfg.model,
        cfg.seed,
        a.out.display(),
        sim.clamp_events
    );
    Ok(())
}

/// Translate `--estimators` names plus option flags into estimator specs.
fn specs_from_flags(a: &EstimateArgs) -> Result<Vec<EstimatorSpec>, CliError> {
    let roles = &a.roles;
    let covariates: Vec<String> = a.covariates.iter().map(|c| canonical(c, roles)).collect();
    let event = a
        .event
        .as_deref()
        .map_or_else(|| "z".to_string(), |e| canonical(e, roles));
    a.link
        .parse::<estimators::Link>()
        .or_else(|e| fail(Code::Usage, format!("--link: {e}")))?;
    let mut specs = Vec::new();
    for name in a
        .estimators
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
    {
        let kind: EstimatorKind = name
            .parse()
            .or_else(|e| fail(Code::Usage, format!("--estimators: {e}")))?;
        let mut spec = EstimatorSpec::new(kind);
        use EstimatorKind as K;
        if matches!(kind, K::Tsls | K::AsTreated | K::PerProtocol | K::Responder)
            && !covariates.is_empty()
        {
            spec = spec.with("covariates", &covariates.join(","));
        }
        if matches!(
            kind,
            K::ExtendedTsls | K::AsTreated | K::PerProtocol | K::Responder
        ) {
            spec = spec.with("link", &a.link);
        }
        if matches!(kind, K::ExtendedTsls | K::Adherence) {
            let Some(s) = &a.interaction_covariate else {
                return fail(
                    Code::Usage,
                    format!("--interaction-covariate is required for {name}"),
                );
            };
            spec = spec.with("covariate", &canonical(s, roles));
        }
        if matches!(kind, K::PolicyInSPlusStar | K::Responder) {
            spec = spec.with("event", &event);
        }
        specs.push(spec);
    }
    for text in &a.specs {
        specs.push(
            text.parse()
                .or_else(|e| fail(Code::Usage, format!("--spec `{text}`: {e}")))?,
        );
    }
    if specs.is_empty() {
        return fail(Code::Usage, "--estimators: no estimators requested");
    }
    Ok(specs)
}

fn hex_digest(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn estimate(a: &EstimateArgs) -> CliResult {
    let specs = specs_from_flags(a)?;
    if let Some(b) = a.bootstrap {
        if b < montecarlo::MIN_BOOTSTRAP_REPS {
            return fail(
                Code::Usage,
                format!(
                    "--bootstrap must be at least {}, got {b}",
                    montecarlo::MIN_BOOTSTRAP_REPS
                ),
            );
        }
    }
    let (data, bytes) = load_dataset(&a.data, &a.roles)?;

    let mut canonical_options = String::from("estimate\n");
    for s in &specs {
        let _ = writeln!(canonical_options, "estimator {s}");
    }
    let r = &a.roles;
    let _ = writeln!(
        canonical_options,
        "roles r={} t={} y={} a={} z={}\nbootstrap {:?}\nseed {}",
        r.r_col, r.t_col, r.y_col, r.a_col, r.z_col, a.bootstrap, a.seed
    );
    let config_hash = hex_digest(&[canonical_options.as_bytes(), &bytes]);

    let mut estimates = Map::new();
    let mut any_ok = false;
    for (idx, spec) in specs.iter().enumerate() {
        let names = spec.kind.outputs();
        let documented = spec.kind.output_assumptions();
        let entries: Vec<(String, Value)> = match spec.evaluate(&data, a.seed) {
            Ok(outputs) => {
                any_ok = true;
                let mut warnings: Vec<String> = Vec::new();
                let ses: Vec<Option<f64>> = match a.bootstrap {
                    None => vec![None; outputs.len()],
                    Some(b) => {
                        let seed = derive_seed(a.seed, idx as u64, stream::BOOTSTRAP);
                        match montecarlo::bootstrap_se_spec(&data, spec, b, seed, a.seed) {
                            Ok(se) => se,
                            Err(e) => {
                                warnings.push(format!("bootstrap: {e}"));
                                vec![None; outputs.len()]
                            }
                        }
                    }
                };
                outputs
                    .into_iter()
                    .zip(ses)
                    .map(|(o, se)| {
                        let readings: Map<String, Value> = o
                            .readings
                            .iter()
                            .map(|(e, asm)| (e.name().to_string(), json!(asm.iter().map(|x| x.name()).collect::<Vec<_>>())))
                            .collect();
                        let entry = json!({
                            "estimator": spec.to_string(),
                            "estimate": o.value,
                            "se": se,
                            "assumptions": o.assumptions.iter().map(|x| x.name()).collect::<Vec<_>>(),
                            "readings": readings,
                            "n": data.len(),
                            "warnings": warnings,
                        });
                        (o.name, entry)
                    })
                    .collect()
            }
            Err(e @ (EstimateError::MissingColumn(_) | EstimateError::NotBinary(_))) => {
                return fail(
                    Code::Data,
                    format!("--data {}: estimator `{spec}`: {e}", a.data.display()),
                );
            }
            Err(e) => names
                .iter()
                .zip(documented)
                .map(|(name, asm)| {
                    let entry = json!({
                        "estimator": spec.to_string(),
                        "estimate": Value::Null,
                        "se": Value::Null,
                        "assumptions": asm.iter().map(|x| x.name()).collect::<Vec<_>>(),
                        "readings": {},
                        "n": data.len(),
                        "warnings": [format!("{}: {e}", e.kind())],
                    });
                    (name.to_string(), entry)
                })
                .collect(),
        };
        for (name, entry) in entries {
            if estimates.insert(name.clone(), entry).is_some() {
                return fail(
                    Code::Usage,
                    format!("--estimators: output `{name}` is produced by more than one estimator"),
                );
            }
        }
    }

    let report = json!({
        "estimates": estimates,
        "provenance": {
            "command": "estimate",
            "config_hash": config_hash,
            "seed": a.seed,
            "version": env!("CARGO_PKG_VERSION"),
        },
    });
    emit("--out", a.out.as_deref(), &json::to_string(&report))?;
    if !any_ok {
        return fail(
            Code::Numerical,
            "every requested estimator failed; see warnings in the report",
        );
    }
    Ok(())
}

fn write_campaign(
    dir: &Path,
    name: &str,
    spec: &CampaignSpec,
    result: &CampaignResult,
) -> CliResult {
    let mut csv = Vec::new();
    montecarlo::write_per_replication_csv(&mut csv, result)
        .or_else(|e| fail(Code::Data, format!("--out {}: {e}", dir.display())))?;
    write_file("--out", &dir.join(format!("{name}_replications.csv")), &csv)?;
    let summary = json::to_string(&montecarlo::summary_json(spec, result));
    write_file(
        "--out",
        &dir.join(format!("{name}_summary.json")),
        summary.as_bytes(),
    )
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).or_else(|e| fail(Code::Data, format!("--out {}: {e}", dir.display())))
}

pub fn replicate(a: &ReplicateArgs) -> CliResult {
    let study: Study = a
        .study
        .parse()
        .or_else(|e| fail(Code::Usage, format!("--study: {e}")))?;
    let reps = a.reps.unwrap_or(study.default_reps());
    if reps == 0 {
        return fail(Code::Usage, "--reps must be at least 1");
    }
    create_dir(&a.out)?;
    let run = studies::run_study(
        study,
        reps,
        a.seed.unwrap_or(studies::DEFAULT_MASTER_SEED),
        !a.serial,
    )
    .or_else(|e| fail(Code::Numerical, format!("{e}")))?;
    for (name, spec, result) in &run.campaigns {
        write_campaign(&a.out, name, spec, result)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "campaign",
        "quantity",
        "statistic",
        "published",
        "observed",
        "tolerance",
        "verdict",
    ])
    .expect("in-memory CSV");
    for r in &run.rows {
        w.write_record([
            r.campaign.to_string(),
            r.target.quantity.to_string(),
            r.target.statistic.label(),
            r.target.published.to_string(),
            r.observed.map_or(String::new(), |v| v.to_string()),
            r.target.tolerance.map_or(String::new(), |t| t.to_string()),
            r.verdict.to_string(),
        ])
        .expect("in-memory CSV");
    }
    let bytes = w.into_inner().expect("in-memory CSV");
    write_file("--out", &a.out.join("comparison.csv"), &bytes)?;
    println!("study {} with {reps} replications per campaign", study);
    print!("{}", studies::format_table(&run.rows));
    for (name, _, result) in &run.campaigns {
        for (label, kinds) in &result.failures {
            for (kind, count) in kinds {
                println!("{name}: {label} failed {count} times ({kind}); excluded from summaries");
            }
        }
    }
    Ok(())
}

pub fn campaign(a: &CampaignArgs) -> CliResult {
    let text = String::from_utf8_lossy(&read_bytes("--config", &a.config)?).into_owned();
    let mut spec = CampaignSpec::from_config_text(&text)
        .or_else(|e| fail(Code::Data, format!("--config {}: {e}", a.config.display())))?;
    if let Some(r) = a.reps {
        spec.replications = r;
    }
    if let Some(s) = a.seed {
        spec.master_seed = s;
    }
    if let Some(b) = a.bootstrap {
        spec.bootstrap_reps = b;
    }
    spec.validate()
        .or_else(|e| fail(Code::Usage, format!("{e}")))?;
    create_dir(&a.out)?;
    let result =
        montecarlo::run_campaign(&spec).or_else(|e| fail(Code::Numerical, format!("{e}")))?;
    write_campaign(&a.out, "campaign", &spec, &result)?;
    println!(
        "{:<32} {:>12} {:>12} {:>6}",
        "column", "mean", "mc_sd", "n_fail"
    );
    let na = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
    for (c, s) in result.columns.iter().zip(&result.summary) {
        println!(
            "{c:<32} {:>12} {:>12} {:>6}",
            na(s.mean),
            na(s.mc_sd),
            s.n_fail
        );
    }
    Ok(())
}

fn parse_range(flag: &str, text: &str) -> Result<(f64, f64), CliError> {
    let parsed = text.split_once(':').and_then(|(lo, hi)| {
        let lo: f64 = lo.trim().parse().ok()?;
        let hi: f64 = hi.trim().parse().ok()?;
        (lo.is_finite() && hi.is_finite() && lo <= hi).then_some((lo, hi))
    });
    parsed.map_or_else(
        || {
            fail(
                Code::Usage,
                format!("{flag}: expected `lo:hi` with lo <= hi, got `{text}`"),
            )
        },
        Ok,
    )
}

fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![lo];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

pub fn sensitivity(a: &SensitivityArgs) -> CliResult {
    let (dlo, dhi) = parse_range("--dace-range", &a.dace_range)?;
    let (plo, phi) = parse_range("--pi-d-range", &a.pi_d_range)?;
    if plo < 0.0 || phi > 1.0 {
        return fail(
            Code::Usage,
            format!(
                "--pi-d-range: proportions must lie in [0, 1], got `{}`",
                a.pi_d_range
            ),
        );
    }
    if a.steps == 0 {
        return fail(Code::Usage, "--steps must be at least 1");
    }
    let (data, _) = load_dataset(&a.data, &a.roles)?;
    let numeric = |e: EstimateError| -> CliError {
        let code = match e {
            EstimateError::MissingColumn(_) | EstimateError::NotBinary(_) => Code::Data,
            _ => Code::Numerical,
        };
        CliError {
            code,
            message: format!("--data {}: {e}", a.data.display()),
        }
    };
    let roles = estimators::IvRoles::default();
    let profile = estimators::compliance_profile_by(&data, &roles, false).map_err(numeric)?;
    let iv = estimators::iv_ratio_by(&data, &roles)
        .map_err(numeric)?
        .value();
    let g = estimators::defier_sensitivity(
        &profile,
        iv,
        &grid(dlo, dhi, a.steps),
        &grid(plo, phi, a.steps),
    );
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dace", "pi_d", "implied_cace", "defined"])
        .expect("in-memory CSV");
    for (dace, pi_d, v) in g.cells() {
        w.write_record([
            dace.to_string(),
            pi_d.to_string(),
            v.map_or(String::new(), |x| x.to_string()),
            v.is_some().to_string(),
        ])
        .expect("in-memory CSV");
    }
    let out = String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("UTF-8");
    emit("--out", a.out.as_deref(), &out)
}

pub fn check_iv(a: &CheckIvArgs) -> CliResult {
    let text = String::from_utf8_lossy(&read_bytes("--dag", &a.dag)?).into_owned();
    let g = dag::Dag::parse(&text)
        .or_else(|e| fail(Code::Data, format!("--dag {}: {e}", a.dag.display())))?;
    let flags = [
        ("--instrument", &a.instrument),
        ("--treatment", &a.treatment),
        ("--outcome", &a.outcome),
    ];
    for (flag, node) in flags
        .iter()
        .copied()
        .chain(a.confounders.iter().map(|c| ("--confounders", c)))
    {
        if !g.nodes().contains(node) {
            return fail(
                Code::Usage,
                format!(
                    "{flag}: unknown node `{node}` (DAG nodes: {})",
                    g.nodes().join(", ")
                ),
            );
        }
    }
    let confounders: Vec<&str> = a.confounders.iter().map(String::as_str).collect();
    let report = g
        .check_iv(&a.instrument, &a.treatment, &a.outcome, &confounders)
        .or_else(|e| fail(Code::Usage, format!("{e}")))?;
    let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let mut out = format!(
        "instrument {}, treatment {}, outcome {}, confounders {{{}}}\n",
        a.instrument,
        a.treatment,
        a.outcome,
        confounders.join(", ")
    );
    match &report.relevance_path {
        Some(p) => {
            let _ = writeln!(
                out,
                "IV1 relevance: PASS (directed path {})",
                p.join(" -> ")
            );
        }
        None => {
            let _ = writeln!(
                out,
                "IV1 relevance: FAIL (no directed path {} -> {})",
                a.instrument, a.treatment
            );
        }
    }
    let _ = writeln!(out, "IV2 randomization: {}", verdict(report.iv2));
    for w in &report.iv2_witnesses {
        let _ = writeln!(out, "  open path: {w}");
    }
    let _ = writeln!(out, "IV3 exclusion restriction: {}", verdict(report.iv3));
    for w in &report.iv3_witnesses {
        let _ = writeln!(out, "  open path: {w}");
    }
    let all = report.iv1 && report.iv2 && report.iv3;
    let _ = writeln!(
        out,
        "{} {} a valid instrument",
        a.instrument,
        if all { "is" } else { "is not" }
    );
    print!("{out}");
    Ok(())
}
