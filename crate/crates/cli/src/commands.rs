//! Subcommand implementations. Every command is deterministic for a fixed
//! seed and worker count; the only timestamp lives in the train manifest.

use std::fmt::Write as _;
use std::time::{SystemTime, UNIX_EPOCH};

use mlatk_core::attack::{AttackMethod, AttackSpec, Margin};
use mlatk_core::bounds::{adv_free_bound, linear_bound, mlp_bound, BoundReport, Thm2Variant};
use mlatk_core::checkpoint::{load_model, model_checksum, save_model};
use mlatk_core::dataset::{load_sparse, normalize, save_sparse, split, synthesize, Dataset, Split};
use mlatk_core::explore::{
    attackability_curve, AttackabilityCurve, ExploreOpts, Method, Population,
};
use mlatk_core::model::{Activation, Model};
use mlatk_core::oracle::{certify, enumerate_exact, Certificate, CertifyReport, DatasetCertificate};
use mlatk_core::train::{f1_metrics, train_linear, train_mlp, EpochStats, TrainConfig};
use mlatk_core::{Error, Result};
use serde::Serialize;

use crate::cli::{
    BoundsArgs, CertifyArgs, ExploreArgs, ReportArgs, SynthArgs, TrainArgs,
};
use crate::config::{
    load_train_file, parse_activation, parse_floats, parse_fractions, parse_loss, parse_usizes,
    TrainFile,
};

fn write_text(path: &str, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Numerical(format!("serialization failed: {}", e)))?;
    text.push('\n');
    Ok(text)
}

fn parse_attack_method(name: &str) -> Result<AttackMethod> {
    match name {
        "pgd" => Ok(AttackMethod::Pgd),
        "penalty" => Ok(AttackMethod::Penalty),
        "exact_linear" => Ok(AttackMethod::ExactLinear),
        other => Err(Error::InvalidArgument(format!(
            "unknown attack method {:?}; expected pgd, penalty or exact_linear",
            other
        ))),
    }
}

/// Loads a dataset and re-assigns splits; the text format stores no split
/// tags, so the assignment is part of every command's configuration.
/// `resplit` is `f0,f1,f2` or `none` to keep everything in the train split.
fn load_dataset(path: &str, resplit: &str, seed: u64, mu_x: Option<f64>) -> Result<Dataset> {
    let mut ds = load_sparse(path)?;
    if resplit != "none" {
        let f = parse_fractions(resplit)?;
        split(&mut ds, (f[0], f[1], f[2]), seed)?;
    }
    if let Some(mu) = mu_x {
        normalize(&mut ds, mu)?;
    }
    Ok(ds)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let rank = args.rank.unwrap_or_else(|| args.d.min(args.m));
    let (ds, _) = synthesize(args.n, args.d, args.m, rank, args.label_corr, args.noise, args.seed)?;
    save_sparse(&ds, &args.out)?;
    println!("wrote {} ({} instances, d={}, m={})", args.out, ds.len(), ds.d, ds.m);
    Ok(())
}

#[derive(Debug, Serialize)]
struct F1Pair {
    micro: f64,
    macro_: f64,
}

#[derive(Debug, Serialize)]
struct TrainManifest {
    /// Unix seconds; the single non-deterministic output field.
    timestamp: u64,
    workers: usize,
    data: String,
    model_kind: String,
    hidden: Vec<usize>,
    activation: String,
    split_fractions: [f64; 3],
    split_seed: u64,
    config: TrainConfig,
    epoch_loss: Vec<EpochStats>,
    f1: std::collections::BTreeMap<String, F1Pair>,
    checksum: String,
}

fn apply_train_overrides(file: &mut TrainFile, args: &TrainArgs) -> Result<()> {
    if let Some(v) = &args.data {
        file.data = Some(v.clone());
    }
    if let Some(v) = &args.checkpoint {
        file.output.checkpoint = Some(v.clone());
    }
    if let Some(v) = &args.manifest {
        file.output.manifest = Some(v.clone());
    }
    if let Some(v) = &args.kind {
        file.model.kind = v.clone();
    }
    if let Some(v) = &args.hidden {
        file.model.hidden = parse_usizes(v)?;
    }
    if let Some(v) = &args.activation {
        file.model.activation = v.clone();
    }
    if let Some(v) = args.seed {
        file.train.seed = v;
    }
    if let Some(v) = args.epochs {
        file.train.epochs = v;
    }
    if let Some(v) = args.lr {
        file.train.lr = v;
    }
    if let Some(v) = args.batch {
        file.train.batch = v;
    }
    if let Some(v) = args.l2 {
        file.train.l2 = v;
    }
    if let Some(v) = args.lambda_nuc {
        file.train.lambda_nuc = v;
    }
    if let Some(v) = &args.loss {
        if let Ok(loss) = parse_loss(v) {
            file.train.loss = loss;
        }
    }
    if args.adv_training {
        file.train.adv_training = true;
    }
    if let Some(v) = args.adv_mu_r {
        file.train.adv_mu_r = v;
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut file = match &args.config {
        Some(path) => load_train_file(path)?,
        None => TrainFile::default(),
    };
    if let Some(v) = &args.loss {
        parse_loss(v)?;
    }
    apply_train_overrides(&mut file, args)?;

    let data_path = file.data.clone().ok_or_else(|| {
        Error::InvalidArgument("missing `data`: set it in the config file or pass --data".into())
    })?;
    let ckpt_path = file.output.checkpoint.clone().ok_or_else(|| {
        Error::InvalidArgument(
            "missing `output.checkpoint`: set it in the config file or pass --checkpoint".into(),
        )
    })?;

    let mut ds = load_sparse(&data_path)?;
    let f = file.split.fractions;
    split(&mut ds, (f[0], f[1], f[2]), file.split.seed)?;
    if let Some(mu) = file.normalize_mu_x {
        normalize(&mut ds, mu)?;
    }

    let run = match file.model.kind.as_str() {
        "linear" => train_linear(&ds, &file.train),
        "mlp" => {
            let act = parse_activation(&file.model.activation)?;
            let mut arch: Vec<(usize, Activation)> =
                file.model.hidden.iter().map(|&w| (w, act)).collect();
            arch.push((ds.m, Activation::Identity));
            train_mlp(&ds, &file.train, &arch)
        }
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown model.kind {:?}; expected linear or mlp",
                other
            )))
        }
    };
    let run = match run {
        Ok(run) => run,
        Err(Error::Diverged { epoch, checkpoint }) => {
            // Keep the last stable model reachable before reporting failure.
            save_model(&checkpoint, &ckpt_path)?;
            eprintln!("wrote last stable checkpoint to {}", ckpt_path);
            return Err(Error::Diverged { epoch, checkpoint });
        }
        Err(e) => return Err(e),
    };

    save_model(&run.model, &ckpt_path)?;

    if let Some(manifest_path) = &file.output.manifest {
        let mut f1 = std::collections::BTreeMap::new();
        for sp in [Split::Train, Split::Val, Split::Test] {
            if !ds.indices(sp).is_empty() {
                let (micro, macro_) = f1_metrics(&run.model, &ds, sp)?;
                f1.insert(sp.name().to_string(), F1Pair { micro, macro_ });
            }
        }
        let manifest = TrainManifest {
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            workers: rayon::current_num_threads(),
            data: data_path,
            model_kind: file.model.kind.clone(),
            hidden: file.model.hidden.clone(),
            activation: file.model.activation.clone(),
            split_fractions: file.split.fractions,
            split_seed: file.split.seed,
            config: file.train.clone(),
            epoch_loss: run.epoch_loss,
            f1,
            checksum: model_checksum(&run.model),
        };
        write_text(manifest_path, &to_pretty_json(&manifest)?)?;
    }
    println!("wrote checkpoint {} (checksum {})", ckpt_path, model_checksum(&run.model));
    Ok(())
}

pub const EXPLORE_HEADER: &str = "budget,method,population,mean_flipped,std,n_instances";

#[derive(Debug, Serialize)]
struct ExploreDump {
    curves: Vec<AttackabilityCurve>,
}

fn base_spec(
    budget: f64,
    margin: f64,
    max_iter: usize,
    restarts: usize,
    attack: AttackMethod,
    seed: u64,
    preserve: bool,
) -> AttackSpec {
    AttackSpec {
        margin: Margin::Uniform(margin),
        max_iter,
        restarts,
        seed,
        preserve_others: preserve,
        ..AttackSpec::with_method(budget, attack)
    }
}

pub fn cmd_explore(args: &ExploreArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.data, &args.resplit, args.resplit_seed, args.normalize)?;
    let budgets = parse_floats(&args.budgets)?;
    let methods: Vec<Method> = args
        .methods
        .split(',')
        .map(|tok| Method::from_name(tok.trim()))
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("method list is empty".into()));
    }
    let split = Split::from_name(&args.split)?;
    let population = Population::from_name(&args.population)?;
    let attack = parse_attack_method(&args.attack)?;
    let loss = parse_loss(&args.loss)?;
    let spec = base_spec(
        budgets[0],
        args.margin,
        args.max_iter,
        args.restarts,
        attack,
        args.seed,
        !args.no_preserve,
    );
    let opts = ExploreOpts { max_labels: args.max_labels, tie_tol: args.tie_tol };

    let curves: Vec<AttackabilityCurve> = methods
        .iter()
        .map(|&m| attackability_curve(&model, &ds, split, m, &budgets, &spec, population, &opts, loss))
        .collect::<Result<_>>()?;

    let mut csv = String::new();
    csv.push_str(EXPLORE_HEADER);
    csv.push('\n');
    for bi in 0..budgets.len() {
        for curve in &curves {
            let p = &curve.points[bi];
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                p.budget,
                p.method.name(),
                p.population.name(),
                p.mean_flipped,
                p.std_flipped,
                p.n_instances
            );
        }
    }
    write_text(&args.out_csv, &csv)?;
    if let Some(json_path) = &args.out_json {
        write_text(json_path, &to_pretty_json(&ExploreDump { curves })?)?;
    }
    println!("wrote {}", args.out_csv);
    Ok(())
}

#[derive(Debug, Serialize)]
struct SubsetRow {
    t: Vec<usize>,
    /// Squared attack cost; absent when the subset is structurally
    /// infeasible at any radius.
    g: Option<f64>,
    feasible: bool,
}

#[derive(Debug, Serialize)]
struct SubsetTable {
    index: usize,
    subsets: Vec<SubsetRow>,
}

#[derive(Debug, Serialize)]
struct CertifyDump {
    #[serde(flatten)]
    report: CertifyReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    subset_tables: Option<Vec<SubsetTable>>,
}

/// Instances a population keeps: everything, or only those the model gets
/// fully right.
fn population_indices(model: &Model, ds: &Dataset, split: Split, population: Population) -> Vec<usize> {
    let all = ds.indices(split);
    match population {
        Population::All => all,
        Population::CorrectOnly => all
            .into_iter()
            .filter(|&i| {
                let inst = ds.instance(i);
                let h = model.scores(&inst.x);
                (0..ds.m).all(|j| inst.y[j] * h[j] > 0.0)
            })
            .collect(),
    }
}

pub fn cmd_certify(args: &CertifyArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.data, &args.resplit, args.resplit_seed, args.normalize)?;
    let split = Split::from_name(&args.split)?;
    let population = Population::from_name(&args.population)?;
    let opts = ExploreOpts { max_labels: args.max_labels, tie_tol: 1e-9 };

    let report = if args.budget == 0.0 {
        // Degenerate convention: a zero budget admits no perturbation, so
        // every psi is 0 and every ratio reports as 1.
        let chosen = population_indices(&model, &ds, split, population);
        if chosen.is_empty() {
            return Err(Error::EmptyInput(format!(
                "no instances to certify in split {}",
                split.name()
            )));
        }
        let certificates: Vec<DatasetCertificate> = chosen
            .iter()
            .map(|&index| DatasetCertificate {
                index,
                certificate: Certificate {
                    psi_star: 0.0,
                    psi_hat: 0.0,
                    ratio: 1.0,
                    c_star: 0,
                    s_star: Vec::new(),
                    selected: Vec::new(),
                    step_norms: Vec::new(),
                    attack_calls: 0,
                },
            })
            .collect();
        CertifyReport {
            budget: 0.0,
            n_instances: certificates.len(),
            min_ratio: 1.0,
            mean_ratio: 1.0,
            certificates,
        }
    } else {
        let spec = base_spec(
            args.budget,
            args.margin,
            500,
            3,
            AttackMethod::ExactLinear,
            args.seed,
            false,
        );
        certify(&model, &ds, split, &spec, population, &opts)?
    };

    let subset_tables = if args.table {
        // g is independent of the budget, so enumeration runs with any
        // positive radius; feasibility is then checked against the budget.
        let enum_spec = base_spec(
            args.budget.max(1.0),
            args.margin,
            500,
            3,
            AttackMethod::ExactLinear,
            args.seed,
            false,
        );
        let mut tables = Vec::with_capacity(report.certificates.len());
        for cert in &report.certificates {
            let inst = ds.instance(cert.index);
            let costs = enumerate_exact(&model, &inst.x, &inst.y, &enum_spec)?;
            let m = costs.m();
            let mut subsets = Vec::with_capacity(1 << m);
            for mask in 0u32..(1 << m) {
                let t: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
                let g = costs.g(&t);
                subsets.push(SubsetRow {
                    t,
                    g: g.is_finite().then_some(g),
                    feasible: g.is_finite() && g.sqrt() <= args.budget + 1e-9,
                });
            }
            tables.push(SubsetTable { index: cert.index, subsets });
        }
        Some(tables)
    } else {
        None
    };

    let dump = CertifyDump { report, subset_tables };
    write_text(&args.out, &to_pretty_json(&dump)?)?;
    println!("wrote {} (min ratio {})", args.out, dump.report.min_ratio);
    Ok(())
}

pub const BOUNDS_HEADER: &str =
    "kind,mu_r,sigma,emp_adv_risk,emp_clean_risk,complexity_term,diameter_term,confidence_term,total,vacuous";

pub fn cmd_bounds(args: &BoundsArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.data, &args.resplit, args.resplit_seed, args.normalize)?;
    let split = Split::from_name(&args.split)?;

    let mut reports: Vec<BoundReport> = Vec::new();
    match &model {
        Model::Linear(_) => {
            reports.push(linear_bound(&model, &ds, split, args.mu_r, args.sigma)?);
        }
        Model::Mlp(_) => {
            let variants: Vec<Thm2Variant> = match args.variant.as_str() {
                "both" => vec![Thm2Variant::Main, Thm2Variant::Supp],
                name => vec![Thm2Variant::from_name(name)?],
            };
            for v in variants {
                reports.push(mlp_bound(&model, &ds, split, args.mu_r, args.sigma, v)?);
            }
        }
    }
    reports.push(adv_free_bound(&model, &ds, split, args.sigma)?);

    write_text(&args.out_json, &to_pretty_json(&reports)?)?;
    if let Some(csv_path) = &args.out_csv {
        let mut csv = String::new();
        csv.push_str(BOUNDS_HEADER);
        csv.push('\n');
        for r in &reports {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{}",
                r.kind.name(),
                r.inputs.mu_r,
                r.inputs.sigma,
                r.emp_adv_risk,
                r.emp_clean_risk,
                r.complexity_term,
                r.diameter_term,
                r.confidence_term,
                r.total,
                r.vacuous
            );
        }
        write_text(csv_path, &csv)?;
    }
    println!("wrote {} ({} bound rows)", args.out_json, reports.len());
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<()> {
    let mut entries: Vec<std::path::PathBuf> = std::fs::read_dir(&args.dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|ext| ext == "csv"))
        .collect();
    entries.sort();

    let mut merged = String::new();
    merged.push_str("run,");
    merged.push_str(EXPLORE_HEADER);
    merged.push('\n');
    let mut runs = 0usize;
    for path in &entries {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next() != Some(EXPLORE_HEADER) {
            continue;
        }
        let run = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "run".into());
        for line in lines {
            if line.is_empty() {
                continue;
            }
            merged.push_str(&run);
            merged.push(',');
            merged.push_str(line);
            merged.push('\n');
        }
        runs += 1;
    }
    if runs == 0 {
        return Err(Error::EmptyInput(format!(
            "no exploration CSV files found in {}",
            args.dir
        )));
    }
    write_text(&args.out, &merged)?;
    println!("wrote {} ({} runs merged)", args.out, runs);
    Ok(())
}
