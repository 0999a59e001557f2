//! Command-line front end: resolves settings from flags, environment,
//! and an optional flat key=value config file, then drives the pipeline
//! and writes the report tables as delimited text.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 fit error,
//! 5 simulation error, 1 anything else (I/O).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use tiersim_core::dataset;
use tiersim_core::error::{Error, ErrorClass, Result};
use tiersim_core::logit::PriorConfig;
use tiersim_core::pipeline::{self, InputSource, RunConfig, SesScoreKind};
use tiersim_core::reassign::AssignMode;
use tiersim_core::ses;
use tiersim_core::synthgen::{self, GeneratorConfig};

#[derive(Parser)]
#[command(
    name = "tiersim",
    about = "Counterfactual law-school admissions simulator",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Input CSV; omit to use the built-in synthetic generator.
    #[arg(long, global = true)]
    input: Option<PathBuf>,

    /// Flat key=value config file (flags and env override it).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Reassignment mode: quota | unconstrained | bernoulli-fill.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// SES score: principal-component | alternative.
    #[arg(long = "ses-score", global = true)]
    ses_score: Option<String>,

    /// Number of replications.
    #[arg(long, global = true)]
    m: Option<usize>,

    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Prior degrees of freedom.
    #[arg(long = "prior-df", global = true)]
    prior_df: Option<f64>,

    /// Prior scale for slope coefficients.
    #[arg(long = "prior-scale", global = true)]
    prior_scale: Option<f64>,

    /// Synthetic population size (generator input only).
    #[arg(long = "gen-n", global = true)]
    gen_n: Option<usize>,

    /// Synthetic black-student count (generator input only).
    #[arg(long = "gen-black", global = true)]
    gen_black: Option<usize>,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Generate the calibrated synthetic population and its manifest.
    Generate,
    /// Emit per-student SES scores and the score model.
    Score,
    /// Fit all models and emit the coefficient tables.
    Fit,
    /// Run replications and emit composition/outcome tables.
    Simulate,
    /// Re-impute under observed tiers and emit the diagnostic table.
    Selfcheck,
    /// Emit the full report bundle.
    Report,
    /// Generate (if applicable) plus the full report bundle.
    All,
}

/// Settings after merging defaults < config file < env < flags.
struct Settings {
    input: Option<PathBuf>,
    mode: AssignMode,
    ses_score: SesScoreKind,
    m: usize,
    seed: u64,
    out: PathBuf,
    prior_df: f64,
    prior_scale: f64,
    gen_n: usize,
    gen_black: usize,
}

const ENV_PREFIX: &str = "TIERSIM_";

fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parsed<T: std::str::FromStr>(raw: &str, key: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value {raw:?} for {key}")))
}

impl Settings {
    fn resolve(cli: &Cli) -> Result<Settings> {
        let file = match &cli.config {
            Some(path) => parse_config_file(path)?,
            None => HashMap::new(),
        };
        // One merged string-valued view per key: file, then env, then flag.
        let lookup = |key: &str, flag: Option<String>| -> Option<String> {
            let env_key = format!("{ENV_PREFIX}{}", key.replace('-', "_").to_uppercase());
            flag.or_else(|| std::env::var(env_key).ok())
                .or_else(|| file.get(key).cloned())
        };

        let mut s = Settings {
            input: None,
            mode: AssignMode::Quota,
            ses_score: SesScoreKind::PrincipalComponent,
            m: 40,
            seed: 17,
            out: PathBuf::from("out"),
            prior_df: 1.0,
            prior_scale: 2.5,
            gen_n: 27_000,
            gen_black: 1_510,
        };
        if let Some(v) = lookup("input", cli.input.as_ref().map(|p| p.display().to_string())) {
            s.input = Some(PathBuf::from(v));
        }
        if let Some(v) = lookup("mode", cli.mode.clone()) {
            s.mode = AssignMode::from_token(&v)
                .ok_or_else(|| Error::Config(format!("unknown mode {v:?}")))?;
        }
        if let Some(v) = lookup("ses-score", cli.ses_score.clone()) {
            s.ses_score = SesScoreKind::from_token(&v)
                .ok_or_else(|| Error::Config(format!("unknown ses-score {v:?}")))?;
        }
        if let Some(v) = lookup("m", cli.m.map(|m| m.to_string())) {
            s.m = parsed(&v, "m")?;
        }
        if let Some(v) = lookup("seed", cli.seed.map(|x| x.to_string())) {
            s.seed = parsed(&v, "seed")?;
        }
        if let Some(v) = lookup("out", cli.out.as_ref().map(|p| p.display().to_string())) {
            s.out = PathBuf::from(v);
        }
        if let Some(v) = lookup("prior-df", cli.prior_df.map(|x| x.to_string())) {
            s.prior_df = parsed(&v, "prior-df")?;
        }
        if let Some(v) = lookup("prior-scale", cli.prior_scale.map(|x| x.to_string())) {
            s.prior_scale = parsed(&v, "prior-scale")?;
        }
        if let Some(v) = lookup("gen-n", cli.gen_n.map(|x| x.to_string())) {
            s.gen_n = parsed(&v, "gen-n")?;
        }
        if let Some(v) = lookup("gen-black", cli.gen_black.map(|x| x.to_string())) {
            s.gen_black = parsed(&v, "gen-black")?;
        }
        if s.prior_df <= 0.0 || s.prior_scale <= 0.0 {
            return Err(Error::Config(format!(
                "prior df {} and scale {} must be positive",
                s.prior_df, s.prior_scale
            )));
        }
        Ok(s)
    }

    fn generator_config(&self) -> GeneratorConfig {
        GeneratorConfig::sized(self.gen_n, self.gen_black, self.seed)
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            input: match &self.input {
                Some(path) => InputSource::File(path.clone()),
                None => InputSource::Generator(self.generator_config()),
            },
            mode: self.mode,
            ses_score: self.ses_score,
            m: self.m,
            seed: self.seed,
            prior: PriorConfig {
                df: self.prior_df,
                scale_coef: self.prior_scale,
                ..PriorConfig::default()
            },
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn load_records(settings: &Settings) -> Result<Vec<dataset::StudentRecord>> {
    match &settings.input {
        Some(path) => {
            let file = fs::File::open(path)?;
            dataset::parse_dataset_strict(file)
        }
        None => Ok(synthgen::generate_population(&settings.generator_config())?.0),
    }
}

fn cmd_generate(settings: &Settings) -> Result<()> {
    let (records, manifest) = synthgen::generate_population(&settings.generator_config())?;
    fs::create_dir_all(&settings.out)?;
    let file = fs::File::create(settings.out.join("population.csv"))?;
    dataset::write_dataset(file, &records)?;
    write_file(&settings.out, "manifest.tsv", &manifest.to_delimited())?;
    if !manifest.all_pass() {
        return Err(Error::Simulation(
            "generated population missed at least one calibration target; see manifest.tsv".into(),
        ));
    }
    eprintln!(
        "wrote {} records to {}",
        records.len(),
        settings.out.join("population.csv").display()
    );
    Ok(())
}

fn cmd_score(settings: &Settings) -> Result<()> {
    let records = load_records(settings)?;
    let population = dataset::filter_analysis_population(records)?;
    let records = population.records;
    let imputer = ses::SesImputer::fit(&records)?;
    let completed = imputer.complete_all(&records)?;
    let model = ses::fit_ses_score_model(&completed)?;
    let scores: Vec<f64> = match settings.ses_score {
        SesScoreKind::PrincipalComponent => completed
            .iter()
            .map(|c| ses::compute_ses_score(&model, c))
            .collect(),
        SesScoreKind::Alternative => completed.iter().map(ses::compute_alt_score).collect(),
    };
    let groups = ses::assign_ses_groups(&records, &scores);

    let mut table = String::from("id\tscore\tgroup\n");
    for (i, r) in records.iter().enumerate() {
        let label = match groups[i] {
            ses::SesGroup::LowSes => "low",
            ses::SesGroup::HighSes => "high",
        };
        table.push_str(&format!("{}\t{:.6}\t{label}\n", r.id, scores[i]));
    }
    write_file(&settings.out, "scores.tsv", &table)?;

    let mut model_table = String::from("component\tloading\tmean\tsd\n");
    for (j, name) in ses::COMPONENT_NAMES.iter().enumerate() {
        model_table.push_str(&format!(
            "{name}\t{:.6}\t{:.6}\t{:.6}\n",
            model.loadings[j], model.component_means[j], model.component_sds[j]
        ));
    }
    model_table.push_str(&format!("variance_explained\t{:.6}\t\t\n", model.variance_explained));
    write_file(&settings.out, "ses_model.tsv", &model_table)?;
    Ok(())
}

fn run_bundle(settings: &Settings) -> Result<pipeline::ReportBundle> {
    pipeline::run(&settings.run_config())
}

fn emit_fit_tables(bundle: &pipeline::ReportBundle, out: &Path) -> Result<()> {
    write_file(out, "enrollment_coefficients.tsv", &bundle.enrollment_table())?;
    write_file(out, "race_screen.tsv", &bundle.race_screen_table())?;
    write_file(out, "outcome_coefficients.tsv", &bundle.outcome_coefficient_table())?;
    write_file(out, "ses_model.tsv", &bundle.ses_model_table())?;
    Ok(())
}

fn emit_simulation_tables(bundle: &pipeline::ReportBundle, out: &Path) -> Result<()> {
    write_file(out, "composition.tsv", &bundle.composition_table())?;
    write_file(out, "composition_delta.tsv", &bundle.composition_delta_table()?)?;
    write_file(out, "outcomes.tsv", &bundle.outcome_table())?;
    write_file(out, "lsat_distributions.tsv", &bundle.distribution_table()?)?;
    Ok(())
}

fn emit_all_tables(bundle: &pipeline::ReportBundle, out: &Path) -> Result<()> {
    emit_fit_tables(bundle, out)?;
    emit_simulation_tables(bundle, out)?;
    write_file(out, "self_check.tsv", &bundle.self_check_table())?;
    write_file(out, "scores.tsv", &bundle.score_table())?;
    write_file(out, "summary.tsv", &bundle.summary())?;
    if let Some(manifest) = &bundle.manifest {
        write_file(out, "manifest.tsv", &manifest.to_delimited())?;
    }
    Ok(())
}

fn dispatch(command: Command, settings: &Settings) -> Result<()> {
    match command {
        Command::Generate => cmd_generate(settings),
        Command::Score => cmd_score(settings),
        Command::Fit => {
            let bundle = run_bundle(settings)?;
            emit_fit_tables(&bundle, &settings.out)
        }
        Command::Simulate => {
            let bundle = run_bundle(settings)?;
            emit_simulation_tables(&bundle, &settings.out)
        }
        Command::Selfcheck => {
            let bundle = run_bundle(settings)?;
            write_file(&settings.out, "self_check.tsv", &bundle.self_check_table())
        }
        Command::Report => {
            let bundle = run_bundle(settings)?;
            emit_all_tables(&bundle, &settings.out)
        }
        Command::All => {
            if settings.input.is_none() {
                cmd_generate(settings)?;
            }
            let bundle = run_bundle(settings)?;
            emit_all_tables(&bundle, &settings.out)
        }
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Fit => 4,
        ErrorClass::Simulation => 5,
        ErrorClass::Io => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let settings = match Settings::resolve(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(exit_code(e.class()));
        }
    };
    match dispatch(cli.command, &settings) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(exit_code(e.class()))
        }
    }
}
