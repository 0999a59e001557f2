//! End-to-end orchestration: ingest or generate, score SES, fit the
//! enrollment and outcome models, run the replication batch, pool, and
//! render the report tables.
//!
//! All rendered tables are plain delimited text with fixed six-decimal
//! formatting, so a rerun under the same config and seed is
//! byte-identical.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::dataset::{
    self, nearest_rank, FilterLog, OutcomeClass, Race, StudentRecord,
};
use crate::enrollment::{self, EnrollmentCascade, TierScreen};
use crate::error::{Error, Result};
use crate::logit::PriorConfig;
use crate::mi::{
    self, PooledEstimate, ReplicationResult, SelfCheckReport, SimulationInputs, REPORT_GROUPS,
};
use crate::outcomes::{self, OutcomeModelSet, Stage, COEF_NAMES};
use crate::reassign::{self, AssignMode, QuotaTable};
use crate::ses::{self, SesGroup, SesScoreModel};
use crate::synthgen::{self, GeneratorConfig, GeneratorManifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SesScoreKind {
    PrincipalComponent,
    Alternative,
}

impl SesScoreKind {
    pub fn token(self) -> &'static str {
        match self {
            SesScoreKind::PrincipalComponent => "principal-component",
            SesScoreKind::Alternative => "alternative",
        }
    }

    pub fn from_token(s: &str) -> Option<SesScoreKind> {
        match s {
            "principal-component" | "pc" => Some(SesScoreKind::PrincipalComponent),
            "alternative" | "alt" => Some(SesScoreKind::Alternative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum InputSource {
    File(PathBuf),
    Generator(GeneratorConfig),
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: InputSource,
    pub mode: AssignMode,
    pub ses_score: SesScoreKind,
    pub m: usize,
    pub seed: u64,
    pub prior: PriorConfig,
}

impl Default for RunConfig {
    fn default() -> RunConfig {
        RunConfig {
            input: InputSource::Generator(GeneratorConfig::default()),
            mode: AssignMode::Quota,
            ses_score: SesScoreKind::PrincipalComponent,
            m: 40,
            seed: 17,
            prior: PriorConfig::default(),
        }
    }
}

impl RunConfig {
    fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(Error::Config(format!("m must be at least 2, got {}", self.m)));
        }
        Ok(())
    }
}

/// One pooled cell next to its observed-policy value.
#[derive(Debug, Clone, Copy)]
pub struct CellEstimate {
    pub observed: f64,
    pub pooled: PooledEstimate,
}

#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub mode: AssignMode,
    pub ses_score: SesScoreKind,
    pub m: usize,
    pub seed: u64,
    pub provenance: FilterLog,
    pub manifest: Option<GeneratorManifest>,
    pub records: Vec<StudentRecord>,
    pub ses_model: SesScoreModel,
    pub ses_scores: Vec<f64>,
    pub ses_groups: Vec<SesGroup>,
    pub race_cascade: EnrollmentCascade,
    pub ses_cascade: EnrollmentCascade,
    pub race_screens: Vec<TierScreen>,
    pub outcome_models: OutcomeModelSet,
    pub quotas: QuotaTable,
    pub replications: Vec<ReplicationResult>,
    /// `[group][tier-1]` counts: observed vs pooled counterfactual.
    pub composition: [[CellEstimate; 5]; 4],
    /// `[group][class]` outcome rates: observed vs pooled counterfactual.
    pub outcome_rates: [[CellEstimate; 5]; 4],
    pub self_check: SelfCheckReport,
    pub warnings: Vec<String>,
}

/// Executes the full pipeline for one configuration.
pub fn run(config: &RunConfig) -> Result<ReportBundle> {
    config.validate()?;

    let (raw, manifest) = match &config.input {
        InputSource::File(path) => {
            let file = std::fs::File::open(path)?;
            (dataset::parse_dataset_strict(file)?, None)
        }
        InputSource::Generator(gen_cfg) => {
            let (records, manifest) = synthgen::generate_population(gen_cfg)?;
            (records, Some(manifest))
        }
    };
    let population = dataset::filter_analysis_population(raw)?;
    let records = population.records;
    let mut warnings = Vec::new();

    // SES scores and the low/high split.
    let imputer = ses::SesImputer::fit(&records)?;
    let completed = imputer.complete_all(&records)?;
    let ses_model = ses::fit_ses_score_model(&completed)?;
    let ses_scores: Vec<f64> = match config.ses_score {
        SesScoreKind::PrincipalComponent => completed
            .iter()
            .map(|c| ses::compute_ses_score(&ses_model, c))
            .collect(),
        SesScoreKind::Alternative => completed.iter().map(ses::compute_alt_score).collect(),
    };
    let ses_groups = ses::assign_ses_groups(&records, &ses_scores);

    // Model fits.
    let race_cascade = enrollment::fit_enrollment_cascade(&records, &config.prior)?;
    warnings.extend(race_cascade.warnings.iter().cloned());
    let ses_cascade = enrollment::fit_enrollment_cascade_ses(&records, &ses_groups, &config.prior)?;
    warnings.extend(ses_cascade.warnings.iter().cloned());
    let (race_screens, screen_warnings) = enrollment::screen_race_effects(&records, &config.prior)?;
    warnings.extend(screen_warnings);
    let outcome_models = outcomes::fit_outcome_models(&records, &ses_groups, &config.prior)?;
    warnings.extend(outcome_models.warnings.iter().cloned());

    // Counterfactual replications.
    let quotas = reassign::compute_quotas(&records);
    // Reassignment transplants the observed-policy enrollment
    // functions onto the SES groups: low-SES students get the targeted
    // (black) tier models, high-SES students the white ones. The
    // SES-fitted cascade is exported for diagnostics only.
    let inputs = SimulationInputs {
        records: &records,
        ses_groups: &ses_groups,
        cascade: &race_cascade,
        outcome_models: &outcome_models,
        quotas: &quotas,
        mode: config.mode,
    };
    let replications = mi::run_replications(&inputs, config.m, config.seed)?;
    for rep in &replications {
        warnings.extend(rep.warnings.iter().cloned());
    }

    // Observed-policy summaries and pooled counterfactual cells.
    let observed_tiers: Vec<u8> = records.iter().map(|r| r.tier).collect();
    let observed_outcomes: Vec<OutcomeClass> = records.iter().map(|r| r.outcome).collect();
    let (observed_counts, observed_rates) =
        mi::summarize_replication(&records, &ses_groups, &observed_tiers, &observed_outcomes);

    let mut composition = [[CellEstimate {
        observed: 0.0,
        pooled: zero_estimate(config.m),
    }; 5]; 4];
    let mut outcome_rates = composition;
    for g in 0..4 {
        for k in 0..5 {
            composition[g][k] = CellEstimate {
                observed: observed_counts[g][k],
                pooled: mi::pool_stat(&replications, |r| r.group_tier_counts[g][k])?,
            };
            outcome_rates[g][k] = CellEstimate {
                observed: observed_rates[g][k],
                pooled: mi::pool_stat(&replications, |r| r.group_class_rates[g][k])?,
            };
        }
    }

    // Imputation diagnostics on a seed stream disjoint from the
    // counterfactual batch.
    let self_check = mi::self_check(
        &records,
        &ses_groups,
        &outcome_models,
        config.m,
        config.seed ^ 0x5e1f_c4ec,
    )?;

    Ok(ReportBundle {
        mode: config.mode,
        ses_score: config.ses_score,
        m: config.m,
        seed: config.seed,
        provenance: population.provenance,
        manifest,
        records,
        ses_model,
        ses_scores,
        ses_groups,
        race_cascade,
        ses_cascade,
        race_screens,
        outcome_models,
        quotas,
        replications,
        composition,
        outcome_rates,
        self_check,
        warnings,
    })
}

fn zero_estimate(m: usize) -> PooledEstimate {
    PooledEstimate {
        point: 0.0,
        between_var: 0.0,
        within_var: 0.0,
        total_var: 0.0,
        se: 0.0,
        m,
    }
}

// ---------------------------------------------------------------------------
// Table rendering. Everything below is pure formatting over the bundle.
// ---------------------------------------------------------------------------

fn fmt(v: f64) -> String {
    format!("{v:.6}")
}

impl ReportBundle {
    /// Composition table: group x tier counts under both policies.
    pub fn composition_table(&self) -> String {
        let mut out = String::from("group\ttier\tracial_aa\tses_aa\tse\n");
        for (g, label) in REPORT_GROUPS.iter().enumerate() {
            for t in 0..5 {
                let cell = &self.composition[g][t];
                let _ = writeln!(
                    out,
                    "{label}\t{}\t{}\t{}\t{}",
                    t + 1,
                    fmt(cell.observed),
                    fmt(cell.pooled.point),
                    fmt(cell.pooled.se)
                );
            }
        }
        out
    }

    /// Outcome table: group x class rates under both policies.
    pub fn outcome_table(&self) -> String {
        let mut out = String::from("group\toutcome\tracial_aa\tses_aa\tse\n");
        for (g, label) in REPORT_GROUPS.iter().enumerate() {
            for class in OutcomeClass::ALL {
                let cell = &self.outcome_rates[g][class.index()];
                let _ = writeln!(
                    out,
                    "{label}\t{}\t{}\t{}\t{}",
                    class.token(),
                    fmt(cell.observed),
                    fmt(cell.pooled.point),
                    fmt(cell.pooled.se)
                );
            }
        }
        out
    }

    /// Per-cell change in count (SES AA minus racial AA) with pooled
    /// se, plus Tiers-1-3 aggregate rows for black and low-SES.
    pub fn composition_delta_table(&self) -> Result<String> {
        let mut out = String::from("group\ttier\tdelta\tse\n");
        for (g, label) in REPORT_GROUPS.iter().enumerate() {
            for t in 0..5 {
                let cell = &self.composition[g][t];
                let _ = writeln!(
                    out,
                    "{label}\t{}\t{}\t{}",
                    t + 1,
                    fmt(cell.pooled.point - cell.observed),
                    fmt(cell.pooled.se)
                );
            }
        }
        for g in [0usize, 2] {
            let observed: f64 = (0..3).map(|t| self.composition[g][t].observed).sum();
            let pooled = mi::pool_stat(&self.replications, |r| {
                (0..3).map(|t| r.group_tier_counts[g][t]).sum()
            })?;
            let _ = writeln!(
                out,
                "{}\t1-3\t{}\t{}",
                REPORT_GROUPS[g],
                fmt(pooled.point - observed),
                fmt(pooled.se)
            );
        }
        Ok(out)
    }

    /// Pooled LSAT quartiles and deciles per (tier, group, policy).
    pub fn distribution_table(&self) -> Result<String> {
        const QS: [(&str, f64); 11] = [
            ("d10", 0.1),
            ("d20", 0.2),
            ("q25", 0.25),
            ("d30", 0.3),
            ("d40", 0.4),
            ("q50", 0.5),
            ("d60", 0.6),
            ("d70", 0.7),
            ("q75", 0.75),
            ("d80", 0.8),
            ("d90", 0.9),
        ];
        let labels: Vec<&str> = std::iter::once("all").chain(REPORT_GROUPS).collect();
        let membership = |i: usize, g: usize| -> bool {
            if g == 0 {
                return true;
            }
            let r = &self.records[i];
            match g - 1 {
                0 => r.race == Race::Black,
                1 => r.race == Race::White,
                2 => self.ses_groups[i] == SesGroup::LowSes,
                _ => self.ses_groups[i] == SesGroup::HighSes,
            }
        };
        let cell_lsats = |tiers: &[u8], tier: u8, g: usize| -> Vec<i32> {
            let mut v: Vec<i32> = (0..self.records.len())
                .filter(|&i| tiers[i] == tier && membership(i, g))
                .map(|i| self.records[i].lsat)
                .collect();
            v.sort_unstable();
            v
        };

        let observed_tiers: Vec<u8> = self.records.iter().map(|r| r.tier).collect();
        let mut out = String::from("policy\ttier\tgroup\tstat\tvalue\tse\n");
        for tier in 1..=5u8 {
            for (g, label) in labels.iter().enumerate() {
                let obs = cell_lsats(&observed_tiers, tier, g);
                for (stat, q) in QS {
                    let value = if obs.is_empty() { f64::NAN } else { nearest_rank(&obs, q) as f64 };
                    let _ = writeln!(
                        out,
                        "racial_aa\t{tier}\t{label}\t{stat}\t{}\t{}",
                        fmt(value),
                        fmt(0.0)
                    );
                }
                for (stat, q) in QS {
                    let per_rep: Vec<f64> = self
                        .replications
                        .iter()
                        .map(|rep| {
                            let v = cell_lsats(&rep.tiers, tier, g);
                            if v.is_empty() {
                                f64::NAN
                            } else {
                                nearest_rank(&v, q) as f64
                            }
                        })
                        .collect();
                    let (value, se) = if per_rep.iter().any(|v| v.is_nan()) {
                        (f64::NAN, f64::NAN)
                    } else {
                        let p = mi::pool(&per_rep)?;
                        (p.point, p.se)
                    };
                    let _ = writeln!(
                        out,
                        "ses_aa\t{tier}\t{label}\t{stat}\t{}\t{}",
                        fmt(value),
                        fmt(se)
                    );
                }
            }
        }
        Ok(out)
    }

    /// Enrollment coefficient tables for both cascades, by group/tier.
    pub fn enrollment_table(&self) -> String {
        let mut out = String::from("cascade\tgroup\ttier\tterm\testimate\tsd\n");
        for (cascade_label, cascade) in [("race", &self.race_cascade), ("ses", &self.ses_cascade)] {
            let groups = cascade.grouping.labels();
            for (g, group_label) in groups.iter().enumerate() {
                for tier in 1..=4u8 {
                    let model = cascade.model(g, tier);
                    let sd = model.sd();
                    for (j, term) in ["Intercept", "LSAT", "UGPA"].iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "{cascade_label}\t{group_label}\t{tier}\t{term}\t{}\t{}",
                            fmt(model.beta[j]),
                            fmt(sd[j])
                        );
                    }
                }
            }
        }
        out
    }

    /// Race-screen coefficients per tier (white reference level).
    pub fn race_screen_table(&self) -> String {
        let mut out = String::from("tier\tterm\testimate\tsd\n");
        for screen in &self.race_screens {
            for (term, estimate, sd) in &screen.terms {
                let _ = writeln!(out, "{}\t{term}\t{}\t{}", screen.tier, fmt(*estimate), fmt(*sd));
            }
        }
        out
    }

    /// Outcome coefficient tables: stage x tier x term.
    pub fn outcome_coefficient_table(&self) -> String {
        let mut out = String::from("stage\ttier\tterm\testimate\tsd\n");
        for stage in Stage::ALL {
            for tier in 1..=5u8 {
                let model = self.outcome_models.model(stage, tier);
                let sd = model.sd();
                for (j, term) in COEF_NAMES.iter().enumerate() {
                    let _ = writeln!(
                        out,
                        "{}\t{tier}\t{term}\t{}\t{}",
                        stage.label(),
                        fmt(model.beta[j]),
                        fmt(sd[j])
                    );
                }
            }
        }
        out
    }

    /// SES score model: loadings and variance explained.
    pub fn ses_model_table(&self) -> String {
        let mut out = String::from("component\tloading\tmean\tsd\n");
        for (j, name) in ses::COMPONENT_NAMES.iter().enumerate() {
            let _ = writeln!(
                out,
                "{name}\t{}\t{}\t{}",
                fmt(self.ses_model.loadings[j]),
                fmt(self.ses_model.component_means[j]),
                fmt(self.ses_model.component_sds[j])
            );
        }
        let _ = writeln!(out, "variance_explained\t{}\t\t", fmt(self.ses_model.variance_explained));
        out
    }

    /// Per-student SES scores and group labels.
    pub fn score_table(&self) -> String {
        let mut out = String::from("id\tscore\tgroup\n");
        for (i, r) in self.records.iter().enumerate() {
            let group = match self.ses_groups[i] {
                SesGroup::LowSes => "low",
                SesGroup::HighSes => "high",
            };
            let _ = writeln!(out, "{}\t{}\t{group}", r.id, fmt(self.ses_scores[i]));
        }
        out
    }

    /// Self-check table: observed vs re-imputed rates per cell.
    pub fn self_check_table(&self) -> String {
        let mut out = String::from("group\toutcome\tobserved\timputed\tse\tflagged\n");
        for cell in &self.self_check.cells {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                REPORT_GROUPS[cell.group],
                cell.class.token(),
                fmt(cell.observed),
                fmt(cell.estimate.point),
                fmt(cell.estimate.se),
                cell.flagged
            );
        }
        out
    }

    /// Run header: configuration, provenance, warnings.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mode\t{}", self.mode.token());
        let _ = writeln!(out, "ses_score\t{}", self.ses_score.token());
        let _ = writeln!(out, "m\t{}", self.m);
        let _ = writeln!(out, "seed\t{}", self.seed);
        let _ = writeln!(out, "input_rows\t{}", self.provenance.input);
        let _ = writeln!(out, "removed_tier6\t{}", self.provenance.removed_tier6);
        let _ = writeln!(out, "removed_race\t{}", self.provenance.removed_race);
        let _ = writeln!(out, "removed_ses_empty\t{}", self.provenance.removed_ses_empty);
        let _ = writeln!(out, "analyzed\t{}", self.records.len());
        let _ = writeln!(out, "self_check_flags\t{}", self.self_check.n_flagged);
        for w in &self.warnings {
            let _ = writeln!(out, "warning\t{w}");
        }
        out
    }
}
