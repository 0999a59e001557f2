//! Multiple-imputation replication loop, Rubin pooling, and the
//! imputation self-check.
//!
//! Each replication draws fresh posterior parameters, reassigns tiers,
//! imputes outcomes, and records group-level summaries. Replications
//! use independent ChaCha streams off one master seed so the batch is
//! reproducible and order-independent. Pooling treats the per-
//! replication summaries as complete-data statistics with zero
//! within-imputation variance, so the reported variance is the
//! between-imputation component scaled by (1 + 1/m).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{OutcomeClass, Race, StudentRecord};
use crate::enrollment::EnrollmentCascade;
use crate::error::{Error, Result};
use crate::outcomes::{self, OutcomeModelSet};
use crate::reassign::{self, AssignMode, QuotaTable};
use crate::ses::SesGroup;

/// Reporting groups, in the fixed export order.
pub const REPORT_GROUPS: [&str; 4] = ["black", "white", "low_ses", "high_ses"];

fn in_report_group(r: &StudentRecord, ses: SesGroup, g: usize) -> bool {
    match g {
        0 => r.race == Race::Black,
        1 => r.race == Race::White,
        2 => ses == SesGroup::LowSes,
        _ => ses == SesGroup::HighSes,
    }
}

#[derive(Debug, Clone)]
pub struct ReplicationResult {
    pub index: usize,
    pub tiers: Vec<u8>,
    pub outcomes: Vec<OutcomeClass>,
    /// Students per tier, by report group: `[group][tier-1]`.
    pub group_tier_counts: [[f64; 5]; 4],
    /// Outcome-class shares within each report group: `[group][class]`.
    pub group_class_rates: [[f64; 5]; 4],
    pub warnings: Vec<String>,
}

/// Group summaries for one realized (tiers, outcomes) pair.
pub fn summarize_replication(
    records: &[StudentRecord],
    ses_groups: &[SesGroup],
    tiers: &[u8],
    outcomes: &[OutcomeClass],
) -> ([[f64; 5]; 4], [[f64; 5]; 4]) {
    let mut tier_counts = [[0.0; 5]; 4];
    let mut class_counts = [[0.0; 5]; 4];
    let mut group_sizes = [0.0; 4];
    for (i, r) in records.iter().enumerate() {
        for g in 0..4 {
            if in_report_group(r, ses_groups[i], g) {
                tier_counts[g][(tiers[i] - 1) as usize] += 1.0;
                class_counts[g][outcomes[i].index()] += 1.0;
                group_sizes[g] += 1.0;
            }
        }
    }
    let mut class_rates = [[0.0; 5]; 4];
    for g in 0..4 {
        if group_sizes[g] > 0.0 {
            for k in 0..5 {
                class_rates[g][k] = class_counts[g][k] / group_sizes[g];
            }
        }
    }
    (tier_counts, class_rates)
}

/// Everything one replication needs, fitted once up front.
pub struct SimulationInputs<'a> {
    pub records: &'a [StudentRecord],
    pub ses_groups: &'a [SesGroup],
    pub cascade: &'a EnrollmentCascade,
    pub outcome_models: &'a OutcomeModelSet,
    pub quotas: &'a QuotaTable,
    pub mode: AssignMode,
}

fn replication_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

/// Runs `m` independent replications off `master_seed`.
pub fn run_replications(
    inputs: &SimulationInputs,
    m: usize,
    master_seed: u64,
) -> Result<Vec<ReplicationResult>> {
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 replications, got {m}")));
    }
    let mut results = Vec::with_capacity(m);
    for r in 0..m {
        let mut rng = replication_rng(master_seed, r as u64 + 1);
        let assignment = reassign::reassign_tiers(
            inputs.mode,
            inputs.records,
            inputs.ses_groups,
            inputs.cascade,
            inputs.quotas,
            &mut rng,
        )?;
        let outcomes = outcomes::impute_outcomes(
            inputs.outcome_models,
            &assignment.tiers,
            inputs.records,
            inputs.ses_groups,
            &mut rng,
        )?;
        let (group_tier_counts, group_class_rates) =
            summarize_replication(inputs.records, inputs.ses_groups, &assignment.tiers, &outcomes);
        results.push(ReplicationResult {
            index: r,
            tiers: assignment.tiers,
            outcomes,
            group_tier_counts,
            group_class_rates,
            warnings: assignment.warnings,
        });
    }
    Ok(results)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PooledEstimate {
    pub point: f64,
    pub between_var: f64,
    pub within_var: f64,
    pub total_var: f64,
    pub se: f64,
    pub m: usize,
}

/// Rubin's rules over one scalar per replication, with the zero
/// within-variance convention for simulated counts and rates.
pub fn pool(estimates: &[f64]) -> Result<PooledEstimate> {
    let m = estimates.len();
    if m < 2 {
        return Err(Error::Simulation(format!("pooling needs at least 2 estimates, got {m}")));
    }
    let mf = m as f64;
    let point = estimates.iter().sum::<f64>() / mf;
    let between_var =
        estimates.iter().map(|q| (q - point).powi(2)).sum::<f64>() / (mf - 1.0);
    let within_var = 0.0;
    let total_var = within_var + (1.0 + 1.0 / mf) * between_var;
    Ok(PooledEstimate {
        point,
        between_var,
        within_var,
        total_var,
        se: total_var.sqrt(),
        m,
    })
}

/// Pools one statistic extracted from each replication.
pub fn pool_stat<F: Fn(&ReplicationResult) -> f64>(
    results: &[ReplicationResult],
    stat: F,
) -> Result<PooledEstimate> {
    pool(&results.iter().map(stat).collect::<Vec<_>>())
}

#[derive(Debug, Clone)]
pub struct SelfCheckCell {
    pub group: usize,
    pub class: OutcomeClass,
    pub observed: f64,
    pub estimate: PooledEstimate,
    pub flagged: bool,
}

#[derive(Debug, Clone)]
pub struct SelfCheckReport {
    pub cells: Vec<SelfCheckCell>,
    pub n_flagged: usize,
}

/// Re-imputes outcomes under the *observed* tiers and checks that every
/// observed group-by-class rate lies inside its pooled 95% band.
pub fn self_check(
    records: &[StudentRecord],
    ses_groups: &[SesGroup],
    outcome_models: &OutcomeModelSet,
    m: usize,
    master_seed: u64,
) -> Result<SelfCheckReport> {
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 replications, got {m}")));
    }
    let observed_tiers: Vec<u8> = records.iter().map(|r| r.tier).collect();
    let observed_outcomes: Vec<OutcomeClass> = records.iter().map(|r| r.outcome).collect();
    let (_, observed_rates) =
        summarize_replication(records, ses_groups, &observed_tiers, &observed_outcomes);

    let mut imputed_rates: Vec<[[f64; 5]; 4]> = Vec::with_capacity(m);
    for r in 0..m {
        let mut rng = replication_rng(master_seed, r as u64 + 1);
        let imputed = outcomes::impute_outcomes(
            outcome_models,
            &observed_tiers,
            records,
            ses_groups,
            &mut rng,
        )?;
        let (_, rates) = summarize_replication(records, ses_groups, &observed_tiers, &imputed);
        imputed_rates.push(rates);
    }

    let mut cells = Vec::with_capacity(20);
    let mut n_flagged = 0;
    for g in 0..4 {
        for class in OutcomeClass::ALL {
            let k = class.index();
            let estimate = pool(&imputed_rates.iter().map(|r| r[g][k]).collect::<Vec<_>>())?;
            let observed = observed_rates[g][k];
            let flagged = (observed - estimate.point).abs() > 1.96 * estimate.se;
            n_flagged += flagged as usize;
            cells.push(SelfCheckCell {
                group: g,
                class,
                observed,
                estimate,
                flagged,
            });
        }
    }
    Ok(SelfCheckReport { cells, n_flagged })
}
