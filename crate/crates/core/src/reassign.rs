//! Counterfactual tier reassignment: transplant the black-student
//! enrollment functions to low-SES students (and white to high-SES),
//! then refill tiers top-down, either under per-tier group quotas or
//! unconstrained.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{Race, StudentRecord};
use crate::enrollment::EnrollmentCascade;
use crate::error::{Error, Result};
use crate::logit;
use crate::sampling::weighted_sample_without_replacement;
use crate::ses::SesGroup;

/// Per-tier black and white counts under the observed (racial AA)
/// assignment; these are the SES AA quotas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuotaTable {
    /// Black counts by tier (index tier-1); low-SES quota under SES AA.
    pub targeted: [usize; 5],
    /// White counts by tier; high-SES quota under SES AA.
    pub other: [usize; 5],
}

impl QuotaTable {
    pub fn tier_total(&self, tier: u8) -> usize {
        self.targeted[(tier - 1) as usize] + self.other[(tier - 1) as usize]
    }

    pub fn targeted_total(&self) -> usize {
        self.targeted.iter().sum()
    }

    pub fn other_total(&self) -> usize {
        self.other.iter().sum()
    }
}

/// Counts black and white students per observed tier.
pub fn compute_quotas(records: &[StudentRecord]) -> QuotaTable {
    let mut targeted = [0usize; 5];
    let mut other = [0usize; 5];
    for r in records {
        let slot = (r.tier - 1) as usize;
        match r.race {
            Race::Black => targeted[slot] += 1,
            _ => other[slot] += 1,
        }
    }
    QuotaTable { targeted, other }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignMode {
    /// Fixed-size weighted sampling per tier, per SES group.
    Quota,
    /// Bernoulli fill of total tier sizes, no group quotas.
    Unconstrained,
    /// Bernoulli fill of the per-group quotas (the narrative variant).
    BernoulliFill,
}

impl AssignMode {
    pub fn token(self) -> &'static str {
        match self {
            AssignMode::Quota => "quota",
            AssignMode::Unconstrained => "unconstrained",
            AssignMode::BernoulliFill => "bernoulli-fill",
        }
    }

    pub fn from_token(s: &str) -> Option<AssignMode> {
        match s {
            "quota" => Some(AssignMode::Quota),
            "unconstrained" => Some(AssignMode::Unconstrained),
            "bernoulli-fill" => Some(AssignMode::BernoulliFill),
            _ => None,
        }
    }
}

/// Counterfactual tiers, aligned with the population record order.
#[derive(Debug, Clone)]
pub struct TierAssignment {
    pub mode: AssignMode,
    pub tiers: Vec<u8>,
    pub warnings: Vec<String>,
}

/// Candidate indices of one SES group, ascending by student id so rng
/// consumption is reproducible.
fn group_candidates(records: &[StudentRecord], groups: &[SesGroup], which: SesGroup) -> Vec<usize> {
    let mut idxs: Vec<usize> = (0..records.len()).filter(|&i| groups[i] == which).collect();
    idxs.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));
    idxs
}

fn tier_draws<R: Rng>(
    cascade: &EnrollmentCascade,
    tier: u8,
    rng: &mut R,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let targeted = logit::draw_posterior(cascade.model(0, tier), rng)?;
    let other = logit::draw_posterior(cascade.model(1, tier), rng)?;
    Ok((targeted, other))
}

fn enrollment_prob(params: &DVector<f64>, r: &StudentRecord) -> f64 {
    logit::predict_prob(params.as_slice(), &[r.lsat as f64, r.ugpa])
}

/// Quota-mode reassignment: per tier, one posterior draw per group
/// model, then a fixed-size weighted sample of each SES group.
pub fn reassign_tiers_quota<R: Rng>(
    records: &[StudentRecord],
    groups: &[SesGroup],
    cascade: &EnrollmentCascade,
    quotas: &QuotaTable,
    rng: &mut R,
) -> Result<TierAssignment> {
    let mut tiers = vec![5u8; records.len()];
    let mut low = group_candidates(records, groups, SesGroup::LowSes);
    let mut high = group_candidates(records, groups, SesGroup::HighSes);

    if quotas.targeted_total() != low.len() || quotas.other_total() != high.len() {
        return Err(Error::Simulation(format!(
            "quota totals ({}, {}) do not match SES group sizes ({}, {})",
            quotas.targeted_total(),
            quotas.other_total(),
            low.len(),
            high.len()
        )));
    }

    for tier in 1..=4u8 {
        let (params_low, params_high) = tier_draws(cascade, tier, rng)?;
        for (pool, params, quota) in [
            (&mut low, &params_low, quotas.targeted[(tier - 1) as usize]),
            (&mut high, &params_high, quotas.other[(tier - 1) as usize]),
        ] {
            if quota > pool.len() {
                return Err(Error::Simulation(format!(
                    "tier {tier} quota {quota} exceeds {} remaining candidates",
                    pool.len()
                )));
            }
            let weights: Vec<f64> = pool.iter().map(|&i| enrollment_prob(params, &records[i])).collect();
            let chosen = weighted_sample_without_replacement(&weights, quota, rng)?;
            let mut mask = vec![false; pool.len()];
            for &c in &chosen {
                tiers[pool[c]] = tier;
                mask[c] = true;
            }
            let mut keep = Vec::with_capacity(pool.len() - quota);
            for (slot, &idx) in pool.iter().enumerate() {
                if !mask[slot] {
                    keep.push(idx);
                }
            }
            *pool = keep;
        }
    }
    // Remaining students stay at tier 5, already initialized.
    Ok(TierAssignment {
        mode: AssignMode::Quota,
        tiers,
        warnings: Vec::new(),
    })
}

/// Repeated Bernoulli passes over `pool` until `needed` acceptances;
/// falls back to descending probability if draws stall.
fn bernoulli_fill<R: Rng>(
    pool: &mut Vec<usize>,
    probs: impl Fn(usize) -> f64,
    needed: usize,
    tier: u8,
    warnings: &mut Vec<String>,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if needed > pool.len() {
        return Err(Error::Simulation(format!(
            "tier {tier} needs {needed} students but only {} remain",
            pool.len()
        )));
    }
    let mut chosen = Vec::with_capacity(needed);
    const MAX_PASSES: usize = 1000;
    let mut passes = 0;
    while chosen.len() < needed && passes < MAX_PASSES {
        passes += 1;
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(rng);
        let mut taken = vec![false; pool.len()];
        for slot in order {
            if chosen.len() == needed {
                break;
            }
            let idx = pool[slot];
            if rng.gen_bool(probs(idx).clamp(0.0, 1.0)) {
                chosen.push(idx);
                taken[slot] = true;
            }
        }
        let mut keep = Vec::with_capacity(pool.len());
        for (slot, &idx) in pool.iter().enumerate() {
            if !taken[slot] {
                keep.push(idx);
            }
        }
        *pool = keep;
    }
    if chosen.len() < needed {
        warnings.push(format!(
            "tier {tier}: bernoulli fill stalled after {passes} passes; \
             filled remainder by descending probability"
        ));
        let mut rest: Vec<usize> = pool.clone();
        rest.sort_by(|&a, &b| probs(b).total_cmp(&probs(a)).then_with(|| a.cmp(&b)));
        let extra = needed - chosen.len();
        let take: Vec<usize> = rest.into_iter().take(extra).collect();
        pool.retain(|i| !take.contains(i));
        chosen.extend(take);
    }
    Ok(chosen)
}

/// Unconstrained reassignment: only total tier sizes are enforced;
/// students are accepted by Bernoulli draws in random order until each
/// tier reaches its observed size.
pub fn reassign_tiers_unconstrained<R: Rng>(
    records: &[StudentRecord],
    groups: &[SesGroup],
    cascade: &EnrollmentCascade,
    quotas: &QuotaTable,
    rng: &mut R,
) -> Result<TierAssignment> {
    let mut tiers = vec![5u8; records.len()];
    let mut warnings = Vec::new();

    // One merged pool ordered by id; each student keeps their
    // SES-group-transplanted enrollment function.
    let mut pool: Vec<usize> = (0..records.len()).collect();
    pool.sort_by(|&a, &b| records[a].id.cmp(&records[b].id));

    for tier in 1..=4u8 {
        let (params_low, params_high) = tier_draws(cascade, tier, rng)?;
        let probs: Vec<f64> = (0..records.len())
            .map(|i| match groups[i] {
                SesGroup::LowSes => enrollment_prob(&params_low, &records[i]),
                SesGroup::HighSes => enrollment_prob(&params_high, &records[i]),
            })
            .collect();
        let needed = quotas.tier_total(tier);
        let chosen = bernoulli_fill(&mut pool, |i| probs[i], needed, tier, &mut warnings, rng)?;
        for idx in chosen {
            tiers[idx] = tier;
        }
    }
    Ok(TierAssignment {
        mode: AssignMode::Unconstrained,
        tiers,
        warnings,
    })
}

/// Quota-constrained variant that fills each group's quota by
/// Bernoulli draws instead of a fixed-size weighted sample.
pub fn reassign_tiers_bernoulli_quota<R: Rng>(
    records: &[StudentRecord],
    groups: &[SesGroup],
    cascade: &EnrollmentCascade,
    quotas: &QuotaTable,
    rng: &mut R,
) -> Result<TierAssignment> {
    let mut tiers = vec![5u8; records.len()];
    let mut warnings = Vec::new();
    let mut low = group_candidates(records, groups, SesGroup::LowSes);
    let mut high = group_candidates(records, groups, SesGroup::HighSes);

    for tier in 1..=4u8 {
        let (params_low, params_high) = tier_draws(cascade, tier, rng)?;
        for (pool, params, quota) in [
            (&mut low, &params_low, quotas.targeted[(tier - 1) as usize]),
            (&mut high, &params_high, quotas.other[(tier - 1) as usize]),
        ] {
            let chosen = bernoulli_fill(
                pool,
                |i| enrollment_prob(params, &records[i]),
                quota,
                tier,
                &mut warnings,
                rng,
            )?;
            for idx in chosen {
                tiers[idx] = tier;
            }
        }
    }
    Ok(TierAssignment {
        mode: AssignMode::BernoulliFill,
        tiers,
        warnings,
    })
}

/// Dispatches on mode.
pub fn reassign_tiers<R: Rng>(
    mode: AssignMode,
    records: &[StudentRecord],
    groups: &[SesGroup],
    cascade: &EnrollmentCascade,
    quotas: &QuotaTable,
    rng: &mut R,
) -> Result<TierAssignment> {
    match mode {
        AssignMode::Quota => reassign_tiers_quota(records, groups, cascade, quotas, rng),
        AssignMode::Unconstrained => reassign_tiers_unconstrained(records, groups, cascade, quotas, rng),
        AssignMode::BernoulliFill => reassign_tiers_bernoulli_quota(records, groups, cascade, quotas, rng),
    }
}
